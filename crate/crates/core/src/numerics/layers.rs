use ndarray::{Array1, Array2, Axis, Zip};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{ParamId, ParamStore, ShapeError};
use crate::Scalar;

/// Weight initialisation scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// Semi-orthogonal matrix scaled by a gain.
    Orthogonal {
        gain: f64,
    },
    Zeros,
}

fn orthogonal<T: Scalar, R: Rng + ?Sized>(rows: usize, cols: usize, gain: f64, rng: &mut R) -> Array2<T> {
    // Modified Gram-Schmidt on the longer side, then transpose if needed.
    let (n, m) = if rows >= cols { (rows, cols) } else { (cols, rows) };
    let mut q = Array2::<f64>::zeros((n, m));
    for v in q.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
    for j in 0..m {
        for k in 0..j {
            let proj = q.column(j).dot(&q.column(k));
            let col_k = q.column(k).to_owned();
            q.column_mut(j).scaled_add(-proj, &col_k);
        }
        let norm = q.column(j).dot(&q.column(j)).sqrt();
        q.column_mut(j).mapv_inplace(|x| x / norm);
    }
    let q = if rows >= cols { q } else { q.reversed_axes() };
    q.mapv(|x| T::lit(x * gain))
}

/// Affine map `y = x W + b` applied to a batch of row vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        init: Init,
        bias: bool,
        rng: &mut R,
    ) -> Self {
        let w = match init {
            Init::Orthogonal { gain } => orthogonal(in_dim, out_dim, gain, rng),
            Init::Zeros => Array2::zeros((in_dim, out_dim)),
        };
        let weight = store.add(format!("{name}.weight"), w);
        let bias = bias.then(|| store.add(format!("{name}.bias"), Array2::zeros((1, out_dim))));
        Self {
            weight,
            bias,
            in_dim,
            out_dim,
        }
    }

    fn check_input<T>(&self, op: &'static str, x: &Array2<T>) -> Result<(), ShapeError> {
        if x.ncols() != self.in_dim {
            return Err(ShapeError::mismatch(op, (x.nrows(), self.in_dim), x.dim()));
        }
        Ok(())
    }

    pub fn forward<T: Scalar>(&self, store: &ParamStore<T>, x: &Array2<T>) -> Result<Array2<T>, ShapeError> {
        self.check_input("linear forward", x)?;
        let mut y = x.dot(store.value(self.weight));
        if let Some(b) = self.bias {
            y += store.value(b);
        }
        Ok(y)
    }

    /// Accumulates `dW = xᵀ g`, `db = Σ g` and returns `g Wᵀ`.
    pub fn backward<T: Scalar>(
        &self,
        store: &mut ParamStore<T>,
        x: &Array2<T>,
        grad_out: &Array2<T>,
    ) -> Result<Array2<T>, ShapeError> {
        self.check_input("linear backward", x)?;
        if grad_out.dim() != (x.nrows(), self.out_dim) {
            return Err(ShapeError::mismatch(
                "linear backward",
                (x.nrows(), self.out_dim),
                grad_out.dim(),
            ));
        }
        if !store.is_frozen() {
            let dw = x.t().dot(grad_out);
            store.accumulate(self.weight, &dw);
            if let Some(b) = self.bias {
                let db = grad_out.sum_axis(Axis(0)).insert_axis(Axis(0));
                store.accumulate(b, &db);
            }
        }
        Ok(grad_out.dot(&store.value(self.weight).t()))
    }
}

/// Pointwise nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Activation {
    Identity,
    Relu,
    LeakyRelu(f64),
}

impl Activation {
    pub fn forward<T: Scalar>(&self, pre: &Array2<T>) -> Array2<T> {
        match *self {
            Activation::Identity => pre.clone(),
            Activation::Relu => pre.mapv(|x| if x > T::zero() { x } else { T::zero() }),
            Activation::LeakyRelu(slope) => {
                let s = T::lit(slope);
                pre.mapv(|x| if x > T::zero() { x } else { s * x })
            }
        }
    }

    /// Multiplies the upstream gradient by the derivative at `pre`; the
    /// derivative at exactly zero is taken from the negative side.
    pub fn backward<T: Scalar>(&self, pre: &Array2<T>, grad_out: &Array2<T>) -> Array2<T> {
        match *self {
            Activation::Identity => grad_out.clone(),
            Activation::Relu => {
                let mut g = grad_out.clone();
                Zip::from(&mut g).and(pre).for_each(|g, &p| {
                    if p <= T::zero() {
                        *g = T::zero();
                    }
                });
                g
            }
            Activation::LeakyRelu(slope) => {
                let s = T::lit(slope);
                let mut g = grad_out.clone();
                Zip::from(&mut g).and(pre).for_each(|g, &p| {
                    if p <= T::zero() {
                        *g *= s;
                    }
                });
                g
            }
        }
    }
}

/// Stack of linear layers, each followed by its activation.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<(Linear, Activation)>,
}

/// Activations remembered by [`Mlp::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct MlpTrace<T> {
    inputs: Vec<Array2<T>>,
    pre: Vec<Array2<T>>,
}

impl Mlp {
    /// Builds `dims[0] -> dims[1] -> ... -> dims[n]`, hidden activations
    /// `hidden` and output activation `output`. Hidden layers use orthogonal
    /// init; the output layer uses `output_init`.
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        dims: &[usize],
        hidden: Activation,
        output: Activation,
        output_init: Init,
        rng: &mut R,
    ) -> Self {
        assert!(dims.len() >= 2, "an MLP needs at least an input and output width");
        let n = dims.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let last = i + 1 == n;
                let init = if last {
                    output_init
                } else {
                    Init::Orthogonal { gain: 1.0 }
                };
                let lin = Linear::new(store, &format!("{name}.{i}"), dims[i], dims[i + 1], init, true, rng);
                (lin, if last { output } else { hidden })
            })
            .collect();
        Self { layers }
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].0.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].0.out_dim
    }

    pub fn forward<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        x: &Array2<T>,
    ) -> Result<(Array2<T>, MlpTrace<T>), ShapeError> {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for (lin, act) in &self.layers {
            let z = lin.forward(store, &h)?;
            let out = act.forward(&z);
            inputs.push(h);
            pre.push(z);
            h = out;
        }
        Ok((h, MlpTrace { inputs, pre }))
    }

    /// Output only, no trace.
    pub fn apply<T: Scalar>(&self, store: &ParamStore<T>, x: &Array2<T>) -> Result<Array2<T>, ShapeError> {
        let mut h = x.clone();
        for (lin, act) in &self.layers {
            h = act.forward(&lin.forward(store, &h)?);
        }
        Ok(h)
    }

    pub fn backward<T: Scalar>(
        &self,
        store: &mut ParamStore<T>,
        trace: &MlpTrace<T>,
        grad_out: &Array2<T>,
    ) -> Result<Array2<T>, ShapeError> {
        let mut g = grad_out.clone();
        for (i, (lin, act)) in self.layers.iter().enumerate().rev() {
            if g.dim() != trace.pre[i].dim() {
                return Err(ShapeError::mismatch("mlp backward", trace.pre[i].dim(), g.dim()));
            }
            let gz = act.backward(&trace.pre[i], &g);
            g = lin.backward(store, &trace.inputs[i], &gz)?;
        }
        Ok(g)
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows<T: Scalar>(logits: &Array2<T>) -> Array2<T> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
        row.mapv_inplace(|x| (x - max).exp());
        let sum: T = row.iter().copied().sum();
        row.mapv_inplace(|x| x / sum);
    }
    out
}

/// Vector-Jacobian product of the row-wise softmax: `p ⊙ (g - <g, p>)`.
pub fn softmax_backward<T: Scalar>(probs: &Array2<T>, grad_out: &Array2<T>) -> Array2<T> {
    let dots: Array1<T> = (probs * grad_out).sum_axis(Axis(1));
    let mut g = grad_out.clone();
    for (mut row, &d) in g.rows_mut().into_iter().zip(dots.iter()) {
        row.mapv_inplace(|x| x - d);
    }
    g * probs
}
