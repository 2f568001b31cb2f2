use ndarray::Array2;

use crate::Scalar;

/// Handle to a parameter block inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

/// One named parameter block together with its gradient accumulator and
/// Adam moment buffers. All four arrays share a shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub value: Array2<T>,
    pub grad: Array2<T>,
    pub m: Array2<T>,
    pub v: Array2<T>,
}

impl<T: Scalar> Param<T> {
    fn new(name: String, value: Array2<T>) -> Self {
        let dim = value.raw_dim();
        Self {
            name,
            value,
            grad: Array2::zeros(dim),
            m: Array2::zeros(dim),
            v: Array2::zeros(dim),
        }
    }
}

/// Ordered collection of parameter blocks optimised together.
///
/// A frozen store still serves values to forward passes but backward passes
/// do not accumulate into its gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<T> {
    params: Vec<Param<T>>,
    /// Number of optimizer steps taken.
    pub step: u64,
    frozen: bool,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            params: Vec::new(),
            step: 0,
            frozen: false,
        }
    }

    /// Registers a new block. Names must be unique.
    pub fn add(&mut self, name: impl Into<String>, value: Array2<T>) -> ParamId {
        let name = name.into();
        assert!(
            self.params.iter().all(|p| p.name != name),
            "duplicate parameter name {name}"
        );
        self.params.push(Param::new(name, value));
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn value(&self, id: ParamId) -> &Array2<T> {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Array2<T> {
        &mut self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Array2<T> {
        &self.params[id.0].grad
    }

    pub fn param(&self, id: ParamId) -> &Param<T> {
        &self.params[id.0]
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<T>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param<T>> {
        self.params.iter_mut()
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn set_frozen(&mut self, frozen: bool) {
        self.frozen = frozen;
    }

    /// Adds `delta` into the gradient of `id` unless the store is frozen.
    pub fn accumulate(&mut self, id: ParamId, delta: &Array2<T>) {
        if !self.frozen {
            self.params[id.0].grad += delta;
        }
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.fill(T::zero());
        }
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// True when every value, gradient and moment is finite.
    pub fn all_finite(&self) -> bool {
        self.params
            .iter()
            .all(|p| p.value.iter().all(|x| x.is_finite()) && p.grad.iter().all(|x| x.is_finite()))
    }

    pub(crate) fn from_params(params: Vec<Param<T>>, step: u64) -> Self {
        Self {
            params,
            step,
            frozen: false,
        }
    }
}
