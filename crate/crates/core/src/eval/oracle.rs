use nalgebra::DMatrix;
use ndarray::{Array1, Array2, Axis};

use super::{mean_and_covariance, EvalError, FeatureSet};
use crate::Scalar;

/// Gaussian classifier with class means and a pooled covariance, fitted on
/// clean closed-set data. Stands in for the pretrained network of the
/// image-scale score.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianOracle {
    pub means: Array2<f64>,
    pub precision: Array2<f64>,
    pub log_priors: Array1<f64>,
}

impl GaussianOracle {
    pub fn fit<T: Scalar>(data: &FeatureSet<T>, num_classes: usize) -> Result<Self, EvalError> {
        let labels = data
            .labels
            .as_ref()
            .ok_or_else(|| EvalError::Shape("oracle needs labeled data".into()))?;
        let x = data.to_f64();
        let d = x.ncols();
        let n = x.nrows();
        let mut means = Array2::zeros((num_classes, d));
        let mut pooled = Array2::<f64>::zeros((d, d));
        let mut counts = vec![0usize; num_classes];
        for k in 0..num_classes {
            let idx: Vec<usize> = (0..n).filter(|&i| labels[i] == k).collect();
            if idx.len() < 2 {
                return Err(EvalError::TooFewSamples {
                    what: format!("oracle class {k}"),
                    need: 2,
                    got: idx.len(),
                });
            }
            let xs = x.select(Axis(0), &idx);
            let (m, c) = mean_and_covariance(&xs);
            means.row_mut(k).assign(&m);
            pooled = pooled + c * (idx.len() - 1) as f64;
            counts[k] = idx.len();
        }
        let used: usize = counts.iter().sum();
        pooled /= (used - num_classes) as f64;
        let inv = DMatrix::from_fn(d, d, |i, j| pooled[[i, j]])
            .try_inverse()
            .ok_or_else(|| EvalError::Config("oracle covariance is singular".into()))?;
        Ok(Self {
            means,
            precision: Array2::from_shape_fn((d, d), |(i, j)| inv[(i, j)]),
            log_priors: counts.iter().map(|&c| (c as f64 / used as f64).ln()).collect(),
        })
    }

    pub fn num_classes(&self) -> usize {
        self.means.nrows()
    }

    /// Posterior class probabilities, one row per sample.
    pub fn predict_proba(&self, x: &Array2<f64>) -> Array2<f64> {
        let k = self.num_classes();
        let mut out = Array2::zeros((x.nrows(), k));
        for (i, row) in x.rows().into_iter().enumerate() {
            let logits: Vec<f64> = (0..k)
                .map(|c| {
                    let diff = &row - &self.means.row(c);
                    self.log_priors[c] - 0.5 * diff.dot(&self.precision.dot(&diff))
                })
                .collect();
            let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
            let s: f64 = e.iter().sum();
            for c in 0..k {
                out[[i, c]] = e[c] / s;
            }
        }
        out
    }
}

/// `exp(mean_x KL(p(y|x) ‖ p(y)))` with `p(y)` the mean of the rows.
pub fn inception_score(probs: &Array2<f64>) -> f64 {
    let n = probs.nrows();
    if n == 0 {
        return 1.0;
    }
    let marginal = probs.mean_axis(Axis(0)).expect("non-empty");
    let mut kl = 0.0;
    for row in probs.rows() {
        for (&p, &m) in row.iter().zip(marginal.iter()) {
            if p > 0.0 {
                kl += p * (p.ln() - m.ln());
            }
        }
    }
    (kl / n as f64).exp()
}

/// Score of generated samples under the oracle; lies in `[1, K]`.
pub fn is_analogue<T: Scalar>(gen: &FeatureSet<T>, oracle: &GaussianOracle) -> f64 {
    let s = inception_score(&oracle.predict_proba(&gen.to_f64()));
    s.clamp(1.0, oracle.num_classes() as f64)
}
