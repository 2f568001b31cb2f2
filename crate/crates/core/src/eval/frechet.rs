use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, Axis};

use super::{EvalError, FeatureSet};
use crate::Scalar;

/// Eigenvalues below `-EIGEN_CLAMP` are reported when clamped to zero.
pub const EIGEN_CLAMP: f64 = 1e-10;
/// Diagonal ridge added to singular covariances.
pub const RIDGE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct FrechetResult {
    pub distance: f64,
    pub warnings: Vec<String>,
}

/// Sample mean and unbiased covariance of the rows.
pub fn mean_and_covariance(x: &Array2<f64>) -> (Array1<f64>, Array2<f64>) {
    let n = x.nrows();
    let mean = x.mean_axis(Axis(0)).unwrap_or_else(|| Array1::zeros(x.ncols()));
    let c = x - &mean;
    let cov = c.t().dot(&c) / ((n.max(2) - 1) as f64);
    (mean, cov)
}

/// Eigenvalues (ascending) and eigenvectors (columns) of a symmetric matrix.
pub fn sym_eigen(a: &Array2<f64>) -> (Array1<f64>, Array2<f64>) {
    let n = a.nrows();
    let m = DMatrix::from_fn(n, n, |i, j| 0.5 * (a[[i, j]] + a[[j, i]]));
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = Array2::from_shape_fn((n, n), |(r, c)| eig.eigenvectors[(r, order[c])]);
    (vals, vecs)
}

fn sqrt_psd(a: &Array2<f64>, what: &str, warnings: &mut Vec<String>) -> (Array2<f64>, f64) {
    let (vals, vecs) = sym_eigen(a);
    if let Some(&min) = vals.iter().find(|&&v| v < -EIGEN_CLAMP) {
        warnings.push(format!("{what}: clamped negative eigenvalue {min:.3e} to 0"));
    }
    let roots = vals.mapv(|v| v.max(0.0).sqrt());
    let scaled = &vecs * &roots;
    (scaled.dot(&vecs.t()), roots.sum())
}

fn is_singular(cov: &Array2<f64>) -> bool {
    let (vals, _) = sym_eigen(cov);
    let scale = vals.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    vals.iter().any(|&v| v <= EIGEN_CLAMP * scale)
}

/// `‖μa − μb‖² + Tr(Σa + Σb − 2 (Σa Σb)^{1/2})`, with the trace of the root
/// taken from the symmetric product `Σa^{1/2} Σb Σa^{1/2}`.
pub fn frechet_from_moments(
    mu_a: &Array1<f64>,
    cov_a: &Array2<f64>,
    mu_b: &Array1<f64>,
    cov_b: &Array2<f64>,
) -> FrechetResult {
    let mut warnings = Vec::new();
    let mut ca = cov_a.clone();
    let mut cb = cov_b.clone();
    if is_singular(&ca) || is_singular(&cb) {
        let eye = Array2::<f64>::eye(ca.nrows()) * RIDGE;
        ca += &eye;
        cb += &eye;
        warnings.push(format!("singular covariance: added {RIDGE:e} ridge to both"));
    }
    let (ra, _) = sqrt_psd(&ca, "covariance square root", &mut warnings);
    let m = ra.dot(&cb).dot(&ra);
    let (_, tr_sqrt) = sqrt_psd(&m, "product square root", &mut warnings);
    let d = mu_a - mu_b;
    let dist = d.dot(&d) + ca.diag().sum() + cb.diag().sum() - 2.0 * tr_sqrt;
    FrechetResult {
        distance: dist.max(0.0),
        warnings,
    }
}

fn check_size<T>(s: &FeatureSet<T>, what: &str) -> Result<(), EvalError> {
    let need = s.x.ncols() + 1;
    if s.x.nrows() < need {
        return Err(EvalError::TooFewSamples {
            what: what.into(),
            need,
            got: s.x.nrows(),
        });
    }
    Ok(())
}

/// Fréchet distance between Gaussian fits of two feature sets.
pub fn frechet_distance<T: Scalar>(a: &FeatureSet<T>, b: &FeatureSet<T>) -> Result<FrechetResult, EvalError> {
    if a.dim() != b.dim() {
        return Err(EvalError::Shape(format!("dimension {} vs {}", a.dim(), b.dim())));
    }
    check_size(a, "first feature set")?;
    check_size(b, "second feature set")?;
    let (ma, ca) = mean_and_covariance(&a.to_f64());
    let (mb, cb) = mean_and_covariance(&b.to_f64());
    Ok(frechet_from_moments(&ma, &ca, &mb, &cb))
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntraFrechet {
    /// Mean over the classes that could be evaluated.
    pub mean: Option<f64>,
    pub per_class: Vec<Option<f64>>,
    pub skipped: Vec<usize>,
    pub warnings: Vec<String>,
}

/// Per-class Fréchet distances over classes `0..num_classes`, averaged.
/// Classes with fewer than `d + 1` samples on either side are skipped and
/// listed.
pub fn intra_frechet<T: Scalar>(
    real: &FeatureSet<T>,
    gen: &FeatureSet<T>,
    num_classes: usize,
) -> Result<IntraFrechet, EvalError> {
    if real.labels.is_none() || gen.labels.is_none() {
        return Err(EvalError::Shape(
            "intra-class distance needs labels on both sets".into(),
        ));
    }
    let mut per_class = Vec::with_capacity(num_classes);
    let mut skipped = Vec::new();
    let mut warnings = Vec::new();
    for k in 0..num_classes {
        let r = real.class_subset(k).expect("labels checked");
        let g = gen.class_subset(k).expect("labels checked");
        match frechet_distance(&r, &g) {
            Ok(res) => {
                warnings.extend(res.warnings.into_iter().map(|w| format!("class {k}: {w}")));
                per_class.push(Some(res.distance));
            }
            Err(EvalError::TooFewSamples { .. }) => {
                skipped.push(k);
                per_class.push(None);
            }
            Err(e) => return Err(e),
        }
    }
    if !skipped.is_empty() {
        warnings.push(format!(
            "intra-class distance skipped classes {skipped:?} (too few samples)"
        ));
    }
    let vals: Vec<f64> = per_class.iter().flatten().copied().collect();
    let mean = (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64);
    Ok(IntraFrechet {
        mean,
        per_class,
        skipped,
        warnings,
    })
}
