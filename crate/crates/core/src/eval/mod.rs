//! Desk-scale generation metrics in raw data coordinates, plus curriculum
//! diagnostics that read the corpus provenance.

mod diagnostics;
mod evaluator;
mod frechet;
mod oracle;
mod prd;

pub use diagnostics::{curriculum_diagnostics, diagnostics_from_probs, roc_auc, Diagnostics};
pub use evaluator::{EvalConfig, Evaluator};
pub use frechet::{
    frechet_distance, frechet_from_moments, intra_frechet, mean_and_covariance, sym_eigen, FrechetResult, IntraFrechet,
    EIGEN_CLAMP, RIDGE,
};
pub use oracle::{inception_score, is_analogue, GaussianOracle};
pub use prd::{f_beta, kmeans, max_f_beta_pair, prd_curve, prd_f_scores, KMeans, PrdConfig, PrdCurve};

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("{what}: need at least {need} samples, got {got}")]
    TooFewSamples { what: String, need: usize, got: usize },
    #[error("{0} contains non-finite values")]
    NonFinite(String),
    #[error("{0}")]
    Shape(String),
    #[error("{0}")]
    Config(String),
}

/// Feature vectors, one per row, with optional class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet<T> {
    pub x: Array2<T>,
    pub labels: Option<Vec<usize>>,
}

impl<T: Scalar> FeatureSet<T> {
    pub fn new(x: Array2<T>) -> Result<Self, EvalError> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(EvalError::NonFinite("feature set".into()));
        }
        Ok(Self { x, labels: None })
    }

    pub fn with_labels(x: Array2<T>, labels: Vec<usize>) -> Result<Self, EvalError> {
        if labels.len() != x.nrows() {
            return Err(EvalError::Shape(format!(
                "{} labels for {} rows",
                labels.len(),
                x.nrows()
            )));
        }
        let mut s = Self::new(x)?;
        s.labels = Some(labels);
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn to_f64(&self) -> Array2<f64> {
        self.x.mapv(|v| v.to_f64_lossy())
    }

    /// Rows labeled `class`, unlabeled result.
    pub fn class_subset(&self, class: usize) -> Option<FeatureSet<T>> {
        let labels = self.labels.as_ref()?;
        let idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        Some(FeatureSet {
            x: self.x.select(Axis(0), &idx),
            labels: None,
        })
    }
}

/// One evaluation row. Metrics that are undefined at a step (too few
/// samples, no open-set data, no flipped labels) are `None`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsReport {
    pub step: u64,
    pub fid: Option<f64>,
    pub ifid: Option<f64>,
    pub f8: Option<f64>,
    pub f_eighth: Option<f64>,
    pub is_analogue: Option<f64>,
    pub cls_accuracy: Option<f64>,
    pub correction_accuracy: Option<f64>,
    pub confidence_auc: Option<f64>,
    /// Share of flipped labeled samples whose prediction argmax is the true
    /// class.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flipped_recovery: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_loss: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_loss: Option<f64>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl MetricsReport {
    pub fn empty(step: u64) -> Self {
        Self {
            step,
            ..Self::default()
        }
    }

    /// Value of a metric by its column name.
    pub fn metric(&self, name: &str) -> Option<f64> {
        match name {
            "fid" => self.fid,
            "ifid" => self.ifid,
            "f8" => self.f8,
            "f_eighth" => self.f_eighth,
            "is_analogue" => self.is_analogue,
            "cls_accuracy" => self.cls_accuracy,
            "correction_accuracy" => self.correction_accuracy,
            "confidence_auc" => self.confidence_auc,
            "flipped_recovery" => self.flipped_recovery,
            _ => None,
        }
    }

    pub const COLUMNS: [&'static str; 8] = [
        "fid",
        "ifid",
        "f8",
        "f_eighth",
        "is_analogue",
        "cls_accuracy",
        "correction_accuracy",
        "confidence_auc",
    ];
}
