use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::sampler::Batches;
use crate::losses::{confidence_rows, correct_rows, hinge_d, DiscriminatorBatch, LossConfig, LossError};
use crate::models::ModelSet;
use crate::numerics::softmax_rows;
use crate::soft_label::argmax;
use crate::{one_hot_rows, Scalar};

/// Default confidence threshold of the hard-selection baseline.
pub const DEFAULT_TAU: f64 = 0.5;

fn default_tau() -> f64 {
    DEFAULT_TAU
}

/// How real samples are labeled and weighted in the discriminator step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Confidence weights, corrected labels, assigned soft labels, GCE.
    Ours,
    /// Labeled data only, given labels, unit weights.
    Supervised,
    /// Unlabeled samples get uniformly random one-hot labels.
    RandomGan,
    /// Unlabeled samples get the constant uniform label.
    SingleGan,
    /// Unlabeled samples with `c >= tau` get their argmax label, the rest
    /// are dropped.
    CurriculumGan {
        #[serde(default = "default_tau")]
        tau: f64,
    },
    /// `Ours` with cross entropy instead of GCE.
    Ab1Ce,
    /// `Ours` with every weight set to 1.
    Ab2NoWeights,
    /// `Ours` without label correction.
    Ab3NoCorrection,
}

impl Strategy {
    pub const ALL: [Strategy; 8] = [
        Strategy::Ours,
        Strategy::Supervised,
        Strategy::RandomGan,
        Strategy::SingleGan,
        Strategy::CurriculumGan { tau: DEFAULT_TAU },
        Strategy::Ab1Ce,
        Strategy::Ab2NoWeights,
        Strategy::Ab3NoCorrection,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Ours => "ours",
            Strategy::Supervised => "supervised",
            Strategy::RandomGan => "random_gan",
            Strategy::SingleGan => "single_gan",
            Strategy::CurriculumGan { .. } => "curriculum_gan",
            Strategy::Ab1Ce => "ab1_ce",
            Strategy::Ab2NoWeights => "ab2_no_weights",
            Strategy::Ab3NoCorrection => "ab3_no_correction",
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        match self {
            Strategy::CurriculumGan { tau } if !(0.0..=1.0).contains(tau) => {
                Err(format!("strategy curriculum_gan: tau {tau} not in [0, 1]"))
            }
            _ => Ok(()),
        }
    }

    /// Loss settings actually used; only `Ab1Ce` changes them.
    pub fn loss_config(&self, base: &LossConfig) -> LossConfig {
        match self {
            Strategy::Ab1Ce => LossConfig {
                q_gce: 0.0,
                ..base.clone()
            },
            _ => base.clone(),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::CurriculumGan { tau } if *tau != DEFAULT_TAU => write!(f, "curriculum_gan:{tau}"),
            s => f.write_str(s.name()),
        }
    }
}

impl FromStr for Strategy {
    type Err = String;

    /// Accepts the snake-case names, the short ablation names `ab1`..`ab3`
    /// and `curriculum_gan:<tau>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        let (head, arg) = match lower.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (lower.as_str(), None),
        };
        let strategy = match (head, arg) {
            ("ours", None) => Strategy::Ours,
            ("supervised", None) => Strategy::Supervised,
            ("random_gan", None) => Strategy::RandomGan,
            ("single_gan", None) => Strategy::SingleGan,
            ("curriculum_gan", None) => Strategy::CurriculumGan { tau: DEFAULT_TAU },
            ("curriculum_gan", Some(t)) => Strategy::CurriculumGan {
                tau: t.parse().map_err(|_| format!("bad threshold in strategy {s:?}"))?,
            },
            ("ab1" | "ab1_ce", None) => Strategy::Ab1Ce,
            ("ab2" | "ab2_no_weights", None) => Strategy::Ab2NoWeights,
            ("ab3" | "ab3_no_correction", None) => Strategy::Ab3NoCorrection,
            _ => return Err(format!("unknown strategy {s:?}")),
        };
        strategy.validate()?;
        Ok(strategy)
    }
}

/// Per-instance quantities of one discriminator step.
///
/// `*_pred` and `*_conf` cover every row of the drawn batch. Conditioning
/// labels, weights, scores and hinge contributions of the unlabeled part
/// cover only the rows listed in `unlabeled_kept`.
#[derive(Debug, Clone, PartialEq)]
pub struct CurriculumBatchTerms<T> {
    pub labeled_pred: Array2<T>,
    pub labeled_conf: Array1<T>,
    pub labeled_cond: Array2<T>,
    pub labeled_weight: Array1<T>,
    pub labeled_score: Array1<T>,
    /// `w · max(0, 1 - D)` per instance.
    pub labeled_hinge: Array1<T>,
    pub unlabeled_pred: Array2<T>,
    pub unlabeled_conf: Array1<T>,
    pub unlabeled_cond: Array2<T>,
    pub unlabeled_weight: Array1<T>,
    pub unlabeled_score: Array1<T>,
    pub unlabeled_hinge: Array1<T>,
    pub unlabeled_kept: Vec<usize>,
    pub dropped: usize,
}

impl<T: Scalar> CurriculumBatchTerms<T> {
    /// Discriminator inputs for these terms and the batch they came from.
    pub fn discriminator_batch(&self, batches: &Batches<T>, num_classes: usize) -> DiscriminatorBatch<T> {
        DiscriminatorBatch {
            labeled_x: batches.labeled_x.clone(),
            labeled_given: one_hot_rows(&batches.labeled_y, num_classes),
            labeled_cond: self.labeled_cond.clone(),
            labeled_weight: self.labeled_weight.clone(),
            unlabeled_x: batches.unlabeled_x.select(Axis(0), &self.unlabeled_kept),
            unlabeled_cond: self.unlabeled_cond.clone(),
            unlabeled_weight: self.unlabeled_weight.clone(),
            fake_z: batches.z.clone(),
            fake_y: one_hot_rows(&batches.fake_y, num_classes),
        }
    }

    /// Mean labeled hinge term.
    pub fn labeled_loss(&self) -> T {
        mean_or_zero(&self.labeled_hinge)
    }

    /// Mean unlabeled hinge term over kept rows.
    pub fn unlabeled_loss(&self) -> T {
        mean_or_zero(&self.unlabeled_hinge)
    }
}

fn mean_or_zero<T: Scalar>(a: &Array1<T>) -> T {
    a.mean().unwrap_or_else(T::zero)
}

/// Labels and weights for the real samples of one discriminator step.
/// Classifier outputs are read from the current parameters and treated as
/// constants.
pub fn strategy_terms<T: Scalar, R: Rng + ?Sized>(
    strategy: Strategy,
    batches: &Batches<T>,
    models: &ModelSet<T>,
    rng: &mut R,
) -> Result<CurriculumBatchTerms<T>, LossError> {
    let k = models.num_classes();
    let given: Array2<T> = one_hot_rows(&batches.labeled_y, k);

    let f_l = models.backbone.features(&models.disc, &batches.labeled_x)?;
    let labeled_pred = softmax_rows(&models.cls_head.logits(&models.disc, &f_l)?);
    let labeled_conf = confidence_rows(&labeled_pred);
    let nl = given.nrows();
    let ones_l = Array1::from_elem(nl, T::one());

    let (labeled_cond, labeled_weight) = match strategy {
        Strategy::Ours | Strategy::Ab1Ce => (correct_rows(&given, &labeled_pred), labeled_conf.clone()),
        Strategy::Ab2NoWeights => (correct_rows(&given, &labeled_pred), ones_l),
        Strategy::Ab3NoCorrection => (given.clone(), labeled_conf.clone()),
        Strategy::Supervised | Strategy::RandomGan | Strategy::SingleGan | Strategy::CurriculumGan { .. } => {
            (given.clone(), ones_l)
        }
    };

    let nu_all = if strategy == Strategy::Supervised {
        0
    } else {
        batches.unlabeled_x.nrows()
    };
    let u_x = batches.unlabeled_x.slice(ndarray::s![..nu_all, ..]).to_owned();
    let f_u = models.backbone.features(&models.disc, &u_x)?;
    let unlabeled_pred = softmax_rows(&models.cls_head.logits(&models.disc, &f_u)?);
    let unlabeled_conf = confidence_rows(&unlabeled_pred);
    let all: Vec<usize> = (0..nu_all).collect();
    let ones_u = Array1::from_elem(nu_all, T::one());

    let (kept, unlabeled_cond, unlabeled_weight) = match strategy {
        Strategy::Supervised => (all, Array2::zeros((0, k)), ones_u),
        Strategy::Ours | Strategy::Ab1Ce | Strategy::Ab3NoCorrection => {
            (all, unlabeled_pred.clone(), unlabeled_conf.clone())
        }
        Strategy::Ab2NoWeights => (all, unlabeled_pred.clone(), ones_u),
        Strategy::RandomGan => {
            let labels: Vec<usize> = (0..nu_all).map(|_| rng.random_range(0..k)).collect();
            (all, one_hot_rows(&labels, k), ones_u)
        }
        Strategy::SingleGan => (all, Array2::from_elem((nu_all, k), T::one() / T::lit(k as f64)), ones_u),
        Strategy::CurriculumGan { tau } => {
            let tau = T::lit(tau);
            let kept: Vec<usize> = (0..nu_all).filter(|&i| unlabeled_conf[i] >= tau).collect();
            let hard: Vec<usize> = kept
                .iter()
                .map(|&i| argmax(unlabeled_pred.row(i).iter().copied()))
                .collect();
            let n = kept.len();
            (kept, one_hot_rows(&hard, k), Array1::from_elem(n, T::one()))
        }
    };
    let dropped = nu_all - kept.len();

    let labeled_score = models.adv_head.forward(&models.disc, &f_l, &labeled_cond)?;
    let f_kept = f_u.select(Axis(0), &kept);
    let unlabeled_score = models.adv_head.forward(&models.disc, &f_kept, &unlabeled_cond)?;
    let hinge =
        |s: &Array1<T>, w: &Array1<T>| -> Array1<T> { s.iter().zip(w).map(|(&s, &w)| w * hinge_d(-s)).collect() };

    Ok(CurriculumBatchTerms {
        labeled_hinge: hinge(&labeled_score, &labeled_weight),
        unlabeled_hinge: hinge(&unlabeled_score, &unlabeled_weight),
        labeled_pred,
        labeled_conf,
        labeled_cond,
        labeled_weight,
        labeled_score,
        unlabeled_pred,
        unlabeled_conf,
        unlabeled_cond,
        unlabeled_weight,
        unlabeled_score,
        unlabeled_kept: kept,
        dropped,
    })
}
