use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{
    curriculum_diagnostics, frechet_distance, intra_frechet, is_analogue, prd_f_scores, EvalError, FeatureSet,
    GaussianOracle, MetricsReport, PrdConfig,
};
use crate::corpus::Corpus;
use crate::models::ModelSet;
use crate::trainer::EvalHook;
use crate::{one_hot_rows, Scalar};

const EVAL_STREAM: u64 = 0x6576616c;
const REFERENCE_OFFSET: u64 = 0x5245_4645_5245_4e43;
const ORACLE_OFFSET: u64 = 0x4f52_4143_4c45;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Generated samples per evaluation, classes in round-robin order.
    pub num_generated: usize,
    /// Held-out clean samples per closed class used as the reference.
    pub reference_per_class: usize,
    /// Clean samples per closed class used to fit the oracle classifier.
    pub oracle_per_class: usize,
    pub prd: PrdConfig,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            num_generated: 10_000,
            reference_per_class: 1000,
            oracle_per_class: 1000,
            prd: PrdConfig::default(),
            seed: 0,
        }
    }
}

/// Computes every metric of a [`MetricsReport`] for a model snapshot.
/// Holds the corpus with its provenance, a held-out clean reference split
/// of the closed classes and the oracle classifier; the same latent draws
/// are used at every step.
#[derive(Debug, Clone)]
pub struct Evaluator {
    corpus: Corpus,
    reference: FeatureSet<f64>,
    oracle: GaussianOracle,
    cfg: EvalConfig,
}

impl Evaluator {
    pub fn new(corpus: &Corpus, cfg: EvalConfig) -> Result<Self, EvalError> {
        let mixture = corpus
            .mixture
            .as_ref()
            .ok_or_else(|| EvalError::Config("corpus carries no mixture description".into()))?;
        let k = corpus.num_classes();
        let draw = |per_class: usize, offset: u64| -> Result<FeatureSet<f64>, EvalError> {
            let clean = mixture
                .sample(per_class, cfg.seed.wrapping_add(offset))
                .map_err(|e| EvalError::Config(e.to_string()))?;
            let (x, labels) = clean.restrict_to_classes(k);
            FeatureSet::with_labels(x, labels)
        };
        let reference = draw(cfg.reference_per_class, REFERENCE_OFFSET)?;
        let oracle = GaussianOracle::fit(&draw(cfg.oracle_per_class, ORACLE_OFFSET)?, k)?;
        Ok(Self::from_parts(corpus.clone(), reference, oracle, cfg))
    }

    pub fn from_parts(corpus: Corpus, reference: FeatureSet<f64>, oracle: GaussianOracle, cfg: EvalConfig) -> Self {
        Self {
            corpus,
            reference,
            oracle,
            cfg,
        }
    }

    pub fn reference(&self) -> &FeatureSet<f64> {
        &self.reference
    }

    pub fn oracle(&self) -> &GaussianOracle {
        &self.oracle
    }

    /// Generated samples labeled with their conditioning class.
    pub fn generate<T: Scalar>(&self, models: &ModelSet<T>) -> Result<FeatureSet<f64>, String> {
        let k = self.corpus.num_classes();
        let n = self.cfg.num_generated;
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(EVAL_STREAM);
        let z = Array2::from_shape_simple_fn((n, models.arch.latent_dim), || {
            T::lit(rng.sample::<f64, _>(StandardNormal))
        });
        let labels: Vec<usize> = (0..n).map(|i| i % k).collect();
        let x = models
            .generate(&z, &one_hot_rows(&labels, k))
            .map_err(|e| e.to_string())?;
        FeatureSet::with_labels(x.mapv(|v| v.to_f64_lossy()), labels).map_err(|e| format!("generated samples: {e}"))
    }

    pub fn report<T: Scalar>(&self, step: u64, models: &ModelSet<T>) -> Result<MetricsReport, String> {
        let gen = self.generate(models)?;
        let mut r = MetricsReport::empty(step);
        let unlabeled = |s: &FeatureSet<f64>| FeatureSet {
            x: s.x.clone(),
            labels: None,
        };
        match frechet_distance(&unlabeled(&self.reference), &unlabeled(&gen)) {
            Ok(f) => {
                r.fid = Some(f.distance);
                r.warnings.extend(f.warnings.into_iter().map(|w| format!("fid: {w}")));
            }
            Err(e) => r.warnings.push(format!("fid: {e}")),
        }
        match intra_frechet(&self.reference, &gen, self.corpus.num_classes()) {
            Ok(f) => {
                r.ifid = f.mean;
                r.warnings.extend(f.warnings.into_iter().map(|w| format!("ifid: {w}")));
            }
            Err(e) => r.warnings.push(format!("ifid: {e}")),
        }
        match prd_f_scores(&self.reference, &gen, &self.cfg.prd) {
            Ok((f8, fe)) => {
                r.f8 = Some(f8);
                r.f_eighth = Some(fe);
            }
            Err(e) => r.warnings.push(format!("prd: {e}")),
        }
        r.is_analogue = Some(is_analogue(&gen, &self.oracle));
        let d = curriculum_diagnostics(models, &self.corpus).map_err(|e| e.to_string())?;
        r.cls_accuracy = d.cls_accuracy;
        r.correction_accuracy = d.correction_accuracy;
        r.confidence_auc = d.confidence_auc;
        r.flipped_recovery = d.flipped_recovery;
        Ok(r)
    }
}

impl<T: Scalar> EvalHook<T> for Evaluator {
    fn evaluate(&mut self, step: u64, models: &ModelSet<T>) -> Result<MetricsReport, String> {
        self.report(step, models)
    }
}
