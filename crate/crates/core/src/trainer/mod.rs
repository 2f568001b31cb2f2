//! Alternating optimisation: `d_steps_per_g_step` discriminator+classifier
//! updates on the combined objective, then one generator update.
//!
//! The trainer only ever sees a [`CorpusView`]; provenance stays with the
//! evaluator.

mod run;
mod sampler;
mod strategy;

pub use run::{
    latest_checkpoint, load_checkpoint, run_experiment, save_checkpoint, EvalHook, NoEval, RunOptions, RunOutcome,
};
pub use sampler::{latent_batch, BatchSampler, Batches, EpochSampler};
pub use strategy::{strategy_terms, CurriculumBatchTerms, Strategy, DEFAULT_TAU};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::CorpusView;
use crate::losses::{discriminator_loss, generator_loss, DLossParts, LossConfig, LossError};
use crate::models::{ArchConfig, ModelSet};
use crate::numerics::{adam_step, CheckpointError, OptimConfig};
use crate::{one_hot_rows, Scalar};

const TRAIN_STREAM: u64 = 0x747261696e;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite {phase} loss at generator step {step}: {snapshot}")]
    NonFinite {
        step: u64,
        phase: &'static str,
        snapshot: String,
    },
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("evaluation failed at step {step}: {message}")]
    Eval { step: u64, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn default_d_steps() -> usize {
    2
}

fn default_total() -> u64 {
    3000
}

fn default_eval_every() -> u64 {
    500
}

fn default_strategy() -> Strategy {
    Strategy::Ours
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default)]
    pub optim: OptimConfig,
    #[serde(default)]
    pub loss: LossConfig,
    #[serde(default = "default_d_steps")]
    pub d_steps_per_g_step: usize,
    #[serde(default = "default_total")]
    pub total_g_steps: u64,
    /// Evaluate every this many generator steps; 0 evaluates only at the
    /// start and the end.
    #[serde(default = "default_eval_every")]
    pub eval_every: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_strategy")]
    pub strategy: Strategy,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optim: OptimConfig::default(),
            loss: LossConfig::default(),
            d_steps_per_g_step: default_d_steps(),
            total_g_steps: default_total(),
            eval_every: default_eval_every(),
            seed: 0,
            strategy: default_strategy(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        self.optim.validate().map_err(TrainError::Config)?;
        self.loss.validate().map_err(TrainError::Config)?;
        self.strategy.validate().map_err(TrainError::Config)?;
        if self.d_steps_per_g_step == 0 {
            return Err(TrainError::Config("d_steps_per_g_step must be >= 1".into()));
        }
        Ok(())
    }

    pub fn arch(&self, view: &CorpusView) -> ArchConfig {
        ArchConfig::desk(view.dim, view.num_classes, self.optim.latent_dim)
    }
}

/// Exponential moving averages of the losses (decay 0.99), seeded by the
/// first value.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RunningLosses {
    pub d_total: f64,
    pub g: f64,
    pub cls: f64,
    pub updates: u64,
}

impl RunningLosses {
    const DECAY: f64 = 0.99;

    fn push(&mut self, d_total: f64, g: f64, cls: f64) {
        if self.updates == 0 {
            (self.d_total, self.g, self.cls) = (d_total, g, cls);
        } else {
            let a = Self::DECAY;
            self.d_total = a * self.d_total + (1.0 - a) * d_total;
            self.g = a * self.g + (1.0 - a) * g;
            self.cls = a * self.cls + (1.0 - a) * cls;
        }
        self.updates += 1;
    }
}

/// Everything that evolves during training. A pure function of the corpus
/// view, the configuration and the number of steps taken.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState<T> {
    pub models: ModelSet<T>,
    pub g_step: u64,
    pub d_step: u64,
    pub rng: ChaCha8Rng,
    pub sampler: BatchSampler,
    pub running: RunningLosses,
}

impl<T: Scalar> TrainState<T> {
    pub fn new(view: &CorpusView, cfg: &TrainConfig) -> Result<Self, TrainError> {
        cfg.validate()?;
        if view.num_labeled() == 0 {
            return Err(TrainError::Config("corpus has no labeled samples".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(TRAIN_STREAM);
        Ok(Self {
            models: ModelSet::new(cfg.arch(view), cfg.seed),
            g_step: 0,
            d_step: 0,
            rng,
            sampler: BatchSampler::new(view),
            running: RunningLosses::default(),
        })
    }

    pub fn assemble_batches(&mut self, view: &CorpusView, cfg: &TrainConfig) -> Batches<T> {
        self.sampler
            .assemble(view, cfg.optim.batch_size, cfg.optim.latent_dim, &mut self.rng)
    }
}

/// Outcome of one discriminator update.
#[derive(Debug, Clone, PartialEq)]
pub struct DStepReport<T> {
    pub parts: DLossParts<T>,
    pub total: T,
    pub dropped: usize,
    pub clamped: usize,
}

/// Outcome of one full iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport<T> {
    pub g_step: u64,
    pub d: Vec<DStepReport<T>>,
    pub g_loss: T,
}

fn snapshot<T: Scalar>(state: &TrainState<T>, parts: Option<&DLossParts<T>>) -> String {
    let norm = |s: &crate::ParamStore<T>| {
        s.iter()
            .flat_map(|p| p.value.iter())
            .map(|v| v.to_f64_lossy().powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let mut out = format!(
        "d_step={} |G|={:.6e} |D|={:.6e}",
        state.d_step,
        norm(&state.models.gen),
        norm(&state.models.disc)
    );
    if let Some(p) = parts {
        out.push_str(&format!(
            " parts={{labeled: {}, unlabeled: {}, fake: {}, cls_real: {}, cls_fake: {}}}",
            p.labeled, p.unlabeled, p.fake, p.cls_real, p.cls_fake
        ));
    }
    out
}

/// One discriminator+classifier update on a fresh batch. The generator is
/// not modified.
pub fn d_step<T: Scalar>(
    state: &mut TrainState<T>,
    view: &CorpusView,
    cfg: &TrainConfig,
) -> Result<DStepReport<T>, TrainError> {
    let batches = state.assemble_batches(view, cfg);
    let terms = strategy_terms(cfg.strategy, &batches, &state.models, &mut state.rng)?;
    let batch = terms.discriminator_batch(&batches, view.num_classes);
    let loss_cfg = cfg.strategy.loss_config(&cfg.loss);
    state.models.disc.zero_grad();
    let report = discriminator_loss(&mut state.models, &batch, &loss_cfg, true)?;
    if !report.parts.is_finite() || !report.total.is_finite() {
        return Err(TrainError::NonFinite {
            step: state.g_step,
            phase: "discriminator",
            snapshot: snapshot(state, Some(&report.parts)),
        });
    }
    adam_step(&mut state.models.disc, cfg.optim.lr_d, &cfg.optim);
    state.d_step += 1;
    Ok(DStepReport {
        parts: report.parts,
        total: report.total,
        dropped: terms.dropped,
        clamped: report.clamped,
    })
}

/// One generator update on fresh latents. The discriminator is not
/// modified.
pub fn g_step<T: Scalar>(state: &mut TrainState<T>, view: &CorpusView, cfg: &TrainConfig) -> Result<T, TrainError> {
    let (z, y) = latent_batch::<T, _>(
        cfg.optim.batch_size,
        cfg.optim.latent_dim,
        view.num_classes,
        &mut state.rng,
    );
    let y = one_hot_rows(&y, view.num_classes);
    state.models.gen.zero_grad();
    let loss = generator_loss(&mut state.models, &z, &y, true)?;
    if !loss.is_finite() {
        return Err(TrainError::NonFinite {
            step: state.g_step,
            phase: "generator",
            snapshot: snapshot(state, None),
        });
    }
    adam_step(&mut state.models.gen, cfg.optim.lr_g, &cfg.optim);
    Ok(loss)
}

pub fn train_step<T: Scalar>(
    state: &mut TrainState<T>,
    view: &CorpusView,
    cfg: &TrainConfig,
) -> Result<StepReport<T>, TrainError> {
    let mut d = Vec::with_capacity(cfg.d_steps_per_g_step);
    for _ in 0..cfg.d_steps_per_g_step {
        d.push(d_step(state, view, cfg)?);
    }
    let g_loss = g_step(state, view, cfg)?;
    state.g_step += 1;
    let last = d.last().expect("at least one discriminator step");
    state.running.push(
        last.total.to_f64_lossy(),
        g_loss.to_f64_lossy(),
        last.parts.cls().to_f64_lossy(),
    );
    Ok(StepReport {
        g_step: state.g_step,
        d,
        g_loss,
    })
}
