//! Class-conditional GAN training from noisy labeled and uncurated unlabeled
//! data using a soft curriculum: an auxiliary classifier trained with
//! generalized cross entropy corrects given labels, assigns soft labels to
//! unlabeled samples and weights every real sample's adversarial term by its
//! prediction confidence.
//!
//! The crate is organised bottom-up:
//!
//! - [`corpus`] forges synthetic mixtures and corrupts them into noisy
//!   labeled + uncurated unlabeled corpora, keeping a hidden provenance ledger.
//! - [`numerics`] holds dense layers with hand-written backward passes, the
//!   parameter store, Adam and a finite-difference gradient checker.
//! - [`models`] builds the generator, shared backbone, projection head and
//!   classifier head.
//! - [`losses`] implements the hinge, generalized cross entropy, confidence,
//!   label correction/assignment and the combined objectives.
//! - [`trainer`] runs the alternating optimisation for every strategy.
//! - [`eval`] computes Fréchet distances, PRD F-scores, the oracle score and
//!   curriculum diagnostics.
//!
//! All math is generic over [`Scalar`] (`f32` or `f64`); the aliases at the
//! crate root fix it to `f64`, which is what the trainer and CLI use.

pub mod corpus;
pub mod eval;
pub mod losses;
pub mod models;
pub mod numerics;
mod scalar;
mod soft_label;
pub mod trainer;

pub use scalar::Scalar;

pub use corpus::{CleanDataset, Corpus, CorpusView, CorruptionConfig, Layout, MixtureSpec};
pub use losses::LossConfig;
pub use models::{ArchConfig, ModelSet};
pub use numerics::{OptimConfig, ParamStore};
pub use soft_label::{one_hot_rows, SoftLabel, SoftLabelError};
pub use trainer::{Strategy, TrainConfig, TrainState};

/// Model set in double precision.
pub type ModelSet64 = models::ModelSet<f64>;
/// Model set in single precision.
pub type ModelSet32 = models::ModelSet<f32>;
/// Parameter store in double precision.
pub type ParamStore64 = numerics::ParamStore<f64>;
/// Training state in double precision.
pub type TrainState64 = trainer::TrainState<f64>;
/// Soft label in double precision.
pub type SoftLabel64 = soft_label::SoftLabel<f64>;
/// Feature set in double precision.
pub type FeatureSet64 = eval::FeatureSet<f64>;
