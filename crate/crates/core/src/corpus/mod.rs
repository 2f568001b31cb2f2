//! Synthetic class-conditional data and the corruption pipeline that turns
//! it into a noisy labeled + uncurated unlabeled corpus.
//!
//! Pipeline order: flip labels among all classes, split by noisy label into
//! closed and open parts, take a labeled subset of the closed part, then pool
//! the rest of the closed part with a fraction of the open part as unlabeled
//! data. The true classes and flip decisions are kept in a provenance ledger
//! that is never part of the [`CorpusView`] handed to training.

mod io;

pub use io::{load_corpus, load_corpus_view, provenance_path, read_corpus, save_corpus, write_corpus};

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Radius of the ring layout.
pub const RING_RADIUS: f64 = 4.0;
/// Spacing of the grid layout.
pub const GRID_SPACING: f64 = 2.5;
/// Per-coordinate standard deviation (covariance `0.25 I`).
pub const CLASS_STD: f64 = 0.5;

const NOISE_STREAM: u64 = 1;
const LABELED_STREAM: u64 = 2;
const OPEN_STREAM: u64 = 3;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("invalid {field}: {message}")]
    Config { field: &'static str, message: String },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn config_err(field: &'static str, message: impl Into<String>) -> CorpusError {
    CorpusError::Config {
        field,
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layout {
    Ring,
    Grid,
}

/// Per-class Gaussian parameters: isotropic, shared standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureSpec {
    pub layout: Layout,
    pub means: Vec<Vec<f64>>,
    pub std: f64,
}

impl MixtureSpec {
    /// Class means on a ring of radius 4 or a centred grid in the first two
    /// coordinates; remaining coordinates are zero.
    pub fn new(layout: Layout, k_total: usize, dim: usize) -> Result<Self, CorpusError> {
        if k_total < 2 {
            return Err(config_err("k_total", "need at least 2 classes"));
        }
        if dim < 2 {
            return Err(config_err("dim", "need at least 2 dimensions"));
        }
        let means = (0..k_total)
            .map(|k| {
                let mut m = vec![0.0; dim];
                match layout {
                    Layout::Ring => {
                        let a = 2.0 * std::f64::consts::PI * k as f64 / k_total as f64;
                        m[0] = RING_RADIUS * a.cos();
                        m[1] = RING_RADIUS * a.sin();
                    }
                    Layout::Grid => {
                        let side = (k_total as f64).sqrt().ceil() as usize;
                        let off = (side as f64 - 1.0) / 2.0;
                        m[0] = ((k % side) as f64 - off) * GRID_SPACING;
                        m[1] = ((k / side) as f64 - off) * GRID_SPACING;
                    }
                }
                m
            })
            .collect();
        Ok(Self {
            layout,
            means,
            std: CLASS_STD,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.means.len()
    }

    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    /// Draws `per_class` samples of every class, class-major order.
    pub fn sample(&self, per_class: usize, seed: u64) -> Result<CleanDataset, CorpusError> {
        if per_class == 0 {
            return Err(config_err("per_class", "need at least 1 sample per class"));
        }
        let k = self.num_classes();
        let d = self.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Array2::zeros((k * per_class, d));
        let mut labels = Vec::with_capacity(k * per_class);
        for (c, mean) in self.means.iter().enumerate() {
            for i in 0..per_class {
                let mut row = x.row_mut(c * per_class + i);
                for j in 0..d {
                    let n: f64 = rng.sample(StandardNormal);
                    row[j] = mean[j] + self.std * n;
                }
                labels.push(c);
            }
        }
        Ok(CleanDataset {
            x,
            labels,
            k_total: k,
            dim: d,
            mixture: self.clone(),
        })
    }
}

/// Parameters of a synthetic clean dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureConfig {
    pub k_total: usize,
    pub per_class: usize,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default = "default_layout")]
    pub layout: Layout,
    #[serde(default)]
    pub seed: u64,
}

fn default_dim() -> usize {
    2
}

fn default_layout() -> Layout {
    Layout::Ring
}

impl MixtureConfig {
    pub fn generate(&self) -> Result<CleanDataset, CorpusError> {
        generate_synthetic_mixture(self.k_total, self.per_class, self.dim, self.layout, self.seed)
    }
}

/// Fully and correctly labeled samples over all `k_total` classes.
#[derive(Debug, Clone, PartialEq)]
pub struct CleanDataset {
    pub x: Array2<f64>,
    pub labels: Vec<usize>,
    pub k_total: usize,
    pub dim: usize,
    pub mixture: MixtureSpec,
}

impl CleanDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn class_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.k_total];
        for &c in &self.labels {
            h[c] += 1;
        }
        h
    }

    /// Rows whose class is below `k`, with their labels.
    pub fn restrict_to_classes(&self, k: usize) -> (Array2<f64>, Vec<usize>) {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| self.labels[i] < k).collect();
        (
            self.x.select(Axis(0), &idx),
            idx.iter().map(|&i| self.labels[i]).collect(),
        )
    }
}

pub fn generate_synthetic_mixture(
    k_total: usize,
    per_class: usize,
    dim: usize,
    layout: Layout,
    seed: u64,
) -> Result<CleanDataset, CorpusError> {
    MixtureSpec::new(layout, k_total, dim)?.sample(per_class, seed)
}

/// The four knobs of the corruption protocol plus its seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorruptionConfig {
    pub noise_ratio: f64,
    pub closed_class_count: usize,
    pub labeled_ratio: f64,
    #[serde(default = "default_usage")]
    pub usage_ratio: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_usage() -> f64 {
    1.0
}

impl CorruptionConfig {
    pub fn validate(&self, k_total: usize) -> Result<(), CorpusError> {
        if !(0.0..=1.0).contains(&self.noise_ratio) {
            return Err(config_err("noise_ratio", format!("{} not in [0, 1]", self.noise_ratio)));
        }
        if self.closed_class_count < 1 || self.closed_class_count > k_total {
            return Err(config_err(
                "closed_class_count",
                format!("{} not in [1, {k_total}]", self.closed_class_count),
            ));
        }
        if !(self.labeled_ratio > 0.0 && self.labeled_ratio <= 1.0) {
            return Err(config_err(
                "labeled_ratio",
                format!("{} not in (0, 1]", self.labeled_ratio),
            ));
        }
        if !(0.0..=1.0).contains(&self.usage_ratio) {
            return Err(config_err("usage_ratio", format!("{} not in [0, 1]", self.usage_ratio)));
        }
        Ok(())
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Labels after symmetric noise and which samples were flipped.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyLabels {
    pub labels: Vec<usize>,
    pub flipped: Vec<bool>,
}

/// Flips each label with probability `noise_ratio` to one of the other
/// `k_total - 1` classes, chosen uniformly.
pub fn inject_label_noise<R: Rng + ?Sized>(
    dataset: &CleanDataset,
    noise_ratio: f64,
    rng: &mut R,
) -> Result<NoisyLabels, CorpusError> {
    if !(0.0..=1.0).contains(&noise_ratio) {
        return Err(config_err("noise_ratio", format!("{noise_ratio} not in [0, 1]")));
    }
    let k = dataset.k_total;
    let mut labels = Vec::with_capacity(dataset.len());
    let mut flipped = Vec::with_capacity(dataset.len());
    for &orig in &dataset.labels {
        let u: f64 = rng.random();
        if u < noise_ratio {
            let mut j = rng.random_range(0..k - 1);
            if j >= orig {
                j += 1;
            }
            labels.push(j);
            flipped.push(true);
        } else {
            labels.push(orig);
            flipped.push(false);
        }
    }
    Ok(NoisyLabels { labels, flipped })
}

/// Sample indices whose noisy label is a closed class (`< k`) and the rest.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedOpenSplit {
    pub closed: Vec<usize>,
    pub open: Vec<usize>,
}

pub fn split_closed_open(noisy: &NoisyLabels, k: usize, k_total: usize) -> Result<ClosedOpenSplit, CorpusError> {
    if k < 1 || k > k_total {
        return Err(config_err("closed_class_count", format!("{k} not in [1, {k_total}]")));
    }
    let (closed, open) = (0..noisy.labels.len()).partition(|&i| noisy.labels[i] < k);
    Ok(ClosedOpenSplit { closed, open })
}

/// Round half to even.
pub fn rounded_count(ratio: f64, n: usize) -> usize {
    (ratio * n as f64).round_ties_even() as usize
}

/// Where a sample ended up in the corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Labeled,
    Unlabeled,
}

/// Hidden ground truth of one corpus sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProvenanceRecord {
    pub id: usize,
    pub true_class: usize,
    pub was_flipped: bool,
    pub is_open_set: bool,
    pub origin: Origin,
}

/// What training may see: labeled samples with their given class index and
/// unlabeled samples. Contains no ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusView {
    pub num_classes: usize,
    pub dim: usize,
    pub labeled_x: Array2<f64>,
    pub labeled_y: Vec<usize>,
    pub unlabeled_x: Array2<f64>,
}

impl CorpusView {
    pub fn num_labeled(&self) -> usize {
        self.labeled_y.len()
    }

    pub fn num_unlabeled(&self) -> usize {
        self.unlabeled_x.nrows()
    }
}

/// A corpus with its provenance ledger. Ids are `0..n_l` for labeled and
/// `n_l..n_l+n_u` for unlabeled samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    view: CorpusView,
    pub k_total: usize,
    pub provenance: Vec<ProvenanceRecord>,
    pub config: Option<CorruptionConfig>,
    pub mixture: Option<MixtureSpec>,
}

impl Corpus {
    pub fn new(
        view: CorpusView,
        k_total: usize,
        provenance: Vec<ProvenanceRecord>,
        config: Option<CorruptionConfig>,
        mixture: Option<MixtureSpec>,
    ) -> Result<Self, CorpusError> {
        let n = view.num_labeled() + view.num_unlabeled();
        if view.num_labeled() == 0 {
            return Err(config_err("labeled", "corpus needs at least one labeled sample"));
        }
        if provenance.len() != n || provenance.iter().enumerate().any(|(i, p)| p.id != i) {
            return Err(config_err(
                "provenance",
                "must cover every sample id exactly once, in order",
            ));
        }
        if view.labeled_y.iter().any(|&y| y >= view.num_classes) {
            return Err(config_err("given_label", "label outside the closed set"));
        }
        Ok(Self {
            view,
            k_total,
            provenance,
            config,
            mixture,
        })
    }

    /// The provenance-free view given to the trainer.
    pub fn view(&self) -> &CorpusView {
        &self.view
    }

    pub fn num_classes(&self) -> usize {
        self.view.num_classes
    }

    pub fn labeled_provenance(&self) -> &[ProvenanceRecord] {
        &self.provenance[..self.view.num_labeled()]
    }

    pub fn unlabeled_provenance(&self) -> &[ProvenanceRecord] {
        &self.provenance[self.view.num_labeled()..]
    }

    /// Histogram of true classes over every corpus sample.
    pub fn true_class_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.k_total];
        for p in &self.provenance {
            h[p.true_class] += 1;
        }
        h
    }
}

/// Takes a uniformly random `labeled_ratio` share of the closed part as
/// labeled data; the rest of the closed part plus a `usage_ratio` share of
/// the open part becomes unlabeled.
#[allow(clippy::too_many_arguments)]
pub fn partition_labeled_unlabeled<R: Rng + ?Sized>(
    clean: &CleanDataset,
    noisy: &NoisyLabels,
    split: &ClosedOpenSplit,
    k: usize,
    labeled_ratio: f64,
    usage_ratio: f64,
    labeled_rng: &mut R,
    open_rng: &mut R,
) -> Result<LabeledPartition, CorpusError> {
    if !(labeled_ratio > 0.0 && labeled_ratio <= 1.0) {
        return Err(config_err("labeled_ratio", format!("{labeled_ratio} not in (0, 1]")));
    }
    if !(0.0..=1.0).contains(&usage_ratio) {
        return Err(config_err("usage_ratio", format!("{usage_ratio} not in [0, 1]")));
    }
    if split.closed.is_empty() {
        return Err(config_err("closed_class_count", "closed part is empty"));
    }
    let n_l = rounded_count(labeled_ratio, split.closed.len());
    if n_l == 0 {
        return Err(config_err("labeled_ratio", "labeled set would be empty"));
    }
    let mut closed = split.closed.clone();
    closed.shuffle(labeled_rng);
    let mut open = split.open.clone();
    open.shuffle(open_rng);
    let n_o = rounded_count(usage_ratio, open.len());

    let labeled_idx = &closed[..n_l];
    let unlabeled_idx: Vec<usize> = closed[n_l..].iter().chain(&open[..n_o]).copied().collect();

    let mut provenance = Vec::with_capacity(labeled_idx.len() + unlabeled_idx.len());
    for (origin, idx) in [(Origin::Labeled, labeled_idx), (Origin::Unlabeled, &unlabeled_idx[..])] {
        for &i in idx {
            provenance.push(ProvenanceRecord {
                id: provenance.len(),
                true_class: clean.labels[i],
                was_flipped: noisy.flipped[i],
                is_open_set: clean.labels[i] >= k,
                origin,
            });
        }
    }
    let view = CorpusView {
        num_classes: k,
        dim: clean.dim,
        labeled_x: clean.x.select(Axis(0), labeled_idx),
        labeled_y: labeled_idx.iter().map(|&i| noisy.labels[i]).collect(),
        unlabeled_x: clean.x.select(Axis(0), &unlabeled_idx),
    };
    Ok(LabeledPartition { view, provenance })
}

/// View plus provenance produced by [`partition_labeled_unlabeled`].
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPartition {
    pub view: CorpusView,
    pub provenance: Vec<ProvenanceRecord>,
}

/// Noise, split and partition in that order; a pure function of its inputs.
pub fn build_corpus(clean: &CleanDataset, cfg: &CorruptionConfig) -> Result<Corpus, CorpusError> {
    cfg.validate(clean.k_total)?;
    let noisy = inject_label_noise(clean, cfg.noise_ratio, &mut stream_rng(cfg.seed, NOISE_STREAM))?;
    let split = split_closed_open(&noisy, cfg.closed_class_count, clean.k_total)?;
    let parts = partition_labeled_unlabeled(
        clean,
        &noisy,
        &split,
        cfg.closed_class_count,
        cfg.labeled_ratio,
        cfg.usage_ratio,
        &mut stream_rng(cfg.seed, LABELED_STREAM),
        &mut stream_rng(cfg.seed, OPEN_STREAM),
    )?;
    Corpus::new(
        parts.view,
        clean.k_total,
        parts.provenance,
        Some(cfg.clone()),
        Some(clean.mixture.clone()),
    )
}
