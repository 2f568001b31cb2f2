use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::corpus::CorpusView;
use crate::Scalar;

/// Draws indices without replacement within an epoch; reshuffles when the
/// current permutation runs out, so a batch larger than the pool spans
/// several epochs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpochSampler {
    perm: Vec<usize>,
    pos: usize,
    epoch: u64,
}

impl EpochSampler {
    pub fn new(n: usize) -> Self {
        Self {
            perm: (0..n).collect(),
            pos: n,
            epoch: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    /// Number of completed reshuffles.
    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn next_batch<R: Rng + ?Sized>(&mut self, b: usize, rng: &mut R) -> Vec<usize> {
        let mut out = Vec::with_capacity(b);
        if self.perm.is_empty() {
            return out;
        }
        while out.len() < b {
            if self.pos == self.perm.len() {
                self.perm.shuffle(rng);
                self.pos = 0;
                self.epoch += 1;
            }
            let take = (b - out.len()).min(self.perm.len() - self.pos);
            out.extend_from_slice(&self.perm[self.pos..self.pos + take]);
            self.pos += take;
        }
        out
    }
}

/// One draw of real and latent inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Batches<T> {
    pub labeled_x: Array2<T>,
    pub labeled_y: Vec<usize>,
    pub unlabeled_x: Array2<T>,
    pub z: Array2<T>,
    /// Conditioning classes of the fake samples.
    pub fake_y: Vec<usize>,
}

/// Samplers for the labeled and unlabeled pools.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchSampler {
    pub labeled: EpochSampler,
    pub unlabeled: EpochSampler,
}

impl BatchSampler {
    pub fn new(view: &CorpusView) -> Self {
        Self {
            labeled: EpochSampler::new(view.num_labeled()),
            unlabeled: EpochSampler::new(view.num_unlabeled()),
        }
    }

    /// `b` labeled and `b` unlabeled samples (none if the pool is empty),
    /// `z ~ N(0, I)` and uniformly drawn conditioning classes.
    pub fn assemble<T: Scalar, R: Rng + ?Sized>(
        &mut self,
        view: &CorpusView,
        b: usize,
        latent_dim: usize,
        rng: &mut R,
    ) -> Batches<T> {
        let li = self.labeled.next_batch(b, rng);
        let ui = self.unlabeled.next_batch(b, rng);
        let (z, fake_y) = latent_batch(b, latent_dim, view.num_classes, rng);
        Batches {
            labeled_x: view.labeled_x.select(Axis(0), &li).mapv(T::lit),
            labeled_y: li.iter().map(|&i| view.labeled_y[i]).collect(),
            unlabeled_x: view.unlabeled_x.select(Axis(0), &ui).mapv(T::lit),
            z,
            fake_y,
        }
    }
}

/// Standard-normal latents and uniform class indices.
pub fn latent_batch<T: Scalar, R: Rng + ?Sized>(
    b: usize,
    latent_dim: usize,
    num_classes: usize,
    rng: &mut R,
) -> (Array2<T>, Vec<usize>) {
    let z = Array2::from_shape_simple_fn((b, latent_dim), || T::lit(rng.sample::<f64, _>(StandardNormal)));
    let y = (0..b).map(|_| rng.random_range(0..num_classes)).collect();
    (z, y)
}
