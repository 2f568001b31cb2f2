use ndarray::{concatenate, Array2, ArrayView1, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EvalError, FeatureSet};
use crate::Scalar;

/// Clustering and sweep parameters of the PRD scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PrdConfig {
    pub num_clusters: usize,
    pub num_angles: usize,
    pub restarts: usize,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for PrdConfig {
    fn default() -> Self {
        Self {
            num_clusters: 20,
            num_angles: 1001,
            restarts: 10,
            max_iter: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub centroids: Array2<f64>,
    pub assignment: Vec<usize>,
    pub inertia: f64,
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid; lowest index wins ties.
fn nearest(x: ArrayView1<f64>, centroids: &Array2<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.rows().into_iter().enumerate() {
        let d = sq_dist(x, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn lloyd(points: &Array2<f64>, mut centroids: Array2<f64>, max_iter: usize) -> KMeans {
    let n = points.nrows();
    let k = centroids.nrows();
    let mut assignment = vec![usize::MAX; n];
    for _ in 0..max_iter {
        let mut changed = false;
        for (i, p) in points.rows().into_iter().enumerate() {
            let (j, _) = nearest(p, &centroids);
            if assignment[i] != j {
                assignment[i] = j;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = Array2::<f64>::zeros(centroids.raw_dim());
        let mut counts = vec![0usize; k];
        for (i, p) in points.rows().into_iter().enumerate() {
            sums.row_mut(assignment[i]).scaled_add(1.0, &p);
            counts[assignment[i]] += 1;
        }
        for j in 0..k {
            // Empty clusters keep their previous centre.
            if counts[j] > 0 {
                centroids.row_mut(j).assign(&(&sums.row(j) / counts[j] as f64));
            }
        }
    }
    let inertia = points
        .rows()
        .into_iter()
        .zip(&assignment)
        .map(|(p, &j)| sq_dist(p, centroids.row(j)))
        .sum();
    KMeans {
        centroids,
        assignment,
        inertia,
    }
}

fn plus_plus_init<R: Rng>(points: &Array2<f64>, k: usize, rng: &mut R) -> Array2<f64> {
    let n = points.nrows();
    let mut centroids = Array2::zeros((k, points.ncols()));
    centroids.row_mut(0).assign(&points.row(rng.random_range(0..n)));
    let mut d2: Vec<f64> = points
        .rows()
        .into_iter()
        .map(|p| sq_dist(p, centroids.row(0)))
        .collect();
    for j in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut idx = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if u < w {
                    idx = i;
                    break;
                }
                u -= w;
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        centroids.row_mut(j).assign(&points.row(pick));
        for (i, p) in points.rows().into_iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, centroids.row(j)));
        }
    }
    centroids
}

/// k-means++ seeded Lloyd iterations; the restart with lowest inertia wins
/// (first one on ties).
pub fn kmeans(
    points: &Array2<f64>,
    k: usize,
    restarts: usize,
    max_iter: usize,
    seed: u64,
) -> Result<KMeans, EvalError> {
    if points.nrows() == 0 {
        return Err(EvalError::TooFewSamples {
            what: "k-means".into(),
            need: 1,
            got: 0,
        });
    }
    if k == 0 || restarts == 0 {
        return Err(EvalError::Config(
            "k-means needs k >= 1 and at least one restart".into(),
        ));
    }
    let k = k.min(points.nrows());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<KMeans> = None;
    for _ in 0..restarts {
        let init = plus_plus_init(points, k, &mut rng);
        let run = lloyd(points, init, max_iter);
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Precision and recall along the PRD curve.
#[derive(Debug, Clone, PartialEq)]
pub struct PrdCurve {
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
}

/// Sweeps `λ = tan θ` over `num_angles` angles evenly spaced in
/// `[ε, π/2 − ε]`: precision `α(λ) = Σ min(λ·ref_i, eval_i)`, recall
/// `α(λ)/λ`.
pub fn prd_curve(reference: &[f64], eval: &[f64], num_angles: usize) -> PrdCurve {
    const EPS: f64 = 1e-10;
    let n = num_angles.max(2);
    let span = std::f64::consts::FRAC_PI_2 - 2.0 * EPS;
    let mut precision = Vec::with_capacity(n);
    let mut recall = Vec::with_capacity(n);
    for i in 0..n {
        let slope = (EPS + span * i as f64 / (n - 1) as f64).tan();
        let p: f64 = reference.iter().zip(eval).map(|(&r, &e)| (slope * r).min(e)).sum();
        precision.push(p.clamp(0.0, 1.0));
        recall.push((p / slope).clamp(0.0, 1.0));
    }
    PrdCurve { precision, recall }
}

/// `(1+β²)·p·r / (β²·p + r)`, zero when both vanish.
pub fn f_beta(precision: f64, recall: f64, beta: f64) -> f64 {
    let b2 = beta * beta;
    let den = b2 * precision + recall;
    if den > 0.0 {
        (1.0 + b2) * precision * recall / den
    } else {
        0.0
    }
}

/// Maximum over the curve of `F_β` and of `F_{1/β}`.
pub fn max_f_beta_pair(curve: &PrdCurve, beta: f64) -> (f64, f64) {
    let mut hi = 0.0f64;
    let mut lo = 0.0f64;
    for (&p, &r) in curve.precision.iter().zip(&curve.recall) {
        hi = hi.max(f_beta(p, r, beta));
        lo = lo.max(f_beta(p, r, 1.0 / beta));
    }
    (hi.min(1.0), lo.min(1.0))
}

fn histogram(points: &Array2<f64>, centroids: &Array2<f64>) -> Vec<f64> {
    let mut h = vec![0.0; centroids.nrows()];
    for p in points.rows() {
        h[nearest(p, centroids).0] += 1.0;
    }
    let n = points.nrows() as f64;
    h.iter_mut().for_each(|v| *v /= n);
    h
}

/// `(F_8, F_{1/8})` of `gen` against `real`. The union is clustered after a
/// lexicographic sort, so the clustering does not depend on which set is
/// passed first.
pub fn prd_f_scores<T: Scalar>(
    real: &FeatureSet<T>,
    gen: &FeatureSet<T>,
    cfg: &PrdConfig,
) -> Result<(f64, f64), EvalError> {
    if real.is_empty() || gen.is_empty() {
        return Err(EvalError::TooFewSamples {
            what: "PRD".into(),
            need: 1,
            got: 0,
        });
    }
    if real.dim() != gen.dim() {
        return Err(EvalError::Shape(format!("dimension {} vs {}", real.dim(), gen.dim())));
    }
    let r = real.to_f64();
    let g = gen.to_f64();
    let union = concatenate(Axis(0), &[r.view(), g.view()]).expect("same width");
    let mut order: Vec<usize> = (0..union.nrows()).collect();
    order.sort_by(|&a, &b| {
        union
            .row(a)
            .iter()
            .zip(union.row(b).iter())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let sorted = union.select(Axis(0), &order);
    let km = kmeans(&sorted, cfg.num_clusters, cfg.restarts, cfg.max_iter, cfg.seed)?;
    let curve = prd_curve(
        &histogram(&r, &km.centroids),
        &histogram(&g, &km.centroids),
        cfg.num_angles,
    );
    Ok(max_f_beta_pair(&curve, 8.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::StandardNormal;

    fn randn(n: usize, d: usize, shift: f64, rng: &mut ChaCha8Rng) -> FeatureSet<f64> {
        FeatureSet::new(Array2::from_shape_fn((n, d), |_| {
            rng.sample::<f64, _>(StandardNormal) + shift
        }))
        .unwrap()
    }

    #[test]
    fn identical_sets_score_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = randn(400, 2, 0.0, &mut rng);
        let (f8, fe) = prd_f_scores(&a, &a, &PrdConfig::default()).unwrap();
        assert!((f8 - 1.0).abs() < 1e-9 && (fe - 1.0).abs() < 1e-9, "{f8} {fe}");
    }

    #[test]
    fn disjoint_sets_score_near_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = randn(300, 2, 0.0, &mut rng);
        let b = randn(300, 2, 100.0, &mut rng);
        let (f8, fe) = prd_f_scores(&a, &b, &PrdConfig::default()).unwrap();
        assert!(f8 < 0.05 && fe < 0.05, "{f8} {fe}");
    }

    #[test]
    fn beta_duality() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = randn(300, 2, 0.0, &mut rng);
        let b = FeatureSet::new(randn(200, 2, 0.8, &mut rng).x * 1.7).unwrap();
        let (f8, fe) = prd_f_scores(&a, &b, &PrdConfig::default()).unwrap();
        let (g8, ge) = prd_f_scores(&b, &a, &PrdConfig::default()).unwrap();
        assert!(
            (f8 - ge).abs() < 1e-10 && (fe - g8).abs() < 1e-10,
            "{f8} {fe} {g8} {ge}"
        );
        assert!((0.0..=1.0).contains(&f8) && (0.0..=1.0).contains(&fe));
    }

    /// Independent sweep: for p = [0.5, 0.5] and q = [1, 0] the curve is
    /// α(λ) = min(λ/2, 1) + 0, β = α/λ, evaluated directly at every angle.
    #[test]
    fn hand_built_histograms_match_direct_sweep() {
        let p = [0.5, 0.5];
        let q = [1.0, 0.0];
        let n = 1001;
        let curve = prd_curve(&p, &q, n);
        let mut best8 = 0.0f64;
        let mut best_e = 0.0f64;
        for i in 0..n {
            let theta = 1e-10 + (std::f64::consts::FRAC_PI_2 - 2e-10) * i as f64 / 1000.0;
            let lam = theta.tan();
            let alpha = (lam * 0.5).min(1.0);
            let beta = alpha / lam;
            assert!((curve.precision[i] - alpha.min(1.0)).abs() < 1e-12);
            assert!((curve.recall[i] - beta.min(1.0)).abs() < 1e-12);
            let f = |b: f64| (1.0 + b * b) * alpha * beta / (b * b * alpha + beta);
            best8 = best8.max(f(8.0));
            best_e = best_e.max(f(0.125));
        }
        let (f8, fe) = max_f_beta_pair(&curve, 8.0);
        assert!((f8 - best8).abs() < 1e-12 && (fe - best_e).abs() < 1e-12);
        // Recall is capped at 0.5 and precision at 1; the sweep gets close
        // to both corners.
        assert!(f8 < 0.51 && fe > 0.98, "{f8} {fe}");
    }

    #[test]
    fn kmeans_is_deterministic_and_separates_blobs() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = randn(50, 2, 0.0, &mut rng).x;
        let b = randn(50, 2, 20.0, &mut rng).x;
        let pts = concatenate(Axis(0), &[a.view(), b.view()]).unwrap();
        let k1 = kmeans(&pts, 2, 5, 100, 9).unwrap();
        let k2 = kmeans(&pts, 2, 5, 100, 9).unwrap();
        assert_eq!(k1, k2);
        assert!(k1.assignment[..50].iter().all(|&c| c == k1.assignment[0]));
        assert!(k1.assignment[50..].iter().all(|&c| c != k1.assignment[0]));
    }

    #[test]
    fn empty_input_is_rejected() {
        let e = FeatureSet::new(Array2::<f64>::zeros((0, 2))).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = randn(10, 2, 0.0, &mut rng);
        assert!(prd_f_scores(&e, &a, &PrdConfig::default()).is_err());
    }
}
