//! Loss functions of the soft curriculum.
//!
//! Scalar building blocks (`hinge_d`, `gce`, `confidence`, `correct_label`,
//! `assign_label`) are exposed individually. The fused
//! [`discriminator_loss`] and [`generator_loss`] evaluate the full
//! objectives with one backbone pass and back-propagate them; the value-only
//! functions ([`d_loss_labeled`], [`d_loss_fake`], [`cls_loss`], ...) are a
//! second, unfused route to the same numbers.
//!
//! Classifier predictions used as labels or weights inside adversarial terms
//! are constants: the classifier only learns through the classification
//! loss. The generator is detached in every discriminator-side term.

use ndarray::{concatenate, s, Array1, Array2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::models::ModelSet;
use crate::numerics::{softmax_backward, softmax_rows, ShapeError};
use crate::{Scalar, SoftLabel};

/// Floor applied to `predᵀlabel` in the cross-entropy limit.
pub const CE_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error("{0} batch must not be empty")]
    EmptyBatch(&'static str),
}

/// Weight of the classification loss and the GCE exponent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    pub lambda_cls: f64,
    pub q_gce: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda_cls: 0.1,
            q_gce: 0.7,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.lambda_cls >= 0.0 && self.lambda_cls.is_finite()) {
            return Err("loss.lambda_cls must be >= 0".into());
        }
        if !(0.0..=1.0).contains(&self.q_gce) {
            return Err("loss.q_gce must be in [0, 1]".into());
        }
        Ok(())
    }
}

/// `max(0, 1 + score)`.
pub fn hinge_d<T: Scalar>(score: T) -> T {
    (T::one() + score).max(T::zero())
}

/// Derivative of [`hinge_d`]; zero at the kink.
pub fn hinge_d_grad<T: Scalar>(score: T) -> T {
    if T::one() + score > T::zero() {
        T::one()
    } else {
        T::zero()
    }
}

/// Generalized cross entropy of the probability `p = predᵀlabel`.
///
/// Returns the loss and whether `p` had to be floored (only in the `q = 0`
/// cross-entropy branch).
pub fn gce_of_prob<T: Scalar>(p: T, q: T) -> (T, bool) {
    if q == T::zero() {
        let floor = T::lit(CE_FLOOR);
        let clamped = p < floor;
        (-(p.max(floor)).ln(), clamped)
    } else if q == T::one() {
        (T::one() - p, false)
    } else {
        // (1 - p^q)/q written with expm1 so small q keeps full precision.
        (-(q * p.ln()).exp_m1() / q, false)
    }
}

/// Derivative of [`gce_of_prob`] with respect to `p`.
pub fn gce_prob_grad<T: Scalar>(p: T, q: T) -> T {
    if q == T::zero() {
        let floor = T::lit(CE_FLOOR);
        if p < floor {
            T::zero()
        } else {
            -p.recip()
        }
    } else {
        -p.powf(q - T::one())
    }
}

/// `(1 - (predᵀlabel)^q) / q`; cross entropy at `q = 0`, MAE at `q = 1`.
pub fn gce<T: Scalar>(pred: &SoftLabel<T>, label: &SoftLabel<T>, q: T) -> T {
    gce_of_prob(pred.dot(label), q).0
}

/// Entropy in nats with `0 log 0 = 0`.
pub fn entropy<T: Scalar>(p: impl IntoIterator<Item = T>) -> T {
    p.into_iter()
        .filter(|&v| v > T::zero())
        .map(|v| -v * v.ln())
        .fold(T::zero(), |a, b| a + b)
}

fn confidence_of<T: Scalar>(p: impl IntoIterator<Item = T>, classes: usize) -> T {
    if classes <= 1 {
        return T::one();
    }
    let c = T::one() - entropy(p) / T::lit(classes as f64).ln();
    c.max(T::zero()).min(T::one())
}

/// One minus the normalised prediction entropy: 0 at the uniform
/// prediction, 1 at a vertex.
pub fn confidence<T: Scalar>(pred: &SoftLabel<T>) -> T {
    confidence_of(pred.values().iter().copied(), pred.classes())
}

/// Confidence of each row of a batch of predictions.
pub fn confidence_rows<T: Scalar>(probs: &Array2<T>) -> Array1<T> {
    let k = probs.ncols();
    probs
        .rows()
        .into_iter()
        .map(|r| confidence_of(r.iter().copied(), k))
        .collect()
}

/// `(given + pred) / 2`.
pub fn correct_label<T: Scalar>(given: &SoftLabel<T>, pred: &SoftLabel<T>) -> SoftLabel<T> {
    let half = T::lit(0.5);
    let v = (given.values() + pred.values()) * half;
    SoftLabel::new(v).expect("midpoint of two simplex points")
}

pub fn correct_rows<T: Scalar>(given: &Array2<T>, probs: &Array2<T>) -> Array2<T> {
    (given + probs) * T::lit(0.5)
}

/// The classifier's soft prediction is the assigned label, unchanged.
pub fn assign_label<T: Scalar>(pred: &SoftLabel<T>) -> SoftLabel<T> {
    pred.clone()
}

/// `Σ_i w_i max(0, 1 - s_i) / n` and its gradient with respect to the scores.
pub fn weighted_real_hinge<T: Scalar>(scores: &Array1<T>, weights: &Array1<T>) -> (T, Array1<T>) {
    let n = scores.len();
    if n == 0 {
        return (T::zero(), Array1::zeros(0));
    }
    let inv = T::one() / T::lit(n as f64);
    let mut value = T::zero();
    let mut grad = Array1::zeros(n);
    for i in 0..n {
        let w = weights[i];
        value += w * hinge_d(-scores[i]);
        grad[i] = -w * hinge_d_grad(-scores[i]) * inv;
    }
    (value * inv, grad)
}

/// `mean max(0, 1 + s_i)` and its gradient.
pub fn fake_hinge<T: Scalar>(scores: &Array1<T>) -> (T, Array1<T>) {
    let n = scores.len();
    if n == 0 {
        return (T::zero(), Array1::zeros(0));
    }
    let inv = T::one() / T::lit(n as f64);
    let value = scores.iter().map(|&s| hinge_d(s)).fold(T::zero(), |a, b| a + b) * inv;
    (value, scores.mapv(|s| hinge_d_grad(s) * inv))
}

/// Mean GCE over rows; gradient with respect to the probabilities and the
/// number of floored rows.
pub fn gce_rows<T: Scalar>(probs: &Array2<T>, labels: &Array2<T>, q: T) -> (T, Array2<T>, usize) {
    let n = probs.nrows();
    if n == 0 {
        return (T::zero(), Array2::zeros(probs.raw_dim()), 0);
    }
    let inv = T::one() / T::lit(n as f64);
    let mut value = T::zero();
    let mut clamped = 0;
    let mut grad = Array2::zeros(probs.raw_dim());
    for (i, (p, y)) in probs.rows().into_iter().zip(labels.rows()).enumerate() {
        let py = p.dot(&y);
        let (l, c) = gce_of_prob(py, q);
        value += l;
        clamped += usize::from(c);
        let g = gce_prob_grad(py, q) * inv;
        grad.row_mut(i).assign(&(&y * g));
    }
    (value * inv, grad, clamped)
}

/// Smallest distance of any active hinge argument to its kink.
fn kink_gap<T: Scalar>(real: &[(&Array1<T>, &Array1<T>)], fake: &Array1<T>) -> f64 {
    let mut gap = f64::INFINITY;
    for (scores, weights) in real {
        for (&s, &w) in scores.iter().zip(weights.iter()) {
            if w != T::zero() {
                gap = gap.min((T::one() - s).abs().to_f64_lossy());
            }
        }
    }
    for &s in fake {
        gap = gap.min((T::one() + s).abs().to_f64_lossy());
    }
    gap
}

/// Inputs of one discriminator step with labels and weights already decided
/// by the training strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorBatch<T> {
    pub labeled_x: Array2<T>,
    /// One-hot given labels, used by the classification loss.
    pub labeled_given: Array2<T>,
    /// Labels fed to the discriminator for the labeled samples.
    pub labeled_cond: Array2<T>,
    pub labeled_weight: Array1<T>,
    pub unlabeled_x: Array2<T>,
    pub unlabeled_cond: Array2<T>,
    pub unlabeled_weight: Array1<T>,
    pub fake_z: Array2<T>,
    pub fake_y: Array2<T>,
}

/// Per-component values of the discriminator objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DLossParts<T> {
    pub labeled: T,
    pub unlabeled: T,
    pub fake: T,
    pub cls_real: T,
    pub cls_fake: T,
}

impl<T: Scalar> DLossParts<T> {
    pub fn cls(&self) -> T {
        self.cls_real + self.cls_fake
    }

    pub fn is_finite(&self) -> bool {
        [self.labeled, self.unlabeled, self.fake, self.cls_real, self.cls_fake]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// `labeled + unlabeled + fake + λ·cls`.
pub fn total_d_loss<T: Scalar>(parts: &DLossParts<T>, lambda: f64) -> T {
    parts.labeled + parts.unlabeled + parts.fake + T::lit(lambda) * parts.cls()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DLossReport<T> {
    pub parts: DLossParts<T>,
    pub total: T,
    pub kink_gap: f64,
    pub clamped: usize,
}

/// Evaluates the full discriminator objective in one backbone pass and,
/// when `backprop` is set, accumulates its gradient into `models.disc`.
/// The generator store is never touched.
pub fn discriminator_loss<T: Scalar>(
    models: &mut ModelSet<T>,
    batch: &DiscriminatorBatch<T>,
    cfg: &LossConfig,
    backprop: bool,
) -> Result<DLossReport<T>, LossError> {
    if batch.fake_z.nrows() == 0 {
        return Err(LossError::EmptyBatch("fake"));
    }
    let nl = batch.labeled_x.nrows();
    let nu = batch.unlabeled_x.nrows();
    let fake_x = models.generate(&batch.fake_z, &batch.fake_y)?;
    let all = concatenate(
        Axis(0),
        &[batch.labeled_x.view(), batch.unlabeled_x.view(), fake_x.view()],
    )
    .map_err(|_| {
        ShapeError::mismatch(
            "discriminator batch",
            (nl, models.arch.data_dim),
            batch.unlabeled_x.dim(),
        )
    })?;
    let (feats, trace) = models.backbone.forward(&models.disc, &all)?;
    let f_l = feats.slice(s![..nl, ..]).to_owned();
    let f_u = feats.slice(s![nl..nl + nu, ..]).to_owned();
    let f_f = feats.slice(s![nl + nu.., ..]).to_owned();

    let s_l = models.adv_head.forward(&models.disc, &f_l, &batch.labeled_cond)?;
    let s_u = models.adv_head.forward(&models.disc, &f_u, &batch.unlabeled_cond)?;
    let s_f = models.adv_head.forward(&models.disc, &f_f, &batch.fake_y)?;
    let (l_lbl, g_l) = weighted_real_hinge(&s_l, &batch.labeled_weight);
    let (l_unl, g_u) = weighted_real_hinge(&s_u, &batch.unlabeled_weight);
    let (l_fake, g_f) = fake_hinge(&s_f);

    let q = T::lit(cfg.q_gce);
    let p_l = softmax_rows(&models.cls_head.logits(&models.disc, &f_l)?);
    let p_f = softmax_rows(&models.cls_head.logits(&models.disc, &f_f)?);
    let (c_real, gp_l, cl_r) = gce_rows(&p_l, &batch.labeled_given, q);
    let (c_fake, gp_f, cl_f) = gce_rows(&p_f, &batch.fake_y, q);

    let parts = DLossParts {
        labeled: l_lbl,
        unlabeled: l_unl,
        fake: l_fake,
        cls_real: c_real,
        cls_fake: c_fake,
    };
    let total = total_d_loss(&parts, cfg.lambda_cls);

    if backprop {
        let lambda = T::lit(cfg.lambda_cls);
        let mut g_feats = Array2::zeros(feats.raw_dim());
        let store = &mut models.disc;
        let mut gl = models.adv_head.backward(store, &f_l, &batch.labeled_cond, &g_l)?;
        let gu = models.adv_head.backward(store, &f_u, &batch.unlabeled_cond, &g_u)?;
        let mut gf = models.adv_head.backward(store, &f_f, &batch.fake_y, &g_f)?;
        if cfg.lambda_cls > 0.0 {
            let glog_l = softmax_backward(&p_l, &gp_l) * lambda;
            let glog_f = softmax_backward(&p_f, &gp_f) * lambda;
            gl += &models.cls_head.backward(store, &f_l, &glog_l)?;
            gf += &models.cls_head.backward(store, &f_f, &glog_f)?;
        }
        g_feats.slice_mut(s![..nl, ..]).assign(&gl);
        g_feats.slice_mut(s![nl..nl + nu, ..]).assign(&gu);
        g_feats.slice_mut(s![nl + nu.., ..]).assign(&gf);
        models.backbone.backward(store, &trace, &g_feats)?;
    }

    Ok(DLossReport {
        parts,
        total,
        kink_gap: kink_gap(&[(&s_l, &batch.labeled_weight), (&s_u, &batch.unlabeled_weight)], &s_f),
        clamped: cl_r + cl_f,
    })
}

/// `mean -D(G(z, y), y)`; with `backprop` the gradient lands in
/// `models.gen` only.
pub fn generator_loss<T: Scalar>(
    models: &mut ModelSet<T>,
    z: &Array2<T>,
    y: &Array2<T>,
    backprop: bool,
) -> Result<T, LossError> {
    let n = z.nrows();
    if n == 0 {
        return Err(LossError::EmptyBatch("fake"));
    }
    let (x, g_trace) = models.generator.forward(&models.gen, z, y)?;
    let (feats, b_trace) = models.backbone.forward(&models.disc, &x)?;
    let scores = models.adv_head.forward(&models.disc, &feats, y)?;
    let loss = -scores.mean().expect("non-empty");
    if backprop {
        let g_scores = Array1::from_elem(n, -T::one() / T::lit(n as f64));
        let was_frozen = models.disc.is_frozen();
        models.disc.set_frozen(true);
        let gf = models.adv_head.backward(&mut models.disc, &feats, y, &g_scores);
        let gx = gf.and_then(|gf| models.backbone.backward(&mut models.disc, &b_trace, &gf));
        models.disc.set_frozen(was_frozen);
        models.generator.backward(&mut models.gen, &g_trace, &gx?)?;
    }
    Ok(loss)
}

/// Value of `mean c·f_D(-D(x, cond))` for arbitrary conditioning labels and
/// weights.
pub fn d_loss_real<T: Scalar>(
    models: &ModelSet<T>,
    x: &Array2<T>,
    cond: &Array2<T>,
    weights: &Array1<T>,
) -> Result<T, LossError> {
    let scores = models.d_score(x, cond)?;
    Ok(weighted_real_hinge(&scores, weights).0)
}

/// Labeled adversarial term: condition on `(y + ŷ)/2`, weight by `c(ŷ)`.
pub fn d_loss_labeled<T: Scalar>(models: &ModelSet<T>, x: &Array2<T>, given: &Array2<T>) -> Result<T, LossError> {
    let probs = models.classify(x)?;
    d_loss_real(models, x, &correct_rows(given, &probs), &confidence_rows(&probs))
}

/// Unlabeled adversarial term: condition on `ŷ`, weight by `c(ŷ)`.
pub fn d_loss_unlabeled<T: Scalar>(models: &ModelSet<T>, u: &Array2<T>) -> Result<T, LossError> {
    let probs = models.classify(u)?;
    let c = confidence_rows(&probs);
    d_loss_real(models, u, &probs, &c)
}

/// `mean f_D(D(G(z, y), y))`.
pub fn d_loss_fake<T: Scalar>(models: &ModelSet<T>, z: &Array2<T>, y: &Array2<T>) -> Result<T, LossError> {
    if z.nrows() == 0 {
        return Err(LossError::EmptyBatch("fake"));
    }
    let x = models.generate(z, y)?;
    Ok(fake_hinge(&models.d_score(&x, y)?).0)
}

/// Mean GCE of the classifier on labeled pairs plus mean GCE on generated
/// pairs, both with the same `q`.
pub fn cls_loss<T: Scalar>(
    models: &ModelSet<T>,
    x: &Array2<T>,
    given: &Array2<T>,
    z: &Array2<T>,
    y: &Array2<T>,
    q: f64,
) -> Result<(T, T), LossError> {
    if z.nrows() == 0 {
        return Err(LossError::EmptyBatch("fake"));
    }
    let q = T::lit(q);
    let real = gce_rows(&models.classify(x)?, given, q).0;
    let fake_x = models.generate(z, y)?;
    let fake = gce_rows(&models.classify(&fake_x)?, y, q).0;
    Ok((real, fake))
}

/// `mean -D(G(z, y), y)`, value only.
pub fn g_loss<T: Scalar>(models: &ModelSet<T>, z: &Array2<T>, y: &Array2<T>) -> Result<T, LossError> {
    let x = models.generate(z, y)?;
    Ok(-models.d_score(&x, y)?.mean().ok_or(LossError::EmptyBatch("fake"))?)
}

/// Losses of the fully supervised hinge cGAN: `(L_D, L_G)` with the real
/// term on given labels and no weighting.
pub fn supervised_losses<T: Scalar>(
    models: &ModelSet<T>,
    x: &Array2<T>,
    y: &Array2<T>,
    z: &Array2<T>,
    y_fake: &Array2<T>,
) -> Result<(T, T), LossError> {
    let real_scores = models.d_score(x, y)?;
    let n = T::lit(real_scores.len() as f64);
    let real = real_scores.iter().map(|&s| hinge_d(-s)).fold(T::zero(), |a, b| a + b) / n;
    let fake = d_loss_fake(models, z, y_fake)?;
    Ok((real + fake, g_loss(models, z, y_fake)?))
}
