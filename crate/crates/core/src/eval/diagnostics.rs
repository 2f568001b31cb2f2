use ndarray::Array2;

use crate::corpus::Corpus;
use crate::losses::confidence_rows;
use crate::models::ModelSet;
use crate::numerics::ShapeError;
use crate::soft_label::argmax;
use crate::Scalar;

/// Area under the ROC curve of `positive` against `negative` scores via the
/// Mann–Whitney statistic; ties count one half. `None` if either side is
/// empty.
pub fn roc_auc(positive: &[f64], negative: &[f64]) -> Option<f64> {
    if positive.is_empty() || negative.is_empty() {
        return None;
    }
    let mut all: Vec<(f64, bool)> = positive
        .iter()
        .map(|&s| (s, true))
        .chain(negative.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Mid-ranks over tie groups, 1-based.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += all[i..=j].iter().filter(|e| e.1).count() as f64 * mid;
        i = j + 1;
    }
    let np = positive.len() as f64;
    let nn = negative.len() as f64;
    Some((rank_sum - np * (np + 1.0) / 2.0) / (np * nn))
}

/// Classifier quality measured against the hidden provenance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diagnostics {
    /// Argmax accuracy over every corpus sample whose true class is closed.
    pub cls_accuracy: Option<f64>,
    /// Share of flipped labeled samples whose corrected label `(y + ŷ)/2`
    /// puts at least as much mass on the true class as on any other class.
    /// Samples whose true class is open-set count as failures.
    pub correction_accuracy: Option<f64>,
    /// Confidence separating closed-set (positive) from open-set unlabeled
    /// samples.
    pub confidence_auc: Option<f64>,
    /// Share of flipped labeled samples whose prediction argmax is the true
    /// class.
    pub flipped_recovery: Option<f64>,
}

fn ratio(hits: usize, n: usize) -> Option<f64> {
    (n > 0).then(|| hits as f64 / n as f64)
}

pub fn curriculum_diagnostics<T: Scalar>(models: &ModelSet<T>, corpus: &Corpus) -> Result<Diagnostics, ShapeError> {
    let view = corpus.view();
    let probs = |x: &Array2<f64>| -> Result<Array2<f64>, ShapeError> {
        Ok(models.classify(&x.mapv(T::lit))?.mapv(|v| v.to_f64_lossy()))
    };
    Ok(diagnostics_from_probs(
        &probs(&view.labeled_x)?,
        &probs(&view.unlabeled_x)?,
        corpus,
    ))
}

/// Same quantities from precomputed classifier outputs on the labeled and
/// unlabeled parts of the corpus.
pub fn diagnostics_from_probs(p_l: &Array2<f64>, p_u: &Array2<f64>, corpus: &Corpus) -> Diagnostics {
    let view = corpus.view();
    let k = view.num_classes;

    let mut closed = 0;
    let mut correct = 0;
    for (p, rec) in p_l.rows().into_iter().chain(p_u.rows()).zip(&corpus.provenance) {
        if rec.true_class < k {
            closed += 1;
            correct += usize::from(argmax(p.iter().copied()) == rec.true_class);
        }
    }

    let mut flipped = 0;
    let mut corrected = 0;
    let mut recovered = 0;
    for (i, rec) in corpus.labeled_provenance().iter().enumerate() {
        if !rec.was_flipped {
            continue;
        }
        flipped += 1;
        if rec.true_class >= k {
            continue;
        }
        let p = p_l.row(i);
        let given = view.labeled_y[i];
        let mass = |c: usize| 0.5 * (p[c] + if c == given { 1.0 } else { 0.0 });
        let best = (0..k).map(mass).fold(f64::NEG_INFINITY, f64::max);
        corrected += usize::from(mass(rec.true_class) >= best);
        recovered += usize::from(argmax(p.iter().copied()) == rec.true_class);
    }

    let c_u = confidence_rows(p_u);
    let (mut pos, mut neg) = (Vec::new(), Vec::new());
    for (c, rec) in c_u.iter().zip(corpus.unlabeled_provenance()) {
        if rec.is_open_set {
            neg.push(*c);
        } else {
            pos.push(*c);
        }
    }

    Diagnostics {
        cls_accuracy: ratio(correct, closed),
        correction_accuracy: ratio(corrected, flipped),
        confidence_auc: roc_auc(&pos, &neg),
        flipped_recovery: ratio(recovered, flipped),
    }
}
