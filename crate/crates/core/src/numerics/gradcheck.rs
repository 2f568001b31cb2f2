use ndarray::Array2;

use super::ParamStore;
use crate::Scalar;

/// Settings for a central-difference gradient check.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckOptions {
    pub step: f64,
    /// Maximum allowed relative error per block.
    pub tolerance: f64,
    /// Denominator floor for the relative error, so that gradients that are
    /// zero on both sides are not compared relative to zero.
    pub abs_floor: f64,
    /// Smallest distance from any hinge argument to its kink at the base
    /// point, when the checked function contains hinges.
    pub kink_gap: Option<f64>,
    /// Checks whose `kink_gap` falls below this are excluded.
    pub kink_margin: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            tolerance: 1e-4,
            abs_floor: 1e-5,
            kink_gap: None,
            kink_margin: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockReport {
    pub name: String,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub blocks: Vec<BlockReport>,
    /// Set when the base point sat within the kink margin; no comparison ran.
    pub excluded: bool,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        !self.excluded && self.blocks.iter().all(|b| b.max_rel_err <= self.tolerance)
    }

    pub fn max_rel_err(&self) -> f64 {
        self.blocks.iter().map(|b| b.max_rel_err).fold(0.0, f64::max)
    }
}

fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares the gradient already accumulated in `store` against central
/// differences of `loss`, one block at a time.
pub fn check_gradients<T, F>(store: &mut ParamStore<T>, mut loss: F, opts: &GradCheckOptions) -> GradCheckReport
where
    T: Scalar,
    F: FnMut(&ParamStore<T>) -> T,
{
    if opts.kink_gap.is_some_and(|g| g < opts.kink_margin) {
        return GradCheckReport {
            blocks: Vec::new(),
            excluded: true,
            tolerance: opts.tolerance,
        };
    }
    let h = T::lit(opts.step);
    let two_h = T::lit(2.0 * opts.step);
    let ids: Vec<_> = (0..store.len()).map(super::ParamId).collect();
    let mut blocks = Vec::with_capacity(ids.len());
    for id in ids {
        let analytic = store.grad(id).clone();
        let shape = analytic.dim();
        let mut max_rel = 0.0_f64;
        let mut max_abs = 0.0_f64;
        for r in 0..shape.0 {
            for c in 0..shape.1 {
                let orig = store.value(id)[[r, c]];
                store.value_mut(id)[[r, c]] = orig + h;
                let up = loss(store);
                store.value_mut(id)[[r, c]] = orig - h;
                let down = loss(store);
                store.value_mut(id)[[r, c]] = orig;
                let numeric = ((up - down) / two_h).to_f64_lossy();
                let a = analytic[[r, c]].to_f64_lossy();
                max_abs = max_abs.max((a - numeric).abs());
                max_rel = max_rel.max(rel_err(a, numeric, opts.abs_floor));
            }
        }
        blocks.push(BlockReport {
            name: store.param(id).name.clone(),
            max_rel_err: max_rel,
            max_abs_err: max_abs,
        });
    }
    GradCheckReport {
        blocks,
        excluded: false,
        tolerance: opts.tolerance,
    }
}

/// Same comparison for the gradient with respect to an input array.
pub fn check_input_gradient<T, F>(
    name: &str,
    input: &Array2<T>,
    analytic: &Array2<T>,
    mut loss: F,
    opts: &GradCheckOptions,
) -> BlockReport
where
    T: Scalar,
    F: FnMut(&Array2<T>) -> T,
{
    let h = T::lit(opts.step);
    let two_h = T::lit(2.0 * opts.step);
    let mut x = input.clone();
    let mut max_rel = 0.0_f64;
    let mut max_abs = 0.0_f64;
    for idx in 0..x.len() {
        let (r, c) = (idx / x.ncols(), idx % x.ncols());
        let orig = x[[r, c]];
        x[[r, c]] = orig + h;
        let up = loss(&x);
        x[[r, c]] = orig - h;
        let down = loss(&x);
        x[[r, c]] = orig;
        let numeric = ((up - down) / two_h).to_f64_lossy();
        let a = analytic[[r, c]].to_f64_lossy();
        max_abs = max_abs.max((a - numeric).abs());
        max_rel = max_rel.max(rel_err(a, numeric, opts.abs_floor));
    }
    BlockReport {
        name: name.to_string(),
        max_rel_err: max_rel,
        max_abs_err: max_abs,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn quadratic_matches_to_machine_precision() {
        let mut s = ParamStore::<f64>::new();
        let w = array![[0.5, -1.5, 2.0], [3.0, 0.25, -0.75]];
        let id = s.add("w", w.clone());
        s.accumulate(id, &(&w * 2.0));
        let report = check_gradients(
            &mut s,
            |s| s.value(id).mapv(|x| x * x).sum(),
            &GradCheckOptions::default(),
        );
        assert!(report.passed());
        assert!(report.max_rel_err() < 1e-9, "{report:?}");
    }

    #[test]
    fn wrong_gradient_is_caught() {
        let mut s = ParamStore::<f64>::new();
        let id = s.add("w", array![[1.0, 2.0]]);
        s.accumulate(id, &array![[2.0, 3.0]]);
        let report = check_gradients(
            &mut s,
            |s| s.value(id).mapv(|x| x * x).sum(),
            &GradCheckOptions::default(),
        );
        assert!(!report.passed());
    }

    #[test]
    fn kink_margin_excludes_point() {
        let mut s = ParamStore::<f64>::new();
        // hinge max(0, 1 + w) evaluated exactly at w = -1
        let id = s.add("w", array![[-1.0]]);
        let opts = GradCheckOptions {
            kink_gap: Some((1.0_f64 + -1.0).abs()),
            ..Default::default()
        };
        let report = check_gradients(&mut s, |s| (1.0 + s.value(id)[[0, 0]]).max(0.0), &opts);
        assert!(report.excluded);
        assert!(!report.passed());
    }

    #[test]
    fn input_gradient_check() {
        let x = array![[1.0_f64, -2.0]];
        let analytic = array![[3.0 * 1.0, 3.0 * 4.0]];
        let rep = check_input_gradient(
            "x",
            &x,
            &analytic,
            |x| x[[0, 0]] * 3.0 + x[[0, 1]].powi(3) / 2.0 * 1.0,
            &GradCheckOptions::default(),
        );
        // d/dx1 of x^3/2 at -2 is 6, not 12
        assert!(rep.max_rel_err > 0.1);
        let analytic = array![[3.0, 6.0]];
        let rep = check_input_gradient(
            "x",
            &x,
            &analytic,
            |x| x[[0, 0]] * 3.0 + x[[0, 1]].powi(3) / 2.0,
            &GradCheckOptions::default(),
        );
        assert!(rep.max_rel_err < 1e-8);
    }
}
