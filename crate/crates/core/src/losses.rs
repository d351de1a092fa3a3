//! Training objective terms with analytic gradients, and a central-difference
//! gradient checker to validate them.

use crate::error::{Error, Result};
use crate::geometry::{AABox, BitMask, FloatGrid};

/// Probability clamp applied before every logarithm.
pub const PROB_EPS: f64 = 1e-7;

/// Smoothed IoU loss `-ln((I + 1) / (U + 1))` and its gradient with respect
/// to `pred`'s `[x_tl, y_tl, x_rb, y_rb]`.
///
/// Where a predicted edge coincides with the ground-truth edge the
/// intersection is not differentiable; the midpoint of the one-sided
/// derivatives is used there, which makes the gradient vanish at `pred == gt`.
pub fn iou_loss(pred: &AABox, gt: &AABox) -> (f64, [f64; 4]) {
    let (iw, ih) = pred.intersection_extent(gt);
    let inter = iw * ih;
    let (pw, ph) = (pred.width(), pred.height());
    let union = pw * ph + gt.area() - inter;
    let loss = -((inter + 1.0) / (union + 1.0)).ln();

    // d(intersection) / d(pred edge): nonzero only for edges that bound
    // the overlap.
    let mut d_inter = [0.0; 4];
    if iw > 0.0 && ih > 0.0 {
        let share = |p: f64, g: f64, outward_smaller: bool| -> f64 {
            // Fraction of the overlap edge owned by the prediction.
            if p == g {
                0.5
            } else if (p > g) == outward_smaller {
                1.0
            } else {
                0.0
            }
        };
        d_inter[0] = -ih * share(pred.x_tl, gt.x_tl, true);
        d_inter[1] = -iw * share(pred.y_tl, gt.y_tl, true);
        d_inter[2] = ih * share(pred.x_rb, gt.x_rb, false);
        d_inter[3] = iw * share(pred.y_rb, gt.y_rb, false);
    }
    let d_area = [-ph, -pw, ph, pw];
    let mut grad = [0.0; 4];
    for i in 0..4 {
        grad[i] = -d_inter[i] / (inter + 1.0) + (d_area[i] - d_inter[i]) / (union + 1.0);
    }
    (loss, grad)
}

fn check_grid_pair(pred: &FloatGrid, label: &BitMask, ignore: Option<&BitMask>) -> Result<()> {
    if pred.shape() != label.shape() {
        return Err(Error::InvalidGrid(format!(
            "prediction {:?} vs label {:?}",
            pred.shape(),
            label.shape()
        )));
    }
    if let Some(ig) = ignore {
        label.same_shape(ig)?;
    }
    Ok(())
}

/// Class-balanced binary cross-entropy over a heatmap.
///
/// Positives are weighted by `N_neg / N` and negatives by `N_pos / N`, with
/// counts taken over non-ignored cells. The per-cell terms are averaged over
/// those cells. When one class is absent the weights fall back to 1 (plain
/// BCE). Returns the loss and `d loss / d pred`; ignored cells and cells whose
/// prediction was clamped get zero gradient.
pub fn balanced_bce(pred: &FloatGrid, label: &BitMask, ignore: Option<&BitMask>) -> Result<(f64, FloatGrid)> {
    check_grid_pair(pred, label, ignore)?;
    let (h, w) = pred.shape();
    let active = |i: usize| ignore.is_none_or(|m| !m.bits()[i]);
    let (mut n_pos, mut n) = (0usize, 0usize);
    for (i, &y) in label.bits().iter().enumerate() {
        if active(i) {
            n += 1;
            n_pos += y as usize;
        }
    }
    let mut grad = vec![0.0; h * w];
    if n == 0 {
        return Ok((0.0, FloatGrid::new(h, w, grad)?));
    }
    let n_neg = n - n_pos;
    let (w_pos, w_neg) = if n_pos == 0 || n_neg == 0 {
        (1.0, 1.0)
    } else {
        (n_neg as f64 / n as f64, n_pos as f64 / n as f64)
    };
    let inv_n = 1.0 / n as f64;
    let mut total = 0.0;
    for (i, (&raw, &y)) in pred.values().iter().zip(label.bits()).enumerate() {
        if !active(i) {
            continue;
        }
        let p = raw.clamp(PROB_EPS, 1.0 - PROB_EPS);
        let clamped = p != raw;
        if y {
            total -= w_pos * p.ln();
            if !clamped {
                grad[i] = -w_pos / p * inv_n;
            }
        } else {
            total -= w_neg * (1.0 - p).ln();
            if !clamped {
                grad[i] = w_neg / (1.0 - p) * inv_n;
            }
        }
    }
    Ok((total * inv_n, FloatGrid::new(h, w, grad)?))
}

/// Mean elementwise smooth-L1 (Huber with transition `beta`).
pub fn smooth_l1(pred: &[f64], target: &[f64], beta: f64) -> Result<(f64, Vec<f64>)> {
    if pred.len() != target.len() {
        return Err(Error::InvalidInput(format!(
            "smooth-L1 length mismatch: {} vs {}",
            pred.len(),
            target.len()
        )));
    }
    if !(beta > 0.0) {
        return Err(Error::InvalidConfig(format!("beta must be positive, got {beta}")));
    }
    if pred.is_empty() {
        return Ok((0.0, Vec::new()));
    }
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(&p, &t)| {
            let d = p - t;
            if d.abs() < beta {
                loss += 0.5 * d * d / beta;
                d / beta / n
            } else {
                loss += d.abs() - 0.5 * beta;
                d.signum() / n
            }
        })
        .collect();
    Ok((loss / n, grad))
}

/// Binary cross-entropy of one probability; gradient is `d loss / d prob`.
pub fn cross_entropy(prob: f64, label: bool) -> (f64, f64) {
    let p = prob.clamp(PROB_EPS, 1.0 - PROB_EPS);
    let clamped = p != prob;
    if label {
        (-p.ln(), if clamped { 0.0 } else { -1.0 / p })
    } else {
        (-(1.0 - p).ln(), if clamped { 0.0 } else { 1.0 / (1.0 - p) })
    }
}

/// Balance weights of the six-term detector objective. The proposal
/// classification term always has weight 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub arpn_reg: f64,
    pub hcp: f64,
    pub vcp: f64,
    pub box_cls: f64,
    pub box_reg: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            arpn_reg: 1.0,
            hcp: 1.0,
            vcp: 1.0,
            box_cls: 1.0,
            box_reg: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossComponents {
    pub arpn_cls: f64,
    pub arpn_reg: f64,
    pub hcp: f64,
    pub vcp: f64,
    pub box_cls: f64,
    pub box_reg: f64,
}

pub fn combined_loss(c: &LossComponents, w: &LossWeights) -> Result<f64> {
    let parts = [
        ("arpn_cls", c.arpn_cls),
        ("arpn_reg", c.arpn_reg),
        ("hcp", c.hcp),
        ("vcp", c.vcp),
        ("box_cls", c.box_cls),
        ("box_reg", c.box_reg),
    ];
    for (name, v) in parts {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::InvalidInput(format!(
                "loss component {name} must be finite and non-negative, got {v}"
            )));
        }
    }
    let weights = [w.arpn_reg, w.hcp, w.vcp, w.box_cls, w.box_reg];
    if weights.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidConfig(format!(
            "loss weights must be finite and non-negative, got {weights:?}"
        )));
    }
    Ok(c.arpn_cls
        + w.arpn_reg * c.arpn_reg
        + w.hcp * c.hcp
        + w.vcp * c.vcp
        + w.box_cls * c.box_cls
        + w.box_reg * c.box_reg)
}

/// Outcome of comparing analytic and central-difference gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Largest `|analytic - numeric| / max(1, |analytic|, |numeric|)`.
    pub max_rel_error: f64,
    pub per_param: Vec<f64>,
    pub step: f64,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error < tol
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / 1f64.max(analytic.abs()).max(numeric.abs())
}

/// Checks the analytic gradient returned by `eval` against central finite
/// differences at `params`.
///
/// `eval` must be deterministic and return `(loss, gradient)` with one
/// gradient entry per parameter. Callers keep `params` at least `10 * step`
/// away from kinks of piecewise-smooth losses.
pub fn gradient_check<F>(mut eval: F, params: &[f64], step: f64) -> Result<GradCheckReport>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    if !(step > 0.0) {
        return Err(Error::InvalidConfig(format!("step must be positive, got {step}")));
    }
    let (loss, analytic) = eval(params)?;
    if !loss.is_finite() {
        return Err(Error::NumericalError(format!("loss is {loss} at the base point")));
    }
    if analytic.len() != params.len() {
        return Err(Error::InvalidInput(format!(
            "{} gradient entries for {} parameters",
            analytic.len(),
            params.len()
        )));
    }
    let mut probe = params.to_vec();
    let mut per_param = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        probe[i] = params[i] + step;
        let (up, _) = eval(&probe)?;
        probe[i] = params[i] - step;
        let (down, _) = eval(&probe)?;
        probe[i] = params[i];
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NumericalError(format!(
                "non-finite loss while perturbing parameter {i}"
            )));
        }
        let numeric = (up - down) / (2.0 * step);
        per_param.push(relative_error(analytic[i], numeric));
    }
    let max_rel_error = per_param.iter().copied().fold(0.0, f64::max);
    Ok(GradCheckReport {
        max_rel_error,
        per_param,
        step,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::box_iou;
    use proptest::prelude::*;

    fn bx(c: [f64; 4]) -> AABox {
        AABox::from_array(c).unwrap()
    }

    #[test]
    fn iou_loss_examples() {
        let a = bx([0.0, 0.0, 2.0, 2.0]);
        let (l, g) = iou_loss(&a, &a);
        assert_eq!(l, 0.0);
        assert_eq!(g, [0.0; 4]);

        let (l, _) = iou_loss(&a, &bx([1.0, 1.0, 3.0, 3.0]));
        assert!((l - 4f64.ln()).abs() < 1e-12);

        let (l, _) = iou_loss(&bx([0.0, 0.0, 1.0, 1.0]), &bx([3.0, 0.0, 4.0, 1.0]));
        assert!((l - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn iou_loss_gradient_directions() {
        // Prediction too wide on the right: pulling x_rb left helps.
        let (_, g) = iou_loss(&bx([0.0, 0.0, 6.0, 4.0]), &bx([0.0, 0.0, 4.0, 4.0]));
        assert!(g[2] > 0.0);
        // Too narrow on the right: pushing x_rb right helps.
        let (_, g) = iou_loss(&bx([0.0, 0.0, 3.0, 4.0]), &bx([0.0, 0.0, 4.0, 4.0]));
        assert!(g[2] < 0.0);
    }

    #[test]
    fn disjoint_boxes_only_feel_their_own_area() {
        let pred = bx([0.0, 0.0, 2.0, 3.0]);
        let (l, g) = iou_loss(&pred, &bx([10.0, 10.0, 12.0, 12.0]));
        let u1: f64 = 6.0 + 4.0 + 1.0;
        assert!((l - u1.ln()).abs() < 1e-12);
        assert_eq!(g, [-3.0 / u1, -2.0 / u1, 3.0 / u1, 2.0 / u1]);
    }

    #[test]
    fn bce_examples() {
        let label = BitMask::new(1, 2, vec![true, false]).unwrap();
        let p = FloatGrid::new(1, 2, vec![0.5, 0.5]).unwrap();
        let (l, g) = balanced_bce(&p, &label, None).unwrap();
        assert!((l - 0.5 * 2f64.ln()).abs() < 1e-12);
        assert!(g.get(0, 0) < 0.0 && g.get(0, 1) > 0.0);

        let perfect = FloatGrid::new(1, 2, vec![1.0 - PROB_EPS, PROB_EPS]).unwrap();
        let (l, _) = balanced_bce(&perfect, &label, None).unwrap();
        assert!(l < 1e-6);

        let all = BitMask::new(1, 2, vec![true, true]).unwrap();
        let (l, g) = balanced_bce(&p, &label, Some(&all)).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bce_single_class_falls_back_to_plain() {
        let label = BitMask::new(1, 2, vec![true, true]).unwrap();
        let p = FloatGrid::new(1, 2, vec![0.5, 0.25]).unwrap();
        let (l, _) = balanced_bce(&p, &label, None).unwrap();
        assert!((l - 0.5 * (-(0.5f64.ln()) - 0.25f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn bce_shape_mismatch() {
        let label = BitMask::new(1, 2, vec![true, false]).unwrap();
        let p = FloatGrid::new(2, 1, vec![0.5, 0.5]).unwrap();
        assert!(matches!(balanced_bce(&p, &label, None), Err(Error::InvalidGrid(_))));
    }

    #[test]
    fn bce_positive_gradient_sign_at_extremes() {
        let label = BitMask::new(1, 3, vec![true, false, false]).unwrap();
        let p = FloatGrid::new(1, 3, vec![0.999, 0.001, 0.3]).unwrap();
        let (_, g) = balanced_bce(&p, &label, None).unwrap();
        assert!(g.get(0, 0) < 0.0);
        assert!(g.get(0, 1) > 0.0 && g.get(0, 2) > 0.0);
    }

    #[test]
    fn smooth_l1_examples() {
        assert_eq!(smooth_l1(&[1.0, 2.0], &[1.0, 2.0], 1.0).unwrap().0, 0.0);
        assert!((smooth_l1(&[0.5], &[0.0], 1.0).unwrap().0 - 0.125).abs() < 1e-15);
        assert!((smooth_l1(&[2.0], &[0.0], 1.0).unwrap().0 - 1.5).abs() < 1e-15);
        assert!(matches!(smooth_l1(&[1.0], &[], 1.0), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn cross_entropy_examples() {
        assert!(cross_entropy(1.0 - PROB_EPS, true).0 < 1e-6);
        assert!((cross_entropy(0.5, true).0 - 2f64.ln()).abs() < 1e-15);
        assert!((cross_entropy(0.5, false).0 - 2f64.ln()).abs() < 1e-15);
        let (l, _) = cross_entropy(0.0, true);
        assert!(l.is_finite() && (l + PROB_EPS.ln()).abs() < 1e-9);
    }

    #[test]
    fn combined_loss_examples() {
        let w = LossWeights::default();
        assert_eq!(combined_loss(&LossComponents::default(), &w).unwrap(), 0.0);
        let ones = LossComponents {
            arpn_cls: 1.0,
            arpn_reg: 1.0,
            hcp: 1.0,
            vcp: 1.0,
            box_cls: 1.0,
            box_reg: 1.0,
        };
        assert_eq!(combined_loss(&ones, &w).unwrap(), 6.0);
        let only = LossComponents {
            hcp: 2.0,
            ..Default::default()
        };
        let half = LossWeights { hcp: 0.5, ..w };
        assert_eq!(combined_loss(&only, &half).unwrap(), 1.0);
        let neg = LossComponents {
            vcp: -1.0,
            ..Default::default()
        };
        assert!(matches!(combined_loss(&neg, &w), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn gradient_check_of_constant_and_quadratic() {
        let r = gradient_check(|_| Ok((3.0, vec![0.0, 0.0])), &[1.0, 2.0], 1e-5).unwrap();
        assert_eq!(r.max_rel_error, 0.0);
        let r = gradient_check(
            |p| Ok((p[0] * p[0] + 3.0 * p[1], vec![2.0 * p[0], 3.0])),
            &[0.7, -1.0],
            1e-5,
        )
        .unwrap();
        assert!(r.passes(1e-8));
        let err = gradient_check(|p| Ok((1.0 / (p[0] - 1.0), vec![0.0])), &[1.0], 1e-5).unwrap_err();
        assert!(matches!(err, Error::NumericalError(_)));
    }

    proptest! {
        #[test]
        fn iou_loss_symmetric_and_nonnegative(
            a in (0.0f64..10.0, 0.0f64..10.0, 0.1f64..10.0, 0.1f64..10.0),
            b in (0.0f64..10.0, 0.0f64..10.0, 0.1f64..10.0, 0.1f64..10.0),
        ) {
            let pa = bx([a.0, a.1, a.0 + a.2, a.1 + a.3]);
            let pb = bx([b.0, b.1, b.0 + b.2, b.1 + b.3]);
            let (lab, _) = iou_loss(&pa, &pb);
            let (lba, _) = iou_loss(&pb, &pa);
            prop_assert!(lab >= 0.0);
            prop_assert!((lab - lba).abs() < 1e-12);
            if pa != pb {
                prop_assert!(lab > 0.0);
            }
        }

        #[test]
        fn smoothing_gap_shrinks_with_scale(
            a in (0.0f64..10.0, 0.0f64..10.0, 1.0f64..10.0, 1.0f64..10.0),
            d in (-0.9f64..0.9, -0.9f64..0.9, 0.2f64..3.0, 0.2f64..3.0),
        ) {
            let pa = bx([a.0, a.1, a.0 + a.2, a.1 + a.3]);
            let (x, y) = (a.0 + d.0 * a.2, a.1 + d.1 * a.3);
            let pb = bx([x, y, x + d.2 * a.2, y + d.3 * a.3]);
            let gap = |s: f64| {
                let (p, g) = (pa.scaled(s), pb.scaled(s));
                -box_iou(&p, &g).ln() - iou_loss(&p, &g).0
            };
            let mut prev = f64::INFINITY;
            for s in [0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0] {
                let g = gap(s);
                prop_assert!(g >= -1e-12);
                prop_assert!(g <= prev + 1e-12, "gap grew at scale {s}: {prev} -> {g}");
                prev = g;
            }
        }

        #[test]
        fn combined_loss_is_linear(x in 0.0f64..5.0, y in 0.0f64..5.0, w in 0.0f64..3.0) {
            let weights = LossWeights { box_reg: w, ..Default::default() };
            let at = |v: f64| combined_loss(&LossComponents { box_reg: v, arpn_cls: 1.0, ..Default::default() }, &weights).unwrap();
            prop_assert!((at(x + y) - (at(x) + at(y) - at(0.0))).abs() < 1e-12);
        }

        #[test]
        fn box_iou_scale_invariant(
            a in (0.0f64..10.0, 0.0f64..10.0, 0.1f64..10.0, 0.1f64..10.0),
            b in (0.0f64..10.0, 0.0f64..10.0, 0.1f64..10.0, 0.1f64..10.0),
            s in prop::sample::select(vec![0.1, 1.0, 10.0, 1000.0]),
        ) {
            let pa = bx([a.0, a.1, a.0 + a.2, a.1 + a.3]);
            let pb = bx([b.0, b.1, b.0 + b.2, b.1 + b.3]);
            prop_assert!((box_iou(&pa, &pb) - box_iou(&pb, &pa)).abs() == 0.0);
            prop_assert!((box_iou(&pa.scaled(s), &pb.scaled(s)) - box_iou(&pa, &pb)).abs() < 1e-12);
        }
    }
}
