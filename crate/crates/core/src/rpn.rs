//! Point-set proposal geometry.
//!
//! A proposal box spawns a center point plus corner (and optionally edge
//! midpoint) points. Predicted offsets, scaled by the box size, move each
//! point; the refined box is the max-min extent of the moved points, clamped
//! to contain the moved center. Since offsets are relative to the box size,
//! the same offsets describe the same relative shape at any scale.

use crate::error::{Error, Result};
use crate::geometry::{box_iou, AABox, Point2};
use crate::losses::iou_loss;

/// Point count used when callers do not choose one.
pub const DEFAULT_POINT_COUNT: usize = 9;

#[derive(Debug, Clone, PartialEq)]
pub struct PredefinedPoints {
    n: usize,
    points: Vec<Point2>,
    source_box: AABox,
}

impl PredefinedPoints {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Center first, then boundary points.
    pub fn points(&self) -> &[Point2] {
        &self.points
    }

    pub fn source_box(&self) -> &AABox {
        &self.source_box
    }

    pub fn center(&self) -> Point2 {
        self.points[0]
    }
}

/// Per-point offsets `(dx, dy)` in units of the source box width and height.
#[derive(Debug, Clone, PartialEq)]
pub struct OffsetSet {
    deltas: Vec<(f64, f64)>,
}

impl OffsetSet {
    pub fn new(deltas: Vec<(f64, f64)>) -> Result<Self> {
        if deltas.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(Error::InvalidInput("offsets must be finite".into()));
        }
        Ok(Self { deltas })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            deltas: vec![(0.0, 0.0); n],
        }
    }

    pub fn deltas(&self) -> &[(f64, f64)] {
        &self.deltas
    }

    pub fn len(&self) -> usize {
        self.deltas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.deltas.is_empty()
    }
}

/// Lays out `n` points on `bx`: center, then top-left, top-right,
/// bottom-right, bottom-left, and for `n = 9` the top, right, bottom and left
/// edge midpoints.
pub fn make_predefined_points(bx: &AABox, n: usize) -> Result<PredefinedPoints> {
    bx.validate()?;
    if n != 5 && n != 9 {
        return Err(Error::InvalidConfig(format!("point count must be 5 or 9, got {n}")));
    }
    let c = bx.center();
    let mut points = vec![
        c,
        Point2::new(bx.x_tl, bx.y_tl),
        Point2::new(bx.x_rb, bx.y_tl),
        Point2::new(bx.x_rb, bx.y_rb),
        Point2::new(bx.x_tl, bx.y_rb),
    ];
    if n == 9 {
        points.extend([
            Point2::new(c.x, bx.y_tl),
            Point2::new(bx.x_rb, c.y),
            Point2::new(c.x, bx.y_rb),
            Point2::new(bx.x_tl, c.y),
        ]);
    }
    Ok(PredefinedPoints {
        n,
        points,
        source_box: *bx,
    })
}

pub fn refine_points(p: &PredefinedPoints, offsets: &OffsetSet) -> Result<Vec<Point2>> {
    if offsets.len() != p.n {
        return Err(Error::InvalidConfig(format!(
            "{} offsets for {} points",
            offsets.len(),
            p.n
        )));
    }
    let (wc, hc) = (p.source_box.width(), p.source_box.height());
    Ok(p.points
        .iter()
        .zip(offsets.deltas())
        .map(|(pt, (dx, dy))| Point2::new(pt.x + wc * dx, pt.y + hc * dy))
        .collect())
}

/// Max-min extent of `refined`, grown if needed to contain `center`.
pub fn bound_points(refined: &[Point2], center: Point2) -> Result<AABox> {
    let idx = extreme_indices(refined)?;
    Ok(AABox {
        x_tl: refined[idx[0]].x.min(center.x),
        y_tl: refined[idx[1]].y.min(center.y),
        x_rb: refined[idx[2]].x.max(center.x),
        y_rb: refined[idx[3]].y.max(center.y),
    })
}

/// Indices of the points attaining min x, min y, max x, max y; the lowest
/// index wins ties.
fn extreme_indices(pts: &[Point2]) -> Result<[usize; 4]> {
    if pts.is_empty() {
        return Err(Error::InvalidInput("no points to bound".into()));
    }
    let mut idx = [0usize; 4];
    for (i, p) in pts.iter().enumerate().skip(1) {
        if p.x < pts[idx[0]].x {
            idx[0] = i;
        }
        if p.y < pts[idx[1]].y {
            idx[1] = i;
        }
        if p.x > pts[idx[2]].x {
            idx[2] = i;
        }
        if p.y > pts[idx[3]].y {
            idx[3] = i;
        }
    }
    Ok(idx)
}

/// Result of [`fit_proposal`].
#[derive(Debug, Clone, PartialEq)]
pub struct ProposalFit {
    pub final_box: AABox,
    pub offsets: OffsetSet,
    /// IoU loss before each update.
    pub losses: Vec<f64>,
    /// Box IoU with the target before each update.
    pub ious: Vec<f64>,
}

/// Fits point offsets on `init` to `gt` by plain gradient descent on the IoU
/// loss of the bounded box.
///
/// The max-min bounding is piecewise linear; each box edge passes its
/// gradient to the single point that attains it (lowest index on ties).
/// The center takes part in the max-min, so the center clamp never binds.
pub fn fit_proposal(init: &AABox, gt: &AABox, n: usize, lr: f64, steps: usize) -> Result<ProposalFit> {
    if !(lr > 0.0) || !lr.is_finite() {
        return Err(Error::InvalidConfig(format!("lr must be positive, got {lr}")));
    }
    if steps == 0 {
        return Err(Error::InvalidConfig("steps must be at least 1".into()));
    }
    gt.validate()?;
    let p = make_predefined_points(init, n)?;
    let (wc, hc) = (init.width(), init.height());
    let mut deltas = vec![(0.0f64, 0.0f64); n];
    let mut losses = Vec::with_capacity(steps);
    let mut ious = Vec::with_capacity(steps);
    for _ in 0..steps {
        let refined = refine_points(&p, &OffsetSet { deltas: deltas.clone() })?;
        let bx = bound_points(&refined, refined[0])?;
        let (loss, g) = iou_loss(&bx, gt);
        losses.push(loss);
        ious.push(box_iou(&bx, gt));
        let idx = extreme_indices(&refined)?;
        deltas[idx[0]].0 -= lr * g[0] * wc;
        deltas[idx[1]].1 -= lr * g[1] * hc;
        deltas[idx[2]].0 -= lr * g[2] * wc;
        deltas[idx[3]].1 -= lr * g[3] * hc;
        if deltas.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(Error::NumericalError("offsets diverged".into()));
        }
    }
    let offsets = OffsetSet { deltas };
    let refined = refine_points(&p, &offsets)?;
    let final_box = bound_points(&refined, refined[0])?;
    Ok(ProposalFit {
        final_box,
        offsets,
        losses,
        ious,
    })
}
