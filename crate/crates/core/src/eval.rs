//! Polygon detection metrics.
//!
//! Detections are matched one-to-one against ground truth greedily in
//! descending score order, using rasterized polygon IoU. This is an
//! IoU-threshold protocol, not DetEval; reports say so.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::geometry::{polygon_iou, Polygon, DEFAULT_IOU_RESOLUTION};
use crate::label::AnnotationRecord;

/// Name printed in metric reports.
pub const PROTOCOL: &str = "IoU-protocol";
pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub polygon: Polygon,
    /// Confidence in `[0, 1]`.
    pub score: f64,
}

impl Detection {
    pub fn new(polygon: Polygon, score: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::InvalidInput(format!("score must be in [0, 1], got {score}")));
        }
        Ok(Self { polygon, score })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchedPair {
    pub det: usize,
    pub gt: usize,
    pub iou: f64,
}

/// What happened to one detection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DetStatus {
    TruePositive {
        gt: usize,
        iou: f64,
    },
    /// Overlaps a DO-NOT-CARE region and is left out of the counts.
    Ignored {
        gt: usize,
    },
    FalsePositive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub ignored: usize,
    /// In matching order.
    pub matched: Vec<MatchedPair>,
    /// Indexed like the input detections.
    pub status: Vec<DetStatus>,
    /// Non-ignored ground truth left unmatched.
    pub missed: Vec<usize>,
}

/// IoU of two polygons, skipping the raster when bounding boxes are apart.
fn pair_iou(a: &Polygon, b: &Polygon, resolution: usize) -> Result<f64> {
    let (ba, bb) = (a.bounding_box(), b.bounding_box());
    if ba.x_rb < bb.x_tl || bb.x_rb < ba.x_tl || ba.y_rb < bb.y_tl || bb.y_rb < ba.y_tl {
        return Ok(0.0);
    }
    polygon_iou(a, b, resolution)
}

/// Greedy one-to-one matching.
///
/// For each detection (highest score first, ties by index) let `m` be the
/// unmatched non-ignored ground truth with the highest IoU and `q` the
/// ignored region with the highest IoU. The detection is ignored if `q`
/// clears the threshold and beats `m`; otherwise it matches `m` if `m` clears
/// the threshold, is ignored if `q` does, and is a false positive otherwise.
pub fn match_detections(
    dets: &[Detection],
    gts: &[AnnotationRecord],
    iou_thresh: f64,
    resolution: usize,
) -> Result<MatchResult> {
    if !(iou_thresh > 0.0 && iou_thresh < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "IoU threshold must be in (0, 1), got {iou_thresh}"
        )));
    }
    for (i, d) in dets.iter().enumerate() {
        if !(0.0..=1.0).contains(&d.score) {
            return Err(Error::InvalidInput(format!("score {} outside [0, 1]", d.score)).at_record(i));
        }
    }
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score));

    let mut gt_taken = vec![false; gts.len()];
    let mut status = vec![DetStatus::FalsePositive; dets.len()];
    let mut matched = Vec::new();
    let (mut tp, mut fp, mut ignored) = (0, 0, 0);
    for &d in &order {
        let mut best_m: Option<(usize, f64)> = None;
        let mut best_q: Option<(usize, f64)> = None;
        for (g, rec) in gts.iter().enumerate() {
            if !rec.ignore && gt_taken[g] {
                continue;
            }
            let iou = pair_iou(&dets[d].polygon, &rec.polygon, resolution).map_err(|e| e.at_record(d))?;
            let slot = if rec.ignore { &mut best_q } else { &mut best_m };
            if slot.is_none_or(|(_, v)| iou > v) {
                *slot = Some((g, iou));
            }
        }
        let m = best_m.filter(|&(_, v)| v >= iou_thresh);
        let q = best_q.filter(|&(_, v)| v >= iou_thresh);
        status[d] = match (m, q) {
            (Some((_, mv)), Some((qg, qv))) if qv > mv => DetStatus::Ignored { gt: qg },
            (Some((g, iou)), _) => DetStatus::TruePositive { gt: g, iou },
            (None, Some((qg, _))) => DetStatus::Ignored { gt: qg },
            (None, None) => DetStatus::FalsePositive,
        };
        match status[d] {
            DetStatus::TruePositive { gt, iou } => {
                gt_taken[gt] = true;
                matched.push(MatchedPair { det: d, gt, iou });
                tp += 1;
            }
            DetStatus::Ignored { .. } => ignored += 1,
            DetStatus::FalsePositive => fp += 1,
        }
    }
    let missed: Vec<usize> = (0..gts.len()).filter(|&g| !gts[g].ignore && !gt_taken[g]).collect();
    Ok(MatchResult {
        tp,
        fp,
        fn_: missed.len(),
        ignored,
        matched,
        status,
        missed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prf {
    pub recall: f64,
    pub precision: f64,
    pub f_measure: f64,
}

impl Prf {
    /// `0 / 0` counts as 0 for both ratios; F is 0 when `P + R = 0`.
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let recall = ratio(tp, tp + fn_);
        let precision = ratio(tp, tp + fp);
        let f_measure = if recall + precision == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            recall,
            precision,
            f_measure,
        }
    }
}

pub fn prf(m: &MatchResult) -> Prf {
    Prf::from_counts(m.tp, m.fp, m.fn_)
}

/// Counts for one area bucket `[lo, hi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BucketResult {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl BucketResult {
    pub fn prf(&self) -> Prf {
        Prf::from_counts(self.tp, self.fp, self.fn_)
    }
}

/// Area tertiles of the non-ignored ground truth, or no boundaries when
/// there is none.
pub fn auto_bucket_boundaries(gts: &[AnnotationRecord]) -> Vec<f64> {
    let mut areas: Vec<f64> = gts.iter().filter(|g| !g.ignore).map(|g| g.polygon.area()).collect();
    if areas.is_empty() {
        return Vec::new();
    }
    areas.sort_by(f64::total_cmp);
    let q = |p: f64| {
        // Linear interpolation between order statistics.
        let pos = p * (areas.len() - 1) as f64;
        let (i, frac) = (pos.floor() as usize, pos.fract());
        let j = (i + 1).min(areas.len() - 1);
        areas[i] + frac * (areas[j] - areas[i])
    };
    vec![q(1.0 / 3.0), q(2.0 / 3.0)]
}

fn bucket_names(n: usize) -> Vec<String> {
    match n {
        1 => vec!["all".into()],
        3 => vec!["small".into(), "middle".into(), "large".into()],
        _ => (0..n).map(|i| format!("b{i}")).collect(),
    }
}

fn bucket_of(area: f64, boundaries: &[f64]) -> usize {
    boundaries.iter().take_while(|&&b| area >= b).count()
}

/// Per-size-bucket counts. Ground truth and detections are bucketed by their
/// own polygon area; a matched pair whose two sides land in different buckets
/// counts as a false positive in the detection's bucket and a miss in the
/// ground truth's bucket.
pub fn bucketed_prf(
    dets: &[Detection],
    gts: &[AnnotationRecord],
    boundaries: &[f64],
    iou_thresh: f64,
    resolution: usize,
) -> Result<Vec<BucketResult>> {
    if boundaries.iter().any(|b| !b.is_finite()) || boundaries.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidConfig(format!(
            "bucket boundaries must be finite and ascending, got {boundaries:?}"
        )));
    }
    let m = match_detections(dets, gts, iou_thresh, resolution)?;
    let names = bucket_names(boundaries.len() + 1);
    let mut out: Vec<BucketResult> = names
        .into_iter()
        .enumerate()
        .map(|(i, name)| BucketResult {
            name,
            lo: if i == 0 { f64::NEG_INFINITY } else { boundaries[i - 1] },
            hi: boundaries.get(i).copied().unwrap_or(f64::INFINITY),
            tp: 0,
            fp: 0,
            fn_: 0,
        })
        .collect();
    for (d, st) in m.status.iter().enumerate() {
        let db = bucket_of(dets[d].polygon.area(), boundaries);
        match *st {
            DetStatus::TruePositive { gt, .. } => {
                let gb = bucket_of(gts[gt].polygon.area(), boundaries);
                if gb == db {
                    out[db].tp += 1;
                } else {
                    out[db].fp += 1;
                    out[gb].fn_ += 1;
                }
            }
            DetStatus::FalsePositive => out[db].fp += 1,
            DetStatus::Ignored { .. } => {}
        }
    }
    for &g in &m.missed {
        out[bucket_of(gts[g].polygon.area(), boundaries)].fn_ += 1;
    }
    Ok(out)
}

/// `key = value` summary followed by `bucket,recall,precision,f` rows.
pub fn format_report(m: &MatchResult, buckets: &[BucketResult], iou_thresh: f64, num_gt: usize) -> String {
    let p = prf(m);
    let mut s = String::new();
    let _ = writeln!(s, "protocol = {PROTOCOL}");
    let _ = writeln!(s, "iou_threshold = {iou_thresh}");
    let _ = writeln!(s, "detections = {}", m.status.len());
    let _ = writeln!(s, "ground_truth = {num_gt}");
    let _ = writeln!(s, "tp = {}", m.tp);
    let _ = writeln!(s, "fp = {}", m.fp);
    let _ = writeln!(s, "fn = {}", m.fn_);
    let _ = writeln!(s, "ignored_detections = {}", m.ignored);
    let _ = writeln!(s, "recall = {:.4}", p.recall);
    let _ = writeln!(s, "precision = {:.4}", p.precision);
    let _ = writeln!(s, "f_measure = {:.4}", p.f_measure);
    let _ = writeln!(s, "bucket,recall,precision,f");
    let _ = writeln!(s, "overall,{:.4},{:.4},{:.4}", p.recall, p.precision, p.f_measure);
    for b in buckets {
        let bp = b.prf();
        let _ = writeln!(s, "{},{:.4},{:.4},{:.4}", b.name, bp.recall, bp.precision, bp.f_measure);
    }
    s
}

/// Convenience wrapper with the default raster resolution.
pub fn evaluate(dets: &[Detection], gts: &[AnnotationRecord], iou_thresh: f64) -> Result<(MatchResult, Prf)> {
    let m = match_detections(dets, gts, iou_thresh, DEFAULT_IOU_RESOLUTION)?;
    let p = prf(&m);
    Ok((m, p))
}
