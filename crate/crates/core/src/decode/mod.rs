//! From directional heatmaps to polygons.
//!
//! Each heatmap is thinned by 1-D NMS along its own axis. A cell becomes a
//! contour candidate only when both thinned maps exceed `theta` there, which
//! discards structures that respond in a single direction (streaks, edges
//! of long lines). Candidates are then outlined with an alpha shape.

mod alpha;
mod nms;

pub use alpha::{alpha_shape, convex_hull, MIN_SHAPE_POINTS};
pub use nms::{directional_nms, TieRule};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::Detection;
use crate::geometry::{FloatGrid, Orientation, Point2, DEFAULT_IOU_RESOLUTION};

/// Which cells may become candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CandidateMode {
    /// Both NMS-thinned maps must exceed `theta`.
    #[default]
    Orthogonal,
    /// Only the NMS-thinned horizontal map is consulted.
    SingleDirection,
    /// No NMS; either raw map exceeding `theta` suffices.
    NoRescoring,
}

impl CandidateMode {
    pub fn as_str(self) -> &'static str {
        match self {
            CandidateMode::Orthogonal => "orthogonal",
            CandidateMode::SingleDirection => "single-direction",
            CandidateMode::NoRescoring => "no-rescoring",
        }
    }
}

impl std::str::FromStr for CandidateMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "orthogonal" => Ok(CandidateMode::Orthogonal),
            "single-direction" => Ok(CandidateMode::SingleDirection),
            "no-rescoring" => Ok(CandidateMode::NoRescoring),
            other => Err(Error::InvalidConfig(format!("unknown candidate mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodeConfig {
    pub theta: f64,
    pub nms_window: usize,
    pub tie_rule: TieRule,
    pub alpha_scale: f64,
    pub min_candidates: usize,
    /// Candidates closer than this (Chebyshev, in cells) share a region in
    /// [`decode_image`].
    pub cluster_gap: usize,
    pub iou_resolution: usize,
    pub mode: CandidateMode,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            theta: 0.5,
            nms_window: 3,
            tie_rule: TieRule::KeepAll,
            alpha_scale: 1.5,
            min_candidates: 4,
            cluster_gap: 2,
            iou_resolution: DEFAULT_IOU_RESOLUTION,
            mode: CandidateMode::Orthogonal,
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "theta must be in (0, 1), got {}",
                self.theta
            )));
        }
        if self.nms_window == 0 || self.nms_window.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!(
                "NMS window must be odd and positive, got {}",
                self.nms_window
            )));
        }
        if !(self.alpha_scale > 0.0) || !self.alpha_scale.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "alpha scale must be positive, got {}",
                self.alpha_scale
            )));
        }
        if self.min_candidates < MIN_SHAPE_POINTS {
            return Err(Error::InvalidConfig(format!(
                "min candidates must be at least {MIN_SHAPE_POINTS}, got {}",
                self.min_candidates
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub row: usize,
    pub col: usize,
    pub confidence: f64,
}

impl Candidate {
    /// Cell center in pixel coordinates.
    pub fn point(&self) -> Point2 {
        Point2::cell_center(self.row, self.col)
    }
}

/// Candidates in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct ContourCandidates {
    pub points: Vec<Candidate>,
    pub height: usize,
    pub width: usize,
}

impl ContourCandidates {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Candidate extraction. In the default mode a cell qualifies iff both
/// `NMS_H(hmap)` and `NMS_V(vmap)` exceed `theta` there; its confidence is
/// the smaller of the two.
pub fn rescore(hmap: &FloatGrid, vmap: &FloatGrid, cfg: &DecodeConfig) -> Result<ContourCandidates> {
    cfg.validate()?;
    if hmap.shape() != vmap.shape() {
        return Err(Error::InvalidGrid(format!(
            "Hmap {:?} vs Vmap {:?}",
            hmap.shape(),
            vmap.shape()
        )));
    }
    let (h, w) = hmap.shape();
    let theta = cfg.theta;
    let score: Box<dyn Fn(usize) -> Option<f64>> = match cfg.mode {
        CandidateMode::Orthogonal => {
            let hn = directional_nms(hmap, Orientation::Horizontal, cfg.nms_window, cfg.tie_rule)?;
            let vn = directional_nms(vmap, Orientation::Vertical, cfg.nms_window, cfg.tie_rule)?;
            Box::new(move |i| {
                let (a, b) = (hn.values()[i], vn.values()[i]);
                (a > theta && b > theta).then(|| a.min(b))
            })
        }
        CandidateMode::SingleDirection => {
            let hn = directional_nms(hmap, Orientation::Horizontal, cfg.nms_window, cfg.tie_rule)?;
            Box::new(move |i| {
                let a = hn.values()[i];
                (a > theta).then_some(a)
            })
        }
        CandidateMode::NoRescoring => Box::new(|i| {
            let (a, b) = (hmap.values()[i], vmap.values()[i]);
            (a > theta || b > theta).then(|| a.max(b))
        }),
    };
    let points = (0..h * w)
        .filter_map(|i| {
            score(i).map(|confidence| Candidate {
                row: i / w,
                col: i % w,
                confidence,
            })
        })
        .collect();
    Ok(ContourCandidates {
        points,
        height: h,
        width: w,
    })
}

/// Median over candidates of the distance to the nearest other candidate.
pub fn median_nn_distance(points: &[Point2]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    // Bucket points into cells so each search stays local.
    let (mut min_x, mut min_y, mut max_x, mut max_y) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for p in points {
        min_x = min_x.min(p.x);
        min_y = min_y.min(p.y);
        max_x = max_x.max(p.x);
        max_y = max_y.max(p.y);
    }
    let span = (max_x - min_x).max(max_y - min_y).max(f64::MIN_POSITIVE);
    let cells_per_side = (points.len() as f64).sqrt().ceil().max(1.0);
    let cell = span / cells_per_side;
    let key = |p: &Point2| {
        (
            ((p.x - min_x) / cell).floor() as i64,
            ((p.y - min_y) / cell).floor() as i64,
        )
    };
    let mut buckets: std::collections::HashMap<(i64, i64), Vec<usize>> = Default::default();
    for (i, p) in points.iter().enumerate() {
        buckets.entry(key(p)).or_default().push(i);
    }
    let mut nn: Vec<f64> = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let (kx, ky) = key(p);
            let mut best = f64::INFINITY;
            let mut ring = 0i64;
            // Once ring r is scanned, anything unscanned is at least
            // r * cell away.
            while best > (ring - 1).max(0) as f64 * cell && ring <= cells_per_side as i64 + 1 {
                for dx in -ring..=ring {
                    for dy in -ring..=ring {
                        if dx.abs() != ring && dy.abs() != ring {
                            continue;
                        }
                        if let Some(ids) = buckets.get(&(kx + dx, ky + dy)) {
                            for &j in ids {
                                if j != i {
                                    best = best.min(p.distance(&points[j]));
                                }
                            }
                        }
                    }
                }
                ring += 1;
            }
            best
        })
        .collect();
    nn.sort_by(f64::total_cmp);
    let m = nn.len() / 2;
    Some(if nn.len() % 2 == 1 {
        nn[m]
    } else {
        0.5 * (nn[m - 1] + nn[m])
    })
}

/// Result of decoding one region.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeOutcome {
    pub detection: Option<Detection>,
    pub candidates: ContourCandidates,
    /// Why no detection was produced, when that is the case.
    pub diagnostic: Option<String>,
}

/// Outlines a set of candidates, or explains why it cannot.
pub fn reconstruct(candidates: &[Candidate], cfg: &DecodeConfig) -> std::result::Result<Detection, String> {
    if candidates.len() < cfg.min_candidates {
        return Err(format!(
            "{} candidates, need at least {}",
            candidates.len(),
            cfg.min_candidates
        ));
    }
    let pts: Vec<Point2> = candidates.iter().map(Candidate::point).collect();
    let spacing = median_nn_distance(&pts).unwrap_or(1.0);
    let alpha = cfg.alpha_scale * spacing;
    match alpha_shape(&pts, alpha) {
        Ok(polygon) => {
            let score = candidates.iter().map(|c| c.confidence).sum::<f64>() / candidates.len() as f64;
            Ok(Detection {
                polygon,
                score: score.clamp(0.0, 1.0),
            })
        }
        Err(e) => Err(e.to_string()),
    }
}

/// Decodes a grid holding a single text region.
pub fn decode_region(hmap: &FloatGrid, vmap: &FloatGrid, cfg: &DecodeConfig) -> Result<DecodeOutcome> {
    let candidates = rescore(hmap, vmap, cfg)?;
    let (detection, diagnostic) = match reconstruct(&candidates.points, cfg) {
        Ok(d) => (Some(d), None),
        Err(msg) => (None, Some(msg)),
    };
    Ok(DecodeOutcome {
        detection,
        candidates,
        diagnostic,
    })
}

/// Groups candidates whose cells lie within `gap` of each other (Chebyshev
/// distance), as connected components. Groups come out ordered by their
/// first candidate in row-major order.
pub fn cluster_candidates(candidates: &[Candidate], gap: usize) -> Vec<Vec<Candidate>> {
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by_key(|&i| (candidates[i].row, candidates[i].col));
    let index: std::collections::HashMap<(usize, usize), usize> = order
        .iter()
        .map(|&i| ((candidates[i].row, candidates[i].col), i))
        .collect();
    let g = gap as i64;
    let mut seen = vec![false; candidates.len()];
    let mut groups = Vec::new();
    for &start in &order {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut stack = vec![start];
        let mut members = Vec::new();
        while let Some(i) = stack.pop() {
            members.push(i);
            let (r, c) = (candidates[i].row as i64, candidates[i].col as i64);
            for dr in -g..=g {
                for dc in -g..=g {
                    let (rr, cc) = (r + dr, c + dc);
                    if rr < 0 || cc < 0 {
                        continue;
                    }
                    if let Some(&j) = index.get(&(rr as usize, cc as usize)) {
                        if !seen[j] {
                            seen[j] = true;
                            stack.push(j);
                        }
                    }
                }
            }
        }
        members.sort_by_key(|&i| (candidates[i].row, candidates[i].col));
        groups.push(members.into_iter().map(|i| candidates[i]).collect());
    }
    groups
}

/// Reconstructs one detection per candidate cluster.
pub fn reconstruct_detections(candidates: &[Candidate], cfg: &DecodeConfig) -> Result<Vec<Detection>> {
    cfg.validate()?;
    Ok(cluster_candidates(candidates, cfg.cluster_gap)
        .iter()
        .filter_map(|group| reconstruct(group, cfg).ok())
        .collect())
}

/// Whole-image decoding: candidates are clustered into regions and each
/// region is outlined separately.
pub fn decode_image(
    hmap: &FloatGrid,
    vmap: &FloatGrid,
    cfg: &DecodeConfig,
) -> Result<(Vec<Detection>, ContourCandidates)> {
    let candidates = rescore(hmap, vmap, cfg)?;
    let dets = reconstruct_detections(&candidates.points, cfg)?;
    Ok((dets, candidates))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{polygon_iou, Polygon};
    use crate::label::contour_band_label;

    fn one_cell(h: f64, v: f64) -> (FloatGrid, FloatGrid) {
        (
            FloatGrid::new(1, 1, vec![h]).unwrap(),
            FloatGrid::new(1, 1, vec![v]).unwrap(),
        )
    }

    #[test]
    fn rescore_examples() {
        let cfg = DecodeConfig::default();
        let (h, v) = one_cell(0.8, 0.3);
        assert!(rescore(&h, &v, &cfg).unwrap().is_empty());
        let (h, v) = one_cell(0.8, 0.8);
        let c = rescore(&h, &v, &cfg).unwrap();
        assert_eq!(
            c.points,
            vec![Candidate {
                row: 0,
                col: 0,
                confidence: 0.8
            }]
        );
        let (h, v) = one_cell(0.4, 0.4);
        assert!(rescore(&h, &v, &cfg).unwrap().is_empty());
        let bad = FloatGrid::zeros(2, 1).unwrap();
        assert!(matches!(rescore(&h, &bad, &cfg), Err(Error::InvalidGrid(_))));
    }

    #[test]
    fn confidence_is_min_of_thinned_maps() {
        let h = FloatGrid::new(1, 3, vec![0.2, 0.9, 0.1]).unwrap();
        let v = FloatGrid::new(1, 3, vec![0.6, 0.7, 0.6]).unwrap();
        let c = rescore(&h, &v, &DecodeConfig::default()).unwrap();
        assert_eq!(
            c.points,
            vec![Candidate {
                row: 0,
                col: 1,
                confidence: 0.7
            }]
        );
    }

    #[test]
    fn band_round_trip() {
        let poly = Polygon::from_flat(&[8.0, 10.0, 40.0, 6.0, 52.0, 30.0, 30.0, 44.0, 10.0, 34.0]).unwrap();
        let band = FloatGrid::from_mask(&contour_band_label(&poly, 64, 64, 2.0).unwrap());
        let out = decode_region(&band, &band, &DecodeConfig::default()).unwrap();
        let det = out.detection.expect("detection");
        assert!(polygon_iou(&det.polygon, &poly, 256).unwrap() >= 0.85);
        assert_eq!(det.score, 1.0);
    }

    #[test]
    fn empty_maps_decode_to_nothing() {
        let z = FloatGrid::zeros(16, 16).unwrap();
        let out = decode_region(&z, &z, &DecodeConfig::default()).unwrap();
        assert!(out.detection.is_none() && out.diagnostic.is_some());
    }

    #[test]
    fn vertical_streak_only_passes_single_direction() {
        let streak = |cols: &[usize]| {
            FloatGrid::from_fn(32, 32, |r, c| {
                if cols.contains(&c) && (4..28).contains(&r) {
                    0.9
                } else {
                    0.0
                }
            })
            .unwrap()
        };
        let v = FloatGrid::zeros(32, 32).unwrap();
        let cfg = DecodeConfig::default();
        let single = DecodeConfig {
            mode: CandidateMode::SingleDirection,
            ..cfg
        };

        let h = streak(&[16]);
        let out = decode_region(&h, &v, &cfg).unwrap();
        assert!(out.candidates.is_empty() && out.detection.is_none());
        // One pixel wide: plenty of candidates, but they are collinear.
        let out = decode_region(&h, &v, &single).unwrap();
        assert_eq!(out.candidates.len(), 24);
        assert!(out.detection.is_none() && out.diagnostic.is_some());

        let h = streak(&[16, 17]);
        assert!(decode_region(&h, &v, &cfg).unwrap().detection.is_none());
        assert!(decode_region(&h, &v, &single).unwrap().detection.is_some());
    }

    #[test]
    fn image_decoding_separates_regions() {
        let a = Polygon::from_flat(&[4.0, 4.0, 30.0, 4.0, 30.0, 16.0, 4.0, 16.0]).unwrap();
        let b = Polygon::from_flat(&[36.0, 30.0, 60.0, 34.0, 58.0, 50.0, 34.0, 46.0]).unwrap();
        let mut mask = contour_band_label(&a, 64, 64, 2.0).unwrap();
        mask.union_with(&contour_band_label(&b, 64, 64, 2.0).unwrap()).unwrap();
        let band = FloatGrid::from_mask(&mask);
        let (dets, _) = decode_image(&band, &band, &DecodeConfig::default()).unwrap();
        assert_eq!(dets.len(), 2);
        for (det, src) in dets.iter().zip([&a, &b]) {
            assert!(polygon_iou(&det.polygon, src, 256).unwrap() >= 0.85);
        }
    }

    #[test]
    fn decode_is_deterministic() {
        let poly = Polygon::from_flat(&[5.0, 5.0, 25.0, 8.0, 20.0, 25.0]).unwrap();
        let band = FloatGrid::from_mask(&contour_band_label(&poly, 32, 32, 2.0).unwrap());
        let cfg = DecodeConfig::default();
        assert_eq!(
            decode_region(&band, &band, &cfg).unwrap(),
            decode_region(&band, &band, &cfg).unwrap()
        );
    }

    fn brute_median_nn(points: &[Point2]) -> f64 {
        let mut nn: Vec<f64> = points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                points
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(_, q)| p.distance(q))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        nn.sort_by(f64::total_cmp);
        let m = nn.len() / 2;
        if nn.len() % 2 == 1 {
            nn[m]
        } else {
            0.5 * (nn[m - 1] + nn[m])
        }
    }

    proptest::proptest! {
        #[test]
        fn median_spacing_matches_brute_force(
            raw in proptest::collection::vec((0.0f64..50.0, 0.0f64..50.0), 2..80),
            snap in proptest::bool::ANY,
        ) {
            let pts: Vec<Point2> = raw
                .iter()
                .map(|&(x, y)| if snap { Point2::new(x.round(), y.round()) } else { Point2::new(x, y) })
                .collect();
            proptest::prop_assert_eq!(median_nn_distance(&pts), Some(brute_median_nn(&pts)));
        }
    }

    #[test]
    fn median_spacing() {
        let pts: Vec<Point2> = (0..5).map(|i| Point2::new(i as f64 * 2.0, 0.0)).collect();
        assert_eq!(median_nn_distance(&pts), Some(2.0));
        assert_eq!(median_nn_distance(&pts[..1]), None);
    }

    #[test]
    fn config_validation() {
        let bad = DecodeConfig {
            theta: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = DecodeConfig {
            nms_window: 4,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn clusters_by_gap() {
        let c = |row, col| Candidate {
            row,
            col,
            confidence: 1.0,
        };
        let pts = [c(0, 0), c(0, 2), c(5, 5), c(0, 5)];
        let groups = cluster_candidates(&pts, 2);
        assert_eq!(groups.len(), 3);
        assert_eq!(groups[0], vec![c(0, 0), c(0, 2)]);
    }
}
