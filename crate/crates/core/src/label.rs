//! Training targets derived from polygon annotations.
//!
//! The contour label is a thin band just inside each polygon: foreground
//! cells whose distance to the nearest background cell is at most `band`
//! pixels. Both directional heatmaps are supervised with this same mask.
//! Proposal targets are the max-min boxes of the polygon vertices.

use crate::error::{Error, Result};
use crate::geometry::{euclidean_distance_transform, rasterize_polygon, AABox, BitMask, Polygon};

/// Band width used when callers do not choose one.
pub const DEFAULT_BAND: f64 = 2.0;

/// One annotated text instance.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationRecord {
    pub polygon: Polygon,
    /// DO-NOT-CARE region: excluded from positive supervision and from
    /// evaluation penalties.
    pub ignore: bool,
    pub transcription: Option<String>,
}

impl AnnotationRecord {
    pub fn new(polygon: Polygon) -> Self {
        Self {
            polygon,
            ignore: false,
            transcription: None,
        }
    }

    pub fn ignored(polygon: Polygon) -> Self {
        Self {
            polygon,
            ignore: true,
            transcription: None,
        }
    }
}

/// Cells of `poly`'s rasterization whose distance transform lies in
/// `(0, band]`.
pub fn contour_band_label(poly: &Polygon, height: usize, width: usize, band: f64) -> Result<BitMask> {
    if !(band > 0.0) || !band.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "band must be positive and finite, got {band}"
        )));
    }
    let fill = rasterize_polygon(poly, height, width)?;
    Ok(band_of_mask(&fill, band))
}

pub(crate) fn band_of_mask(fill: &BitMask, band: f64) -> BitMask {
    let dist = euclidean_distance_transform(fill);
    let (h, w) = fill.shape();
    BitMask::from_fn(h, w, |r, c| {
        let d = dist.get(r, c);
        d > 0.0 && d <= band
    })
    .expect("shape taken from an existing mask")
}

/// `(min x, min y, max x, max y)` over the polygon's vertices.
pub fn proposal_gt_box(poly: &Polygon) -> AABox {
    poly.bounding_box()
}

/// Per-image supervision.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    /// Union of contour bands of all non-ignored records.
    pub contour: BitMask,
    /// Proposal targets, one per non-ignored record, in record order.
    pub boxes: Vec<AABox>,
    /// Union of the rasterized ignored records.
    pub ignore: BitMask,
}

pub fn build_training_sample(
    records: &[AnnotationRecord],
    height: usize,
    width: usize,
    band: f64,
) -> Result<TrainingSample> {
    let mut contour = BitMask::empty(height, width)?;
    let mut ignore = BitMask::empty(height, width)?;
    let mut boxes = Vec::new();
    for (index, rec) in records.iter().enumerate() {
        if rec.ignore {
            let fill = rasterize_polygon(&rec.polygon, height, width).map_err(|e| e.at_record(index))?;
            ignore.union_with(&fill)?;
        } else {
            let label = contour_band_label(&rec.polygon, height, width, band).map_err(|e| e.at_record(index))?;
            contour.union_with(&label)?;
            boxes.push(proposal_gt_box(&rec.polygon));
        }
    }
    Ok(TrainingSample { contour, boxes, ignore })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{FloatGrid, Point2};
    use proptest::prelude::*;

    fn poly(coords: &[f64]) -> Polygon {
        Polygon::from_flat(coords).unwrap()
    }

    /// Independent band oracle: brute-force nearest background per cell.
    fn brute_band(fill: &BitMask, band: f64) -> BitMask {
        let (h, w) = fill.shape();
        BitMask::from_fn(h, w, |r, c| {
            if !fill.get(r, c) {
                return false;
            }
            let mut best = f64::INFINITY;
            for br in -1..=(h as i64) {
                for bc in -1..=(w as i64) {
                    let inside = br >= 0 && bc >= 0 && (br as usize) < h && (bc as usize) < w;
                    if inside && fill.get(br as usize, bc as usize) {
                        continue;
                    }
                    let d = ((br - r as i64) as f64).hypot((bc - c as i64) as f64);
                    best = best.min(d);
                }
            }
            best <= band
        })
        .unwrap()
    }

    #[test]
    fn centered_square_band_matches_oracle() {
        let sq = poly(&[5.0, 5.0, 15.0, 5.0, 15.0, 15.0, 5.0, 15.0]);
        let label = contour_band_label(&sq, 20, 20, 2.0).unwrap();
        let fill = rasterize_polygon(&sq, 20, 20).unwrap();
        assert_eq!(label, brute_band(&fill, 2.0));
        // 10x10 filled block minus its 6x6 core.
        assert_eq!(label.count_ones(), 100 - 36);
    }

    #[test]
    fn thin_strip_is_all_band() {
        let strip = poly(&[2.0, 4.0, 18.0, 4.0, 18.0, 7.0, 2.0, 7.0]);
        let label = contour_band_label(&strip, 12, 20, 2.0).unwrap();
        assert_eq!(label, rasterize_polygon(&strip, 12, 20).unwrap());
    }

    #[test]
    fn empty_raster_gives_empty_label() {
        let tiny = poly(&[0.1, 0.1, 0.3, 0.1, 0.3, 0.3]);
        assert!(contour_band_label(&tiny, 8, 8, 2.0).unwrap().is_clear());
    }

    #[test]
    fn nonpositive_band_rejected() {
        let sq = poly(&[0.0, 0.0, 4.0, 0.0, 4.0, 4.0]);
        assert!(contour_band_label(&sq, 8, 8, 0.0).is_err());
        assert!(contour_band_label(&sq, 8, 8, f64::NAN).is_err());
    }

    #[test]
    fn gt_box_examples() {
        let sq = poly(&[1.0, 2.0, 5.0, 2.0, 5.0, 6.0, 1.0, 6.0]);
        assert_eq!(proposal_gt_box(&sq).to_array(), [1.0, 2.0, 5.0, 6.0]);
        let tri = poly(&[0.0, 0.0, 4.0, 1.0, 2.0, 3.0]);
        assert_eq!(proposal_gt_box(&tri).to_array(), [0.0, 0.0, 4.0, 3.0]);
        let diamond = poly(&[2.0, 0.0, 4.0, 2.0, 2.0, 4.0, 0.0, 2.0]);
        assert_eq!(proposal_gt_box(&diamond).to_array(), [0.0, 0.0, 4.0, 4.0]);
    }

    #[test]
    fn training_sample_cases() {
        let sq = poly(&[2.0, 2.0, 10.0, 2.0, 10.0, 10.0, 2.0, 10.0]);
        let s = build_training_sample(&[AnnotationRecord::new(sq.clone())], 16, 16, 2.0).unwrap();
        assert_eq!(s.contour, contour_band_label(&sq, 16, 16, 2.0).unwrap());
        assert_eq!(s.boxes, vec![proposal_gt_box(&sq)]);
        assert!(s.ignore.is_clear());

        let s = build_training_sample(&[AnnotationRecord::ignored(sq.clone())], 16, 16, 2.0).unwrap();
        assert!(s.contour.is_clear());
        assert!(s.boxes.is_empty());
        assert_eq!(s.ignore, rasterize_polygon(&sq, 16, 16).unwrap());

        let other = poly(&[6.0, 6.0, 14.0, 6.0, 14.0, 14.0, 6.0, 14.0]);
        let recs = [AnnotationRecord::new(sq.clone()), AnnotationRecord::new(other.clone())];
        let s = build_training_sample(&recs, 16, 16, 2.0).unwrap();
        let mut expected = brute_band(&rasterize_polygon(&sq, 16, 16).unwrap(), 2.0);
        expected
            .union_with(&brute_band(&rasterize_polygon(&other, 16, 16).unwrap(), 2.0))
            .unwrap();
        assert_eq!(s.contour, expected);
    }

    #[test]
    fn record_index_is_reported() {
        let sq = poly(&[2.0, 2.0, 10.0, 2.0, 10.0, 10.0]);
        let recs = [AnnotationRecord::ignored(sq.clone()), AnnotationRecord::new(sq)];
        let err = build_training_sample(&recs, 16, 16, -1.0).unwrap_err();
        assert!(matches!(err, Error::Record { index: 1, .. }));
        assert!(matches!(err.root(), Error::InvalidConfig(_)));
    }

    fn arb_quad() -> impl Strategy<Value = Polygon> {
        (2.0f64..10.0, 2.0f64..10.0, 3.0f64..12.0, 3.0f64..12.0, -2.0f64..2.0).prop_map(|(x, y, w, h, skew)| {
            Polygon::new(vec![
                Point2::new(x + skew, y),
                Point2::new(x + w, y + skew.abs()),
                Point2::new(x + w - skew, y + h),
                Point2::new(x, y + h),
            ])
            .unwrap()
        })
    }

    proptest! {
        #[test]
        fn labelled_cells_lie_in_band(p in arb_quad()) {
            let label = contour_band_label(&p, 28, 28, 2.0).unwrap();
            let fill = rasterize_polygon(&p, 28, 28).unwrap();
            let dist: FloatGrid = euclidean_distance_transform(&fill);
            for (r, c) in label.ones() {
                prop_assert!(fill.get(r, c));
                prop_assert!(dist.get(r, c) > 0.0 && dist.get(r, c) <= 2.0);
            }
        }

        #[test]
        fn band_is_translation_equivariant(p in arb_quad(), dx in 0usize..4, dy in 0usize..4) {
            let a = contour_band_label(&p, 32, 32, 2.0).unwrap();
            let b = contour_band_label(&p.translated(dx as f64, dy as f64), 32, 32, 2.0).unwrap();
            for (r, c) in a.ones() {
                prop_assert!(b.get(r + dy, c + dx));
            }
            prop_assert_eq!(a.count_ones(), b.count_ones());
        }

        #[test]
        fn gt_box_contains_vertices(p in arb_quad()) {
            let b = proposal_gt_box(&p);
            for v in p.vertices() {
                prop_assert!(b.contains(*v));
            }
        }
    }
}
