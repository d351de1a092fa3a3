use super::{edge_crossing, on_boundary, BitMask, Point2, Polygon};
use crate::error::{Error, Result};

/// Grid resolution used for polygon IoU unless a caller overrides it.
pub const DEFAULT_IOU_RESOLUTION: usize = 256;

/// Rasterizes `poly` onto a `height × width` grid: a cell is set iff its
/// center lies inside the polygon (boundary inclusive, even-odd rule).
///
/// Scanline fill; produces exactly the cells for which
/// [`point_in_polygon`](super::point_in_polygon) holds at the cell center.
pub fn rasterize_polygon(poly: &Polygon, height: usize, width: usize) -> Result<BitMask> {
    let mut mask = BitMask::empty(height, width)?;
    let bbox = poly.bounding_box();
    // Rows whose centers can touch the polygon.
    let r0 = ((bbox.y_tl - 0.5).ceil().max(0.0)) as usize;
    let r1 = (bbox.y_rb - 0.5).floor();
    if r1 < 0.0 {
        return Ok(mask);
    }
    let r1 = (r1 as usize).min(height - 1);
    let mut xs = Vec::new();
    for r in r0..=r1 {
        let y = r as f64 + 0.5;
        xs.clear();
        xs.extend(poly.edges().filter_map(|(a, b)| edge_crossing(a, b, y)));
        xs.sort_by(|a, b| a.total_cmp(b));
        // Centers in [xs[2k], xs[2k+1]) have an odd number of crossings to
        // their right.
        for pair in xs.chunks_exact(2) {
            let mut c = (pair[0] - 0.5).floor().clamp(0.0, width as f64) as usize;
            while c < width && (c as f64 + 0.5) < pair[0] {
                c += 1;
            }
            while c < width && (c as f64 + 0.5) < pair[1] {
                mask.set(r, c, true);
                c += 1;
            }
        }
        mark_boundary_cells(poly, &mut mask, r);
    }
    Ok(mask)
}

/// Sets cells in row `r` whose centers lie exactly on the polygon outline.
fn mark_boundary_cells(poly: &Polygon, mask: &mut BitMask, r: usize) {
    let y = r as f64 + 0.5;
    let width = mask.width();
    let check = |c: f64, mask: &mut BitMask| {
        if c >= 0.0 && c < width as f64 {
            let col = c as usize;
            if !mask.get(r, col) && on_boundary(Point2::cell_center(r, col), poly) {
                mask.set(r, col, true);
            }
        }
    };
    for (a, b) in poly.edges() {
        if a.y == y && b.y == y {
            let lo = (a.x.min(b.x) - 0.5).ceil().max(0.0);
            let hi = (a.x.max(b.x) - 0.5).floor().min(width as f64 - 1.0);
            let mut c = lo;
            while c <= hi {
                check(c, mask);
                c += 1.0;
            }
        } else if y >= a.y.min(b.y) && y <= a.y.max(b.y) {
            let x = a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y);
            let c = (x - 0.5).round();
            check(c, mask);
        }
    }
}

/// IoU of two polygons measured on a shared raster.
///
/// The joint bounding box is scaled so that its larger side spans
/// `resolution` cells; both polygons are rasterized there and the cell counts
/// compared. Identical polygons give exactly 1, disjoint ones 0.
pub fn polygon_iou(a: &Polygon, b: &Polygon, resolution: usize) -> Result<f64> {
    if resolution < 16 {
        return Err(Error::InvalidConfig(format!(
            "polygon IoU resolution must be at least 16, got {resolution}"
        )));
    }
    let ba = a.bounding_box();
    let bb = b.bounding_box();
    let min_x = ba.x_tl.min(bb.x_tl);
    let min_y = ba.y_tl.min(bb.y_tl);
    let span_x = ba.x_rb.max(bb.x_rb) - min_x;
    let span_y = ba.y_rb.max(bb.y_rb) - min_y;
    let span = span_x.max(span_y);
    if span <= 0.0 {
        return Ok(0.0);
    }
    let scale = resolution as f64 / span;
    let width = ((span_x * scale).ceil() as usize).clamp(1, resolution);
    let height = ((span_y * scale).ceil() as usize).clamp(1, resolution);
    let map = |p: &Polygon| {
        Polygon::new(
            p.vertices()
                .iter()
                .map(|v| Point2::new((v.x - min_x) * scale, (v.y - min_y) * scale))
                .collect(),
        )
    };
    let ma = rasterize_polygon(&map(a)?, height, width)?;
    let mb = rasterize_polygon(&map(b)?, height, width)?;
    let union = ma.union_count(&mb);
    if union == 0 {
        return Ok(0.0);
    }
    Ok(ma.intersection_count(&mb) as f64 / union as f64)
}
