use std::collections::{HashMap, HashSet};
use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::geometry::{cross, Point2, Polygon};

/// Fewest points [`alpha_shape`] accepts.
pub const MIN_SHAPE_POINTS: usize = 4;

/// Concave outline of a point set.
///
/// Delaunay triangles with circumradius above `alpha` (or zero area) are
/// dropped. The boundary of what remains is split into simple cycles; the
/// counter-clockwise cycle enclosing the largest area is returned, with
/// collinear middle vertices removed. When no triangle survives the convex
/// hull is returned instead. `alpha = +inf` keeps every triangle.
pub fn alpha_shape(points: &[Point2], alpha: f64) -> Result<Polygon> {
    if points.len() < MIN_SHAPE_POINTS {
        return Err(Error::TooFewCandidates {
            found: points.len(),
            required: MIN_SHAPE_POINTS,
        });
    }
    if !(alpha > 0.0) {
        return Err(Error::InvalidConfig(format!("alpha must be positive, got {alpha}")));
    }
    if let Some(p) = points.iter().find(|p| !p.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite point {p:?}")));
    }
    if all_collinear(points) {
        return Err(Error::DegenerateGeometry("all points are collinear".into()));
    }

    let dpts: Vec<delaunator::Point> = points.iter().map(|p| delaunator::Point { x: p.x, y: p.y }).collect();
    let tri = delaunator::triangulate(&dpts);
    if tri.triangles.is_empty() {
        return Err(Error::DegenerateGeometry("triangulation is empty".into()));
    }

    let mut directed = HashSet::new();
    for t in tri.triangles.chunks_exact(3) {
        let (a, mut b, mut c) = (t[0], t[1], t[2]);
        let area2 = cross(points[a], points[b], points[c]);
        if area2 == 0.0 {
            continue;
        }
        if area2 < 0.0 {
            std::mem::swap(&mut b, &mut c);
        }
        let r = points[a].distance(&points[b]) * points[b].distance(&points[c]) * points[c].distance(&points[a])
            / (2.0 * area2.abs());
        if r <= alpha {
            directed.insert((a, b));
            directed.insert((b, c));
            directed.insert((c, a));
        }
    }
    if directed.is_empty() {
        return convex_hull(points);
    }

    let mut boundary: Vec<(usize, usize)> = directed
        .iter()
        .copied()
        .filter(|&(a, b)| !directed.contains(&(b, a)))
        .collect();
    boundary.sort_unstable();
    let mut outgoing: HashMap<usize, Vec<usize>> = HashMap::new();
    for &(a, b) in &boundary {
        outgoing.entry(a).or_default().push(b);
    }

    let mut used = HashSet::new();
    let mut best: Option<(f64, Vec<usize>)> = None;
    for &start in &boundary {
        if used.contains(&start) {
            continue;
        }
        let mut cycle = Vec::new();
        let mut edge = start;
        // Every boundary edge belongs to exactly one cycle.
        for _ in 0..=boundary.len() {
            if !used.insert(edge) {
                break;
            }
            cycle.push(edge.0);
            edge = next_edge(points, &outgoing, edge);
        }
        if edge != start {
            return Err(Error::DegenerateGeometry("boundary does not close".into()));
        }
        for lp in split_loops(&cycle) {
            let verts: Vec<Point2> = lp.iter().map(|&i| points[i]).collect();
            let area = crate::geometry::signed_area(&verts);
            if area > 0.0 && best.as_ref().is_none_or(|(a, _)| area > *a) {
                best = Some((area, lp));
            }
        }
    }
    let (_, cycle) = best.ok_or_else(|| Error::DegenerateGeometry("no counter-clockwise boundary cycle".into()))?;
    simplify(cycle.iter().map(|&i| points[i]).collect())
}

/// Splits a closed walk at repeated vertices into simple loops. A hole that
/// touches the outline at one vertex comes back as its own (clockwise) loop.
fn split_loops(walk: &[usize]) -> Vec<Vec<usize>> {
    let mut loops = Vec::new();
    let mut stack: Vec<usize> = Vec::with_capacity(walk.len());
    let mut pos: HashMap<usize, usize> = HashMap::new();
    for &v in walk {
        if let Some(&p) = pos.get(&v) {
            let lp: Vec<usize> = stack.drain(p..).collect();
            for u in &lp[1..] {
                pos.remove(u);
            }
            loops.push(lp);
        }
        pos.insert(v, stack.len());
        stack.push(v);
    }
    loops.push(stack);
    loops.retain(|l| l.len() >= 3);
    loops
}

/// Follows the boundary at `edge.1`: the outgoing edge reached first when
/// sweeping clockwise from the reversed incoming edge closes the interior
/// wedge, which keeps pinch vertices from merging cycles.
fn next_edge(points: &[Point2], outgoing: &HashMap<usize, Vec<usize>>, (u, v): (usize, usize)) -> (usize, usize) {
    let pv = points[v];
    let heading = |i: usize| (points[i].y - pv.y).atan2(points[i].x - pv.x);
    let back = heading(u);
    let mut best = (f64::INFINITY, usize::MAX);
    for &w in outgoing.get(&v).map(Vec::as_slice).unwrap_or(&[]) {
        let mut sweep = (back - heading(w)).rem_euclid(TAU);
        if sweep == 0.0 {
            sweep = TAU;
        }
        if sweep < best.0 {
            best = (sweep, w);
        }
    }
    (v, best.1)
}

fn all_collinear(points: &[Point2]) -> bool {
    let a = points[0];
    let Some(b) = points.iter().copied().find(|p| *p != a) else {
        return true;
    };
    let scale = a.distance(&b);
    points
        .iter()
        .all(|&p| cross(a, b, p).abs() <= 1e-12 * scale * scale.max(a.distance(&p)))
}

/// Drops vertices lying on the segment between their neighbours.
fn simplify(mut verts: Vec<Point2>) -> Result<Polygon> {
    let mut changed = true;
    while changed && verts.len() > 3 {
        changed = false;
        let n = verts.len();
        for i in 0..n {
            let (a, b, c) = (verts[(i + n - 1) % n], verts[i], verts[(i + 1) % n]);
            let tol = 1e-12 * a.distance(&b) * b.distance(&c);
            if cross(a, b, c).abs() <= tol {
                verts.remove(i);
                changed = true;
                break;
            }
        }
    }
    Polygon::new(verts)
}

/// Andrew's monotone chain; counter-clockwise, no collinear vertices.
pub fn convex_hull(points: &[Point2]) -> Result<Polygon> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return Err(Error::DegenerateGeometry("fewer than three distinct points".into()));
    }
    let mut hull: Vec<Point2> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Point2>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    if hull.len() < 3 {
        return Err(Error::DegenerateGeometry("points are collinear".into()));
    }
    Polygon::new(hull)
}
