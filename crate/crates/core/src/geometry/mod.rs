//! Geometric primitives shared by every stage: points, polygons, axis-aligned
//! boxes, real and boolean rasters, plus the area / containment / IoU routines
//! built on them.
//!
//! Coordinates are pixels. A raster cell `(row, col)` covers the unit square
//! `[col, col + 1) × [row, row + 1)`, so its center sits at
//! `(col + 0.5, row + 0.5)`.

mod edt;
mod raster;

pub use edt::euclidean_distance_transform;
pub use raster::{polygon_iou, rasterize_polygon, DEFAULT_IOU_RESOLUTION};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Center of raster cell `(row, col)`.
    pub fn cell_center(row: usize, col: usize) -> Self {
        Self::new(col as f64 + 0.5, row as f64 + 0.5)
    }
}

/// Axis of a directional operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    /// Operates along rows (a 1×k footprint).
    Horizontal,
    /// Operates along columns (a k×1 footprint).
    Vertical,
}

impl Orientation {
    pub fn transposed(self) -> Self {
        match self {
            Orientation::Horizontal => Orientation::Vertical,
            Orientation::Vertical => Orientation::Horizontal,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Orientation::Horizontal => "horizontal",
            Orientation::Vertical => "vertical",
        }
    }
}

impl std::str::FromStr for Orientation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "horizontal" => Ok(Orientation::Horizontal),
            "vertical" => Ok(Orientation::Vertical),
            other => Err(Error::InvalidConfig(format!("unknown orientation `{other}`"))),
        }
    }
}

/// A closed polygon given by its vertices in order (either winding).
///
/// Construction guarantees at least three finite vertices. Simplicity is not
/// checked; callers producing polygons (annotations, alpha shapes) are
/// responsible for it.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    vertices: Vec<Point2>,
}

impl Polygon {
    pub fn new(vertices: Vec<Point2>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::InvalidPolygon(format!(
                "need at least 3 vertices, got {}",
                vertices.len()
            )));
        }
        if let Some(i) = vertices.iter().position(|p| !p.is_finite()) {
            return Err(Error::InvalidPolygon(format!("vertex {i} is not finite")));
        }
        Ok(Self { vertices })
    }

    /// Builds a polygon from a flat `[x0, y0, x1, y1, ...]` list.
    pub fn from_flat(coords: &[f64]) -> Result<Self> {
        if !coords.len().is_multiple_of(2) {
            return Err(Error::InvalidPolygon(format!("odd coordinate count {}", coords.len())));
        }
        Self::new(coords.chunks_exact(2).map(|c| Point2::new(c[0], c[1])).collect())
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.vertices.iter().flat_map(|p| [p.x, p.y]).collect()
    }

    /// Iterates over the closing edges `(v[i], v[i+1 mod n])`.
    pub fn edges(&self) -> impl Iterator<Item = (Point2, Point2)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    /// Shoelace signed area: positive for counter-clockwise winding in a
    /// y-up frame.
    pub fn signed_area(&self) -> f64 {
        signed_area(&self.vertices)
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    pub fn bounding_box(&self) -> AABox {
        let mut b = AABox {
            x_tl: f64::INFINITY,
            y_tl: f64::INFINITY,
            x_rb: f64::NEG_INFINITY,
            y_rb: f64::NEG_INFINITY,
        };
        for p in &self.vertices {
            b.x_tl = b.x_tl.min(p.x);
            b.y_tl = b.y_tl.min(p.y);
            b.x_rb = b.x_rb.max(p.x);
            b.y_rb = b.y_rb.max(p.y);
        }
        b
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Polygon {
        Polygon {
            vertices: self.vertices.iter().map(|p| Point2::new(p.x + dx, p.y + dy)).collect(),
        }
    }

    pub fn scaled(&self, s: f64) -> Polygon {
        Polygon {
            vertices: self.vertices.iter().map(|p| Point2::new(p.x * s, p.y * s)).collect(),
        }
    }

    pub fn contains(&self, p: Point2) -> bool {
        point_in_polygon(p, self)
    }

    /// True when no two non-adjacent edges touch and no vertex repeats.
    pub fn is_simple(&self) -> bool {
        let n = self.vertices.len();
        for i in 0..n {
            for j in (i + 1)..n {
                if self.vertices[i] == self.vertices[j] {
                    return false;
                }
            }
        }
        let edges: Vec<_> = self.edges().collect();
        for i in 0..n {
            for j in (i + 1)..n {
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                if adjacent {
                    continue;
                }
                if segments_intersect(edges[i].0, edges[i].1, edges[j].0, edges[j].1) {
                    return false;
                }
            }
        }
        true
    }
}

pub(crate) fn signed_area(vertices: &[Point2]) -> f64 {
    let n = vertices.len();
    let mut acc = 0.0;
    for i in 0..n {
        let a = vertices[i];
        let b = vertices[(i + 1) % n];
        acc += a.x * b.y - b.x * a.y;
    }
    0.5 * acc
}

/// Twice the signed area of triangle `abc`.
pub(crate) fn cross(a: Point2, b: Point2, c: Point2) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

fn on_segment(p: Point2, a: Point2, b: Point2) -> bool {
    cross(a, b, p) == 0.0 && p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

fn segments_intersect(p1: Point2, p2: Point2, q1: Point2, q2: Point2) -> bool {
    let d1 = cross(q1, q2, p1);
    let d2 = cross(q1, q2, p2);
    let d3 = cross(p1, p2, q1);
    let d4 = cross(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    on_segment(p1, q1, q2) || on_segment(p2, q1, q2) || on_segment(q1, p1, p2) || on_segment(q2, p1, p2)
}

/// Absolute shoelace area in px².
pub fn polygon_area(poly: &Polygon) -> f64 {
    poly.area()
}

/// Where a horizontal line at `y` crosses edge `ab`, using a half-open rule
/// on y so that every vertex is counted exactly once.
///
/// The rasterizer uses the same expression, which keeps its even-odd parity
/// identical to [`point_in_polygon`].
#[inline]
pub(crate) fn edge_crossing(a: Point2, b: Point2, y: f64) -> Option<f64> {
    if (a.y <= y && y < b.y) || (b.y <= y && y < a.y) {
        Some(a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y))
    } else {
        None
    }
}

pub(crate) fn on_boundary(p: Point2, poly: &Polygon) -> bool {
    poly.edges().any(|(a, b)| on_segment(p, a, b))
}

/// Even-odd containment test. Points exactly on an edge count as inside.
pub fn point_in_polygon(p: Point2, poly: &Polygon) -> bool {
    if on_boundary(p, poly) {
        return true;
    }
    let crossings = poly
        .edges()
        .filter_map(|(a, b)| edge_crossing(a, b, p.y))
        .filter(|&x| x > p.x)
        .count();
    crossings % 2 == 1
}

/// Axis-aligned box `(x_tl, y_tl) – (x_rb, y_rb)` in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AABox {
    pub x_tl: f64,
    pub y_tl: f64,
    pub x_rb: f64,
    pub y_rb: f64,
}

impl AABox {
    pub fn new(x_tl: f64, y_tl: f64, x_rb: f64, y_rb: f64) -> Result<Self> {
        let b = Self { x_tl, y_tl, x_rb, y_rb };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.to_array();
        if c.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("box {c:?} is not finite")));
        }
        if self.x_tl > self.x_rb || self.y_tl > self.y_rb {
            return Err(Error::InvalidInput(format!(
                "box {c:?} has top-left beyond bottom-right"
            )));
        }
        Ok(())
    }

    pub fn from_array(c: [f64; 4]) -> Result<Self> {
        Self::new(c[0], c[1], c[2], c[3])
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x_tl, self.y_tl, self.x_rb, self.y_rb]
    }

    pub fn width(&self) -> f64 {
        self.x_rb - self.x_tl
    }

    pub fn height(&self) -> f64 {
        self.y_rb - self.y_tl
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> Point2 {
        Point2::new(0.5 * (self.x_tl + self.x_rb), 0.5 * (self.y_tl + self.y_rb))
    }

    pub fn scaled(&self, s: f64) -> AABox {
        AABox {
            x_tl: self.x_tl * s,
            y_tl: self.y_tl * s,
            x_rb: self.x_rb * s,
            y_rb: self.y_rb * s,
        }
    }

    pub fn translated(&self, dx: f64, dy: f64) -> AABox {
        AABox {
            x_tl: self.x_tl + dx,
            y_tl: self.y_tl + dy,
            x_rb: self.x_rb + dx,
            y_rb: self.y_rb + dy,
        }
    }

    pub fn contains(&self, p: Point2) -> bool {
        p.x >= self.x_tl && p.x <= self.x_rb && p.y >= self.y_tl && p.y <= self.y_rb
    }

    /// Width and height of the overlap with `other` (zero when disjoint).
    pub fn intersection_extent(&self, other: &AABox) -> (f64, f64) {
        let iw = (self.x_rb.min(other.x_rb) - self.x_tl.max(other.x_tl)).max(0.0);
        let ih = (self.y_rb.min(other.y_rb) - self.y_tl.max(other.y_tl)).max(0.0);
        (iw, ih)
    }

    pub fn to_polygon(&self) -> Result<Polygon> {
        Polygon::new(vec![
            Point2::new(self.x_tl, self.y_tl),
            Point2::new(self.x_rb, self.y_tl),
            Point2::new(self.x_rb, self.y_rb),
            Point2::new(self.x_tl, self.y_rb),
        ])
    }
}

/// Exact intersection-over-union of two boxes. A zero union (both boxes
/// degenerate) yields 0.
pub fn box_iou(a: &AABox, b: &AABox) -> f64 {
    let (iw, ih) = a.intersection_extent(b);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Row-major real-valued raster.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatGrid {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

fn check_dims(height: usize, width: usize) -> Result<()> {
    if height == 0 || width == 0 {
        return Err(Error::InvalidGrid(format!(
            "dimensions must be positive, got {height}x{width}"
        )));
    }
    Ok(())
}

impl FloatGrid {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        check_dims(height, width)?;
        if values.len() != height * width {
            return Err(Error::InvalidGrid(format!(
                "{} values for a {height}x{width} grid",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid(format!("value {i} is not finite")));
        }
        Ok(Self { height, width, values })
    }

    pub fn zeros(height: usize, width: usize) -> Result<Self> {
        Self::filled(height, width, 0.0)
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Result<Self> {
        check_dims(height, width)?;
        Ok(Self {
            height,
            width,
            values: vec![value; height * width],
        })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                values.push(f(r, c));
            }
        }
        Self::new(height, width, values)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    /// Stores `value`, which must be finite.
    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(value.is_finite());
        self.values[row * self.width + col] = value;
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.values[row * self.width..(row + 1) * self.width]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<FloatGrid> {
        FloatGrid::new(self.height, self.width, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn transpose(&self) -> FloatGrid {
        let mut values = Vec::with_capacity(self.values.len());
        for c in 0..self.width {
            for r in 0..self.height {
                values.push(self.get(r, c));
            }
        }
        FloatGrid {
            height: self.width,
            width: self.height,
            values,
        }
    }

    pub fn from_mask(mask: &BitMask) -> FloatGrid {
        FloatGrid {
            height: mask.height,
            width: mask.width,
            values: mask.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        }
    }

    pub fn same_shape(&self, other: &FloatGrid) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::InvalidGrid(format!(
                "shape mismatch {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(())
    }
}

/// Row-major boolean raster.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BitMask {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl BitMask {
    pub fn new(height: usize, width: usize, bits: Vec<bool>) -> Result<Self> {
        check_dims(height, width)?;
        if bits.len() != height * width {
            return Err(Error::InvalidGrid(format!(
                "{} bits for a {height}x{width} mask",
                bits.len()
            )));
        }
        Ok(Self { height, width, bits })
    }

    pub fn empty(height: usize, width: usize) -> Result<Self> {
        check_dims(height, width)?;
        Ok(Self {
            height,
            width,
            bits: vec![false; height * width],
        })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Result<Self> {
        let mut bits = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                bits.push(f(r, c));
            }
        }
        Self::new(height, width, bits)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.bits[row * self.width + col] = value;
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_clear(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// Set cells as `(row, col)` pairs in row-major order.
    pub fn ones(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| (i / self.width, i % self.width))
    }

    pub fn same_shape(&self, other: &BitMask) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::InvalidGrid(format!(
                "shape mismatch {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(())
    }

    pub fn union_with(&mut self, other: &BitMask) -> Result<()> {
        self.same_shape(other)?;
        for (a, &b) in self.bits.iter_mut().zip(&other.bits) {
            *a |= b;
        }
        Ok(())
    }

    pub fn intersection_count(&self, other: &BitMask) -> usize {
        self.bits.iter().zip(&other.bits).filter(|(&a, &b)| a && b).count()
    }

    pub fn union_count(&self, other: &BitMask) -> usize {
        self.bits.iter().zip(&other.bits).filter(|(&a, &b)| a || b).count()
    }
}
