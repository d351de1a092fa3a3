//! Contour-point scene text detection machinery.
//!
//! The crate covers everything around a detector backbone:
//!
//! * [`geometry`]: points, polygons, boxes, rasters, rasterization, the
//!   Euclidean distance transform and IoU.
//! * [`label`]: contour-band training labels and proposal ground-truth boxes.
//! * [`rpn`]: point-set proposal refinement, max-min bounding and a small
//!   IoU-driven box fitter.
//! * [`losses`]: IoU loss, class-balanced BCE, smooth-L1, cross-entropy, the
//!   weighted objective and a finite-difference gradient checker.
//! * [`lotm`]: directional 1×k / k×1 texture convolutions with sigmoid heads,
//!   exact backprop and a toy trainer.
//! * [`decode`]: directional NMS, point re-scoring, alpha-shape reconstruction
//!   and region decoding.
//! * [`eval`]: polygon matching with precision, recall and F-measure.
//! * [`io`]: annotation parsers, heatmap files, SVG overlays and synthetic
//!   scenes.
//! * [`pipeline`]: the gradient-check suites and the end-to-end synthetic demo.

// NaN must fail range checks, hence `!(x > 0.0)` style guards.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod decode;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod io;
pub mod label;
pub mod losses;
pub mod lotm;
pub mod pipeline;
pub mod rpn;

#[doc(hidden)]
pub mod cli;

pub use error::{Error, Result};
