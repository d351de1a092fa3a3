//! C ABI over the orthocontour toolkit.
//!
//! Every fallible call returns an [`OcStatus`]; on failure the message is
//! available from [`oc_last_error_message`] on the same thread. Grids and
//! detection lists are opaque handles released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use orthocontour::decode::{decode_image, CandidateMode, DecodeConfig, TieRule};
use orthocontour::eval::Detection;
use orthocontour::geometry::{polygon_iou, AABox, FloatGrid, Polygon};
use orthocontour::io::{read_raster, write_atomic, write_heatmap};
use orthocontour::losses::iou_loss;
use orthocontour::Error;

#[repr(C)]
#[allow(non_camel_case_types)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OcStatus {
    OC_OK = 0,
    OC_ERR_NULL_POINTER = 1,
    OC_ERR_INVALID_ARGUMENT = 2,
    OC_ERR_IO = 3,
    OC_ERR_FORMAT = 4,
    OC_ERR_DEGENERATE = 5,
    OC_ERR_NUMERICAL = 6,
    OC_ERR_OUT_OF_RANGE = 7,
    OC_ERR_PANIC = 8,
}

#[repr(C)]
#[allow(non_camel_case_types)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OcTieRule {
    OC_TIE_KEEP_ALL = 0,
    OC_TIE_LEFTMOST = 1,
}

#[repr(C)]
#[allow(non_camel_case_types)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OcCandidateMode {
    OC_MODE_ORTHOGONAL = 0,
    OC_MODE_SINGLE_DIRECTION = 1,
    OC_MODE_NO_RESCORING = 2,
}

/// Decoder settings; start from `oc_decode_config_default`.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct OcDecodeConfig {
    pub theta: f64,
    pub nms_window: usize,
    /// An `OcTieRule` value.
    pub tie_rule: u32,
    pub alpha_scale: f64,
    pub min_candidates: usize,
    pub cluster_gap: usize,
    /// An `OcCandidateMode` value.
    pub mode: u32,
}

/// Row-major grid of doubles.
pub struct OcGrid(FloatGrid);

/// Decoded polygons with scores.
pub struct OcDetections(Vec<Detection>);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes replaced");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> OcStatus {
    match e.root() {
        Error::Io(_) => OcStatus::OC_ERR_IO,
        Error::Format(_) | Error::Parse { .. } => OcStatus::OC_ERR_FORMAT,
        Error::DegenerateGeometry(_) | Error::TooFewCandidates { .. } => OcStatus::OC_ERR_DEGENERATE,
        Error::NumericalError(_) => OcStatus::OC_ERR_NUMERICAL,
        _ => OcStatus::OC_ERR_INVALID_ARGUMENT,
    }
}

enum Fail {
    Null(&'static str),
    Range(String),
    Core(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Core(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> OcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => OcStatus::OC_OK,
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("{what} is null"));
            OcStatus::OC_ERR_NULL_POINTER
        }
        Ok(Err(Fail::Range(msg))) => {
            set_error(msg);
            OcStatus::OC_ERR_OUT_OF_RANGE
        }
        Ok(Err(Fail::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            OcStatus::OC_ERR_PANIC
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or(Fail::Null(what))
}

unsafe fn path_arg<'a>(p: *const c_char) -> Result<&'a Path, Fail> {
    if p.is_null() {
        return Err(Fail::Null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail::Core(Error::InvalidInput("path is not UTF-8".into())))?;
    Ok(Path::new(s))
}

unsafe fn polygon_arg(xy: *const f64, vertices: usize) -> Result<Polygon, Fail> {
    if xy.is_null() {
        return Err(Fail::Null("polygon"));
    }
    Ok(Polygon::from_flat(std::slice::from_raw_parts(xy, 2 * vertices))?)
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn oc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn oc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies `height * width` row-major values into a new grid.
///
/// # Safety
/// `values` must point to `height * width` readable doubles; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn oc_grid_new(
    height: usize,
    width: usize,
    values: *const f64,
    out_grid: *mut *mut OcGrid,
) -> OcStatus {
    guard(|| {
        let slot = out(out_grid, "out_grid")?;
        if values.is_null() {
            return Err(Fail::Null("values"));
        }
        let n = height
            .checked_mul(width)
            .ok_or_else(|| Fail::Range(format!("{height}x{width} overflows")))?;
        let grid = FloatGrid::new(height, width, std::slice::from_raw_parts(values, n).to_vec())?;
        *slot = Box::into_raw(Box::new(OcGrid(grid)));
        Ok(())
    })
}

/// Releases a grid; null is ignored.
///
/// # Safety
/// `grid` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn oc_grid_free(grid: *mut OcGrid) {
    if !grid.is_null() {
        drop(Box::from_raw(grid));
    }
}

/// # Safety
/// `grid` must be a live handle; `height` and `width` must be writable.
#[no_mangle]
pub unsafe extern "C" fn oc_grid_shape(grid: *const OcGrid, height: *mut usize, width: *mut usize) -> OcStatus {
    guard(|| {
        let g = deref(grid, "grid")?;
        *out(height, "height")? = g.0.height();
        *out(width, "width")? = g.0.width();
        Ok(())
    })
}

/// Copies the grid's values into `dst`, which holds `capacity` doubles.
///
/// # Safety
/// `grid` must be a live handle; `dst` must hold `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn oc_grid_values(grid: *const OcGrid, dst: *mut f64, capacity: usize) -> OcStatus {
    guard(|| {
        let g = deref(grid, "grid")?;
        if dst.is_null() {
            return Err(Fail::Null("dst"));
        }
        let v = g.0.values();
        if capacity < v.len() {
            return Err(Fail::Range(format!("need {} doubles, capacity {capacity}", v.len())));
        }
        ptr::copy_nonoverlapping(v.as_ptr(), dst, v.len());
        Ok(())
    })
}

/// Reads a heatmap file or binary PGM.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out_grid` must be writable.
#[no_mangle]
pub unsafe extern "C" fn oc_grid_read(path: *const c_char, out_grid: *mut *mut OcGrid) -> OcStatus {
    guard(|| {
        let slot = out(out_grid, "out_grid")?;
        let bytes = std::fs::read(path_arg(path)?).map_err(Error::from)?;
        *slot = Box::into_raw(Box::new(OcGrid(read_raster(&bytes)?)));
        Ok(())
    })
}

/// Writes the grid as a heatmap file (atomically).
///
/// # Safety
/// `grid` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn oc_grid_write(grid: *const OcGrid, path: *const c_char) -> OcStatus {
    guard(|| {
        let g = deref(grid, "grid")?;
        write_atomic(path_arg(path)?, &write_heatmap(&g.0)?)?;
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn oc_decode_config_default() -> OcDecodeConfig {
    let d = DecodeConfig::default();
    OcDecodeConfig {
        theta: d.theta,
        nms_window: d.nms_window,
        tie_rule: OcTieRule::OC_TIE_KEEP_ALL as u32,
        alpha_scale: d.alpha_scale,
        min_candidates: d.min_candidates,
        cluster_gap: d.cluster_gap,
        mode: OcCandidateMode::OC_MODE_ORTHOGONAL as u32,
    }
}

fn decode_config(c: &OcDecodeConfig) -> Result<DecodeConfig, Fail> {
    let tie_rule = match c.tie_rule {
        x if x == OcTieRule::OC_TIE_KEEP_ALL as u32 => TieRule::KeepAll,
        x if x == OcTieRule::OC_TIE_LEFTMOST as u32 => TieRule::Leftmost,
        x => return Err(Fail::Core(Error::InvalidConfig(format!("unknown tie rule {x}")))),
    };
    let mode = match c.mode {
        x if x == OcCandidateMode::OC_MODE_ORTHOGONAL as u32 => CandidateMode::Orthogonal,
        x if x == OcCandidateMode::OC_MODE_SINGLE_DIRECTION as u32 => CandidateMode::SingleDirection,
        x if x == OcCandidateMode::OC_MODE_NO_RESCORING as u32 => CandidateMode::NoRescoring,
        x => return Err(Fail::Core(Error::InvalidConfig(format!("unknown candidate mode {x}")))),
    };
    Ok(DecodeConfig {
        theta: c.theta,
        nms_window: c.nms_window,
        tie_rule,
        alpha_scale: c.alpha_scale,
        min_candidates: c.min_candidates,
        cluster_gap: c.cluster_gap,
        mode,
        ..DecodeConfig::default()
    })
}

/// Re-scores the two heatmaps and outlines every candidate cluster. A null
/// `config` means defaults.
///
/// # Safety
/// `hmap` and `vmap` must be live handles; `config` null or valid;
/// `out_dets` writable.
#[no_mangle]
pub unsafe extern "C" fn oc_decode(
    hmap: *const OcGrid,
    vmap: *const OcGrid,
    config: *const OcDecodeConfig,
    out_dets: *mut *mut OcDetections,
) -> OcStatus {
    guard(|| {
        let slot = out(out_dets, "out_dets")?;
        let (h, v) = (deref(hmap, "hmap")?, deref(vmap, "vmap")?);
        let cfg = match config.as_ref() {
            Some(c) => decode_config(c)?,
            None => DecodeConfig::default(),
        };
        let (dets, _) = decode_image(&h.0, &v.0, &cfg)?;
        *slot = Box::into_raw(Box::new(OcDetections(dets)));
        Ok(())
    })
}

/// Releases a detection list; null is ignored.
///
/// # Safety
/// `dets` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn oc_detections_free(dets: *mut OcDetections) {
    if !dets.is_null() {
        drop(Box::from_raw(dets));
    }
}

/// Number of detections, or 0 for null.
///
/// # Safety
/// `dets` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn oc_detections_count(dets: *const OcDetections) -> usize {
    dets.as_ref().map_or(0, |d| d.0.len())
}

unsafe fn detection<'a>(dets: *const OcDetections, index: usize) -> Result<&'a Detection, Fail> {
    let d = deref(dets, "dets")?;
    d.0.get(index)
        .ok_or_else(|| Fail::Range(format!("index {index} out of {} detections", d.0.len())))
}

/// # Safety
/// `dets` must be a live handle; `score` writable.
#[no_mangle]
pub unsafe extern "C" fn oc_detection_score(dets: *const OcDetections, index: usize, score: *mut f64) -> OcStatus {
    guard(|| {
        *out(score, "score")? = detection(dets, index)?.score;
        Ok(())
    })
}

/// # Safety
/// `dets` must be a live handle; `count` writable.
#[no_mangle]
pub unsafe extern "C" fn oc_detection_vertex_count(
    dets: *const OcDetections,
    index: usize,
    count: *mut usize,
) -> OcStatus {
    guard(|| {
        *out(count, "count")? = detection(dets, index)?.polygon.len();
        Ok(())
    })
}

/// Writes `x0, y0, x1, y1, ...` into `xy`, which holds `capacity` doubles.
///
/// # Safety
/// `dets` must be a live handle; `xy` must hold `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn oc_detection_vertices(
    dets: *const OcDetections,
    index: usize,
    xy: *mut f64,
    capacity: usize,
) -> OcStatus {
    guard(|| {
        let flat = detection(dets, index)?.polygon.to_flat();
        if xy.is_null() {
            return Err(Fail::Null("xy"));
        }
        if capacity < flat.len() {
            return Err(Fail::Range(format!("need {} doubles, capacity {capacity}", flat.len())));
        }
        ptr::copy_nonoverlapping(flat.as_ptr(), xy, flat.len());
        Ok(())
    })
}

/// Raster IoU of two polygons given as flat `x, y` arrays.
///
/// # Safety
/// `a` and `b` must hold `2 * a_vertices` and `2 * b_vertices` doubles;
/// `iou` must be writable.
#[no_mangle]
pub unsafe extern "C" fn oc_polygon_iou(
    a: *const f64,
    a_vertices: usize,
    b: *const f64,
    b_vertices: usize,
    resolution: usize,
    iou: *mut f64,
) -> OcStatus {
    guard(|| {
        let slot = out(iou, "iou")?;
        *slot = polygon_iou(&polygon_arg(a, a_vertices)?, &polygon_arg(b, b_vertices)?, resolution)?;
        Ok(())
    })
}

/// IoU loss of `pred` against `gt` (both `x_tl, y_tl, x_rb, y_rb`) and its
/// gradient with respect to `pred`. `grad` may be null.
///
/// # Safety
/// `pred` and `gt` must hold 4 doubles; `loss` writable; `grad` null or
/// holding 4 doubles.
#[no_mangle]
pub unsafe extern "C" fn oc_iou_loss(pred: *const f64, gt: *const f64, loss: *mut f64, grad: *mut f64) -> OcStatus {
    guard(|| {
        let slot = out(loss, "loss")?;
        let read = |p: *const f64, what| -> Result<AABox, Fail> {
            if p.is_null() {
                return Err(Fail::Null(what));
            }
            let c = std::slice::from_raw_parts(p, 4);
            Ok(AABox::from_array([c[0], c[1], c[2], c[3]])?)
        };
        let (l, g) = iou_loss(&read(pred, "pred")?, &read(gt, "gt")?);
        *slot = l;
        if !grad.is_null() {
            ptr::copy_nonoverlapping(g.as_ptr(), grad, 4);
        }
        Ok(())
    })
}
