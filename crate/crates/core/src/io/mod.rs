//! File formats, overlays and synthetic data.

mod annotations;
mod heatmap;
mod pgm;
mod svg;
mod synth;

pub use annotations::{
    parse_annotations, parse_candidates, parse_detections, serialize_boxes, serialize_candidates, serialize_canonical,
    serialize_detections, DatasetFormat, ParseOptions,
};
pub use heatmap::{read_heatmap, write_heatmap, HEATMAP_MAGIC};
pub use pgm::{read_pgm, write_pgm};
pub use svg::render_overlay_svg;
pub use synth::{generate_synthetic_scene, Streak, SyntheticScene};

use std::io::Write as _;
use std::path::Path;

use crate::error::Result;
use crate::geometry::FloatGrid;

/// Writes `bytes` to a temporary file next to `path`, then renames it into
/// place so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Reads a raster from either a heatmap file or an 8/16-bit binary PGM,
/// chosen by the leading magic bytes.
pub fn read_raster(bytes: &[u8]) -> Result<FloatGrid> {
    if bytes.starts_with(b"P5") {
        read_pgm(bytes)
    } else {
        read_heatmap(bytes)
    }
}
