use crate::error::{Error, Result};
use crate::geometry::FloatGrid;

pub const HEATMAP_MAGIC: &[u8; 4] = b"CTHM";
const HEADER_LEN: usize = 12;

/// `CTHM`, height and width as little-endian u32, then row-major
/// little-endian f32 values.
///
/// Values are narrowed to f32; grids holding f32-representable values (all
/// grids read from this format) round-trip bit for bit.
pub fn write_heatmap(grid: &FloatGrid) -> Result<Vec<u8>> {
    let (h, w) = grid.shape();
    let dims =
        |v: usize, name: &str| u32::try_from(v).map_err(|_| Error::Format(format!("{name} {v} does not fit in u32")));
    let (h32, w32) = (dims(h, "height")?, dims(w, "width")?);
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * grid.len());
    out.extend_from_slice(HEATMAP_MAGIC);
    out.extend_from_slice(&h32.to_le_bytes());
    out.extend_from_slice(&w32.to_le_bytes());
    for &v in grid.values() {
        let f = v as f32;
        if !f.is_finite() {
            return Err(Error::Format(format!("value {v} overflows f32")));
        }
        out.extend_from_slice(&f.to_le_bytes());
    }
    Ok(out)
}

pub fn read_heatmap(bytes: &[u8]) -> Result<FloatGrid> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!(
            "heatmap header needs {HEADER_LEN} bytes, got {}",
            bytes.len()
        )));
    }
    if &bytes[..4] != HEATMAP_MAGIC {
        return Err(Error::Format(format!("bad heatmap magic {:?}", &bytes[..4])));
    }
    let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
    let (h, w) = (u32_at(4) as usize, u32_at(8) as usize);
    if h == 0 || w == 0 {
        return Err(Error::Format(format!(
            "heatmap dimensions must be positive, got {h}x{w}"
        )));
    }
    let expected = h
        .checked_mul(w)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or_else(|| Error::Format(format!("heatmap dimensions {h}x{w} overflow")))?;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "heatmap {h}x{w} needs {expected} bytes, got {}",
            bytes.len()
        )));
    }
    let values: Vec<f64> = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Format(format!("non-finite value at index {i}")));
    }
    FloatGrid::new(h, w, values)
}
