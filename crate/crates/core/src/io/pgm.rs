use crate::error::{Error, Result};
use crate::geometry::FloatGrid;

/// Binary PGM (`P5`), scaled to `[0, 1]` by the header's maxval.
pub fn read_pgm(bytes: &[u8]) -> Result<FloatGrid> {
    let mut pos = 0usize;
    let mut token = || -> Result<String> {
        // Whitespace and `#` comments may separate header fields.
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err(Error::Format("truncated PGM header".into())),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| !b.is_ascii_whitespace()) {
            pos += 1;
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    if token()? != "P5" {
        return Err(Error::Format("not a binary PGM (P5)".into()));
    }
    let mut num = |name: &str| -> Result<usize> {
        let t = token()?;
        t.parse::<usize>()
            .map_err(|_| Error::Format(format!("bad PGM {name} {t:?}")))
    };
    let w = num("width")?;
    let h = num("height")?;
    let maxval = num("maxval")?;
    if w == 0 || h == 0 || maxval == 0 || maxval > 65535 {
        return Err(Error::Format(format!("bad PGM header {w}x{h} maxval {maxval}")));
    }
    // Exactly one whitespace byte ends the header.
    let data = &bytes[(pos + 1).min(bytes.len())..];
    let bpp = if maxval < 256 { 1 } else { 2 };
    let expected = h
        .checked_mul(w)
        .and_then(|n| n.checked_mul(bpp))
        .ok_or_else(|| Error::Format("PGM dimensions overflow".into()))?;
    if data.len() < expected {
        return Err(Error::Format(format!(
            "PGM needs {expected} data bytes, got {}",
            data.len()
        )));
    }
    let scale = maxval as f64;
    let values = (0..h * w)
        .map(|i| {
            let v = if bpp == 1 {
                data[i] as f64
            } else {
                u16::from_be_bytes([data[2 * i], data[2 * i + 1]]) as f64
            };
            (v / scale).min(1.0)
        })
        .collect();
    FloatGrid::new(h, w, values)
}

/// 8-bit binary PGM of `grid` clamped to `[0, 1]`.
pub fn write_pgm(grid: &FloatGrid) -> Vec<u8> {
    let (h, w) = grid.shape();
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(grid.values().iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    out
}
