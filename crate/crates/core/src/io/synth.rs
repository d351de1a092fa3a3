use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{rasterize_polygon, BitMask, FloatGrid, Point2, Polygon};
use crate::label::AnnotationRecord;

const MIN_DIM: usize = 32;
const TEXT_MARGIN: i64 = 4;
const STREAK_MARGIN: i64 = 3;
const BORDER: f64 = 2.0;
const MAX_ATTEMPTS: usize = 2000;
const NOISE: f64 = 0.02;
const CHECKER_HI: f64 = 1.0;
const CHECKER_LO: f64 = 0.2;
const STREAK_VALUE: f64 = 1.0;

/// A one-pixel-wide vertical line covering rows `row_start..row_end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Streak {
    pub col: usize,
    pub row_start: usize,
    pub row_end: usize,
}

impl Streak {
    pub fn len(&self) -> usize {
        self.row_end - self.row_start
    }

    pub fn is_empty(&self) -> bool {
        self.row_end == self.row_start
    }

    pub fn mask(&self, height: usize, width: usize) -> Result<BitMask> {
        BitMask::from_fn(height, width, |r, c| {
            c == self.col && (self.row_start..self.row_end).contains(&r)
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub image: FloatGrid,
    pub records: Vec<AnnotationRecord>,
    pub streaks: Vec<Streak>,
}

/// Checkerboard-textured rotated rectangles on a dark background plus
/// vertical streak distractors, with small uniform noise.
pub fn generate_synthetic_scene(
    seed: u64,
    height: usize,
    width: usize,
    n_texts: usize,
    n_streaks: usize,
) -> Result<SyntheticScene> {
    if height < MIN_DIM || width < MIN_DIM {
        return Err(Error::InvalidConfig(format!(
            "scene must be at least {MIN_DIM}x{MIN_DIM}, got {height}x{width}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (hf, wf) = (height as f64, width as f64);
    let scale = height.min(width) as f64 / 128.0;
    let mut image = FloatGrid::zeros(height, width)?;
    let mut occupied: Vec<BitMask> = Vec::new();
    let mut records = Vec::with_capacity(n_texts);

    let mut attempts = 0;
    while records.len() < n_texts {
        attempts += 1;
        if attempts > MAX_ATTEMPTS {
            return Err(Error::Placement(format!(
                "placed {} of {n_texts} text regions",
                records.len()
            )));
        }
        let w = rng.gen_range(18.0..44.0) * scale;
        let h = rng.gen_range(10.0..22.0) * scale;
        let (cx_lo, cx_hi) = (w / 2.0 + 4.0, wf - w / 2.0 - 4.0);
        let (cy_lo, cy_hi) = (h / 2.0 + 4.0, hf - h / 2.0 - 4.0);
        if cx_lo >= cx_hi || cy_lo >= cy_hi {
            continue;
        }
        let cx = rng.gen_range(cx_lo..cx_hi);
        let cy = rng.gen_range(cy_lo..cy_hi);
        let angle: f64 = rng.gen_range(-0.3..0.3);
        let (s, c) = angle.sin_cos();
        let corners: Vec<Point2> = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)]
            .iter()
            .map(|&(u, v)| {
                let (x, y) = (u * w / 2.0, v * h / 2.0);
                Point2::new(cx + x * c - y * s, cy + x * s + y * c)
            })
            .collect();
        if corners
            .iter()
            .any(|p| p.x < BORDER || p.y < BORDER || p.x > wf - BORDER || p.y > hf - BORDER)
        {
            continue;
        }
        let poly = Polygon::new(corners)?;
        let mask = rasterize_polygon(&poly, height, width)?;
        if mask.is_clear() || occupied.iter().any(|o| near(o, &mask, TEXT_MARGIN)) {
            continue;
        }
        for (r, col) in mask.ones() {
            let v = if (r + col) % 2 == 0 { CHECKER_HI } else { CHECKER_LO };
            image.set(r, col, v);
        }
        occupied.push(mask);
        records.push(AnnotationRecord::new(poly));
    }

    let mut streaks = Vec::with_capacity(n_streaks);
    let len_lo = ((20.0 * scale).round() as usize).max(4);
    let len_hi = ((50.0 * scale).round() as usize).max(len_lo + 1);
    attempts = 0;
    while streaks.len() < n_streaks {
        attempts += 1;
        if attempts > MAX_ATTEMPTS {
            return Err(Error::Placement(format!(
                "placed {} of {n_streaks} streaks",
                streaks.len()
            )));
        }
        let len = rng.gen_range(len_lo..len_hi);
        if len + 6 > height {
            continue;
        }
        let col = rng.gen_range(3..width - 3);
        let row_start = rng.gen_range(3..height - len - 2);
        let streak = Streak {
            col,
            row_start,
            row_end: row_start + len,
        };
        let mask = streak.mask(height, width)?;
        if occupied.iter().any(|o| near(o, &mask, STREAK_MARGIN)) {
            continue;
        }
        for r in streak.row_start..streak.row_end {
            image.set(r, col, STREAK_VALUE);
        }
        occupied.push(mask);
        streaks.push(streak);
    }

    let noisy: Vec<f64> = image
        .values()
        .iter()
        .map(|&v| v + rng.gen_range(-NOISE..=NOISE))
        .collect();
    Ok(SyntheticScene {
        image: FloatGrid::new(height, width, noisy)?,
        records,
        streaks,
    })
}

/// True when some set cell of `a` lies within Chebyshev distance `margin`
/// of a set cell of `b`.
fn near(a: &BitMask, b: &BitMask, margin: i64) -> bool {
    let (h, w) = (a.height() as i64, a.width() as i64);
    b.ones().any(|(r, c)| {
        let (r, c) = (r as i64, c as i64);
        (r - margin..=r + margin).any(|rr| {
            (c - margin..=c + margin)
                .any(|cc| rr >= 0 && cc >= 0 && rr < h && cc < w && a.get(rr as usize, cc as usize))
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_scene() {
        let a = generate_synthetic_scene(7, 128, 128, 3, 2).unwrap();
        let b = generate_synthetic_scene(7, 128, 128, 3, 2).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic_scene(8, 128, 128, 3, 2).unwrap();
        assert_ne!(a.image, c.image);
    }

    #[test]
    fn no_texts_no_records() {
        let s = generate_synthetic_scene(1, 64, 64, 0, 1).unwrap();
        assert!(s.records.is_empty());
        assert_eq!(s.streaks.len(), 1);
    }

    #[test]
    fn geometry_is_clean() {
        for seed in 0..30 {
            let s = generate_synthetic_scene(seed, 128, 128, 3, 2).unwrap();
            assert_eq!(s.records.len(), 3);
            let masks: Vec<BitMask> = s
                .records
                .iter()
                .map(|r| rasterize_polygon(&r.polygon, 128, 128).unwrap())
                .collect();
            for r in &s.records {
                for p in r.polygon.vertices() {
                    assert!(p.x >= 0.0 && p.y >= 0.0 && p.x <= 128.0 && p.y <= 128.0);
                }
            }
            for st in &s.streaks {
                assert!(st.len() >= 20);
                let m = st.mask(128, 128).unwrap();
                for t in &masks {
                    assert_eq!(m.intersection_count(t), 0);
                    assert!(!near(t, &m, STREAK_MARGIN));
                }
            }
            for i in 0..masks.len() {
                for j in i + 1..masks.len() {
                    assert!(!near(&masks[i], &masks[j], TEXT_MARGIN));
                }
            }
        }
    }

    #[test]
    fn rejects_small_or_crowded() {
        assert!(matches!(
            generate_synthetic_scene(0, 16, 64, 1, 0),
            Err(Error::InvalidConfig(_))
        ));
        assert!(matches!(
            generate_synthetic_scene(0, 32, 32, 50, 0),
            Err(Error::Placement(_))
        ));
    }

    #[test]
    fn large_scene_scales_regions() {
        let s = generate_synthetic_scene(3, 256, 320, 2, 1).unwrap();
        assert!(s.records.iter().all(|r| r.polygon.area() > 4.0 * 18.0 * 10.0 * 0.9));
    }
}
