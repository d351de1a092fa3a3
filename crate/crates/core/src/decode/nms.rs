use crate::error::{Error, Result};
use crate::geometry::{FloatGrid, Orientation};

/// How equal maxima inside one window are resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TieRule {
    /// Only the first cell of a plateau (leftmost / topmost) survives.
    Leftmost,
    /// Every cell equal to its window maximum survives.
    #[default]
    KeepAll,
}

impl TieRule {
    pub fn as_str(self) -> &'static str {
        match self {
            TieRule::Leftmost => "leftmost",
            TieRule::KeepAll => "keep-all",
        }
    }
}

impl std::str::FromStr for TieRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "leftmost" | "topmost" => Ok(TieRule::Leftmost),
            "keep-all" | "keepall" => Ok(TieRule::KeepAll),
            other => Err(Error::InvalidConfig(format!("unknown tie rule `{other}`"))),
        }
    }
}

/// 1-D local-maximum suppression along rows (horizontal) or columns
/// (vertical). A cell keeps its value iff it is the maximum of the centered
/// `window` (clipped at the border); suppressed cells become 0.
pub fn directional_nms(map: &FloatGrid, orientation: Orientation, window: usize, ties: TieRule) -> Result<FloatGrid> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(Error::InvalidConfig(format!(
            "NMS window must be odd and positive, got {window}"
        )));
    }
    if orientation == Orientation::Vertical {
        return Ok(directional_nms(&map.transpose(), Orientation::Horizontal, window, ties)?.transpose());
    }
    let (h, w) = map.shape();
    let half = window / 2;
    let mut out = vec![0.0; h * w];
    for r in 0..h {
        let row = map.row(r);
        for c in 0..w {
            let v = row[c];
            let lo = c.saturating_sub(half);
            let hi = (c + half).min(w - 1);
            let keep = match ties {
                TieRule::KeepAll => row[lo..=hi].iter().all(|&x| x <= v),
                TieRule::Leftmost => row[lo..c].iter().all(|&x| x < v) && row[c + 1..=hi].iter().all(|&x| x <= v),
            };
            if keep {
                out[r * w + c] = v;
            }
        }
    }
    Ok(FloatGrid::new(h, w, out).expect("values copied from a valid grid"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row(v: &[f64]) -> FloatGrid {
        FloatGrid::new(1, v.len(), v.to_vec()).unwrap()
    }

    #[test]
    fn examples() {
        for ties in [TieRule::Leftmost, TieRule::KeepAll] {
            let out = directional_nms(&row(&[0.1, 0.9, 0.2]), Orientation::Horizontal, 3, ties).unwrap();
            assert_eq!(out.values(), &[0.0, 0.9, 0.0]);
            let g = row(&[0.3, 0.1, 0.7, 0.7]);
            assert_eq!(directional_nms(&g, Orientation::Horizontal, 1, ties).unwrap(), g);
        }
        let flat = row(&[0.5, 0.5, 0.5]);
        let out = directional_nms(&flat, Orientation::Horizontal, 3, TieRule::Leftmost).unwrap();
        assert_eq!(out.values(), &[0.5, 0.0, 0.0]);
        let out = directional_nms(&flat, Orientation::Horizontal, 3, TieRule::KeepAll).unwrap();
        assert_eq!(out.values(), &[0.5, 0.5, 0.5]);
        assert!(matches!(
            directional_nms(&flat, Orientation::Horizontal, 2, TieRule::KeepAll),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn vertical_uses_topmost() {
        let col = FloatGrid::new(3, 1, vec![0.5, 0.5, 0.2]).unwrap();
        let out = directional_nms(&col, Orientation::Vertical, 3, TieRule::Leftmost).unwrap();
        assert_eq!(out.values(), &[0.5, 0.0, 0.0]);
    }

    fn arb_map() -> impl Strategy<Value = FloatGrid> {
        (1usize..9, 1usize..9).prop_flat_map(|(h, w)| {
            // Few distinct levels so plateaus are common.
            prop::collection::vec(prop::sample::select(vec![0.0, 0.25, 0.5, 0.75, 1.0]), h * w)
                .prop_map(move |v| FloatGrid::new(h, w, v).unwrap())
        })
    }

    fn arb_rule() -> impl Strategy<Value = TieRule> {
        prop::sample::select(vec![TieRule::Leftmost, TieRule::KeepAll])
    }

    proptest! {
        #[test]
        fn idempotent(m in arb_map(), win in prop::sample::select(vec![1usize, 3, 5]), ties in arb_rule()) {
            for o in [Orientation::Horizontal, Orientation::Vertical] {
                let once = directional_nms(&m, o, win, ties).unwrap();
                prop_assert_eq!(directional_nms(&once, o, win, ties).unwrap(), once);
            }
        }

        #[test]
        fn transpose_swaps_direction(m in arb_map(), ties in arb_rule()) {
            let h = directional_nms(&m, Orientation::Horizontal, 3, ties).unwrap();
            let v = directional_nms(&m.transpose(), Orientation::Vertical, 3, ties).unwrap();
            prop_assert_eq!(h.transpose(), v);
        }

        #[test]
        fn only_removes(m in arb_map(), ties in arb_rule()) {
            let out = directional_nms(&m, Orientation::Horizontal, 3, ties).unwrap();
            for (a, b) in out.values().iter().zip(m.values()) {
                prop_assert!(*a == 0.0 || a == b);
            }
        }
    }
}
