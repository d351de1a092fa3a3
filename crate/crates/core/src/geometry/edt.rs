use super::{BitMask, FloatGrid};

/// Exact Euclidean distance transform.
///
/// Every set cell receives the distance between its center and the nearest
/// unset cell center; unset cells get 0. Positions outside the grid count as
/// unset, so a foreground cell on the border is at most 1 away from
/// background.
///
/// Two separable passes of the lower-envelope-of-parabolas algorithm
/// (Felzenszwalb & Huttenlocher) over a grid padded by one background ring.
/// Squared distances stay integral, so results match a brute-force scan bit
/// for bit.
pub fn euclidean_distance_transform(mask: &BitMask) -> FloatGrid {
    let (h, w) = mask.shape();
    let (ph, pw) = (h + 2, w + 2);
    let inf = ((ph * ph + pw * pw) as f64) * 4.0;
    let mut sq = vec![0.0f64; ph * pw];
    for r in 0..h {
        for c in 0..w {
            if mask.get(r, c) {
                sq[(r + 1) * pw + c + 1] = inf;
            }
        }
    }

    let mut f = vec![0.0; ph.max(pw)];
    let mut d = vec![0.0; ph.max(pw)];
    let mut v = vec![0usize; ph.max(pw)];
    let mut z = vec![0.0; ph.max(pw) + 1];

    for c in 0..pw {
        for r in 0..ph {
            f[r] = sq[r * pw + c];
        }
        lower_envelope(&f[..ph], &mut d[..ph], &mut v, &mut z);
        for r in 0..ph {
            sq[r * pw + c] = d[r];
        }
    }
    for r in 0..ph {
        f[..pw].copy_from_slice(&sq[r * pw..(r + 1) * pw]);
        lower_envelope(&f[..pw], &mut d[..pw], &mut v, &mut z);
        sq[r * pw..(r + 1) * pw].copy_from_slice(&d[..pw]);
    }

    let values = (0..h)
        .flat_map(|r| (0..w).map(move |c| (r, c)))
        .map(|(r, c)| sq[(r + 1) * pw + c + 1].sqrt())
        .collect();
    FloatGrid::new(h, w, values).expect("distance transform output is finite")
}

/// 1-D squared distance transform of sampled function `f` into `d`.
fn lower_envelope(f: &[f64], d: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    let intersect = |p: usize, q: usize| {
        let (pf, qf) = (p as f64, q as f64);
        ((f[q] + qf * qf) - (f[p] + pf * pf)) / (2.0 * (qf - pf))
    };
    for q in 1..n {
        let mut s = intersect(v[k], q);
        // z[0] is -inf, so this never walks past the first parabola.
        while s <= z[k] {
            k -= 1;
            s = intersect(v[k], q);
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, out) in d.iter_mut().enumerate().take(n) {
        let qf = q as f64;
        while z[k + 1] < qf {
            k += 1;
        }
        let p = v[k] as f64;
        *out = (qf - p) * (qf - p) + f[v[k]];
    }
}
