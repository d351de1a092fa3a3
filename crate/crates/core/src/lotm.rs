//! Directional texture heads.
//!
//! Two parallel branches read the same feature stack: a 1×k kernel mixing
//! along rows and a k×1 kernel mixing along columns, each followed by a
//! sigmoid. Convolution here is correlation (no kernel flip) with zero
//! padding of `(k - 1) / 2` along the kernel axis only.

use std::fmt::Write as _;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{BitMask, FloatGrid, Orientation};
use crate::losses::balanced_bce;

/// Kernel size used when callers do not choose one.
pub const DEFAULT_KERNEL_SIZE: usize = 3;

/// Hand-set second-difference kernel `gain * [-1, 2, -1]` used as a stand-in
/// for trained weights in tests and the streak experiment.
pub const RIDGE_GAIN: f64 = 3.0;
pub const RIDGE_BIAS: f64 = -4.0;

#[derive(Debug, Clone, PartialEq)]
pub struct DirectionalKernel {
    orientation: Orientation,
    k: usize,
    channels_in: usize,
    /// `channels_in × k`, channel-major.
    weights: Vec<f64>,
    bias: f64,
}

impl DirectionalKernel {
    pub fn new(orientation: Orientation, k: usize, channels_in: usize, weights: Vec<f64>, bias: f64) -> Result<Self> {
        if k == 0 || k.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!("kernel size must be odd, got {k}")));
        }
        if channels_in == 0 {
            return Err(Error::InvalidConfig("kernel needs at least one input channel".into()));
        }
        if weights.len() != k * channels_in {
            return Err(Error::InvalidConfig(format!(
                "expected {} weights, got {}",
                k * channels_in,
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) || !bias.is_finite() {
            return Err(Error::InvalidConfig("kernel weights must be finite".into()));
        }
        Ok(Self {
            orientation,
            k,
            channels_in,
            weights,
            bias,
        })
    }

    pub fn zeros(orientation: Orientation, k: usize, channels_in: usize) -> Result<Self> {
        Self::new(orientation, k, channels_in, vec![0.0; k * channels_in], 0.0)
    }

    /// Weights and bias uniform in `[-0.1, 0.1]`.
    pub fn random<R: Rng>(orientation: Orientation, k: usize, channels_in: usize, rng: &mut R) -> Result<Self> {
        let weights = (0..k * channels_in).map(|_| rng.gen_range(-0.1..=0.1)).collect();
        let bias = rng.gen_range(-0.1..=0.1);
        Self::new(orientation, k, channels_in, weights, bias)
    }

    /// Single-channel `[-1, 2, -1]` ridge detector scaled by [`RIDGE_GAIN`].
    pub fn ridge(orientation: Orientation) -> Self {
        let w = vec![-RIDGE_GAIN, 2.0 * RIDGE_GAIN, -RIDGE_GAIN];
        Self::new(orientation, 3, 1, w, RIDGE_BIAS).expect("constant kernel is valid")
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn channels_in(&self) -> usize {
        self.channels_in
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    /// Parameters flattened as weights followed by bias.
    pub fn params(&self) -> Vec<f64> {
        let mut p = self.weights.clone();
        p.push(self.bias);
        p
    }

    pub fn with_params(&self, params: &[f64]) -> Result<Self> {
        if params.len() != self.weights.len() + 1 {
            return Err(Error::InvalidInput(format!(
                "expected {} parameters, got {}",
                self.weights.len() + 1,
                params.len()
            )));
        }
        let (w, b) = params.split_at(self.weights.len());
        Self::new(self.orientation, self.k, self.channels_in, w.to_vec(), b[0])
    }

    fn step(&mut self, gw: &[f64], gb: f64, lr: f64) {
        for (w, g) in self.weights.iter_mut().zip(gw) {
            *w -= lr * g;
        }
        self.bias -= lr * gb;
    }

    /// Text checkpoint: `key = value` lines with 17 significant digits.
    pub fn to_checkpoint(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "orientation = {}", self.orientation.as_str());
        let _ = writeln!(s, "k = {}", self.k);
        let _ = writeln!(s, "channels = {}", self.channels_in);
        let w: Vec<String> = self.weights.iter().map(|w| format!("{w:.16e}")).collect();
        let _ = writeln!(s, "weights = {}", w.join(" "));
        let _ = writeln!(s, "bias = {:.16e}", self.bias);
        s
    }

    pub fn from_checkpoint(text: &str) -> Result<Self> {
        let (mut orientation, mut k, mut channels, mut weights, mut bias) = (None, None, None, None, None);
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parse_err = |message: String| Error::Parse { line: i + 1, message };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| parse_err(format!("expected key = value, got {line:?}")))?;
            let value = value.trim();
            match key.trim() {
                "orientation" => orientation = Some(Orientation::from_str(value)?),
                "k" => k = Some(value.parse::<usize>().map_err(|e| parse_err(e.to_string()))?),
                "channels" => channels = Some(value.parse::<usize>().map_err(|e| parse_err(e.to_string()))?),
                "weights" => {
                    weights = Some(
                        value
                            .split_whitespace()
                            .map(|t| t.parse::<f64>().map_err(|e| parse_err(format!("{t:?}: {e}"))))
                            .collect::<Result<Vec<_>>>()?,
                    )
                }
                "bias" => bias = Some(value.parse::<f64>().map_err(|e| parse_err(e.to_string()))?),
                other => return Err(parse_err(format!("unknown key {other:?}"))),
            }
        }
        let missing = |name: &str| Error::Format(format!("checkpoint is missing {name}"));
        Self::new(
            orientation.ok_or_else(|| missing("orientation"))?,
            k.ok_or_else(|| missing("k"))?,
            channels.ok_or_else(|| missing("channels"))?,
            weights.ok_or_else(|| missing("weights"))?,
            bias.ok_or_else(|| missing("bias"))?,
        )
    }
}

/// Equal-shape input channels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStack {
    channels: Vec<FloatGrid>,
}

impl FeatureStack {
    pub fn new(channels: Vec<FloatGrid>) -> Result<Self> {
        let first = channels
            .first()
            .ok_or_else(|| Error::InvalidInput("feature stack needs a channel".into()))?;
        for c in &channels[1..] {
            first.same_shape(c)?;
        }
        Ok(Self { channels })
    }

    pub fn single(grid: FloatGrid) -> Self {
        Self { channels: vec![grid] }
    }

    pub fn channels(&self) -> &[FloatGrid] {
        &self.channels
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.channels[0].shape()
    }

    pub fn transpose(&self) -> Self {
        Self {
            channels: self.channels.iter().map(FloatGrid::transpose).collect(),
        }
    }
}

/// Value of channel `c` at `(r, col)` shifted by `off` along the kernel axis,
/// or 0 outside the grid.
#[inline]
fn tap(grid: &FloatGrid, orientation: Orientation, r: usize, c: usize, off: isize) -> f64 {
    let (h, w) = grid.shape();
    match orientation {
        Orientation::Horizontal => {
            let cc = c as isize + off;
            if cc < 0 || cc >= w as isize {
                0.0
            } else {
                grid.get(r, cc as usize)
            }
        }
        Orientation::Vertical => {
            let rr = r as isize + off;
            if rr < 0 || rr >= h as isize {
                0.0
            } else {
                grid.get(rr as usize, c)
            }
        }
    }
}

pub fn directional_conv(features: &FeatureStack, kernel: &DirectionalKernel) -> Result<FloatGrid> {
    if kernel.channels_in != features.num_channels() {
        return Err(Error::InvalidConfig(format!(
            "kernel expects {} channels, features have {}",
            kernel.channels_in,
            features.num_channels()
        )));
    }
    let (h, w) = features.shape();
    let half = (kernel.k / 2) as isize;
    let mut out = vec![kernel.bias; h * w];
    for (ci, grid) in features.channels().iter().enumerate() {
        let kw = &kernel.weights[ci * kernel.k..(ci + 1) * kernel.k];
        for r in 0..h {
            for c in 0..w {
                let mut acc = 0.0;
                for (t, &wt) in kw.iter().enumerate() {
                    acc += wt * tap(grid, kernel.orientation, r, c, t as isize - half);
                }
                out[r * w + c] += acc;
            }
        }
    }
    FloatGrid::new(h, w, out).map_err(|_| Error::NumericalError("convolution overflowed".into()))
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid_grid(grid: &FloatGrid) -> FloatGrid {
    grid.map(sigmoid).expect("sigmoid output is finite")
}

fn check_pair(hk: &DirectionalKernel, vk: &DirectionalKernel) -> Result<()> {
    if hk.orientation != Orientation::Horizontal || vk.orientation != Orientation::Vertical {
        return Err(Error::InvalidConfig(format!(
            "expected horizontal and vertical kernels, got {} and {}",
            hk.orientation.as_str(),
            vk.orientation.as_str()
        )));
    }
    Ok(())
}

/// Returns `(Hmap, Vmap)`.
pub fn lotm_forward(
    features: &FeatureStack,
    hk: &DirectionalKernel,
    vk: &DirectionalKernel,
) -> Result<(FloatGrid, FloatGrid)> {
    check_pair(hk, vk)?;
    Ok((
        sigmoid_grid(&directional_conv(features, hk)?),
        sigmoid_grid(&directional_conv(features, vk)?),
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LotmGradients {
    pub loss: f64,
    pub h_weights: Vec<f64>,
    pub h_bias: f64,
    pub v_weights: Vec<f64>,
    pub v_bias: f64,
}

impl LotmGradients {
    /// Gradient laid out like `[hk.params(), vk.params()]`.
    pub fn flat(&self) -> Vec<f64> {
        let mut g = self.h_weights.clone();
        g.push(self.h_bias);
        g.extend_from_slice(&self.v_weights);
        g.push(self.v_bias);
        g
    }
}

/// One branch: balanced BCE of `sigmoid(conv)` and its parameter gradient.
fn branch_backward(
    features: &FeatureStack,
    kernel: &DirectionalKernel,
    label: &BitMask,
    ignore: Option<&BitMask>,
) -> Result<(f64, Vec<f64>, f64)> {
    let prob = sigmoid_grid(&directional_conv(features, kernel)?);
    let (loss, d_prob) = balanced_bce(&prob, label, ignore)?;
    let (h, w) = prob.shape();
    let dz: Vec<f64> = prob
        .values()
        .iter()
        .zip(d_prob.values())
        .map(|(&p, &g)| g * p * (1.0 - p))
        .collect();
    let half = (kernel.k / 2) as isize;
    let mut gw = vec![0.0; kernel.weights.len()];
    for (ci, grid) in features.channels().iter().enumerate() {
        for t in 0..kernel.k {
            let off = t as isize - half;
            let mut acc = 0.0;
            for r in 0..h {
                for c in 0..w {
                    let g = dz[r * w + c];
                    if g != 0.0 {
                        acc += g * tap(grid, kernel.orientation, r, c, off);
                    }
                }
            }
            gw[ci * kernel.k + t] = acc;
        }
    }
    let gb = dz.iter().sum();
    Ok((loss, gw, gb))
}

/// Loss `bce(Hmap, label) + bce(Vmap, label)` and its exact gradient with
/// respect to both kernels.
pub fn lotm_backward(
    features: &FeatureStack,
    hk: &DirectionalKernel,
    vk: &DirectionalKernel,
    label: &BitMask,
    ignore: Option<&BitMask>,
) -> Result<LotmGradients> {
    check_pair(hk, vk)?;
    if features.shape() != label.shape() {
        return Err(Error::InvalidGrid(format!(
            "features {:?} vs label {:?}",
            features.shape(),
            label.shape()
        )));
    }
    let (lh, h_weights, h_bias) = branch_backward(features, hk, label, ignore)?;
    let (lv, v_weights, v_bias) = branch_backward(features, vk, label, ignore)?;
    Ok(LotmGradients {
        loss: lh + lv,
        h_weights,
        h_bias,
        v_weights,
        v_bias,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub steps: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub k: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 200,
            learning_rate: 50.0,
            seed: 0,
            k: DEFAULT_KERNEL_SIZE,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub features: FeatureStack,
    pub label: BitMask,
    pub ignore: Option<BitMask>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedLotm {
    pub hk: DirectionalKernel,
    pub vk: DirectionalKernel,
    /// Mean loss over the dataset before each update.
    pub losses: Vec<f64>,
}

/// Full-batch gradient descent from seeded random kernels.
///
/// Per-example gradients may be computed in parallel; they are summed in
/// dataset order so results do not depend on the thread count.
pub fn train_toy(dataset: &[TrainingExample], cfg: &TrainConfig) -> Result<TrainedLotm> {
    let first = dataset
        .first()
        .ok_or_else(|| Error::InvalidInput("training set is empty".into()))?;
    if cfg.steps == 0 {
        return Err(Error::InvalidConfig("steps must be at least 1".into()));
    }
    if !(cfg.learning_rate >= 0.0) || !cfg.learning_rate.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "learning rate must be finite and non-negative, got {}",
            cfg.learning_rate
        )));
    }
    let channels = first.features.num_channels();
    for (i, ex) in dataset.iter().enumerate() {
        if ex.features.num_channels() != channels {
            return Err(Error::InvalidInput(format!(
                "example {i} has {} channels, expected {channels}",
                ex.features.num_channels()
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut hk = DirectionalKernel::random(Orientation::Horizontal, cfg.k, channels, &mut rng)?;
    let mut vk = DirectionalKernel::random(Orientation::Vertical, cfg.k, channels, &mut rng)?;
    let n = dataset.len() as f64;
    let mut losses = Vec::with_capacity(cfg.steps);
    for _ in 0..cfg.steps {
        let per_example = dataset
            .par_iter()
            .map(|ex| lotm_backward(&ex.features, &hk, &vk, &ex.label, ex.ignore.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        let mut total = per_example[0].clone();
        for g in &per_example[1..] {
            total.loss += g.loss;
            total.h_bias += g.h_bias;
            total.v_bias += g.v_bias;
            for (a, b) in total.h_weights.iter_mut().zip(&g.h_weights) {
                *a += b;
            }
            for (a, b) in total.v_weights.iter_mut().zip(&g.v_weights) {
                *a += b;
            }
        }
        losses.push(total.loss / n);
        let lr = cfg.learning_rate / n;
        hk.step(&total.h_weights, total.h_bias, lr);
        vk.step(&total.v_weights, total.v_bias, lr);
        if !hk.params().iter().chain(&vk.params()).all(|v| v.is_finite()) {
            return Err(Error::NumericalError("kernel weights diverged".into()));
        }
    }
    Ok(TrainedLotm { hk, vk, losses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::gradient_check;
    use proptest::prelude::*;
    use rand::Rng;

    fn grid(h: usize, w: usize, v: &[f64]) -> FloatGrid {
        FloatGrid::new(h, w, v.to_vec()).unwrap()
    }

    fn random_grid(rng: &mut ChaCha8Rng, h: usize, w: usize) -> FloatGrid {
        FloatGrid::from_fn(h, w, |_, _| rng.gen_range(-1.0..1.0)).unwrap()
    }

    #[test]
    fn unit_kernel_is_identity() {
        let g = grid(2, 3, &[1.0, -2.0, 3.0, 0.5, 0.25, 9.0]);
        let k = DirectionalKernel::new(Orientation::Horizontal, 1, 1, vec![1.0], 0.0).unwrap();
        assert_eq!(directional_conv(&FeatureStack::single(g.clone()), &k).unwrap(), g);
    }

    #[test]
    fn step_edge_response() {
        let g = grid(1, 5, &[0.0, 0.0, 1.0, 1.0, 1.0]);
        let k = DirectionalKernel::new(Orientation::Horizontal, 3, 1, vec![-0.5, 0.0, 0.5], 0.0).unwrap();
        let out = directional_conv(&FeatureStack::single(g), &k).unwrap();
        // Zero padding makes the last column see a drop.
        assert_eq!(out.values(), &[0.0, 0.5, 0.5, 0.0, -0.5]);
    }

    #[test]
    fn separable_gaussian_matches_full_2d() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = random_grid(&mut rng, 7, 9);
        let f = [0.25, 0.5, 0.25];
        let hk = DirectionalKernel::new(Orientation::Horizontal, 3, 1, f.to_vec(), 0.0).unwrap();
        let vk = DirectionalKernel::new(Orientation::Vertical, 3, 1, f.to_vec(), 0.0).unwrap();
        let tmp = directional_conv(&FeatureStack::single(g.clone()), &hk).unwrap();
        let sep = directional_conv(&FeatureStack::single(tmp), &vk).unwrap();
        let full = FloatGrid::from_fn(7, 9, |r, c| {
            let mut acc = 0.0;
            for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    let (rr, cc) = (r as i64 + dr, c as i64 + dc);
                    if rr >= 0 && cc >= 0 && rr < 7 && cc < 9 {
                        acc += f[(dr + 1) as usize] * f[(dc + 1) as usize] * g.get(rr as usize, cc as usize);
                    }
                }
            }
            acc
        })
        .unwrap();
        for (a, b) in sep.values().iter().zip(full.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn channel_mismatch_rejected() {
        let k = DirectionalKernel::zeros(Orientation::Horizontal, 3, 2).unwrap();
        let f = FeatureStack::single(FloatGrid::zeros(3, 3).unwrap());
        assert!(matches!(directional_conv(&f, &k), Err(Error::InvalidConfig(_))));
        assert!(DirectionalKernel::zeros(Orientation::Horizontal, 4, 1).is_err());
    }

    #[test]
    fn sigmoid_examples() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(3f64.ln()) - 0.75).abs() < 1e-15);
        assert!(sigmoid(40.0) > 1.0 - 1e-15 && sigmoid(-40.0) < 1e-15);
    }

    #[test]
    fn forward_examples() {
        let f = FeatureStack::single(FloatGrid::filled(4, 4, 0.3).unwrap());
        let hk = DirectionalKernel::zeros(Orientation::Horizontal, 3, 1).unwrap();
        let vk = DirectionalKernel::zeros(Orientation::Vertical, 3, 1).unwrap();
        let (hm, vm) = lotm_forward(&f, &hk, &vk).unwrap();
        assert!(hm.values().iter().chain(vm.values()).all(|&v| v == 0.5));
        assert!(matches!(lotm_forward(&f, &vk, &hk), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn transposed_input_swaps_branches() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let f = FeatureStack::single(random_grid(&mut rng, 6, 6));
        let hk = DirectionalKernel::random(Orientation::Horizontal, 3, 1, &mut rng).unwrap();
        let vk = DirectionalKernel::random(Orientation::Vertical, 3, 1, &mut rng).unwrap();
        let hk_t = DirectionalKernel::new(Orientation::Horizontal, 3, 1, vk.weights().to_vec(), vk.bias()).unwrap();
        let vk_t = DirectionalKernel::new(Orientation::Vertical, 3, 1, hk.weights().to_vec(), hk.bias()).unwrap();
        let (hm, vm) = lotm_forward(&f, &hk, &vk).unwrap();
        let (hm_t, vm_t) = lotm_forward(&f.transpose(), &hk_t, &vk_t).unwrap();
        assert_eq!(hm_t, vm.transpose());
        assert_eq!(vm_t, hm.transpose());
    }

    fn check_lotm_grad(seed: u64, h: usize, w: usize, k: usize, channels: usize) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = FeatureStack::new((0..channels).map(|_| random_grid(&mut rng, h, w)).collect()).unwrap();
        let label = BitMask::from_fn(h, w, |_, _| rng.gen_bool(0.3)).unwrap();
        let hk = DirectionalKernel::random(Orientation::Horizontal, k, channels, &mut rng).unwrap();
        let vk = DirectionalKernel::random(Orientation::Vertical, k, channels, &mut rng).unwrap();
        let split = hk.params().len();
        let params: Vec<f64> = hk.params().into_iter().chain(vk.params()).collect();
        gradient_check(
            |p| {
                let g = lotm_backward(
                    &f,
                    &hk.with_params(&p[..split])?,
                    &vk.with_params(&p[split..])?,
                    &label,
                    None,
                )?;
                Ok((g.loss, g.flat()))
            },
            &params,
            1e-5,
        )
        .unwrap()
        .max_rel_error
    }

    #[test]
    fn backward_matches_finite_differences() {
        for (i, k) in [1, 3, 5, 7].into_iter().enumerate() {
            assert!(check_lotm_grad(i as u64, 8, 8, k, 1) < 1e-4);
        }
        assert!(check_lotm_grad(9, 5, 7, 3, 2) < 1e-4);
    }

    #[test]
    fn all_ignored_gives_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = FeatureStack::single(random_grid(&mut rng, 4, 4));
        let hk = DirectionalKernel::random(Orientation::Horizontal, 3, 1, &mut rng).unwrap();
        let vk = DirectionalKernel::random(Orientation::Vertical, 3, 1, &mut rng).unwrap();
        let label = BitMask::from_fn(4, 4, |r, _| r == 1).unwrap();
        let all = BitMask::from_fn(4, 4, |_, _| true).unwrap();
        let g = lotm_backward(&f, &hk, &vk, &label, Some(&all)).unwrap();
        assert_eq!(g.loss, 0.0);
        assert!(g.flat().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn near_perfect_fit_has_tiny_gradient() {
        // Label = bright cells; a steep identity kernel reproduces it.
        let g = FloatGrid::from_fn(6, 6, |r, c| if (r + c) % 3 == 0 { 1.0 } else { -1.0 }).unwrap();
        let label = BitMask::from_fn(6, 6, |r, c| (r + c) % 3 == 0).unwrap();
        let hk = DirectionalKernel::new(Orientation::Horizontal, 1, 1, vec![30.0], 0.0).unwrap();
        let vk = DirectionalKernel::new(Orientation::Vertical, 1, 1, vec![30.0], 0.0).unwrap();
        let out = lotm_backward(&FeatureStack::single(g), &hk, &vk, &label, None).unwrap();
        // Outputs saturate past the probability clamp.
        assert!(out.loss < 1e-6);
        assert!(out.flat().iter().all(|v| v.abs() < 1e-10));
    }

    fn toy_dataset() -> Vec<TrainingExample> {
        let g = FloatGrid::from_fn(10, 10, |r, c| {
            if (3..7).contains(&r) && (2..8).contains(&c) {
                1.0
            } else {
                0.0
            }
        })
        .unwrap();
        let label = BitMask::from_fn(10, 10, |r, c| (3..7).contains(&r) && (2..8).contains(&c)).unwrap();
        vec![TrainingExample {
            features: FeatureStack::single(g),
            label,
            ignore: None,
        }]
    }

    #[test]
    fn training_halves_loss() {
        let cfg = TrainConfig {
            steps: 300,
            learning_rate: 5.0,
            seed: 4,
            k: 3,
        };
        let t = train_toy(&toy_dataset(), &cfg).unwrap();
        assert!(
            t.losses.last().unwrap() < &(0.5 * t.losses[0]),
            "{:?}",
            (t.losses[0], t.losses.last())
        );
    }

    #[test]
    fn zero_lr_is_flat_and_seed_is_deterministic() {
        let cfg = TrainConfig {
            steps: 5,
            learning_rate: 0.0,
            seed: 4,
            k: 3,
        };
        let t = train_toy(&toy_dataset(), &cfg).unwrap();
        assert!(t.losses.iter().all(|&l| l == t.losses[0]));
        let cfg = TrainConfig {
            learning_rate: 1.0,
            ..cfg
        };
        let a = train_toy(&toy_dataset(), &cfg).unwrap();
        let b = train_toy(&toy_dataset(), &cfg).unwrap();
        assert_eq!(a, b);
        assert!(matches!(train_toy(&[], &cfg), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let k = DirectionalKernel::random(Orientation::Vertical, 5, 2, &mut rng).unwrap();
        assert_eq!(DirectionalKernel::from_checkpoint(&k.to_checkpoint()).unwrap(), k);
        let bad = k.to_checkpoint().replace("k = 5", "k = 4");
        assert!(DirectionalKernel::from_checkpoint(&bad).is_err());
        assert!(DirectionalKernel::from_checkpoint("k = 3\n").is_err());
    }

    #[test]
    fn ridge_kernel_fires_across_a_line_only() {
        let g = FloatGrid::from_fn(9, 9, |_, c| if c == 4 { 1.0 } else { 0.0 }).unwrap();
        let f = FeatureStack::single(g);
        let (hm, vm) = lotm_forward(
            &f,
            &DirectionalKernel::ridge(Orientation::Horizontal),
            &DirectionalKernel::ridge(Orientation::Vertical),
        )
        .unwrap();
        assert!(hm.get(4, 4) > 0.8);
        assert!(vm.get(4, 4) < 0.05);
    }

    proptest! {
        #[test]
        fn horizontal_conv_commutes_with_row_permutation(seed in 0u64..1000, rot in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = random_grid(&mut rng, 6, 5);
            let k = DirectionalKernel::random(Orientation::Horizontal, 3, 1, &mut rng).unwrap();
            let perm = |g: &FloatGrid| FloatGrid::from_fn(6, 5, |r, c| g.get((r + rot) % 6, c)).unwrap();
            let a = perm(&directional_conv(&FeatureStack::single(g.clone()), &k).unwrap());
            let b = directional_conv(&FeatureStack::single(perm(&g)), &k).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn vertical_conv_commutes_with_column_permutation(seed in 0u64..1000, rot in 1usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = random_grid(&mut rng, 6, 5);
            let k = DirectionalKernel::random(Orientation::Vertical, 5, 1, &mut rng).unwrap();
            let perm = |g: &FloatGrid| FloatGrid::from_fn(6, 5, |r, c| g.get(r, (c + rot) % 5)).unwrap();
            let a = perm(&directional_conv(&FeatureStack::single(g.clone()), &k).unwrap());
            let b = directional_conv(&FeatureStack::single(perm(&g)), &k).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn forward_is_strictly_inside_unit_interval(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let f = FeatureStack::single(random_grid(&mut rng, 5, 5));
            let hk = DirectionalKernel::random(Orientation::Horizontal, 3, 1, &mut rng).unwrap();
            let vk = DirectionalKernel::random(Orientation::Vertical, 3, 1, &mut rng).unwrap();
            let (hm, vm) = lotm_forward(&f, &hk, &vk).unwrap();
            prop_assert!(hm.values().iter().chain(vm.values()).all(|&v| v > 0.0 && v < 1.0));
        }
    }
}
