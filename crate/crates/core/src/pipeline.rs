//! End-to-end runs: gradient suites, the synthetic demo and the streak
//! experiment.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::decode::{decode_image, CandidateMode, ContourCandidates, DecodeConfig};
use crate::error::{Error, Result};
use crate::eval::{match_detections, Detection, MatchResult, Prf, DEFAULT_IOU_THRESHOLD};
use crate::geometry::{AABox, BitMask, FloatGrid, Orientation};
use crate::io::{generate_synthetic_scene, SyntheticScene};
use crate::label::{build_training_sample, DEFAULT_BAND};
use crate::losses::{balanced_bce, gradient_check, iou_loss};
use crate::lotm::{
    lotm_backward, lotm_forward, train_toy, DirectionalKernel, FeatureStack, TrainConfig, TrainingExample,
};

pub const GRADCHECK_STEP: f64 = 1e-5;
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;
pub const GRADCHECK_INSTANCES: usize = 100;

/// Worst relative error over one family of random instances.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub name: &'static str,
    pub instances: usize,
    pub max_rel_error: f64,
    pub worst_instance: usize,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < GRADCHECK_TOLERANCE
    }
}

fn suite<F>(name: &'static str, instances: usize, seed: u64, run: F) -> Result<SuiteReport>
where
    F: Fn(usize, &mut ChaCha8Rng) -> Result<f64> + Sync,
{
    let errors = (0..instances)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            run(i, &mut rng)
        })
        .collect::<Result<Vec<f64>>>()?;
    let (worst_instance, max_rel_error) =
        errors
            .iter()
            .copied()
            .enumerate()
            .fold((0, 0.0), |acc, (i, e)| if e > acc.1 { (i, e) } else { acc });
    Ok(SuiteReport {
        name,
        instances,
        max_rel_error,
        worst_instance,
    })
}

/// Overlapping pred/gt box pairs whose edges all sit at least `10 * step`
/// from every kink of the loss.
fn iou_instance(rng: &mut ChaCha8Rng) -> (AABox, AABox) {
    let gap = 10.0 * GRADCHECK_STEP;
    loop {
        let mut coords = [0.0f64; 8];
        for axis in 0..2 {
            let lo = rng.gen_range(0.0..20.0);
            let len = rng.gen_range(2.0..20.0);
            let plo = lo + rng.gen_range(-0.8..0.8) * len;
            let plen = len * rng.gen_range(0.5..1.5);
            coords[axis] = plo;
            coords[axis + 2] = plo + plen;
            coords[4 + axis] = lo;
            coords[4 + axis + 2] = lo + len;
        }
        let clear = (0..2).all(|axis| {
            let p = [coords[axis], coords[axis + 2]];
            let g = [coords[4 + axis], coords[4 + axis + 2]];
            p.iter().all(|a| g.iter().all(|b| (a - b).abs() > gap)) && p[1] > g[0] + gap && g[1] > p[0] + gap
        });
        if clear {
            let pred = AABox::from_array([coords[0], coords[1], coords[2], coords[3]]).expect("ordered");
            let gt = AABox::from_array([coords[4], coords[5], coords[6], coords[7]]).expect("ordered");
            return (pred, gt);
        }
    }
}

pub fn iou_loss_suite(seed: u64, instances: usize) -> Result<SuiteReport> {
    suite("iou_loss", instances, seed, |_, rng| {
        let (pred, gt) = iou_instance(rng);
        let report = gradient_check(
            |p| {
                let b = AABox::new(p[0], p[1], p[2], p[3])?;
                let (l, g) = iou_loss(&b, &gt);
                Ok((l, g.to_vec()))
            },
            &pred.to_array(),
            GRADCHECK_STEP,
        )?;
        Ok(report.max_rel_error)
    })
}

pub fn balanced_bce_suite(seed: u64, instances: usize) -> Result<SuiteReport> {
    suite("balanced_bce", instances, seed, |_, rng| {
        let (h, w) = (rng.gen_range(2..9), rng.gen_range(2..9));
        let pred: Vec<f64> = (0..h * w).map(|_| rng.gen_range(0.05..0.95)).collect();
        let label = BitMask::new(h, w, (0..h * w).map(|_| rng.gen_bool(0.3)).collect())?;
        let ignore = rng
            .gen_bool(0.5)
            .then(|| BitMask::new(h, w, (0..h * w).map(|_| rng.gen_bool(0.2)).collect()))
            .transpose()?;
        let report = gradient_check(
            |p| {
                let grid = FloatGrid::new(h, w, p.to_vec())?;
                let (l, g) = balanced_bce(&grid, &label, ignore.as_ref())?;
                Ok((l, g.values().to_vec()))
            },
            &pred,
            GRADCHECK_STEP,
        )?;
        Ok(report.max_rel_error)
    })
}

/// Kernel sizes cycle through 1, 3, 5 and 7 across instances.
pub fn lotm_suite(seed: u64, instances: usize) -> Result<SuiteReport> {
    suite("lotm", instances, seed, |i, rng| {
        let k = [1, 3, 5, 7][i % 4];
        let (h, w) = (rng.gen_range(3..9), rng.gen_range(3..9));
        let channels = rng.gen_range(1..3);
        let features = FeatureStack::new(
            (0..channels)
                .map(|_| FloatGrid::from_fn(h, w, |_, _| rng.gen_range(-1.0..1.0)))
                .collect::<Result<Vec<_>>>()?,
        )?;
        let label = BitMask::new(h, w, (0..h * w).map(|_| rng.gen_bool(0.4)).collect())?;
        let hk = DirectionalKernel::random(Orientation::Horizontal, k, channels, rng)?;
        let vk = DirectionalKernel::random(Orientation::Vertical, k, channels, rng)?;
        let split = hk.params().len();
        let params: Vec<f64> = hk.params().into_iter().chain(vk.params()).collect();
        let report = gradient_check(
            |p| {
                let (a, b) = p.split_at(split);
                let g = lotm_backward(&features, &hk.with_params(a)?, &vk.with_params(b)?, &label, None)?;
                Ok((g.loss, g.flat()))
            },
            &params,
            GRADCHECK_STEP,
        )?;
        Ok(report.max_rel_error)
    })
}

/// All three suites, each over `instances` seeded random cases.
pub fn run_gradient_suites(seed: u64, instances: usize) -> Result<Vec<SuiteReport>> {
    Ok(vec![
        iou_loss_suite(seed, instances)?,
        balanced_bce_suite(seed, instances)?,
        lotm_suite(seed, instances)?,
    ])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DemoConfig {
    pub seed: u64,
    pub height: usize,
    pub width: usize,
    pub train_scenes: usize,
    pub test_scenes: usize,
    pub texts_per_scene: usize,
    pub streaks_per_scene: usize,
    pub band: f64,
    pub iou_threshold: f64,
    pub train: TrainConfig,
    pub decode: DecodeConfig,
}

impl Default for DemoConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            height: 720,
            width: 1280,
            train_scenes: 16,
            test_scenes: 8,
            texts_per_scene: 3,
            streaks_per_scene: 2,
            band: DEFAULT_BAND,
            iou_threshold: DEFAULT_IOU_THRESHOLD,
            train: TrainConfig::default(),
            decode: DecodeConfig::default(),
        }
    }
}

/// One held-out scene after decoding.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneOutcome {
    pub seed: u64,
    pub scene: SyntheticScene,
    pub hmap: FloatGrid,
    pub vmap: FloatGrid,
    pub candidates: ContourCandidates,
    pub detections: Vec<Detection>,
    pub matching: MatchResult,
    /// Candidates lying on streak pixels.
    pub streak_candidates: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoReport {
    pub hk: DirectionalKernel,
    pub vk: DirectionalKernel,
    /// Mean training loss before each step.
    pub losses: Vec<f64>,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub prf: Prf,
    pub streak_candidates: usize,
    pub streak_pixels: usize,
    pub scenes: Vec<SceneOutcome>,
}

impl DemoReport {
    /// `1 - last / first` over the loss curve.
    pub fn loss_reduction(&self) -> f64 {
        match (self.losses.first(), self.losses.last()) {
            (Some(&a), Some(&b)) if a > 0.0 => 1.0 - b / a,
            _ => 0.0,
        }
    }
}

const TEST_SEED_OFFSET: u64 = 1 << 32;

fn scene_seed(seed: u64, index: u64) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(index)
}

fn scene(cfg: &DemoConfig, seed: u64) -> Result<SyntheticScene> {
    generate_synthetic_scene(seed, cfg.height, cfg.width, cfg.texts_per_scene, cfg.streaks_per_scene)
}

fn streak_union(scene: &SyntheticScene) -> Result<BitMask> {
    let (h, w) = scene.image.shape();
    let mut m = BitMask::empty(h, w)?;
    for s in &scene.streaks {
        m.union_with(&s.mask(h, w)?)?;
    }
    Ok(m)
}

fn count_on(candidates: &ContourCandidates, mask: &BitMask) -> usize {
    candidates.points.iter().filter(|c| mask.get(c.row, c.col)).count()
}

/// Trains the toy heads on synthetic scenes, then decodes and scores
/// held-out scenes.
pub fn run_demo(cfg: &DemoConfig) -> Result<DemoReport> {
    if cfg.train_scenes == 0 || cfg.test_scenes == 0 {
        return Err(Error::InvalidConfig(
            "demo needs at least one train and one test scene".into(),
        ));
    }
    cfg.decode.validate()?;
    let train: Vec<TrainingExample> = (0..cfg.train_scenes as u64)
        .into_par_iter()
        .map(|i| {
            let s = scene(cfg, scene_seed(cfg.seed, i))?;
            let sample = build_training_sample(&s.records, cfg.height, cfg.width, cfg.band)?;
            Ok(TrainingExample {
                features: FeatureStack::single(s.image),
                label: sample.contour,
                ignore: None,
            })
        })
        .collect::<Result<_>>()?;
    let trained = train_toy(
        &train,
        &TrainConfig {
            seed: cfg.seed,
            ..cfg.train
        },
    )?;

    let scenes: Vec<SceneOutcome> = (0..cfg.test_scenes as u64)
        .into_par_iter()
        .map(|i| {
            let seed = scene_seed(cfg.seed, TEST_SEED_OFFSET + i);
            let s = scene(cfg, seed)?;
            let (hmap, vmap) = lotm_forward(&FeatureStack::single(s.image.clone()), &trained.hk, &trained.vk)?;
            let (detections, candidates) = decode_image(&hmap, &vmap, &cfg.decode)?;
            let matching = match_detections(&detections, &s.records, cfg.iou_threshold, cfg.decode.iou_resolution)?;
            let streak_candidates = count_on(&candidates, &streak_union(&s)?);
            Ok(SceneOutcome {
                seed,
                scene: s,
                hmap,
                vmap,
                candidates,
                detections,
                matching,
                streak_candidates,
            })
        })
        .collect::<Result<_>>()?;

    let (tp, fp, fn_) = scenes.iter().fold((0, 0, 0), |(a, b, c), s| {
        (a + s.matching.tp, b + s.matching.fp, c + s.matching.fn_)
    });
    Ok(DemoReport {
        hk: trained.hk,
        vk: trained.vk,
        losses: trained.losses,
        tp,
        fp,
        fn_,
        prf: Prf::from_counts(tp, fp, fn_),
        streak_candidates: scenes.iter().map(|s| s.streak_candidates).sum(),
        streak_pixels: scenes
            .iter()
            .map(|s| s.scene.streaks.iter().map(|t| t.len()).sum::<usize>())
            .sum(),
        scenes,
    })
}

/// Candidate counts on streak pixels with fixed ridge kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreakStats {
    pub scenes: usize,
    pub streak_pixels: usize,
    pub orthogonal: usize,
    pub single_direction: usize,
}

/// Runs the ridge-kernel heads on `scenes` synthetic scenes and counts the
/// candidates landing on streaks with and without orthogonal filtering.
pub fn streak_experiment(
    seed: u64,
    scenes: usize,
    height: usize,
    width: usize,
    decode: &DecodeConfig,
) -> Result<StreakStats> {
    let hk = DirectionalKernel::ridge(Orientation::Horizontal);
    let vk = DirectionalKernel::ridge(Orientation::Vertical);
    let ortho = DecodeConfig {
        mode: CandidateMode::Orthogonal,
        ..*decode
    };
    let single = DecodeConfig {
        mode: CandidateMode::SingleDirection,
        ..*decode
    };
    let per_scene = (0..scenes as u64)
        .into_par_iter()
        .map(|i| {
            let s = generate_synthetic_scene(scene_seed(seed, i), height, width, 3, 2)?;
            let (hmap, vmap) = lotm_forward(&FeatureStack::single(s.image.clone()), &hk, &vk)?;
            let streaks = streak_union(&s)?;
            let a = count_on(&crate::decode::rescore(&hmap, &vmap, &ortho)?, &streaks);
            let b = count_on(&crate::decode::rescore(&hmap, &vmap, &single)?, &streaks);
            Ok((streaks.count_ones(), a, b))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_scene.iter().fold(
        StreakStats {
            scenes,
            streak_pixels: 0,
            orthogonal: 0,
            single_direction: 0,
        },
        |mut acc, &(p, a, b)| {
            acc.streak_pixels += p;
            acc.orthogonal += a;
            acc.single_direction += b;
            acc
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suites_pass_on_a_few_instances() {
        for r in run_gradient_suites(3, 12).unwrap() {
            assert!(r.passed(), "{} {}", r.name, r.max_rel_error);
            assert_eq!(r.instances, 12);
        }
    }

    #[test]
    fn iou_instances_overlap_away_from_kinks() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let (p, g) = iou_instance(&mut rng);
            let (iw, ih) = p.intersection_extent(&g);
            assert!(iw > 0.0 && ih > 0.0);
        }
    }

    #[test]
    fn small_demo_runs() {
        let cfg = DemoConfig {
            height: 64,
            width: 64,
            train_scenes: 2,
            test_scenes: 2,
            texts_per_scene: 1,
            streaks_per_scene: 1,
            train: TrainConfig {
                steps: 5,
                ..TrainConfig::default()
            },
            ..DemoConfig::default()
        };
        let a = run_demo(&cfg).unwrap();
        assert_eq!(a.losses.len(), 5);
        assert_eq!(a.scenes.len(), 2);
        assert_eq!(a.fn_ + a.tp, 2);
        let b = run_demo(&cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ridge_heads_ignore_streaks_only_when_orthogonal() {
        let s = streak_experiment(0, 3, 96, 96, &DecodeConfig::default()).unwrap();
        assert!(s.streak_pixels > 0);
        assert!(s.single_direction > 10 * s.orthogonal.max(1));
    }
}
