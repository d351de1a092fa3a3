//! Command-line front end.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::decode::{reconstruct_detections, rescore, CandidateMode, DecodeConfig, TieRule};
use crate::error::{Error, Result};
use crate::eval::{
    auto_bucket_boundaries, bucketed_prf, format_report, match_detections, DEFAULT_IOU_THRESHOLD, PROTOCOL,
};
use crate::geometry::FloatGrid;
use crate::io::{
    parse_annotations, parse_candidates, parse_detections, read_raster, render_overlay_svg, serialize_boxes,
    serialize_candidates, serialize_canonical, serialize_detections, write_atomic, write_heatmap, write_pgm,
    DatasetFormat, ParseOptions,
};
use crate::label::{build_training_sample, DEFAULT_BAND};
use crate::lotm::TrainConfig;
use crate::pipeline::{run_demo, run_gradient_suites, DemoConfig, GRADCHECK_INSTANCES, GRADCHECK_TOLERANCE};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_CHECK: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "orthocontour", version, about = "Contour-point text detection toolkit")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// `key=value` file supplying defaults for any long flag.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Contour-band heatmaps and proposal-box sidecars from annotations.
    Labelgen(LabelgenArgs),
    /// Candidate contour points from a pair of heatmaps.
    Rescore(RescoreArgs),
    /// Detection polygons from candidate points.
    Reconstruct(ReconstructArgs),
    /// Precision, recall and F-measure of detections.
    Eval(EvalArgs),
    /// Finite-difference checks of every analytic gradient.
    Gradcheck(GradcheckArgs),
    /// Synthetic end-to-end run: train, decode, evaluate, draw.
    Demo(DemoArgs),
}

#[derive(Debug, Args)]
pub struct LabelgenArgs {
    #[arg(long)]
    pub format: Option<String>,
    /// Annotation file, or a directory of them.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub band: Option<f64>,
    /// CTW1500 lines hold a bounding box plus 28 relative offsets.
    #[arg(long)]
    pub ctw_relative: bool,
}

#[derive(Debug, Args)]
pub struct ModeFlags {
    /// Keep cells passing the horizontal map alone.
    #[arg(long, conflicts_with = "no_rescoring")]
    pub single_direction: bool,
    /// Skip NMS and accept cells passing either map.
    #[arg(long)]
    pub no_rescoring: bool,
}

#[derive(Debug, Args)]
pub struct RescoreArgs {
    #[arg(long)]
    pub hmap: PathBuf,
    #[arg(long)]
    pub vmap: PathBuf,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub nms_window: Option<usize>,
    /// `keep-all` or `leftmost`.
    #[arg(long)]
    pub tie_rule: Option<String>,
    #[command(flatten)]
    pub mode: ModeFlags,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    #[arg(long)]
    pub candidates: PathBuf,
    #[arg(long)]
    pub alpha_scale: Option<f64>,
    #[arg(long)]
    pub min_candidates: Option<usize>,
    #[arg(long)]
    pub cluster_gap: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub dets: PathBuf,
    #[arg(long)]
    pub gts: PathBuf,
    /// Format of the ground-truth file.
    #[arg(long)]
    pub gt_format: Option<String>,
    #[arg(long)]
    pub iou: Option<f64>,
    /// `auto` for area tertiles, or ascending area boundaries `a,b,...`.
    #[arg(long)]
    pub buckets: Option<String>,
    #[arg(long)]
    pub iou_resolution: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub instances: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub mode: ModeFlags,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub train_scenes: Option<usize>,
    #[arg(long)]
    pub test_scenes: Option<usize>,
    #[arg(long)]
    pub texts: Option<usize>,
    #[arg(long)]
    pub streaks: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub kernel_size: Option<usize>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub alpha_scale: Option<f64>,
}

/// Keys a config file may set.
const CONFIG_KEYS: &[&str] = &[
    "threads",
    "format",
    "height",
    "width",
    "band",
    "ctw-relative",
    "theta",
    "nms-window",
    "tie-rule",
    "mode",
    "alpha-scale",
    "min-candidates",
    "cluster-gap",
    "gt-format",
    "iou",
    "buckets",
    "iou-resolution",
    "seed",
    "instances",
    "train-scenes",
    "test-scenes",
    "texts",
    "streaks",
    "steps",
    "lr",
    "kernel-size",
];

/// Settings from a `key=value` file. Blank lines and `#` comments are skipped.
#[derive(Debug, Default)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                message: "expected key=value".into(),
            })?;
            let key = k.trim().replace('_', "-");
            if !CONFIG_KEYS.contains(&key.as_str()) {
                return Err(Error::InvalidConfig(format!(
                    "unknown config key `{key}` on line {}",
                    i + 1
                )));
            }
            values.insert(key, v.trim().to_string());
        }
        Ok(Self { values })
    }

    /// Command-line value if given, else the config value, else `None`.
    fn pick<T: FromStr>(&self, cli: Option<T>, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        if cli.is_some() {
            return Ok(cli);
        }
        self.values
            .get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| Error::InvalidConfig(format!("config `{key}` = `{v}`: {e}")))
            })
            .transpose()
    }

    fn or<T: FromStr>(&self, cli: Option<T>, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.pick(cli, key)?.unwrap_or(default))
    }

    fn flag(&self, cli: bool, key: &str) -> Result<bool> {
        Ok(cli || self.pick::<bool>(None, key)?.unwrap_or(false))
    }
}

fn exit_code(e: &Error) -> i32 {
    match e.root() {
        Error::InvalidConfig(_) => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(cli: Cli) -> Result<i32> {
    let config = match &cli.config {
        Some(p) => ConfigFile::parse(&fs::read_to_string(p)?)?,
        None => ConfigFile::default(),
    };
    if let Some(n) = config.pick(cli.threads, "threads")? {
        if n == 0 {
            return Err(Error::InvalidConfig("threads must be at least 1".into()));
        }
        // A pool may already exist when embedded in a larger process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match cli.command {
        Command::Labelgen(a) => labelgen(a, &config),
        Command::Rescore(a) => rescore_cmd(a, &config),
        Command::Reconstruct(a) => reconstruct_cmd(a, &config),
        Command::Eval(a) => eval_cmd(a, &config),
        Command::Gradcheck(a) => gradcheck(a, &config),
        Command::Demo(a) => demo(a, &config),
    }
}

fn read_text(path: &Path) -> Result<String> {
    Ok(fs::read_to_string(path)?)
}

fn input_files(input: &Path) -> Result<Vec<PathBuf>> {
    if input.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(input)?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<_>>()?;
        files.retain(|p| p.is_file());
        files.sort();
        Ok(files)
    } else {
        Ok(vec![input.to_path_buf()])
    }
}

fn labelgen(a: LabelgenArgs, cfg: &ConfigFile) -> Result<i32> {
    let format: DatasetFormat = cfg
        .pick(a.format, "format")?
        .ok_or_else(|| Error::InvalidConfig("--format is required".into()))?
        .parse()?;
    let height: usize = cfg
        .pick(a.height, "height")?
        .ok_or_else(|| Error::InvalidConfig("--height is required".into()))?;
    let width: usize = cfg
        .pick(a.width, "width")?
        .ok_or_else(|| Error::InvalidConfig("--width is required".into()))?;
    let band = cfg.or(a.band, "band", DEFAULT_BAND)?;
    if !(band > 0.0) || !band.is_finite() {
        return Err(Error::InvalidConfig(format!("band must be positive, got {band}")));
    }
    if height == 0 || width == 0 {
        return Err(Error::InvalidConfig("height and width must be positive".into()));
    }
    let opts = ParseOptions {
        ctw_relative: cfg.flag(a.ctw_relative, "ctw-relative")?,
    };
    let files = input_files(&a.input)?;
    fs::create_dir_all(&a.out)?;
    let counts = files
        .par_iter()
        .map(|path| -> Result<usize> {
            let wrap = |e: Error| Error::InvalidInput(format!("{}: {e}", path.display()));
            let records = parse_annotations(&read_text(path)?, format, opts).map_err(wrap)?;
            let sample = build_training_sample(&records, height, width, band).map_err(wrap)?;
            let stem = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "labels".into());
            let contour = FloatGrid::from_mask(&sample.contour);
            write_atomic(&a.out.join(format!("{stem}.contour.cthm")), &write_heatmap(&contour)?)?;
            if !sample.ignore.is_clear() {
                let ignore = FloatGrid::from_mask(&sample.ignore);
                write_atomic(&a.out.join(format!("{stem}.ignore.cthm")), &write_heatmap(&ignore)?)?;
            }
            let kept: Vec<_> = records.iter().filter(|r| !r.ignore).cloned().collect();
            write_atomic(
                &a.out.join(format!("{stem}.boxes.jsonl")),
                serialize_boxes(&kept, &sample.boxes).as_bytes(),
            )?;
            Ok(records.len())
        })
        .collect::<Result<Vec<_>>>()?;
    println!(
        "labelgen: {} file(s), {} record(s) -> {}",
        files.len(),
        counts.iter().sum::<usize>(),
        a.out.display()
    );
    Ok(EXIT_OK)
}

fn mode_of(flags: &ModeFlags, cfg: &ConfigFile) -> Result<CandidateMode> {
    if flags.single_direction {
        return Ok(CandidateMode::SingleDirection);
    }
    if flags.no_rescoring {
        return Ok(CandidateMode::NoRescoring);
    }
    cfg.or(None, "mode", CandidateMode::Orthogonal)
}

fn rescore_cmd(a: RescoreArgs, cfg: &ConfigFile) -> Result<i32> {
    let d = DecodeConfig::default();
    let tie_rule = match cfg.pick(a.tie_rule, "tie-rule")? {
        Some(s) => s.parse::<TieRule>()?,
        None => d.tie_rule,
    };
    let dc = DecodeConfig {
        theta: cfg.or(a.theta, "theta", d.theta)?,
        nms_window: cfg.or(a.nms_window, "nms-window", d.nms_window)?,
        tie_rule,
        mode: mode_of(&a.mode, cfg)?,
        ..d
    };
    dc.validate()?;
    let hmap = read_raster(&fs::read(&a.hmap)?)?;
    let vmap = read_raster(&fs::read(&a.vmap)?)?;
    let cands = rescore(&hmap, &vmap, &dc)?;
    write_atomic(&a.out, serialize_candidates(&cands.points).as_bytes())?;
    println!(
        "rescore: {} candidate(s) ({}) -> {}",
        cands.len(),
        dc.mode.as_str(),
        a.out.display()
    );
    Ok(EXIT_OK)
}

fn reconstruct_cmd(a: ReconstructArgs, cfg: &ConfigFile) -> Result<i32> {
    let d = DecodeConfig::default();
    let dc = DecodeConfig {
        alpha_scale: cfg.or(a.alpha_scale, "alpha-scale", d.alpha_scale)?,
        min_candidates: cfg.or(a.min_candidates, "min-candidates", d.min_candidates)?,
        cluster_gap: cfg.or(a.cluster_gap, "cluster-gap", d.cluster_gap)?,
        ..d
    };
    dc.validate()?;
    let cands = parse_candidates(&read_text(&a.candidates)?)?;
    let dets = reconstruct_detections(&cands, &dc)?;
    write_atomic(&a.out, serialize_detections(&dets).as_bytes())?;
    println!(
        "reconstruct: {} detection(s) from {} candidate(s) -> {}",
        dets.len(),
        cands.len(),
        a.out.display()
    );
    Ok(EXIT_OK)
}

fn parse_buckets(arg: &str, gts: &[crate::label::AnnotationRecord]) -> Result<Vec<f64>> {
    if arg.trim() == "auto" {
        return Ok(auto_bucket_boundaries(gts));
    }
    arg.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidConfig(format!("bad bucket boundary `{s}`")))
        })
        .collect()
}

fn eval_cmd(a: EvalArgs, cfg: &ConfigFile) -> Result<i32> {
    let gt_format: DatasetFormat = cfg
        .or(a.gt_format, "gt-format", "canonical_jsonl".to_string())?
        .parse()?;
    let iou = cfg.or(a.iou, "iou", DEFAULT_IOU_THRESHOLD)?;
    let resolution = cfg.or(
        a.iou_resolution,
        "iou-resolution",
        DecodeConfig::default().iou_resolution,
    )?;
    let dets = parse_detections(&read_text(&a.dets)?)?;
    let gts = parse_annotations(&read_text(&a.gts)?, gt_format, ParseOptions::default())?;
    let m = match_detections(&dets, &gts, iou, resolution)?;
    let buckets = match cfg.pick(a.buckets, "buckets")? {
        Some(arg) => bucketed_prf(&dets, &gts, &parse_buckets(&arg, &gts)?, iou, resolution)?,
        None => Vec::new(),
    };
    let num_gt = gts.iter().filter(|g| !g.ignore).count();
    let report = format_report(&m, &buckets, iou, num_gt);
    write_atomic(&a.out, report.as_bytes())?;
    print!("{report}");
    Ok(EXIT_OK)
}

fn gradcheck(a: GradcheckArgs, cfg: &ConfigFile) -> Result<i32> {
    let seed = cfg.or(a.seed, "seed", 0)?;
    let instances = cfg.or(a.instances, "instances", GRADCHECK_INSTANCES)?;
    if instances == 0 {
        return Err(Error::InvalidConfig("instances must be at least 1".into()));
    }
    let reports = run_gradient_suites(seed, instances)?;
    println!("suite,instances,max_rel_error,tolerance,status");
    let mut ok = true;
    for r in &reports {
        ok &= r.passed();
        println!(
            "{},{},{:.3e},{:.0e},{}",
            r.name,
            r.instances,
            r.max_rel_error,
            GRADCHECK_TOLERANCE,
            if r.passed() { "pass" } else { "FAIL" }
        );
    }
    Ok(if ok { EXIT_OK } else { EXIT_CHECK })
}

fn demo(a: DemoArgs, cfg: &ConfigFile) -> Result<i32> {
    let d = DemoConfig::default();
    let t = TrainConfig::default();
    let mut decode = d.decode;
    decode.mode = mode_of(&a.mode, cfg)?;
    decode.theta = cfg.or(a.theta, "theta", decode.theta)?;
    decode.alpha_scale = cfg.or(a.alpha_scale, "alpha-scale", decode.alpha_scale)?;
    let dc = DemoConfig {
        seed: cfg.or(a.seed, "seed", d.seed)?,
        height: cfg.or(a.height, "height", d.height)?,
        width: cfg.or(a.width, "width", d.width)?,
        train_scenes: cfg.or(a.train_scenes, "train-scenes", d.train_scenes)?,
        test_scenes: cfg.or(a.test_scenes, "test-scenes", d.test_scenes)?,
        texts_per_scene: cfg.or(a.texts, "texts", d.texts_per_scene)?,
        streaks_per_scene: cfg.or(a.streaks, "streaks", d.streaks_per_scene)?,
        train: TrainConfig {
            steps: cfg.or(a.steps, "steps", t.steps)?,
            learning_rate: cfg.or(a.lr, "lr", t.learning_rate)?,
            k: cfg.or(a.kernel_size, "kernel-size", t.k)?,
            seed: t.seed,
        },
        decode,
        ..d
    };
    let report = run_demo(&dc)?;
    fs::create_dir_all(&a.out)?;

    let mut curve = String::from("step,loss\n");
    for (i, l) in report.losses.iter().enumerate() {
        let _ = writeln!(curve, "{i},{l:.10}");
    }
    write_atomic(&a.out.join("loss.csv"), curve.as_bytes())?;
    let kernels = format!("{}\n{}", report.hk.to_checkpoint(), report.vk.to_checkpoint());
    write_atomic(&a.out.join("kernels.txt"), kernels.as_bytes())?;
    for (i, s) in report.scenes.iter().enumerate() {
        let (h, w) = s.scene.image.shape();
        let svg = render_overlay_svg(w, h, &s.scene.records, &s.detections, Some(&s.candidates.points));
        write_atomic(&a.out.join(format!("scene_{i:02}.svg")), svg.as_bytes())?;
        write_atomic(&a.out.join(format!("scene_{i:02}.pgm")), &write_pgm(&s.scene.image))?;
        write_atomic(&a.out.join(format!("scene_{i:02}.hmap.cthm")), &write_heatmap(&s.hmap)?)?;
        write_atomic(&a.out.join(format!("scene_{i:02}.vmap.cthm")), &write_heatmap(&s.vmap)?)?;
        write_atomic(
            &a.out.join(format!("scene_{i:02}.gt.jsonl")),
            serialize_canonical(&s.scene.records).as_bytes(),
        )?;
        write_atomic(
            &a.out.join(format!("scene_{i:02}.dets.jsonl")),
            serialize_detections(&s.detections).as_bytes(),
        )?;
    }
    let mut m = String::new();
    let _ = writeln!(m, "protocol = {PROTOCOL}");
    let _ = writeln!(m, "seed = {}", dc.seed);
    let _ = writeln!(m, "size = {}x{}", dc.height, dc.width);
    let _ = writeln!(m, "mode = {}", dc.decode.mode.as_str());
    let _ = writeln!(m, "train_scenes = {}", dc.train_scenes);
    let _ = writeln!(m, "test_scenes = {}", dc.test_scenes);
    let _ = writeln!(m, "loss_initial = {:.6}", report.losses.first().copied().unwrap_or(0.0));
    let _ = writeln!(m, "loss_final = {:.6}", report.losses.last().copied().unwrap_or(0.0));
    let _ = writeln!(m, "loss_reduction = {:.4}", report.loss_reduction());
    let _ = writeln!(m, "tp = {}", report.tp);
    let _ = writeln!(m, "fp = {}", report.fp);
    let _ = writeln!(m, "fn = {}", report.fn_);
    let _ = writeln!(m, "recall = {:.4}", report.prf.recall);
    let _ = writeln!(m, "precision = {:.4}", report.prf.precision);
    let _ = writeln!(m, "f_measure = {:.4}", report.prf.f_measure);
    let _ = writeln!(m, "streak_candidates = {}", report.streak_candidates);
    let _ = writeln!(m, "streak_pixels = {}", report.streak_pixels);
    write_atomic(&a.out.join("metrics.txt"), m.as_bytes())?;
    print!("{m}");
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_precedence() {
        let cfg = ConfigFile::parse("# defaults\ntheta = 0.7\nnms_window=5\n\n").unwrap();
        assert_eq!(cfg.or(Some(0.6), "theta", 0.5).unwrap(), 0.6);
        assert_eq!(cfg.or(None, "theta", 0.5).unwrap(), 0.7);
        assert_eq!(cfg.or::<usize>(None, "nms-window", 3).unwrap(), 5);
        assert_eq!(cfg.or::<f64>(None, "alpha-scale", 1.5).unwrap(), 1.5);
    }

    #[test]
    fn config_errors() {
        assert!(matches!(ConfigFile::parse("bogus=1"), Err(Error::InvalidConfig(_))));
        assert!(matches!(ConfigFile::parse("theta"), Err(Error::Parse { line: 1, .. })));
        let cfg = ConfigFile::parse("theta=high").unwrap();
        assert!(cfg.or::<f64>(None, "theta", 0.5).is_err());
    }

    #[test]
    fn buckets_arg() {
        assert_eq!(parse_buckets("10, 100", &[]).unwrap(), vec![10.0, 100.0]);
        assert!(parse_buckets("a", &[]).is_err());
        assert!(parse_buckets("auto", &[]).unwrap().is_empty());
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run_from(["orthocontour", "nope"]), EXIT_USAGE);
        assert_eq!(run_from(["orthocontour", "--help"]), EXIT_OK);
    }
}
