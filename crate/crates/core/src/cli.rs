//! `hrm3d` command line: simulate, eval, sweep and oracle.
//!
//! Exit codes: 0 on success, 1 on usage, configuration or I/O errors, 2 when
//! a requested verification fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::depth_models::AlphaFormulation;
use crate::eval::{self, EvalError};
use crate::io::config::{ConfigError, RunConfig, WeightValue};
use crate::io::kitti::{self, KittiError, KittiLabel};
use crate::io::{csv, svg};
use crate::scene_sim::{self, DetectionSet, DetectorEmulator};
use crate::trend::{self, ModelKind, Tolerances, TrendError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VERIFICATION: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Kitti(#[from] KittiError),
    #[error(transparent)]
    Trend(#[from] TrendError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("frame ids differ: missing predictions for [{}], missing ground truth for [{}]", .missing_pred.join(", "), .missing_gt.join(", "))]
    FrameMismatch { missing_pred: Vec<String>, missing_gt: Vec<String> },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AlphaMode {
    Product,
    Sum,
}

#[derive(Debug, Parser)]
#[command(name = "hrm3d", version, about = "Height-shift analysis for monocular 3D detectors")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every command; each overrides the config file.
#[derive(Debug, Args, Default)]
pub struct CommonArgs {
    /// TOML config file (default: built-in defaults)
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed [default: 0]
    #[arg(long, global = true, env = "HRM3D_SEED")]
    pub seed: Option<u64>,
    /// Output directory [default: out]
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Comma-separated height changes in meters; must contain 0 [default: -0.70,-0.35,0,0.38,0.76]
    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true)]
    pub grid: Option<Vec<f64>>,
    /// Comma-separated models: source, ground, fused, compensated, compensated++ [default: all]
    #[arg(long, global = true, value_delimiter = ',')]
    pub models: Option<Vec<String>>,
    /// Comma-separated oracle masks over x y z l w h t, e.g. z,xyz,lwh [default: none]
    #[arg(long, global = true, value_delimiter = ',')]
    pub masks: Option<Vec<String>>,
    /// Frames per grid point (simulate: frames written) [default: 200]
    #[arg(long, global = true)]
    pub frames: Option<usize>,
    /// Standard deviation of the injected depth noise in meters [default: 0.5]
    #[arg(long, global = true)]
    pub sigma: Option<f64>,
    /// Clamp ground depth for rays at or above the horizon [default: on]
    #[arg(long, global = true)]
    pub relu: Option<Switch>,
    /// Bottom-center correction: product or sum [default: product]
    #[arg(long, global = true)]
    pub alpha_mode: Option<AlphaMode>,
    /// Regressor weight of the fused model in [0, 1], or "learned" [default: 0.5]
    #[arg(long, global = true)]
    pub fusion_weight: Option<String>,
    /// Assumed object depth of the compensated baseline in meters [default: 50]
    #[arg(long, global = true)]
    pub z_assumed: Option<f64>,
    /// Worker threads [default: all cores]
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write KITTI ground-truth and prediction labels for seeded scenes.
    Simulate {
        /// Height change the scenes are observed at [default: 0.76]
        #[arg(long, allow_hyphen_values = true)]
        delta_h: Option<f64>,
        /// Detector to emulate [default: source]
        #[arg(long)]
        model: Option<String>,
    },
    /// Evaluate a directory of predictions against ground truth.
    Eval {
        /// Ground-truth label directory
        #[arg(long)]
        gt: PathBuf,
        /// Prediction label directory
        #[arg(long)]
        pred: PathBuf,
        /// Height change to report alongside the metrics
        #[arg(long, allow_hyphen_values = true)]
        delta_h: Option<f64>,
    },
    /// Sweep height changes, fit error trends and verify them.
    Sweep,
    /// Oracle substitution breakdown per mask and height change.
    Oracle {
        /// Detector to analyse [default: source]
        #[arg(long)]
        model: Option<String>,
    },
}

impl CommonArgs {
    /// File config (or defaults) with every given flag applied on top.
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_toml(&fs::read_to_string(path).map_err(io_err(path))?)
                .map_err(|e| ConfigError::Parse(format!("{}: {e}", path.display())))?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.seed {
            cfg.run.seed = v;
        }
        if let Some(v) = &self.out {
            cfg.run.out = v.clone();
        }
        if let Some(v) = &self.grid {
            cfg.sweep.grid = v.clone();
        }
        if let Some(v) = &self.models {
            cfg.sweep.models = v.clone();
        }
        if let Some(v) = &self.masks {
            cfg.run.masks = v.iter().filter(|m| !m.trim().is_empty()).cloned().collect();
        }
        if let Some(v) = self.frames {
            cfg.sweep.frames = v;
        }
        if let Some(v) = self.sigma {
            cfg.model.sigma = v;
        }
        if let Some(v) = self.relu {
            cfg.model.relu = v == Switch::On;
        }
        if let Some(v) = self.alpha_mode {
            cfg.model.alpha_mode = match v {
                AlphaMode::Product => AlphaFormulation::Product,
                AlphaMode::Sum => AlphaFormulation::Sum,
            };
        }
        if let Some(v) = &self.fusion_weight {
            cfg.model.fusion_weight = match v.parse::<f64>() {
                Ok(w) => WeightValue::Number(w),
                Err(_) => WeightValue::Name(v.clone()),
            };
        }
        if let Some(v) = self.z_assumed {
            cfg.model.z_assumed = v;
        }
        if let Some(v) = self.threads {
            cfg.run.threads = Some(v);
        }
        Ok(cfg)
    }
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(io_err(path))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(io_err(path))
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> Result<i32, CliError> {
    let mut cfg = cli.common.resolve()?;
    match cli.command {
        Command::Simulate { delta_h, model } => {
            if let Some(d) = delta_h {
                cfg.run.delta_h = d;
            }
            if let Some(m) = model {
                cfg.run.model = m;
            }
            cmd_simulate(&cfg)?;
            Ok(EXIT_OK)
        }
        Command::Eval { gt, pred, delta_h } => {
            let result = cmd_eval(&gt, &pred, delta_h, &cfg.run.out)?;
            print!("{}", csv::eval_table(&[result]));
            Ok(EXIT_OK)
        }
        Command::Sweep => {
            let (report, outcome) = cmd_sweep(&cfg)?;
            print!("{}", csv::trend_table(&report));
            print!("{outcome}");
            Ok(if outcome.passed() { EXIT_OK } else { EXIT_VERIFICATION })
        }
        Command::Oracle { model } => {
            if let Some(m) = model {
                cfg.run.model = m;
            }
            let table = cmd_oracle(&cfg)?;
            print!("{}", csv::oracle_table(&table));
            Ok(EXIT_OK)
        }
    }
}

/// Writes `gt/`, `pred/` (KITTI labels per frame, in the observing camera
/// frame), `scenes.csv` and `manifest.toml`. With zero frames only the
/// manifest is written.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let frames = cfg.sweep.frames;
    let mut sweep = cfg.sweep_config()?;
    let dh = cfg.run.delta_h;
    sweep.frames_per_point = frames.max(1);
    if !sweep.grid.contains(&dh) {
        sweep.grid.push(dh);
    }
    let kind = cfg.simulate_model()?;
    let cal = trend::calibrate(&sweep)?;
    let out = cfg.run.out.clone();
    create_dir(&out)?;

    let mut manifest = toml::Table::new();
    manifest.insert("seed".into(), toml::Value::Integer(cfg.run.seed as i64));
    manifest.insert("config_hash".into(), toml::Value::String(cfg.hash()));
    manifest.insert("frames".into(), toml::Value::Integer(frames as i64));
    manifest.insert("delta_h".into(), toml::Value::Float(dh));
    manifest.insert("model".into(), toml::Value::String(kind.name().into()));
    manifest.insert("params".into(), toml::Value::try_from(cal.params()).expect("params serialize"));
    write(&out.join("manifest.toml"), &toml::to_string(&manifest).expect("manifest serializes"))?;
    if frames == 0 {
        return Ok(out);
    }

    let (gt_dir, pred_dir) = (out.join("gt"), out.join("pred"));
    create_dir(&gt_dir)?;
    create_dir(&pred_dir)?;
    let emulator = DetectorEmulator { model: cal.model(kind), response: sweep.options.ground_response, noise: cal.noise };
    let noise_seed = trend::derive_seed(cfg.run.seed, 0, kind as u64 + 1);
    let mut scenes = Vec::with_capacity(frames);
    for frame in 0..frames as u64 {
        let mut scene = scene_sim::generate_scene(&sweep.scene, cfg.run.seed, frame).map_err(TrendError::from)?;
        scene.delta_h = dh;
        let obs = scene_sim::observe(&scene, dh);
        let det = scene_sim::emulate_detector(&scene, dh, &obs, &emulator, noise_seed);
        let cam = scene_sim::observing_camera(&scene, dh);
        let gt: Vec<KittiLabel> = det.ground_truth.iter().map(|d| KittiLabel::from_detection(d, &cam, false)).collect();
        let pred: Vec<KittiLabel> = det.predictions.iter().map(|d| KittiLabel::from_detection(d, &cam, true)).collect();
        let name = format!("{frame:06}.txt");
        kitti::write_label_file(&gt_dir.join(&name), &gt)?;
        kitti::write_label_file(&pred_dir.join(&name), &pred)?;
        scenes.push(scene);
    }
    write(&out.join("scenes.csv"), &csv::scenes_csv(&scenes))?;
    Ok(out)
}

fn label_files(dir: &Path) -> Result<BTreeMap<String, PathBuf>, CliError> {
    let mut files = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        if path.extension().is_some_and(|e| e == "txt") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                files.insert(stem.to_string(), path.clone());
            }
        }
    }
    Ok(files)
}

/// Loads matching frames from two label directories. An empty prediction
/// directory means no detections in any frame.
pub fn load_detections(gt_dir: &Path, pred_dir: &Path) -> Result<Vec<DetectionSet>, CliError> {
    let gt = label_files(gt_dir)?;
    let pred = label_files(pred_dir)?;
    if !pred.is_empty() {
        let missing_pred: Vec<String> = gt.keys().filter(|k| !pred.contains_key(*k)).cloned().collect();
        let missing_gt: Vec<String> = pred.keys().filter(|k| !gt.contains_key(*k)).cloned().collect();
        if !missing_pred.is_empty() || !missing_gt.is_empty() {
            return Err(CliError::FrameMismatch { missing_pred, missing_gt });
        }
    }
    gt.iter()
        .enumerate()
        .map(|(i, (id, path))| {
            let ground_truth = kitti::read_label_file(path)?.iter().map(KittiLabel::to_detection).collect();
            let predictions = match pred.get(id) {
                Some(p) => kitti::read_label_file(p)?.iter().map(KittiLabel::to_detection).collect(),
                None => Vec::new(),
            };
            Ok(DetectionSet { frame_id: id.parse().unwrap_or(i as u64), delta_h: 0.0, predictions, ground_truth })
        })
        .collect()
}

/// Writes `eval.csv` and `eval.txt` into `out`.
pub fn cmd_eval(gt_dir: &Path, pred_dir: &Path, delta_h: Option<f64>, out: &Path) -> Result<eval::EvalResult, CliError> {
    let dets = load_detections(gt_dir, pred_dir)?;
    let result = eval::evaluate(&dets, delta_h);
    create_dir(out)?;
    write(&out.join("eval.csv"), &csv::eval_csv(std::slice::from_ref(&result)))?;
    write(&out.join("eval.txt"), &csv::eval_table(std::slice::from_ref(&result)))?;
    Ok(result)
}

/// Writes `trend.csv`, `trend.svg`, `trend.txt`, `verification.txt` and
/// `params.toml` into the output directory.
pub fn cmd_sweep(cfg: &RunConfig) -> Result<(trend::TrendReport, trend::VerificationOutcome), CliError> {
    let sweep = cfg.sweep_config()?;
    let report = trend::run_sweep(&sweep)?;
    let outcome = trend::verify_theorems(&report, &Tolerances::default());
    let out = &cfg.run.out;
    create_dir(out)?;
    write(&out.join("trend.csv"), &csv::trend_csv(&report))?;
    write(&out.join("trend.svg"), &svg::trend_svg(&report))?;
    write(&out.join("trend.txt"), &csv::trend_table(&report))?;
    write(&out.join("verification.txt"), &outcome.to_string())?;
    write(&out.join("params.toml"), &report.calibration.params().to_text())?;
    Ok((report, outcome))
}

/// Writes `oracle.csv` and `oracle.txt` into the output directory.
pub fn cmd_oracle(cfg: &RunConfig) -> Result<trend::OracleTable, CliError> {
    let masks: Vec<eval::OracleSpec> =
        cfg.run.masks.iter().map(|m| m.parse::<eval::OracleSpec>()).collect::<Result<_, _>>()?;
    let kind: ModelKind = cfg.simulate_model()?;
    let table = trend::oracle_breakdown(&cfg.sweep_config()?, &masks, kind)?;
    let out = &cfg.run.out;
    create_dir(out)?;
    write(&out.join("oracle.csv"), &csv::oracle_csv(&table))?;
    write(&out.join("oracle.txt"), &csv::oracle_table(&table))?;
    Ok(table)
}

/// Parses `args`, runs the command and maps every outcome to an exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}
