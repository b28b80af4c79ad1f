//! Height sweeps: calibrate at the training height, emulate each model at
//! every height change, and compare the measured depth-error trend with the
//! closed-form bias laws.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::depth_models::{
    self, AlphaFormulation, DepthModel, DepthModelError, FusionModel, GroundDepthModel, GroundResponse, ModelParams,
    NoiseModel, RegressedDepthModel,
};
use crate::eval::{self, OracleSpec};
use crate::scene_sim::{self, DetectionSet, DetectorEmulator, Scene, SceneConfig, SceneError};
use crate::stats;

#[derive(Debug, Error)]
pub enum TrendError {
    #[error("invalid sweep config: {0}")]
    ConfigInvalid(String),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error("calibration failed: {0}")]
    Calibration(#[from] DepthModelError),
}

/// Frame ids at or above this value are reserved for calibration scenes, so
/// they never coincide with evaluation scenes.
pub const CALIBRATION_FRAME_BASE: u64 = 1 << 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelKind {
    /// The plain regressor, i.e. the detector as trained.
    Source,
    Ground,
    Fused,
    /// Regressor with a fixed assumed-depth pixel correction.
    Compensated,
    /// Same correction with the assumed depth fit to the depth distribution.
    CompensatedPlus,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] =
        [ModelKind::Source, ModelKind::Ground, ModelKind::Fused, ModelKind::Compensated, ModelKind::CompensatedPlus];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Source => "source",
            ModelKind::Ground => "ground",
            ModelKind::Fused => "fused",
            ModelKind::Compensated => "compensated",
            ModelKind::CompensatedPlus => "compensated++",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = TrendError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "source" | "source-regressed" | "regressed" => Ok(ModelKind::Source),
            "ground" => Ok(ModelKind::Ground),
            "fused" => Ok(ModelKind::Fused),
            "compensated" => Ok(ModelKind::Compensated),
            "compensated++" | "compensated-plus" => Ok(ModelKind::CompensatedPlus),
            other => Err(TrendError::ConfigInvalid(format!("unknown model '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FusionWeight {
    Fixed(f64),
    /// Least-squares weight on training-height estimates.
    Learned,
}

impl FromStr for FusionWeight {
    type Err = TrendError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.trim().eq_ignore_ascii_case("learned") {
            return Ok(FusionWeight::Learned);
        }
        s.trim()
            .parse::<f64>()
            .ok()
            .filter(|w| (0.0..=1.0).contains(w))
            .map(FusionWeight::Fixed)
            .ok_or_else(|| TrendError::ConfigInvalid(format!("fusion weight '{s}' is not in [0, 1] or 'learned'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelOptions {
    pub relu_guard: bool,
    pub alpha_mode: AlphaFormulation,
    /// Fit alpha on training-height scenes; otherwise alpha = 0.
    pub fit_alpha: bool,
    pub fusion_weight: FusionWeight,
    pub z_assumed: f64,
    pub ground_response: GroundResponse,
}

impl Default for ModelOptions {
    fn default() -> Self {
        Self {
            relu_guard: true,
            alpha_mode: AlphaFormulation::Product,
            fit_alpha: true,
            fusion_weight: FusionWeight::Fixed(0.5),
            z_assumed: 50.0,
            ground_response: GroundResponse::SourcePixel,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub grid: Vec<f64>,
    pub frames_per_point: usize,
    pub calibration_frames: usize,
    pub seed: u64,
    pub models: Vec<ModelKind>,
    pub scene: SceneConfig,
    pub noise: NoiseModel,
    pub options: ModelOptions,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            grid: vec![-0.70, -0.35, 0.0, 0.38, 0.76],
            frames_per_point: 200,
            calibration_frames: 200,
            seed: 0,
            models: ModelKind::ALL.to_vec(),
            scene: SceneConfig::default(),
            noise: NoiseModel::default(),
            options: ModelOptions::default(),
            threads: None,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<(), TrendError> {
        if self.grid.is_empty() || !self.grid.contains(&0.0) {
            return Err(TrendError::ConfigInvalid("height grid must contain 0".into()));
        }
        if self.grid.iter().any(|d| !d.is_finite()) {
            return Err(TrendError::ConfigInvalid("height grid must be finite".into()));
        }
        if self.frames_per_point == 0 || self.calibration_frames == 0 {
            return Err(TrendError::ConfigInvalid("frame counts must be at least 1".into()));
        }
        if self.models.is_empty() {
            return Err(TrendError::ConfigInvalid("no models selected".into()));
        }
        if !(self.options.z_assumed > 0.0) {
            return Err(TrendError::ConfigInvalid(format!("z_assumed {} must be positive", self.options.z_assumed)));
        }
        let lowest = self.grid.iter().cloned().fold(f64::INFINITY, f64::min);
        if self.scene.camera.extrinsics.height + lowest <= 0.0 {
            return Err(TrendError::ConfigInvalid(format!("height change {lowest} puts the camera below ground")));
        }
        self.scene.validate()?;
        Ok(())
    }

    /// Grid sorted ascending with duplicates removed.
    fn sorted_grid(&self) -> Vec<f64> {
        let mut grid = self.grid.clone();
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        grid
    }

    fn run<T: Send>(&self, job: impl FnOnce() -> T + Send) -> T {
        match self.threads {
            Some(n) => rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .expect("thread pool")
                .install(job),
            None => job(),
        }
    }
}

/// Every calibrated estimator of one sweep, fit on training-height scenes only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub regressor: RegressedDepthModel,
    pub ground: GroundDepthModel,
    pub fusion: FusionModel,
    pub z_assumed: f64,
    /// Assumed depth minimizing the squared compensated bias over the depth
    /// distribution: the harmonic mean of the calibration depths.
    pub z_assumed_fit: f64,
    pub noise: NoiseModel,
}

impl Calibration {
    pub fn model(&self, kind: ModelKind) -> DepthModel {
        match kind {
            ModelKind::Source => DepthModel::Regressed(self.regressor),
            ModelKind::Ground => DepthModel::Ground(self.ground),
            ModelKind::Fused => DepthModel::Fused { regressed: self.regressor, ground: self.ground, fusion: self.fusion },
            ModelKind::Compensated => DepthModel::Compensated { regressed: self.regressor, z_assumed: self.z_assumed },
            ModelKind::CompensatedPlus => {
                DepthModel::Compensated { regressed: self.regressor, z_assumed: self.z_assumed_fit }
            }
        }
    }

    pub fn params(&self) -> ModelParams {
        ModelParams {
            version: depth_models::MODEL_PARAMS_VERSION,
            beta: self.regressor.beta,
            z_min: self.regressor.z_min,
            z_max: self.regressor.z_max,
            alpha: self.ground.alpha,
            formulation: self.ground.formulation,
            relu_guard: self.ground.relu_guard,
            fusion_weight: self.fusion.weight,
            sigma: self.noise.sigma,
        }
    }
}

fn calibration_scenes(cfg: &SweepConfig) -> Result<Vec<Scene>, TrendError> {
    (0..cfg.calibration_frames as u64)
        .map(|i| Ok(scene_sim::generate_scene(&cfg.scene, cfg.seed, CALIBRATION_FRAME_BASE + i)?))
        .collect()
}

/// Fits every model on scenes observed at the training height. Nothing in
/// here sees a raised camera.
pub fn calibrate(cfg: &SweepConfig) -> Result<Calibration, TrendError> {
    cfg.validate()?;
    let scenes = calibration_scenes(cfg)?;
    let mut centers = Vec::new();
    let mut projected = Vec::new();
    let mut bottoms = Vec::new();
    let mut depths = Vec::new();
    for scene in &scenes {
        let obs = scene_sim::observe(scene, 0.0);
        let bottom = scene_sim::project_bottom_centers(scene, 0.0);
        for ((b, pb), px) in scene.boxes.iter().zip(&obs).zip(&bottom) {
            centers.push((pb.v_c, b.z));
            projected.push(*pb);
            bottoms.push(px.v);
            depths.push(b.z);
        }
    }
    let cam = cfg.scene.camera;
    let regressor = depth_models::calibrate_regressor(&centers, &cam.intrinsics)?;
    let opts = &cfg.options;
    let alpha = if opts.fit_alpha { depth_models::fit_alpha(&projected, &bottoms, opts.alpha_mode)? } else { 0.0 };
    let ground = GroundDepthModel { alpha, formulation: opts.alpha_mode, relu_guard: opts.relu_guard };
    let fusion = match opts.fusion_weight {
        FusionWeight::Fixed(w) => FusionModel::new(w)?,
        FusionWeight::Learned => {
            let r: Vec<f64> =
                projected.iter().map(|pb| depth_models::regressed_estimate(pb, &regressor, &cam.intrinsics)).collect();
            let g: Vec<f64> = projected
                .iter()
                .map(|pb| depth_models::ground_estimate(pb, &cam, &ground))
                .collect::<Result<_, _>>()?;
            depth_models::fit_fusion_weight(&r, &g, &depths)?
        }
    };
    let inverse: Vec<f64> = depths.iter().map(|z| 1.0 / z).collect();
    let z_assumed_fit = stats::mean(&inverse).map_or(opts.z_assumed, |m| 1.0 / m);
    Ok(Calibration { regressor, ground, fusion, z_assumed: opts.z_assumed, z_assumed_fit, noise: cfg.noise })
}

/// splitmix64 finalizer used to derive independent per-task seeds.
pub fn derive_seed(master: u64, a: u64, b: u64) -> u64 {
    let mut z = master ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrendRow {
    pub delta_h: f64,
    pub empirical_mde: Option<f64>,
    pub predicted_mde: Option<f64>,
    /// Part of the predicted bias coming from the ground branch; it carries
    /// the first-order approximation error.
    pub ground_component: f64,
    pub ap3d_70: f64,
    pub ap3d_50: f64,
    pub matched: usize,
    pub missed: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlopeSign {
    Negative,
    Zero,
    Positive,
    /// Fewer than two distinct heights with a defined error.
    Degenerate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelTrend {
    pub kind: ModelKind,
    pub rows: Vec<TrendRow>,
    /// Meters of mean depth error per meter of height change.
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
}

impl ModelTrend {
    pub fn sign(&self) -> SlopeSign {
        match self.slope {
            None => SlopeSign::Degenerate,
            Some(s) if s < 0.0 => SlopeSign::Negative,
            Some(s) if s > 0.0 => SlopeSign::Positive,
            Some(_) => SlopeSign::Zero,
        }
    }

    pub fn row(&self, delta_h: f64) -> Option<&TrendRow> {
        self.rows.iter().find(|r| (r.delta_h - delta_h).abs() < 1e-9)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrendReport {
    pub models: Vec<ModelTrend>,
    pub calibration: Calibration,
    pub seed: u64,
}

impl TrendReport {
    pub fn model(&self, kind: ModelKind) -> Option<&ModelTrend> {
        self.models.iter().find(|m| m.kind == kind)
    }
}

/// Scenes, observations and emulated detections of one grid point.
struct GridPoint {
    scenes: Vec<Scene>,
    /// Training-height bottom-center rows, per scene and box.
    bottoms: Vec<Vec<f64>>,
    detections: Vec<Vec<DetectionSet>>,
}

fn simulate_point(
    cfg: &SweepConfig,
    cal: &Calibration,
    kinds: &[ModelKind],
    grid_index: usize,
    dh: f64,
) -> Result<GridPoint, TrendError> {
    let mut scenes = Vec::with_capacity(cfg.frames_per_point);
    let mut bottoms = Vec::with_capacity(cfg.frames_per_point);
    let mut detections = vec![Vec::with_capacity(cfg.frames_per_point); kinds.len()];
    for frame in 0..cfg.frames_per_point as u64 {
        let scene = scene_sim::generate_scene(&cfg.scene, cfg.seed, frame)?;
        let obs = scene_sim::observe(&scene, dh);
        for (m, kind) in kinds.iter().enumerate() {
            let emulator =
                DetectorEmulator { model: cal.model(*kind), response: cfg.options.ground_response, noise: cal.noise };
            let seed = derive_seed(cfg.seed, grid_index as u64 + 1, *kind as u64 + 1);
            detections[m].push(scene_sim::emulate_detector(&scene, dh, &obs, &emulator, seed));
        }
        bottoms.push(scene_sim::project_bottom_centers(&scene, 0.0).iter().map(|p| p.v).collect());
        scenes.push(scene);
    }
    Ok(GridPoint { scenes, bottoms, detections })
}

fn trend_row(cfg: &SweepConfig, cal: &Calibration, kind: ModelKind, point: &GridPoint, dets: &[DetectionSet], dh: f64) -> TrendRow {
    let result = eval::evaluate(dets, Some(dh));
    let model = cal.model(kind);
    let cam = cfg.scene.camera;
    let ground_weight = match kind {
        ModelKind::Ground => 1.0,
        ModelKind::Fused => 1.0 - cal.fusion.weight,
        _ => 0.0,
    };
    let mut predicted = Vec::new();
    let mut ground = Vec::new();
    for (frame, pair, _) in eval::depth_error_pairs(dets) {
        let gt = &point.scenes[frame].boxes[pair.ground_truth];
        let v_b = point.bottoms[frame][pair.ground_truth];
        predicted.push(model.predicted_bias(gt.z, v_b, dh, &cam));
        ground.push(ground_weight * depth_models::predicted_ground_bias(v_b, dh, &cam, cam.extrinsics.pitch));
    }
    TrendRow {
        delta_h: dh,
        empirical_mde: result.mde,
        predicted_mde: stats::mean(&predicted),
        ground_component: stats::mean(&ground).unwrap_or(0.0),
        ap3d_70: result.ap3d_70,
        ap3d_50: result.ap3d_50,
        matched: result.matched,
        missed: result.missed,
    }
}

fn fit_trend(kind: ModelKind, rows: Vec<TrendRow>) -> ModelTrend {
    let (xs, ys): (Vec<f64>, Vec<f64>) =
        rows.iter().filter_map(|r| r.empirical_mde.map(|m| (r.delta_h, m))).unzip();
    let fit = stats::ols(&xs, &ys);
    ModelTrend { kind, rows, slope: fit.map(|f| f.0), intercept: fit.map(|f| f.1) }
}

fn unique_models(models: &[ModelKind]) -> Vec<ModelKind> {
    let mut kinds = Vec::new();
    for m in models {
        if !kinds.contains(m) {
            kinds.push(*m);
        }
    }
    kinds
}

pub fn run_sweep(cfg: &SweepConfig) -> Result<TrendReport, TrendError> {
    let cal = calibrate(cfg)?;
    run_sweep_with(cfg, &cal)
}

/// Sweep with an existing calibration (which must come from `calibrate`).
pub fn run_sweep_with(cfg: &SweepConfig, cal: &Calibration) -> Result<TrendReport, TrendError> {
    cfg.validate()?;
    let grid = cfg.sorted_grid();
    let kinds = unique_models(&cfg.models);
    let per_point: Vec<Vec<TrendRow>> = cfg.run(|| {
        grid.par_iter()
            .enumerate()
            .map(|(g, &dh)| {
                let point = simulate_point(cfg, cal, &kinds, g, dh)?;
                Ok(kinds
                    .iter()
                    .zip(&point.detections)
                    .map(|(kind, dets)| trend_row(cfg, cal, *kind, &point, dets, dh))
                    .collect())
            })
            .collect::<Result<Vec<_>, TrendError>>()
    })?;
    let models = kinds
        .iter()
        .enumerate()
        .map(|(m, kind)| fit_trend(*kind, per_point.iter().map(|rows| rows[m].clone()).collect()))
        .collect();
    Ok(TrendReport { models, calibration: *cal, seed: cfg.seed })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Absolute agreement for the literal linear regressor.
    pub absolute: f64,
    /// Relative agreement on the ground-branch part of the bias.
    pub ground_relative: f64,
    /// Standard errors of the injected noise allowed on each mean.
    pub noise_sigmas: f64,
    /// Heights at which the fused model must beat both components.
    pub cancellation_min_dh: f64,
    /// Heights at which the fused model must beat the source by `fused_ratio`.
    pub strong_min_dh: f64,
    pub fused_ratio: f64,
    /// Slope ratio bound for the fused model.
    pub fused_slope_ratio: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            absolute: 1e-6,
            ground_relative: 0.10,
            noise_sigmas: 4.0,
            cancellation_min_dh: 0.35,
            strong_min_dh: 0.70,
            fused_ratio: 0.25,
            fused_slope_ratio: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VerificationOutcome {
    pub checks: Vec<Check>,
}

impl VerificationOutcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    fn push(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check { name: name.into(), passed, detail: detail.into() });
    }
}

impl fmt::Display for VerificationOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail)?;
        }
        let failed = self.failures().count();
        writeln!(f, "{} checks, {} failed", self.checks.len(), failed)
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:+.4}"))
}

/// Checks the sweep against the bias laws: slope signs, pointwise agreement
/// of every row with its prediction, and the fused model's cancellation.
/// Checks involving a model the report does not contain are skipped.
pub fn verify_theorems(report: &TrendReport, tol: &Tolerances) -> VerificationOutcome {
    let mut out = VerificationOutcome::default();
    let sigma = report.calibration.noise.sigma;

    for m in &report.models {
        out.push(
            format!("{} slope defined", m.kind),
            m.slope.is_some(),
            m.slope.map_or("degenerate: need two heights with matches".into(), |s| format!("{s:+.4} m/m")),
        );
        for r in &m.rows {
            let name = format!("{} prediction at dh={:+.2}", m.kind, r.delta_h);
            match (r.empirical_mde, r.predicted_mde) {
                (Some(e), Some(p)) => {
                    let noise = if sigma > 0.0 { tol.noise_sigmas * sigma / (r.matched as f64).sqrt() } else { 0.0 };
                    let allowed = tol.absolute + tol.ground_relative * r.ground_component.abs() + noise;
                    let diff = (e - p).abs();
                    out.push(name, diff <= allowed, format!("measured {e:+.4}, predicted {p:+.4}, |diff| {diff:.2e} <= {allowed:.2e}"));
                }
                _ => out.push(name, false, "no matched boxes"),
            }
        }
    }

    let slope = |k| report.model(k).and_then(|m| m.slope);
    if let Some(s) = slope(ModelKind::Source) {
        out.push("source slope negative", s < 0.0, format!("{s:+.4}"));
    }
    if let Some(s) = slope(ModelKind::Ground) {
        out.push("ground slope positive", s > 0.0, format!("{s:+.4}"));
    }
    if let (Some(f), Some(s), Some(g)) = (slope(ModelKind::Fused), slope(ModelKind::Source), slope(ModelKind::Ground)) {
        let bound = tol.fused_slope_ratio * s.abs().min(g.abs());
        out.push("fused slope flattened", f.abs() < bound, format!("|{f:+.4}| < {bound:.4}"));
    }

    let (Some(fused), Some(source)) = (report.model(ModelKind::Fused), report.model(ModelKind::Source)) else {
        return out;
    };
    let ground = report.model(ModelKind::Ground);
    let compensated = report.model(ModelKind::Compensated);
    let max_dh = fused.rows.iter().map(|r| r.delta_h.abs()).fold(0.0, f64::max);
    for r in &fused.rows {
        let dh = r.delta_h;
        let at = |m: &ModelTrend| m.row(dh).and_then(|x| x.empirical_mde);
        let f = r.empirical_mde;
        if dh.abs() >= tol.cancellation_min_dh - 1e-9 {
            if let Some(g) = ground {
                let (fv, sv, gv) = (f, at(source), at(g));
                let passed = matches!((fv, sv, gv), (Some(f), Some(s), Some(g)) if f.abs() < s.abs().min(g.abs()));
                out.push(
                    format!("fused beats both components at dh={dh:+.2}"),
                    passed,
                    format!("fused {}, source {}, ground {}", fmt_opt(fv), fmt_opt(sv), fmt_opt(gv)),
                );
            }
        }
        if dh.abs() >= tol.strong_min_dh - 1e-9 {
            let sv = at(source);
            let passed = matches!((f, sv), (Some(f), Some(s)) if f.abs() < tol.fused_ratio * s.abs());
            out.push(
                format!("fused below {} x source at dh={dh:+.2}", tol.fused_ratio),
                passed,
                format!("fused {}, source {}", fmt_opt(f), fmt_opt(sv)),
            );
        }
        if let Some(c) = compensated {
            if dh.abs() >= max_dh - 1e-9 && max_dh > 0.0 {
                let (cv, sv) = (at(c), at(source));
                let passed = matches!((f, cv, sv), (Some(f), Some(c), Some(s)) if f.abs() < c.abs() && c.abs() < s.abs());
                out.push(
                    format!("compensated between fused and source at dh={dh:+.2}"),
                    passed,
                    format!("fused {}, compensated {}, source {}", fmt_opt(f), fmt_opt(cv), fmt_opt(sv)),
                );
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleCell {
    pub delta_h: f64,
    pub ap3d_70: f64,
    pub ap3d_50: f64,
    pub mde: Option<f64>,
    /// Mean depth error over predictions the oracle matched.
    pub matched_mde: Option<f64>,
    pub oracle_matched: usize,
    pub predictions: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleRow {
    pub mask: OracleSpec,
    pub cells: Vec<OracleCell>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleTable {
    pub model: ModelKind,
    pub rows: Vec<OracleRow>,
}

impl OracleTable {
    pub fn row(&self, mask: &OracleSpec) -> Option<&OracleRow> {
        self.rows.iter().find(|r| r.mask == *mask)
    }
}

/// AP and depth error after replacing each mask's parameters with ground
/// truth, for one model at every grid height. The first row is the
/// unmodified baseline.
pub fn oracle_breakdown(cfg: &SweepConfig, masks: &[OracleSpec], model: ModelKind) -> Result<OracleTable, TrendError> {
    let cal = calibrate(cfg)?;
    let grid = cfg.sorted_grid();
    let mut all_masks = vec![OracleSpec::none()];
    all_masks.extend(masks.iter().copied().filter(|m| !m.is_empty()));
    let per_point: Vec<Vec<OracleCell>> = cfg.run(|| {
        grid.par_iter()
            .enumerate()
            .map(|(g, &dh)| {
                let point = simulate_point(cfg, &cal, &[model], g, dh)?;
                Ok(all_masks.iter().map(|mask| oracle_cell(&point.detections[0], mask, dh)).collect())
            })
            .collect::<Result<Vec<_>, TrendError>>()
    })?;
    let rows = all_masks
        .iter()
        .enumerate()
        .map(|(i, mask)| OracleRow { mask: *mask, cells: per_point.iter().map(|cells| cells[i].clone()).collect() })
        .collect();
    Ok(OracleTable { model, rows })
}

fn oracle_cell(dets: &[DetectionSet], mask: &OracleSpec, dh: f64) -> OracleCell {
    let outcomes: Vec<_> = dets.iter().map(|d| eval::oracle_substitute(d, mask)).collect();
    let substituted: Vec<DetectionSet> = outcomes.iter().map(|o| o.detections.clone()).collect();
    let result = eval::evaluate(&substituted, Some(dh));
    OracleCell {
        delta_h: dh,
        ap3d_70: result.ap3d_70,
        ap3d_50: result.ap3d_50,
        mde: result.mde,
        matched_mde: eval::matched_depth_error(&outcomes).ok(),
        oracle_matched: outcomes.iter().map(|o| o.matched.iter().flatten().count()).sum(),
        predictions: substituted.iter().map(|d| d.predictions.len()).sum(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(models: Vec<ModelKind>, grid: Vec<f64>, sigma: f64) -> SweepConfig {
        SweepConfig {
            grid,
            frames_per_point: 20,
            calibration_frames: 40,
            models,
            noise: NoiseModel::new(sigma).unwrap(),
            ..SweepConfig::default()
        }
    }

    #[test]
    fn zero_grid_is_in_distribution() {
        for kind in ModelKind::ALL {
            let report = run_sweep(&small(vec![kind], vec![0.0], 0.0)).unwrap();
            let row = &report.models[0].rows[0];
            assert!(row.empirical_mde.unwrap().abs() < 1e-6, "{kind}: {:?}", row.empirical_mde);
            assert_eq!(report.models[0].sign(), SlopeSign::Degenerate);
        }
    }

    #[test]
    fn component_slopes_have_opposite_signs() {
        let report = run_sweep(&small(vec![ModelKind::Source, ModelKind::Ground], SweepConfig::default().grid, 0.0)).unwrap();
        assert_eq!(report.model(ModelKind::Source).unwrap().sign(), SlopeSign::Negative);
        assert_eq!(report.model(ModelKind::Ground).unwrap().sign(), SlopeSign::Positive);
    }

    #[test]
    fn config_validation() {
        let no_zero = SweepConfig { grid: vec![0.38], ..SweepConfig::default() };
        assert!(matches!(run_sweep(&no_zero), Err(TrendError::ConfigInvalid(_))));
        let no_frames = SweepConfig { frames_per_point: 0, ..SweepConfig::default() };
        assert!(matches!(run_sweep(&no_frames), Err(TrendError::ConfigInvalid(_))));
        let underground = SweepConfig { grid: vec![0.0, -2.0], ..SweepConfig::default() };
        assert!(matches!(run_sweep(&underground), Err(TrendError::ConfigInvalid(_))));
    }

    #[test]
    fn degenerate_slope_fails_verification() {
        let report = run_sweep(&small(vec![ModelKind::Source], vec![0.0], 0.0)).unwrap();
        let outcome = verify_theorems(&report, &Tolerances::default());
        assert!(!outcome.passed());
        assert!(outcome.failures().any(|c| c.name.contains("slope defined")));
    }

    #[test]
    fn compensated_fit_is_harmonic_mean() {
        let cfg = small(vec![ModelKind::CompensatedPlus], vec![0.0], 0.0);
        let cal = calibrate(&cfg).unwrap();
        let mut inv = Vec::new();
        for i in 0..cfg.calibration_frames as u64 {
            let s = scene_sim::generate_scene(&cfg.scene, cfg.seed, CALIBRATION_FRAME_BASE + i).unwrap();
            inv.extend(s.boxes.iter().map(|b| 1.0 / b.z));
        }
        let harmonic = inv.len() as f64 / inv.iter().sum::<f64>();
        assert!((cal.z_assumed_fit - harmonic).abs() < 1e-9);
    }

    #[test]
    fn parsing() {
        assert_eq!("compensated++".parse::<ModelKind>().unwrap(), ModelKind::CompensatedPlus);
        assert_eq!("source-regressed".parse::<ModelKind>().unwrap(), ModelKind::Source);
        assert!("lidar".parse::<ModelKind>().is_err());
        assert_eq!("learned".parse::<FusionWeight>().unwrap(), FusionWeight::Learned);
        assert_eq!("0.3".parse::<FusionWeight>().unwrap(), FusionWeight::Fixed(0.3));
        assert!("1.5".parse::<FusionWeight>().is_err());
    }

    #[test]
    fn empty_mask_is_baseline() {
        let cfg = small(vec![ModelKind::Source], vec![0.0, 0.76], 0.5);
        let table = oracle_breakdown(&cfg, &[OracleSpec::none()], ModelKind::Source).unwrap();
        assert_eq!(table.rows.len(), 1);
        let full: OracleSpec = "xyzlwht".parse().unwrap();
        let table = oracle_breakdown(&cfg, &[full], ModelKind::Source).unwrap();
        // At the training height every prediction is within 4 m, so the full
        // oracle turns every prediction into its ground truth.
        let cell = &table.rows[1].cells[0];
        assert_eq!(cell.oracle_matched, cell.predictions);
        assert!((cell.ap3d_70 - 100.0).abs() < 1e-9);
    }
}
