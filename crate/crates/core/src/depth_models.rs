//! Object depth estimators and their analytic extrapolation errors.
//!
//! Four estimators consume the image-plane observables of a box:
//!
//! - a linear regressor on the projected 3D center row, `z = -beta (v_c - v0) + z_max`;
//! - a ground-plane model that locates the projected bottom center and reads
//!   the ground depth there;
//! - a weighted average of the two (0.5 is the plain average);
//! - a regressor whose input row is corrected for a known height change under
//!   a constant-depth assumption.
//!
//! The `predicted_*_bias` functions give the mean depth error each estimator
//! makes after the camera height changes by `dh`. They take the true depth and
//! are references for checking simulations, not estimators.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{self, Camera, CameraIntrinsics, GeometryError, Pixel};
use crate::stats;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DepthModelError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("invalid model parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, DepthModelError>;

/// Axis-aligned image box, pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox2D {
    pub left: f64,
    pub top: f64,
    pub right: f64,
    pub bottom: f64,
}

impl BBox2D {
    pub fn new(left: f64, top: f64, right: f64, bottom: f64) -> Self {
        debug_assert!(left <= right && top <= bottom, "bbox not well ordered");
        Self { left, top, right, bottom }
    }

    pub fn width(&self) -> f64 {
        self.right - self.left
    }

    pub fn height(&self) -> f64 {
        self.bottom - self.top
    }

    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.left + self.right) / 2.0, (self.top + self.bottom) / 2.0)
    }
}

/// What a detector sees of a box in the image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectedBox {
    /// Projected 3D center.
    pub u_c: f64,
    pub v_c: f64,
    /// 2D box center and height.
    pub u_c2d: f64,
    pub v_c2d: f64,
    pub h_2d: f64,
    pub bbox: BBox2D,
    /// Part of the box projects outside the image.
    pub truncated: bool,
}

impl ProjectedBox {
    pub fn new(u_c: f64, v_c: f64, bbox: BBox2D, truncated: bool) -> Self {
        let (u_c2d, v_c2d) = bbox.center();
        Self { u_c, v_c, u_c2d, v_c2d, h_2d: bbox.height(), bbox, truncated }
    }

    /// Copy with every row coordinate moved by `dv` pixels.
    pub fn shifted_rows(&self, dv: f64) -> Self {
        let bbox = BBox2D::new(self.bbox.left, self.bbox.top + dv, self.bbox.right, self.bbox.bottom + dv);
        Self::new(self.u_c, self.v_c + dv, bbox, self.truncated)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlphaFormulation {
    /// `v_b = v_c + h_2d / 2 + alpha (v_c - v_c2d)`, alpha dimensionless.
    #[default]
    Product,
    /// `v_b = v_c + h_2d / 2 + alpha`, alpha in pixels.
    Sum,
}

impl std::str::FromStr for AlphaFormulation {
    type Err = DepthModelError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "product" => Ok(Self::Product),
            "sum" => Ok(Self::Sum),
            other => Err(DepthModelError::InvalidParameter(format!("unknown alpha mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundDepthModel {
    pub alpha: f64,
    pub formulation: AlphaFormulation,
    pub relu_guard: bool,
}

impl Default for GroundDepthModel {
    fn default() -> Self {
        Self { alpha: 0.0, formulation: AlphaFormulation::Product, relu_guard: true }
    }
}

/// Linear depth regressor on the projected center row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressedDepthModel {
    /// Meters of depth per pixel of row offset, positive.
    pub beta: f64,
    /// Depth predicted at the principal-point row.
    pub z_max: f64,
    /// Depth predicted at the bottom image row. May be negative when the
    /// line is fit to perspective data.
    pub z_min: f64,
}

impl RegressedDepthModel {
    pub fn new(beta: f64, z_max: f64, intrinsics: &CameraIntrinsics) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(DepthModelError::InvalidParameter(format!("beta {beta} must be positive")));
        }
        if !z_max.is_finite() {
            return Err(DepthModelError::InvalidParameter(format!("z_max {z_max} not finite")));
        }
        let z_min = z_max - beta * (intrinsics.image_height - intrinsics.v0);
        Ok(Self { beta, z_max, z_min })
    }

    /// Line through `z_max` at the principal row and `z_min` at the bottom row.
    pub fn from_endpoints(z_min: f64, z_max: f64, intrinsics: &CameraIntrinsics) -> Result<Self> {
        if !(z_max > z_min) {
            return Err(DepthModelError::InvalidParameter(format!(
                "z_max {z_max} must exceed z_min {z_min}"
            )));
        }
        let beta = (z_max - z_min) / (intrinsics.image_height - intrinsics.v0);
        Ok(Self { beta, z_max, z_min })
    }
}

/// Weight given to the regressed estimate; the ground estimate gets `1 - weight`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionModel {
    pub weight: f64,
}

impl FusionModel {
    pub fn new(weight: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&weight) {
            return Err(DepthModelError::InvalidParameter(format!("fusion weight {weight} outside [0, 1]")));
        }
        Ok(Self { weight })
    }
}

impl Default for FusionModel {
    fn default() -> Self {
        Self { weight: 0.5 }
    }
}

/// Zero-mean Gaussian depth noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub sigma: f64,
}

impl NoiseModel {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(DepthModelError::InvalidParameter(format!("sigma {sigma} must be >= 0")));
        }
        Ok(Self { sigma })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.sigma == 0.0 {
            return 0.0;
        }
        Normal::new(0.0, self.sigma).expect("validated sigma").sample(rng)
    }
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self { sigma: 0.5 }
    }
}

pub fn bottom_center(pb: &ProjectedBox, model: &GroundDepthModel) -> Pixel {
    let correction = match model.formulation {
        AlphaFormulation::Product => model.alpha * (pb.v_c - pb.v_c2d),
        AlphaFormulation::Sum => model.alpha,
    };
    Pixel::new(pb.u_c, pb.v_c + pb.h_2d / 2.0 + correction)
}

/// Ground depth read at the estimated bottom center.
pub fn ground_estimate(pb: &ProjectedBox, cam: &Camera, model: &GroundDepthModel) -> Result<f64> {
    let px = bottom_center(pb, model);
    let plane = cam.ground_plane().with_relu_guard(model.relu_guard);
    Ok(geometry::ground_depth(&px, cam, &plane)?)
}

pub fn regressed_estimate(pb: &ProjectedBox, model: &RegressedDepthModel, intrinsics: &CameraIntrinsics) -> f64 {
    -model.beta * (pb.v_c - intrinsics.v0) + model.z_max
}

pub fn fused_estimate(
    pb: &ProjectedBox,
    cam: &Camera,
    ground: &GroundDepthModel,
    regressed: &RegressedDepthModel,
    fusion: &FusionModel,
) -> Result<f64> {
    let g = ground_estimate(pb, cam, ground)?;
    let r = regressed_estimate(pb, regressed, &cam.intrinsics);
    Ok(fusion.weight * r + (1.0 - fusion.weight) * g)
}

/// Regressor fed the row the center would have had at the training height,
/// assuming every object sits at `z_assumed`.
pub fn compensated_estimate(
    pb: &ProjectedBox,
    dh: f64,
    z_assumed: f64,
    regressed: &RegressedDepthModel,
    cam: &Camera,
) -> Result<f64> {
    if !(z_assumed > 0.0) {
        return Err(DepthModelError::InvalidParameter(format!("z_assumed {z_assumed} must be positive")));
    }
    let corrected = pb.shifted_rows(-cam.intrinsics.f * dh / z_assumed);
    Ok(regressed_estimate(&corrected, regressed, &cam.intrinsics))
}

/// Mean ground-model error after a height change of `dh`:
/// `ReLU(1 / ((v_b - v0) cos d + f sin d)) f dh`. With `d = 0` this is
/// `ReLU(1 / (v_b - v0)) f dh`. Valid when the object depth is large compared
/// with `dh`; diverges as `d` approaches the lower end of
/// [`valid_slope_interval`].
pub fn predicted_ground_bias(v_b: f64, dh: f64, cam: &Camera, slope: f64) -> f64 {
    let k = &cam.intrinsics;
    let (s, c) = slope.sin_cos();
    let denom = (v_b - k.v0) * c + k.f * s;
    (1.0 / denom).max(0.0) * k.f * dh
}

/// Slopes for which the ground-model trend keeps its sign at row `v_b`:
/// `(-atan((v_b - v0) / f), pi / 2]`.
pub fn valid_slope_interval(v_b: f64, intrinsics: &CameraIntrinsics) -> (f64, f64) {
    (-((v_b - intrinsics.v0) / intrinsics.f).atan(), std::f64::consts::FRAC_PI_2)
}

/// Mean regressed-model error after a height change: `-(beta / z) f dh`.
pub fn predicted_regress_bias(z: f64, dh: f64, beta: f64, f: f64) -> f64 {
    -(beta / z) * f * dh
}

/// Mean compensated-regressor error: `-beta f dh (1/z - 1/z_assumed)`.
pub fn predicted_compensated_bias(z: f64, dh: f64, beta: f64, f: f64, z_assumed: f64) -> f64 {
    -beta * f * dh * (1.0 / z - 1.0 / z_assumed)
}

/// Least-squares fit of depth on `(v_c - v0)` from `(v_c, z)` samples taken at
/// the training height.
pub fn calibrate_regressor(samples: &[(f64, f64)], intrinsics: &CameraIntrinsics) -> Result<RegressedDepthModel> {
    let xs: Vec<f64> = samples.iter().map(|(v_c, _)| v_c - intrinsics.v0).collect();
    let ys: Vec<f64> = samples.iter().map(|(_, z)| *z).collect();
    let (slope, intercept) = stats::ols(&xs, &ys)
        .ok_or_else(|| DepthModelError::DegenerateFit("need at least two distinct center rows".into()))?;
    if !(slope < 0.0) {
        return Err(DepthModelError::DegenerateFit(format!(
            "depth does not decrease with row (slope {slope})"
        )));
    }
    RegressedDepthModel::new(-slope, intercept, intrinsics)
}

/// One-dimensional least-squares fit of `alpha` against true projected bottom
/// rows.
pub fn fit_alpha(boxes: &[ProjectedBox], true_bottom_rows: &[f64], formulation: AlphaFormulation) -> Result<f64> {
    assert_eq!(boxes.len(), true_bottom_rows.len());
    if boxes.is_empty() {
        return Err(DepthModelError::DegenerateFit("no samples for alpha".into()));
    }
    let residuals = boxes
        .iter()
        .zip(true_bottom_rows)
        .map(|(pb, vb)| (pb, vb - pb.v_c - pb.h_2d / 2.0));
    match formulation {
        AlphaFormulation::Sum => {
            let r: Vec<f64> = residuals.map(|(_, r)| r).collect();
            Ok(stats::mean(&r).expect("non-empty"))
        }
        AlphaFormulation::Product => {
            let (mut sxx, mut sxy) = (0.0, 0.0);
            for (pb, r) in residuals {
                let x = pb.v_c - pb.v_c2d;
                sxx += x * x;
                sxy += x * r;
            }
            if sxx <= 0.0 {
                return Err(DepthModelError::DegenerateFit("every v_c equals v_c2d".into()));
            }
            Ok(sxy / sxx)
        }
    }
}

/// Least-squares fusion weight on training-height data, clamped to `[0, 1]`.
pub fn fit_fusion_weight(regressed: &[f64], ground: &[f64], truth: &[f64]) -> Result<FusionModel> {
    assert!(regressed.len() == ground.len() && ground.len() == truth.len());
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for ((r, g), z) in regressed.iter().zip(ground).zip(truth) {
        let x = r - g;
        sxx += x * x;
        sxy += x * (z - g);
    }
    if sxx <= 0.0 {
        return Err(DepthModelError::DegenerateFit("regressed and ground estimates coincide".into()));
    }
    FusionModel::new((sxy / sxx).clamp(0.0, 1.0))
}

/// How the ground branch's bottom-center row responds to a height change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GroundResponse {
    /// The bottom-center head keeps the row it learned at the training
    /// height (the `dh / z ~ 0` regime) while the ground plane is queried
    /// with the deployed camera height.
    #[default]
    SourcePixel,
    /// The bottom-center row follows the true image shift. In exact flat-ground
    /// geometry this makes the ground branch drift-free.
    TrackedPixel,
}

impl std::str::FromStr for GroundResponse {
    type Err = DepthModelError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "source-pixel" => Ok(Self::SourcePixel),
            "tracked-pixel" => Ok(Self::TrackedPixel),
            other => Err(DepthModelError::InvalidParameter(format!("unknown ground response {other:?}"))),
        }
    }
}

/// A calibrated estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DepthModel {
    /// Returns the true depth; used to check the evaluation pipeline.
    Perfect,
    Regressed(RegressedDepthModel),
    Ground(GroundDepthModel),
    Fused { regressed: RegressedDepthModel, ground: GroundDepthModel, fusion: FusionModel },
    Compensated { regressed: RegressedDepthModel, z_assumed: f64 },
}

impl DepthModel {
    /// Change of this model's output between the training-height view `src`
    /// (seen by `src_cam`) and the view `obs` seen by `obs_cam`, which sits `dh`
    /// meters higher. A model trained to return `z + noise` at the training
    /// height returns `z + noise + drift` at the new one.
    pub fn drift(
        &self,
        src: &ProjectedBox,
        obs: &ProjectedBox,
        src_cam: &Camera,
        obs_cam: &Camera,
        dh: f64,
        response: GroundResponse,
    ) -> Result<f64> {
        let k = &src_cam.intrinsics;
        let ground_drift = |g: &GroundDepthModel| -> Result<f64> {
            let view = match response {
                GroundResponse::SourcePixel => src,
                GroundResponse::TrackedPixel => obs,
            };
            Ok(ground_estimate(view, obs_cam, g)? - ground_estimate(src, src_cam, g)?)
        };
        let regress_drift =
            |r: &RegressedDepthModel| regressed_estimate(obs, r, &obs_cam.intrinsics) - regressed_estimate(src, r, k);
        match self {
            DepthModel::Perfect => Ok(0.0),
            DepthModel::Regressed(r) => Ok(regress_drift(r)),
            DepthModel::Ground(g) => ground_drift(g),
            DepthModel::Fused { regressed, ground, fusion } => {
                Ok(fusion.weight * regress_drift(regressed) + (1.0 - fusion.weight) * ground_drift(ground)?)
            }
            DepthModel::Compensated { regressed, z_assumed } => {
                Ok(compensated_estimate(obs, dh, *z_assumed, regressed, obs_cam)?
                    - regressed_estimate(src, regressed, k))
            }
        }
    }

    /// Analytic mean error for an object at depth `z` whose training-height
    /// bottom center is at row `v_b`.
    pub fn predicted_bias(&self, z: f64, v_b: f64, dh: f64, cam: &Camera) -> f64 {
        let f = cam.intrinsics.f;
        let slope = cam.extrinsics.pitch;
        match self {
            DepthModel::Perfect => 0.0,
            DepthModel::Regressed(r) => predicted_regress_bias(z, dh, r.beta, f),
            DepthModel::Ground(_) => predicted_ground_bias(v_b, dh, cam, slope),
            DepthModel::Fused { regressed, fusion, .. } => {
                fusion.weight * predicted_regress_bias(z, dh, regressed.beta, f)
                    + (1.0 - fusion.weight) * predicted_ground_bias(v_b, dh, cam, slope)
            }
            DepthModel::Compensated { regressed, z_assumed } => {
                predicted_compensated_bias(z, dh, regressed.beta, f, *z_assumed)
            }
        }
    }
}

/// Versioned key-value snapshot of every calibrated parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub version: u32,
    pub beta: f64,
    pub z_min: f64,
    pub z_max: f64,
    pub alpha: f64,
    pub formulation: AlphaFormulation,
    pub relu_guard: bool,
    pub fusion_weight: f64,
    pub sigma: f64,
}

pub const MODEL_PARAMS_VERSION: u32 = 1;

impl ModelParams {
    pub fn new(
        regressed: &RegressedDepthModel,
        ground: &GroundDepthModel,
        fusion: &FusionModel,
        noise: &NoiseModel,
    ) -> Self {
        Self {
            version: MODEL_PARAMS_VERSION,
            beta: regressed.beta,
            z_min: regressed.z_min,
            z_max: regressed.z_max,
            alpha: ground.alpha,
            formulation: ground.formulation,
            relu_guard: ground.relu_guard,
            fusion_weight: fusion.weight,
            sigma: noise.sigma,
        }
    }

    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("model params serialize")
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let params: ModelParams =
            toml::from_str(text).map_err(|e| DepthModelError::InvalidParameter(e.to_string()))?;
        if params.version != MODEL_PARAMS_VERSION {
            return Err(DepthModelError::InvalidParameter(format!(
                "unsupported model params version {}",
                params.version
            )));
        }
        Ok(params)
    }

    pub fn regressed(&self) -> RegressedDepthModel {
        RegressedDepthModel { beta: self.beta, z_max: self.z_max, z_min: self.z_min }
    }

    pub fn ground(&self) -> GroundDepthModel {
        GroundDepthModel { alpha: self.alpha, formulation: self.formulation, relu_guard: self.relu_guard }
    }
}
