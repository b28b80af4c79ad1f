//! Seeded flat-ground driving scenes and an emulated monocular detector.
//!
//! Boxes live in the world frame of the training-height camera (y down, ground
//! at `y = H`). A scene can be re-observed from any height change; only the
//! camera moves, so object positions and depths stay fixed.
//!
//! Every frame draws from its own ChaCha stream `(seed, frame_id)`, so frames
//! can be generated in any order or in parallel with identical results.

use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::depth_models::{BBox2D, DepthModel, GroundResponse, NoiseModel, ProjectedBox};
use crate::geometry::{self, Camera, CameraExtrinsics, CameraIntrinsics, GeometryError, Pixel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("empty or inverted config range: {0}")]
    EmptyConfigRange(String),
    #[error("invalid scene config: {0}")]
    ConfigInvalid(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Ground-supported oriented cuboid. `yaw` is the rotation about the
/// vertical (y) axis, with zero yaw aligning the length with +x.
#[derive(Debug, Clone, PartialEq)]
pub struct Box3D {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub l: f64,
    pub w: f64,
    pub h: f64,
    pub yaw: f64,
    pub class: String,
    pub score: f64,
}

impl Box3D {
    pub fn center(&self) -> Point3<f64> {
        Point3::new(self.x, self.y, self.z)
    }

    pub fn bottom_center(&self) -> Point3<f64> {
        Point3::new(self.x, self.y + self.h / 2.0, self.z)
    }

    /// Footprint corners in the x-z plane, counter-clockwise when viewed
    /// from above with x right and z up.
    pub fn footprint(&self) -> [(f64, f64); 4] {
        let (s, c) = self.yaw.sin_cos();
        let (hl, hw) = (self.l / 2.0, self.w / 2.0);
        [(hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw)].map(|(dx, dz)| {
            (self.x + c * dx + s * dz, self.z - s * dx + c * dz)
        })
    }

    pub fn corners(&self) -> [Point3<f64>; 8] {
        let fp = self.footprint();
        let top = self.y - self.h / 2.0;
        let bottom = self.y + self.h / 2.0;
        std::array::from_fn(|i| {
            let (x, z) = fp[i % 4];
            Point3::new(x, if i < 4 { bottom } else { top }, z)
        })
    }

    pub fn volume(&self) -> f64 {
        self.l * self.w * self.h
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    /// Camera at the training height. Must be level (identity rotation, zero pitch).
    pub camera: Camera,
    /// Height change the scene is generated at.
    pub delta_h: f64,
    pub depth_range: (f64, f64),
    pub lateral_range: (f64, f64),
    /// Inclusive range of boxes per frame.
    pub box_count: (usize, usize),
    /// Mean and standard deviation of (l, w, h).
    pub dims_mean: [f64; 3],
    pub dims_std: [f64; 3],
    pub class: String,
}

impl SceneConfig {
    pub fn nuscenes_like() -> Self {
        let intrinsics = CameraIntrinsics::new(1000.0, 800.0, 450.0, 1600.0, 900.0).expect("default intrinsics");
        let extrinsics = CameraExtrinsics::level(1.51).expect("default extrinsics");
        Self {
            camera: Camera::new(intrinsics, extrinsics),
            delta_h: 0.0,
            depth_range: (5.0, 60.0),
            lateral_range: (-15.0, 15.0),
            box_count: (1, 12),
            dims_mean: [4.5, 1.9, 1.6],
            dims_std: [0.4, 0.15, 0.15],
            class: "Car".to_string(),
        }
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        let (z0, z1) = self.depth_range;
        let (x0, x1) = self.lateral_range;
        let (n0, n1) = self.box_count;
        if !(z0 <= z1) || !(x0 <= x1) || n0 > n1 {
            return Err(SceneError::EmptyConfigRange(format!(
                "depth {z0}..{z1}, lateral {x0}..{x1}, count {n0}..{n1}"
            )));
        }
        if !(z0 > 0.0) {
            return Err(SceneError::ConfigInvalid(format!("depth range must be positive, got {z0}")));
        }
        if self.dims_mean.iter().any(|d| !(*d > 0.0)) || self.dims_std.iter().any(|s| !(*s >= 0.0)) {
            return Err(SceneError::ConfigInvalid("dimension prior must be positive".into()));
        }
        let ext = &self.camera.extrinsics;
        if !ext.is_identity_rotation() || ext.pitch != 0.0 {
            return Err(SceneError::ConfigInvalid("scene camera must be level".into()));
        }
        let max_half_diag = 0.5 * (self.dims_mean[0] + 4.0 * self.dims_std[0]).hypot(self.dims_mean[1] + 4.0 * self.dims_std[1]);
        if z0 <= max_half_diag {
            return Err(SceneError::ConfigInvalid(format!(
                "nearest depth {z0} m lets boxes reach behind the camera"
            )));
        }
        Ok(())
    }
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self::nuscenes_like()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    /// Training-height camera.
    pub camera: Camera,
    pub delta_h: f64,
    pub boxes: Vec<Box3D>,
    pub seed: u64,
    pub frame_id: u64,
}

/// RNG for one frame: ChaCha8 keyed by the master seed, stream = frame id.
pub fn frame_rng(seed: u64, frame_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(frame_id);
    rng
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

pub fn generate_scene(config: &SceneConfig, seed: u64, frame_id: u64) -> Result<Scene, SceneError> {
    config.validate()?;
    let mut rng = frame_rng(seed, frame_id);
    let (n0, n1) = config.box_count;
    let count = rng.random_range(n0..=n1);
    let ground = config.camera.ground_plane().offset;
    let mut boxes = Vec::with_capacity(count);
    for _ in 0..count {
        let z = uniform(&mut rng, config.depth_range);
        let x = uniform(&mut rng, config.lateral_range);
        let dims: [f64; 3] = std::array::from_fn(|i| {
            let (m, s) = (config.dims_mean[i], config.dims_std[i]);
            let d = if s > 0.0 { Normal::new(m, s).expect("validated prior").sample(&mut rng) } else { m };
            // Clip to stay positive and within four standard deviations.
            d.clamp((m - 4.0 * s).max(0.1 * m), m + 4.0 * s)
        });
        let yaw = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        let [l, w, h] = dims;
        boxes.push(Box3D { x, y: ground - h / 2.0, z, l, w, h, yaw, class: config.class.clone(), score: 1.0 });
    }
    Ok(Scene { camera: config.camera, delta_h: config.delta_h, boxes, seed, frame_id })
}

fn project_box(b: &Box3D, cam: &Camera) -> ProjectedBox {
    let center = geometry::project(&b.center(), cam).expect("generated boxes lie in front of the camera");
    let (mut left, mut top, mut right, mut bottom) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for corner in b.corners() {
        let px = geometry::project(&corner, cam).expect("box corners lie in front of the camera");
        left = left.min(px.u);
        right = right.max(px.u);
        top = top.min(px.v);
        bottom = bottom.max(px.v);
    }
    let k = &cam.intrinsics;
    let truncated = !(k.contains(left, top) && k.contains(right, bottom));
    ProjectedBox::new(center.u, center.v, BBox2D::new(left, top, right, bottom), truncated)
}

/// Image observables of every box seen from the camera raised by `dh`
/// relative to the training height. Boxes leaving the image are flagged
/// `truncated`, never dropped.
pub fn observe(scene: &Scene, dh: f64) -> Vec<ProjectedBox> {
    let cam = observing_camera(scene, dh);
    scene.boxes.iter().map(|b| project_box(b, &cam)).collect()
}

/// True projected bottom centers, with depth, seen from height change `dh`.
pub fn project_bottom_centers(scene: &Scene, dh: f64) -> Vec<Pixel> {
    let cam = observing_camera(scene, dh);
    scene
        .boxes
        .iter()
        .map(|b| geometry::project(&b.bottom_center(), &cam).expect("bottom centers lie in front of the camera"))
        .collect()
}

pub fn observing_camera(scene: &Scene, dh: f64) -> Camera {
    scene.camera.raised(dh).expect("height change keeps the camera above ground")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub box3d: Box3D,
    pub projected: ProjectedBox,
    /// Index of the ground-truth box a prediction was emulated from.
    pub source: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionSet {
    pub frame_id: u64,
    pub delta_h: f64,
    pub predictions: Vec<Detection>,
    pub ground_truth: Vec<Detection>,
}

impl DetectionSet {
    pub fn ground_truth_only(scene: &Scene, dh: f64, observed: &[ProjectedBox]) -> Self {
        Self {
            frame_id: scene.frame_id,
            delta_h: dh,
            predictions: Vec::new(),
            ground_truth: scene
                .boxes
                .iter()
                .zip(observed)
                .map(|(b, pb)| Detection { box3d: b.clone(), projected: *pb, source: None })
                .collect(),
        }
    }
}

/// Settings shared by every emulated frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorEmulator {
    pub model: DepthModel,
    pub response: GroundResponse,
    pub noise: NoiseModel,
}

impl DetectorEmulator {
    pub fn new(model: DepthModel, noise: NoiseModel) -> Self {
        Self { model, response: GroundResponse::default(), noise }
    }
}

/// Emulated detections of `scene` seen at height change `dh`.
///
/// The 2D outputs, dimensions and yaw are exact; only depth carries error.
/// A model is taken to be trained at `dh = 0` to return `z + eta`, with
/// `eta ~ N(0, sigma^2)`; at `dh` it returns `z + eta + drift`, where the
/// drift is the change in the model's own output between the two views. The
/// predicted center is backprojected along the observed center ray to that
/// depth. Boxes for which the model has no estimate (ray above the horizon)
/// are missed. Scores are uniform draws from the same seeded stream.
pub fn emulate_detector(
    scene: &Scene,
    dh: f64,
    observed: &[ProjectedBox],
    emulator: &DetectorEmulator,
    seed: u64,
) -> DetectionSet {
    assert_eq!(observed.len(), scene.boxes.len(), "one observation per box");
    let src_cam = scene.camera;
    let obs_cam = observing_camera(scene, dh);
    let source_view = observe(scene, 0.0);
    let ray = obs_cam.ray_coefficients();
    let mut rng = frame_rng(seed, scene.frame_id);
    let mut det = DetectionSet::ground_truth_only(scene, dh, observed);
    for (i, (gt, pb)) in scene.boxes.iter().zip(observed).enumerate() {
        let eta = emulator.noise.sample(&mut rng);
        let score: f64 = rng.random();
        let Ok(drift) = emulator.model.drift(&source_view[i], pb, &src_cam, &obs_cam, dh, emulator.response) else {
            continue;
        };
        let depth = obs_cam.to_camera_frame(&gt.center()).z + drift + eta;
        let center: Vector3<f64> = ray.direction(pb.u_c, pb.v_c) * depth + ray.b;
        det.predictions.push(Detection {
            box3d: Box3D { x: center.x, y: center.y, z: center.z, score, ..gt.clone() },
            projected: *pb,
            source: Some(i),
        });
    }
    det
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::depth_models::RegressedDepthModel;

    fn one_box_config() -> SceneConfig {
        SceneConfig {
            depth_range: (20.0, 20.0),
            lateral_range: (0.0, 0.0),
            box_count: (1, 1),
            ..SceneConfig::default()
        }
    }

    #[test]
    fn single_forced_box_projects_per_pinhole() {
        let scene = generate_scene(&one_box_config(), 7, 0).unwrap();
        let b = &scene.boxes[0];
        assert_eq!((b.x, b.z), (0.0, 20.0));
        assert!((b.y + b.h / 2.0 - 1.51).abs() < 1e-12);
        let pb = &observe(&scene, 0.0)[0];
        let expected = 450.0 + 1000.0 * (1.51 - b.h / 2.0) / 20.0;
        assert!((pb.v_c - expected).abs() < 1e-9);
        assert!((pb.u_c - 800.0).abs() < 1e-9);
    }

    #[test]
    fn zero_boxes() {
        let cfg = SceneConfig { box_count: (0, 0), ..SceneConfig::default() };
        assert!(generate_scene(&cfg, 1, 0).unwrap().boxes.is_empty());
    }

    #[test]
    fn same_seed_same_scene() {
        let cfg = SceneConfig::default();
        assert_eq!(generate_scene(&cfg, 42, 3).unwrap(), generate_scene(&cfg, 42, 3).unwrap());
        assert_ne!(generate_scene(&cfg, 42, 3).unwrap().boxes, generate_scene(&cfg, 42, 4).unwrap().boxes);
    }

    #[test]
    fn bad_configs() {
        let inverted = SceneConfig { depth_range: (60.0, 5.0), ..SceneConfig::default() };
        assert!(matches!(generate_scene(&inverted, 0, 0), Err(SceneError::EmptyConfigRange(_))));
        let counts = SceneConfig { box_count: (3, 2), ..SceneConfig::default() };
        assert!(matches!(generate_scene(&counts, 0, 0), Err(SceneError::EmptyConfigRange(_))));
        let near = SceneConfig { depth_range: (1.0, 60.0), ..SceneConfig::default() };
        assert!(matches!(generate_scene(&near, 0, 0), Err(SceneError::ConfigInvalid(_))));
    }

    #[test]
    fn observation_shift_law() {
        let scene = generate_scene(&SceneConfig::default(), 5, 1).unwrap();
        let base = observe(&scene, 0.0);
        for dh in [-0.7, -0.35, 0.38, 0.76] {
            for ((b, p0), p1) in scene.boxes.iter().zip(&base).zip(observe(&scene, dh)) {
                assert!((p1.v_c - p0.v_c - 1000.0 * dh / b.z).abs() < 1e-9);
                assert_eq!(p1.u_c, p0.u_c);
            }
        }
        let gen = Scene { delta_h: 0.38, ..scene.clone() };
        assert_eq!(observe(&gen, gen.delta_h), observe(&scene, 0.38));
    }

    #[test]
    fn ground_support_holds() {
        let scene = generate_scene(&SceneConfig::default(), 9, 2).unwrap();
        let plane = scene.camera.ground_plane();
        for (b, px) in scene.boxes.iter().zip(project_bottom_centers(&scene, 0.0)) {
            let z = geometry::ground_depth(&px, &scene.camera, &plane).unwrap();
            assert!((z - b.z).abs() < 1e-6);
        }
    }

    #[test]
    fn perfect_detector_copies_ground_truth() {
        let scene = generate_scene(&SceneConfig::default(), 3, 0).unwrap();
        let obs = observe(&scene, 0.0);
        let emu = DetectorEmulator::new(DepthModel::Perfect, NoiseModel::new(0.0).unwrap());
        let det = emulate_detector(&scene, 0.0, &obs, &emu, 1);
        assert_eq!(det.predictions.len(), scene.boxes.len());
        for (p, g) in det.predictions.iter().zip(&scene.boxes) {
            assert!((p.box3d.center() - g.center()).norm() < 1e-9);
            assert_eq!((p.box3d.l, p.box3d.w, p.box3d.h, p.box3d.yaw), (g.l, g.w, g.h, g.yaw));
            assert!((0.0..1.0).contains(&p.box3d.score));
        }
    }

    #[test]
    fn regressed_detector_shifts_by_closed_form() {
        let scene = generate_scene(&SceneConfig::default(), 4, 0).unwrap();
        let k = scene.camera.intrinsics;
        let model = RegressedDepthModel::new(0.3, 50.0, &k).unwrap();
        let emu = DetectorEmulator::new(DepthModel::Regressed(model), NoiseModel::new(0.0).unwrap());
        let obs = observe(&scene, 0.76);
        let det = emulate_detector(&scene, 0.76, &obs, &emu, 1);
        for p in &det.predictions {
            let g = &scene.boxes[p.source.unwrap()];
            let expected = -(0.3 / g.z) * 1000.0 * 0.76;
            assert!((p.box3d.z - g.z - expected).abs() < 1e-9);
        }
    }

    #[test]
    fn seeds_change_noise_not_truth() {
        let scene = generate_scene(&SceneConfig::default(), 8, 0).unwrap();
        let obs = observe(&scene, 0.0);
        let emu = DetectorEmulator::new(DepthModel::Perfect, NoiseModel::new(0.5).unwrap());
        let a = emulate_detector(&scene, 0.0, &obs, &emu, 1);
        let b = emulate_detector(&scene, 0.0, &obs, &emu, 2);
        assert_eq!(a.ground_truth, b.ground_truth);
        assert_ne!(a.predictions, b.predictions);
        assert_eq!(a, emulate_detector(&scene, 0.0, &obs, &emu, 1));
    }
}
