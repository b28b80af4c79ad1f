//! Pinhole camera geometry: projection, backprojection, ray/ground intersection
//! and the vertical pixel shift caused by changing the camera mounting height.
//!
//! World convention: x points right, y points *down* and z points forward. With
//! identity extrinsics the camera sits at the origin and flat ground is the
//! plane `y = H`, i.e. `r . n = H` with `n = (0, 1, 0)`. Raising the camera by
//! `dh` moves its center to `y = -dh`, so the ground is `H + dh` below it.
//!
//! Angles are radians, lengths meters, image coordinates pixels.

use nalgebra::{Matrix3, Point3, Rotation3, Vector3};
use thiserror::Error;

/// Rays whose ground-normal component is below this magnitude are treated as
/// parallel to the ground.
pub const DEGENERATE_DENOMINATOR: f64 = 1e-12;

/// Orthonormality tolerance for rotation matrices.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("point is not in front of the camera (depth {0})")]
    BehindCamera(f64),
    #[error("pixel carries no positive depth")]
    MissingDepth,
    #[error("viewing ray is parallel to the ground (denominator {0:e})")]
    HorizonDegenerate(f64),
    #[error("slope probabilities are not a simplex: {0}")]
    NotASimplex(String),
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("invalid ground plane: {0}")]
    InvalidPlane(String),
    #[error("closed-form pixel shift is only defined for an identity rotation")]
    RotatedCamera,
}

pub type Result<T> = std::result::Result<T, GeometryError>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    /// Focal length in pixels.
    pub f: f64,
    pub u0: f64,
    pub v0: f64,
    pub image_width: f64,
    pub image_height: f64,
}

impl CameraIntrinsics {
    pub fn new(f: f64, u0: f64, v0: f64, image_width: f64, image_height: f64) -> Result<Self> {
        if !(f > 0.0 && f.is_finite()) {
            return Err(GeometryError::InvalidCamera(format!("focal length {f} must be positive")));
        }
        if !(u0 > 0.0 && u0 < image_width) {
            return Err(GeometryError::InvalidCamera(format!(
                "u0 {u0} outside (0, {image_width})"
            )));
        }
        if !(v0 > 0.0 && v0 < image_height) {
            return Err(GeometryError::InvalidCamera(format!(
                "v0 {v0} outside (0, {image_height})"
            )));
        }
        Ok(Self { f, u0, v0, image_width, image_height })
    }

    pub fn k(&self) -> Matrix3<f64> {
        Matrix3::new(self.f, 0.0, self.u0, 0.0, self.f, self.v0, 0.0, 0.0, 1.0)
    }

    /// Closed-form inverse of [`Self::k`].
    pub fn k_inv(&self) -> Matrix3<f64> {
        let inv_f = 1.0 / self.f;
        Matrix3::new(
            inv_f,
            0.0,
            -self.u0 * inv_f,
            0.0,
            inv_f,
            -self.v0 * inv_f,
            0.0,
            0.0,
            1.0,
        )
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        (0.0..=self.image_width).contains(&u) && (0.0..=self.image_height).contains(&v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraExtrinsics {
    /// World-to-camera rotation.
    pub rotation: Matrix3<f64>,
    /// World-to-camera translation: `x_cam = R x_world + T`.
    pub translation: Vector3<f64>,
    /// Mounting height above the ground, meters.
    pub height: f64,
    /// Tilt between the camera and the ground plane, radians.
    pub pitch: f64,
}

impl CameraExtrinsics {
    pub fn new(
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
        height: f64,
        pitch: f64,
    ) -> Result<Self> {
        let err = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        if !(err <= ROTATION_TOLERANCE) {
            return Err(GeometryError::InvalidCamera(format!(
                "rotation is not orthonormal (|R^T R - I| = {err:e})"
            )));
        }
        if !(height > 0.0 && height.is_finite()) {
            return Err(GeometryError::InvalidCamera(format!("height {height} must be positive")));
        }
        let half_pi = std::f64::consts::FRAC_PI_2;
        if !(pitch > -half_pi && pitch <= half_pi) {
            return Err(GeometryError::InvalidCamera(format!(
                "pitch {pitch} outside (-pi/2, pi/2]"
            )));
        }
        if !translation.iter().all(|t| t.is_finite()) {
            return Err(GeometryError::InvalidCamera("translation is not finite".into()));
        }
        Ok(Self { rotation, translation, height, pitch })
    }

    /// Pitch-free camera at the world origin.
    pub fn level(height: f64) -> Result<Self> {
        Self::new(Matrix3::identity(), Vector3::zeros(), height, 0.0)
    }

    pub fn is_identity_rotation(&self) -> bool {
        (self.rotation - Matrix3::identity()).abs().max() <= DEGENERATE_DENOMINATOR
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub intrinsics: CameraIntrinsics,
    pub extrinsics: CameraExtrinsics,
}

/// `A = R^-1 K^-1` and `B = -R^-1 T`: a pixel `(u, v)` at depth `z` lies at
/// `A [u v 1]^T z + B` in world coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayCoefficients {
    pub a: Matrix3<f64>,
    pub b: Vector3<f64>,
}

impl RayCoefficients {
    /// World-space direction of the ray through `(u, v)`, scaled so that one
    /// unit of the ray parameter is one meter of camera depth.
    pub fn direction(&self, u: f64, v: f64) -> Vector3<f64> {
        self.a * Vector3::new(u, v, 1.0)
    }
}

impl Camera {
    pub fn new(intrinsics: CameraIntrinsics, extrinsics: CameraExtrinsics) -> Self {
        Self { intrinsics, extrinsics }
    }

    pub fn ray_coefficients(&self) -> RayCoefficients {
        // Rotations are orthonormal, so R^-1 = R^T.
        let r_inv = self.extrinsics.rotation.transpose();
        RayCoefficients {
            a: r_inv * self.intrinsics.k_inv(),
            b: -(r_inv * self.extrinsics.translation),
        }
    }

    /// Camera center in world coordinates (equal to `B`).
    pub fn center(&self) -> Point3<f64> {
        Point3::from(-(self.extrinsics.rotation.transpose() * self.extrinsics.translation))
    }

    /// The same camera translated vertically by `dh` meters (positive = up),
    /// rotation unchanged.
    pub fn raised(&self, dh: f64) -> Result<Camera> {
        let ext = &self.extrinsics;
        let translation = ext.translation + ext.rotation * Vector3::new(0.0, dh, 0.0);
        let extrinsics = CameraExtrinsics::new(ext.rotation, translation, ext.height + dh, ext.pitch)?;
        Ok(Camera { intrinsics: self.intrinsics, extrinsics })
    }

    pub fn with_pitch(&self, pitch: f64) -> Result<Camera> {
        let ext = &self.extrinsics;
        let extrinsics = CameraExtrinsics::new(ext.rotation, ext.translation, ext.height, pitch)?;
        Ok(Camera { intrinsics: self.intrinsics, extrinsics })
    }

    /// Ground plane implied by the mounting height and pitch: normal
    /// `(0, cos d, sin d)`, passing `height` meters from the camera center.
    pub fn ground_plane(&self) -> GroundPlane {
        let (s, c) = self.extrinsics.pitch.sin_cos();
        let normal = Vector3::new(0.0, c, s);
        let offset = self.extrinsics.height + normal.dot(&self.center().coords);
        GroundPlane { normal, offset, relu_guard: true }
    }

    pub fn to_camera_frame(&self, p: &Point3<f64>) -> Vector3<f64> {
        self.extrinsics.rotation * p.coords + self.extrinsics.translation
    }
}

/// Plane `r . normal = offset` in world coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundPlane {
    pub normal: Vector3<f64>,
    pub offset: f64,
    /// Clamp the depth numerator and denominator at zero before dividing.
    pub relu_guard: bool,
}

impl GroundPlane {
    pub fn new(normal: Vector3<f64>, offset: f64) -> Result<Self> {
        let norm = normal.norm();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(GeometryError::InvalidPlane("normal must be non-zero".into()));
        }
        Ok(Self { normal: normal / norm, offset, relu_guard: true })
    }

    pub fn flat(height: f64) -> Self {
        Self { normal: Vector3::new(0.0, 1.0, 0.0), offset: height, relu_guard: true }
    }

    pub fn with_relu_guard(mut self, on: bool) -> Self {
        self.relu_guard = on;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pixel {
    pub u: f64,
    pub v: f64,
    pub depth: Option<f64>,
}

impl Pixel {
    pub fn new(u: f64, v: f64) -> Self {
        Self { u, v, depth: None }
    }

    pub fn with_depth(u: f64, v: f64, depth: f64) -> Self {
        Self { u, v, depth: Some(depth) }
    }

    fn positive_depth(&self) -> Result<f64> {
        match self.depth {
            Some(z) if z > 0.0 => Ok(z),
            _ => Err(GeometryError::MissingDepth),
        }
    }
}

pub fn project(p: &Point3<f64>, cam: &Camera) -> Result<Pixel> {
    let pc = cam.to_camera_frame(p);
    if !(pc.z > 0.0) {
        return Err(GeometryError::BehindCamera(pc.z));
    }
    let k = &cam.intrinsics;
    Ok(Pixel::with_depth(k.f * pc.x / pc.z + k.u0, k.f * pc.y / pc.z + k.v0, pc.z))
}

pub fn backproject(px: &Pixel, cam: &Camera) -> Result<Point3<f64>> {
    let z = px.positive_depth()?;
    let ray = cam.ray_coefficients();
    Ok(Point3::from(ray.direction(px.u, px.v) * z + ray.b))
}

/// Depth at which the ray through `px` meets `plane`:
/// `z = (H - n.B) / (n . A [u v 1])`, which is `(H - b2) / (a21 u + a22 v + a23)`
/// for the flat ground normal.
///
/// With the ReLU guard on, a negative numerator is clamped to zero and a ray
/// pointing away from the ground (non-positive denominator) is reported as
/// [`GeometryError::HorizonDegenerate`]. With it off, the raw ratio is
/// returned and may be negative.
pub fn ground_depth(px: &Pixel, cam: &Camera, plane: &GroundPlane) -> Result<f64> {
    let ray = cam.ray_coefficients();
    let n = &plane.normal;
    let b = &ray.b;
    let dir = ray.direction(px.u, px.v);
    let mut numerator = plane.offset - (n.x * b.x + n.y * b.y + n.z * b.z);
    let mut denominator = n.x * dir.x + n.y * dir.y + n.z * dir.z;
    if plane.relu_guard {
        numerator = numerator.max(0.0);
        denominator = denominator.max(0.0);
    }
    if denominator.abs() < DEGENERATE_DENOMINATOR {
        return Err(GeometryError::HorizonDegenerate(denominator));
    }
    Ok(numerator / denominator)
}

/// Ground depth on a plane tilted by the camera pitch:
/// `(H - b2 cos d - b3 sin d) / ([a2 . p] cos d + [a3 . p] sin d)`.
pub fn ground_depth_pitched(px: &Pixel, cam: &Camera) -> Result<f64> {
    ground_depth(px, cam, &cam.ground_plane())
}

/// Slope of a piecewise-flat road: probability-weighted mean of the discrete
/// candidate slopes.
pub fn mixture_slope(probs: &[f64], taus: &[f64]) -> Result<f64> {
    if probs.len() != taus.len() || probs.is_empty() {
        return Err(GeometryError::NotASimplex(format!(
            "{} probabilities for {} slopes",
            probs.len(),
            taus.len()
        )));
    }
    if let Some(p) = probs.iter().find(|p| !(**p >= 0.0)) {
        return Err(GeometryError::NotASimplex(format!("negative probability {p}")));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(GeometryError::NotASimplex(format!("probabilities sum to {total}")));
    }
    Ok(probs.iter().zip(taus).map(|(p, t)| p * t).sum())
}

/// Where a pixel with known depth lands after the camera is raised by `dh`
/// meters: `(u, v + f dh / z, z)`. The object depth does not change.
pub fn pixel_shift(px: &Pixel, dh: f64, cam: &Camera) -> Result<Pixel> {
    let z = px.positive_depth()?;
    if !cam.extrinsics.is_identity_rotation() {
        return Err(GeometryError::RotatedCamera);
    }
    Ok(Pixel::with_depth(px.u, px.v + cam.intrinsics.f * dh / z, z))
}

/// General-rotation counterpart of [`pixel_shift`]: backproject, raise the
/// camera, reproject.
pub fn reproject_raised(px: &Pixel, dh: f64, cam: &Camera) -> Result<Pixel> {
    let world = backproject(px, cam)?;
    project(&world, &cam.raised(dh)?)
}

/// Rotation from yaw/pitch/roll used by tests and the scene generator.
pub fn rotation_from_euler(roll: f64, pitch: f64, yaw: f64) -> Matrix3<f64> {
    *Rotation3::from_euler_angles(roll, pitch, yaw).matrix()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::Matrix3x4;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn level_camera(f: f64, h: f64) -> Camera {
        Camera::new(
            CameraIntrinsics::new(f, 800.0, 450.0, 1600.0, 900.0).unwrap(),
            CameraExtrinsics::level(h).unwrap(),
        )
    }

    fn random_camera(rng: &mut ChaCha8Rng) -> Camera {
        let w = rng.random_range(640.0..2000.0);
        let h = rng.random_range(480.0..1200.0);
        let k = CameraIntrinsics::new(
            rng.random_range(300.0..2000.0),
            w * rng.random_range(0.3..0.7),
            h * rng.random_range(0.3..0.7),
            w,
            h,
        )
        .unwrap();
        let r = rotation_from_euler(
            rng.random_range(-0.2..0.2),
            rng.random_range(-0.3..0.3),
            rng.random_range(-0.2..0.2),
        );
        let t = Vector3::new(
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
        );
        Camera::new(k, CameraExtrinsics::new(r, t, rng.random_range(0.5..3.0), 0.0).unwrap())
    }

    // Independent 3x4 homogeneous projection.
    fn oracle_project(p: &Point3<f64>, cam: &Camera) -> (f64, f64, f64) {
        let mut rt = Matrix3x4::zeros();
        rt.fixed_view_mut::<3, 3>(0, 0).copy_from(&cam.extrinsics.rotation);
        rt.set_column(3, &cam.extrinsics.translation);
        let q = cam.intrinsics.k() * rt * p.to_homogeneous();
        (q.x / q.z, q.y / q.z, q.z)
    }

    #[test]
    fn project_point_below_camera() {
        let cam = level_camera(1000.0, 1.51);
        let px = project(&Point3::new(0.0, 1.51, 20.0), &cam).unwrap();
        assert_relative_eq!(px.u, 800.0);
        assert_relative_eq!(px.v, 450.0 + 1000.0 * 1.51 / 20.0, epsilon = 1e-12);
        assert_eq!(px.depth, Some(20.0));
    }

    #[test]
    fn project_optical_axis() {
        let cam = level_camera(1000.0, 1.51);
        let px = project(&Point3::new(0.0, 0.0, 7.0), &cam).unwrap();
        assert_eq!((px.u, px.v, px.depth), (800.0, 450.0, Some(7.0)));
        let back = backproject(&Pixel::with_depth(800.0, 450.0, 7.0), &cam).unwrap();
        assert_eq!(back, Point3::new(0.0, 0.0, 7.0));
    }

    #[test]
    fn behind_camera_rejected() {
        let cam = level_camera(1000.0, 1.51);
        assert!(matches!(
            project(&Point3::new(0.0, 0.0, -1.0), &cam),
            Err(GeometryError::BehindCamera(_))
        ));
        assert!(matches!(
            project(&Point3::new(1.0, 0.0, 0.0), &cam),
            Err(GeometryError::BehindCamera(_))
        ));
    }

    #[test]
    fn backproject_needs_depth() {
        let cam = level_camera(1000.0, 1.51);
        assert_eq!(backproject(&Pixel::new(10.0, 10.0), &cam), Err(GeometryError::MissingDepth));
    }

    #[test]
    fn project_matches_homogeneous_oracle_and_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10_000 {
            let cam = random_camera(&mut rng);
            // Sample in the camera frame so the point is in front.
            let pc = Vector3::new(
                rng.random_range(-20.0..20.0),
                rng.random_range(-5.0..5.0),
                rng.random_range(1.0..80.0),
            );
            let world = Point3::from(
                cam.extrinsics.rotation.transpose() * (pc - cam.extrinsics.translation),
            );
            let px = project(&world, &cam).unwrap();
            let (u, v, z) = oracle_project(&world, &cam);
            assert!((px.u - u).abs() < 1e-9 && (px.v - v).abs() < 1e-9);
            assert!((px.depth.unwrap() - z).abs() < 1e-9);
            let back = backproject(&px, &cam).unwrap();
            assert!((back - world).norm() < 1e-9, "round trip error {}", (back - world).norm());
            let again = project(&back, &cam).unwrap();
            assert!((again.u - px.u).abs() < 1e-9 && (again.v - px.v).abs() < 1e-9);
        }
    }

    #[test]
    fn backproject_matches_parametric_ray() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cam = random_camera(&mut rng);
        let ray = cam.ray_coefficients();
        let a = &ray.a;
        let b = &ray.b;
        let (u, v, z) = (321.5, 612.25, 17.0);
        let expected = Vector3::new(
            (a[(0, 0)] * u + a[(0, 1)] * v + a[(0, 2)]) * z + b[0],
            (a[(1, 0)] * u + a[(1, 1)] * v + a[(1, 2)]) * z + b[1],
            (a[(2, 0)] * u + a[(2, 1)] * v + a[(2, 2)]) * z + b[2],
        );
        let got = backproject(&Pixel::with_depth(u, v, z), &cam).unwrap();
        assert!((got.coords - expected).norm() < 1e-9);
    }

    #[test]
    fn ray_coefficients_recompute() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cam = random_camera(&mut rng);
        let ray = cam.ray_coefficients();
        let r_inv = cam.extrinsics.rotation.try_inverse().unwrap();
        let k_inv = cam.intrinsics.k().try_inverse().unwrap();
        assert!((ray.a - r_inv * k_inv).abs().max() < 1e-12);
        assert!((ray.b + r_inv * cam.extrinsics.translation).abs().max() < 1e-12);
    }

    #[test]
    fn ground_depth_level_camera() {
        let cam = level_camera(1000.0, 1.51);
        let z = ground_depth(&Pixel::new(800.0, 550.0), &cam, &GroundPlane::flat(1.51)).unwrap();
        assert_relative_eq!(z, 15.1, epsilon = 1e-12);
    }

    #[test]
    fn ground_depth_above_horizon() {
        let cam = level_camera(1000.0, 1.51);
        let above = Pixel::new(800.0, 400.0);
        assert!(matches!(
            ground_depth(&above, &cam, &GroundPlane::flat(1.51)),
            Err(GeometryError::HorizonDegenerate(_))
        ));
        let raw = ground_depth(&above, &cam, &GroundPlane::flat(1.51).with_relu_guard(false)).unwrap();
        assert!(raw < 0.0);
        assert!(matches!(
            ground_depth(&Pixel::new(800.0, 450.0), &cam, &GroundPlane::flat(1.51).with_relu_guard(false)),
            Err(GeometryError::HorizonDegenerate(_))
        ));
    }

    #[test]
    fn relu_clamps_negative_numerator() {
        let cam = level_camera(1000.0, 1.51);
        // Plane above the camera: the numerator is negative.
        let plane = GroundPlane::flat(-1.0);
        assert_eq!(ground_depth(&Pixel::new(800.0, 550.0), &cam, &plane).unwrap(), 0.0);
        let raw = ground_depth(&Pixel::new(800.0, 550.0), &cam, &plane.with_relu_guard(false)).unwrap();
        assert_relative_eq!(raw, -10.0, epsilon = 1e-12);
    }

    #[test]
    fn ground_depth_strictly_decreasing_below_horizon() {
        let cam = level_camera(1000.0, 1.51);
        let plane = GroundPlane::flat(1.51);
        let mut prev = f64::INFINITY;
        for row in 451..900 {
            let z = ground_depth(&Pixel::new(800.0, row as f64), &cam, &plane).unwrap();
            assert!(z < prev);
            prev = z;
        }
    }

    #[test]
    fn pitched_reduces_to_flat_at_zero_pitch() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..1000 {
            let base = random_camera(&mut rng);
            let cam = Camera::new(
                base.intrinsics,
                CameraExtrinsics::new(base.extrinsics.rotation, Vector3::zeros(), 1.51, 0.0).unwrap(),
            );
            let px = Pixel::new(rng.random_range(0.0..640.0), rng.random_range(0.0..480.0));
            let a = ground_depth_pitched(&px, &cam);
            let b = ground_depth(&px, &cam, &GroundPlane::flat(1.51));
            assert_eq!(a, b);
        }
    }

    #[test]
    fn pitched_level_closed_form() {
        let cam = level_camera(1000.0, 1.51).with_pitch(0.1).unwrap();
        let (u, v) = (700.0, 520.0);
        let d: f64 = 0.1;
        let expected = 1.51 / ((v - 450.0) / 1000.0 * d.cos() + d.sin());
        let got = ground_depth_pitched(&Pixel::new(u, v), &cam).unwrap();
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn mixture_slope_cases() {
        assert_eq!(mixture_slope(&[0.0, 1.0, 0.0], &[-0.1, 0.05, 0.1]).unwrap(), 0.05);
        let uniform = mixture_slope(&[1.0 / 3.0; 3], &[-0.1, 0.0, 0.1]).unwrap();
        assert!(uniform.abs() < 1e-15);
        let mixed = mixture_slope(&[0.25, 0.25, 0.5], &[0.0, 0.1, 0.2]).unwrap();
        assert!((mixed - 0.125).abs() < 1e-15);
        assert!(matches!(mixture_slope(&[0.5, 0.6], &[0.0, 0.1]), Err(GeometryError::NotASimplex(_))));
        assert!(matches!(mixture_slope(&[1.5, -0.5], &[0.0, 0.1]), Err(GeometryError::NotASimplex(_))));
        assert!(matches!(mixture_slope(&[1.0], &[0.0, 0.1]), Err(GeometryError::NotASimplex(_))));
    }

    #[test]
    fn pixel_shift_values() {
        let cam = level_camera(1000.0, 1.51);
        let px = Pixel::with_depth(640.0, 500.0, 20.0);
        assert_eq!(pixel_shift(&px, 0.0, &cam).unwrap(), px);
        let shifted = pixel_shift(&px, 0.76, &cam).unwrap();
        assert_relative_eq!(shifted.v - px.v, 38.0, epsilon = 1e-12);
        assert_eq!(shifted.depth, Some(20.0));
        assert_eq!(pixel_shift(&Pixel::new(1.0, 1.0), 0.5, &cam), Err(GeometryError::MissingDepth));
    }

    #[test]
    fn pixel_shift_matches_three_step_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let cam = level_camera(1000.0, 1.51);
        for _ in 0..1000 {
            let px = Pixel::with_depth(
                rng.random_range(0.0..1600.0),
                rng.random_range(0.0..900.0),
                rng.random_range(2.0..80.0),
            );
            let dh = rng.random_range(-0.7..0.8);
            let world = backproject(&px, &cam).unwrap();
            let moved = Camera::new(
                cam.intrinsics,
                CameraExtrinsics::new(Matrix3::identity(), Vector3::new(0.0, dh, 0.0), 1.51 + dh, 0.0)
                    .unwrap(),
            );
            let oracle = project(&world, &moved).unwrap();
            let law = pixel_shift(&px, dh, &cam).unwrap();
            assert!((law.u - oracle.u).abs() < 1e-9);
            assert!((law.v - oracle.v).abs() < 1e-9);
            assert!((law.depth.unwrap() - oracle.depth.unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn pixel_shift_rejects_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cam = random_camera(&mut rng);
        assert_eq!(
            pixel_shift(&Pixel::with_depth(1.0, 1.0, 10.0), 0.3, &cam),
            Err(GeometryError::RotatedCamera)
        );
        assert!(reproject_raised(&Pixel::with_depth(100.0, 300.0, 10.0), 0.3, &cam).is_ok());
    }

    #[test]
    fn raised_camera_sees_ground_further_below() {
        let cam = level_camera(1000.0, 1.51);
        let up = cam.raised(0.76).unwrap();
        assert_relative_eq!(up.extrinsics.height, 2.27, epsilon = 1e-12);
        assert_relative_eq!(up.center().y, -0.76, epsilon = 1e-12);
        let plane = up.ground_plane();
        assert_relative_eq!(plane.offset, 1.51, epsilon = 1e-12);
        assert!(cam.raised(-2.0).is_err());
    }

    #[test]
    fn invalid_cameras() {
        assert!(CameraIntrinsics::new(0.0, 10.0, 10.0, 20.0, 20.0).is_err());
        assert!(CameraIntrinsics::new(100.0, 30.0, 10.0, 20.0, 20.0).is_err());
        assert!(CameraExtrinsics::level(0.0).is_err());
        let skew = Matrix3::new(1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(CameraExtrinsics::new(skew, Vector3::zeros(), 1.0, 0.0).is_err());
        assert!(CameraExtrinsics::new(Matrix3::identity(), Vector3::zeros(), 1.0, -1.6).is_err());
        assert!(GroundPlane::new(Vector3::zeros(), 1.0).is_err());
        let plane = GroundPlane::new(Vector3::new(0.0, 2.0, 0.0), 1.0).unwrap();
        assert!((plane.normal.norm() - 1.0).abs() < 1e-12);
    }
}
