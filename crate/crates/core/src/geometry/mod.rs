//! Pinhole camera model, rigid-body frame chain from camera to robot base,
//! grasp waypoints and quintic time scaling.

mod calib;

pub use calib::Calibration;

use crate::pgm::GrayImage;
use nalgebra::{Matrix3, Matrix4, Vector3};
use serde::Serialize;
use thiserror::Error;

pub const DEFAULT_SAFETY_MARGIN: f64 = 0.10;
pub const DEFAULT_ENCLOSE_OFFSET: f64 = 0.02;
/// Roll, pitch, yaw of the end effector used for every pick.
pub const PICK_ORIENTATION: [f64; 3] = [-std::f64::consts::PI, -std::f64::consts::FRAC_PI_2, 0.0];
pub const ORTHONORMAL_TOL: f64 = 1e-9;
/// Depth PGM units are millimetres.
pub const DEPTH_UNIT_M: f64 = 0.001;
pub const DEPTH_FALLBACK_WINDOW: usize = 5;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("invalid depth {0}")]
    InvalidDepth(f64),
    #[error("point is behind the camera (z = {0})")]
    BehindCamera(f64),
    #[error("parameter error: {0}")]
    Param(String),
    #[error("invalid rotation: {0}")]
    Validation(String),
    #[error("t = {t} outside [0, {duration}]")]
    Range { t: f64, duration: f64 },
    #[error("calibration line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, GeometryError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0 && fx.is_finite() && fy.is_finite()) || !(cx.is_finite() && cy.is_finite()) {
            return Err(GeometryError::Param(format!("bad intrinsics fx={fx} fy={fy} cx={cx} cy={cy}")));
        }
        Ok(Self { fx, fy, cx, cy })
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    Camera,
    EndEffector,
    Base,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub frame: Frame,
}

impl Point3 {
    pub fn new(x: f64, y: f64, z: f64, frame: Frame) -> Result<Self> {
        if !(x.is_finite() && y.is_finite() && z.is_finite()) {
            return Err(GeometryError::Param(format!("non-finite point ({x}, {y}, {z})")));
        }
        Ok(Self { x, y, z, frame })
    }

    fn from_vec(v: Vector3<f64>, frame: Frame) -> Self {
        Self {
            x: v.x,
            y: v.y,
            z: v.z,
            frame,
        }
    }

    pub fn vec(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    /// Same coordinates, relabelled.
    pub fn in_frame(self, frame: Frame) -> Self {
        Self { frame, ..self }
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        (self.vec() - other.vec()).norm()
    }
}

/// `p ↦ R·p + t` with `R` a proper rotation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        if rotation.iter().chain(translation.iter()).any(|v| !v.is_finite()) {
            return Err(GeometryError::Validation("non-finite entry".into()));
        }
        let dev = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        if dev > ORTHONORMAL_TOL {
            return Err(GeometryError::Validation(format!("RᵀR deviates from I by {dev:e}")));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > ORTHONORMAL_TOL {
            return Err(GeometryError::Validation(format!("det R = {det}")));
        }
        Ok(Self { rotation, translation })
    }

    pub fn from_rows(r: [[f64; 3]; 3], t: [f64; 3]) -> Result<Self> {
        Self::new(
            Matrix3::new(r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2]),
            Vector3::from(t),
        )
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn translation(x: f64, y: f64, z: f64) -> Result<Self> {
        Self::new(Matrix3::identity(), Vector3::new(x, y, z))
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation_vector(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn with_translation(mut self, t: Vector3<f64>) -> Self {
        self.translation = t;
        self
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Keeps the frame tag of `p`.
    pub fn apply(&self, p: &Point3) -> Point3 {
        Point3::from_vec(self.rotation * p.vec() + self.translation, p.frame)
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }
}

pub fn compose(a: &RigidTransform, b: &RigidTransform) -> RigidTransform {
    a.compose(b)
}

pub fn apply(t: &RigidTransform, p: &Point3) -> Point3 {
    t.apply(p)
}

pub fn back_project(u: f64, v: f64, depth: f64, k: &CameraIntrinsics) -> Result<Point3> {
    if !(depth.is_finite() && depth > 0.0) {
        return Err(GeometryError::InvalidDepth(depth));
    }
    Point3::new((u - k.cx) * depth / k.fx, (v - k.cy) * depth / k.fy, depth, Frame::Camera)
}

pub fn project(p: &Point3, k: &CameraIntrinsics) -> Result<(f64, f64)> {
    if !(p.z > 0.0) {
        return Err(GeometryError::BehindCamera(p.z));
    }
    Ok((k.fx * p.x / p.z + k.cx, k.fy * p.y / p.z + k.cy))
}

/// Camera point → end-effector frame → base frame.
pub fn to_base(p_cam: &Point3, hand_eye: &RigidTransform, ee_to_base: &RigidTransform) -> Point3 {
    let p_ee = hand_eye.apply(p_cam).in_frame(Frame::EndEffector);
    ee_to_base.apply(&p_ee).in_frame(Frame::Base)
}

/// Extrinsic X-Y-Z: `R = Rz(yaw)·Ry(pitch)·Rx(roll)`.
pub fn euler_to_rotation(roll: f64, pitch: f64, yaw: f64) -> RigidTransform {
    let (sr, cr) = roll.sin_cos();
    let (sp, cp) = pitch.sin_cos();
    let (sy, cy) = yaw.sin_cos();
    let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, cr, -sr, 0.0, sr, cr);
    let ry = Matrix3::new(cp, 0.0, sp, 0.0, 1.0, 0.0, -sp, 0.0, cp);
    let rz = Matrix3::new(cy, -sy, 0.0, sy, cy, 0.0, 0.0, 0.0, 1.0);
    RigidTransform {
        rotation: rz * ry * rx,
        translation: Vector3::zeros(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Pose {
    pub position: Point3,
    /// Roll, pitch, yaw.
    pub orientation: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GraspPlan {
    pub pre_grasp: Pose,
    pub grasp: Pose,
    pub approach_axis: [f64; 3],
    pub safety_margin: f64,
    pub enclose_offset: f64,
}

/// Pre-grasp backs off `safety_margin` against the tool +z axis; the grasp
/// pushes `enclose_offset` past the target along it.
pub fn grasp_plan(target: &Point3, orientation: [f64; 3], safety_margin: f64, enclose_offset: f64) -> Result<GraspPlan> {
    if !(safety_margin > 0.0 && safety_margin.is_finite()) {
        return Err(GeometryError::Param(format!("safety margin must be positive, got {safety_margin}")));
    }
    if !(enclose_offset >= 0.0 && enclose_offset.is_finite()) {
        return Err(GeometryError::Param(format!("enclose offset must be non-negative, got {enclose_offset}")));
    }
    if orientation.iter().any(|a| !a.is_finite()) {
        return Err(GeometryError::Param("non-finite orientation".into()));
    }
    let [roll, pitch, yaw] = orientation;
    let axis = euler_to_rotation(roll, pitch, yaw).rotation * Vector3::z();
    let t = target.vec();
    let pose = |v: Vector3<f64>| Pose {
        position: Point3::from_vec(v, target.frame),
        orientation,
    };
    Ok(GraspPlan {
        pre_grasp: pose(t - safety_margin * axis),
        grasp: pose(t + enclose_offset * axis),
        approach_axis: axis.into(),
        safety_margin,
        enclose_offset,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MotionSample {
    pub s: f64,
    pub s_dot: f64,
    pub s_ddot: f64,
}

/// Rest-to-rest time scaling `s(τ) = 10τ³ − 15τ⁴ + 6τ⁵`, `τ = t/T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuinticProfile {
    duration: f64,
}

impl QuinticProfile {
    pub fn new(duration: f64) -> Result<Self> {
        if !(duration > 0.0 && duration.is_finite()) {
            return Err(GeometryError::Param(format!("duration must be positive, got {duration}")));
        }
        Ok(Self { duration })
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn eval(&self, t: f64) -> Result<MotionSample> {
        let d = self.duration;
        if !(0.0..=d).contains(&t) {
            return Err(GeometryError::Range { t, duration: d });
        }
        let x = t / d;
        let (x2, x3) = (x * x, x * x * x);
        Ok(MotionSample {
            s: x3 * (10.0 - 15.0 * x + 6.0 * x2),
            s_dot: 30.0 * x2 * (1.0 - x) * (1.0 - x) / d,
            s_ddot: 60.0 * x * (1.0 - x) * (1.0 - 2.0 * x) / (d * d),
        })
    }
}

pub fn quintic_profile(t: f64, duration: f64) -> Result<(f64, f64, f64)> {
    let m = QuinticProfile::new(duration)?.eval(t)?;
    Ok((m.s, m.s_dot, m.s_ddot))
}

/// Metres at `(u, v)`; a zero sample falls back to the median of the
/// non-zero samples in the surrounding 5×5 window.
pub fn sample_depth(depth: &GrayImage, u: usize, v: usize) -> Result<f64> {
    if u >= depth.width || v >= depth.height {
        return Err(GeometryError::Param(format!(
            "pixel ({u}, {v}) outside {}x{} depth map",
            depth.width, depth.height
        )));
    }
    let here = depth.get(u, v);
    if here != 0 {
        return Ok(here as f64 * DEPTH_UNIT_M);
    }
    let r = DEPTH_FALLBACK_WINDOW / 2;
    let mut vals: Vec<u16> = Vec::with_capacity(DEPTH_FALLBACK_WINDOW * DEPTH_FALLBACK_WINDOW);
    for y in v.saturating_sub(r)..(v + r + 1).min(depth.height) {
        for x in u.saturating_sub(r)..(u + r + 1).min(depth.width) {
            let d = depth.get(x, y);
            if d != 0 {
                vals.push(d);
            }
        }
    }
    if vals.is_empty() {
        return Err(GeometryError::InvalidDepth(0.0));
    }
    vals.sort_unstable();
    let n = vals.len();
    let med = if n % 2 == 1 {
        vals[n / 2] as f64
    } else {
        (vals[n / 2 - 1] as f64 + vals[n / 2] as f64) / 2.0
    };
    Ok(med * DEPTH_UNIT_M)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Unit, UnitQuaternion, Vector4};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn k600() -> CameraIntrinsics {
        CameraIntrinsics::new(600.0, 600.0, 320.0, 320.0).unwrap()
    }

    fn cam(x: f64, y: f64, z: f64) -> Point3 {
        Point3::new(x, y, z, Frame::Camera).unwrap()
    }

    fn random_transform(rng: &mut ChaCha8Rng) -> RigidTransform {
        let axis = Unit::new_normalize(Vector3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        ));
        let q = UnitQuaternion::from_axis_angle(&axis, rng.gen_range(-PI..PI));
        let t = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        RigidTransform::new(*q.to_rotation_matrix().matrix(), t).unwrap()
    }

    #[test]
    fn projection_examples() {
        let k = k600();
        let p = back_project(320.0, 320.0, 1.7, &k).unwrap();
        assert_eq!((p.x, p.y, p.z), (0.0, 0.0, 1.7));
        let p = back_project(920.0, 320.0, 2.0, &k).unwrap();
        assert_eq!((p.x, p.y, p.z), (2.0, 0.0, 2.0));
        assert_eq!(project(&cam(0.0, 0.0, 1.0), &k).unwrap(), (320.0, 320.0));
        assert_eq!(project(&cam(1.0, 0.0, 2.0), &k).unwrap().0, 620.0);
        assert!(matches!(back_project(1.0, 1.0, 0.0, &k), Err(GeometryError::InvalidDepth(_))));
        assert!(back_project(1.0, 1.0, f64::NAN, &k).is_err());
        assert!(matches!(project(&cam(0.0, 0.0, -1.0), &k), Err(GeometryError::BehindCamera(_))));
        assert!(CameraIntrinsics::new(0.0, 1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn rotation_validation() {
        assert!(RigidTransform::from_rows([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, -1.0]], [0.0; 3]).is_err());
        assert!(RigidTransform::from_rows([[1.0, 1e-6, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]], [0.0; 3]).is_err());
        assert!(RigidTransform::from_rows([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]], [1.0, 2.0, 3.0]).is_ok());
    }

    #[test]
    fn identity_and_translations() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = random_transform(&mut rng);
        assert_eq!(RigidTransform::identity().compose(&t), t);
        let p = cam(0.3, -0.2, 0.9);
        assert_eq!(RigidTransform::identity().apply(&p), p);
        let a = RigidTransform::translation(1.0, 2.0, 3.0).unwrap();
        let b = RigidTransform::translation(-0.5, 0.25, 4.0).unwrap();
        assert_eq!(*a.compose(&b).translation_vector(), Vector3::new(0.5, 2.25, 7.0));
    }

    #[test]
    fn chain_matches_homogeneous_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let (a, b, c) = (random_transform(&mut rng), random_transform(&mut rng), random_transform(&mut rng));
            let p = cam(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(0.1..3.0));
            let m = a.to_homogeneous() * b.to_homogeneous() * c.to_homogeneous();
            let h = m * Vector4::new(p.x, p.y, p.z, 1.0);
            let q = a.compose(&b).compose(&c).apply(&p);
            assert!((q.vec() - h.xyz()).abs().max() < 1e-12);
            let inv = a.compose(&a.inverse());
            assert!((inv.rotation() - Matrix3::identity()).abs().max() < 1e-12);
        }
    }

    #[test]
    fn to_base_examples() {
        let id = RigidTransform::identity();
        let p = cam(0.1, 0.2, 0.5);
        let b = to_base(&p, &id, &id);
        assert_eq!((b.x, b.y, b.z, b.frame), (0.1, 0.2, 0.5, Frame::Base));
        let he = RigidTransform::translation(0.0, 0.0, -0.1).unwrap();
        let b = to_base(&cam(0.0, 0.0, 0.5), &he, &id);
        assert_eq!((b.x, b.y, b.z), (0.0, 0.0, 0.4));
        assert_eq!(b, id.compose(&he).apply(&cam(0.0, 0.0, 0.5)).in_frame(Frame::Base));

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let (he, eb) = (random_transform(&mut rng), random_transform(&mut rng));
            let p = cam(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(0.2..2.0));
            let chained = to_base(&p, &he, &eb);
            let composed = eb.compose(&he).apply(&p);
            assert!((chained.vec() - composed.vec()).abs().max() < 1e-12);
        }
    }

    #[test]
    fn euler_examples() {
        assert_eq!(*euler_to_rotation(0.0, 0.0, 0.0).rotation(), Matrix3::identity());
        let r = euler_to_rotation(PI, 0.0, 0.0);
        assert!((r.rotation() - Matrix3::from_diagonal(&Vector3::new(1.0, -1.0, -1.0))).abs().max() < 1e-15);

        let [roll, pitch, yaw] = PICK_ORIENTATION;
        let q = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw)
            * UnitQuaternion::from_axis_angle(&Vector3::y_axis(), pitch)
            * UnitQuaternion::from_axis_angle(&Vector3::x_axis(), roll);
        let axis = euler_to_rotation(roll, pitch, yaw).rotation() * Vector3::z();
        assert!((axis - q * Vector3::z()).norm() < 1e-12);
        assert!((axis - Vector3::x()).norm() < 1e-12);
    }

    #[test]
    fn grasp_plan_examples() {
        let target = Point3::new(0.5, 0.0, 0.3, Frame::Base).unwrap();
        let g = grasp_plan(&target, [0.0; 3], 0.1, DEFAULT_ENCLOSE_OFFSET).unwrap();
        let close = |p: &Point3, e: [f64; 3]| (p.vec() - Vector3::from(e)).norm() < 1e-12;
        assert!(close(&g.pre_grasp.position, [0.5, 0.0, 0.2]));
        assert!(close(&g.grasp.position, [0.5, 0.0, 0.32]));

        let g = grasp_plan(&target, PICK_ORIENTATION, 0.1, 0.02).unwrap();
        let [r, p, y] = PICK_ORIENTATION;
        let axis = UnitQuaternion::from_euler_angles(r, p, y) * Vector3::z();
        assert!((g.pre_grasp.position.vec() - (target.vec() - 0.1 * axis)).norm() < 1e-12);
        assert!((g.grasp.position.vec() - (target.vec() + 0.02 * axis)).norm() < 1e-12);
        assert_eq!(g.grasp.orientation, PICK_ORIENTATION);

        let g = grasp_plan(&target, PICK_ORIENTATION, 0.1, 0.0).unwrap();
        assert_eq!(g.grasp.position, target);
        assert!(grasp_plan(&target, [0.0; 3], 0.0, 0.02).is_err());
        assert!(grasp_plan(&target, [0.0; 3], 0.1, -0.01).is_err());
    }

    #[test]
    fn quintic_examples() {
        let q = QuinticProfile::new(2.0).unwrap();
        let (a, b) = (q.eval(0.0).unwrap(), q.eval(2.0).unwrap());
        assert_eq!((a.s, a.s_dot, a.s_ddot), (0.0, 0.0, 0.0));
        assert_eq!((b.s, b.s_dot, b.s_ddot), (1.0, 0.0, 0.0));
        let m = q.eval(1.0).unwrap();
        assert_eq!(m.s, 0.5);
        assert!((m.s_dot - 1.875 / 2.0).abs() < 1e-15);
        assert!(q.eval(2.5).is_err() && q.eval(-0.1).is_err());
        assert!(QuinticProfile::new(0.0).is_err());

        let n = 100_000;
        let (mut integral, mut prev) = (0.0, q.eval(0.0).unwrap());
        let mut peak: f64 = 0.0;
        for i in 1..=n {
            let cur = q.eval(2.0 * i as f64 / n as f64).unwrap();
            assert!(cur.s >= prev.s);
            integral += (cur.s_dot + prev.s_dot) / 2.0 * (2.0 / n as f64);
            peak = peak.max(cur.s_dot);
            prev = cur;
        }
        assert!((integral - 1.0).abs() < 1e-6);
        assert!((peak - 1.875 / 2.0).abs() < 1e-9);
    }

    #[test]
    fn quintic_derivatives_match_finite_differences() {
        let q = QuinticProfile::new(1.5).unwrap();
        let h = 1e-6;
        for i in 1..30 {
            let t = 1.5 * i as f64 / 30.0;
            let (lo, mid, hi) = (q.eval(t - h).unwrap(), q.eval(t).unwrap(), q.eval(t + h).unwrap());
            assert!(((hi.s - lo.s) / (2.0 * h) - mid.s_dot).abs() < 1e-6);
            assert!(((hi.s_dot - lo.s_dot) / (2.0 * h) - mid.s_ddot).abs() < 1e-5);
        }
    }

    #[test]
    fn depth_sampling_and_fallback() {
        let mut d = GrayImage::new(8, 8, 65535);
        d.set(3, 3, 1200);
        assert_eq!(sample_depth(&d, 3, 3).unwrap(), 1.2);
        d.set(3, 3, 0);
        for (i, (x, y)) in [(1, 1), (5, 5), (2, 4), (7, 7)].into_iter().enumerate() {
            d.set(x, y, 1000 + 100 * i as u16);
        }
        // (7,7) lies outside the window around (3,3)
        assert!((sample_depth(&d, 3, 3).unwrap() - 1.1).abs() < 1e-12);
        assert!(matches!(sample_depth(&GrayImage::new(4, 4, 65535), 1, 1), Err(GeometryError::InvalidDepth(_))));
        assert!(sample_depth(&d, 8, 0).is_err());
    }

    proptest! {
        #[test]
        fn pixel_round_trip(u in -500.0f64..1500.0, v in -500.0f64..1500.0, d in 1e-3f64..50.0, s in 1e-3f64..1e3) {
            let k = CameraIntrinsics::new(612.3, 598.1, 318.4, 241.7).unwrap();
            let p = back_project(u, v, d, &k).unwrap();
            let (pu, pv) = project(&p, &k).unwrap();
            prop_assert!((pu - u).abs() < 1e-9 && (pv - v).abs() < 1e-9);
            let scaled = cam(p.x * s, p.y * s, p.z * s);
            let (su, sv) = project(&scaled, &k).unwrap();
            prop_assert!((su - pu).abs() < 1e-9 && (sv - pv).abs() < 1e-9);
        }

        #[test]
        fn to_base_is_isometry(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (he, eb) = (random_transform(&mut rng), random_transform(&mut rng));
            let pts: Vec<Point3> = (0..6)
                .map(|_| cam(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(0.1..2.0)))
                .collect();
            let moved: Vec<Point3> = pts.iter().map(|p| to_base(p, &he, &eb)).collect();
            for i in 0..pts.len() {
                for j in 0..i {
                    prop_assert!((pts[i].distance(&pts[j]) - moved[i].distance(&moved[j])).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn grasp_invariants(
            x in -1.0f64..1.0, y in -1.0f64..1.0, z in 0.0f64..1.0,
            r in -PI..PI, p in -PI..PI, w in -PI..PI,
            margin in 0.01f64..0.5, off in 0.0f64..0.1,
        ) {
            let t = Point3::new(x, y, z, Frame::Base).unwrap();
            let g = grasp_plan(&t, [r, p, w], margin, off).unwrap();
            let axis = Vector3::from(g.approach_axis);
            prop_assert!((axis.norm() - 1.0).abs() < 1e-12);
            prop_assert!((g.grasp.position.distance(&t) - off).abs() < 1e-12);
            prop_assert!((g.pre_grasp.position.distance(&t) - margin).abs() < 1e-12);
            prop_assert!((t.vec() - g.pre_grasp.position.vec()).dot(&axis) >= 0.0);
        }
    }
}
