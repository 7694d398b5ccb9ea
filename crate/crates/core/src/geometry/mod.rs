//! Pinhole stereo camera model, linear triangulation and the ground transform.
//!
//! # Frames
//!
//! Reference-camera frame: `x` to the image right, `y` to the image bottom,
//! `z` along the optical axis. Ground frame: `x` along the walkway (pointing
//! from the camera-carrying foot towards the observed foot), `y` lateral,
//! `z` up. [`to_ground`] first relabels camera axes into a level frame
//! `(z_c, -x_c, -y_c)` = (line of sight, left, up) and then rotates the two
//! horizontal components by the mounting yaw `theta`. This is the only place
//! where the axis convention lives.

mod audit;
mod calibration;
mod triangulate;

pub use audit::{audit, synthetic_checkerboard, AuditReport, CheckerboardFixture, FixtureConfig, FIXTURE_HEADER};
pub use calibration::{Calibration, CalibrationError};
pub use triangulate::{dlt_system, triangulate, triangulate_detailed, triangulate_homogeneous, Triangulation};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, Mat3, Mat34, Vec3};
use crate::scalar::Real;

/// Smallest acceptable angle between the two back-projected rays.
pub const MIN_RAY_ANGLE_RAD: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("calibration invalid: {0}")]
    CalibrationInvalid(String),
    #[error("degenerate rig: baseline {0} m")]
    ZeroBaseline(f64),
    #[error("point projects to infinity (w = {0:e})")]
    PointAtInfinity(f64),
    #[error("ill-conditioned triangulation: ray angle {ray_angle:e} rad, sigma3/sigma4 = {condition:e}")]
    IllConditioned { ray_angle: f64, condition: f64 },
    #[error("triangulated point behind the reference camera (z = {0})")]
    Cheirality(f64),
    #[error("invalid argument: {0}")]
    Argument(String),
}

/// Pinhole intrinsics. Skew is always zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics<T> {
    pub fx: T,
    pub fy: T,
    pub cx: T,
    pub cy: T,
}

impl<T: Real> Intrinsics<T> {
    pub fn new(fx: T, fy: T, cx: T, cy: T) -> Result<Self, GeometryError> {
        let k = Self { fx, fy, cx, cy };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.fx > T::zero() && self.fy > T::zero()) || !self.fx.is_finite() || !self.fy.is_finite() {
            return Err(GeometryError::CalibrationInvalid(format!(
                "focal lengths must be positive (fx = {}, fy = {})",
                self.fx, self.fy
            )));
        }
        if !self.cx.is_finite() || !self.cy.is_finite() {
            return Err(GeometryError::CalibrationInvalid("principal point not finite".into()));
        }
        Ok(())
    }

    pub fn skew(&self) -> T {
        T::zero()
    }

    pub fn matrix(&self) -> Mat3<T> {
        let (z, o) = (T::zero(), T::one());
        [[self.fx, self.skew(), self.cx], [z, self.fy, self.cy], [z, z, o]]
    }

    pub fn inverse_matrix(&self) -> Mat3<T> {
        let (z, o) = (T::zero(), T::one());
        [
            [o / self.fx, z, -self.cx / self.fx],
            [z, o / self.fy, -self.cy / self.fy],
            [z, z, o],
        ]
    }
}

/// Pose of camera 2 relative to the reference camera: `X₂ = R·X₁ + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extrinsics<T> {
    pub rotation: Mat3<T>,
    pub translation: Vec3<T>,
}

impl<T: Real> Extrinsics<T> {
    pub fn new(rotation: Mat3<T>, translation: Vec3<T>) -> Result<Self, GeometryError> {
        let e = Self { rotation, translation };
        e.validate()?;
        Ok(e)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let tol = T::tol(1e-9);
        let defect = linalg::orthonormality_defect(&self.rotation);
        if !(defect <= tol) {
            return Err(GeometryError::CalibrationInvalid(format!(
                "rotation not orthonormal (max |RᵀR − I| = {:e})",
                defect.as_f64()
            )));
        }
        let det = linalg::det3(&self.rotation);
        if !((det - T::one()).abs() <= tol) {
            return Err(GeometryError::CalibrationInvalid(format!("rotation determinant {det} != 1")));
        }
        if self.translation.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::CalibrationInvalid("translation not finite".into()));
        }
        Ok(())
    }

    /// Camera centre in reference-camera coordinates, `−Rᵀt`.
    pub fn center(&self) -> Vec3<T> {
        let rt = linalg::transpose3(&self.rotation);
        linalg::scale3(&linalg::mul3v(&rt, &self.translation), -T::one())
    }
}

/// 3x4 homogeneous projection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionMatrix<T>(pub Mat34<T>);

impl<T: Real> ProjectionMatrix<T> {
    pub fn from_parts(k: &Intrinsics<T>, r: &Mat3<T>, t: &Vec3<T>) -> Self {
        Self(linalg::compose_projection(&k.matrix(), r, t))
    }

    pub fn row(&self, i: usize) -> [T; 4] {
        self.0[i]
    }

    /// Homogeneous image of a homogeneous world point.
    pub fn apply(&self, x: &[T; 4]) -> Vec3<T> {
        let mut out = [T::zero(); 3];
        for (o, row) in out.iter_mut().zip(self.0.iter()) {
            *o = row.iter().zip(x).map(|(a, b)| *a * *b).sum();
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelPoint<T> {
    pub u: T,
    pub v: T,
}

impl<T: Real> PixelPoint<T> {
    pub fn new(u: T, v: T) -> Self {
        Self { u, v }
    }

    pub fn distance(&self, other: &Self) -> T {
        (self.u - other.u).hypot(self.v - other.v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Frame {
    Camera,
    Ground,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldPoint<T> {
    pub x: T,
    pub y: T,
    pub z: T,
    pub frame: Frame,
}

impl<T: Real> WorldPoint<T> {
    pub fn camera(x: T, y: T, z: T) -> Self {
        Self { x, y, z, frame: Frame::Camera }
    }

    pub fn ground(x: T, y: T, z: T) -> Self {
        Self { x, y, z, frame: Frame::Ground }
    }

    pub fn coords(&self) -> Vec3<T> {
        [self.x, self.y, self.z]
    }

    pub fn homogeneous(&self) -> [T; 4] {
        [self.x, self.y, self.z, T::one()]
    }

    pub fn distance(&self, other: &Self) -> T {
        linalg::norm3(&linalg::sub3(&self.coords(), &other.coords()))
    }
}

/// Calibrated stereo pair; camera 1 is the reference camera.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StereoRig<T> {
    pub k1: Intrinsics<T>,
    pub k2: Intrinsics<T>,
    pub ext2: Extrinsics<T>,
    pub p1: ProjectionMatrix<T>,
    pub p2: ProjectionMatrix<T>,
    pub baseline: T,
}

impl<T: Real> StereoRig<T> {
    pub fn projection(&self, camera: usize) -> &ProjectionMatrix<T> {
        if camera == 0 {
            &self.p1
        } else {
            &self.p2
        }
    }

    /// Projects a camera-frame point through both cameras.
    pub fn project_pair(&self, x: &WorldPoint<T>) -> Result<(PixelPoint<T>, PixelPoint<T>), GeometryError> {
        Ok((project(&self.p1, x)?, project(&self.p2, x)?))
    }

    /// Camera-2 coordinates of a reference-frame point.
    pub fn to_second_camera(&self, x: &Vec3<T>) -> Vec3<T> {
        let r = linalg::mul3v(&self.ext2.rotation, x);
        [r[0] + self.ext2.translation[0], r[1] + self.ext2.translation[1], r[2] + self.ext2.translation[2]]
    }
}

pub fn build_rig<T: Real>(k1: Intrinsics<T>, k2: Intrinsics<T>, ext2: Extrinsics<T>) -> Result<StereoRig<T>, GeometryError> {
    k1.validate()?;
    k2.validate()?;
    ext2.validate()?;
    let baseline = linalg::norm3(&ext2.center());
    if !(baseline > T::tol(1e-12)) {
        return Err(GeometryError::ZeroBaseline(baseline.as_f64()));
    }
    let p1 = ProjectionMatrix::from_parts(&k1, &linalg::identity3(), &[T::zero(); 3]);
    let p2 = ProjectionMatrix::from_parts(&k2, &ext2.rotation, &ext2.translation);
    Ok(StereoRig { k1, k2, ext2, p1, p2, baseline })
}

/// Dehomogenised image of a reference-camera-frame point.
pub fn project<T: Real>(p: &ProjectionMatrix<T>, x: &WorldPoint<T>) -> Result<PixelPoint<T>, GeometryError> {
    debug_assert_eq!(x.frame, Frame::Camera, "projection expects reference-camera coordinates");
    let h = p.apply(&x.homogeneous());
    if h[2].abs() <= T::lit(1e-12) {
        return Err(GeometryError::PointAtInfinity(h[2].as_f64()));
    }
    Ok(PixelPoint::new(h[0] / h[2], h[1] / h[2]))
}

/// Reference-camera point → ground frame, given the mounting yaw `theta`.
pub fn to_ground<T: Real>(x: &WorldPoint<T>, theta: T) -> WorldPoint<T> {
    debug_assert_eq!(x.frame, Frame::Camera);
    // Level frame: (line of sight, left, up).
    let (sight, left, up) = (x.z, -x.x, -x.y);
    let [gx, gy] = rotate_horizontal([sight, left], theta);
    WorldPoint::ground(gx, gy, up)
}

/// Inverse of [`to_ground`].
pub fn from_ground<T: Real>(x: &WorldPoint<T>, theta: T) -> WorldPoint<T> {
    debug_assert_eq!(x.frame, Frame::Ground);
    let [sight, left] = rotate_horizontal([x.x, x.y], -theta);
    WorldPoint::camera(-left, -x.z, sight)
}

/// 2D rotation `[cos −sin; sin cos]` of the horizontal components.
pub fn rotate_horizontal<T: Real>(h: [T; 2], theta: T) -> [T; 2] {
    let (s, c) = theta.sin_cos();
    [c * h[0] - s * h[1], s * h[0] + c * h[1]]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReprojectionStats<T> {
    pub rms: T,
    pub max: T,
    pub count: usize,
}

/// RMS and max pixel distance between observed pairs and projections of the
/// corresponding reference-frame points, over both cameras.
pub fn reprojection_error<T: Real>(
    rig: &StereoRig<T>,
    world_pts: &[WorldPoint<T>],
    observed: &[(PixelPoint<T>, PixelPoint<T>)],
) -> Result<ReprojectionStats<T>, GeometryError> {
    if world_pts.is_empty() {
        return Err(GeometryError::Argument("no points to audit".into()));
    }
    if world_pts.len() != observed.len() {
        return Err(GeometryError::Argument(format!(
            "{} world points but {} observations",
            world_pts.len(),
            observed.len()
        )));
    }
    let mut sum_sq = T::zero();
    let mut max = T::zero();
    for (x, (o1, o2)) in world_pts.iter().zip(observed) {
        let (q1, q2) = rig.project_pair(x)?;
        for d in [q1.distance(o1), q2.distance(o2)] {
            sum_sq = sum_sq + d * d;
            max = max.max(d);
        }
    }
    let count = 2 * world_pts.len();
    Ok(ReprojectionStats {
        rms: (sum_sq / T::from_usize(count).unwrap()).sqrt(),
        max,
        count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::rotation_from_axis_angle;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn k600() -> Intrinsics<f64> {
        Intrinsics::new(600.0, 600.0, 320.0, 240.0).unwrap()
    }

    fn simple_rig() -> StereoRig<f64> {
        let ext = Extrinsics::new(linalg::identity3(), [-0.06, 0.0, 0.0]).unwrap();
        build_rig(k600(), k600(), ext).unwrap()
    }

    #[test]
    fn pure_translation_baseline() {
        assert!((simple_rig().baseline - 0.06).abs() < 1e-15);
    }

    #[test]
    fn zero_baseline_is_rejected() {
        let ext = Extrinsics::new(linalg::identity3(), [0.0; 3]).unwrap();
        assert!(matches!(build_rig(k600(), k600(), ext), Err(GeometryError::ZeroBaseline(_))));
    }

    #[test]
    fn non_orthonormal_rotation_is_rejected() {
        let mut r = linalg::identity3::<f64>();
        r[0][0] = 1.001;
        assert!(matches!(Extrinsics::new(r, [-0.06, 0.0, 0.0]), Err(GeometryError::CalibrationInvalid(_))));
        let bad = Extrinsics { rotation: r, translation: [-0.06, 0.0, 0.0] };
        assert!(build_rig(k600(), k600(), bad).is_err());
        // Reflection: orthonormal but det = -1.
        let mut refl = linalg::identity3::<f64>();
        refl[2][2] = -1.0;
        assert!(Extrinsics::new(refl, [-0.06, 0.0, 0.0]).is_err());
    }

    #[test]
    fn negative_focal_length_is_rejected() {
        assert!(Intrinsics::new(-600.0, 600.0, 320.0, 240.0).is_err());
    }

    #[test]
    fn second_projection_matches_matrix_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let k1 = Intrinsics::new(rng.random_range(500.0..900.0), rng.random_range(500.0..900.0), 320.0, 240.0).unwrap();
        let k2 = Intrinsics::new(rng.random_range(500.0..900.0), rng.random_range(500.0..900.0), 330.0, 236.0).unwrap();
        let axis = [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()];
        let axis = linalg::scale3(&axis, 0.01 / linalg::norm3(&axis));
        let r = rotation_from_axis_angle(&axis);
        let t = [-0.06, 0.0, 0.0];
        let rig = build_rig(k1, k2, Extrinsics::new(r, t).unwrap()).unwrap();
        // Independent oracle: explicit K·[R|t] by index loops.
        let km = k2.matrix();
        for i in 0..3 {
            for j in 0..4 {
                let mut expected = 0.0;
                for k in 0..3 {
                    let rt = if j < 3 { r[k][j] } else { t[k] };
                    expected += km[i][k] * rt;
                }
                assert!((rig.p2.0[i][j] - expected).abs() < 1e-12);
            }
        }
        // P1 = K1 [I | 0]
        assert_eq!(rig.p1.0[0], [k1.fx, 0.0, k1.cx, 0.0]);
    }

    #[test]
    fn optical_axis_maps_to_principal_point() {
        let rig = simple_rig();
        let p = project(&rig.p1, &WorldPoint::camera(0.0, 0.0, 1.0)).unwrap();
        assert_eq!((p.u, p.v), (320.0, 240.0));
        let p = project(&rig.p1, &WorldPoint::camera(0.1, 0.0, 1.0)).unwrap();
        assert!((p.u - 380.0).abs() < 1e-12 && (p.v - 240.0).abs() < 1e-12);
    }

    #[test]
    fn projection_matches_direct_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let r = rotation_from_axis_angle(&[0.004, -0.007, 0.003]);
        let t = [-0.06, 0.001, 0.002];
        let k2 = Intrinsics::new(640.0, 620.0, 310.0, 250.0).unwrap();
        let rig = build_rig(k600(), k2, Extrinsics::new(r, t).unwrap()).unwrap();
        for _ in 0..100 {
            let x = [rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), rng.random_range(0.2..2.0)];
            let xc = [
                r[0][0] * x[0] + r[0][1] * x[1] + r[0][2] * x[2] + t[0],
                r[1][0] * x[0] + r[1][1] * x[1] + r[1][2] * x[2] + t[1],
                r[2][0] * x[0] + r[2][1] * x[1] + r[2][2] * x[2] + t[2],
            ];
            let u = k2.fx * xc[0] / xc[2] + k2.cx;
            let v = k2.fy * xc[1] / xc[2] + k2.cy;
            let p = project(&rig.p2, &WorldPoint::camera(x[0], x[1], x[2])).unwrap();
            assert!((p.u - u).abs() < 1e-9 && (p.v - v).abs() < 1e-9);
        }
    }

    #[test]
    fn principal_plane_point_is_at_infinity() {
        let rig = simple_rig();
        assert!(matches!(
            project(&rig.p1, &WorldPoint::camera(0.3, 0.1, 0.0)),
            Err(GeometryError::PointAtInfinity(_))
        ));
    }

    #[test]
    fn ground_transform_examples() {
        let x = WorldPoint::camera(0.12, -0.03, 0.65);
        let g = to_ground(&x, 0.0);
        // Zero yaw: pure relabelling, magnitudes untouched.
        assert_eq!((g.x, g.y, g.z), (0.65, -0.12, 0.03));
        assert_eq!(g.frame, Frame::Ground);
        // Quarter turn maps the line of sight onto the lateral axis.
        let g = to_ground(&WorldPoint::camera(0.0, 0.0, 1.0), std::f64::consts::FRAC_PI_2);
        assert!(g.x.abs() < 1e-12 && (g.y - 1.0).abs() < 1e-12 && g.z == 0.0);
        let h = rotate_horizontal([1.0, 0.0], std::f64::consts::FRAC_PI_2);
        assert!(h[0].abs() < 1e-12 && (h[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ground_transform_matches_rotation_matrix() {
        let theta: f64 = 0.3;
        let x = WorldPoint::camera(0.21, -0.04, 0.58);
        let g = to_ground(&x, theta);
        let m = [[theta.cos(), -theta.sin()], [theta.sin(), theta.cos()]];
        let h = [x.z, -x.x];
        assert!((g.x - (m[0][0] * h[0] + m[0][1] * h[1])).abs() < 1e-12);
        assert!((g.y - (m[1][0] * h[0] + m[1][1] * h[1])).abs() < 1e-12);
        assert_eq!(g.z, 0.04);
        let back = from_ground(&g, theta);
        assert!(back.distance(&x) < 1e-12);
    }

    #[test]
    fn reprojection_identities() {
        let rig = simple_rig();
        let pts: Vec<_> = (0..5).map(|i| WorldPoint::camera(0.01 * i as f64, -0.02, 0.5 + 0.1 * i as f64)).collect();
        let exact: Vec<_> = pts.iter().map(|x| rig.project_pair(x).unwrap()).collect();
        assert_eq!(reprojection_error(&rig, &pts, &exact).unwrap().rms, 0.0);
        let shifted: Vec<_> = exact
            .iter()
            .map(|(a, b)| (PixelPoint::new(a.u + 0.3, a.v + 0.4), PixelPoint::new(b.u + 0.3, b.v + 0.4)))
            .collect();
        let stats = reprojection_error(&rig, &pts, &shifted).unwrap();
        assert!((stats.rms - 0.5).abs() < 1e-9 && (stats.max - 0.5).abs() < 1e-9);
        assert!(reprojection_error(&rig, &[], &[]).is_err());
        assert!(reprojection_error(&rig, &pts, &exact[..2]).is_err());
    }

    #[test]
    fn single_precision_rig_projects() {
        let k = Intrinsics::<f32>::new(600.0, 600.0, 320.0, 240.0).unwrap();
        let ext = Extrinsics::new(linalg::identity3(), [-0.06f32, 0.0, 0.0]).unwrap();
        let rig = build_rig(k, k, ext).unwrap();
        let p = project(&rig.p1, &WorldPoint::camera(0.1f32, 0.0, 1.0)).unwrap();
        assert!((p.u - 380.0).abs() < 1e-4);
    }
}
