//! Linear (DLT) two-view triangulation.

use crate::linalg::{self, Vec3};
use crate::scalar::Real;

use super::{GeometryError, PixelPoint, StereoRig, WorldPoint, MIN_RAY_ANGLE_RAD};

/// Triangulated point plus conditioning diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triangulation<T> {
    pub point: WorldPoint<T>,
    /// Singular values of the 4x4 system, descending.
    pub singular_values: [T; 4],
    /// Unit null vector before dehomogenisation.
    pub homogeneous: [T; 4],
    /// Angle between the two back-projected rays.
    pub ray_angle: T,
}

impl<T: Real> Triangulation<T> {
    /// `σ₃ / σ₄`; infinite for noiseless observations.
    pub fn condition(&self) -> T {
        self.singular_values[2] / self.singular_values[3]
    }
}

/// Stacks the cross-product constraints `o × (P X) = 0` of both views.
///
/// Pixel points are homogeneous `(x, y, w)`; rows are `x·P³ − w·P¹` and
/// `y·P³ − w·P²` for each camera.
pub fn dlt_system<T: Real>(rig: &StereoRig<T>, o1: &Vec3<T>, o2: &Vec3<T>) -> [[T; 4]; 4] {
    let mut a = [[T::zero(); 4]; 4];
    for (cam, o) in [o1, o2].into_iter().enumerate() {
        let p = rig.projection(cam);
        let (p1, p2, p3) = (p.row(0), p.row(1), p.row(2));
        for j in 0..4 {
            a[2 * cam][j] = o[0] * p3[j] - o[2] * p1[j];
            a[2 * cam + 1][j] = o[1] * p3[j] - o[2] * p2[j];
        }
    }
    a
}

fn ray_angle<T: Real>(rig: &StereoRig<T>, o1: &Vec3<T>, o2: &Vec3<T>) -> T {
    let d1 = linalg::mul3v(&rig.k1.inverse_matrix(), o1);
    let d2_cam = linalg::mul3v(&rig.k2.inverse_matrix(), o2);
    let d2 = linalg::mul3v(&linalg::transpose3(&rig.ext2.rotation), &d2_cam);
    let cross = linalg::norm3(&linalg::cross3(&d1, &d2));
    cross.atan2(linalg::dot3(&d1, &d2).abs())
}

/// Triangulates homogeneous pixel observations `(x, y, w)`.
pub fn triangulate_homogeneous<T: Real>(
    rig: &StereoRig<T>,
    o1: &Vec3<T>,
    o2: &Vec3<T>,
) -> Result<Triangulation<T>, GeometryError> {
    let a = dlt_system(rig, o1, o2);
    let svd = linalg::svd_right(&a);
    let x = svd.null_vector();
    let angle = ray_angle(rig, o1, o2);
    let s = svd.singular_values;
    let condition = (s[2] / s[3]).as_f64();
    let scale = x[..3].iter().fold(T::zero(), |m, v| m.max(v.abs()));
    if angle < T::lit(MIN_RAY_ANGLE_RAD) || x[3].abs() <= T::epsilon() * T::lit(16.0) * scale {
        return Err(GeometryError::IllConditioned {
            ray_angle: angle.as_f64(),
            condition,
        });
    }
    let point = WorldPoint::camera(x[0] / x[3], x[1] / x[3], x[2] / x[3]);
    if !(point.z > T::zero()) {
        return Err(GeometryError::Cheirality(point.z.as_f64()));
    }
    Ok(Triangulation {
        point,
        singular_values: s,
        homogeneous: x,
        ray_angle: angle,
    })
}

pub fn triangulate_detailed<T: Real>(
    rig: &StereoRig<T>,
    o1: &PixelPoint<T>,
    o2: &PixelPoint<T>,
) -> Result<Triangulation<T>, GeometryError> {
    triangulate_homogeneous(rig, &[o1.u, o1.v, T::one()], &[o2.u, o2.v, T::one()])
}

/// Reference-camera-frame point seen at `o1` in camera 1 and `o2` in camera 2.
pub fn triangulate<T: Real>(
    rig: &StereoRig<T>,
    o1: &PixelPoint<T>,
    o2: &PixelPoint<T>,
) -> Result<WorldPoint<T>, GeometryError> {
    triangulate_detailed(rig, o1, o2).map(|t| t.point)
}
