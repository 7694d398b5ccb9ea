//! Fixed-size linear algebra used by the camera model.
//!
//! Matrices are row-major nested arrays. Everything here is small (at most
//! 4x4), so the routines favour clarity over blocking or vectorisation.

use crate::scalar::Real;

pub type Vec3<T> = [T; 3];
pub type Mat3<T> = [[T; 3]; 3];
pub type Mat34<T> = [[T; 4]; 3];

pub fn identity3<T: Real>() -> Mat3<T> {
    let (o, z) = (T::one(), T::zero());
    [[o, z, z], [z, o, z], [z, z, o]]
}

pub fn dot3<T: Real>(a: &Vec3<T>, b: &Vec3<T>) -> T {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn cross3<T: Real>(a: &Vec3<T>, b: &Vec3<T>) -> Vec3<T> {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn norm3<T: Real>(a: &Vec3<T>) -> T {
    dot3(a, a).sqrt()
}

pub fn sub3<T: Real>(a: &Vec3<T>, b: &Vec3<T>) -> Vec3<T> {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn scale3<T: Real>(a: &Vec3<T>, s: T) -> Vec3<T> {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub fn transpose3<T: Real>(m: &Mat3<T>) -> Mat3<T> {
    let mut out = [[T::zero(); 3]; 3];
    for (r, row) in m.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            out[c][r] = *v;
        }
    }
    out
}

pub fn mul33<T: Real>(a: &Mat3<T>, b: &Mat3<T>) -> Mat3<T> {
    let mut out = [[T::zero(); 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            out[r][c] = (0..3).map(|k| a[r][k] * b[k][c]).sum();
        }
    }
    out
}

pub fn mul3v<T: Real>(m: &Mat3<T>, v: &Vec3<T>) -> Vec3<T> {
    [dot3(&m[0], v), dot3(&m[1], v), dot3(&m[2], v)]
}

/// `K · [R | t]`.
pub fn compose_projection<T: Real>(k: &Mat3<T>, r: &Mat3<T>, t: &Vec3<T>) -> Mat34<T> {
    let kr = mul33(k, r);
    let kt = mul3v(k, t);
    let mut p = [[T::zero(); 4]; 3];
    for row in 0..3 {
        p[row][..3].copy_from_slice(&kr[row]);
        p[row][3] = kt[row];
    }
    p
}

pub fn det3<T: Real>(m: &Mat3<T>) -> T {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Largest absolute entry of `RᵀR − I`.
pub fn orthonormality_defect<T: Real>(r: &Mat3<T>) -> T {
    let rtr = mul33(&transpose3(r), r);
    let id = identity3::<T>();
    let mut worst = T::zero();
    for i in 0..3 {
        for j in 0..3 {
            worst = worst.max((rtr[i][j] - id[i][j]).abs());
        }
    }
    worst
}

/// Rotation matrix from an axis-angle vector (Rodrigues).
pub fn rotation_from_axis_angle<T: Real>(w: &Vec3<T>) -> Mat3<T> {
    let angle = norm3(w);
    if angle == T::zero() {
        return identity3();
    }
    let k = scale3(w, T::one() / angle);
    let (s, c) = angle.sin_cos();
    let v = T::one() - c;
    [
        [c + k[0] * k[0] * v, k[0] * k[1] * v - k[2] * s, k[0] * k[2] * v + k[1] * s],
        [k[1] * k[0] * v + k[2] * s, c + k[1] * k[1] * v, k[1] * k[2] * v - k[0] * s],
        [k[2] * k[0] * v - k[1] * s, k[2] * k[1] * v + k[0] * s, c + k[2] * k[2] * v],
    ]
}

/// Singular values and right singular vectors of an `M x 4` matrix.
#[derive(Debug, Clone)]
pub struct Svd4<T> {
    /// Descending.
    pub singular_values: [T; 4],
    /// Column `i` is the right singular vector for `singular_values[i]`.
    pub v: [[T; 4]; 4],
}

impl<T: Real> Svd4<T> {
    /// Unit-norm right singular vector of the smallest singular value.
    pub fn null_vector(&self) -> [T; 4] {
        [self.v[0][3], self.v[1][3], self.v[2][3], self.v[3][3]]
    }
}

/// One-sided Jacobi (Hestenes) SVD of an `M x 4` matrix.
pub fn svd_right<T: Real, const M: usize>(a: &[[T; 4]; M]) -> Svd4<T> {
    let mut u = *a;
    let mut v = [[T::zero(); 4]; 4];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = T::one();
    }
    let eps = T::epsilon();
    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..3 {
            for q in (p + 1)..4 {
                let (mut alpha, mut beta, mut gamma) = (T::zero(), T::zero(), T::zero());
                for row in u.iter() {
                    alpha = alpha + row[p] * row[p];
                    beta = beta + row[q] * row[q];
                    gamma = gamma + row[p] * row[q];
                }
                if gamma == T::zero() || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (T::lit(2.0) * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                for row in u.iter_mut() {
                    let (up, uq) = (row[p], row[q]);
                    row[p] = c * up - s * uq;
                    row[q] = s * up + c * uq;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sigma = [T::zero(); 4];
    for (j, s) in sigma.iter_mut().enumerate() {
        *s = u.iter().map(|row| row[j] * row[j]).sum::<T>().sqrt();
    }
    let mut order = [0usize, 1, 2, 3];
    order.sort_by(|&i, &j| sigma[j].partial_cmp(&sigma[i]).unwrap_or(std::cmp::Ordering::Equal));
    let mut out = Svd4 {
        singular_values: [T::zero(); 4],
        v: [[T::zero(); 4]; 4],
    };
    for (dst, &src) in order.iter().enumerate() {
        out.singular_values[dst] = sigma[src];
        for r in 0..4 {
            out.v[r][dst] = v[r][src];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rodrigues_is_orthonormal() {
        let r = rotation_from_axis_angle(&[0.3, -0.2, 0.9]);
        assert!(orthonormality_defect(&r) < 1e-14);
        assert!((det3(&r) - 1.0f64).abs() < 1e-14);
    }

    #[test]
    fn jacobi_svd_matches_nalgebra() {
        let a = [
            [1.0, 2.0, -0.5, 3.0],
            [0.2, -1.0, 4.0, 1.5],
            [2.5, 0.1, 0.3, -2.0],
            [-1.0, 1.0, 1.0, 0.5],
        ];
        let ours = svd_right(&a);
        let m = nalgebra::Matrix4::from_fn(|r, c| a[r][c]);
        let mut theirs: Vec<f64> = m.svd(false, false).singular_values.iter().copied().collect();
        theirs.sort_by(|a, b| b.partial_cmp(a).unwrap());
        for (s, t) in ours.singular_values.iter().zip(&theirs) {
            assert!((s - t).abs() < 1e-12, "{s} vs {t}");
        }
        // A v_i = sigma_i u_i, so |A v_i| = sigma_i.
        for i in 0..4 {
            let col: Vec<f64> = (0..4).map(|r| ours.v[r][i]).collect();
            let av: f64 = a
                .iter()
                .map(|row| row.iter().zip(&col).map(|(x, y)| x * y).sum::<f64>().powi(2))
                .sum::<f64>()
                .sqrt();
            assert!((av - ours.singular_values[i]).abs() < 1e-12);
            let n: f64 = col.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rank_deficient_null_vector() {
        // Third column = first + second; null vector ∝ (1, 1, -1, 0).
        let a: [[f64; 4]; 4] = [[1.0, 0.0, 1.0, 0.0], [0.0, 1.0, 1.0, 0.0], [2.0, 3.0, 5.0, 0.0], [0.0, 0.0, 0.0, 1.0]];
        let svd = svd_right(&a);
        let n = svd.null_vector();
        assert!(svd.singular_values[3] < 1e-12);
        let s = 1.0 / 3f64.sqrt();
        assert!((n[0].abs() - s).abs() < 1e-12 && (n[2].abs() - s).abs() < 1e-12);
        assert!(n[3].abs() < 1e-12);
    }
}
