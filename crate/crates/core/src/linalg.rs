//! Small dense linear algebra: symmetric 3x3 eigendecomposition and a
//! partial-pivoting solver for the 6x6 systems of damped least squares.

use alloc::vec::Vec;


use crate::geometry::{Mat3, Vec3};
#[allow(unused_imports)]
use num_traits::Float;


/// Eigenvalues (descending) and matching unit eigenvectors of a symmetric
/// matrix, by cyclic Jacobi rotations.
pub fn symmetric_eigen3(m: &Mat3) -> ([f64; 3], [Vec3; 3]) {
    let mut a = *m;
    let mut v: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    for _sweep in 0..64 {
        let off = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
        let scale = a[0][0] * a[0][0] + a[1][1] * a[1][1] + a[2][2] * a[2][2];
        if off <= 1e-30 * scale.max(1e-300) {
            break;
        }
        for (p, q) in [(0usize, 1usize), (0, 2), (1, 2)] {
            if a[p][q].abs() < 1e-300 {
                continue;
            }
            let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let t = if theta == 0.0 { 1.0 } else { t };
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            // A <- J^T A J with J the (p, q) plane rotation
            for k in 0..3 {
                let akp = a[k][p];
                let akq = a[k][q];
                a[k][p] = c * akp - s * akq;
                a[k][q] = s * akp + c * akq;
            }
            for k in 0..3 {
                let apk = a[p][k];
                let aqk = a[q][k];
                a[p][k] = c * apk - s * aqk;
                a[q][k] = s * apk + c * aqk;
            }
            for row in v.iter_mut() {
                let vp = row[p];
                let vq = row[q];
                row[p] = c * vp - s * vq;
                row[q] = s * vp + c * vq;
            }
        }
    }
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| a[j][j].partial_cmp(&a[i][i]).unwrap_or(core::cmp::Ordering::Equal));
    let values = order.map(|i| a[i][i]);
    let vectors = order.map(|i| Vec3::new(v[0][i], v[1][i], v[2][i]).normalized());
    (values, vectors)
}

/// Solves `a x = b` for a square row-major `n x n` system with partial
/// pivoting. Returns `None` when the matrix is numerically singular.
pub fn solve_dense(a: &[f64], b: &[f64], n: usize) -> Option<Vec<f64>> {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(b.len(), n);
    let mut m: Vec<f64> = a.to_vec();
    let mut x: Vec<f64> = b.to_vec();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| {
            m[i * n + col].abs().partial_cmp(&m[j * n + col].abs()).unwrap_or(core::cmp::Ordering::Equal)
        })?;
        if m[pivot * n + col].abs() < 1e-300 {
            return None;
        }
        if pivot != col {
            for k in 0..n {
                m.swap(col * n + k, pivot * n + k);
            }
            x.swap(col, pivot);
        }
        let d = m[col * n + col];
        for row in (col + 1)..n {
            let f = m[row * n + col] / d;
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                m[row * n + k] -= f * m[col * n + k];
            }
            x[row] -= f * x[col];
        }
    }
    for col in (0..n).rev() {
        let mut s = x[col];
        for k in (col + 1)..n {
            s -= m[col * n + k] * x[k];
        }
        x[col] = s / m[col * n + col];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{mat3_mul_vec, Quat};

    #[test]
    fn eigen_of_rotated_diagonal() {
        let r = Quat::from_axis_angle(Vec3::new(0.3, -1.0, 0.5), 0.9).to_matrix();
        let d = [5.0, 2.0, 0.5];
        let mut m = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] = (0..3).map(|k| r[i][k] * d[k] * r[j][k]).sum();
            }
        }
        let (vals, vecs) = symmetric_eigen3(&m);
        for k in 0..3 {
            assert!((vals[k] - d[k]).abs() < 1e-12);
            let mv = mat3_mul_vec(&m, vecs[k]);
            assert!(mv.distance(vecs[k] * vals[k]) < 1e-12);
        }
    }

    #[test]
    fn solves_small_system() {
        let a = [0.0, 2.0, 1.0, 1.0, 1.0, 0.0, 3.0, 0.0, 1.0];
        let b = [5.0, 3.0, 6.0];
        let x = solve_dense(&a, &b, 3).unwrap();
        // x = (1.4, 1.6, 1.8) by substitution
        for (xi, ei) in x.iter().zip([1.4, 1.6, 1.8]) {
            assert!((xi - ei).abs() < 1e-12);
        }
        assert!(solve_dense(&[1.0, 2.0, 2.0, 4.0], &[1.0, 1.0], 2).is_none());
    }
}
