//! Small dense linear-algebra kernels on row-major `Vec<f64>` storage.
//!
//! Sizes in this crate are at most a few thousand (GP kernel matrices) and
//! usually below ten (QP KKT systems), so plain loops are adequate.

use alloc::vec;
use alloc::vec::Vec;

// Unused when std is in the dependency graph (test builds).
#[allow(unused_imports)]
use num_traits::Float;

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Lower-triangular Cholesky factor of the `n x n` symmetric matrix `a`.
///
/// Returns `None` when a non-positive pivot is met.
pub fn cholesky(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            let (ri, rj) = (&l[i * n..i * n + j], &l[j * n..j * n + j]);
            sum -= dot(ri, rj);
            if i == j {
                if !(sum > 0.0) || !sum.is_finite() {
                    return None;
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    Some(l)
}

/// Solves `L x = b` in place for lower-triangular `L`.
pub fn solve_lower_in_place(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let s = dot(&l[i * n..i * n + i], &b[..i]);
        b[i] = (b[i] - s) / l[i * n + i];
    }
}

/// Solves `L^T x = b` in place for lower-triangular `L`.
pub fn solve_lower_transpose_in_place(l: &[f64], n: usize, b: &mut [f64]) {
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

/// Solves the square system `a x = b` by Gaussian elimination with partial
/// pivoting. Returns `None` if a pivot falls below `pivot_tol` relative to the
/// largest entry of `a`.
pub fn lu_solve(a: &[f64], n: usize, b: &[f64], pivot_tol: f64) -> Option<Vec<f64>> {
    let mut m = a.to_vec();
    let mut x = b.to_vec();
    let scale = m.iter().fold(0.0f64, |acc, v| acc.max(v.abs())).max(1e-300);
    for col in 0..n {
        let (piv, piv_val) =
            (col..n)
                .map(|r| (r, m[r * n + col].abs()))
                .fold(
                    (col, -1.0),
                    |best, cur| if cur.1 > best.1 { cur } else { best },
                );
        if piv_val <= pivot_tol * scale {
            return None;
        }
        if piv != col {
            for k in 0..n {
                m.swap(col * n + k, piv * n + k);
            }
            x.swap(col, piv);
        }
        let d = m[col * n + col];
        for r in col + 1..n {
            let f = m[r * n + col] / d;
            if f != 0.0 {
                for k in col..n {
                    m[r * n + k] -= f * m[col * n + k];
                }
                x[r] -= f * x[col];
            }
        }
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in i + 1..n {
            s -= m[i * n + k] * x[k];
        }
        x[i] = s / m[i * n + i];
    }
    Some(x)
}

/// Householder QR of the row-major `rows x cols` matrix `a`.
///
/// Returns `(q, r)` with `q` orthogonal (`rows x rows`) and `r` upper
/// trapezoidal (`rows x cols`), both row-major.
pub fn householder_qr(a: &[f64], rows: usize, cols: usize) -> (Vec<f64>, Vec<f64>) {
    let mut r = a.to_vec();
    let mut q = vec![0.0; rows * rows];
    for i in 0..rows {
        q[i * rows + i] = 1.0;
    }
    for k in 0..cols.min(rows) {
        let norm = (k..rows)
            .map(|i| r[i * cols + k] * r[i * cols + k])
            .sum::<f64>()
            .sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if r[k * cols + k] > 0.0 { -norm } else { norm };
        let mut v = vec![0.0; rows];
        for i in k..rows {
            v[i] = r[i * cols + k];
        }
        v[k] -= alpha;
        let vv = dot(&v[k..], &v[k..]);
        if vv == 0.0 {
            continue;
        }
        for j in 0..cols {
            let s: f64 = (k..rows).map(|i| v[i] * r[i * cols + j]).sum::<f64>() * 2.0 / vv;
            for i in k..rows {
                r[i * cols + j] -= s * v[i];
            }
        }
        // accumulate q = q * H
        for i in 0..rows {
            let s: f64 = (k..rows).map(|l| q[i * rows + l] * v[l]).sum::<f64>() * 2.0 / vv;
            for l in k..rows {
                q[i * rows + l] -= s * v[l];
            }
        }
    }
    (q, r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_reconstructs_spd_matrix() {
        let a = [4.0, 2.0, 0.4, 2.0, 5.0, 1.0, 0.4, 1.0, 3.0];
        let l = cholesky(&a, 3).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let v: f64 = (0..3).map(|k| l[i * 3 + k] * l[j * 3 + k]).sum();
                assert!((v - a[i * 3 + j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        assert!(cholesky(&[1.0, 2.0, 2.0, 1.0], 2).is_none());
    }

    #[test]
    fn triangular_solves_invert_each_other() {
        let a = [4.0, 2.0, 2.0, 3.0];
        let l = cholesky(&a, 2).unwrap();
        let mut x = [1.0, -1.0];
        solve_lower_in_place(&l, 2, &mut x);
        solve_lower_transpose_in_place(&l, 2, &mut x);
        // a x = (1, -1)
        assert!((4.0 * x[0] + 2.0 * x[1] - 1.0).abs() < 1e-12);
        assert!((2.0 * x[0] + 3.0 * x[1] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn qr_reconstructs_and_is_orthogonal() {
        let a = [2.0, -1.0, 0.5, 3.0, 1.0, 1.0];
        let (q, r) = householder_qr(&a, 3, 2);
        for i in 0..3 {
            for j in 0..2 {
                let v: f64 = (0..3).map(|k| q[i * 3 + k] * r[k * 2 + j]).sum();
                assert!((v - a[i * 2 + j]).abs() < 1e-14);
            }
            for j in 0..3 {
                let v: f64 = (0..3).map(|k| q[i * 3 + k] * q[j * 3 + k]).sum();
                assert!((v - if i == j { 1.0 } else { 0.0 }).abs() < 1e-14);
            }
        }
        assert!(r[2 * 2].abs() < 1e-14 && r[2 * 2 + 1].abs() < 1e-14 && r[2].abs() < 1e-14);
    }

    #[test]
    fn lu_solve_needs_pivoting() {
        let a = [0.0, 1.0, 1.0, 0.0];
        let x = lu_solve(&a, 2, &[2.0, 3.0], 1e-14).unwrap();
        assert_eq!(x, vec![3.0, 2.0]);
        assert!(lu_solve(&[1.0, 1.0, 1.0, 1.0], 2, &[1.0, 1.0], 1e-12).is_none());
    }
}
