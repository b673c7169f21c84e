//! Symmetric eigensolver via cyclic Jacobi rotations.
//!
//! Adequate for the matrix sizes this project sees (similarity graphs over at
//! most a few dozen prompts); converges quadratically once off-diagonal mass
//! is small.

use crate::error::{Error, Result};
use crate::numerics::Matrix;

const MAX_SWEEPS: usize = 100;

/// Eigendecomposition of a symmetric matrix.
///
/// Returns the `k` smallest eigenvalues in ascending order and the matching
/// eigenvectors as the columns of an `n x k` matrix. The input must be square
/// and symmetric within `1e-10`.
pub fn sym_eigen(a: &Matrix, k: usize) -> Result<(Vec<f64>, Matrix)> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::invalid(format!(
            "sym_eigen needs a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    if n == 0 || k == 0 || k > n {
        return Err(Error::invalid(format!("sym_eigen: invalid k={k} for n={n}")));
    }
    let mut max_asym = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            max_asym = max_asym.max((a.get(i, j) - a.get(j, i)).abs());
        }
    }
    if max_asym > 1e-10 {
        return Err(Error::invalid(format!(
            "sym_eigen: matrix asymmetric by {max_asym:.3e}"
        )));
    }

    // Work on the symmetrized copy so sub-tolerance asymmetry cannot drift.
    let mut w = Matrix::from_fn(n, n, |i, j| 0.5 * (a.get(i, j) + a.get(j, i)));
    let mut v = Matrix::identity(n);
    let scale = w.frobenius_norm().max(1e-300);

    for _ in 0..MAX_SWEEPS {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += w.get(i, j) * w.get(i, j);
            }
        }
        if (2.0 * off).sqrt() <= 1e-14 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = w.get(p, q);
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let app = w.get(p, p);
                let aqq = w.get(q, q);
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                for i in 0..n {
                    let wip = w.get(i, p);
                    let wiq = w.get(i, q);
                    w.set(i, p, c * wip - s * wiq);
                    w.set(i, q, s * wip + c * wiq);
                }
                for i in 0..n {
                    let wpi = w.get(p, i);
                    let wqi = w.get(q, i);
                    w.set(p, i, c * wpi - s * wqi);
                    w.set(q, i, s * wpi + c * wqi);
                }
                for i in 0..n {
                    let vip = v.get(i, p);
                    let viq = v.get(i, q);
                    v.set(i, p, c * vip - s * viq);
                    v.set(i, q, s * vip + c * viq);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| w.get(i, i).partial_cmp(&w.get(j, j)).unwrap().then(i.cmp(&j)));

    let values: Vec<f64> = order.iter().take(k).map(|&i| w.get(i, i)).collect();
    let vectors = Matrix::from_fn(n, k, |i, j| v.get(i, order[j]));
    Ok((values, vectors))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::SeededRng;

    #[test]
    fn identity_has_unit_eigenvalues() {
        let (vals, _) = sym_eigen(&Matrix::identity(3), 3).unwrap();
        for v in vals {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn diagonal_matrix_is_already_solved() {
        let a = Matrix::from_fn(3, 3, |i, j| if i == j { (i + 1) as f64 } else { 0.0 });
        let (vals, vecs) = sym_eigen(&a, 3).unwrap();
        assert!((vals[0] - 1.0).abs() < 1e-12);
        assert!((vals[1] - 2.0).abs() < 1e-12);
        assert!((vals[2] - 3.0).abs() < 1e-12);
        // Axis-aligned eigenvectors, up to sign.
        for j in 0..3 {
            for i in 0..3 {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((vecs.get(i, j).abs() - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn random_symmetric_residual_and_orthonormality() {
        // Oracle: the eigen equation itself. ||A v - lambda v|| per column.
        let mut rng = SeededRng::new(11);
        let mut a = Matrix::zeros(6, 6);
        for i in 0..6 {
            for j in i..6 {
                let x = rng.uniform(-1.0, 1.0);
                a.set(i, j, x);
                a.set(j, i, x);
            }
        }
        let (vals, vecs) = sym_eigen(&a, 6).unwrap();
        for j in 0..6 {
            let mut residual = 0.0_f64;
            for i in 0..6 {
                let mut av = 0.0;
                for p in 0..6 {
                    av += a.get(i, p) * vecs.get(p, j);
                }
                residual += (av - vals[j] * vecs.get(i, j)).powi(2);
            }
            assert!(residual.sqrt() < 1e-8, "residual {}", residual.sqrt());
        }
        let vtv = vecs.matmul_tn(&vecs);
        assert!(vtv.max_abs_diff(&Matrix::identity(6)) < 1e-8);
        // Ascending order.
        for j in 1..6 {
            assert!(vals[j] >= vals[j - 1]);
        }
    }

    #[test]
    fn rejects_nonsquare_and_asymmetric() {
        assert!(sym_eigen(&Matrix::zeros(2, 3), 2).is_err());
        let mut a = Matrix::zeros(2, 2);
        a.set(0, 1, 1.0);
        a.set(1, 0, 0.5);
        assert!(sym_eigen(&a, 2).is_err());
    }
}
