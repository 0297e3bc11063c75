//! Small dense linear algebra on `ndarray` types.
//!
//! Every system solved in this crate is at most a few dozen rows (spline
//! coefficient blocks, moment covariances), so plain Cholesky, partially
//! pivoted LU and cyclic Jacobi eigendecomposition are used directly.

use crate::error::{Result, SqriError};
use ndarray::{Array1, Array2};

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
/// Returns `None` when a pivot is not strictly positive.
pub fn cholesky(a: &Array2<f64>) -> Option<Array2<f64>> {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols());
    let mut l = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return None;
                }
                l[[i, i]] = s.sqrt();
            } else {
                l[[i, j]] = s / l[[j, j]];
            }
        }
    }
    Some(l)
}

/// Solve L Lᵀ x = b given the Cholesky factor L.
pub fn cholesky_solve(l: &Array2<f64>, b: &Array1<f64>) -> Array1<f64> {
    let n = l.nrows();
    let mut y = b.clone();
    for i in 0..n {
        for k in 0..i {
            let v = y[k];
            y[i] -= l[[i, k]] * v;
        }
        y[i] /= l[[i, i]];
    }
    for i in (0..n).rev() {
        for k in (i + 1)..n {
            let v = y[k];
            y[i] -= l[[k, i]] * v;
        }
        y[i] /= l[[i, i]];
    }
    y
}

/// Solve a symmetric positive definite system, returning `None` on failure.
pub fn solve_spd(a: &Array2<f64>, b: &Array1<f64>) -> Option<Array1<f64>> {
    cholesky(a).map(|l| cholesky_solve(&l, b))
}

/// Solve a general square system by LU with partial pivoting.
pub fn solve_lu(a: &Array2<f64>, b: &Array1<f64>) -> Option<Array1<f64>> {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols());
    debug_assert_eq!(n, b.len());
    let mut lu = a.clone();
    let mut x = b.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    for col in 0..n {
        let mut pivot = col;
        let mut best = lu[[col, col]].abs();
        for row in (col + 1)..n {
            let v = lu[[row, col]].abs();
            if v > best {
                best = v;
                pivot = row;
            }
        }
        if !(best > 1e-300) || !best.is_finite() {
            return None;
        }
        if pivot != col {
            perm.swap(pivot, col);
            for j in 0..n {
                let tmp = lu[[col, j]];
                lu[[col, j]] = lu[[pivot, j]];
                lu[[pivot, j]] = tmp;
            }
            x.swap(pivot, col);
        }
        for row in (col + 1)..n {
            let f = lu[[row, col]] / lu[[col, col]];
            lu[[row, col]] = f;
            for j in (col + 1)..n {
                let v = lu[[col, j]];
                lu[[row, j]] -= f * v;
            }
            let v = x[col];
            x[row] -= f * v;
        }
    }
    for i in (0..n).rev() {
        for j in (i + 1)..n {
            let v = x[j];
            x[i] -= lu[[i, j]] * v;
        }
        x[i] /= lu[[i, i]];
    }
    Some(x)
}

/// Eigendecomposition of a symmetric matrix by the cyclic Jacobi method.
/// Returns (eigenvalues, eigenvectors-as-columns); eigenvalues unsorted.
pub fn sym_eigen(a: &Array2<f64>) -> (Array1<f64>, Array2<f64>) {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols());
    let mut m = a.clone();
    // symmetrize so tiny asymmetries from accumulation cannot bias rotations
    for i in 0..n {
        for j in (i + 1)..n {
            let s = 0.5 * (m[[i, j]] + m[[j, i]]);
            m[[i, j]] = s;
            m[[j, i]] = s;
        }
    }
    let mut q = Array2::<f64>::eye(n);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += m[[i, j]] * m[[i, j]];
            }
        }
        if off.sqrt() <= 1e-14 * (1.0 + m.diag().iter().map(|d| d.abs()).sum::<f64>()) {
            break;
        }
        for p in 0..n {
            for r in (p + 1)..n {
                let apq = m[[p, r]];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = m[[p, p]];
                let aqq = m[[r, r]];
                let theta = 0.5 * (aqq - app) / apq;
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[[k, p]];
                    let mkq = m[[k, r]];
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, r]] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[[p, k]];
                    let mqk = m[[r, k]];
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[r, k]] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let qkp = q[[k, p]];
                    let qkq = q[[k, r]];
                    q[[k, p]] = c * qkp - s * qkq;
                    q[[k, r]] = s * qkp + c * qkq;
                }
            }
        }
    }
    (m.diag().to_owned(), q)
}

/// Inverse of a symmetric matrix with eigenvalues floored at
/// `floor_rel * trace / n` before inversion.
pub fn inverse_spd_floored(a: &Array2<f64>, floor_rel: f64) -> Result<Array2<f64>> {
    let n = a.nrows();
    if a.iter().any(|v| !v.is_finite()) {
        return Err(SqriError::WeightMatrixDegenerate(
            "non-finite entries".into(),
        ));
    }
    let trace: f64 = a.diag().sum();
    if !(trace > 0.0) {
        return Err(SqriError::WeightMatrixDegenerate(format!(
            "non-positive trace {trace}"
        )));
    }
    let floor = floor_rel * trace / n as f64;
    let (vals, vecs) = sym_eigen(a);
    let mut inv = Array2::<f64>::zeros((n, n));
    for k in 0..n {
        let lam = vals[k].max(floor);
        let w = 1.0 / lam;
        for i in 0..n {
            for j in 0..n {
                inv[[i, j]] += w * vecs[[i, k]] * vecs[[j, k]];
            }
        }
    }
    Ok(inv)
}

/// tr(A⁻¹ M) for symmetric positive definite A.
pub fn trace_solve(a: &Array2<f64>, m: &Array2<f64>) -> Option<f64> {
    let l = cholesky(a)?;
    let n = a.nrows();
    let mut tr = 0.0;
    for j in 0..n {
        let col = m.column(j).to_owned();
        let x = cholesky_solve(&l, &col);
        tr += x[j];
    }
    Some(tr)
}

/// Largest |A - Aᵀ| entry, used in symmetry assertions.
pub fn asymmetry(a: &Array2<f64>) -> f64 {
    let n = a.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((a[[i, j]] - a[[j, i]]).abs());
        }
    }
    worst
}
