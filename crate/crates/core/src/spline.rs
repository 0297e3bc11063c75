//! Equidistant-knot B-spline bases and difference penalty matrices.
//!
//! Knots sit at k/K for k = -p+1, ..., K+p, so the basis has dimension K + p
//! and exactly K - 1 knots fall strictly inside (0, 1). Degree-0 intervals are
//! left-open, (κ_{k-1}, κ_k]; the point x = 0 is assigned to the first
//! interval so the basis stays a partition of unity on all of [0, 1].

use crate::error::{Result, SqriError};
use ndarray::{Array1, Array2};

/// Basis evaluations, one entry per B-spline of the grid's degree.
pub type BasisVector = Array1<f64>;

/// Equidistant knot layout for a B-spline basis on [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct KnotGrid {
    degree: usize,
    segments: usize,
    knots: Vec<f64>,
}

impl KnotGrid {
    /// Spline degree p.
    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Number of subintervals K of [0, 1] (K - 1 interior knots).
    pub fn segments(&self) -> usize {
        self.segments
    }

    /// Knot positions k/K for k = -p+1, ..., K+p.
    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Basis dimension K + p.
    pub fn dim(&self) -> usize {
        self.segments + self.degree
    }

    fn knot(&self, k: i64) -> f64 {
        k as f64 / self.segments as f64
    }
}

/// Build the knot grid for `segments` subintervals and degree `degree`.
pub fn make_knots(segments: usize, degree: usize) -> Result<KnotGrid> {
    if segments < 2 {
        return Err(SqriError::InvalidInput(format!(
            "need at least 2 knot segments, got {segments}"
        )));
    }
    let p = degree as i64;
    let k_n = segments as i64;
    let knots = (-p + 1..=k_n + p)
        .map(|k| k as f64 / segments as f64)
        .collect();
    Ok(KnotGrid {
        degree,
        segments,
        knots,
    })
}

/// Evaluate all basis functions of the grid's degree at `x` in [0, 1].
pub fn eval_basis(x: f64, grid: &KnotGrid) -> Result<BasisVector> {
    if !(0.0..=1.0).contains(&x) || !x.is_finite() {
        return Err(SqriError::InvalidInput(format!(
            "basis argument {x} outside [0, 1]"
        )));
    }
    let p = grid.degree as i64;
    let k_n = grid.segments as i64;
    // level 0 spans k = -p+1 ..= K+p; each recursion level drops one entry
    let len0 = (k_n + 2 * p) as usize;
    let mut values = vec![0.0f64; len0];
    for (offset, v) in values.iter_mut().enumerate() {
        let k = offset as i64 - p + 1;
        let lo = grid.knot(k - 1);
        let hi = grid.knot(k);
        // x = 0 belongs to the first interval of [0, 1], i.e. k = 1 alone
        let hit = if x == 0.0 {
            lo == 0.0
        } else {
            lo < x && x <= hi
        };
        if hit {
            *v = 1.0;
        }
    }
    for s in 1..=p {
        let len = (k_n + 2 * p - s) as usize;
        for offset in 0..len {
            let k = offset as i64 - p + 1;
            let left = (x - grid.knot(k - 1)) / (grid.knot(k + s - 1) - grid.knot(k - 1));
            let right = (grid.knot(k + s) - x) / (grid.knot(k + s) - grid.knot(k));
            values[offset] = left * values[offset] + right * values[offset + 1];
        }
        values.truncate(len);
    }
    values.truncate(grid.dim());
    Ok(Array1::from(values))
}

/// m-th order difference matrix of shape (dim - m) x dim with entries
/// (-1)^{j-i} C(m, j-i) on the band 0 <= j - i <= m.
pub fn difference_matrix(order: usize, dim: usize) -> Result<Array2<f64>> {
    if order == 0 || order >= dim {
        return Err(SqriError::InvalidInput(format!(
            "difference order {order} must satisfy 0 < order < dim ({dim})"
        )));
    }
    let mut d = Array2::<f64>::zeros((dim - order, dim));
    for i in 0..dim - order {
        for offset in 0..=order {
            let sign = if offset % 2 == 0 { 1.0 } else { -1.0 };
            d[[i, i + offset]] = sign * binomial(order, offset);
        }
    }
    Ok(d)
}

fn binomial(n: usize, k: usize) -> f64 {
    let mut acc = 1.0f64;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc.round()
}

/// Concatenate per-covariate basis vectors, (Bᵀ(x₁), Bᵀ(x₂))ᵀ.
pub fn augment_bivariate(b1: &BasisVector, b2: &BasisVector) -> Result<BasisVector> {
    if b1.len() != b2.len() {
        return Err(SqriError::InvalidInput(format!(
            "mismatched basis dimensions {} and {}",
            b1.len(),
            b2.len()
        )));
    }
    let mut out = Array1::<f64>::zeros(2 * b1.len());
    out.slice_mut(ndarray::s![..b1.len()]).assign(b1);
    out.slice_mut(ndarray::s![b1.len()..]).assign(b2);
    Ok(out)
}

/// Basis row for a d_x-dimensional covariate: the univariate basis for one
/// covariate, the augmented basis for two.
pub fn basis_row(grid: &KnotGrid, x: &[f64]) -> Result<BasisVector> {
    match x.len() {
        1 => eval_basis(x[0], grid),
        2 => {
            let b1 = eval_basis(x[0], grid)?;
            let b2 = eval_basis(x[1], grid)?;
            augment_bivariate(&b1, &b2)
        }
        d => Err(SqriError::InvalidInput(format!(
            "unsupported covariate dimension {d}"
        ))),
    }
}

/// Block-diagonal difference penalty: one D_m block per covariate.
pub fn block_penalty(grid: &KnotGrid, order: usize, d_x: usize) -> Result<Array2<f64>> {
    let d = difference_matrix(order, grid.dim())?;
    if d_x == 1 {
        return Ok(d);
    }
    let (r, c) = (d.nrows(), d.ncols());
    let mut out = Array2::<f64>::zeros((d_x * r, d_x * c));
    for block in 0..d_x {
        for i in 0..r {
            for j in 0..c {
                out[[block * r + i, block * c + j]] = d[[i, j]];
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn knot_layout_for_cubic_grid() {
        let grid = make_knots(5, 3).unwrap();
        assert_eq!(grid.dim(), 8);
        assert_eq!(grid.knots().len(), 11);
        assert_abs_diff_eq!(grid.knots()[0], -0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(grid.knots()[10], 1.6, epsilon = 1e-15);
        let interior = grid.knots().iter().filter(|&&k| k > 0.0 && k < 1.0).count();
        assert_eq!(interior, 4);
    }

    #[test]
    fn degenerate_grid_rejected() {
        assert!(make_knots(1, 3).is_err());
        assert!(make_knots(0, 0).is_err());
    }

    #[test]
    fn piecewise_constant_basis() {
        let grid = make_knots(2, 0).unwrap();
        assert_eq!(grid.dim(), 2);
        let interior = grid.knots().iter().filter(|&&k| k > 0.0 && k < 1.0).count();
        assert_eq!(interior, 1);
        let b = eval_basis(0.3, &grid).unwrap();
        assert_eq!(b.to_vec(), vec![1.0, 0.0]);
    }

    #[test]
    fn partition_of_unity_and_nonnegativity() {
        for (segments, degree) in [(5usize, 3usize), (2, 0), (4, 1), (8, 2), (3, 4)] {
            let grid = make_knots(segments, degree).unwrap();
            for i in 0..=50 {
                let x = i as f64 / 50.0;
                let b = eval_basis(x, &grid).unwrap();
                assert!(b.iter().all(|&v| v >= 0.0), "negative entry at x={x}");
                assert_abs_diff_eq!(b.sum(), 1.0, epsilon = 1e-12);
                let nonzero = b.iter().filter(|&&v| v.abs() > 0.0).count();
                assert!(nonzero <= degree + 1);
            }
        }
    }

    #[test]
    fn linear_basis_hits_one_at_interior_knot() {
        let grid = make_knots(5, 1).unwrap();
        let b = eval_basis(0.2, &grid).unwrap();
        // index of k = 1 in the k = 0..=5 layout
        assert_abs_diff_eq!(b[1], 1.0, epsilon = 1e-15);
        for (idx, &v) in b.iter().enumerate() {
            if idx != 1 {
                assert_abs_diff_eq!(v, 0.0, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn rejects_out_of_range_argument() {
        let grid = make_knots(5, 3).unwrap();
        assert!(eval_basis(-0.01, &grid).is_err());
        assert!(eval_basis(1.01, &grid).is_err());
        assert!(eval_basis(f64::NAN, &grid).is_err());
    }

    #[test]
    fn local_support() {
        let grid = make_knots(5, 3).unwrap();
        let p = grid.degree() as i64;
        for i in 1..=40 {
            let x = i as f64 / 40.0;
            let b = eval_basis(x, &grid).unwrap();
            for (offset, &v) in b.iter().enumerate() {
                let k = offset as i64 - p + 1;
                let lo = k as f64 - 1.0;
                let hi = (k + p) as f64;
                let inside = lo / 5.0 < x && x <= hi / 5.0;
                if !inside {
                    assert_eq!(v, 0.0, "support violated at x={x}, k={k}");
                }
            }
        }
    }

    #[test]
    fn recursion_matches_direct_recursive_definition() {
        // independent oracle: literal Cox-de Boor recursion as a recursive fn
        fn direct(k: i64, s: i64, x: f64, k_n: i64) -> f64 {
            let knot = |k: i64| k as f64 / k_n as f64;
            if s == 0 {
                let lo = knot(k - 1);
                let hi = knot(k);
                let hit = if x == 0.0 {
                    lo == 0.0
                } else {
                    lo < x && x <= hi
                };
                if hit {
                    1.0
                } else {
                    0.0
                }
            } else {
                (x - knot(k - 1)) / (knot(k + s - 1) - knot(k - 1)) * direct(k, s - 1, x, k_n)
                    + (knot(k + s) - x) / (knot(k + s) - knot(k)) * direct(k + 1, s - 1, x, k_n)
            }
        }
        for (segments, degree) in [(5usize, 3usize), (4, 2), (6, 1)] {
            let grid = make_knots(segments, degree).unwrap();
            for i in 0..=30 {
                let x = i as f64 / 30.0;
                let b = eval_basis(x, &grid).unwrap();
                for (offset, &v) in b.iter().enumerate() {
                    let k = offset as i64 - degree as i64 + 1;
                    let want = direct(k, degree as i64, x, segments as i64);
                    assert_abs_diff_eq!(v, want, epsilon = 1e-14);
                }
            }
        }
    }

    #[test]
    fn second_difference_rows() {
        let d = difference_matrix(2, 5).unwrap();
        assert_eq!(d.shape(), &[3, 5]);
        assert_eq!(d.row(0).to_vec(), vec![1.0, -2.0, 1.0, 0.0, 0.0]);
        assert_eq!(d.row(1).to_vec(), vec![0.0, 1.0, -2.0, 1.0, 0.0]);
        assert_eq!(d.row(2).to_vec(), vec![0.0, 0.0, 1.0, -2.0, 1.0]);
    }

    #[test]
    fn first_difference_rows() {
        let d = difference_matrix(1, 3).unwrap();
        assert_eq!(d.row(0).to_vec(), vec![1.0, -1.0, 0.0]);
        assert_eq!(d.row(1).to_vec(), vec![0.0, 1.0, -1.0]);
    }

    #[test]
    fn difference_rejects_large_order() {
        assert!(difference_matrix(5, 5).is_err());
        assert!(difference_matrix(0, 5).is_err());
    }

    #[test]
    fn constant_vector_annihilated() {
        let d = difference_matrix(2, 8).unwrap();
        let c = Array1::from_elem(8, 3.7);
        let out = d.dot(&c);
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn polynomials_below_order_annihilated_exactly() {
        // integer-valued polynomial samples keep the arithmetic exact
        for m in 1..=3usize {
            let dim = 9;
            let d = difference_matrix(m, dim).unwrap();
            for coeffs in [[3i64, 0, 0], [1, -2, 0], [5, 4, -3]] {
                let c: Array1<f64> = (0..dim as i64)
                    .map(|k| {
                        let mut acc = 0i64;
                        for (pow, &a) in coeffs.iter().enumerate().take(m) {
                            acc += a * k.pow(pow as u32);
                        }
                        acc as f64
                    })
                    .collect();
                let out = d.dot(&c);
                assert!(
                    out.iter().all(|&v| v == 0.0),
                    "D_{m} failed to annihilate degree<{m} polynomial"
                );
            }
        }
    }

    #[test]
    fn augmentation_concatenates() {
        let grid = make_knots(5, 3).unwrap();
        let b1 = eval_basis(0.3, &grid).unwrap();
        let b2 = eval_basis(0.7, &grid).unwrap();
        let aug = augment_bivariate(&b1, &b2).unwrap();
        assert_eq!(aug.len(), 16);
        for i in 0..8 {
            assert_eq!(aug[i], b1[i]);
            assert_eq!(aug[8 + i], b2[i]);
        }
        assert_abs_diff_eq!(aug.sum(), 2.0, epsilon = 1e-12);

        let zero = Array1::<f64>::zeros(8);
        let with_zero = augment_bivariate(&b1, &zero).unwrap();
        assert!(with_zero.iter().skip(8).all(|&v| v == 0.0));

        let short = Array1::<f64>::zeros(7);
        assert!(augment_bivariate(&b1, &short).is_err());
    }
}
