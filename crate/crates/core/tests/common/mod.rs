//! Shared test oracles, independent of the library's solver paths.

use ndarray::{Array1, Array2};

/// Exact quantile-regression LP oracle by primal simplex with Bland's rule.
///
/// Solves min Σ_i ρ_τ(y_i - z_iᵀ c) over coefficient vectors c for an
/// arbitrary design matrix. Returns (optimal objective, coefficients).
pub fn lp_quantile_oracle(design: &Array2<f64>, y: &[f64], tau: f64) -> (f64, Vec<f64>) {
    let n = design.nrows();
    let d = design.ncols();
    assert_eq!(n, y.len());
    // variables: beta+ (d), beta- (d), u+ (n), u- (n)
    let nv = 2 * d + 2 * n;
    let mut tableau = vec![vec![0.0f64; nv + 1]; n];
    let mut cost = vec![0.0f64; nv];
    for j in 0..n {
        cost[2 * d + j] = tau;
        cost[2 * d + n + j] = 1.0 - tau;
    }
    let mut basis = vec![0usize; n];
    for i in 0..n {
        let flip = if y[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..d {
            tableau[i][j] = flip * design[[i, j]];
            tableau[i][d + j] = -flip * design[[i, j]];
        }
        tableau[i][2 * d + i] = flip;
        tableau[i][2 * d + n + i] = -flip;
        tableau[i][nv] = flip * y[i];
        basis[i] = if y[i] < 0.0 { 2 * d + n + i } else { 2 * d + i };
    }

    for _pivots in 0..200_000 {
        // reduced costs for the current basis
        let mut entering = None;
        for j in 0..nv {
            let mut red = cost[j];
            for i in 0..n {
                red -= cost[basis[i]] * tableau[i][j];
            }
            if red < -1e-9 {
                entering = Some(j);
                break; // Bland: smallest index
            }
        }
        let Some(e) = entering else { break };
        // ratio test, ties to the smallest basis index
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..n {
            if tableau[i][e] > 1e-9 {
                let ratio = tableau[i][nv] / tableau[i][e];
                match leave {
                    None => leave = Some((i, ratio)),
                    Some((li, lr)) => {
                        if ratio < lr - 1e-12
                            || ((ratio - lr).abs() <= 1e-12 && basis[i] < basis[li])
                        {
                            leave = Some((i, ratio));
                        }
                    }
                }
            }
        }
        let (li, _) = leave.expect("bounded objective");
        // pivot
        let pivot = tableau[li][e];
        for v in tableau[li].iter_mut() {
            *v /= pivot;
        }
        for i in 0..n {
            if i != li {
                let f = tableau[i][e];
                if f != 0.0 {
                    for j in 0..=nv {
                        let upd = tableau[li][j] * f;
                        tableau[i][j] -= upd;
                    }
                }
            }
        }
        basis[li] = e;
    }

    let mut objective = 0.0;
    let mut solution = vec![0.0f64; nv];
    for i in 0..n {
        objective += cost[basis[i]] * tableau[i][nv];
        solution[basis[i]] = tableau[i][nv];
    }
    let coef = (0..d).map(|j| solution[j] - solution[d + j]).collect();
    (objective, coef)
}

#[allow(dead_code)]
pub fn respondent_design_for(
    data: &sqri_core::Dataset,
    config: &sqri_core::FitConfig,
) -> (Array2<f64>, Array1<f64>) {
    let design = config.design(data.d_x()).unwrap();
    sqri_core::quantile::respondent_design(data, &design).unwrap()
}
