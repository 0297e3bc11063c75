//! Penalized B-spline quantile regression on respondents.
//!
//! The estimated coefficient vector minimizes
//!   Σ_i δ_i ρ_τ(y_i - Bᵀ(x_i) b) + (λ/2) bᵀ D_mᵀ D_m b.
//! The check loss is smoothed inside a band of half-width ε (quadratic there,
//! exact outside) and the smoothed objective is driven down by
//! majorize-minimize steps that reduce to iteratively reweighted least
//! squares; each step solves a ridge-stabilized normal equation. The
//! smoothing parameter is selected on a grid by GACV.

use crate::dataset::Dataset;
use crate::error::{Result, SqriError};
use crate::linalg;
use crate::spline::{self, KnotGrid};
use crate::stats;
use ndarray::{Array1, Array2};

const RIDGE_REL: f64 = 1e-10;
const EPS_FLOOR: f64 = 1e-10;

/// Solve a normal-equation system, falling back to a trace-scaled ridge when
/// the plain factorization fails. The augmented bivariate basis is exactly
/// rank-deficient (each block sums to one), so an absolute ridge would
/// vanish against accumulation error; predictions are unaffected because the
/// deficient direction is annihilated by every basis row.
fn solve_normal_equations(a: &mut ndarray::Array2<f64>, rhs: &Array1<f64>) -> Option<Array1<f64>> {
    if let Some(x) = linalg::solve_spd(a, rhs) {
        return Some(x);
    }
    let ridge = RIDGE_REL * (1.0 + a.diag().sum() / a.nrows() as f64);
    for k in 0..a.nrows() {
        a[[k, k]] += ridge;
    }
    linalg::solve_spd(a, rhs)
}

/// The check function ρ_τ(u) = u(τ - 1{u<0}).
pub fn check_loss(u: f64, tau: f64) -> Result<f64> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(SqriError::InvalidInput(format!(
            "tau must lie in (0,1), got {tau}"
        )));
    }
    Ok(rho(u, tau))
}

#[inline]
fn rho(u: f64, tau: f64) -> f64 {
    u * (tau - if u < 0.0 { 1.0 } else { 0.0 })
}

/// Smoothed check loss: quadratic on [-eps, eps], ρ_τ outside.
#[inline]
fn rho_smoothed(u: f64, tau: f64, eps: f64) -> f64 {
    if u.abs() > eps {
        rho(u, tau)
    } else {
        u * u / (4.0 * eps) + (tau - 0.5) * u + 0.25 * eps
    }
}

/// Basis layout shared by the J fits of one imputation run.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineDesign {
    grid: KnotGrid,
    d_x: usize,
    penalty_order: usize,
}

impl SplineDesign {
    pub fn new(grid: KnotGrid, d_x: usize, penalty_order: usize) -> Result<Self> {
        if penalty_order >= grid.degree() {
            return Err(SqriError::InvalidInput(format!(
                "penalty order {} must be below the spline degree {}",
                penalty_order,
                grid.degree()
            )));
        }
        if d_x == 0 || d_x > 2 {
            return Err(SqriError::InvalidInput(format!(
                "unsupported covariate dimension {d_x}"
            )));
        }
        Ok(SplineDesign {
            grid,
            d_x,
            penalty_order,
        })
    }

    pub fn grid(&self) -> &KnotGrid {
        &self.grid
    }

    pub fn d_x(&self) -> usize {
        self.d_x
    }

    pub fn penalty_order(&self) -> usize {
        self.penalty_order
    }

    /// Total coefficient dimension: (K+p) per covariate block.
    pub fn dim(&self) -> usize {
        self.d_x * self.grid.dim()
    }

    pub fn basis_row(&self, x: &[f64]) -> Result<Array1<f64>> {
        if x.len() != self.d_x {
            return Err(SqriError::InvalidInput(format!(
                "covariate row has {} entries, design expects {}",
                x.len(),
                self.d_x
            )));
        }
        spline::basis_row(&self.grid, x)
    }

    /// Block-diagonal difference matrix D (one block per covariate).
    pub fn difference(&self) -> Result<Array2<f64>> {
        spline::block_penalty(&self.grid, self.penalty_order, self.d_x)
    }
}

/// Fitting configuration for the penalized quantile regression.
#[derive(Debug, Clone)]
pub struct FitConfig {
    /// B-spline degree p.
    pub degree: usize,
    /// Difference penalty order m (must satisfy m < p).
    pub penalty_order: usize,
    /// Number of knot segments K (K - 1 interior knots).
    pub knots: usize,
    /// Candidate smoothing parameters; `None` selects the built-in grid.
    pub lambda_grid: Option<Vec<f64>>,
    /// Skip GACV and use this smoothing parameter directly.
    pub fixed_lambda: Option<f64>,
    /// Check-loss smoothing half-width as a multiple of the respondent IQR.
    pub smoothing_epsilon: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            degree: 3,
            penalty_order: 2,
            knots: 5,
            lambda_grid: None,
            fixed_lambda: None,
            smoothing_epsilon: 1e-4,
            max_iterations: 300,
            tolerance: 1e-8,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.penalty_order == 0 || self.penalty_order >= self.degree {
            return Err(SqriError::InvalidInput(format!(
                "penalty order {} must satisfy 0 < m < p = {}",
                self.penalty_order, self.degree
            )));
        }
        if self.knots < 2 {
            return Err(SqriError::InvalidInput(
                "need at least 2 knot segments".into(),
            ));
        }
        if !(self.smoothing_epsilon > 0.0) {
            return Err(SqriError::InvalidInput(
                "smoothing epsilon must be positive".into(),
            ));
        }
        if !(self.tolerance > 0.0) {
            return Err(SqriError::InvalidInput("tolerance must be positive".into()));
        }
        if let Some(l) = self.fixed_lambda {
            if !(l >= 0.0) || !l.is_finite() {
                return Err(SqriError::InvalidInput(format!(
                    "fixed lambda {l} must be a finite non-negative number"
                )));
            }
        }
        Ok(())
    }

    pub fn design(&self, d_x: usize) -> Result<SplineDesign> {
        let grid = spline::make_knots(self.knots, self.degree)?;
        SplineDesign::new(grid, d_x, self.penalty_order)
    }
}

/// Default λ grid: {0} plus 14 log-spaced values on [1e-4, 1e3], scaled by
/// the respondent count.
pub fn default_lambda_grid(n_obs: usize) -> Vec<f64> {
    let mut grid = vec![0.0];
    let lo = -4.0f64;
    let hi = 3.0f64;
    for i in 0..14 {
        let e = lo + (hi - lo) * i as f64 / 13.0;
        grid.push(10f64.powf(e) * n_obs as f64);
    }
    grid
}

/// A fitted penalized quantile regression.
#[derive(Debug, Clone)]
pub struct QuantileFit {
    pub tau: f64,
    pub coefficients: Array1<f64>,
    pub lambda: f64,
    /// Final penalized check-loss value (exact loss, not the smoothed one).
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub design: SplineDesign,
    /// Smoothed penalized objective after each IRLS update.
    pub smoothed_objectives: Vec<f64>,
}

impl QuantileFit {
    /// Predicted conditional quantile Bᵀ(x) b̂ at a covariate row.
    pub fn predict_row(&self, x: &[f64]) -> Result<f64> {
        let b = self.design.basis_row(x)?;
        Ok(b.dot(&self.coefficients))
    }
}

/// Predicted conditional quantile at a univariate covariate value.
pub fn predict_quantile(fit: &QuantileFit, x: f64) -> Result<f64> {
    fit.predict_row(&[x])
}

/// Basis rows and responses of the respondents, in index order.
pub fn respondent_design(
    data: &Dataset,
    design: &SplineDesign,
) -> Result<(Array2<f64>, Array1<f64>)> {
    let idx = data.respondent_indices();
    let mut bmat = Array2::<f64>::zeros((idx.len(), design.dim()));
    let mut y = Array1::<f64>::zeros(idx.len());
    for (row, &i) in idx.iter().enumerate() {
        let b = design.basis_row(&data.x_row(i))?;
        bmat.row_mut(row).assign(&b);
        y[row] = data.y(i);
    }
    Ok((bmat, y))
}

/// Fit the penalized quantile regression on the respondents of `data`.
pub fn fit_quantile(
    data: &Dataset,
    tau: f64,
    lambda: f64,
    config: &FitConfig,
) -> Result<QuantileFit> {
    config.validate()?;
    let design = config.design(data.d_x())?;
    let (bmat, y) = respondent_design(data, &design)?;
    fit_with_design(&bmat, &y, &design, tau, lambda, config)
}

/// Fit against a precomputed respondent design matrix.
pub fn fit_with_design(
    bmat: &Array2<f64>,
    y: &Array1<f64>,
    design: &SplineDesign,
    tau: f64,
    lambda: f64,
    config: &FitConfig,
) -> Result<QuantileFit> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(SqriError::InvalidInput(format!(
            "tau must lie in (0,1), got {tau}"
        )));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(SqriError::InvalidInput(format!(
            "lambda {lambda} must be a finite non-negative number"
        )));
    }
    let n_obs = bmat.nrows();
    let dim = design.dim();
    if n_obs < 2 * dim {
        return Err(SqriError::InsufficientRespondents {
            needed: 2 * dim,
            found: n_obs,
        });
    }

    let dmat = design.difference()?;
    let penalty = dmat.t().dot(&dmat);
    let eps = (config.smoothing_epsilon * stats::iqr(y.as_slice().unwrap())).max(EPS_FLOOR);

    // basis rows carry at most degree+1 nonzeros per covariate block
    let nz_rows: Vec<Vec<(usize, f64)>> = (0..n_obs)
        .map(|i| {
            bmat.row(i)
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(k, &v)| (k, v))
                .collect()
        })
        .collect();
    let ys = y.as_slice().unwrap();

    let smoothed_objective = |coef: &Array1<f64>| -> f64 {
        let c = coef.as_slice().unwrap();
        let mut loss = 0.0;
        for (nz, &yi) in nz_rows.iter().zip(ys) {
            let fitted: f64 = nz.iter().map(|&(k, v)| v * c[k]).sum();
            loss += rho_smoothed(yi - fitted, tau, eps);
        }
        let dc = dmat.dot(coef);
        loss + 0.5 * lambda * dc.dot(&dc)
    };

    // linear majorizer term (tau - 1/2) sum_i B(x_i), fixed across iterations
    let rhs_base: Vec<f64> = {
        let s = bmat.sum_axis(ndarray::Axis(0));
        s.iter().map(|v| v * (tau - 0.5)).collect()
    };
    let penalty_flat: Vec<f64> = penalty.iter().map(|v| v * lambda).collect();

    // initial coefficients from a penalized least-squares fit
    let mut a = bmat.t().dot(bmat) + &(penalty.clone() * lambda);
    let rhs0 = bmat.t().dot(y);
    let mut coef = solve_normal_equations(&mut a, &rhs0).ok_or(SqriError::DegenerateDesign)?;

    let mut path = vec![smoothed_objective(&coef)];
    let mut converged = false;
    let mut iterations = 0;

    let mut a_flat = vec![0.0f64; dim * dim];
    let mut rhs = Array1::<f64>::zeros(dim);
    for _ in 0..config.max_iterations {
        iterations += 1;
        a_flat.copy_from_slice(&penalty_flat);
        rhs.as_slice_mut().unwrap().copy_from_slice(&rhs_base);
        {
            let rhs = rhs.as_slice_mut().unwrap();
            let c = coef.as_slice().unwrap();
            for (nz, &yi) in nz_rows.iter().zip(ys) {
                let fitted: f64 = nz.iter().map(|&(k, v)| v * c[k]).sum();
                let w = 0.5 / (yi - fitted).abs().max(eps);
                let wy = w * yi;
                for (pos, &(k, vk)) in nz.iter().enumerate() {
                    rhs[k] += vk * wy;
                    let wvk = w * vk;
                    let row = &mut a_flat[k * dim..(k + 1) * dim];
                    for &(l, vl) in &nz[pos..] {
                        row[l] += wvk * vl;
                    }
                }
            }
        }
        let mut amat =
            Array2::from_shape_vec((dim, dim), a_flat.clone()).expect("square gram matrix");
        for k in 0..dim {
            for l in 0..k {
                amat[[k, l]] = amat[[l, k]];
            }
        }
        let next = solve_normal_equations(&mut amat, &rhs).ok_or(SqriError::DegenerateDesign)?;

        let f_prev = *path.last().unwrap();
        let mut f_next = smoothed_objective(&next);
        if !f_next.is_finite() {
            return Err(SqriError::DegenerateDesign);
        }
        // exact MM never increases the objective; a rise can only be ridge
        // or rounding noise at the numeric floor, so stop there
        if f_next > f_prev {
            converged = true;
            break;
        }
        // step doubling along the MM direction, kept only while it improves;
        // plain MM crawls once most residuals leave the smoothing band
        let mut next = next;
        if f_prev - f_next > config.tolerance * (1.0 + f_next.abs()) {
            let direction = &next - &coef;
            let mut gamma = 2.0;
            while gamma <= 1024.0 {
                let trial = &coef + &(&direction * gamma);
                let f_trial = smoothed_objective(&trial);
                if f_trial < f_next {
                    next = trial;
                    f_next = f_trial;
                    gamma *= 2.0;
                } else {
                    break;
                }
            }
        }
        path.push(f_next);

        let scale = 1.0 + next.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let step = coef
            .iter()
            .zip(next.iter())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        coef = next;
        if step <= config.tolerance * scale
            || (f_prev - f_next).abs() <= config.tolerance * (1.0 + f_next.abs())
        {
            converged = true;
            break;
        }
    }

    let fitted = bmat.dot(&coef);
    let loss: f64 = y
        .iter()
        .zip(fitted.iter())
        .map(|(&yi, &fi)| rho(yi - fi, tau))
        .sum();
    let dc = dmat.dot(&coef);
    let objective = loss + 0.5 * lambda * dc.dot(&dc);
    if !objective.is_finite() {
        return Err(SqriError::DegenerateDesign);
    }

    Ok(QuantileFit {
        tau,
        coefficients: coef,
        lambda,
        objective,
        iterations,
        converged,
        design: design.clone(),
        smoothed_objectives: path,
    })
}

/// Effective degrees of freedom: trace of the weighted ridge-type smoother
/// B (BᵀWB + λDᵀD)⁻¹ BᵀW at the fit's final weights.
fn effective_df(
    bmat: &Array2<f64>,
    y: &Array1<f64>,
    fit: &QuantileFit,
    eps: f64,
    penalty: &Array2<f64>,
) -> Option<f64> {
    let dim = bmat.ncols();
    let fitted = bmat.dot(&fit.coefficients);
    let mut m = Array2::<f64>::zeros((dim, dim));
    for i in 0..bmat.nrows() {
        let r = y[i] - fitted[i];
        let w = 0.5 / r.abs().max(eps);
        let brow = bmat.row(i);
        for k in 0..dim {
            if brow[k] == 0.0 {
                continue;
            }
            let wk = w * brow[k];
            for l in k..dim {
                m[[k, l]] += wk * brow[l];
            }
        }
    }
    for k in 0..dim {
        for l in 0..k {
            m[[k, l]] = m[[l, k]];
        }
    }
    let mut a = &m + &(penalty * fit.lambda);
    if let Some(tr) = linalg::trace_solve(&a, &m) {
        return Some(tr);
    }
    let ridge = RIDGE_REL * (1.0 + a.diag().sum() / dim as f64);
    for k in 0..dim {
        a[[k, k]] += ridge;
    }
    linalg::trace_solve(&a, &m)
}

/// GACV(λ) = Σ ρ_τ(y_i - q̂(x_i)) / (n_obs - df(λ)) for every usable grid
/// candidate, in grid order.
pub fn gacv_path(data: &Dataset, tau: f64, config: &FitConfig) -> Result<Vec<(f64, f64)>> {
    config.validate()?;
    let design = config.design(data.d_x())?;
    let (bmat, y) = respondent_design(data, &design)?;
    gacv_path_with_design(&bmat, &y, &design, tau, config)
}

/// GACV values against a precomputed respondent design matrix.
pub fn gacv_path_with_design(
    bmat: &Array2<f64>,
    y: &Array1<f64>,
    design: &SplineDesign,
    tau: f64,
    config: &FitConfig,
) -> Result<Vec<(f64, f64)>> {
    let n_obs = bmat.nrows();
    let grid = match &config.lambda_grid {
        Some(g) if g.is_empty() => return Err(SqriError::InvalidInput("empty lambda grid".into())),
        Some(g) => g.clone(),
        None => default_lambda_grid(n_obs),
    };
    let dmat = design.difference()?;
    let penalty = dmat.t().dot(&dmat);
    let eps = (config.smoothing_epsilon * stats::iqr(y.as_slice().unwrap())).max(EPS_FLOOR);

    let mut path = Vec::with_capacity(grid.len());
    for &lambda in &grid {
        let fit = fit_with_design(bmat, y, design, tau, lambda, config)?;
        let df = match effective_df(bmat, y, &fit, eps, &penalty) {
            Some(df) => df,
            None => continue,
        };
        if df >= n_obs as f64 {
            continue;
        }
        let fitted = bmat.dot(&fit.coefficients);
        let loss: f64 = y
            .iter()
            .zip(fitted.iter())
            .map(|(&yi, &fi)| rho(yi - fi, tau))
            .sum();
        path.push((lambda, loss / (n_obs as f64 - df)));
    }
    if path.is_empty() {
        return Err(SqriError::GridTooSmall);
    }
    Ok(path)
}

/// Select the smoothing parameter on the GACV path.
pub fn select_lambda_gacv(data: &Dataset, tau: f64, config: &FitConfig) -> Result<f64> {
    config.validate()?;
    let design = config.design(data.d_x())?;
    let (bmat, y) = respondent_design(data, &design)?;
    select_lambda_gacv_with_design(&bmat, &y, &design, tau, config)
}

/// Relative GACV tolerance for the parsimony rule: candidates this close to
/// the minimum are treated as indistinguishable and the smoothest one wins.
/// GACV is flat to first order in λ on structureless data, so a bare argmin
/// degenerates into a noise race between the grid extremes there.
const GACV_PLATEAU_TOL: f64 = 0.02;

/// GACV selection against a precomputed respondent design matrix: the
/// largest λ whose GACV lies within [`GACV_PLATEAU_TOL`] of the minimum.
pub fn select_lambda_gacv_with_design(
    bmat: &Array2<f64>,
    y: &Array1<f64>,
    design: &SplineDesign,
    tau: f64,
    config: &FitConfig,
) -> Result<f64> {
    let path = gacv_path_with_design(bmat, y, design, tau, config)?;
    let min = path.iter().map(|p| p.1).fold(f64::MAX, f64::min);
    let cut = min * (1.0 + GACV_PLATEAU_TOL) + f64::MIN_POSITIVE;
    Ok(path
        .iter()
        .filter(|p| p.1 <= cut)
        .map(|p| p.0)
        .fold(path[0].0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::{Array1, Array2};

    fn linear_dataset(n: usize, noise: f64, seed: u64) -> Dataset {
        use rand::Rng;
        let mut rng = crate::rng::stream(seed, crate::rng::tag::COVARIATES, 0);
        let mut x = Array2::<f64>::zeros((n, 1));
        let mut y = Array1::<f64>::zeros(n);
        for i in 0..n {
            let xi: f64 = rng.random();
            x[[i, 0]] = xi;
            let e: f64 = rng.random::<f64>() - 0.5;
            y[i] = xi + noise * e;
        }
        Dataset::complete(x, y).unwrap()
    }

    #[test]
    fn check_loss_examples() {
        assert_abs_diff_eq!(check_loss(2.0, 0.5).unwrap(), 1.0);
        assert_abs_diff_eq!(check_loss(-1.0, 0.25).unwrap(), 0.75);
        assert_abs_diff_eq!(check_loss(0.0, 0.9).unwrap(), 0.0);
        assert!(check_loss(1.0, 0.0).is_err());
        assert!(check_loss(1.0, 1.0).is_err());
    }

    #[test]
    fn smoothed_loss_matches_exact_outside_band() {
        let eps = 1e-3;
        for &tau in &[0.1, 0.5, 0.8] {
            for &u in &[-1.0, -0.01, 0.01, 2.0] {
                assert_abs_diff_eq!(rho_smoothed(u, tau, eps), rho(u, tau), epsilon = 1e-15);
            }
            // continuity at the seams
            assert_abs_diff_eq!(rho_smoothed(eps, tau, eps), rho(eps, tau), epsilon = 1e-15);
            assert_abs_diff_eq!(
                rho_smoothed(-eps, tau, eps),
                rho(-eps, tau),
                epsilon = 1e-15
            );
        }
    }

    #[test]
    fn constant_response_reproduced() {
        let n = 40;
        let x = Array2::from_shape_fn((n, 1), |(i, _)| i as f64 / (n - 1) as f64);
        let y = Array1::from_elem(n, 2.5);
        let data = Dataset::complete(x, y).unwrap();
        let config = FitConfig::default();
        for &tau in &[0.2, 0.5, 0.8] {
            let fit = fit_quantile(&data, tau, 1.0, &config).unwrap();
            for i in 0..=20 {
                let x = i as f64 / 20.0;
                let q = predict_quantile(&fit, x).unwrap();
                assert_abs_diff_eq!(q, 2.5, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn zero_coefficients_predict_zero() {
        let data = linear_dataset(60, 0.2, 9);
        let config = FitConfig::default();
        let mut fit = fit_quantile(&data, 0.5, 0.0, &config).unwrap();
        fit.coefficients.fill(0.0);
        for i in 0..=10 {
            assert_eq!(predict_quantile(&fit, i as f64 / 10.0).unwrap(), 0.0);
        }
    }

    #[test]
    fn prediction_rejects_out_of_range() {
        let data = linear_dataset(60, 0.2, 11);
        let fit = fit_quantile(&data, 0.5, 0.0, &FitConfig::default()).unwrap();
        assert!(predict_quantile(&fit, -0.1).is_err());
        assert!(predict_quantile(&fit, 1.2).is_err());
    }

    #[test]
    fn smoothed_objective_is_monotone() {
        let data = linear_dataset(80, 0.5, 5);
        for &tau in &[0.25, 0.5, 0.9] {
            let fit = fit_quantile(&data, tau, 3.0, &FitConfig::default()).unwrap();
            assert!(fit.converged);
            for w in fit.smoothed_objectives.windows(2) {
                assert!(
                    w[1] <= w[0] * (1.0 + 1e-10) + 1e-12,
                    "objective rose: {} -> {}",
                    w[0],
                    w[1]
                );
            }
        }
    }

    #[test]
    fn too_few_respondents_rejected() {
        let data = linear_dataset(10, 0.2, 4);
        let err = fit_quantile(&data, 0.5, 0.0, &FitConfig::default()).unwrap_err();
        assert!(matches!(
            err,
            SqriError::InsufficientRespondents { needed: 16, .. }
        ));
    }

    #[test]
    fn invalid_tau_and_lambda_rejected() {
        let data = linear_dataset(60, 0.2, 4);
        assert!(fit_quantile(&data, 0.0, 0.0, &FitConfig::default()).is_err());
        assert!(fit_quantile(&data, 0.5, -1.0, &FitConfig::default()).is_err());
        assert!(fit_quantile(&data, 0.5, f64::INFINITY, &FitConfig::default()).is_err());
    }

    #[test]
    fn singleton_grid_returned_directly() {
        let data = linear_dataset(60, 0.3, 3);
        let config = FitConfig {
            lambda_grid: Some(vec![0.0]),
            ..FitConfig::default()
        };
        assert_eq!(select_lambda_gacv(&data, 0.5, &config).unwrap(), 0.0);
    }

    #[test]
    fn default_grid_shape() {
        let g = default_lambda_grid(100);
        assert_eq!(g.len(), 15);
        assert_eq!(g[0], 0.0);
        assert_abs_diff_eq!(g[1], 1e-4 * 100.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g[14], 1e3 * 100.0, epsilon = 1e-6);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }
}
