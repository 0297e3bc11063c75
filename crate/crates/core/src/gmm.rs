//! GMM estimation over general estimating equations, the five- and
//! eight-moment systems for (means, standard deviations, correlations), and
//! their complete-data closed forms.

use crate::dataset::Dataset;
use crate::error::{Result, SqriError};
use crate::impute::{augmented_moment, augmented_moment_jacobian, FractionalImputation};
use crate::linalg;
use ndarray::{Array1, Array2};

/// An r-vector estimating function with analytic θ- and y-derivatives.
pub trait MomentSystem: Send + Sync {
    fn r(&self) -> usize;
    fn d_theta(&self) -> usize;
    fn g(&self, y: f64, x: &[f64], theta: &[f64]) -> Array1<f64>;
    fn dg_dtheta(&self, y: f64, x: &[f64], theta: &[f64]) -> Array2<f64>;
    fn dg_dy(&self, y: f64, x: &[f64], theta: &[f64]) -> Array1<f64>;
    /// Box constraints per parameter.
    fn bounds(&self) -> Vec<(f64, f64)>;
    fn names(&self) -> Vec<&'static str>;
    /// Indices of the reported (non-nuisance) parameters.
    fn interest_indices(&self) -> Vec<usize> {
        (0..self.d_theta()).collect()
    }
}

const SIGMA_FLOOR: f64 = 1e-8;

/// Five-moment system for θ = (μ_x, μ_y, σ_x, σ_y, ρ) of a univariate pair.
pub struct FiveMoments;

/// (x-μx, y-μy, (x-μx)²-σx², (y-μy)²-σy², (x-μx)(y-μy)-ρσxσy), with the
/// σ-positivity preconditions checked.
pub fn moments_five(x: f64, y: f64, theta: &[f64; 5]) -> Result<[f64; 5]> {
    let [mu_x, mu_y, sigma_x, sigma_y, rho] = *theta;
    if !(sigma_x > 0.0 && sigma_y > 0.0) {
        return Err(SqriError::InvalidInput(format!(
            "sigma components must be positive, got ({sigma_x}, {sigma_y})"
        )));
    }
    if !(-1.0..=1.0).contains(&rho) {
        return Err(SqriError::InvalidInput(format!(
            "correlation {rho} outside [-1, 1]"
        )));
    }
    let cx = x - mu_x;
    let cy = y - mu_y;
    Ok([
        cx,
        cy,
        cx * cx - sigma_x * sigma_x,
        cy * cy - sigma_y * sigma_y,
        cx * cy - rho * sigma_x * sigma_y,
    ])
}

impl MomentSystem for FiveMoments {
    fn r(&self) -> usize {
        5
    }
    fn d_theta(&self) -> usize {
        5
    }
    fn g(&self, y: f64, x: &[f64], theta: &[f64]) -> Array1<f64> {
        let cx = x[0] - theta[0];
        let cy = y - theta[1];
        ndarray::arr1(&[
            cx,
            cy,
            cx * cx - theta[2] * theta[2],
            cy * cy - theta[3] * theta[3],
            cx * cy - theta[4] * theta[2] * theta[3],
        ])
    }
    fn dg_dtheta(&self, y: f64, x: &[f64], theta: &[f64]) -> Array2<f64> {
        let cx = x[0] - theta[0];
        let cy = y - theta[1];
        let (sx, sy, rho) = (theta[2], theta[3], theta[4]);
        let mut d = Array2::<f64>::zeros((5, 5));
        d[[0, 0]] = -1.0;
        d[[1, 1]] = -1.0;
        d[[2, 0]] = -2.0 * cx;
        d[[2, 2]] = -2.0 * sx;
        d[[3, 1]] = -2.0 * cy;
        d[[3, 3]] = -2.0 * sy;
        d[[4, 0]] = -cy;
        d[[4, 1]] = -cx;
        d[[4, 2]] = -rho * sy;
        d[[4, 3]] = -rho * sx;
        d[[4, 4]] = -sx * sy;
        d
    }
    fn dg_dy(&self, y: f64, x: &[f64], theta: &[f64]) -> Array1<f64> {
        ndarray::arr1(&[0.0, 1.0, 0.0, 2.0 * (y - theta[1]), x[0] - theta[0]])
    }
    fn bounds(&self) -> Vec<(f64, f64)> {
        vec![
            (f64::NEG_INFINITY, f64::INFINITY),
            (f64::NEG_INFINITY, f64::INFINITY),
            (SIGMA_FLOOR, f64::INFINITY),
            (SIGMA_FLOOR, f64::INFINITY),
            (-1.0, 1.0),
        ]
    }
    fn names(&self) -> Vec<&'static str> {
        vec!["mu_x", "mu_y", "sigma_x", "sigma_y", "rho"]
    }
    fn interest_indices(&self) -> Vec<usize> {
        vec![1, 3, 4]
    }
}

/// Eight-moment system for θ = (μ_x1, μ_x2, μ_y, σ_x1, σ_x2, σ_y, ρ1, ρ2).
pub struct BivariateMoments;

/// The two-covariate analogue of the five-moment function.
pub fn moments_bivariate(x1: f64, x2: f64, y: f64, theta: &[f64; 8]) -> Result<[f64; 8]> {
    let [m1, m2, my, s1, s2, sy, r1, r2] = *theta;
    if !(s1 > 0.0 && s2 > 0.0 && sy > 0.0) {
        return Err(SqriError::InvalidInput(
            "sigma components must be positive".into(),
        ));
    }
    let (c1, c2, cy) = (x1 - m1, x2 - m2, y - my);
    Ok([
        c1,
        c2,
        cy,
        c1 * c1 - s1 * s1,
        c2 * c2 - s2 * s2,
        cy * cy - sy * sy,
        c1 * cy - r1 * s1 * sy,
        c2 * cy - r2 * s2 * sy,
    ])
}

impl MomentSystem for BivariateMoments {
    fn r(&self) -> usize {
        8
    }
    fn d_theta(&self) -> usize {
        8
    }
    fn g(&self, y: f64, x: &[f64], theta: &[f64]) -> Array1<f64> {
        let (c1, c2, cy) = (x[0] - theta[0], x[1] - theta[1], y - theta[2]);
        let (s1, s2, sy, r1, r2) = (theta[3], theta[4], theta[5], theta[6], theta[7]);
        ndarray::arr1(&[
            c1,
            c2,
            cy,
            c1 * c1 - s1 * s1,
            c2 * c2 - s2 * s2,
            cy * cy - sy * sy,
            c1 * cy - r1 * s1 * sy,
            c2 * cy - r2 * s2 * sy,
        ])
    }
    fn dg_dtheta(&self, y: f64, x: &[f64], theta: &[f64]) -> Array2<f64> {
        let (c1, c2, cy) = (x[0] - theta[0], x[1] - theta[1], y - theta[2]);
        let (s1, s2, sy, r1, r2) = (theta[3], theta[4], theta[5], theta[6], theta[7]);
        let mut d = Array2::<f64>::zeros((8, 8));
        d[[0, 0]] = -1.0;
        d[[1, 1]] = -1.0;
        d[[2, 2]] = -1.0;
        d[[3, 0]] = -2.0 * c1;
        d[[3, 3]] = -2.0 * s1;
        d[[4, 1]] = -2.0 * c2;
        d[[4, 4]] = -2.0 * s2;
        d[[5, 2]] = -2.0 * cy;
        d[[5, 5]] = -2.0 * sy;
        d[[6, 0]] = -cy;
        d[[6, 2]] = -c1;
        d[[6, 3]] = -r1 * sy;
        d[[6, 5]] = -r1 * s1;
        d[[6, 6]] = -s1 * sy;
        d[[7, 1]] = -cy;
        d[[7, 2]] = -c2;
        d[[7, 4]] = -r2 * sy;
        d[[7, 5]] = -r2 * s2;
        d[[7, 7]] = -s2 * sy;
        d
    }
    fn dg_dy(&self, y: f64, x: &[f64], theta: &[f64]) -> Array1<f64> {
        ndarray::arr1(&[
            0.0,
            0.0,
            1.0,
            0.0,
            0.0,
            2.0 * (y - theta[2]),
            x[0] - theta[0],
            x[1] - theta[1],
        ])
    }
    fn bounds(&self) -> Vec<(f64, f64)> {
        vec![
            (f64::NEG_INFINITY, f64::INFINITY),
            (f64::NEG_INFINITY, f64::INFINITY),
            (f64::NEG_INFINITY, f64::INFINITY),
            (SIGMA_FLOOR, f64::INFINITY),
            (SIGMA_FLOOR, f64::INFINITY),
            (SIGMA_FLOOR, f64::INFINITY),
            (-1.0, 1.0),
            (-1.0, 1.0),
        ]
    }
    fn names(&self) -> Vec<&'static str> {
        vec![
            "mu_x1", "mu_x2", "mu_y", "sigma_x1", "sigma_x2", "sigma_y", "rho1", "rho2",
        ]
    }
    fn interest_indices(&self) -> Vec<usize> {
        vec![2, 5, 6, 7]
    }
}

/// The matching moment system for a dataset's covariate dimension.
pub fn system_for(data: &Dataset) -> Box<dyn MomentSystem> {
    if data.d_x() == 2 {
        Box::new(BivariateMoments)
    } else {
        Box::new(FiveMoments)
    }
}

fn column_means(data: &Dataset) -> Vec<f64> {
    let n = data.n() as f64;
    (0..data.d_x())
        .map(|d| data.x().column(d).sum() / n)
        .collect()
}

/// Complete-data closed form: means, n-1 denominator standard deviations and
/// Pearson correlations, in the moment-system parameter order.
pub fn complete_closed_form(data: &Dataset) -> Result<Vec<f64>> {
    if data.n_missing() > 0 {
        return Err(SqriError::InvalidInput(
            "closed form requires complete data".into(),
        ));
    }
    let n = data.n();
    if n < 2 {
        return Err(SqriError::InvalidInput(
            "need at least two observations".into(),
        ));
    }
    let nf = n as f64;
    let mu_x = column_means(data);
    let mu_y = (0..n).map(|i| data.y(i)).sum::<f64>() / nf;
    let mut sxx = vec![0.0; data.d_x()];
    let mut sxy = vec![0.0; data.d_x()];
    let mut syy = 0.0;
    for i in 0..n {
        let cy = data.y(i) - mu_y;
        syy += cy * cy;
        for d in 0..data.d_x() {
            let cx = data.x()[[i, d]] - mu_x[d];
            sxx[d] += cx * cx;
            sxy[d] += cx * cy;
        }
    }
    if syy == 0.0 {
        return Err(SqriError::ZeroVariance("y".into()));
    }
    if sxx.iter().any(|&s| s == 0.0) {
        return Err(SqriError::ZeroVariance("x".into()));
    }
    let sigma_y = (syy / (nf - 1.0)).sqrt();
    let sigma_x: Vec<f64> = sxx.iter().map(|&s| (s / (nf - 1.0)).sqrt()).collect();
    let rho: Vec<f64> = (0..data.d_x())
        .map(|d| sxy[d] / (sxx[d] * syy).sqrt())
        .collect();
    Ok(match data.d_x() {
        1 => vec![mu_x[0], mu_y, sigma_x[0], sigma_y, rho[0]],
        _ => vec![
            mu_x[0], mu_x[1], mu_y, sigma_x[0], sigma_x[1], sigma_y, rho[0], rho[1],
        ],
    })
}

/// Exact root of the fractionally augmented moment system (n denominators,
/// within-unit second moments included). Exactly identified, so the averaged
/// estimating function vanishes at the returned vector.
pub fn fractional_moment_root(
    data: &Dataset,
    imputed: &std::collections::BTreeMap<usize, Vec<f64>>,
) -> Result<Vec<f64>> {
    let n = data.n();
    if n < 2 {
        return Err(SqriError::InvalidInput(
            "need at least two observations".into(),
        ));
    }
    let nf = n as f64;
    for i in data.missing_indices() {
        if !imputed.contains_key(&i) {
            return Err(SqriError::InvalidInput(format!("unit {i} not imputed")));
        }
    }
    let mu_x = column_means(data);
    let unit_mean_y = |i: usize| -> f64 {
        if data.delta(i) {
            data.y(i)
        } else {
            let v = &imputed[&i];
            v.iter().sum::<f64>() / v.len() as f64
        }
    };
    let mu_y = (0..n).map(unit_mean_y).sum::<f64>() / nf;

    let mut syy = 0.0;
    let mut sxx = vec![0.0; data.d_x()];
    let mut sxy = vec![0.0; data.d_x()];
    for i in 0..n {
        let (ss, sc) = if data.delta(i) {
            let cy = data.y(i) - mu_y;
            (cy * cy, cy)
        } else {
            let v = &imputed[&i];
            let jn = v.len() as f64;
            let ss = v.iter().map(|&y| (y - mu_y) * (y - mu_y)).sum::<f64>() / jn;
            let sc = v.iter().map(|&y| y - mu_y).sum::<f64>() / jn;
            (ss, sc)
        };
        syy += ss;
        for d in 0..data.d_x() {
            let cx = data.x()[[i, d]] - mu_x[d];
            sxx[d] += cx * cx;
            sxy[d] += cx * sc;
        }
    }
    let sigma_y = (syy / nf).sqrt();
    if !(sigma_y > 0.0) {
        return Err(SqriError::ZeroVariance("y".into()));
    }
    let sigma_x: Vec<f64> = sxx.iter().map(|&s| (s / nf).sqrt()).collect();
    if sigma_x.iter().any(|&s| !(s > 0.0)) {
        return Err(SqriError::ZeroVariance("x".into()));
    }
    let rho: Vec<f64> = (0..data.d_x())
        .map(|d| (sxy[d] / nf) / (sigma_x[d] * sigma_y))
        .collect();
    Ok(match data.d_x() {
        1 => vec![mu_x[0], mu_y, sigma_x[0], sigma_y, rho[0]],
        _ => vec![
            mu_x[0], mu_x[1], mu_y, sigma_x[0], sigma_x[1], sigma_y, rho[0], rho[1],
        ],
    })
}

/// Starting point for the GMM iterations: closed form on the data completed
/// with the per-unit mean of the J imputed values.
pub fn initial_theta(data: &Dataset, imp: &FractionalImputation) -> Result<Vec<f64>> {
    let fills: Vec<(usize, f64)> = imp.unit_means().into_iter().collect();
    let completed = data.completed_with(&fills)?;
    complete_closed_form(&completed)
}

/// Averaged moment conditions: the value Ḡ(θ) and its θ-Jacobian.
pub trait MomentConditions {
    fn r(&self) -> usize;
    fn d_theta(&self) -> usize;
    fn value(&self, theta: &[f64]) -> Result<Array1<f64>>;
    fn jacobian(&self, theta: &[f64]) -> Result<Array2<f64>>;
}

/// Moment conditions of the fractionally augmented sample.
pub struct AugmentedConditions<'a> {
    pub system: &'a dyn MomentSystem,
    pub data: &'a Dataset,
    pub imp: &'a FractionalImputation,
}

impl MomentConditions for AugmentedConditions<'_> {
    fn r(&self) -> usize {
        self.system.r()
    }
    fn d_theta(&self) -> usize {
        self.system.d_theta()
    }
    fn value(&self, theta: &[f64]) -> Result<Array1<f64>> {
        augmented_moment(self.system, self.data, self.imp, theta)
    }
    fn jacobian(&self, theta: &[f64]) -> Result<Array2<f64>> {
        augmented_moment_jacobian(self.system, self.data, self.imp, theta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GmmMode {
    Unweighted,
    WeightedCu,
    WeightedTwoStep,
}

impl std::fmt::Display for GmmMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GmmMode::Unweighted => write!(f, "unweighted"),
            GmmMode::WeightedCu => write!(f, "weighted-CU"),
            GmmMode::WeightedTwoStep => write!(f, "weighted-two-step"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GmmEstimate {
    pub theta_hat: Array1<f64>,
    pub objective: f64,
    pub mode: GmmMode,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct GmmOptions {
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub max_backtracks: usize,
}

impl Default for GmmOptions {
    fn default() -> Self {
        GmmOptions {
            max_iterations: 200,
            gradient_tolerance: 1e-10,
            max_backtracks: 50,
        }
    }
}

fn clamp_to_bounds(theta: &mut [f64], bounds: &[(f64, f64)]) {
    for (t, &(lo, hi)) in theta.iter_mut().zip(bounds) {
        *t = t.clamp(lo, hi);
    }
}

const WEIGHT_FLOOR: f64 = 1e-10;

/// Weighting scheme for the quadratic form in the averaged moments.
enum Weighting<'a> {
    Identity,
    /// Continuous updating: the weight is V̂_G(θ)⁻¹ at the trial θ.
    Continuous(&'a dyn Fn(&[f64]) -> Result<Array2<f64>>),
    Fixed(Array2<f64>),
}

impl Weighting<'_> {
    fn matrix(&self, theta: &[f64]) -> Result<Option<Array2<f64>>> {
        match self {
            Weighting::Identity => Ok(None),
            Weighting::Continuous(vg) => {
                let v = vg(theta)?;
                Ok(Some(linalg::inverse_spd_floored(&v, WEIGHT_FLOOR)?))
            }
            Weighting::Fixed(w) => Ok(Some(w.clone())),
        }
    }
}

fn quad_form(g: &Array1<f64>, w: &Option<Array2<f64>>) -> f64 {
    match w {
        None => g.dot(g),
        Some(w) => g.dot(&w.dot(g)),
    }
}

fn minimize(
    conditions: &dyn MomentConditions,
    weighting: &Weighting,
    bounds: &[(f64, f64)],
    theta_init: &[f64],
    mode: GmmMode,
    options: &GmmOptions,
) -> Result<GmmEstimate> {
    let d = conditions.d_theta();
    if theta_init.len() != d || bounds.len() != d {
        return Err(SqriError::InvalidInput(
            "dimension mismatch between theta, bounds and the moment system".into(),
        ));
    }
    let mut theta = theta_init.to_vec();
    clamp_to_bounds(&mut theta, bounds);

    let mut w = weighting.matrix(&theta)?;
    let mut g = conditions.value(&theta)?;
    let mut objective = quad_form(&g, &w);
    if !objective.is_finite() {
        return Err(SqriError::NonFiniteObjective);
    }

    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..options.max_iterations {
        iterations += 1;
        let jac = conditions.jacobian(&theta)?;
        // gradient of the quadratic form, holding the weight fixed
        let wg = match &w {
            None => g.clone(),
            Some(w) => w.dot(&g),
        };
        let grad = jac.t().dot(&wg) * 2.0;
        if grad.iter().all(|v| v.abs() < options.gradient_tolerance) {
            converged = true;
            break;
        }

        let jtwj = match &w {
            None => jac.t().dot(&jac),
            Some(w) => jac.t().dot(&w.dot(&jac)),
        };
        let nu = 1e-12 * (1.0 + jtwj.diag().sum() / d as f64);
        let mut a = jtwj;
        for k in 0..d {
            a[[k, k]] += nu;
        }
        let rhs = jac.t().dot(&wg) * -1.0;
        let direction = match linalg::solve_spd(&a, &rhs) {
            Some(dir) => dir,
            None => &grad * -1.0,
        };

        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..options.max_backtracks {
            let mut cand: Vec<f64> = theta
                .iter()
                .zip(direction.iter())
                .map(|(t, d)| t + alpha * d)
                .collect();
            clamp_to_bounds(&mut cand, bounds);
            let w_cand = weighting.matrix(&cand)?;
            let g_cand = conditions.value(&cand)?;
            let obj_cand = quad_form(&g_cand, &w_cand);
            if obj_cand.is_finite() && obj_cand < objective {
                accepted = Some((cand, w_cand, g_cand, obj_cand));
                break;
            }
            alpha *= 0.5;
        }
        match accepted {
            Some((cand, w_cand, g_cand, obj_cand)) => {
                theta = cand;
                w = w_cand;
                g = g_cand;
                objective = obj_cand;
            }
            None => break, // line-search failure: return the best iterate
        }
    }

    Ok(GmmEstimate {
        theta_hat: Array1::from(theta),
        objective,
        mode,
        iterations,
        converged,
    })
}

/// Minimize Gₙᵀ(θ) Gₙ(θ) by Gauss-Newton with backtracking line search.
pub fn gmm_unweighted(
    conditions: &dyn MomentConditions,
    bounds: &[(f64, f64)],
    theta_init: &[f64],
    options: &GmmOptions,
) -> Result<GmmEstimate> {
    minimize(
        conditions,
        &Weighting::Identity,
        bounds,
        theta_init,
        GmmMode::Unweighted,
        options,
    )
}

/// Minimize the weighted quadratic form Gₙᵀ(θ) V̂_G⁻¹(θ) Gₙ(θ).
///
/// `WeightedCu` re-evaluates the weight at every trial point (continuous
/// updating); `WeightedTwoStep` first solves the unweighted problem, then
/// fixes the weight at that solution.
pub fn gmm_weighted(
    conditions: &dyn MomentConditions,
    vg_evaluator: &dyn Fn(&[f64]) -> Result<Array2<f64>>,
    mode: GmmMode,
    bounds: &[(f64, f64)],
    theta_init: &[f64],
    options: &GmmOptions,
) -> Result<GmmEstimate> {
    match mode {
        GmmMode::Unweighted => gmm_unweighted(conditions, bounds, theta_init, options),
        GmmMode::WeightedCu => minimize(
            conditions,
            &Weighting::Continuous(vg_evaluator),
            bounds,
            theta_init,
            mode,
            options,
        ),
        GmmMode::WeightedTwoStep => {
            let first = gmm_unweighted(conditions, bounds, theta_init, options)?;
            let v = vg_evaluator(first.theta_hat.as_slice().unwrap())?;
            let w = linalg::inverse_spd_floored(&v, WEIGHT_FLOOR)?;
            minimize(
                conditions,
                &Weighting::Fixed(w),
                bounds,
                first.theta_hat.as_slice().unwrap(),
                mode,
                options,
            )
        }
    }
}
