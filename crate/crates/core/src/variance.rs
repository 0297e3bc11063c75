//! Plug-in variance machinery and confidence intervals.
//!
//! The influence estimate for unit i is
//!   ξ̂_i(θ) = g(y_i, x_i; θ)
//!          + (1-δ_i) { μ̂_{g|x}(x_i; θ) - g(y_i, x_i; θ) }
//!          + δ_i Ĉ_p ĥ_n(y_i, x_i; θ) B(x_i),
//! where μ̂_{g|x} is the fractional average over imputed values and ĥ_n sums
//! kernel-weighted quantile-fit corrections over the J fitted τ_j. For a
//! missing unit the first bracket cancels the g term symbolically; the
//! unobserved y_i is never evaluated. V̂_G is the n-1 denominator sample
//! covariance of the ξ̂_i, and the sandwich matrices combine it with the
//! moment-derivative average Γ̂.

use crate::dataset::Dataset;
use crate::error::{Result, SqriError};
use crate::gmm::MomentSystem;
use crate::impute::{augmented_moment_jacobian, FractionalImputation};
use crate::linalg;
use crate::rng::{self, tag};
use crate::stats;
use ndarray::{Array1, Array2};
use rayon::prelude::*;

/// Normal-kernel bandwidths: `a` smooths the response direction, `b` the
/// covariate direction(s).
#[derive(Debug, Clone)]
pub struct KernelConfig {
    pub bandwidth_a: f64,
    pub bandwidth_b: Vec<f64>,
}

impl KernelConfig {
    pub fn new(bandwidth_a: f64, bandwidth_b: Vec<f64>) -> Result<Self> {
        if !(bandwidth_a > 0.0) || bandwidth_b.iter().any(|&b| !(b > 0.0)) {
            return Err(SqriError::InvalidInput(
                "kernel bandwidths must be positive".into(),
            ));
        }
        Ok(KernelConfig {
            bandwidth_a,
            bandwidth_b,
        })
    }

    /// Silverman's rule per direction, computed on the respondents. The
    /// response bandwidth uses the residual spread around a linear pilot fit
    /// of y on x: the estimand is a conditional density, and the marginal
    /// spread of y badly over-smooths whenever x carries most of the
    /// variation.
    pub fn silverman(data: &Dataset) -> Result<Self> {
        let idx = data.respondent_indices();
        if idx.is_empty() {
            return Err(SqriError::InsufficientRespondents {
                needed: 1,
                found: 0,
            });
        }
        let ys: Vec<f64> = idx.iter().map(|&i| data.y(i)).collect();
        let resid = pilot_residuals(data, &idx).unwrap_or(ys);
        let a = stats::silverman_bandwidth(&resid);
        let b = (0..data.d_x())
            .map(|d| {
                let xs: Vec<f64> = idx.iter().map(|&i| data.x()[[i, d]]).collect();
                stats::silverman_bandwidth(&xs)
            })
            .collect();
        KernelConfig::new(a, b)
    }
}

fn pilot_residuals(data: &Dataset, idx: &[usize]) -> Option<Vec<f64>> {
    let p = 1 + data.d_x();
    if idx.len() <= p + 1 {
        return None;
    }
    let mut a = Array2::<f64>::zeros((p, p));
    let mut rhs = Array1::<f64>::zeros(p);
    let row = |i: usize| -> Vec<f64> {
        let mut r = vec![1.0];
        r.extend(data.x_row(i));
        r
    };
    for &i in idx {
        let xr = row(i);
        let y = data.y(i);
        for k in 0..p {
            rhs[k] += xr[k] * y;
            for l in k..p {
                a[[k, l]] += xr[k] * xr[l];
            }
        }
    }
    for k in 0..p {
        for l in 0..k {
            a[[k, l]] = a[[l, k]];
        }
        a[[k, k]] += 1e-12;
    }
    let beta = linalg::solve_spd(&a, &rhs)?;
    Some(
        idx.iter()
            .map(|&i| {
                let xr = row(i);
                data.y(i) - xr.iter().zip(beta.iter()).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect(),
    )
}

/// Kernel estimate of the conditional density f(y | x) from the respondents.
/// The covariate bandwidth is shared by numerator and denominator; returns 0
/// when the denominator underflows.
pub fn kernel_conditional_density(
    x: &[f64],
    y: f64,
    data: &Dataset,
    config: &KernelConfig,
) -> Result<f64> {
    if x.len() != data.d_x() || x.len() != config.bandwidth_b.len() {
        return Err(SqriError::InvalidInput(
            "covariate dimension mismatch in kernel evaluation".into(),
        ));
    }
    let idx = data.respondent_indices();
    if idx.is_empty() {
        return Err(SqriError::InsufficientRespondents {
            needed: 1,
            found: 0,
        });
    }
    let a = config.bandwidth_a;
    let mut num = 0.0;
    let mut den = 0.0;
    for &i in &idx {
        let mut kx = 1.0;
        for d in 0..x.len() {
            kx *= stats::normal_pdf((x[d] - data.x()[[i, d]]) / config.bandwidth_b[d]);
        }
        den += kx;
        num += kx * stats::normal_pdf((y - data.y(i)) / a);
    }
    if den < 1e-300 {
        return Ok(0.0);
    }
    Ok(num / (a * den))
}

/// Φ̂(τ_j) = n⁻¹ Σ δ_i f̂(x_i, q̂_{τ_j}(x_i)) B(x_i) Bᵀ(x_i).
pub fn phi_hat(
    fit: &crate::quantile::QuantileFit,
    data: &Dataset,
    config: &KernelConfig,
) -> Result<Array2<f64>> {
    let dim = fit.design.dim();
    let mut phi = Array2::<f64>::zeros((dim, dim));
    for i in data.respondent_indices() {
        let x = data.x_row(i);
        let b = fit.design.basis_row(&x)?;
        let q = b.dot(&fit.coefficients);
        let f = kernel_conditional_density(&x, q, data, config)?;
        for k in 0..dim {
            for l in k..dim {
                phi[[k, l]] += f * b[k] * b[l];
            }
        }
    }
    let n = data.n() as f64;
    for k in 0..dim {
        for l in k..dim {
            phi[[k, l]] /= n;
            phi[[l, k]] = phi[[k, l]];
        }
    }
    Ok(phi)
}

const HN_RIDGE_REL: f64 = 1e-10;

/// θ-independent pieces of ĥ_n: per τ_j the Cholesky factor of
/// Ĥₙ(τ_j) = Φ̂(τ_j) + (λ/n) DᵀD, the fitted quantiles q̂_{τ_j}(x_k), and the
/// basis rows. Built once per (data, imputation, kernel) and reused across
/// every θ the optimizer visits.
pub struct HnComponents {
    taus: Vec<f64>,
    hn_chol: Vec<Array2<f64>>,
    fitted: Vec<Vec<f64>>,
    basis_rows: Vec<Array1<f64>>,
}

impl HnComponents {
    pub fn prepare(
        data: &Dataset,
        imp: &FractionalImputation,
        config: &KernelConfig,
    ) -> Result<Self> {
        if imp.fits.is_empty() {
            return Err(SqriError::InvalidInput(
                "h_n needs the J quantile fits of the imputation".into(),
            ));
        }
        let design = imp.fits[0].design.clone();
        let dim = design.dim();
        let n = data.n();

        let basis_rows: Vec<Array1<f64>> = (0..n)
            .map(|i| design.basis_row(&data.x_row(i)))
            .collect::<Result<_>>()?;
        let dmat = design.difference()?;
        let penalty = dmat.t().dot(&dmat);

        let mut hn_chol = Vec::with_capacity(imp.fits.len());
        let mut fitted = Vec::with_capacity(imp.fits.len());
        for fit in &imp.fits {
            let qhat: Vec<f64> = basis_rows
                .iter()
                .map(|b| b.dot(&fit.coefficients))
                .collect();
            let mut h = phi_hat(fit, data, config)? + &(&penalty * (imp.lambda / n as f64));
            let ridge = HN_RIDGE_REL * h.diag().sum().max(1e-300);
            for k in 0..dim {
                h[[k, k]] += ridge;
            }
            let l = linalg::cholesky(&h).ok_or_else(|| {
                SqriError::WeightMatrixDegenerate(format!(
                    "H_n(tau={}) singular beyond the ridge floor",
                    fit.tau
                ))
            })?;
            hn_chol.push(l);
            fitted.push(qhat);
        }
        Ok(HnComponents {
            taus: imp.taus.clone(),
            hn_chol,
            fitted,
            basis_rows,
        })
    }

    /// The per-τ_j matrices (nJ)⁻¹ Σ_k ġ_y(q̂_{τ_j}(x_k), x_k; θ) Bᵀ(x_k)
    /// Ĥₙ⁻¹(τ_j) at a particular θ.
    pub fn at_theta(
        &self,
        system: &dyn MomentSystem,
        theta: &[f64],
        data: &Dataset,
    ) -> HnAtTheta<'_> {
        let n = data.n();
        let jn = self.taus.len() as f64;
        let r = system.r();
        let dim = self.basis_rows[0].len();
        let mut m_terms = Vec::with_capacity(self.taus.len());
        for (j, l) in self.hn_chol.iter().enumerate() {
            let mut s = Array2::<f64>::zeros((r, dim));
            for k in 0..n {
                let gy = system.dg_dy(self.fitted[j][k], &data.x_row(k), theta);
                let brow = &self.basis_rows[k];
                for a in 0..r {
                    if gy[a] == 0.0 {
                        continue;
                    }
                    for c in 0..dim {
                        s[[a, c]] += gy[a] * brow[c];
                    }
                }
            }
            let mut m = Array2::<f64>::zeros((r, dim));
            for a in 0..r {
                let row = s.row(a).to_owned();
                let solved = linalg::cholesky_solve(l, &row);
                for c in 0..dim {
                    m[[a, c]] = solved[c] / (n as f64 * jn);
                }
            }
            m_terms.push(m);
        }
        HnAtTheta {
            base: self,
            m_terms,
        }
    }
}

/// ĥ_n evaluation pieces at one θ.
pub struct HnAtTheta<'a> {
    base: &'a HnComponents,
    m_terms: Vec<Array2<f64>>,
}

impl HnAtTheta<'_> {
    /// ĥ_n(y_i, x_i; θ) for respondent i, an r × dim matrix.
    pub fn h_hat(&self, i: usize, data: &Dataset) -> Result<Array2<f64>> {
        if !data.delta(i) {
            return Err(SqriError::InvalidInput(format!(
                "h_n is defined for respondents; unit {i} is missing"
            )));
        }
        let (r, dim) = (self.m_terms[0].nrows(), self.m_terms[0].ncols());
        let mut h = Array2::<f64>::zeros((r, dim));
        for (j, m) in self.m_terms.iter().enumerate() {
            let e = data.y(i) - self.base.fitted[j][i];
            let psi = self.base.taus[j] - if e < 0.0 { 1.0 } else { 0.0 };
            h.scaled_add(psi, m);
        }
        Ok(h)
    }

    fn basis_row(&self, i: usize) -> &Array1<f64> {
        &self.base.basis_rows[i]
    }
}

/// Single-unit ĥ_n; prefer [`HnComponents`] when evaluating many units.
pub fn h_hat(
    i: usize,
    system: &dyn MomentSystem,
    theta: &[f64],
    data: &Dataset,
    imp: &FractionalImputation,
    config: &KernelConfig,
) -> Result<Array2<f64>> {
    HnComponents::prepare(data, imp, config)?
        .at_theta(system, theta, data)
        .h_hat(i, data)
}

/// ξ̂_i(θ); `hn` carries the precomputed correction pieces.
pub fn xi_hat(
    i: usize,
    system: &dyn MomentSystem,
    theta: &[f64],
    data: &Dataset,
    imp: &FractionalImputation,
    hn: &HnAtTheta,
) -> Result<Array1<f64>> {
    let x = data.x_row(i);
    if data.delta(i) {
        let mut xi = system.g(data.y(i), &x, theta);
        let c_p = data.missing_fraction();
        if c_p > 0.0 {
            let h = hn.h_hat(i, data)?;
            let hb = h.dot(hn.basis_row(i));
            xi.scaled_add(c_p, &hb);
        }
        Ok(xi)
    } else {
        // the g(y_i, ·) terms cancel; only the fractional average remains
        let values = imp
            .values(i)
            .ok_or_else(|| SqriError::InvalidInput(format!("unit {i} not imputed")))?;
        let mut mu = Array1::<f64>::zeros(system.r());
        for &y_star in values {
            mu += &system.g(y_star, &x, theta);
        }
        Ok(mu / values.len() as f64)
    }
}

/// V̂_G(θ) with a prepared [`HnComponents`] cache.
pub fn v_g_hat_cached(
    system: &dyn MomentSystem,
    theta: &[f64],
    data: &Dataset,
    imp: &FractionalImputation,
    hn: Option<&HnComponents>,
) -> Result<Array2<f64>> {
    let n = data.n();
    if n < 2 {
        return Err(SqriError::InvalidInput(
            "variance needs at least two units".into(),
        ));
    }
    let r = system.r();
    let hn_at = hn.map(|hn| hn.at_theta(system, theta, data));

    let mut xis = Vec::with_capacity(n);
    for i in 0..n {
        let xi = match &hn_at {
            Some(hn_at) => xi_hat(i, system, theta, data, imp, hn_at)?,
            None => system.g(data.y(i), &data.x_row(i), theta),
        };
        if xi.iter().any(|v| !v.is_finite()) {
            return Err(SqriError::MomentOverflow { index: i });
        }
        xis.push(xi);
    }
    let mut mean = Array1::<f64>::zeros(r);
    for xi in &xis {
        mean += xi;
    }
    mean /= n as f64;
    let mut v = Array2::<f64>::zeros((r, r));
    for xi in &xis {
        let c = xi - &mean;
        for a in 0..r {
            for b in a..r {
                v[[a, b]] += c[a] * c[b];
            }
        }
    }
    for a in 0..r {
        for b in a..r {
            v[[a, b]] /= (n - 1) as f64;
            v[[b, a]] = v[[a, b]];
        }
    }
    Ok(v)
}

/// V̂_G(θ): n-1 denominator sample covariance of the ξ̂_i.
pub fn v_g_hat(
    system: &dyn MomentSystem,
    theta: &[f64],
    data: &Dataset,
    imp: &FractionalImputation,
    config: &KernelConfig,
) -> Result<Array2<f64>> {
    let hn = if data.n_missing() > 0 {
        Some(HnComponents::prepare(data, imp, config)?)
    } else {
        None
    };
    v_g_hat_cached(system, theta, data, imp, hn.as_ref())
}

/// Γ̂(θ): average θ-derivative of the augmented estimating function.
pub fn gamma_hat(
    system: &dyn MomentSystem,
    theta: &[f64],
    data: &Dataset,
    imp: &FractionalImputation,
) -> Result<Array2<f64>> {
    augmented_moment_jacobian(system, data, imp, theta)
}

/// Unweighted sandwich, scaled by n⁻¹:
/// n⁻¹ (Γ̂ᵀΓ̂)⁻¹ Γ̂ᵀ V̂_G Γ̂ (Γ̂ᵀΓ̂)⁻¹.
pub fn sandwich_unweighted(
    gamma: &Array2<f64>,
    v_g: &Array2<f64>,
    n: usize,
) -> Result<Array2<f64>> {
    let d = gamma.ncols();
    let gtg = gamma.t().dot(gamma);
    let l = linalg::cholesky(&gtg).ok_or_else(|| {
        SqriError::WeightMatrixDegenerate("Gamma'Gamma singular in the sandwich".into())
    })?;
    let core = gamma.t().dot(&v_g.dot(gamma));
    // (GtG)^{-1} core (GtG)^{-1}, column by column
    let mut half = Array2::<f64>::zeros((d, d));
    for c in 0..d {
        let col = core.column(c).to_owned();
        let x = linalg::cholesky_solve(&l, &col);
        half.column_mut(c).assign(&x);
    }
    let mut out = Array2::<f64>::zeros((d, d));
    for rrow in 0..d {
        let row = half.row(rrow).to_owned();
        let x = linalg::cholesky_solve(&l, &row);
        out.row_mut(rrow).assign(&x);
    }
    Ok(out / n as f64)
}

/// Weighted sandwich, scaled by n⁻¹: n⁻¹ {Γ̂ᵀ V̂_G⁻¹ Γ̂}⁻¹.
pub fn sandwich_weighted(gamma: &Array2<f64>, v_g: &Array2<f64>, n: usize) -> Result<Array2<f64>> {
    let d = gamma.ncols();
    let w = linalg::inverse_spd_floored(v_g, 1e-10)?;
    let a = gamma.t().dot(&w.dot(gamma));
    let l = linalg::cholesky(&a).ok_or_else(|| {
        SqriError::WeightMatrixDegenerate("Gamma rank-deficient in the weighted sandwich".into())
    })?;
    let mut inv = Array2::<f64>::zeros((d, d));
    for c in 0..d {
        let mut e = Array1::<f64>::zeros(d);
        e[c] = 1.0;
        let x = linalg::cholesky_solve(&l, &e);
        inv.column_mut(c).assign(&x);
    }
    Ok(inv / n as f64)
}

/// The assembled variance report for one estimate.
#[derive(Debug, Clone)]
pub struct VarianceEstimate {
    pub v_g_hat: Array2<f64>,
    pub gamma_hat: Array2<f64>,
    /// Variance matrix of θ̂ (the sandwich already divided by n).
    pub sigma_hat: Array2<f64>,
    pub standard_errors: Array1<f64>,
    pub c_p_hat: f64,
}

/// Assemble V̂_G, Γ̂ and the requested sandwich at θ.
pub fn estimate_variance(
    system: &dyn MomentSystem,
    theta: &[f64],
    data: &Dataset,
    imp: &FractionalImputation,
    config: &KernelConfig,
    weighted: bool,
) -> Result<VarianceEstimate> {
    let hn = if data.n_missing() > 0 {
        Some(HnComponents::prepare(data, imp, config)?)
    } else {
        None
    };
    estimate_variance_cached(system, theta, data, imp, hn.as_ref(), weighted)
}

/// As [`estimate_variance`] with a prepared kernel cache.
pub fn estimate_variance_cached(
    system: &dyn MomentSystem,
    theta: &[f64],
    data: &Dataset,
    imp: &FractionalImputation,
    hn: Option<&HnComponents>,
    weighted: bool,
) -> Result<VarianceEstimate> {
    let v_g = v_g_hat_cached(system, theta, data, imp, hn)?;
    let gamma = gamma_hat(system, theta, data, imp)?;
    let sigma = if weighted {
        sandwich_weighted(&gamma, &v_g, data.n())?
    } else {
        sandwich_unweighted(&gamma, &v_g, data.n())?
    };
    let mut se = Array1::<f64>::zeros(sigma.nrows());
    for k in 0..sigma.nrows() {
        let v = sigma[[k, k]];
        if v < -1e-12 {
            return Err(SqriError::WeightMatrixDegenerate(format!(
                "negative variance {v} for parameter {k}"
            )));
        }
        se[k] = v.max(0.0).sqrt();
    }
    Ok(VarianceEstimate {
        v_g_hat: v_g,
        gamma_hat: gamma,
        sigma_hat: sigma,
        standard_errors: se,
        c_p_hat: data.missing_fraction(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CiMethod {
    Normal,
    Bootstrap,
}

impl std::fmt::Display for CiMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CiMethod::Normal => write!(f, "normal"),
            CiMethod::Bootstrap => write!(f, "bootstrap"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConfidenceInterval {
    pub parameter: usize,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub method: CiMethod,
}

impl ConfidenceInterval {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }
}

/// Normal-approximation intervals θ̂_k ± z_{(1+level)/2} √Σ̂_kk, with Σ̂
/// already carrying the n⁻¹ scaling.
pub fn normal_ci(
    theta_hat: &[f64],
    sigma_hat: &Array2<f64>,
    level: f64,
) -> Result<Vec<ConfidenceInterval>> {
    if !(level > 0.0 && level < 1.0) {
        return Err(SqriError::InvalidInput(format!(
            "confidence level {level} outside (0,1)"
        )));
    }
    let z = stats::normal_quantile(0.5 * (1.0 + level))?;
    let mut out = Vec::with_capacity(theta_hat.len());
    for (k, &t) in theta_hat.iter().enumerate() {
        let v = sigma_hat[[k, k]];
        if v < -1e-12 {
            return Err(SqriError::InvalidInput(format!(
                "negative variance {v} for parameter {k}"
            )));
        }
        let hw = z * v.max(0.0).sqrt();
        out.push(ConfidenceInterval {
            parameter: k,
            lower: t - hw,
            upper: t + hw,
            level,
            method: CiMethod::Normal,
        });
    }
    Ok(out)
}

/// Percentile bootstrap over resamples of the data rows.
///
/// `estimate` maps a resampled dataset and a replicate seed to a parameter
/// vector; replicates run in parallel on isolated streams and failures are
/// tolerated up to 20%.
pub fn bootstrap_percentile(
    data: &Dataset,
    b: usize,
    seed: u64,
    level: f64,
    estimate: &(dyn Fn(&Dataset, u64) -> Result<Array1<f64>> + Sync),
) -> Result<Vec<ConfidenceInterval>> {
    if b < 50 {
        return Err(SqriError::InvalidInput(format!(
            "need at least 50 bootstrap replicates, got {b}"
        )));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(SqriError::InvalidInput(format!(
            "confidence level {level} outside (0,1)"
        )));
    }
    let n = data.n();
    let draws: Vec<Option<Array1<f64>>> = (0..b)
        .into_par_iter()
        .map(|rep| {
            use rand::Rng;
            let mut rng = rng::stream(seed, tag::BOOTSTRAP, rep as u64);
            let indices: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let resampled = data.resample(&indices).ok()?;
            let rep_seed = rng::derive_seed(seed, tag::BOOTSTRAP, (rep as u64) << 1 | 1);
            estimate(&resampled, rep_seed).ok()
        })
        .collect();

    let ok: Vec<&Array1<f64>> = draws.iter().flatten().collect();
    let failed = b - ok.len();
    if failed * 5 > b {
        return Err(SqriError::BootstrapFailures { failed, total: b });
    }
    let d = ok
        .first()
        .map(|v| v.len())
        .ok_or(SqriError::BootstrapFailures { failed, total: b })?;
    let lo_q = 0.5 * (1.0 - level);
    let hi_q = 0.5 * (1.0 + level);
    let mut out = Vec::with_capacity(d);
    for k in 0..d {
        let mut vals: Vec<f64> = ok.iter().map(|v| v[k]).collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        out.push(ConfidenceInterval {
            parameter: k,
            lower: stats::quantile_sorted(&vals, lo_q),
            upper: stats::quantile_sorted(&vals, hi_q),
            level,
            method: CiMethod::Bootstrap,
        });
    }
    Ok(out)
}

/// Percentile bootstrap for the SQRI-GMM estimator: resample units with
/// replacement, re-impute with fresh seeds (the smoothing parameter stays at
/// the original sample's selection), re-estimate, and take the percentile
/// interval of the replicate estimates.
pub fn bootstrap_ci(
    data: &Dataset,
    fit_config: &crate::quantile::FitConfig,
    j: usize,
    b: usize,
    seed: u64,
    level: f64,
) -> Result<Vec<ConfidenceInterval>> {
    let mut boot_config = fit_config.clone();
    if boot_config.fixed_lambda.is_none() {
        let imp = crate::impute::sqri_impute(data, fit_config, j, seed)?;
        boot_config.fixed_lambda = Some(imp.lambda);
    }
    bootstrap_percentile(data, b, seed, level, &|d, s| {
        crate::estimate::sqri_point_estimate(d, &boot_config, j, s)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gmm::FiveMoments;
    use crate::quantile::{QuantileFit, SplineDesign};
    use approx::assert_abs_diff_eq;
    use ndarray::{arr1, arr2};

    fn dummy_fit(coefficients: Array1<f64>, tau: f64) -> QuantileFit {
        let grid = crate::spline::make_knots(5, 3).unwrap();
        let design = SplineDesign::new(grid, 1, 2).unwrap();
        QuantileFit {
            tau,
            coefficients,
            lambda: 0.0,
            objective: 0.0,
            iterations: 0,
            converged: true,
            design,
            smoothed_objectives: vec![],
        }
    }

    #[test]
    fn kernel_single_respondent_at_its_own_point() {
        let data = Dataset::complete(arr2(&[[0.4]]), arr1(&[1.3])).unwrap();
        let cfg = KernelConfig::new(0.2, vec![0.3]).unwrap();
        let f = kernel_conditional_density(&[0.4], 1.3, &data, &cfg).unwrap();
        assert_abs_diff_eq!(f, 1.0 / (0.2 * stats::SQRT_2PI), epsilon = 1e-12);
    }

    #[test]
    fn kernel_tail_vanishes() {
        let data = Dataset::complete(arr2(&[[0.4]]), arr1(&[1.0])).unwrap();
        let cfg = KernelConfig::new(0.1, vec![0.3]).unwrap();
        let f = kernel_conditional_density(&[0.4], 3.0, &data, &cfg).unwrap();
        assert!(f < 1e-8, "tail value {f}");
    }

    #[test]
    fn kernel_requires_respondents() {
        let data = Dataset::new(arr2(&[[0.4]]), arr1(&[f64::NAN]), vec![false]).unwrap();
        let cfg = KernelConfig::new(0.1, vec![0.3]).unwrap();
        assert!(kernel_conditional_density(&[0.4], 0.0, &data, &cfg).is_err());
    }

    #[test]
    fn kernel_rejects_bad_bandwidths() {
        assert!(KernelConfig::new(0.0, vec![0.1]).is_err());
        assert!(KernelConfig::new(0.1, vec![-0.2]).is_err());
    }

    #[test]
    fn phi_all_missing_is_zero() {
        let data = Dataset::new(
            arr2(&[[0.2], [0.8]]),
            arr1(&[f64::NAN, f64::NAN]),
            vec![false, false],
        )
        .unwrap();
        let fit = dummy_fit(Array1::zeros(8), 0.5);
        let cfg = KernelConfig::new(0.1, vec![0.1]).unwrap();
        let phi = phi_hat(&fit, &data, &cfg).unwrap();
        assert!(phi.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn phi_single_respondent_rank_one() {
        let data = Dataset::new(
            arr2(&[[0.45], [0.9]]),
            arr1(&[0.7, f64::NAN]),
            vec![true, false],
        )
        .unwrap();
        let fit = dummy_fit(Array1::zeros(8), 0.5);
        let cfg = KernelConfig::new(0.2, vec![0.2]).unwrap();
        let phi = phi_hat(&fit, &data, &cfg).unwrap();
        let b = fit.design.basis_row(&[0.45]).unwrap();
        let f = kernel_conditional_density(&[0.45], 0.0, &data, &cfg).unwrap();
        let want_trace = f * b.dot(&b) / 2.0;
        assert_abs_diff_eq!(phi.diag().sum(), want_trace, epsilon = 1e-12);
        // rank 1: phi = c vvT, so phi^2 trace equals (trace)^2
        let phi2 = phi.dot(&phi);
        assert_abs_diff_eq!(phi2.diag().sum(), want_trace * want_trace, epsilon = 1e-12);
        assert!(linalg::asymmetry(&phi) < 1e-15);
    }

    fn small_imputed_dataset() -> (Dataset, FractionalImputation) {
        use rand::Rng;
        let n = 60;
        let mut rng = crate::rng::stream(31, crate::rng::tag::COVARIATES, 0);
        let mut x = ndarray::Array2::<f64>::zeros((n, 1));
        let mut y = ndarray::Array1::<f64>::zeros(n);
        let mut delta = Vec::with_capacity(n);
        for i in 0..n {
            let xi: f64 = rng.random();
            x[[i, 0]] = xi;
            y[i] = 1.0 + 2.0 * (xi - 0.5) + 0.1 * (rng.random::<f64>() - 0.5);
            delta.push(rng.random::<f64>() > 0.2);
        }
        let data = Dataset::new(x, y, delta).unwrap();
        let imp = crate::impute::sqri_impute(&data, &crate::FitConfig::default(), 5, 7).unwrap();
        (data, imp)
    }

    #[test]
    fn h_hat_zero_rows_where_moment_ignores_y() {
        let (data, imp) = small_imputed_dataset();
        let cfg = KernelConfig::silverman(&data).unwrap();
        let theta = [0.5, 1.0, 0.3, 0.6, 0.5];
        let sys = FiveMoments;
        let i = data.respondent_indices()[0];
        let h = h_hat(i, &sys, &theta, &data, &imp, &cfg).unwrap();
        // rows 0 and 2 belong to x-only moments
        assert!(h.row(0).iter().all(|&v| v == 0.0));
        assert!(h.row(2).iter().all(|&v| v == 0.0));
        assert!(h.row(1).iter().any(|&v| v != 0.0));
    }

    #[test]
    fn h_hat_single_term_matches_direct_formula() {
        // one respondent, J = 1: the double sum collapses to one term
        let data = Dataset::complete(arr2(&[[0.5]]), arr1(&[0.9])).unwrap();
        let fit = dummy_fit(Array1::from_elem(8, 0.4), 0.3);
        let imp = FractionalImputation {
            taus: vec![0.3],
            fits: vec![fit],
            imputed: Default::default(),
            seed: 0,
            lambda: 0.0,
        };
        let cfg = KernelConfig::new(0.25, vec![0.25]).unwrap();
        let sys = FiveMoments;
        let theta = [0.5, 1.0, 0.3, 0.6, 0.0];
        let h = h_hat(0, &sys, &theta, &data, &imp, &cfg).unwrap();

        // direct evaluation of the displayed formula
        let b = imp.fits[0].design.basis_row(&[0.5]).unwrap();
        let qhat = b.dot(&imp.fits[0].coefficients);
        let f = kernel_conditional_density(&[0.5], qhat, &data, &cfg).unwrap();
        let dim = 8;
        let mut hmat = Array2::<f64>::zeros((dim, dim));
        for k in 0..dim {
            for l in 0..dim {
                hmat[[k, l]] = f * b[k] * b[l];
            }
        }
        let ridge = HN_RIDGE_REL * hmat.diag().sum();
        for k in 0..dim {
            hmat[[k, k]] += ridge;
        }
        let gy = sys.dg_dy(qhat, &[0.5], &theta);
        let e = 0.9 - qhat;
        let psi = 0.3 - if e < 0.0 { 1.0 } else { 0.0 };
        let l = linalg::cholesky(&hmat).unwrap();
        let hinv_b = linalg::cholesky_solve(&l, &b);
        // the ridge-floored H is rank one here, so the solve is only accurate
        // to cond(H) * macheps; compare in relative terms
        for a in 0..5 {
            for c in 0..dim {
                let want = gy[a] * hinv_b[c] * psi;
                assert!(
                    (h[[a, c]] - want).abs() <= 1e-5 * (1.0 + want.abs()),
                    "({a},{c}): {} vs {want}",
                    h[[a, c]]
                );
            }
        }
        // the xi correction contracts h against B(x_1)
        let hb = h.dot(&b);
        let scalar = b.dot(&hinv_b) * psi;
        for a in 0..5 {
            assert!((hb[a] - gy[a] * scalar).abs() <= 1e-5 * (1.0 + (gy[a] * scalar).abs()));
        }
    }

    #[test]
    fn xi_reduces_to_g_without_missing() {
        use rand::Rng;
        let n = 40;
        let mut rng = crate::rng::stream(3, crate::rng::tag::COVARIATES, 5);
        let x = ndarray::Array2::from_shape_fn((n, 1), |_| rng.random());
        let y = ndarray::Array1::from_shape_fn(n, |_| rng.random::<f64>() + 0.5);
        let data = Dataset::complete(x, y).unwrap();
        let imp = FractionalImputation {
            taus: vec![],
            fits: vec![],
            imputed: Default::default(),
            seed: 0,
            lambda: 0.0,
        };
        let sys = FiveMoments;
        let theta = [0.5, 1.0, 0.3, 0.3, 0.1];
        let cfg = KernelConfig::silverman(&data).unwrap();
        let v = v_g_hat(&sys, &theta, &data, &imp, &cfg).unwrap();
        // plain sample covariance of g
        let mut gs = Vec::new();
        for i in 0..n {
            gs.push(sys.g(data.y(i), &data.x_row(i), &theta));
        }
        let mut mean = Array1::<f64>::zeros(5);
        for g in &gs {
            mean += g;
        }
        mean /= n as f64;
        let mut want = Array2::<f64>::zeros((5, 5));
        for g in &gs {
            let c = g - &mean;
            for a in 0..5 {
                for b in 0..5 {
                    want[[a, b]] += c[a] * c[b];
                }
            }
        }
        want /= (n - 1) as f64;
        for a in 0..5 {
            for b in 0..5 {
                assert_abs_diff_eq!(v[[a, b]], want[[a, b]], epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn xi_for_missing_unit_is_fractional_average() {
        let (data, imp) = small_imputed_dataset();
        let cfg = KernelConfig::silverman(&data).unwrap();
        let sys = FiveMoments;
        let theta = [0.5, 1.0, 0.3, 0.6, 0.5];
        let hn = HnComponents::prepare(&data, &imp, &cfg).unwrap();
        let hn_at = hn.at_theta(&sys, &theta, &data);
        let i = data.missing_indices()[0];
        let xi = xi_hat(i, &sys, &theta, &data, &imp, &hn_at).unwrap();
        let values = imp.values(i).unwrap();
        let mut want = Array1::<f64>::zeros(5);
        for &v in values {
            want += &sys.g(v, &data.x_row(i), &theta);
        }
        want /= values.len() as f64;
        for k in 0..5 {
            assert_abs_diff_eq!(xi[k], want[k], epsilon = 1e-14);
        }
    }

    #[test]
    fn respondent_correction_nonzero_with_missingness() {
        let (data, imp) = small_imputed_dataset();
        let cfg = KernelConfig::silverman(&data).unwrap();
        let sys = FiveMoments;
        let theta = [0.5, 1.0, 0.3, 0.6, 0.5];
        let hn = HnComponents::prepare(&data, &imp, &cfg).unwrap();
        let hn_at = hn.at_theta(&sys, &theta, &data);
        let i = data.respondent_indices()[0];
        let xi = xi_hat(i, &sys, &theta, &data, &imp, &hn_at).unwrap();
        let g = sys.g(data.y(i), &data.x_row(i), &theta);
        let diff: f64 = (&xi - &g).iter().map(|v| v.abs()).sum();
        assert!(diff > 0.0, "correction term vanished");
    }

    #[test]
    fn v_g_symmetric_psd_on_simulated_data() {
        let (data, imp) = small_imputed_dataset();
        let cfg = KernelConfig::silverman(&data).unwrap();
        let sys = FiveMoments;
        let theta = [0.5, 1.0, 0.3, 0.6, 0.5];
        let v = v_g_hat(&sys, &theta, &data, &imp, &cfg).unwrap();
        assert!(linalg::asymmetry(&v) < 1e-12);
        let (vals, _) = linalg::sym_eigen(&v);
        let tr = v.diag().sum();
        assert!(vals.iter().all(|&l| l >= -1e-10 * tr));
    }

    #[test]
    fn sandwich_identities() {
        let eye = Array2::<f64>::eye(3);
        let s = sandwich_unweighted(&eye, &eye, 100).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 0.01 } else { 0.0 };
                assert_abs_diff_eq!(s[[i, j]], want, epsilon = 1e-14);
            }
        }
        let sw = sandwich_weighted(&eye, &eye, 100).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 0.01 } else { 0.0 };
                assert_abs_diff_eq!(sw[[i, j]], want, epsilon = 1e-10);
            }
        }
        let zero = Array2::<f64>::zeros((3, 3));
        let s0 = sandwich_unweighted(&eye, &zero, 50).unwrap();
        assert!(s0.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sandwiches_agree_when_square() {
        // a full-rank square Gamma: weighted and unweighted coincide
        let gamma = arr2(&[[2.0, 0.3], [-0.4, 1.5]]);
        let v = arr2(&[[1.2, 0.2], [0.2, 0.9]]);
        let a = sandwich_unweighted(&gamma, &v, 10).unwrap();
        let b = sandwich_weighted(&gamma, &v, 10).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!(a[[i, j]], b[[i, j]], epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn normal_ci_basics() {
        let sigma = Array2::<f64>::eye(2);
        let cis = normal_ci(&[0.0, 5.0], &sigma, 0.95).unwrap();
        assert_abs_diff_eq!(cis[0].upper, 1.959964, epsilon = 1e-6);
        assert_abs_diff_eq!(cis[0].lower, -1.959964, epsilon = 1e-6);
        assert!(cis[1].contains(5.0));

        let zero = Array2::<f64>::zeros((1, 1));
        let cis = normal_ci(&[2.0], &zero, 0.95).unwrap();
        assert_eq!(cis[0].lower, 2.0);
        assert_eq!(cis[0].upper, 2.0);

        let mut neg = Array2::<f64>::zeros((1, 1));
        neg[[0, 0]] = -1.0;
        assert!(normal_ci(&[0.0], &neg, 0.95).is_err());
        assert!(normal_ci(&[0.0], &sigma, 1.0).is_err());
    }

    #[test]
    fn bootstrap_degenerate_sample_zero_width() {
        // two identical rows: every resample is identical, so the percentile
        // interval collapses
        let data = Dataset::complete(arr2(&[[0.5], [0.5]]), arr1(&[1.5, 1.5])).unwrap();
        let mean_y = |d: &Dataset, _seed: u64| -> Result<Array1<f64>> {
            let m = (0..d.n()).map(|i| d.y(i)).sum::<f64>() / d.n() as f64;
            Ok(arr1(&[m]))
        };
        let cis = bootstrap_percentile(&data, 60, 9, 0.95, &mean_y).unwrap();
        assert_eq!(cis[0].lower, 1.5);
        assert_eq!(cis[0].upper, 1.5);
        assert_eq!(cis[0].width(), 0.0);
    }

    #[test]
    fn bootstrap_rejects_small_b_and_total_failure() {
        let data = Dataset::complete(arr2(&[[0.5], [0.4]]), arr1(&[1.0, 2.0])).unwrap();
        let fail = |_: &Dataset, _: u64| -> Result<Array1<f64>> {
            Err(SqriError::InvalidInput("nope".into()))
        };
        assert!(bootstrap_percentile(&data, 10, 1, 0.95, &fail).is_err());
        let err = bootstrap_percentile(&data, 60, 1, 0.95, &fail).unwrap_err();
        assert!(matches!(err, SqriError::BootstrapFailures { .. }));
    }

    #[test]
    fn sqri_bootstrap_ci_orders_and_brackets() {
        let (data, _) = small_imputed_dataset();
        let cis = bootstrap_ci(&data, &crate::FitConfig::default(), 4, 50, 3, 0.95).unwrap();
        assert_eq!(cis.len(), 5);
        for ci in &cis {
            assert!(ci.lower <= ci.upper);
        }
        // mu_y of the linear design sits inside its interval
        assert!(cis[1].contains(1.0), "{:?}", (cis[1].lower, cis[1].upper));
    }

    #[test]
    fn bootstrap_orders_percentiles() {
        use rand::Rng;
        let n = 30;
        let mut rng = crate::rng::stream(17, crate::rng::tag::NOISE, 0);
        let x = ndarray::Array2::from_shape_fn((n, 1), |_| rng.random());
        let y = ndarray::Array1::from_shape_fn(n, |_| rng.random::<f64>() * 3.0);
        let data = Dataset::complete(x, y).unwrap();
        let mean_y = |d: &Dataset, _seed: u64| -> Result<Array1<f64>> {
            let m = (0..d.n()).map(|i| d.y(i)).sum::<f64>() / d.n() as f64;
            Ok(arr1(&[m]))
        };
        let cis = bootstrap_percentile(&data, 200, 4, 0.95, &mean_y).unwrap();
        assert!(cis[0].lower <= cis[0].upper);
        assert!(cis[0].width() > 0.0);
    }
}
