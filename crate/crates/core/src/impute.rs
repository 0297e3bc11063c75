//! Fractional imputation by quantile prediction.
//!
//! Three steps: draw J uniforms τ_j, fit one penalized quantile regression
//! per τ_j on the respondents, then fill every missing unit i with the J
//! values q̂_{τ_j}(x_i). The same J fits serve all missing units; the draws
//! and therefore the whole imputation are reproducible from the seed.

use crate::dataset::Dataset;
use crate::error::{Result, SqriError};
use crate::gmm::MomentSystem;
use crate::quantile::{
    fit_with_design, respondent_design, select_lambda_gacv_with_design, FitConfig, QuantileFit,
};
use crate::rng::{self, tag};
use ndarray::Array1;
use rayon::prelude::*;
use std::collections::BTreeMap;

/// J imputed responses per missing unit, tied to shared uniform draws.
#[derive(Debug, Clone)]
pub struct FractionalImputation {
    pub taus: Vec<f64>,
    pub fits: Vec<QuantileFit>,
    /// Missing-unit index -> (y*_{i1}, ..., y*_{iJ}).
    pub imputed: BTreeMap<usize, Vec<f64>>,
    pub seed: u64,
    /// Smoothing parameter used by all J fits.
    pub lambda: f64,
}

impl FractionalImputation {
    pub fn j(&self) -> usize {
        self.taus.len()
    }

    pub fn all_converged(&self) -> bool {
        self.fits.iter().all(|f| f.converged)
    }

    /// Imputed values of a missing unit.
    pub fn values(&self, unit: usize) -> Option<&[f64]> {
        self.imputed.get(&unit).map(|v| v.as_slice())
    }

    /// Mean of the J imputed values per missing unit.
    pub fn unit_means(&self) -> BTreeMap<usize, f64> {
        self.imputed
            .iter()
            .map(|(&i, v)| (i, v.iter().sum::<f64>() / v.len() as f64))
            .collect()
    }
}

/// Draw J independent Uniform(0,1) values, reproducibly from `seed`.
pub fn draw_taus(j: usize, seed: u64) -> Result<Vec<f64>> {
    if j == 0 {
        return Err(SqriError::InvalidInput(
            "need at least one imputed value per missing unit".into(),
        ));
    }
    let mut rng = rng::stream(seed, tag::TAUS, 0);
    Ok((0..j).map(|_| rng::uniform_open01(&mut rng)).collect())
}

/// Run the three-step fractional imputation.
pub fn sqri_impute(
    data: &Dataset,
    config: &FitConfig,
    j: usize,
    seed: u64,
) -> Result<FractionalImputation> {
    config.validate()?;
    let design = config.design(data.d_x())?;
    let needed = 2 * design.dim();
    if data.n_respondents() < needed {
        return Err(SqriError::InsufficientRespondents {
            needed,
            found: data.n_respondents(),
        });
    }
    let taus = draw_taus(j, seed)?;
    let (bmat, y) = respondent_design(data, &design)?;

    let lambda = match config.fixed_lambda {
        Some(l) => l,
        None => select_lambda_gacv_with_design(&bmat, &y, &design, 0.5, config)?,
    };

    // the J fits are independent; draw order fixes the output ordering
    let fits: Vec<QuantileFit> = taus
        .par_iter()
        .map(|&tau| fit_with_design(&bmat, &y, &design, tau, lambda, config))
        .collect::<Result<Vec<_>>>()?;

    let mut imputed = BTreeMap::new();
    for i in data.missing_indices() {
        let x = data.x_row(i);
        let mut values = Vec::with_capacity(j);
        for fit in &fits {
            values.push(fit.predict_row(&x)?);
        }
        imputed.insert(i, values);
    }

    Ok(FractionalImputation {
        taus,
        fits,
        imputed,
        seed,
        lambda,
    })
}

/// The augmented estimating function
/// Gₙ(θ) = n⁻¹ Σ_i { δ_i g(y_i, x_i; θ) + (1-δ_i) J⁻¹ Σ_j g(y*_{ij}, x_i; θ) }.
pub fn augmented_moment(
    system: &dyn MomentSystem,
    data: &Dataset,
    imp: &FractionalImputation,
    theta: &[f64],
) -> Result<Array1<f64>> {
    let n = data.n();
    let mut acc = Array1::<f64>::zeros(system.r());
    for i in 0..n {
        let x = data.x_row(i);
        if data.delta(i) {
            let g = system.g(data.y(i), &x, theta);
            if g.iter().any(|v| !v.is_finite()) {
                return Err(SqriError::MomentOverflow { index: i });
            }
            acc += &g;
        } else {
            let values = imp
                .values(i)
                .ok_or_else(|| SqriError::InvalidInput(format!("unit {i} not imputed")))?;
            let jn = values.len() as f64;
            let mut inner = Array1::<f64>::zeros(system.r());
            for &y_star in values {
                let g = system.g(y_star, &x, theta);
                if g.iter().any(|v| !v.is_finite()) {
                    return Err(SqriError::MomentOverflow { index: i });
                }
                inner += &g;
            }
            acc += &(inner / jn);
        }
    }
    Ok(acc / n as f64)
}

/// θ-Jacobian of the augmented estimating function (the Γ̂ plug-in).
pub fn augmented_moment_jacobian(
    system: &dyn MomentSystem,
    data: &Dataset,
    imp: &FractionalImputation,
    theta: &[f64],
) -> Result<ndarray::Array2<f64>> {
    let n = data.n();
    let mut acc = ndarray::Array2::<f64>::zeros((system.r(), system.d_theta()));
    for i in 0..n {
        let x = data.x_row(i);
        if data.delta(i) {
            let dg = system.dg_dtheta(data.y(i), &x, theta);
            if dg.iter().any(|v| !v.is_finite()) {
                return Err(SqriError::MomentOverflow { index: i });
            }
            acc += &dg;
        } else {
            let values = imp
                .values(i)
                .ok_or_else(|| SqriError::InvalidInput(format!("unit {i} not imputed")))?;
            let jn = values.len() as f64;
            let mut inner = ndarray::Array2::<f64>::zeros((system.r(), system.d_theta()));
            for &y_star in values {
                let dg = system.dg_dtheta(y_star, &x, theta);
                if dg.iter().any(|v| !v.is_finite()) {
                    return Err(SqriError::MomentOverflow { index: i });
                }
                inner += &dg;
            }
            acc += &(inner / jn);
        }
    }
    Ok(acc / n as f64)
}
