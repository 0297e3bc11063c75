//! End-to-end SQRI-GMM estimation: impute, optimize, and attach the
//! variance report.

use crate::dataset::Dataset;
use crate::error::Result;
use crate::gmm::{
    self, fractional_moment_root, gmm_unweighted, gmm_weighted, AugmentedConditions, GmmEstimate,
    GmmMode, GmmOptions,
};
use crate::impute::{sqri_impute, FractionalImputation};
use crate::quantile::FitConfig;
use crate::variance::{
    estimate_variance_cached, v_g_hat_cached, HnComponents, KernelConfig, VarianceEstimate,
};
use ndarray::Array1;

#[derive(Debug, Clone)]
pub struct SqriEstimate {
    pub theta: Array1<f64>,
    pub gmm: GmmEstimate,
    pub imputation: FractionalImputation,
    pub variance: Option<VarianceEstimate>,
}

/// Run the full SQRI-GMM pipeline on one dataset.
pub fn sqri_estimate(
    data: &Dataset,
    fit_config: &FitConfig,
    j: usize,
    seed: u64,
    mode: GmmMode,
    with_variance: bool,
) -> Result<SqriEstimate> {
    let imp = sqri_impute(data, fit_config, j, seed)?;
    let system = gmm::system_for(data);
    let init = gmm::initial_theta(data, &imp)?;
    let conditions = AugmentedConditions {
        system: system.as_ref(),
        data,
        imp: &imp,
    };
    let options = GmmOptions::default();
    let needs_kernel = with_variance || mode != GmmMode::Unweighted;
    // the kernel pieces of h_n do not depend on theta; build them once
    let hn = if needs_kernel && data.n_missing() > 0 {
        let kernel = KernelConfig::silverman(data)?;
        Some(HnComponents::prepare(data, &imp, &kernel)?)
    } else {
        None
    };
    let estimate = match mode {
        GmmMode::Unweighted => gmm_unweighted(&conditions, &system.bounds(), &init, &options)?,
        _ => {
            let vg =
                |theta: &[f64]| v_g_hat_cached(system.as_ref(), theta, data, &imp, hn.as_ref());
            gmm_weighted(&conditions, &vg, mode, &system.bounds(), &init, &options)?
        }
    };
    let variance = if with_variance {
        Some(estimate_variance_cached(
            system.as_ref(),
            estimate.theta_hat.as_slice().unwrap(),
            data,
            &imp,
            hn.as_ref(),
            mode != GmmMode::Unweighted,
        )?)
    } else {
        None
    };
    Ok(SqriEstimate {
        theta: estimate.theta_hat.clone(),
        gmm: estimate,
        imputation: imp,
        variance,
    })
}

/// SQRI point estimate only. The moment systems here are exactly identified,
/// so the GMM optimum is the root of the averaged moments and is computed in
/// closed form; bootstrap loops use this path.
pub fn sqri_point_estimate(
    data: &Dataset,
    fit_config: &FitConfig,
    j: usize,
    seed: u64,
) -> Result<Array1<f64>> {
    let imp = sqri_impute(data, fit_config, j, seed)?;
    let root = fractional_moment_root(data, &imp.imputed)?;
    Ok(Array1::from(root))
}
