//! Semiparametric quantile-regression imputation (SQRI) for missing
//! responses, GMM estimation over general estimating equations, sandwich and
//! bootstrap inference, baseline imputation estimators and a Monte Carlo
//! benchmarking harness.

pub mod baselines;
pub mod dataset;
pub mod error;
pub mod estimate;
pub mod figures;
pub mod gmm;
pub mod impute;
pub mod io;
pub mod linalg;
pub mod quantile;
pub mod rng;
pub mod sim;
pub mod spline;
pub mod stats;
pub mod variance;

pub use dataset::Dataset;
pub use error::{Result, SqriError};
pub use estimate::{sqri_estimate, sqri_point_estimate, SqriEstimate};
pub use gmm::{
    complete_closed_form, fractional_moment_root, gmm_unweighted, gmm_weighted, GmmEstimate,
    GmmMode, MomentSystem,
};
pub use impute::{augmented_moment, draw_taus, sqri_impute, FractionalImputation};
pub use quantile::{
    check_loss, fit_quantile, predict_quantile, select_lambda_gacv, FitConfig, QuantileFit,
    SplineDesign,
};
pub use sim::{case_study, coverage_study, run_mc, EstimatorKind, LogisticMissingness, SimModel};
pub use spline::{augment_bivariate, difference_matrix, eval_basis, make_knots, KnotGrid};
pub use variance::{
    bootstrap_ci, bootstrap_percentile, estimate_variance, kernel_conditional_density, normal_ci,
    CiMethod, ConfidenceInterval, KernelConfig, VarianceEstimate,
};
