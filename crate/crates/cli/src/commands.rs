//! Command implementations: simulate, impute, estimate, casestudy.

use crate::config::RunConfig;
use ndarray::Array1;
use sqri_core::baselines::{hdfi_estimate, npi_estimate, pfi_estimate, resp_estimator};
use sqri_core::gmm::GmmMode;
use sqri_core::io;
use sqri_core::rng::{self, tag};
use sqri_core::sim::{self, EstimatorKind};
use sqri_core::variance::{bootstrap_percentile, normal_ci, ConfidenceInterval};
use sqri_core::{Dataset, FractionalImputation, Result, SqriError};
use std::path::Path;

pub fn cmd_simulate(cfg: &RunConfig) -> Result<()> {
    let fit = cfg.fit_config();
    let baseline = cfg.baseline_config();
    let report = sim::run_mc(
        &cfg.models,
        &cfg.estimators,
        cfg.replicates,
        cfg.n,
        cfg.imputations,
        cfg.seed,
        &fit,
        &baseline,
    )?;
    io::atomic_write(
        &cfg.out.join("mc_report.csv"),
        io::mc_report_csv(&report).as_bytes(),
    )?;
    for model in &cfg.models {
        if let Some(svg) = sqri_core::figures::bias_ratio_svg(&report, model.name()) {
            io::atomic_write(
                &cfg.out
                    .join("figures")
                    .join(format!("bias_ratio_{}.svg", model.name())),
                svg.as_bytes(),
            )?;
        }
    }
    if cfg.coverage {
        let coverage = sim::coverage_study(
            &cfg.models,
            cfg.replicates,
            cfg.n,
            cfg.imputations,
            cfg.bootstrap,
            cfg.seed,
            cfg.level,
            &fit,
        )?;
        io::atomic_write(
            &cfg.out.join("coverage.csv"),
            io::coverage_csv(&coverage).as_bytes(),
        )?;
    }
    io::atomic_write(
        &cfg.out.join("manifest.txt"),
        cfg.manifest("simulate").as_bytes(),
    )?;
    println!(
        "wrote {} (replicates = {}, seed = {})",
        cfg.out.join("mc_report.csv").display(),
        cfg.replicates,
        cfg.seed
    );
    for row in &report.rows {
        println!(
            "{:<10} {:<6} {:<8} RBias {:>8.3}%  Var(x100) {:>8.4}",
            row.model, row.estimator, row.parameter, row.rbias_x100, row.variance_x100
        );
    }
    Ok(())
}

pub fn cmd_impute(data_path: &Path, cfg: &RunConfig) -> Result<()> {
    let data = io::read_dataset_csv(data_path)?;
    let imp = sqri_core::sqri_impute(&data, &cfg.fit_config(), cfg.imputations, cfg.seed)?;
    if !imp.all_converged() {
        eprintln!("warning: at least one quantile fit reached the iteration cap");
    }
    let out_path = cfg.out.join("imputations.csv");
    io::atomic_write(&out_path, io::imputation_csv(&imp).as_bytes())?;
    println!(
        "wrote {} ({} missing rows x {} draws, lambda = {})",
        out_path.display(),
        imp.imputed.len(),
        imp.j(),
        imp.lambda
    );
    Ok(())
}

/// Rebuild a FractionalImputation from the long-format file emitted by
/// `impute`: the taus pin the J fits, re-fitted deterministically on the
/// respondents; the file's values fill the imputation map.
fn imputation_from_file(
    data: &Dataset,
    cfg: &RunConfig,
    path: &Path,
) -> Result<FractionalImputation> {
    let (taus, values) = io::read_imputation_csv(path)?;
    if taus.is_empty() {
        return Err(SqriError::InvalidInput(format!(
            "{}: no imputed draws",
            path.display()
        )));
    }
    for (&unit, v) in &values {
        if unit >= data.n() || data.delta(unit) {
            return Err(SqriError::InvalidInput(format!(
                "imputation file row {unit} is not a missing unit of the dataset"
            )));
        }
        if v.len() != taus.len() {
            return Err(SqriError::InvalidInput(format!(
                "unit {unit} has {} draws, expected {}",
                v.len(),
                taus.len()
            )));
        }
    }
    for i in data.missing_indices() {
        if !values.contains_key(&i) {
            return Err(SqriError::InvalidInput(format!(
                "missing unit {i} absent from the imputation file"
            )));
        }
    }
    let fit_cfg = cfg.fit_config();
    let design = fit_cfg.design(data.d_x())?;
    let (bmat, y) = sqri_core::quantile::respondent_design(data, &design)?;
    let lambda = match fit_cfg.fixed_lambda {
        Some(l) => l,
        None => {
            sqri_core::quantile::select_lambda_gacv_with_design(&bmat, &y, &design, 0.5, &fit_cfg)?
        }
    };
    let fits = taus
        .iter()
        .map(|&tau| sqri_core::quantile::fit_with_design(&bmat, &y, &design, tau, lambda, &fit_cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(FractionalImputation {
        taus,
        fits,
        imputed: values,
        seed: cfg.seed,
        lambda,
    })
}

struct EstimateRow {
    parameter: &'static str,
    estimate: f64,
    std_error: Option<f64>,
    normal: Option<(f64, f64)>,
    bootstrap: Option<(f64, f64)>,
}

fn estimate_csv(rows: &[EstimateRow], method: &str) -> String {
    let mut out = String::from(
        "method,parameter,estimate,std_error,normal_lower,normal_upper,bootstrap_lower,bootstrap_upper\n",
    );
    let fmt_opt = |v: Option<f64>| v.map(io::fmt_g17).unwrap_or_default();
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            method,
            r.parameter,
            io::fmt_g17(r.estimate),
            fmt_opt(r.std_error),
            fmt_opt(r.normal.map(|c| c.0)),
            fmt_opt(r.normal.map(|c| c.1)),
            fmt_opt(r.bootstrap.map(|c| c.0)),
            fmt_opt(r.bootstrap.map(|c| c.1)),
        ));
    }
    out
}

fn ci_pair(cis: &[ConfidenceInterval], k: usize) -> Option<(f64, f64)> {
    cis.get(k).map(|c| (c.lower, c.upper))
}

pub fn cmd_estimate(data_path: &Path, cfg: &RunConfig, imputed: Option<&Path>) -> Result<()> {
    let data = io::read_dataset_csv(data_path)?;
    let system = sqri_core::gmm::system_for(&data);
    let names = system.names();
    let fit_cfg = cfg.fit_config();
    let baseline = cfg.baseline_config();
    let j = cfg.imputations;
    let est_seed = rng::derive_seed(cfg.seed, tag::ESTIMATOR, 0);

    let rows: Vec<EstimateRow> = match cfg.method {
        EstimatorKind::SqriGmm => {
            let (theta, variance, lambda) = match imputed {
                None => {
                    let est = sqri_core::sqri_estimate(
                        &data,
                        &fit_cfg,
                        j,
                        cfg.seed,
                        GmmMode::WeightedCu,
                        true,
                    )?;
                    let lambda = est.imputation.lambda;
                    (est.theta, est.variance.expect("variance requested"), lambda)
                }
                Some(path) => {
                    let imp = imputation_from_file(&data, cfg, path)?;
                    let lambda = imp.lambda;
                    let init = sqri_core::gmm::initial_theta(&data, &imp)?;
                    let kernel = sqri_core::KernelConfig::silverman(&data)?;
                    let hn = if data.n_missing() > 0 {
                        Some(sqri_core::variance::HnComponents::prepare(
                            &data, &imp, &kernel,
                        )?)
                    } else {
                        None
                    };
                    let conditions = sqri_core::gmm::AugmentedConditions {
                        system: system.as_ref(),
                        data: &data,
                        imp: &imp,
                    };
                    let vg = |theta: &[f64]| {
                        sqri_core::variance::v_g_hat_cached(
                            system.as_ref(),
                            theta,
                            &data,
                            &imp,
                            hn.as_ref(),
                        )
                    };
                    let est = sqri_core::gmm::gmm_weighted(
                        &conditions,
                        &vg,
                        GmmMode::WeightedCu,
                        &system.bounds(),
                        &init,
                        &Default::default(),
                    )?;
                    let variance = sqri_core::variance::estimate_variance_cached(
                        system.as_ref(),
                        est.theta_hat.as_slice().unwrap(),
                        &data,
                        &imp,
                        hn.as_ref(),
                        true,
                    )?;
                    (est.theta_hat, variance, lambda)
                }
            };
            let normal = normal_ci(theta.as_slice().unwrap(), &variance.sigma_hat, cfg.level)?;
            let mut boot_cfg = fit_cfg.clone();
            boot_cfg.fixed_lambda = Some(lambda);
            let boot_seed = rng::derive_seed(cfg.seed, tag::BOOTSTRAP, 0);
            let boot =
                bootstrap_percentile(&data, cfg.bootstrap, boot_seed, cfg.level, &|d, s| {
                    sqri_core::sqri_point_estimate(d, &boot_cfg, j, s)
                })?;
            (0..theta.len())
                .map(|k| EstimateRow {
                    parameter: names[k],
                    estimate: theta[k],
                    std_error: Some(variance.standard_errors[k]),
                    normal: ci_pair(&normal, k),
                    bootstrap: ci_pair(&boot, k),
                })
                .collect()
        }
        kind => {
            type EstFn<'a> = Box<dyn Fn(&Dataset, u64) -> Result<Array1<f64>> + Sync + 'a>;
            let donor = baseline.donor_count;
            let bw = baseline.kernel_bandwidth;
            let baseline_ref = &baseline;
            let estimator: EstFn = match kind {
                EstimatorKind::Full => Box::new(|d: &Dataset, _| {
                    sqri_core::baselines::full_estimator(d).map(Array1::from)
                }),
                EstimatorKind::Resp => {
                    Box::new(|d: &Dataset, _| resp_estimator(d).map(Array1::from))
                }
                EstimatorKind::Pfi => Box::new(move |d: &Dataset, s| {
                    pfi_estimate(d, j, s, baseline_ref).map(Array1::from)
                }),
                EstimatorKind::Hdfi => {
                    Box::new(move |d: &Dataset, s| hdfi_estimate(d, j, donor, s).map(Array1::from))
                }
                EstimatorKind::Npi => {
                    Box::new(move |d: &Dataset, s| npi_estimate(d, j, bw, s).map(Array1::from))
                }
                EstimatorKind::SqriGmm => unreachable!(),
            };
            let theta = estimator(&data, est_seed)?;
            let boot_seed = rng::derive_seed(cfg.seed, tag::BOOTSTRAP, 1);
            let boot = bootstrap_percentile(
                &data,
                cfg.bootstrap,
                boot_seed,
                cfg.level,
                estimator.as_ref(),
            )?;
            // bootstrap spread doubles as the standard error for baselines
            let z = sqri_core::stats::normal_quantile(0.5 * (1.0 + cfg.level))?;
            (0..theta.len())
                .map(|k| EstimateRow {
                    parameter: names[k],
                    estimate: theta[k],
                    std_error: boot.get(k).map(|c| c.width() / (2.0 * z)),
                    normal: None,
                    bootstrap: ci_pair(&boot, k),
                })
                .collect()
        }
    };

    let out_path = cfg.out.join("estimate.csv");
    io::atomic_write(&out_path, estimate_csv(&rows, cfg.method.name()).as_bytes())?;
    println!("method: {}", cfg.method.name());
    println!(
        "{:<10} {:>12} {:>12} {:>26} {:>26}",
        "parameter", "estimate", "std_error", "normal CI", "bootstrap CI"
    );
    for r in &rows {
        let fmt_ci = |ci: Option<(f64, f64)>| match ci {
            Some((lo, hi)) => format!("[{lo:.4}, {hi:.4}]"),
            None => "-".to_string(),
        };
        println!(
            "{:<10} {:>12.6} {:>12.6} {:>26} {:>26}",
            r.parameter,
            r.estimate,
            r.std_error.unwrap_or(f64::NAN),
            fmt_ci(r.normal),
            fmt_ci(r.bootstrap)
        );
    }
    println!("wrote {}", out_path.display());
    Ok(())
}

pub fn cmd_casestudy(data_path: &Path, cfg: &RunConfig) -> Result<()> {
    let (ages, incomes) = io::read_age_income_csv(data_path)?;
    let report = sim::case_study(
        &ages,
        &incomes,
        cfg.imputations,
        cfg.bootstrap,
        cfg.seed,
        cfg.level,
        &cfg.fit_config(),
        &cfg.baseline_config(),
    )?;
    io::atomic_write(
        &cfg.out.join("case_report.csv"),
        io::case_report_csv(&report).as_bytes(),
    )?;
    print!("{}", io::case_report_table(&report));
    println!("wrote {}", cfg.out.join("case_report.csv").display());
    Ok(())
}
