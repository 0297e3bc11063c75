//! `sqri`: quantile-regression imputation, GMM estimation, simulation
//! benchmarks and the income case study, driven by flat config files and a
//! handful of flags. Exit codes: 0 success, 2 configuration or input error,
//! 3 statistical failure.

mod commands;
mod config;

use clap::{Args, Parser, Subcommand};
use config::{ConfigError, PartialConfig};
use sqri_core::sim::{EstimatorKind, SimModel};
use sqri_core::SqriError;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "sqri")]
#[command(about = "Semiparametric quantile-regression imputation with GMM estimation")]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the Monte Carlo comparison (and optionally the coverage study)
    Simulate(CommonArgs),
    /// Impute missing responses of a dataset, emitting the draws as CSV
    Impute {
        /// Input CSV with header x1[,x2],y,delta
        data: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Estimate parameters of one dataset with a selectable method
    Estimate {
        /// Input CSV with header x1[,x2],y,delta
        data: PathBuf,
        /// Estimation method: sqri | pfi | hdfi | npi | resp | full
        #[arg(long)]
        method: Option<String>,
        /// Reuse a previously emitted imputation file (sqri only)
        #[arg(long)]
        imputed: Option<PathBuf>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Rescale ages, delete responses by the logistic mechanism, and
    /// compare every estimator against the full sample
    Casestudy {
        /// Input CSV with header age,log_income
        data: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
}

#[derive(Args, Debug)]
struct CommonArgs {
    /// Key-value config file; flags override its entries
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed for all random streams
    #[arg(long)]
    seed: Option<u64>,
    /// Monte Carlo replicates
    #[arg(long)]
    replicates: Option<usize>,
    /// Imputed values per missing unit (J)
    #[arg(long)]
    imputations: Option<usize>,
    /// Bootstrap replicates (B)
    #[arg(long)]
    bootstrap: Option<usize>,
    /// Simulation model(s), comma separated: linear,bump,cycle,bivariate
    #[arg(long)]
    model: Option<String>,
    /// Estimators, comma separated: sqri,full,resp,pfi,hdfi,npi
    #[arg(long)]
    estimators: Option<String>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Full-scale defaults: 1000 replicates, 400 bootstrap draws
    #[arg(long, action = clap::ArgAction::SetTrue)]
    full_scale: bool,
    /// Also run the confidence-interval coverage study (simulate)
    #[arg(long, action = clap::ArgAction::SetTrue)]
    coverage: bool,
}

impl CommonArgs {
    fn to_partial(&self) -> Result<PartialConfig, ConfigError> {
        let mut p = match &self.config {
            Some(path) => PartialConfig::from_file(path)?,
            None => PartialConfig::default(),
        };
        let mut over = PartialConfig {
            seed: self.seed,
            replicates: self.replicates,
            imputations: self.imputations,
            bootstrap: self.bootstrap,
            out: self.out.clone(),
            ..PartialConfig::default()
        };
        if let Some(models) = &self.model {
            over.models = Some(
                models
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| SimModel::parse(s).map_err(|e| ConfigError(e.to_string())))
                    .collect::<Result<_, _>>()?,
            );
        }
        if let Some(est) = &self.estimators {
            over.estimators = Some(
                est.split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| EstimatorKind::parse(s).map_err(|e| ConfigError(e.to_string())))
                    .collect::<Result<_, _>>()?,
            );
        }
        if self.full_scale {
            over.full_scale = Some(true);
        }
        if self.coverage {
            over.coverage = Some(true);
        }
        p = p.merged_with(over);
        Ok(p)
    }
}

fn init_threads() {
    if let Ok(v) = std::env::var("SQRI_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            if n >= 1 {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global();
            }
        }
    }
}

/// 2 for configuration and input problems, 3 for statistical failures.
fn exit_code_for(err: &SqriError) -> u8 {
    match err {
        SqriError::InvalidInput(_) | SqriError::Csv(_) | SqriError::Io(_) => 2,
        SqriError::InsufficientRespondents { .. }
        | SqriError::DegenerateDesign
        | SqriError::GridTooSmall
        | SqriError::MomentOverflow { .. }
        | SqriError::WeightMatrixDegenerate(_)
        | SqriError::ZeroVariance(_)
        | SqriError::NonFiniteObjective
        | SqriError::BootstrapFailures { .. }
        | SqriError::ReplicateFailures { .. } => 3,
    }
}

fn run() -> Result<(), ExitCode> {
    let cli = Cli::parse();
    init_threads();

    let fail_cfg = |e: ConfigError| {
        eprintln!("config error: {e}");
        ExitCode::from(2)
    };
    let fail_run = |e: SqriError| {
        eprintln!("error: {e}");
        ExitCode::from(exit_code_for(&e))
    };

    match &cli.command {
        Command::Simulate(common) => {
            let cfg = common
                .to_partial()
                .map_err(fail_cfg)?
                .resolve()
                .map_err(fail_cfg)?;
            commands::cmd_simulate(&cfg).map_err(fail_run)
        }
        Command::Impute { data, common } => {
            let cfg = common
                .to_partial()
                .map_err(fail_cfg)?
                .resolve()
                .map_err(fail_cfg)?;
            commands::cmd_impute(data, &cfg).map_err(fail_run)
        }
        Command::Estimate {
            data,
            method,
            imputed,
            common,
        } => {
            let mut partial = common.to_partial().map_err(fail_cfg)?;
            if let Some(m) = method {
                partial.method = Some(
                    EstimatorKind::parse(m).map_err(|e| fail_cfg(ConfigError(e.to_string())))?,
                );
            }
            let cfg = partial.resolve().map_err(fail_cfg)?;
            commands::cmd_estimate(data, &cfg, imputed.as_deref()).map_err(fail_run)
        }
        Command::Casestudy { data, common } => {
            let cfg = common
                .to_partial()
                .map_err(fail_cfg)?
                .resolve()
                .map_err(fail_cfg)?;
            commands::cmd_casestudy(data, &cfg).map_err(fail_run)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(code) => code,
    }
}
