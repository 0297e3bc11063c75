//! Flat key-value run configuration.
//!
//! A config file holds `key = value` lines ('#' starts a comment). Every key
//! has a documented default, unknown keys are rejected, and the manifest a
//! run emits is itself a valid config file that reproduces the run.

use sqri_core::baselines::BaselineConfig;
use sqri_core::sim::{EstimatorKind, SimModel};
use sqri_core::FitConfig;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Default)]
pub struct PartialConfig {
    pub models: Option<Vec<SimModel>>,
    pub n: Option<usize>,
    pub replicates: Option<usize>,
    pub imputations: Option<usize>,
    pub bootstrap: Option<usize>,
    pub seed: Option<u64>,
    pub level: Option<f64>,
    pub estimators: Option<Vec<EstimatorKind>>,
    pub out: Option<PathBuf>,
    pub full_scale: Option<bool>,
    pub coverage: Option<bool>,
    pub degree: Option<usize>,
    pub penalty_order: Option<usize>,
    pub knots: Option<usize>,
    pub lambda_grid: Option<Vec<f64>>,
    pub donor_count: Option<usize>,
    pub kernel_bandwidth: Option<Option<f64>>, // None = cross-validated
    pub method: Option<EstimatorKind>,
}

/// Fully resolved configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub models: Vec<SimModel>,
    pub n: usize,
    pub replicates: usize,
    pub imputations: usize,
    pub bootstrap: usize,
    pub seed: u64,
    pub level: f64,
    pub estimators: Vec<EstimatorKind>,
    pub out: PathBuf,
    pub full_scale: bool,
    pub coverage: bool,
    pub degree: usize,
    pub penalty_order: usize,
    pub knots: usize,
    pub lambda_grid: Option<Vec<f64>>,
    pub donor_count: usize,
    pub kernel_bandwidth: Option<f64>,
    pub method: EstimatorKind,
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn parse_bool(v: &str) -> Result<bool, ConfigError> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(ConfigError(format!("expected a boolean, found '{other}'"))),
    }
}

fn parse_list<T, F: Fn(&str) -> Result<T, ConfigError>>(
    v: &str,
    f: F,
) -> Result<Vec<T>, ConfigError> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| f(s))
        .collect()
}

impl PartialConfig {
    /// Parse a config file; unknown keys are errors.
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        Self::from_str(&text)
    }

    pub fn from_str(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = PartialConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ConfigError(format!("line {}: expected key = value", lineno + 1)))?;
            let key = key.trim();
            let value = value.trim();
            let bad = |e: String| ConfigError(format!("line {}: {key}: {e}", lineno + 1));
            match key {
                "model" | "models" => {
                    cfg.models = Some(
                        parse_list(value, |s| {
                            SimModel::parse(s).map_err(|e| ConfigError(e.to_string()))
                        })
                        .map_err(|e| bad(e.0))?,
                    )
                }
                "n" => cfg.n = Some(value.parse().map_err(|e| bad(format!("{e}")))?),
                "replicates" => {
                    cfg.replicates = Some(value.parse().map_err(|e| bad(format!("{e}")))?)
                }
                "imputations" => {
                    cfg.imputations = Some(value.parse().map_err(|e| bad(format!("{e}")))?)
                }
                "bootstrap" => {
                    cfg.bootstrap = Some(value.parse().map_err(|e| bad(format!("{e}")))?)
                }
                "seed" => cfg.seed = Some(value.parse().map_err(|e| bad(format!("{e}")))?),
                "level" => cfg.level = Some(value.parse().map_err(|e| bad(format!("{e}")))?),
                "estimators" => {
                    cfg.estimators = Some(
                        parse_list(value, |s| {
                            EstimatorKind::parse(s).map_err(|e| ConfigError(e.to_string()))
                        })
                        .map_err(|e| bad(e.0))?,
                    )
                }
                "out" => cfg.out = Some(PathBuf::from(value)),
                "full_scale" => cfg.full_scale = Some(parse_bool(value).map_err(|e| bad(e.0))?),
                "coverage" => cfg.coverage = Some(parse_bool(value).map_err(|e| bad(e.0))?),
                "degree" => cfg.degree = Some(value.parse().map_err(|e| bad(format!("{e}")))?),
                "penalty_order" => {
                    cfg.penalty_order = Some(value.parse().map_err(|e| bad(format!("{e}")))?)
                }
                "knots" => cfg.knots = Some(value.parse().map_err(|e| bad(format!("{e}")))?),
                "lambda_grid" => {
                    cfg.lambda_grid = Some(
                        parse_list(value, |s| {
                            s.parse::<f64>().map_err(|e| ConfigError(format!("{e}")))
                        })
                        .map_err(|e| bad(e.0))?,
                    )
                }
                "donor_count" => {
                    cfg.donor_count = Some(value.parse().map_err(|e| bad(format!("{e}")))?)
                }
                "kernel_bandwidth" => {
                    cfg.kernel_bandwidth = Some(if value == "cv" {
                        None
                    } else {
                        Some(value.parse().map_err(|e| bad(format!("{e}")))?)
                    })
                }
                "method" => {
                    cfg.method = Some(EstimatorKind::parse(value).map_err(|e| bad(e.to_string()))?)
                }
                other => return Err(ConfigError(format!("unknown config key '{other}'"))),
            }
        }
        Ok(cfg)
    }

    /// Overlay `other` (typically CLI flags) on top of this config.
    pub fn merged_with(mut self, other: PartialConfig) -> PartialConfig {
        macro_rules! take {
            ($f:ident) => {
                if other.$f.is_some() {
                    self.$f = other.$f;
                }
            };
        }
        take!(models);
        take!(n);
        take!(replicates);
        take!(imputations);
        take!(bootstrap);
        take!(seed);
        take!(level);
        take!(estimators);
        take!(out);
        take!(full_scale);
        take!(coverage);
        take!(degree);
        take!(penalty_order);
        take!(knots);
        take!(lambda_grid);
        take!(donor_count);
        take!(kernel_bandwidth);
        take!(method);
        self
    }

    /// Fill defaults. `--full-scale` swaps the replicate and bootstrap
    /// defaults to the full-scale values; explicit settings still win.
    pub fn resolve(self) -> Result<RunConfig, ConfigError> {
        let full_scale = self.full_scale.unwrap_or(false);
        let cfg = RunConfig {
            models: self.models.unwrap_or_else(|| vec![SimModel::Linear]),
            n: self.n.unwrap_or(200),
            replicates: self
                .replicates
                .unwrap_or(if full_scale { 1000 } else { 200 }),
            imputations: self.imputations.unwrap_or(10),
            bootstrap: self.bootstrap.unwrap_or(if full_scale { 400 } else { 200 }),
            seed: self.seed.unwrap_or(20_240_817),
            level: self.level.unwrap_or(0.95),
            estimators: self.estimators.unwrap_or_else(|| {
                vec![
                    EstimatorKind::Full,
                    EstimatorKind::Resp,
                    EstimatorKind::SqriGmm,
                    EstimatorKind::Pfi,
                    EstimatorKind::Hdfi,
                    EstimatorKind::Npi,
                ]
            }),
            out: self.out.unwrap_or_else(|| PathBuf::from("out")),
            full_scale,
            coverage: self.coverage.unwrap_or(false),
            degree: self.degree.unwrap_or(3),
            penalty_order: self.penalty_order.unwrap_or(2),
            knots: self.knots.unwrap_or(5),
            lambda_grid: self.lambda_grid,
            donor_count: self.donor_count.unwrap_or(20),
            kernel_bandwidth: self.kernel_bandwidth.unwrap_or(None),
            method: self.method.unwrap_or(EstimatorKind::SqriGmm),
        };
        if !(cfg.level > 0.0 && cfg.level < 1.0) {
            return Err(ConfigError(format!("level {} outside (0,1)", cfg.level)));
        }
        if cfg.models.is_empty() || cfg.estimators.is_empty() {
            return Err(ConfigError(
                "models and estimators must be non-empty".into(),
            ));
        }
        Ok(cfg)
    }
}

impl RunConfig {
    pub fn fit_config(&self) -> FitConfig {
        FitConfig {
            degree: self.degree,
            penalty_order: self.penalty_order,
            knots: self.knots,
            lambda_grid: self.lambda_grid.clone(),
            ..FitConfig::default()
        }
    }

    pub fn baseline_config(&self) -> BaselineConfig {
        BaselineConfig {
            j: self.imputations,
            donor_count: self.donor_count,
            kernel_bandwidth: self.kernel_bandwidth,
            ..BaselineConfig::default()
        }
    }

    /// Render as a config file that reproduces this run exactly.
    pub fn manifest(&self, command: &str) -> String {
        let mut pairs: BTreeMap<&str, String> = BTreeMap::new();
        pairs.insert(
            "models",
            self.models
                .iter()
                .map(|m| m.name())
                .collect::<Vec<_>>()
                .join(","),
        );
        pairs.insert("n", self.n.to_string());
        pairs.insert("replicates", self.replicates.to_string());
        pairs.insert("imputations", self.imputations.to_string());
        pairs.insert("bootstrap", self.bootstrap.to_string());
        pairs.insert("seed", self.seed.to_string());
        pairs.insert("level", sqri_core::io::fmt_g17(self.level));
        pairs.insert(
            "estimators",
            self.estimators
                .iter()
                .map(|e| e.name())
                .collect::<Vec<_>>()
                .join(","),
        );
        pairs.insert("out", self.out.display().to_string());
        pairs.insert("full_scale", self.full_scale.to_string());
        pairs.insert("coverage", self.coverage.to_string());
        pairs.insert("degree", self.degree.to_string());
        pairs.insert("penalty_order", self.penalty_order.to_string());
        pairs.insert("knots", self.knots.to_string());
        if let Some(grid) = &self.lambda_grid {
            pairs.insert(
                "lambda_grid",
                grid.iter()
                    .map(|v| sqri_core::io::fmt_g17(*v))
                    .collect::<Vec<_>>()
                    .join(","),
            );
        }
        pairs.insert("donor_count", self.donor_count.to_string());
        pairs.insert(
            "kernel_bandwidth",
            match self.kernel_bandwidth {
                None => "cv".to_string(),
                Some(b) => sqri_core::io::fmt_g17(b),
            },
        );
        pairs.insert("method", self.method.name().to_string());

        let mut out = String::new();
        let _ = writeln!(
            out,
            "# sqri {} manifest (version {})",
            command,
            env!("CARGO_PKG_VERSION")
        );
        for (k, v) in pairs {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}
