//! CSV ingestion and report emission.
//!
//! Machine-readable numbers are printed with 17 significant digits so that
//! re-parsing reproduces the exact f64; human tables round to the usual
//! 3-4 digits. All file writes go through a temp-file rename so partial
//! outputs are never observed.

use crate::dataset::Dataset;
use crate::error::{Result, SqriError};
use crate::sim::{CaseStudyReport, CoverageReport, McReport};
use ndarray::{Array1, Array2};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

/// 17-significant-digit representation; round-trips the exact f64.
pub fn fmt_g17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Write bytes atomically: temp file in the same directory, then rename.
pub fn atomic_write(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = dir {
        std::fs::create_dir_all(dir)?;
    }
    let file_name = path
        .file_name()
        .ok_or_else(|| SqriError::InvalidInput(format!("bad output path {path:?}")))?;
    let mut tmp = path.to_path_buf();
    tmp.set_file_name(format!(".{}.tmp", file_name.to_string_lossy()));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Read an x1[,x2],y,delta dataset. The y field may be empty on missing
/// rows; covariates must already lie in [0, 1].
pub fn read_dataset_csv(path: &Path) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| SqriError::Csv(format!("{}: {e}", path.display())))?;
    let headers = reader.headers()?.clone();
    let cols: Vec<&str> = headers.iter().collect();
    let d_x = match cols.as_slice() {
        ["x1", "y", "delta"] | ["x", "y", "delta"] => 1,
        ["x1", "x2", "y", "delta"] => 2,
        other => {
            return Err(SqriError::Csv(format!(
                "expected header x1[,x2],y,delta, found {other:?}"
            )))
        }
    };
    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    let mut deltas: Vec<bool> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let row = line + 2; // header is line 1
        if record.len() != d_x + 2 {
            return Err(SqriError::Csv(format!(
                "line {row}: expected {} fields, found {}",
                d_x + 2,
                record.len()
            )));
        }
        for c in 0..d_x {
            let v: f64 = record[c].parse().map_err(|_| {
                SqriError::Csv(format!("line {row}: bad covariate '{}'", &record[c]))
            })?;
            xs.push(v);
        }
        let delta_raw = &record[d_x + 1];
        let delta = match delta_raw {
            "1" => true,
            "0" => false,
            other => {
                return Err(SqriError::Csv(format!(
                    "line {row}: delta must be 0 or 1, found '{other}'"
                )))
            }
        };
        let y = if delta {
            record[d_x].parse().map_err(|_| {
                SqriError::Csv(format!("line {row}: bad response '{}'", &record[d_x]))
            })?
        } else {
            f64::NAN
        };
        ys.push(y);
        deltas.push(delta);
    }
    if deltas.is_empty() {
        return Err(SqriError::Csv("no data rows".into()));
    }
    let n = deltas.len();
    let x =
        Array2::from_shape_vec((n, d_x), xs).map_err(|e| SqriError::Csv(format!("shape: {e}")))?;
    Dataset::new(x, Array1::from(ys), deltas)
}

/// Read an age,log_income table for the case study.
pub fn read_age_income_csv(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| SqriError::Csv(format!("{}: {e}", path.display())))?;
    let headers = reader.headers()?.clone();
    let cols: Vec<&str> = headers.iter().collect();
    if cols != ["age", "log_income"] {
        return Err(SqriError::Csv(format!(
            "expected header age,log_income, found {cols:?}"
        )));
    }
    let mut ages = Vec::new();
    let mut incomes = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let row = line + 2;
        let age: f64 = record[0]
            .parse()
            .map_err(|_| SqriError::Csv(format!("line {row}: bad age '{}'", &record[0])))?;
        let li: f64 = record[1]
            .parse()
            .map_err(|_| SqriError::Csv(format!("line {row}: bad log_income '{}'", &record[1])))?;
        ages.push(age);
        incomes.push(li);
    }
    if ages.is_empty() {
        return Err(SqriError::Csv("no data rows".into()));
    }
    Ok((ages, incomes))
}

/// Long-format imputation table: row_id,j,tau_j,y_star.
pub fn imputation_csv(imp: &crate::impute::FractionalImputation) -> String {
    let mut out = String::from("row_id,j,tau_j,y_star\n");
    for (&i, values) in &imp.imputed {
        for (j, &y) in values.iter().enumerate() {
            out.push_str(&format!(
                "{i},{j},{},{}\n",
                fmt_g17(imp.taus[j]),
                fmt_g17(y)
            ));
        }
    }
    out
}

/// Parse the long-format imputation table back into (taus, unit -> values).
pub fn read_imputation_csv(path: &Path) -> Result<(Vec<f64>, BTreeMap<usize, Vec<f64>>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| SqriError::Csv(format!("{}: {e}", path.display())))?;
    let cols: Vec<String> = reader.headers()?.iter().map(String::from).collect();
    if cols != ["row_id", "j", "tau_j", "y_star"] {
        return Err(SqriError::Csv(format!(
            "expected header row_id,j,tau_j,y_star, found {cols:?}"
        )));
    }
    let mut taus: Vec<f64> = Vec::new();
    let mut values: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let row = line + 2;
        let unit: usize = record[0]
            .parse()
            .map_err(|_| SqriError::Csv(format!("line {row}: bad row_id")))?;
        let j: usize = record[1]
            .parse()
            .map_err(|_| SqriError::Csv(format!("line {row}: bad j")))?;
        let tau: f64 = record[2]
            .parse()
            .map_err(|_| SqriError::Csv(format!("line {row}: bad tau_j")))?;
        let y: f64 = record[3]
            .parse()
            .map_err(|_| SqriError::Csv(format!("line {row}: bad y_star")))?;
        if j == taus.len() {
            taus.push(tau);
        } else if j < taus.len() {
            if taus[j].to_bits() != tau.to_bits() {
                return Err(SqriError::Csv(format!(
                    "line {row}: tau_j disagrees with an earlier row for j={j}"
                )));
            }
        } else {
            return Err(SqriError::Csv(format!("line {row}: j out of order")));
        }
        let entry = values.entry(unit).or_default();
        if entry.len() != j {
            return Err(SqriError::Csv(format!(
                "line {row}: draws for unit {unit} out of order"
            )));
        }
        entry.push(y);
    }
    Ok((taus, values))
}

pub fn mc_report_csv(report: &McReport) -> String {
    let mut out = String::from(
        "model,estimator,parameter,rbias_x100,variance_x100,mean_estimate,theta0,replicates_used,failures\n",
    );
    for r in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.model,
            r.estimator,
            r.parameter,
            fmt_g17(r.rbias_x100),
            fmt_g17(r.variance_x100),
            fmt_g17(r.mean_estimate),
            fmt_g17(r.theta0),
            r.replicates_used,
            r.failures
        ));
    }
    out
}

pub fn coverage_csv(report: &CoverageReport) -> String {
    let mut out = String::from("model,parameter,method,coverage,replicates_used\n");
    for r in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.model,
            r.parameter,
            r.method,
            fmt_g17(r.coverage),
            r.replicates_used
        ));
    }
    out
}

pub fn case_report_csv(report: &CaseStudyReport) -> String {
    let mut out = String::from("method,parameter,estimate,rbias_x100,ci_width\n");
    let params = ["mu_y", "sigma_y", "rho"];
    for (k, p) in params.iter().enumerate() {
        out.push_str(&format!("full,{},{},0,\n", p, fmt_g17(report.full[k])));
    }
    for m in &report.methods {
        for (k, p) in params.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                m.method,
                p,
                fmt_g17(m.estimates[k]),
                fmt_g17(m.rbias_x100[k]),
                fmt_g17(m.ci_width[k])
            ));
        }
    }
    out
}

/// Human-readable case table (Est, RBias x100, CI width).
pub fn case_report_table(report: &CaseStudyReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "case study: n = {}, missing rate = {:.3}\n",
        report.n, report.missing_rate
    ));
    out.push_str(&format!(
        "{:<8} {:>8} {:>7} {:>7}  {:>8} {:>7} {:>7}  {:>8} {:>7} {:>7}\n",
        "method", "mu_y", "RBias", "Width", "sigma_y", "RBias", "Width", "rho", "RBias", "Width"
    ));
    out.push_str(&format!(
        "{:<8} {:>8.2} {:>7} {:>7}  {:>8.3} {:>7} {:>7}  {:>8.3} {:>7} {:>7}\n",
        "full", report.full[0], "", "", report.full[1], "", "", report.full[2], "", ""
    ));
    for m in &report.methods {
        out.push_str(&format!(
            "{:<8} {:>8.2} {:>7.2} {:>7.3}  {:>8.3} {:>7.2} {:>7.3}  {:>8.3} {:>7.2} {:>7.3}\n",
            m.method,
            m.estimates[0],
            m.rbias_x100[0],
            m.ci_width[0],
            m.estimates[1],
            m.rbias_x100[1],
            m.ci_width[1],
            m.estimates[2],
            m.rbias_x100[2],
            m.ci_width[2]
        ));
    }
    out
}
