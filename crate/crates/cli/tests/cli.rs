//! End-to-end checks of the `sqri` binary: exit codes, file shapes,
//! determinism, and the file-mediated estimation round trip.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn sqri() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sqri"))
}

fn tmp_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("sqri_cli_{name}_{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_linear_dataset(path: &Path, n: usize, missing_every: usize) {
    let mut out = String::from("x1,y,delta\n");
    for i in 0..n {
        let x = i as f64 / (n - 1) as f64;
        let y = 1.0 + 2.0 * (x - 0.5) + 0.05 * ((i * 37 % 11) as f64 / 11.0 - 0.5);
        if missing_every != 0 && i % missing_every == 1 {
            out.push_str(&format!("{x},,0\n"));
        } else {
            out.push_str(&format!("{x},{y},1\n"));
        }
    }
    std::fs::write(path, out).unwrap();
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

#[test]
fn simulate_is_byte_deterministic() {
    let dir = tmp_dir("sim");
    let out1 = dir.join("a");
    let out2 = dir.join("b");
    for out in [&out1, &out2] {
        let o = run(sqri()
            .args(["simulate", "--model", "linear", "--estimators", "sqri,full"])
            .args(["--replicates", "6", "--seed", "33", "--imputations", "4"])
            .arg("--out")
            .arg(out));
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = std::fs::read(out1.join("mc_report.csv")).unwrap();
    let b = std::fs::read(out2.join("mc_report.csv")).unwrap();
    assert_eq!(a, b, "mc_report.csv differs between identical runs");
    assert!(out1.join("manifest.txt").exists());
    assert!(out1.join("figures/bias_ratio_linear.svg").exists());

    // report shape: 2 estimators x 3 parameters + header
    let text = String::from_utf8(a).unwrap();
    assert_eq!(text.lines().count(), 1 + 6);
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let dir = tmp_dir("threads");
    let single = dir.join("single");
    let multi = dir.join("multi");
    for (out, threads) in [(&single, "1"), (&multi, "2")] {
        let o = run(sqri()
            .env("SQRI_THREADS", threads)
            .args(["simulate", "--model", "cycle", "--estimators", "sqri,hdfi"])
            .args(["--replicates", "6", "--seed", "91", "--imputations", "4"])
            .arg("--out")
            .arg(out));
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = std::fs::read(single.join("mc_report.csv")).unwrap();
    let b = std::fs::read(multi.join("mc_report.csv")).unwrap();
    assert_eq!(a, b, "thread count changed the results");
}

#[test]
fn manifest_round_trip_reproduces_outputs() {
    let dir = tmp_dir("manifest");
    let first = dir.join("first");
    let o = run(sqri()
        .args(["simulate", "--model", "bump", "--estimators", "sqri,resp"])
        .args(["--replicates", "5", "--seed", "77", "--imputations", "3"])
        .arg("--out")
        .arg(&first));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    // re-ingest the manifest, only redirecting the output directory
    let second = dir.join("second");
    let o = run(sqri()
        .arg("simulate")
        .arg("--config")
        .arg(first.join("manifest.txt"))
        .arg("--out")
        .arg(&second));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let a = std::fs::read(first.join("mc_report.csv")).unwrap();
    let b = std::fs::read(second.join("mc_report.csv")).unwrap();
    assert_eq!(a, b, "manifest re-ingestion changed the report");
}

#[test]
fn config_errors_exit_2() {
    let dir = tmp_dir("cfg");
    let cfg = dir.join("bad.cfg");
    std::fs::write(&cfg, "modle = linear\n").unwrap();
    let o = run(sqri().arg("simulate").arg("--config").arg(&cfg));
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("unknown config key"), "{err}");

    // malformed data schema also exits 2
    let data = dir.join("bad.csv");
    std::fs::write(&data, "a,b\n1,2\n").unwrap();
    let o = run(sqri().args(["estimate"]).arg(&data));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn statistical_failures_exit_3() {
    let dir = tmp_dir("stat");
    let data = dir.join("all_missing.csv");
    let mut text = String::from("x1,y,delta\n");
    for i in 0..30 {
        text.push_str(&format!("0.{:02},,0\n", i + 1));
    }
    std::fs::write(&data, text).unwrap();
    let o = run(sqri()
        .args(["estimate", "--method", "resp"])
        .arg(&data)
        .args(["--out"])
        .arg(dir.join("out")));
    assert_eq!(
        o.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
}

#[test]
fn impute_emits_long_format_rows() {
    let dir = tmp_dir("impute");
    let data = dir.join("data.csv");
    write_linear_dataset(&data, 40, 20); // 2 missing rows
    let o = run(sqri()
        .arg("impute")
        .arg(&data)
        .args(["--imputations", "3", "--seed", "4"])
        .arg("--out")
        .arg(dir.join("out")));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(dir.join("out/imputations.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "row_id,j,tau_j,y_star");
    assert_eq!(lines.len(), 1 + 2 * 3, "2 missing rows x J=3");

    // no missing rows: header only
    let full = dir.join("full.csv");
    write_linear_dataset(&full, 40, 0);
    let o = run(sqri()
        .arg("impute")
        .arg(&full)
        .args(["--imputations", "3", "--seed", "4"])
        .arg("--out")
        .arg(dir.join("out_full")));
    assert!(o.status.success());
    let text = std::fs::read_to_string(dir.join("out_full/imputations.csv")).unwrap();
    assert_eq!(text, "row_id,j,tau_j,y_star\n");
}

#[test]
fn estimate_round_trips_through_imputation_file() {
    let dir = tmp_dir("roundtrip");
    let data = dir.join("data.csv");
    write_linear_dataset(&data, 60, 10);

    let o = run(sqri()
        .arg("impute")
        .arg(&data)
        .args(["--imputations", "4", "--seed", "21"])
        .arg("--out")
        .arg(dir.join("imp")));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let direct = dir.join("direct");
    let o = run(sqri()
        .args(["estimate", "--method", "sqri"])
        .arg(&data)
        .args(["--imputations", "4", "--seed", "21", "--bootstrap", "50"])
        .arg("--out")
        .arg(&direct));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let mediated = dir.join("mediated");
    let o = run(sqri()
        .args(["estimate", "--method", "sqri"])
        .arg(&data)
        .arg("--imputed")
        .arg(dir.join("imp/imputations.csv"))
        .args(["--imputations", "4", "--seed", "21", "--bootstrap", "50"])
        .arg("--out")
        .arg(&mediated));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let a = parse_estimates(&std::fs::read_to_string(direct.join("estimate.csv")).unwrap());
    let b = parse_estimates(&std::fs::read_to_string(mediated.join("estimate.csv")).unwrap());
    assert_eq!(a.len(), 5);
    for (pa, pb) in a.iter().zip(&b) {
        assert!(
            (pa - pb).abs() <= 1e-12 * (1.0 + pa.abs()),
            "file-mediated estimate differs: {pa} vs {pb}"
        );
    }
}

fn parse_estimates(csv: &str) -> Vec<f64> {
    csv.lines()
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect()
}

#[test]
fn full_method_on_complete_file_matches_closed_form() {
    let dir = tmp_dir("full");
    let data = dir.join("data.csv");
    std::fs::write(&data, "x1,y,delta\n0.0,0.0,1\n1.0,2.0,1\n0.5,1.0,1\n").unwrap();
    let o = run(sqri()
        .args(["estimate", "--method", "full", "--bootstrap", "50"])
        .arg(&data)
        .arg("--out")
        .arg(dir.join("out")));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let est = parse_estimates(&std::fs::read_to_string(dir.join("out/estimate.csv")).unwrap());
    assert!((est[0] - 0.5).abs() < 1e-12); // mu_x
    assert!((est[1] - 1.0).abs() < 1e-12); // mu_y
    assert!((est[4] - 1.0).abs() < 1e-9); // rho
}

#[test]
fn casestudy_runs_on_bundled_data() {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/age_income.csv");
    let dir = tmp_dir("case");
    let o = run(sqri()
        .arg("casestudy")
        .arg(&data)
        .args(["--seed", "3", "--bootstrap", "60", "--imputations", "5"])
        .arg("--out")
        .arg(dir.join("out")));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(dir.join("out/case_report.csv")).unwrap();
    let full_mu: f64 = text
        .lines()
        .find(|l| l.starts_with("full,mu_y"))
        .unwrap()
        .split(',')
        .nth(2)
        .unwrap()
        .parse()
        .unwrap();
    assert!(
        (full_mu - 13.49).abs() < 0.005,
        "full-sample mu_y {full_mu}"
    );
}
