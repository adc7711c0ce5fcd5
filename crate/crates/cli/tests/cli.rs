use std::f64::consts::PI;
use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

use quartic_core::simulate::read_binary;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_quartic-lab"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn scratch(name: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("cli").join(name);
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn compute_kappa_prints_value_and_bound() {
    let o = run(&["compute-kappa", "--tol", "1e-6"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let value: f64 = text.lines().next().unwrap().strip_prefix("kappa ").unwrap().parse().unwrap();
    assert!((1.0285..=1.0295).contains(&value));
    assert!(text.contains("truncation ") && text.contains("bound "));
}

#[test]
fn quartic_sum_mean_is_six_over_pi() {
    let o = run(&[
        "sums", "--functional", "power", "--p", "4", "--parity", "all", "--g", "const", "--n", "1024", "--M", "50", "--summary",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,count,mean,std_dev,std_error"));
    let cells: Vec<&str> = lines.next().unwrap().split(',').collect();
    let mean: f64 = cells[2].parse().unwrap();
    assert_eq!(cells[1], "50");
    assert!(((mean - 6.0 / PI) / (6.0 / PI)).abs() < 0.05, "mean {mean}");
}

#[test]
fn sums_long_format_has_one_row_per_replicate_and_time() {
    let o = run(&["sums", "--functional", "qn", "--n", "64", "--M", "7", "--t", "0.25,0.5,1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "replicate,t,value");
    assert_eq!(lines.len(), 1 + 7 * 3);
    assert!(lines[1].starts_with("0,2.5000000000000000e-1,"));
    let again = run(&["sums", "--functional", "qn", "--n", "64", "--M", "7", "--t", "0.25,0.5,1", "--workers", "3"]);
    assert_eq!(again.stdout, o.stdout);
}

#[test]
fn sums_rejects_bad_function_and_short_grid() {
    let o = run(&["sums", "--functional", "midpoint", "--g", "cosine", "--n", "16", "--M", "2"]);
    assert_eq!(o.status.code(), Some(2));
    let diag: serde_json::Value = serde_json::from_str(stderr(&o).trim()).unwrap();
    assert_eq!(diag["field"], "g");
    let o = run(&["sums", "--functional", "bnbar", "--n", "8", "--M", "2"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

const BN_CONFIG: &str = "experiment = \"bn\"\nn = 128\nM = 200\nprobes = [0.5, 1.0]\nseed = 11\n";

#[test]
fn verify_writes_summary_and_replicates() {
    let dir = scratch("verify_bn");
    let cfg = dir.join("bn.toml");
    fs::write(&cfg, BN_CONFIG).unwrap();
    let out = dir.join("out");
    let o = run(&["verify", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(matches!(o.status.code(), Some(0 | 1)), "{}", stderr(&o));
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["schema_version"], 1);
    assert_eq!(summary["config"]["seed"], 11);
    let checks = summary["runs"][0]["checks"].as_array().unwrap();
    let names: Vec<&str> = checks.iter().map(|c| c["name"].as_str().unwrap()).collect();
    assert!(names.contains(&"ks_normal[t=1]") && names.contains(&"abs_corr_increments"), "{names:?}");
    assert!(checks.iter().all(|c| c["threshold"].is_number() && c["passed"].is_boolean()));
    assert_eq!(o.status.success(), summary["passed"].as_bool().unwrap());
    let csv = fs::read_to_string(out.join("replicates.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("run,seed,sample,n,t,replicate,value"));
    assert_eq!(csv.lines().count(), 1 + 2 * 200);
}

#[test]
fn verify_is_byte_identical_across_worker_counts() {
    let dir = scratch("verify_workers");
    let cfg = dir.join("trap.toml");
    fs::write(&cfg, "experiment = \"trapezoid\"\ng = \"cube\"\nns = [32, 64]\nM = 40\nseed = 3\n").unwrap();
    let mut files = Vec::new();
    for w in ["1", "4"] {
        let out = dir.join(format!("w{w}"));
        let o = run(&["--workers", w, "verify", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert!(matches!(o.status.code(), Some(0 | 1)), "{}", stderr(&o));
        files.push((fs::read(out.join("summary.json")).unwrap(), fs::read(out.join("replicates.csv")).unwrap()));
    }
    assert!(files[0].0 == files[1].0, "summary.json differs");
    assert!(files[0].1 == files[1].1, "replicates.csv differs");
}

#[test]
fn verify_flags_override_the_file() {
    let dir = scratch("verify_override");
    let cfg = dir.join("bn.toml");
    fs::write(&cfg, BN_CONFIG).unwrap();
    let out = dir.join("out");
    let o = run(&[
        "verify", "--experiment", "bn", "--config", cfg.to_str().unwrap(), "--n", "64", "--M", "30", "--seed", "5", "--out",
        out.to_str().unwrap(),
    ]);
    assert!(matches!(o.status.code(), Some(0 | 1)), "{}", stderr(&o));
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["config"]["ns"][0], 64);
    assert_eq!(summary["config"]["replicates"], 30);
    assert_eq!(summary["config"]["seed"], 5);
}

#[test]
fn verify_exit_code_reflects_checks() {
    let dir = scratch("verify_fail");
    let cfg = dir.join("tight.toml");
    fs::write(
        &cfg,
        "experiment = \"ito\"\nn = 64\nM = 50\nrepeats = 1\n[tolerances]\nmean_diff_max = 1e-12\nvar_ratio_max = 1e-12\n",
    )
    .unwrap();
    let o = run(&["verify", "--config", cfg.to_str().unwrap(), "--out", dir.join("out").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("FAIL"));
}

#[test]
fn verify_rejects_unknown_keys_with_the_field() {
    let dir = scratch("verify_typo");
    let cfg = dir.join("typo.toml");
    fs::write(&cfg, "experiment = \"bn\"\nreplicate = 10\n").unwrap();
    let o = run(&["verify", "--config", cfg.to_str().unwrap(), "--out", dir.join("out").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("replicate"), "{}", stderr(&o));
    assert!(!dir.join("out").exists());

    let o = run(&["verify", "--experiment", "bn", "--M", "2", "--out", dir.join("out").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let diag: serde_json::Value = serde_json::from_str(stderr(&o).trim()).unwrap();
    assert_eq!(diag["field"], "replicates");
}

#[test]
fn sample_round_trips_through_the_binary_layout() {
    let dir = scratch("sample");
    let path = dir.join("heat.bin");
    let o = run(&["sample", "--n", "32", "--M", "5", "--seed", "9", "--out", path.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let ens = read_binary(fs::File::open(&path).unwrap()).unwrap();
    assert_eq!((ens.grid().n(), ens.replicates(), ens.seed()), (32, 5, 9));
    assert_eq!(ens.kernel_id(), "heat");

    let o = run(&["sample", "--n", "8", "--M", "2", "--format", "csv"]);
    let text = stdout(&o);
    assert_eq!(text.lines().next(), Some("replicate,j,t,value"));
    assert_eq!(text.lines().count(), 1 + 2 * 9);

    let o = run(&["sample", "--n", "8", "--M", "2"]);
    assert_eq!(o.status.code(), Some(2), "binary output without --out");
}

#[test]
fn cov_table_dumps_table_and_audit() {
    let dir = scratch("cov_table");
    let table = dir.join("table.csv");
    let o = run(&["cov-table", "--n", "256", "--lag", "3", "--table", table.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let audit: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(audit["violation_count"], 0);
    assert_eq!(audit["sig2_checked"], 256);
    let csv = fs::read_to_string(&table).unwrap();
    assert_eq!(csv.lines().next(), Some("j,sigma_sq,sigma_hat,cross_1,cross_2,cross_3"));
    assert_eq!(csv.lines().count(), 257);
}
