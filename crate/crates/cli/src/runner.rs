//! Runs a resolved experiment and writes its artifacts.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use quartic_core::verify::{
    verify_bn_limit, verify_expansion_residual, verify_ito_formula, verify_trapezoid_ucp, with_repeats, ExperimentReport,
    ItoSetup,
};
use serde::Serialize;

use crate::config::{ExperimentConfig, ExperimentKind, Tolerances};
use crate::csv::fmt_float;
use crate::LabError;

/// Bumped whenever a field of `summary.json` changes meaning or disappears.
pub const SUMMARY_SCHEMA_VERSION: u32 = 1;
pub const SUMMARY_FILE: &str = "summary.json";
pub const REPLICATES_FILE: &str = "replicates.csv";

#[derive(Debug, Clone, Serialize)]
pub struct Generator {
    pub name: &'static str,
    pub version: &'static str,
}

impl Generator {
    pub fn current() -> Self {
        Self { name: env!("CARGO_PKG_NAME"), version: env!("CARGO_PKG_VERSION") }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub schema_version: u32,
    pub generator: Generator,
    pub config: ExperimentConfig,
    pub passed: bool,
    pub passing_runs: usize,
    pub min_passing: usize,
    pub runs: Vec<ExperimentReport>,
}

impl Summary {
    pub fn to_json(&self) -> Result<String, LabError> {
        let mut s = serde_json::to_string_pretty(self).map_err(|e| LabError::Output(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }
}

/// Runs every repeat of the experiment; nothing is written.
pub fn execute(config: &ExperimentConfig) -> Result<Summary, LabError> {
    let one = |seed: u64| -> quartic_core::Result<ExperimentReport> {
        let g = config.g.as_ref();
        let need_g = || g.expect("resolved config carries a function for this experiment");
        match (&config.experiment, &config.tolerances) {
            (ExperimentKind::Ito | ExperimentKind::FbmWindow, Tolerances::Ito(tol)) => {
                let setup = ItoSetup { n: config.n(), replicates: config.replicates, window_start: config.window_start };
                verify_ito_formula(&config.kernel, need_g(), &setup, &config.probes, seed, tol)
            }
            (ExperimentKind::Bn, Tolerances::Bn(tol)) => {
                verify_bn_limit(&config.kernel, config.n(), config.replicates, &config.probes, seed, tol)
            }
            (ExperimentKind::Trapezoid, Tolerances::Trapezoid(tol)) => {
                verify_trapezoid_ucp(&config.kernel, need_g(), &config.ns, config.replicates, &config.probes, seed, tol)
            }
            (ExperimentKind::Expansion, Tolerances::Expansion(tol)) => {
                verify_expansion_residual(&config.kernel, need_g(), &config.ns, config.replicates, config.horizon, seed, tol)
            }
            (kind, tol) => unreachable!("resolver paired {kind} with {tol:?}"),
        }
    };
    let (passed, runs) = with_repeats(config.repeats, config.min_passing, config.seed, one)?;
    Ok(Summary {
        schema_version: SUMMARY_SCHEMA_VERSION,
        generator: Generator::current(),
        config: config.clone(),
        passed,
        passing_runs: runs.iter().filter(|r| r.passed()).count(),
        min_passing: config.min_passing,
        runs,
    })
}

/// Writes `summary.json` and `replicates.csv` into `dir`, creating it.
pub fn write_artifacts(summary: &Summary, dir: &Path) -> Result<(), LabError> {
    fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
    let path = dir.join(SUMMARY_FILE);
    fs::write(&path, summary.to_json()?).map_err(|e| LabError::io(&path, e))?;
    let path = dir.join(REPLICATES_FILE);
    let file = fs::File::create(&path).map_err(|e| LabError::io(&path, e))?;
    write_replicates(summary, BufWriter::new(file)).map_err(|e| LabError::io(&path, e))
}

/// Columns: `run, seed, sample, n, t, replicate, value`.
pub fn write_replicates(summary: &Summary, mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "run,seed,sample,n,t,replicate,value")?;
    for (run, rep) in summary.runs.iter().enumerate() {
        for s in &rep.samples {
            for (m, v) in s.values.iter().enumerate() {
                writeln!(w, "{run},{},{},{},{},{m},{}", rep.seed, s.name, s.n, fmt_float(s.t), fmt_float(*v))?;
            }
        }
    }
    w.flush()
}

pub fn default_output_dir(kind: ExperimentKind) -> PathBuf {
    PathBuf::from("quartic-out").join(kind.name())
}

/// Executes the experiment and writes its artifacts.
pub fn run(config: &ExperimentConfig) -> Result<(Summary, PathBuf), LabError> {
    let summary = execute(config)?;
    let dir = config.output_dir.clone().unwrap_or_else(|| default_output_dir(config.experiment));
    write_artifacts(&summary, &dir)?;
    Ok((summary, dir))
}
