//! The non-experiment verbs, as library calls so they can be tested in-process.

use std::io::{self, Write};

use quartic_core::analytic::constants::{kappa, KappaEstimate};
use quartic_core::analytic::covtable::{audit_inequalities, discrete_cov_table, CovAudit, DiscreteCovTable};
use quartic_core::functions::TestFunction;
use quartic_core::simulate::{sample_kernel, PathEnsemble};
use quartic_core::sums::{over_ensemble, Functional};
use quartic_core::{CovKernel, Grid};

use crate::csv::fmt_float;
use crate::LabError;

pub fn compute_kappa(tol: f64) -> Result<KappaEstimate, LabError> {
    Ok(kappa(tol)?)
}

pub fn kappa_text(k: &KappaEstimate) -> String {
    format!("kappa {:.16}\ntruncation {}\nbound {:.3e}\n", k.value, k.truncation, k.bound)
}

#[derive(Debug, Clone)]
pub struct SumsRequest {
    pub functional: Functional,
    pub g: TestFunction,
    pub deriv: u32,
    pub kernel: CovKernel,
    pub n: usize,
    pub horizon: f64,
    pub replicates: usize,
    pub seed: u64,
    pub times: Vec<f64>,
}

/// Samples the ensemble and evaluates the functional at each requested time.
/// Returns one row per replicate, one column per time.
pub fn sums(req: &SumsRequest) -> Result<Vec<Vec<f64>>, LabError> {
    if let Some(&t) = req.times.iter().find(|&&t| !(t >= 0.0 && t <= req.horizon)) {
        return Err(LabError::Config { field: "t".into(), message: format!("times must lie in [0, {}], got {t}", req.horizon) });
    }
    if req.replicates == 0 {
        return Err(LabError::Config { field: "M".into(), message: "need at least one replicate".into() });
    }
    let grid = Grid::new(req.n, req.horizon)?;
    let ens = sample_kernel(&req.kernel, &grid, req.replicates, req.seed)?;
    Ok(over_ensemble(&ens, |p| {
        let s = req.functional.apply(p, &grid, &req.g, req.deriv)?;
        Ok(req.times.iter().map(|&t| s.at(t)).collect())
    })?)
}

pub fn sample(kernel: &CovKernel, n: usize, horizon: f64, replicates: usize, seed: u64) -> Result<PathEnsemble, LabError> {
    if replicates == 0 {
        return Err(LabError::Config { field: "M".into(), message: "need at least one replicate".into() });
    }
    Ok(sample_kernel(kernel, &Grid::new(n, horizon)?, replicates, seed)?)
}

pub fn cov_table(n: usize, max_j: Option<usize>, lag: usize) -> Result<(DiscreteCovTable, CovAudit), LabError> {
    let max_j = max_j.unwrap_or(n);
    Ok((discrete_cov_table(n, max_j, lag)?, audit_inequalities(n, max_j)?))
}

/// Columns `j, sigma_sq, sigma_hat, cross_1, ..., cross_<lag>`; cells past the
/// end of the index range are left empty.
pub fn write_cov_table(table: &DiscreteCovTable, mut w: impl Write) -> io::Result<()> {
    write!(w, "j,sigma_sq,sigma_hat")?;
    for l in 1..=table.lag {
        write!(w, ",cross_{l}")?;
    }
    writeln!(w)?;
    for j in 1..=table.max_j {
        write!(w, "{j},{},{}", fmt_float(table.sigma_sq(j)), fmt_float(table.sigma_hat(j)))?;
        for l in 1..=table.lag {
            match table.cross(j, j + l) {
                Some(v) => write!(w, ",{}", fmt_float(v))?,
                None => write!(w, ",")?,
            }
        }
        writeln!(w)?;
    }
    w.flush()
}
