//! Exact second moments of heat-kernel increments on the grid, with an audit
//! of the standard increment inequalities.
//!
//! Everything here is computed from [`rho_heat`] by bilinearity; nothing is sampled.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::rho_heat;

/// Second moments for resolution `n`, indices `1 ..= max_j`.
#[derive(Debug, Clone, Serialize)]
pub struct DiscreteCovTable {
    pub n: usize,
    pub max_j: usize,
    pub lag: usize,
    /// `sigma_sq[j - 1] = E ΔF_j²`.
    pub sigma_sq: Vec<f64>,
    /// `sigma_hat[j - 1] = E[F(t_{j−1}) ΔF_j]`.
    pub sigma_hat: Vec<f64>,
    /// `cross[j - 1][l - 1] = E[ΔF_j ΔF_{j+l}]` for `1 <= l <= lag`, `j + l <= max_j`.
    pub cross: Vec<Vec<f64>>,
}

fn t(n: usize, j: usize) -> f64 {
    j as f64 / n as f64
}

/// `E[ΔF_i ΔF_j]` at resolution `n`.
pub fn increment_cov(n: usize, i: usize, j: usize) -> f64 {
    debug_assert!(i >= 1 && j >= 1);
    let r = |a: usize, b: usize| rho_heat(t(n, a), t(n, b)).expect("grid times are nonnegative");
    r(i, j) - r(i - 1, j) - r(i, j - 1) + r(i - 1, j - 1)
}

/// `E[(F(t_a) − F(t_b)) ΔF_j]` at resolution `n`.
fn level_increment_cov(n: usize, a: usize, b: usize, j: usize) -> f64 {
    let r = |p: usize, q: usize| rho_heat(t(n, p), t(n, q)).expect("grid times are nonnegative");
    (r(a, j) - r(a, j - 1)) - (r(b, j) - r(b, j - 1))
}

impl DiscreteCovTable {
    pub fn sigma_sq(&self, j: usize) -> f64 {
        self.sigma_sq[j - 1]
    }

    pub fn sigma_hat(&self, j: usize) -> f64 {
        self.sigma_hat[j - 1]
    }

    /// `E[ΔF_i ΔF_j]` from the banded store; `None` outside the band.
    pub fn cross(&self, i: usize, j: usize) -> Option<f64> {
        let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
        if lo == hi {
            return Some(self.sigma_sq(lo));
        }
        self.cross.get(lo - 1)?.get(hi - lo - 1).copied()
    }

    /// `E[F(t_{j−1}) ΔF_j]` relative to an earlier level `c`:
    /// `E[(F(t_{j−1}) − F(t_c)) ΔF_j]`.
    pub fn sigma_hat_offset(&self, j: usize, c: usize) -> f64 {
        level_increment_cov(self.n, j - 1, c, j)
    }
}

pub fn discrete_cov_table(n: usize, max_j: usize, lag: usize) -> Result<DiscreteCovTable> {
    if n == 0 || max_j == 0 {
        return Err(Error::domain("discrete_cov_table needs n >= 1 and max_j >= 1"));
    }
    let sigma_sq: Vec<f64> = (1..=max_j).map(|j| increment_cov(n, j, j)).collect();
    let sigma_hat: Vec<f64> = (1..=max_j).map(|j| level_increment_cov(n, j - 1, 0, j)).collect();
    let cross = (1..=max_j)
        .map(|j| (1..=lag).take_while(|l| j + l <= max_j).map(|l| increment_cov(n, j, j + l)).collect())
        .collect();
    Ok(DiscreteCovTable { n, max_j, lag, sigma_sq, sigma_hat, cross })
}

#[derive(Debug, Clone, Serialize)]
pub struct Violation {
    pub inequality: &'static str,
    pub i: usize,
    pub j: usize,
    pub value: f64,
    pub bound: f64,
}

/// Result of checking the increment inequalities over every index (pair).
#[derive(Debug, Clone, Serialize)]
pub struct CovAudit {
    pub n: usize,
    pub max_j: usize,
    pub sig2_checked: usize,
    pub sig3_checked: usize,
    pub cross_checked: usize,
    /// First violations of each kind (capped), empty when everything holds.
    pub violations: Vec<Violation>,
    pub violation_count: usize,
    /// `sup_j |σ̂_j + (2π)^{-1/2} Δt^{1/2}| / (j^{-1/2} Δt^{1/2})`.
    pub sighat_constant: f64,
    /// `sup |E[F(t_{j−1}) ΔF_i]| / (Δt^{1/2} ((j − i) ∨ 1)^{-1/2})` over `i <= j`.
    pub sigdel_constant: f64,
    /// `sup |E[(F(t_{i−1}) − F(t_c)) ΔF_j]| / (Δt^{1/2} ((j − i) ∨ 1)^{-1/2})`
    /// over `0 <= c < i <= j` with `c = 0`.
    pub sigdel_first_constant: f64,
}

impl CovAudit {
    pub fn passed(&self) -> bool {
        self.violation_count == 0
    }
}

const MAX_REPORTED: usize = 32;

/// Checks, for every `1 <= j <= max_j` (and every pair `i < j` for the cross
/// moments):
///
/// * `|σ_j² − (2/π)^{1/2} Δt^{1/2}| <= j^{-3/2} Δt^{1/2}`
/// * `π^{-1/2} Δt^{1/2} <= σ_j² <= 2 Δt^{1/2}`
/// * `−2 (j − i)^{-3/2} Δt^{1/2} <= E[ΔF_i ΔF_j] < 0`
///
/// and reports the empirical constants of the bounds whose constant is unspecified.
pub fn audit_inequalities(n: usize, max_j: usize) -> Result<CovAudit> {
    if n == 0 || max_j == 0 {
        return Err(Error::domain("audit needs n >= 1 and max_j >= 1"));
    }
    let sdt = t(n, 1).sqrt();
    let mut violations = Vec::new();
    let mut count = 0usize;
    let mut report = |v: Violation| {
        count += 1;
        if violations.len() < MAX_REPORTED {
            violations.push(v);
        }
    };

    let mut sighat_constant: f64 = 0.0;
    for j in 1..=max_j {
        let s2 = increment_cov(n, j, j);
        let bound = (j as f64).powf(-1.5) * sdt;
        let dev = (s2 - (2.0 / PI).sqrt() * sdt).abs();
        if dev > bound {
            report(Violation { inequality: "sig2", i: j, j, value: dev, bound });
        }
        let (lo, hi) = (sdt / PI.sqrt(), 2.0 * sdt);
        if s2 < lo {
            report(Violation { inequality: "sig3_lower", i: j, j, value: s2, bound: lo });
        }
        if s2 > hi {
            report(Violation { inequality: "sig3_upper", i: j, j, value: s2, bound: hi });
        }
        let sh = level_increment_cov(n, j - 1, 0, j);
        let ratio = (sh + sdt / (2.0 * PI).sqrt()).abs() / ((j as f64).powf(-0.5) * sdt);
        sighat_constant = sighat_constant.max(ratio);
    }

    // Cross moments over all pairs.
    let mut cross_checked = 0;
    let mut sigdel_constant: f64 = 0.0;
    let mut sigdel_first_constant: f64 = 0.0;
    for i in 1..=max_j {
        for j in i..=max_j {
            let scale = sdt * (((j - i).max(1)) as f64).powf(-0.5);
            // E[F(t_{j−1}) ΔF_i]
            let third = level_increment_cov(n, j - 1, 0, i).abs() / scale;
            sigdel_constant = sigdel_constant.max(third);
            let first = level_increment_cov(n, i - 1, 0, j).abs() / scale;
            sigdel_first_constant = sigdel_first_constant.max(first);
            if j == i {
                continue;
            }
            let c = increment_cov(n, i, j);
            let lower = -2.0 * ((j - i) as f64).powf(-1.5) * sdt;
            cross_checked += 1;
            if !(c < 0.0) {
                report(Violation { inequality: "cross_negative", i, j, value: c, bound: 0.0 });
            }
            if c < lower {
                report(Violation { inequality: "cross_lower", i, j, value: c, bound: lower });
            }
        }
    }

    Ok(CovAudit {
        n,
        max_j,
        sig2_checked: max_j,
        sig3_checked: max_j,
        cross_checked,
        violations,
        violation_count: count,
        sighat_constant,
        sigdel_constant,
        sigdel_first_constant,
    })
}
