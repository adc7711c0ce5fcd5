//! Monte Carlo experiments that check the limit statements at fixed times.
//!
//! Every experiment returns an [`ExperimentReport`] holding the statistics it
//! computed, the thresholds it compared them with and the per-replicate
//! samples. Aggregation is sequential in replicate order, so reports do not
//! depend on the worker count.

use serde::{Deserialize, Serialize};

use crate::analytic::constants::kappa_value;
use crate::error::{Error, Result};
use crate::functions::TestFunction;
use crate::grid::Grid;
use crate::kernels::CovKernel;
use crate::rng::derive_seed;
use crate::simulate::{sample_kernel, sample_kernel_coupled};
use crate::stats::{correlation, ks_one_sample_normal, ks_two_sample, SampleSummary};
use crate::sums::{alt_qv_weighted, bn_process, midpoint_sum, over_ensemble, over_replicates, trapezoid_sum};

/// Values below this are treated as zero when checking that a mean-square
/// error decreases: the difference is then exact up to roundoff.
pub const MSE_FLOOR: f64 = 1e-20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    AtMost,
    AtLeast,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub relation: Relation,
    pub passed: bool,
    /// Passed, but close enough to the threshold to deserve a look.
    pub flagged: bool,
}

impl Check {
    pub fn at_most(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self { name: name.into(), value, threshold, relation: Relation::AtMost, passed: value <= threshold, flagged: false }
    }

    pub fn at_least(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self { name: name.into(), value, threshold, relation: Relation::AtLeast, passed: value >= threshold, flagged: false }
    }

    /// KS check: fails above `threshold`, flagged above `threshold / 1.5`.
    fn ks(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        let mut c = Self::at_most(name, value, threshold);
        c.flagged = c.passed && value > threshold / KS_FLAG_RATIO;
        c
    }
}

/// Each KS threshold is this multiple of the underlying critical value.
pub const KS_FLAG_RATIO: f64 = 1.5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metric {
    pub name: String,
    pub value: f64,
}

/// Per-replicate values of one named quantity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sample {
    pub name: String,
    pub n: usize,
    pub t: f64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub kernel: String,
    pub function: Option<String>,
    pub seed: u64,
    pub replicates: usize,
    pub checks: Vec<Check>,
    pub metrics: Vec<Metric>,
    #[serde(skip)]
    pub samples: Vec<Sample>,
}

impl ExperimentReport {
    fn new(experiment: &str, kernel: &CovKernel, function: Option<&TestFunction>, seed: u64, replicates: usize) -> Self {
        Self {
            experiment: experiment.into(),
            kernel: kernel.id(),
            function: function.map(TestFunction::id),
            seed,
            replicates,
            checks: Vec::new(),
            metrics: Vec::new(),
            samples: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.iter().find(|m| m.name == name).map(|m| m.value)
    }

    fn metric_push(&mut self, name: impl Into<String>, value: f64) {
        self.metrics.push(Metric { name: name.into(), value });
    }
}

fn check_pair(x: &[f64], y: &[f64], grid: &Grid) -> Result<()> {
    let want = grid.steps() + 1;
    if x.len() != want || y.len() != want {
        return Err(Error::GridMismatch(format!(
            "paths have {} and {} values, grid expects {want}",
            x.len(),
            y.len()
        )));
    }
    Ok(())
}

/// `∫_{t_{k0}}^{t_{k1}} ∂_t g(X(s), s) ds` by the composite trapezoid rule.
fn time_integral(x: &[f64], grid: &Grid, g: &TestFunction, k0: usize, k1: usize) -> f64 {
    if g.is_time_independent() {
        return 0.0;
    }
    let dt = grid.dt();
    (k0 + 1..=k1).map(|j| 0.5 * dt * (g.dtdx(0, x[j - 1], grid.time(j - 1)) + g.dtdx(0, x[j], grid.time(j)))).sum()
}

/// Right side of the change-of-variable formula between grid indices `k0 < k1`.
fn rhs_between(x: &[f64], b: &[f64], grid: &Grid, g: &TestFunction, c: f64, k0: usize, k1: usize) -> f64 {
    let kappa = kappa_value();
    let ito: f64 = (k0 + 1..=k1).map(|j| g.dx(2, x[j - 1], grid.time(j - 1)) * (b[j] - b[j - 1])).sum();
    g.eval(x[k1], grid.time(k1)) - g.eval(x[k0], grid.time(k0)) - time_integral(x, grid, g, k0, k1) - 0.5 * kappa * c * c * ito
}

/// `g(X(t), t) − g(X(0), 0) − ∫_0^t ∂_t g(X(s), s) ds − (κc²/2) ∫_0^t ∂_x² g(X(s), s) dB(s)`
/// at `t` rounded down to the grid, with trapezoid time quadrature and a
/// left-point Itô sum.
pub fn rhs_formula(x: &[f64], b: &[f64], grid: &Grid, g: &TestFunction, t: f64, c: f64) -> Result<f64> {
    check_pair(x, b, grid)?;
    Ok(rhs_between(x, b, grid, g, c, 0, grid.index_of(t)))
}

/// `g(X(t), t) − g(X(0), 0) − ∫_0^t ∂_t g(X(s), s) ds` at `t` rounded down to the grid.
pub fn trapezoid_target(x: &[f64], grid: &Grid, g: &TestFunction, t: f64) -> Result<f64> {
    if x.len() != grid.steps() + 1 {
        return Err(Error::GridMismatch(format!("path has {} values, grid expects {}", x.len(), grid.steps() + 1)));
    }
    let k = grid.index_of(t);
    Ok(g.eval(x[k], grid.time(k)) - g.eval(x[0], 0.0) - time_integral(x, grid, g, 0, k))
}

/// True when `values` decrease apart from at most `allowed` increases;
/// entries below [`MSE_FLOOR`] count as equal.
pub fn decreasing_with_inversions(values: &[f64], allowed: usize) -> bool {
    inversions(values) <= allowed
}

fn inversions(values: &[f64]) -> usize {
    values.windows(2).filter(|w| w[1] > w[0] && w[1] > MSE_FLOOR).count()
}

fn horizon_for(probes: &[f64]) -> Result<f64> {
    let t = probes.iter().copied().fold(f64::NAN, f64::max);
    if probes.is_empty() || probes.iter().any(|&p| !(p > 0.0 && p.is_finite())) {
        return Err(Error::domain("probe times must be positive"));
    }
    Ok(t)
}

fn require_smoothness(g: &TestFunction, k: u32, r: u32) -> Result<()> {
    let s = g.smoothness();
    if !s.certifies(k, r) {
        return Err(Error::domain(format!("{} is only {s}, need C^{{{k},1}}_{r}", g.id())));
    }
    Ok(())
}

fn mse(values: &[f64]) -> f64 {
    values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrapezoidTolerances {
    /// Final mean-square error must not exceed this multiple of `Var(target)`.
    pub final_relative_mse: f64,
    pub allowed_inversions: usize,
}

impl Default for TrapezoidTolerances {
    fn default() -> Self {
        Self { final_relative_mse: 0.01, allowed_inversions: 1 }
    }
}

/// `E|T_n(g′, t) − target(t)|²` for each `n`, at every probe and as a sup over probes.
pub fn verify_trapezoid_ucp(
    kernel: &CovKernel,
    g: &TestFunction,
    ns: &[usize],
    m: usize,
    probes: &[f64],
    seed: u64,
    tol: &TrapezoidTolerances,
) -> Result<ExperimentReport> {
    require_smoothness(g, 7, 3)?;
    let horizon = horizon_for(probes)?;
    let mut rep = ExperimentReport::new("trapezoid", kernel, Some(g), seed, m);
    let mut sup_mse = Vec::new();
    let mut final_target = Vec::new();
    for (i, &n) in ns.iter().enumerate() {
        let grid = Grid::new(n, horizon)?;
        let ens = sample_kernel(kernel, &grid, m, derive_seed(seed, i as u64))?;
        let rows = over_ensemble(&ens, |p| {
            let s = trapezoid_sum(p, &grid, g, 1)?;
            probes
                .iter()
                .map(|&t| Ok((s.at(t) - trapezoid_target(p, &grid, g, t)?, trapezoid_target(p, &grid, g, t)?)))
                .collect::<Result<Vec<_>>>()
        })?;
        let mut sup = vec![0.0f64; m];
        for (pi, &t) in probes.iter().enumerate() {
            let diffs: Vec<f64> = rows.iter().map(|r| r[pi].0).collect();
            for (s, d) in sup.iter_mut().zip(&diffs) {
                *s = s.max(d.abs());
            }
            rep.metric_push(format!("mse[n={n},t={t}]"), mse(&diffs));
            rep.samples.push(Sample { name: "trapezoid_minus_target".into(), n, t, values: diffs });
        }
        let v = mse(&sup);
        rep.metric_push(format!("sup_mse[n={n}]"), v);
        sup_mse.push(v);
        if i + 1 == ns.len() {
            final_target = rows.iter().map(|r| r[probes.len() - 1].1).collect();
        }
    }
    let inv = inversions(&sup_mse);
    rep.checks.push(Check::at_most("mse_inversions", inv as f64, tol.allowed_inversions as f64));
    let var_target = reference_square_variance(kernel, g, horizon)
        .unwrap_or_else(|| SampleSummary::from_slice(&final_target).variance());
    rep.metric_push("target_variance", var_target);
    let last = *sup_mse.last().ok_or_else(|| Error::domain("need at least one n"))?;
    rep.checks.push(Check::at_most("final_mse", last, tol.final_relative_mse * var_target));
    Ok(rep)
}

/// `Var(X(t)²) = 2 v(t)²` for `g = x²` and a centered kernel.
fn reference_square_variance(kernel: &CovKernel, g: &TestFunction, t: f64) -> Option<f64> {
    if *g != TestFunction::Square || kernel.mean_drift().is_some() {
        return None;
    }
    let v = kernel.cov(t, t).ok()?;
    Some(2.0 * v * v)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ItoTolerances {
    pub ks_max: f64,
    pub mean_diff_max: f64,
    pub var_ratio_max: f64,
}

impl Default for ItoTolerances {
    fn default() -> Self {
        Self { ks_max: 0.10, mean_diff_max: 0.05, var_ratio_max: 0.15 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ItoSetup {
    pub n: usize,
    pub replicates: usize,
    /// Left end `ε` of the window `[ε, t]`; `None` means `[0, t]`.
    pub window_start: Option<f64>,
}

/// Compares `A = I_n(g′, t) − I_n(g′, ε)` with the right side of the
/// change-of-variable formula over the same window, built from an independent
/// Brownian motion.
pub fn verify_ito_formula(
    kernel: &CovKernel,
    g: &TestFunction,
    setup: &ItoSetup,
    probes: &[f64],
    seed: u64,
    tol: &ItoTolerances,
) -> Result<ExperimentReport> {
    require_smoothness(g, 9, 4)?;
    let c = kernel
        .heat_scale()
        .ok_or_else(|| Error::domain(format!("kernel {} has no c F + ξ form", kernel.id())))?;
    let horizon = horizon_for(probes)?;
    let grid = Grid::new(setup.n, horizon)?;
    let name = if setup.window_start.is_some() { "ito_window" } else { "ito" };
    let mut rep = ExperimentReport::new(name, kernel, Some(g), seed, setup.replicates);
    let (x, b) = sample_kernel_coupled(kernel, &grid, setup.replicates, seed)?;
    // Start of the window, rounded to an even index so both sides use the same
    // points: the midpoint series at ε covers exactly 2⌊nε/2⌋ steps.
    let k0 = match setup.window_start {
        Some(eps) if eps < 0.0 || eps >= horizon => return Err(Error::domain(format!("window start {eps} outside [0, {horizon})"))),
        Some(eps) => 2 * (grid.index_of(eps) / 2),
        None => 0,
    };
    let t0 = grid.time(k0);
    rep.metric_push("c", c);
    rep.metric_push("window_start", t0);
    let rows = over_replicates(setup.replicates, |r| {
        let (p, bp) = (x.path(r), b.path(r));
        let s = midpoint_sum(p, &grid, g, 1)?;
        probes
            .iter()
            .map(|&t| {
                let k1 = grid.index_of(t);
                if k1 <= k0 {
                    return Err(Error::domain(format!("probe {t} is not after the window start {t0}")));
                }
                Ok((s.at(t) - s.at(t0), rhs_between(p, bp, &grid, g, c, k0, k1)))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    for (pi, &t) in probes.iter().enumerate() {
        let a: Vec<f64> = rows.iter().map(|r| r[pi].0).collect();
        let bb: Vec<f64> = rows.iter().map(|r| r[pi].1).collect();
        let (sa, sb) = (SampleSummary::from_slice(&a), SampleSummary::from_slice(&bb));
        let t1 = grid.time(grid.index_of(t));
        let reference = reference_rhs_variance(kernel, g, c, t0, t1)?;
        let ref_var = reference.unwrap_or(sb.variance());
        rep.metric_push(format!("mean_a[t={t}]"), sa.mean());
        rep.metric_push(format!("mean_b[t={t}]"), sb.mean());
        rep.metric_push(format!("var_a[t={t}]"), sa.variance());
        rep.metric_push(format!("var_b[t={t}]"), sb.variance());
        rep.metric_push(format!("reference_variance[t={t}]"), ref_var);
        rep.metric_push(format!("reference_is_analytic[t={t}]"), if reference.is_some() { 1.0 } else { 0.0 });
        if let Some(mean) = reference_square_mean(kernel, g, t0, t1)? {
            rep.metric_push(format!("mean_a_minus_analytic[t={t}]"), sa.mean() - mean);
        }
        rep.checks.push(Check::ks(format!("ks[t={t}]"), ks_two_sample(&a, &bb)?, tol.ks_max));
        rep.checks.push(Check::at_most(format!("abs_mean_diff[t={t}]"), (sa.mean() - sb.mean()).abs(), tol.mean_diff_max));
        let ratio = if ref_var > 0.0 { sa.variance() / ref_var } else { f64::NAN };
        rep.checks.push(Check::at_most(format!("abs_var_ratio_minus_one[t={t}]"), (ratio - 1.0).abs(), tol.var_ratio_max));
        rep.samples.push(Sample { name: "midpoint".into(), n: setup.n, t, values: a });
        rep.samples.push(Sample { name: "formula_rhs".into(), n: setup.n, t, values: bb });
    }
    Ok(rep)
}

/// `Var(X(t₁)² − X(t₀)² − κc²(B(t₁) − B(t₀)))` for `g = x²` and a centered kernel.
fn reference_rhs_variance(kernel: &CovKernel, g: &TestFunction, c: f64, t0: f64, t1: f64) -> Result<Option<f64>> {
    if *g != TestFunction::Square || kernel.mean_drift().is_some() {
        return Ok(None);
    }
    let (v0, v1, r) = (kernel.cov(t0, t0)?, kernel.cov(t1, t1)?, kernel.cov(t0, t1)?);
    let k = kappa_value();
    Ok(Some(2.0 * (v1 * v1 + v0 * v0 - 2.0 * r * r) + k * k * c.powi(4) * (t1 - t0)))
}

fn reference_square_mean(kernel: &CovKernel, g: &TestFunction, t0: f64, t1: f64) -> Result<Option<f64>> {
    if *g != TestFunction::Square || kernel.mean_drift().is_some() {
        return Ok(None);
    }
    Ok(Some(kernel.cov(t1, t1)? - kernel.cov(t0, t0)?))
}

/// Runs `experiment` with seeds `derive_seed(seed, r)` for `r < repeats`; the
/// combined report passes when at least `min_passing` runs pass.
pub fn with_repeats(
    repeats: usize,
    min_passing: usize,
    seed: u64,
    experiment: impl Fn(u64) -> Result<ExperimentReport>,
) -> Result<(bool, Vec<ExperimentReport>)> {
    if repeats == 0 || min_passing > repeats {
        return Err(Error::domain(format!("need 0 < min_passing <= repeats, got {min_passing} of {repeats}")));
    }
    let reports: Vec<ExperimentReport> =
        (0..repeats).map(|r| experiment(if repeats == 1 { seed } else { derive_seed(seed, r as u64) })).collect::<Result<_>>()?;
    let passing = reports.iter().filter(|r| r.passed()).count();
    Ok((passing >= min_passing, reports))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BnTolerances {
    pub ks_max: f64,
    pub corr_max: f64,
}

impl Default for BnTolerances {
    fn default() -> Self {
        Self { ks_max: 0.06, corr_max: 0.1 }
    }
}

/// Normality of `B_n(t)/√t`, asymptotic independence from the process and
/// orthogonality of increments; the fourth-moment constant is reported.
pub fn verify_bn_limit(
    kernel: &CovKernel,
    n: usize,
    m: usize,
    probes: &[f64],
    seed: u64,
    tol: &BnTolerances,
) -> Result<ExperimentReport> {
    let horizon = horizon_for(probes)?;
    let grid = Grid::new(n, horizon)?;
    let mut rep = ExperimentReport::new("bn", kernel, None, seed, m);
    let ens = sample_kernel(kernel, &grid, m, seed)?;
    let half = horizon / 2.0;
    let mut times: Vec<f64> = probes.to_vec();
    times.push(half);
    let rows = over_ensemble(&ens, |p| {
        let s = bn_process(p, &grid)?;
        Ok(times.iter().map(|&t| s.at(t)).collect::<Vec<_>>())
    })?;
    let col = |i: usize| rows.iter().map(|r| r[i]).collect::<Vec<f64>>();
    for (i, &t) in probes.iter().enumerate() {
        let scaled: Vec<f64> = col(i).iter().map(|v| v / t.sqrt()).collect();
        let s = SampleSummary::from_slice(&scaled);
        rep.metric_push(format!("mean[t={t}]"), s.mean());
        rep.metric_push(format!("variance[t={t}]"), s.variance());
        rep.checks.push(Check::ks(format!("ks_normal[t={t}]"), ks_one_sample_normal(&scaled, 0.0, 1.0)?, tol.ks_max));
        rep.samples.push(Sample { name: "bn".into(), n, t, values: col(i) });
    }
    let end = rows.iter().map(|r| r[probes.iter().position(|&p| p == horizon).expect("horizon is a probe")]).collect::<Vec<_>>();
    for &s in probes {
        let xs = ens.column(grid.index_of(s));
        let r = correlation(&end, &xs)?.r;
        rep.checks.push(Check::at_most(format!("abs_corr_bn_end_x[s={s}]"), r.abs(), tol.corr_max));
    }
    let mid = col(probes.len());
    let inc: Vec<f64> = end.iter().zip(&mid).map(|(a, b)| a - b).collect();
    rep.checks.push(Check::at_most("abs_corr_increments", correlation(&inc, &mid)?.r.abs(), tol.corr_max));
    // E|B_n(t) − B_n(s)|⁴ / |t − s|² over all pairs of probe times (and t/2).
    let mut c_hat = 0.0f64;
    for i in 0..times.len() {
        for j in 0..times.len() {
            let (s, t) = (times[i], times[j]);
            if t <= s {
                continue;
            }
            let m4 = rows.iter().map(|r| (r[j] - r[i]).powi(4)).sum::<f64>() / m as f64;
            c_hat = c_hat.max(m4 / (t - s).powi(2));
        }
        let m4 = rows.iter().map(|r| r[i].powi(4)).sum::<f64>() / m as f64;
        c_hat = c_hat.max(m4 / times[i].powi(2));
    }
    rep.metric_push("fourth_moment_constant", c_hat);
    Ok(rep)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExpansionTolerances {
    pub allowed_inversions: usize,
}

impl Default for ExpansionTolerances {
    fn default() -> Self {
        Self { allowed_inversions: 1 }
    }
}

/// Mean square of `I_n(g′, t) − [g(X(t), t) − g(X(0), 0) − ∫∂_t g − ½ J_n(g″, t)]` for each `n`.
pub fn verify_expansion_residual(
    kernel: &CovKernel,
    g: &TestFunction,
    ns: &[usize],
    m: usize,
    t: f64,
    seed: u64,
    tol: &ExpansionTolerances,
) -> Result<ExperimentReport> {
    require_smoothness(g, 7, 3)?;
    let mut rep = ExperimentReport::new("expansion", kernel, Some(g), seed, m);
    let mut mses = Vec::new();
    for (i, &n) in ns.iter().enumerate() {
        let grid = Grid::new(n, t)?;
        let ens = sample_kernel(kernel, &grid, m, derive_seed(seed, i as u64))?;
        let res = over_ensemble(&ens, |p| {
            let mid = midpoint_sum(p, &grid, g, 1)?.at(t);
            let jn = alt_qv_weighted(p, &grid, g, 2)?.at(t);
            Ok(mid - (trapezoid_target(p, &grid, g, t)? - 0.5 * jn))
        })?;
        let v = mse(&res);
        rep.metric_push(format!("mse[n={n}]"), v);
        rep.samples.push(Sample { name: "expansion_residual".into(), n, t, values: res });
        mses.push(v);
    }
    rep.checks.push(Check::at_most("mse_inversions", inversions(&mses) as f64, tol.allowed_inversions as f64));
    Ok(rep)
}
