//! Discrete Riemann-type functionals of a single path.
//!
//! Each functional is a sum of per-index terms; a [`StepSeries`] stores the
//! prefix sums and an [`IndexRule`] saying how many terms are included at time
//! `t`. That keeps every `t` query O(1) and makes each display's index bound
//! explicit.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::constants::kappa_value;
use crate::error::{Error, Result};
use crate::functions::TestFunction;
use crate::grid::{floor_index, Grid};
use crate::simulate::PathEnsemble;

/// Number of terms included at time `t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum IndexRule {
    /// `⌊nt⌋` one-step terms.
    Floor,
    /// `2⌊nt/2⌋` one-step terms.
    EvenFloor,
    /// `⌊nt/2⌋` two-step (pair) terms, capped by the number available.
    Pairs,
    /// `2m³⌊mt/2⌋` one-step terms.
    Smoothed { m: usize },
}

impl IndexRule {
    pub fn count(&self, n: usize, t: f64) -> usize {
        match *self {
            IndexRule::Floor => floor_index(n as f64 * t),
            IndexRule::EvenFloor => 2 * (floor_index(n as f64 * t) / 2),
            IndexRule::Pairs => floor_index(n as f64 * t) / 2,
            IndexRule::Smoothed { m } => 2 * m * m * m * floor_index(m as f64 * t / 2.0),
        }
    }
}

/// Right-continuous piecewise-constant function of `t` on `[0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepSeries {
    grid: Grid,
    rule: IndexRule,
    /// `prefix[c]` = sum of the first `c` terms; `prefix[0] = 0`.
    prefix: Vec<f64>,
}

impl StepSeries {
    fn from_terms(grid: &Grid, rule: IndexRule, terms: impl IntoIterator<Item = f64>) -> Self {
        let mut prefix = vec![0.0];
        let mut acc = 0.0;
        for v in terms {
            acc += v;
            prefix.push(acc);
        }
        Self { grid: *grid, rule, prefix }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn rule(&self) -> IndexRule {
        self.rule
    }

    /// Partial sums by number of terms.
    pub fn prefix(&self) -> &[f64] {
        &self.prefix
    }

    /// Value at `t`, clamped to `[0, T]`.
    pub fn at(&self, t: f64) -> f64 {
        let t = t.clamp(0.0, self.grid.horizon());
        let c = self.rule.count(self.grid.n(), t).min(self.prefix.len() - 1);
        self.prefix[c]
    }

    pub fn try_at(&self, t: f64) -> Result<f64> {
        if !(0.0..=self.grid.horizon() + 1e-12).contains(&t) {
            return Err(Error::domain(format!("t = {t} outside [0, {}]", self.grid.horizon())));
        }
        Ok(self.at(t))
    }

    /// Values at every grid time `t_0, ..., t_N`.
    pub fn on_grid(&self) -> Vec<f64> {
        self.grid.times().into_iter().map(|t| self.at(t)).collect()
    }
}

fn check_path(path: &[f64], grid: &Grid) -> Result<()> {
    if path.len() != grid.steps() + 1 {
        return Err(Error::GridMismatch(format!(
            "path has {} values, grid expects {}",
            path.len(),
            grid.steps() + 1
        )));
    }
    Ok(())
}

fn integrand<'a>(g: &'a TestFunction, deriv: u32, grid: &'a Grid, path: &'a [f64]) -> impl Fn(usize) -> f64 + 'a {
    move |j| g.dx(deriv, path[j], grid.time(j))
}

/// `I_n(t) = Σ_{j ≤ ⌊nt/2⌋} g(X(t_{2j−1}), t_{2j−1}) (X(t_{2j}) − X(t_{2j−2}))`
/// with `g` replaced by `∂_x^{deriv} g`.
pub fn midpoint_sum(path: &[f64], grid: &Grid, g: &TestFunction, deriv: u32) -> Result<StepSeries> {
    check_path(path, grid)?;
    let f = integrand(g, deriv, grid, path);
    let pairs = grid.steps() / 2;
    Ok(StepSeries::from_terms(
        grid,
        IndexRule::Pairs,
        (1..=pairs).map(|j| f(2 * j - 1) * (path[2 * j] - path[2 * j - 2])),
    ))
}

/// `Î_n(t) = Σ_{j ≤ ⌊nt/2⌋} g(X(t_{2j}), t_{2j}) (X(t_{2j+1}) − X(t_{2j−1}))`;
/// pairs with `2j + 1 > N` are dropped since the path ends at `t_N`.
pub fn offset_midpoint_sum(path: &[f64], grid: &Grid, g: &TestFunction, deriv: u32) -> Result<StepSeries> {
    check_path(path, grid)?;
    let f = integrand(g, deriv, grid, path);
    let pairs = grid.steps().saturating_sub(1) / 2;
    Ok(StepSeries::from_terms(
        grid,
        IndexRule::Pairs,
        (1..=pairs).map(|j| f(2 * j) * (path[2 * j + 1] - path[2 * j - 1])),
    ))
}

/// `T_n(t) = Σ_{j ≤ ⌊nt⌋} ½(g(X(t_{j−1}), t_{j−1}) + g(X(t_j), t_j)) ΔX_j`.
pub fn trapezoid_sum(path: &[f64], grid: &Grid, g: &TestFunction, deriv: u32) -> Result<StepSeries> {
    check_path(path, grid)?;
    let f = integrand(g, deriv, grid, path);
    Ok(StepSeries::from_terms(
        grid,
        IndexRule::Floor,
        (1..=grid.steps()).map(|j| 0.5 * (f(j - 1) + f(j)) * (path[j] - path[j - 1])),
    ))
}

fn alternating_terms<'a>(path: &'a [f64], weight: impl Fn(usize) -> f64 + 'a) -> impl Iterator<Item = f64> + 'a {
    (1..path.len()).map(move |j| {
        let d = path[j] - path[j - 1];
        let s = if j % 2 == 0 { 1.0 } else { -1.0 };
        s * weight(j - 1) * d * d
    })
}

/// `J_n(t) = Σ_{j ≤ 2⌊nt/2⌋} g(X(t_{j−1}), t_{j−1}) ΔX_j² (−1)^j`.
pub fn alt_qv_weighted(path: &[f64], grid: &Grid, g: &TestFunction, deriv: u32) -> Result<StepSeries> {
    check_path(path, grid)?;
    let f = integrand(g, deriv, grid, path);
    Ok(StepSeries::from_terms(grid, IndexRule::EvenFloor, alternating_terms(path, f)))
}

/// `Q_n(t) = Σ_{j ≤ ⌊nt/2⌋} (ΔX_{2j}² − ΔX_{2j−1}²)`, summed pair by pair.
pub fn qn_process(path: &[f64], grid: &Grid) -> Result<StepSeries> {
    check_path(path, grid)?;
    let sq = |j: usize| (path[j] - path[j - 1]).powi(2);
    let pairs = grid.steps() / 2;
    // Expand each pair to two one-step entries so the series follows 2⌊nt/2⌋.
    let mut terms = Vec::with_capacity(grid.steps());
    for j in 1..=pairs {
        terms.push(0.0);
        terms.push(sq(2 * j) - sq(2 * j - 1));
    }
    if grid.steps() % 2 == 1 {
        terms.push(0.0);
    }
    Ok(StepSeries::from_terms(grid, IndexRule::EvenFloor, terms))
}

/// `B_n(t) = κ^{-1} Σ_{j ≤ 2⌊nt/2⌋} ΔX_j² (−1)^j`.
pub fn bn_process(path: &[f64], grid: &Grid) -> Result<StepSeries> {
    check_path(path, grid)?;
    let k = kappa_value();
    Ok(StepSeries::from_terms(grid, IndexRule::EvenFloor, alternating_terms(path, |_| 1.0 / k)))
}

/// `B̄_n(t) = κ^{-1} Σ_{j ≤ 2m³⌊mt/2⌋} ΔX_j² (−1)^j` with `m = ⌊n^{1/4}⌋`.
pub fn bn_smoothed(path: &[f64], grid: &Grid) -> Result<StepSeries> {
    check_path(path, grid)?;
    if grid.n() < 16 {
        return Err(Error::domain(format!("smoothed B_n needs n >= 16, got {}", grid.n())));
    }
    let m = smoothing_level(grid.n());
    let k = kappa_value();
    Ok(StepSeries::from_terms(grid, IndexRule::Smoothed { m }, alternating_terms(path, |_| 1.0 / k)))
}

/// `⌊n^{1/4}⌋`, computed exactly.
pub fn smoothing_level(n: usize) -> usize {
    let mut m = (n as f64).powf(0.25).floor() as usize;
    while (m + 1).pow(4) <= n {
        m += 1;
    }
    while m > 0 && m.pow(4) > n {
        m -= 1;
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parity {
    Odd,
    Even,
    All,
}

impl Parity {
    fn admits(self, j: usize) -> bool {
        match self {
            Parity::Odd => j % 2 == 1,
            Parity::Even => j % 2 == 0,
            Parity::All => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalPoint {
    Left,
    Right,
}

/// `Σ_{j ≤ ⌊nt⌋, j admitted by parity} g(X(s_j), s_j) ΔX_j^p` with
/// `s_j = t_{j−1}` (left) or `t_j` (right).
pub fn power_sum(
    path: &[f64],
    grid: &Grid,
    g: &TestFunction,
    deriv: u32,
    p: u32,
    parity: Parity,
    eval_point: EvalPoint,
) -> Result<StepSeries> {
    check_path(path, grid)?;
    if p != 3 && p != 4 {
        return Err(Error::domain(format!("power must be 3 or 4, got {p}")));
    }
    let f = integrand(g, deriv, grid, path);
    Ok(StepSeries::from_terms(
        grid,
        IndexRule::Floor,
        (1..=grid.steps()).map(|j| {
            if !parity.admits(j) {
                return 0.0;
            }
            let at = match eval_point {
                EvalPoint::Left => j - 1,
                EvalPoint::Right => j,
            };
            f(at) * (path[j] - path[j - 1]).powi(p as i32)
        }),
    ))
}

/// Any of the functionals above, selected at run time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "functional", rename_all = "snake_case")]
pub enum Functional {
    Midpoint,
    Offset,
    Trapezoid,
    Jn,
    Bn,
    Qn,
    Bnbar,
    Power { p: u32, parity: Parity, eval_point: EvalPoint },
}

impl Functional {
    /// `g` and `deriv` are ignored by `Bn`, `Qn` and `Bnbar`.
    pub fn apply(&self, path: &[f64], grid: &Grid, g: &TestFunction, deriv: u32) -> Result<StepSeries> {
        match *self {
            Functional::Midpoint => midpoint_sum(path, grid, g, deriv),
            Functional::Offset => offset_midpoint_sum(path, grid, g, deriv),
            Functional::Trapezoid => trapezoid_sum(path, grid, g, deriv),
            Functional::Jn => alt_qv_weighted(path, grid, g, deriv),
            Functional::Bn => bn_process(path, grid),
            Functional::Qn => qn_process(path, grid),
            Functional::Bnbar => bn_smoothed(path, grid),
            Functional::Power { p, parity, eval_point } => power_sum(path, grid, g, deriv, p, parity, eval_point),
        }
    }
}

/// Applies `f` to every path in parallel; results are in replicate order.
pub fn over_ensemble<T: Send>(ens: &PathEnsemble, f: impl Fn(&[f64]) -> Result<T> + Sync) -> Result<Vec<T>> {
    over_replicates(ens.replicates(), |m| f(ens.path(m)))
}

/// `f(0), ..., f(count − 1)` evaluated in parallel, collected in order.
pub fn over_replicates<T: Send>(count: usize, f: impl Fn(usize) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    (0..count).into_par_iter().map(f).collect()
}
