//! The series constants `γ_j` and `κ`.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};

/// `γ_j = 2√j − √(j−1) − √(j+1)`.
///
/// Evaluated as `2 / ((√(j+1) + √(j−1))(√j + √(j−1))(√j + √(j+1)))`, which is the
/// same number without the cancellation that ruins the direct form for large `j`.
pub fn gamma(j: i64) -> Result<f64> {
    if j < 1 {
        return Err(Error::domain(format!("gamma_j needs j >= 1, got {j}")));
    }
    Ok(gamma_unchecked(j as u64))
}

pub(crate) fn gamma_unchecked(j: u64) -> f64 {
    let (a, b, c) = (((j - 1) as f64).sqrt(), (j as f64).sqrt(), ((j + 1) as f64).sqrt());
    2.0 / ((c + a) * (b + a) * (b + c))
}

/// `Σ_{j ≤ J} γ_j = 1 + √J − √(J+1)` (telescoping).
pub fn gamma_partial_sum_closed(big_j: u64) -> f64 {
    1.0 + (big_j as f64).sqrt() - ((big_j + 1) as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KappaEstimate {
    pub value: f64,
    /// Number of series terms kept.
    pub truncation: u64,
    /// Certified bound on `|κ − value|` from the series tail.
    pub bound: f64,
}

impl KappaEstimate {
    pub fn contains(&self, x: f64) -> bool {
        (x - self.value).abs() <= self.bound
    }
}

/// `κ = (4/π + (2/π) Σ_j γ_j² (−1)^j)^{1/2}` with a certified truncation bound.
///
/// Using `γ_j ≤ 2^{-1/2} j^{-3/2}`, the tail of the squared series after `J`
/// terms is at most `(1/π) Σ_{j>J} j^{-3} ≤ (1/(2π)) J^{-2}`. `J` is the
/// smallest integer making that bound `≤ tol`; since `|κ − κ_J| = |κ² − κ_J²| /
/// (κ + κ_J)`, the reported bound on `κ` itself is tighter still.
pub fn kappa(tol: f64) -> Result<KappaEstimate> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::domain(format!("kappa tolerance must be positive, got {tol}")));
    }
    let big_j = (1.0 / (2.0 * PI * tol)).sqrt().ceil().max(1.0) as u64;
    let tail_sq = 1.0 / (2.0 * PI * (big_j as f64).powi(2));
    // Sum smallest terms first.
    let series: f64 = (1..=big_j)
        .rev()
        .map(|j| {
            let g = gamma_unchecked(j);
            if j % 2 == 0 { g * g } else { -g * g }
        })
        .sum();
    let kappa_sq = 4.0 / PI + 2.0 / PI * series;
    let value = kappa_sq.sqrt();
    let lower = (kappa_sq - tail_sq).max(0.0).sqrt();
    let bound = tail_sq / (value + lower);
    Ok(KappaEstimate { value, truncation: big_j, bound })
}

/// `κ` to well below `f64` display precision in the quantities built on it.
pub fn kappa_value() -> f64 {
    static KAPPA: std::sync::OnceLock<f64> = std::sync::OnceLock::new();
    *KAPPA.get_or_init(|| kappa(1e-12).expect("positive tolerance").value)
}
