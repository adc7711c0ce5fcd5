use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack used when flooring `n * t`, so that `t = 0.3, n = 10` lands on step 3
/// rather than 2 after rounding.
const FLOOR_SLACK: f64 = 1e-9;

/// `floor(x)` with a tiny upward slack against representation error.
pub fn floor_index(x: f64) -> usize {
    if x <= 0.0 {
        0
    } else {
        (x + FLOOR_SLACK).floor() as usize
    }
}

/// Uniform time grid `t_j = j / n`, `0 <= j <= floor(n T)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    n: usize,
    horizon: f64,
    steps: usize,
}

impl Grid {
    pub fn new(n: usize, horizon: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::domain("grid resolution n must be positive"));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::domain(format!("horizon must be positive, got {horizon}")));
        }
        let steps = floor_index(n as f64 * horizon);
        if steps < 1 {
            return Err(Error::domain(format!(
                "grid needs at least one step, floor(n T) = 0 for n = {n}, T = {horizon}"
            )));
        }
        Ok(Self { n, horizon, steps })
    }

    /// Steps per unit time.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Number of steps `N = floor(n T)`; paths carry `N + 1` values.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn time(&self, j: usize) -> f64 {
        j as f64 / self.n as f64
    }

    /// `t_0, ..., t_N`.
    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps).map(|j| self.time(j)).collect()
    }

    /// `floor(n t)`, clamped to the last grid index.
    pub fn index_of(&self, t: f64) -> usize {
        floor_index(self.n as f64 * t).min(self.steps)
    }
}
