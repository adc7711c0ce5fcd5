//! Exact moments of centered jointly Gaussian vectors by Isserlis' theorem.

use std::collections::HashMap;

use crate::analytic::poly::Poly;
use crate::error::{Error, Result};

/// Largest total degree of a moment the evaluator will expand.
pub const MAX_TOTAL_DEGREE: u32 = 32;

/// Centered Gaussian vector given by its covariance matrix.
#[derive(Debug, Clone)]
pub struct GaussianMoments {
    cov: Vec<Vec<f64>>,
    memo: HashMap<Vec<u32>, f64>,
}

impl GaussianMoments {
    pub fn new(cov: Vec<Vec<f64>>) -> Result<Self> {
        let d = cov.len();
        if cov.iter().any(|r| r.len() != d) {
            return Err(Error::domain("covariance must be square"));
        }
        for i in 0..d {
            for j in 0..d {
                if cov[i][j] != cov[j][i] {
                    return Err(Error::domain("covariance must be symmetric"));
                }
            }
        }
        Ok(Self { cov, memo: HashMap::new() })
    }

    /// Standard pair `(X_r, Y_r)`: unit variances, correlation `r`.
    pub fn correlated_pair(r: f64) -> Self {
        Self::new(vec![vec![1.0, r], vec![r, 1.0]]).expect("2x2 symmetric")
    }

    pub fn dim(&self) -> usize {
        self.cov.len()
    }

    /// `E[Π_i X_i^{k_i}]`.
    pub fn moment(&mut self, exps: &[u32]) -> Result<f64> {
        if exps.len() != self.dim() {
            return Err(Error::domain("exponent vector length differs from dimension"));
        }
        let total: u32 = exps.iter().sum();
        if total > MAX_TOTAL_DEGREE {
            return Err(Error::Complexity(format!("moment of total degree {total} exceeds {MAX_TOTAL_DEGREE}")));
        }
        Ok(self.moment_rec(exps.to_vec()))
    }

    // E[x_a · rest] = Σ_b Cov(a, b) · (#x_b in rest) · E[rest without one x_b].
    fn moment_rec(&mut self, exps: Vec<u32>) -> f64 {
        let total: u32 = exps.iter().sum();
        if total == 0 {
            return 1.0;
        }
        if total % 2 == 1 {
            return 0.0;
        }
        if let Some(&v) = self.memo.get(&exps) {
            return v;
        }
        let a = exps.iter().position(|&k| k > 0).expect("positive total");
        let mut rest = exps.clone();
        rest[a] -= 1;
        let mut acc = 0.0;
        for b in 0..rest.len() {
            if rest[b] == 0 || self.cov[a][b] == 0.0 {
                continue;
            }
            let mult = rest[b] as f64;
            let mut next = rest.clone();
            next[b] -= 1;
            acc += self.cov[a][b] * mult * self.moment_rec(next);
        }
        self.memo.insert(exps, acc);
        acc
    }

    /// `E[p(X)]`.
    pub fn expect(&mut self, p: &Poly) -> Result<f64> {
        if p.nvars() != self.dim() {
            return Err(Error::domain(format!(
                "polynomial has {} variables, Gaussian vector has {}",
                p.nvars(),
                self.dim()
            )));
        }
        let mut acc = 0.0;
        for (e, c) in p.terms() {
            acc += c * self.moment(e)?;
        }
        Ok(acc)
    }
}

/// `E[g(X_r) h(Y_r)]` for univariate polynomials and the standard pair with correlation `r`.
pub fn pair_expectation(g: &Poly, h: &Poly, r: f64) -> Result<f64> {
    let joint = g.embed(2, &[0]).mul(&h.embed(2, &[1]));
    GaussianMoments::correlated_pair(r).expect(&joint)
}
