//! Probabilists' Hermite polynomials `h_n(x) = (−1)^n e^{x²/2} dⁿ/dxⁿ e^{−x²/2}`.

use crate::analytic::combinatorics::{binom, double_factorial_odd};
use crate::analytic::poly::Poly;

/// `h_n(x)` by the three-term recurrence `h_{n+1} = x h_n − n h_{n−1}`, with
/// `h_{−1} ≡ 0`.
pub fn hermite_eval(n: i64, x: f64) -> f64 {
    if n < 0 {
        return 0.0;
    }
    let (mut prev, mut cur) = (0.0, 1.0);
    for k in 0..n {
        let next = x * cur - k as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Integer monomial coefficients of `h_0, ..., h_max`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HermiteBasis {
    max_degree: usize,
    /// `coeffs[n][k]` is the coefficient of `x^k` in `h_n`.
    coeffs: Vec<Vec<i128>>,
}

impl HermiteBasis {
    /// Table from the three-term recurrence.
    pub fn new(max_degree: usize) -> Self {
        let mut coeffs: Vec<Vec<i128>> = vec![vec![1]];
        if max_degree >= 1 {
            coeffs.push(vec![0, 1]);
        }
        for n in 1..max_degree {
            let mut next = vec![0i128; n + 2];
            for (k, &c) in coeffs[n].iter().enumerate() {
                next[k + 1] += c;
            }
            for (k, &c) in coeffs[n - 1].iter().enumerate() {
                next[k] -= n as i128 * c;
            }
            coeffs.push(next);
        }
        Self { max_degree, coeffs }
    }

    /// Table straight from the Rodrigues-type definition: writing
    /// `dⁿ/dxⁿ e^{−x²/2} = p_n(x) e^{−x²/2}` gives `p_{n+1} = p_n' − x p_n` and
    /// `h_n = (−1)^n p_n`.
    pub fn from_definition(max_degree: usize) -> Self {
        let mut p: Vec<i128> = vec![1];
        let mut coeffs = Vec::with_capacity(max_degree + 1);
        for n in 0..=max_degree {
            let sign = if n % 2 == 0 { 1 } else { -1 };
            coeffs.push(p.iter().map(|c| sign * c).collect());
            let mut next = vec![0i128; p.len() + 1];
            for (k, &c) in p.iter().enumerate() {
                if k > 0 {
                    next[k - 1] += k as i128 * c;
                }
                next[k + 1] -= c;
            }
            p = next;
        }
        Self { max_degree, coeffs }
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    pub fn coefficients(&self, n: usize) -> &[i128] {
        &self.coeffs[n]
    }

    pub fn poly(&self, n: usize) -> Poly {
        Poly::univariate(&self.coeffs[n].iter().map(|&c| c as f64).collect::<Vec<_>>())
    }

    pub fn eval(&self, n: usize, x: f64) -> f64 {
        self.coeffs[n].iter().rev().fold(0.0, |acc, &c| acc * x + c as f64)
    }
}

/// `xⁿ = Σ_j C(n, 2j) (2j − 1)!! h_{n−2j}(x)`, returned as `(n − 2j, coefficient)` pairs.
pub fn monomial_in_hermite(n: u32) -> Vec<(u32, u128)> {
    (0..=n / 2)
        .map(|j| (n - 2 * j, binom(n as i64, 2 * j as i64) * double_factorial_odd(j)))
        .collect()
}
