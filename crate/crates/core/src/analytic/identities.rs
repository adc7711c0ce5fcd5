//! Exhaustive checks of the Hermite, Gaussian-moment and combinatorial
//! identities, evaluated with the exact Wick oracle.

use serde::Serialize;

use crate::analytic::combinatorics::{binom, bounded_multi_binom_sum, factorial, vandermonde_split_sum};
use crate::analytic::gauss_taylor::{gauss_taylor, JointGaussian};
use crate::analytic::hermite::HermiteBasis;
use crate::analytic::poly::Poly;
use crate::analytic::wick::{pair_expectation, GaussianMoments};
use crate::error::Result;
use crate::kernels::rho_heat;
use crate::stats::{loglog_rate, RateFit};

/// Correlations at which the pair identities are checked.
pub const PAIR_CORRELATIONS: [f64; 5] = [-0.9, -0.5, 0.0, 0.5, 0.9];

/// Error of `got` against `want`, absolute for `|want| <= 1` and relative
/// beyond; the float evaluation of degree-16 moments carries cancellation
/// proportional to their size.
fn scaled_error(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(1.0)
}

#[derive(Debug, Clone, Serialize)]
pub struct IdentityReport {
    pub name: String,
    pub cases: usize,
    pub max_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl IdentityReport {
    fn new(name: &str, cases: usize, max_error: f64, tolerance: f64) -> Self {
        Self { name: name.into(), cases, max_error, tolerance, passed: max_error <= tolerance }
    }
}

/// `E[h_n(X_r) h_m(Y_r)] = δ_{nm} n! rⁿ` for `n, m <= max_degree`.
pub fn hermite_orthogonality(max_degree: usize, tol: f64) -> Result<IdentityReport> {
    let basis = HermiteBasis::new(max_degree);
    let (mut cases, mut worst) = (0, 0.0f64);
    for &r in &PAIR_CORRELATIONS {
        for n in 0..=max_degree {
            for m in 0..=max_degree {
                let got = pair_expectation(&basis.poly(n), &basis.poly(m), r)?;
                let want = if n == m { factorial(n as u32) as f64 * r.powi(n as i32) } else { 0.0 };
                worst = worst.max(scaled_error(got, want));
                cases += 1;
            }
        }
    }
    Ok(IdentityReport::new("hermite_orthogonality", cases, worst, tol))
}

/// Polynomials of degree `<= max_degree` used by the reduction identities:
/// every monomial plus two dense mixtures.
fn probe_polys(max_degree: u32) -> Vec<Poly> {
    let mut out: Vec<Poly> = (0..=max_degree).map(|k| Poly::monomial(vec![k], 1.0)).collect();
    let dense: Vec<f64> = (0..=max_degree).map(|k| 1.0 / (1.0 + k as f64) * if k % 3 == 1 { -1.0 } else { 1.0 }).collect();
    out.push(Poly::univariate(&dense));
    out.push(Poly::univariate(&[0.5, -2.0, 0.0, 1.5]).pow(2));
    out.retain(|p| p.degree() <= max_degree);
    out
}

/// `E[g(X_r) h_n(Y_r)] = r E[g′(X_r) h_{n−1}(Y_r)]` for `n >= 1`.
pub fn hermite_reduction(max_degree: u32, tol: f64) -> Result<IdentityReport> {
    let basis = HermiteBasis::new(max_degree as usize);
    let (mut cases, mut worst) = (0, 0.0f64);
    for g in probe_polys(max_degree) {
        let dg = g.derivative(0);
        for &r in &PAIR_CORRELATIONS {
            for n in 1..=max_degree as usize {
                let lhs = pair_expectation(&g, &basis.poly(n), r)?;
                let rhs = r * pair_expectation(&dg, &basis.poly(n - 1), r)?;
                worst = worst.max(scaled_error(lhs, rhs));
                cases += 1;
            }
        }
    }
    Ok(IdentityReport::new("hermite_reduction", cases, worst, tol))
}

/// Errors `|(f(r+δ) − f(r−δ))/(2δ) − E[g′(X_r)h′(Y_r)]|` with `f(r) = E[g(X_r)h(Y_r)]`.
pub fn covariance_derivative_errors(g: &Poly, h: &Poly, r: f64, steps: &[f64]) -> Result<Vec<f64>> {
    let exact = pair_expectation(&g.derivative(0), &h.derivative(0), r)?;
    steps
        .iter()
        .map(|&d| {
            let fd = (pair_expectation(g, h, r + d)? - pair_expectation(g, h, r - d)?) / (2.0 * d);
            Ok((fd - exact).abs())
        })
        .collect()
}

/// Relative error of `V_φ′(t) = ½ V′(t) E[φ″(X(t))]` for `φ = x⁴` under the
/// heat kernel, with the left side by a centered difference of step `step`.
pub fn variance_derivative_identity(t: f64, step: f64) -> Result<f64> {
    let phi = Poly::monomial(vec![4], 1.0);
    let v = |s: f64| rho_heat(s, s);
    let v_phi = |s: f64| -> Result<f64> { GaussianMoments::new(vec![vec![v(s)?]])?.expect(&phi) };
    let lhs = (v_phi(t + step)? - v_phi(t - step)?) / (2.0 * step);
    // V(t) = (t/π)^{1/2}, so V′(t) = (4πt)^{-1/2}.
    let v_prime = 1.0 / (4.0 * std::f64::consts::PI * t).sqrt();
    let rhs = 0.5 * v_prime * GaussianMoments::new(vec![vec![v(t)?]])?.expect(&phi.derivative(0).derivative(0))?;
    Ok(((lhs - rhs) / rhs).abs())
}

/// The two binomial lemmas, enumerated exhaustively:
/// `Σ_j C(a−c, b−j) C(c, j) = C(a, b)` for `0 <= c <= a <= max`, all `b`, and
/// `Σ_{|α| = m, α <= γ} C(γ, α) = C(|γ|, m)` for every `γ` of dimension up to
/// 4 with `|γ| <= max`.
pub fn combinatorial_lemmas(max: u32) -> IdentityReport {
    let (mut cases, mut failures) = (0usize, 0usize);
    let max = max as i64;
    for a in 0..=max {
        for c in 0..=a {
            for b in -1..=a + 1 {
                cases += 1;
                if vandermonde_split_sum(a, b, c) != binom(a, b) {
                    failures += 1;
                }
            }
        }
    }
    for d in 1..=4 {
        for total in 0..=max as u32 {
            for gamma in crate::analytic::combinatorics::multi_indices_of_total(d, total) {
                for m in 0..=total + 1 {
                    cases += 1;
                    if bounded_multi_binom_sum(&gamma, m) != binom(total as i64, m as i64) {
                        failures += 1;
                    }
                }
            }
        }
    }
    IdentityReport::new("combinatorial_lemmas", cases, failures as f64, 0.0)
}

/// Remainder of the first-order Gaussian Taylor expansion for
/// `f = (1 + ξ)³`, `h = y²` (where `R = 6ρ²`), at each `ρ`.
pub fn taylor_remainders(rhos: &[f64]) -> Result<Vec<f64>> {
    let f = Poly::univariate(&[1.0, 1.0]).pow(3);
    let h = Poly::monomial(vec![2], 1.0);
    rhos.iter()
        .map(|&r| Ok(gauss_taylor(&f, &h, &JointGaussian::scalar(1.0, r), 1)?.remainder.abs()))
        .collect()
}

pub fn taylor_remainder_rate(rhos: &[f64]) -> Result<RateFit> {
    loglog_rate(rhos, &taylor_remainders(rhos)?)
}
