//! Hermite-weighted Taylor expansion of `E[f(ξ) h(Y)]` in the covariances
//! `ρ_j = E[ξ_j Y]`, with the exact left side from the Wick evaluator so the
//! remainder can be observed directly.

use serde::Serialize;

use crate::analytic::combinatorics::{multi_factorial, multi_indices_up_to};
use crate::analytic::hermite::HermiteBasis;
use crate::analytic::poly::Poly;
use crate::analytic::wick::GaussianMoments;
use crate::error::{Error, Result};

pub const MAX_DIMENSION: usize = 6;
pub const MAX_TOTAL_DEGREE: u32 = 16;

/// Covariance of `(ξ_1, ..., ξ_d, Y)`; `Y` is the last coordinate.
#[derive(Debug, Clone)]
pub struct JointGaussian {
    cov: Vec<Vec<f64>>,
}

impl JointGaussian {
    pub fn new(cov: Vec<Vec<f64>>) -> Result<Self> {
        if cov.is_empty() || cov.iter().any(|r| r.len() != cov.len()) {
            return Err(Error::domain("joint covariance must be a nonempty square matrix"));
        }
        Ok(Self { cov })
    }

    /// `d = 1` case: `Var ξ = var_xi`, `Var Y = 1`, `Cov(ξ, Y) = rho`.
    pub fn scalar(var_xi: f64, rho: f64) -> Self {
        Self { cov: vec![vec![var_xi, rho], vec![rho, 1.0]] }
    }

    /// Number of `ξ` coordinates.
    pub fn d(&self) -> usize {
        self.cov.len() - 1
    }

    pub fn rho(&self) -> Vec<f64> {
        let d = self.d();
        (0..d).map(|j| self.cov[j][d]).collect()
    }

    fn xi_cov(&self) -> Vec<Vec<f64>> {
        let d = self.d();
        self.cov[..d].iter().map(|r| r[..d].to_vec()).collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TaylorTerm {
    pub alpha: Vec<u32>,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GaussTaylorResult {
    /// `Σ_{|α| <= k} (1/α!) ρ^α E[∂^α f(ξ)] E[h_{|α|}(Y) h(Y)]`.
    pub expansion: f64,
    /// `E[f(ξ) h(Y)]`.
    pub exact: f64,
    /// `exact − expansion`.
    pub remainder: f64,
    pub terms: Vec<TaylorTerm>,
}

pub fn gauss_taylor(f: &Poly, h: &Poly, joint: &JointGaussian, k: u32) -> Result<GaussTaylorResult> {
    let d = joint.d();
    let y_var = joint.cov[d][d];
    if (y_var - 1.0).abs() > 1e-12 {
        return Err(Error::domain(format!("E Y² must be 1, got {y_var}")));
    }
    if d > MAX_DIMENSION {
        return Err(Error::Complexity(format!("dimension {d} exceeds {MAX_DIMENSION}")));
    }
    if f.nvars() != d {
        return Err(Error::domain(format!("f has {} variables but ξ has {d}", f.nvars())));
    }
    if h.nvars() != 1 {
        return Err(Error::domain("h must be univariate"));
    }
    let total = f.degree() + h.degree();
    if total > MAX_TOTAL_DEGREE {
        return Err(Error::Complexity(format!("total degree {total} exceeds {MAX_TOTAL_DEGREE}")));
    }

    let rho = joint.rho();
    let mut xi = GaussianMoments::new(joint.xi_cov())?;
    let mut y = GaussianMoments::new(vec![vec![1.0]])?;
    let hermite = HermiteBasis::new(k as usize);
    let hermite_weights: Vec<f64> =
        (0..=k as usize).map(|m| y.expect(&hermite.poly(m).mul(h))).collect::<Result<_>>()?;

    let mut terms = Vec::new();
    let mut expansion = 0.0;
    for alpha in multi_indices_up_to(d, k) {
        let order: u32 = alpha.iter().sum();
        let rho_pow: f64 = alpha.iter().zip(&rho).map(|(&a, &r)| r.powi(a as i32)).product();
        let deriv = f.derivative_multi(&alpha);
        let value = rho_pow / multi_factorial(&alpha) as f64 * xi.expect(&deriv)? * hermite_weights[order as usize];
        expansion += value;
        terms.push(TaylorTerm { alpha, value });
    }

    let mut full = GaussianMoments::new(joint.cov.clone())?;
    let map: Vec<usize> = (0..d).collect();
    let joint_poly = f.embed(d + 1, &map).mul(&h.embed(d + 1, &[d]));
    let exact = full.expect(&joint_poly)?;

    Ok(GaussTaylorResult { expansion, exact, remainder: exact - expansion, terms })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x_pow(k: u32) -> Poly {
        Poly::monomial(vec![k], 1.0)
    }

    #[test]
    fn linear_case_is_exact() {
        let r = 0.37;
        let out = gauss_taylor(&x_pow(1), &x_pow(1), &JointGaussian::scalar(1.0, r), 1).unwrap();
        assert!((out.expansion - r).abs() < 1e-15);
        assert!((out.exact - r).abs() < 1e-15);
        assert!(out.remainder.abs() < 1e-15);
    }

    #[test]
    fn quadratic_case_reproduces_wick_value() {
        let r = 0.4;
        let out = gauss_taylor(&x_pow(2), &x_pow(2), &JointGaussian::scalar(1.0, r), 2).unwrap();
        assert!((out.exact - (1.0 + 2.0 * r * r)).abs() < 1e-14);
        assert!(out.remainder.abs() < 1e-14);
    }

    #[test]
    fn quartic_remainder_is_quadratic_in_rho() {
        // E[ξ⁴Y²] = 3 + 12ρ²; the k = 1 expansion stops at 3.
        for &r in &[0.1, 0.05, 0.025] {
            let out = gauss_taylor(&x_pow(4), &x_pow(2), &JointGaussian::scalar(1.0, r), 1).unwrap();
            assert!((out.remainder - 12.0 * r * r).abs() < 1e-13);
        }
    }

    #[test]
    fn multivariate_expansion_is_exact_at_full_order() {
        // When k reaches the degree of f the remainder vanishes.
        let f = Poly::from_terms(2, [(vec![2, 1], 1.0), (vec![0, 2], -0.5), (vec![1, 0], 2.0)]).unwrap();
        let h = Poly::univariate(&[0.0, 1.0, 0.0, 1.0]);
        let joint = JointGaussian::new(vec![
            vec![1.2, 0.3, 0.2],
            vec![0.3, 0.8, -0.25],
            vec![0.2, -0.25, 1.0],
        ])
        .unwrap();
        let out = gauss_taylor(&f, &h, &joint, 3).unwrap();
        assert!(out.remainder.abs() < 1e-13, "{out:?}");
        assert_eq!(out.terms.len(), 10);
    }

    #[test]
    fn guards() {
        let bad = JointGaussian::scalar(1.0, 0.2);
        let mut cov = bad.cov.clone();
        cov[1][1] = 2.0;
        let bad = JointGaussian::new(cov).unwrap();
        assert!(matches!(gauss_taylor(&x_pow(1), &x_pow(1), &bad, 1), Err(Error::Domain(_))));

        let big = JointGaussian::new(vec![vec![0.0; 8]; 8].into_iter().enumerate().map(|(i, mut r)| {
            r[i] = 1.0;
            r
        }).collect())
        .unwrap();
        let f = Poly::constant(7, 1.0);
        assert!(matches!(gauss_taylor(&f, &x_pow(1), &big, 1), Err(Error::Complexity(_))));

        let f = x_pow(12);
        assert!(matches!(
            gauss_taylor(&f, &x_pow(6), &JointGaussian::scalar(1.0, 0.1), 1),
            Err(Error::Complexity(_))
        ));
    }
}
