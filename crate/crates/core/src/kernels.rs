//! Covariance and mean structures of the processes under study.
//!
//! * `Heat`: `F(t) = u(x, t)` for the stochastic heat equation with zero initial
//!   data, `ρ(s,t) = (2π)^{-1/2}(|t+s|^{1/2} − |t−s|^{1/2})`.
//! * `FbmQuarter`: fractional Brownian motion with Hurst index 1/4.
//! * `LeiNualartXi`: the smooth component `ξ` with `c² ρ_heat + ρ_ξ = ρ_fbm`
//!   for `c = (π/2)^{1/4}`.
//! * `BrownianMotion`: `min(s, t)`.
//! * `Composite`: `c² ρ_first + Σ ρ_rest`, optionally with a deterministic mean.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::linalg::Matrix;

/// Scale `c = (π/2)^{1/4}` for which `cF + ξ` has the law of fBm with `H = 1/4`.
pub fn fbm_heat_scale() -> f64 {
    (PI / 2.0).powf(0.25)
}

fn check_times(s: f64, t: f64) -> Result<()> {
    if s < 0.0 || t < 0.0 || s.is_nan() || t.is_nan() {
        return Err(Error::domain(format!("covariance arguments must be nonnegative, got ({s}, {t})")));
    }
    Ok(())
}

pub fn rho_heat(s: f64, t: f64) -> Result<f64> {
    check_times(s, t)?;
    Ok(((t + s).sqrt() - (t - s).abs().sqrt()) / (2.0 * PI).sqrt())
}

/// Covariance of `ξ(t) = (16π)^{-1/4} ∫_0^∞ (1 − e^{−ut}) u^{−3/4} dW(u)`,
/// in closed form `½(√s + √t − √(s+t))`.
pub fn rho_xi_lei_nualart(s: f64, t: f64) -> Result<f64> {
    check_times(s, t)?;
    Ok(0.5 * (s.sqrt() + t.sqrt() - (s + t).sqrt()))
}

/// The integral form of [`rho_xi_lei_nualart`],
/// `(16π)^{-1/2} ∫_0^∞ (1 − e^{−us})(1 − e^{−ut}) u^{−3/2} du`, evaluated by
/// adaptive quadrature after mapping `(0, ∞)` onto `(0, 1)` via `u = v/(1 − v)`.
/// The integrand is written in `w = 1 − v` so the `w^{-1/2}` endpoint behaviour
/// is resolved where floating point is dense. Only used to validate the closed form.
pub fn rho_xi_by_quadrature(s: f64, t: f64, abs_tol: f64) -> Result<f64> {
    check_times(s, t)?;
    let integrand = |w: f64| {
        if w <= 0.0 || w >= 1.0 {
            return 0.0;
        }
        let u = (1.0 - w) / w;
        let jac = 1.0 / (w * w);
        (-u * s).exp_m1() * (-u * t).exp_m1() * u.powf(-1.5) * jac
    };
    let out = crate::quadrature::integrate(integrand, 0.0, 1.0, abs_tol, 20_000);
    Ok(out.value / (16.0 * PI).sqrt())
}

pub fn rho_fbm_quarter(s: f64, t: f64) -> Result<f64> {
    check_times(s, t)?;
    Ok(0.5 * (s.sqrt() + t.sqrt() - (t - s).abs().sqrt()))
}

pub fn rho_brownian(s: f64, t: f64) -> Result<f64> {
    check_times(s, t)?;
    Ok(s.min(t))
}

/// Polynomial mean function `m(t) = Σ a_k t^k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolynomialDrift {
    pub coeffs: Vec<f64>,
}

impl PolynomialDrift {
    pub fn eval(&self, t: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, a| acc * t + a)
    }

    pub fn id(&self) -> String {
        let terms: Vec<String> = self.coeffs.iter().map(|c| format!("{c}")).collect();
        format!("poly[{}]", terms.join(","))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", try_from = "KernelSpec")]
pub enum CovKernel {
    Heat,
    FbmQuarter,
    LeiNualartXi,
    BrownianMotion,
    Composite {
        c: f64,
        components: Vec<CovKernel>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mean: Option<PolynomialDrift>,
    },
}

impl CovKernel {
    /// The composite `c F + ξ` with `ξ` the Lei–Nualart component, which has
    /// the law of fBm with `H = 1/4` when `c = (π/2)^{1/4}`.
    pub fn fbm_decomposition() -> Self {
        CovKernel::Composite {
            c: fbm_heat_scale(),
            components: vec![CovKernel::Heat, CovKernel::LeiNualartXi],
            mean: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let CovKernel::Composite { c, components, mean } = self {
            if !c.is_finite() {
                return Err(Error::domain("composite scale c must be finite"));
            }
            if components.is_empty() || components.len() > 2 {
                return Err(Error::domain(format!(
                    "composite kernel takes one or two components, got {}",
                    components.len()
                )));
            }
            if components.iter().any(|k| matches!(k, CovKernel::Composite { .. })) {
                return Err(Error::domain("composite kernels cannot be nested"));
            }
            if let Some(m) = mean {
                if m.coeffs.iter().any(|a| !a.is_finite()) {
                    return Err(Error::domain("drift coefficients must be finite"));
                }
            }
        }
        Ok(())
    }

    pub fn cov(&self, s: f64, t: f64) -> Result<f64> {
        match self {
            CovKernel::Heat => rho_heat(s, t),
            CovKernel::FbmQuarter => rho_fbm_quarter(s, t),
            CovKernel::LeiNualartXi => rho_xi_lei_nualart(s, t),
            CovKernel::BrownianMotion => rho_brownian(s, t),
            CovKernel::Composite { c, components, .. } => {
                let (first, rest) =
                    components.split_first().ok_or_else(|| Error::domain("composite kernel has no components"))?;
                let mut v = c * c * first.cov(s, t)?;
                for k in rest {
                    v += k.cov(s, t)?;
                }
                Ok(v)
            }
        }
    }

    pub fn mean(&self, t: f64) -> f64 {
        match self {
            CovKernel::Composite { mean: Some(m), .. } => m.eval(t),
            _ => 0.0,
        }
    }

    pub fn mean_drift(&self) -> Option<&PolynomialDrift> {
        match self {
            CovKernel::Composite { mean, .. } => mean.as_ref(),
            _ => None,
        }
    }

    /// Coefficient `c` of the heat component in `X = cF + ξ`, when the kernel
    /// has that form. fBm with `H = 1/4` counts through its decomposition.
    pub fn heat_scale(&self) -> Option<f64> {
        match self {
            CovKernel::Heat => Some(1.0),
            CovKernel::FbmQuarter => Some(fbm_heat_scale()),
            CovKernel::LeiNualartXi => Some(0.0),
            CovKernel::BrownianMotion => None,
            CovKernel::Composite { c, components, .. } => match components.as_slice() {
                [CovKernel::Heat] | [CovKernel::Heat, CovKernel::LeiNualartXi] => Some(*c),
                [CovKernel::LeiNualartXi] => Some(0.0),
                _ => None,
            },
        }
    }

    /// Provenance tag recorded on sampled ensembles.
    pub fn id(&self) -> String {
        match self {
            CovKernel::Heat => "heat".into(),
            CovKernel::FbmQuarter => "fbm_quarter".into(),
            CovKernel::LeiNualartXi => "lei_nualart_xi".into(),
            CovKernel::BrownianMotion => "brownian_motion".into(),
            CovKernel::Composite { c, components, mean } => {
                let parts: Vec<String> = components.iter().map(CovKernel::id).collect();
                let mut id = format!("composite(c={c:.17e};{})", parts.join(","));
                if let Some(m) = mean {
                    id.push_str(&format!("+{}", m.id()));
                }
                id
            }
        }
    }
}

/// The serialized record `{kind, c?, components?, mean?}`. Going through
/// this flat form makes stray keys on the simple kernels an error rather
/// than silently ignored.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct KernelSpec {
    kind: String,
    c: Option<f64>,
    components: Option<Vec<KernelSpec>>,
    mean: Option<PolynomialDrift>,
}

impl TryFrom<KernelSpec> for CovKernel {
    type Error = String;

    fn try_from(spec: KernelSpec) -> std::result::Result<Self, String> {
        let simple = match spec.kind.as_str() {
            "heat" => Some(CovKernel::Heat),
            "fbm_quarter" => Some(CovKernel::FbmQuarter),
            "lei_nualart_xi" => Some(CovKernel::LeiNualartXi),
            "brownian_motion" => Some(CovKernel::BrownianMotion),
            "composite" => None,
            other => {
                return Err(format!(
                    "unknown kernel kind `{other}`, expected heat, fbm_quarter, lei_nualart_xi, brownian_motion or composite"
                ))
            }
        };
        match simple {
            Some(k) => {
                if spec.c.is_some() || spec.components.is_some() || spec.mean.is_some() {
                    return Err(format!("kernel `{}` takes no c, components or mean", spec.kind));
                }
                Ok(k)
            }
            None => {
                let c = spec.c.ok_or("composite kernel needs `c`")?;
                let components = spec
                    .components
                    .ok_or("composite kernel needs `components`")?
                    .into_iter()
                    .map(CovKernel::try_from)
                    .collect::<std::result::Result<Vec<_>, _>>()?;
                Ok(CovKernel::Composite { c, components, mean: spec.mean })
            }
        }
    }
}

/// Gram matrix `R[i][j] = ρ(t_i, t_j)` over `t_1, ..., t_N`. The point
/// `t_0 = 0` is left out since every kernel vanishes there.
pub fn build_cov_matrix(kernel: &CovKernel, grid: &Grid) -> Result<Matrix> {
    kernel.validate()?;
    let n = grid.steps();
    let times: Vec<f64> = (1..=n).map(|j| grid.time(j)).collect();
    // Evaluate the lower triangle first so errors surface before allocation of
    // the mirrored matrix.
    let mut lower = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        for j in 0..=i {
            lower.push(kernel.cov(times[i], times[j])?);
        }
    }
    let mut it = lower.into_iter();
    Ok(Matrix::symmetric_from_fn(n, |_, _| it.next().expect("lower triangle exhausted")))
}

#[cfg(test)]
mod tests {
    use super::*;

    const ALL: [CovKernel; 4] = [CovKernel::Heat, CovKernel::FbmQuarter, CovKernel::LeiNualartXi, CovKernel::BrownianMotion];

    #[test]
    fn heat_values() {
        assert_eq!(rho_heat(0.0, 0.5).unwrap(), 0.0);
        assert!((rho_heat(1.0, 1.0).unwrap() - 0.564_189_583_547_756_3).abs() < 1e-15);
        assert!((rho_heat(0.5, 1.0).unwrap() - 0.206_507_720_129_041_8).abs() < 1e-15);
        assert!(rho_heat(-1.0, 1.0).is_err());
    }

    #[test]
    fn xi_values() {
        assert_eq!(rho_xi_lei_nualart(0.0, 1.0).unwrap(), 0.0);
        assert!((rho_xi_lei_nualart(1.0, 1.0).unwrap() - (1.0 - 2f64.sqrt() / 2.0)).abs() < 1e-15);
        assert!((rho_xi_lei_nualart(1.0, 4.0).unwrap() - 0.381_966_011_250_105_1).abs() < 1e-15);
        assert!(rho_xi_lei_nualart(1.0, -4.0).is_err());
    }

    #[test]
    fn xi_closed_form_matches_integral() {
        for &(s, t) in &[(1.0, 1.0), (1.0, 4.0), (0.1, 0.7), (0.01, 2.5), (3.0, 0.25)] {
            let q = rho_xi_by_quadrature(s, t, 1e-10).unwrap();
            let c = rho_xi_lei_nualart(s, t).unwrap();
            assert!((q - c).abs() <= 1e-8, "({s}, {t}): quad {q} vs closed {c}");
        }
    }

    #[test]
    fn fbm_values() {
        assert!((rho_fbm_quarter(1.0, 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(rho_fbm_quarter(0.0, 3.0).unwrap(), 0.0);
        assert!((rho_fbm_quarter(1.0, 4.0).unwrap() - 0.5 * (3.0 - 3f64.sqrt())).abs() < 1e-15);
    }

    #[test]
    fn decomposition_identity_on_lattice() {
        let c2 = fbm_heat_scale().powi(2);
        for i in 0..50 {
            for j in 0..50 {
                let (s, t) = (i as f64 * 0.1, j as f64 * 0.1);
                let lhs = c2 * rho_heat(s, t).unwrap() + rho_xi_lei_nualart(s, t).unwrap();
                let rhs = rho_fbm_quarter(s, t).unwrap();
                assert!((lhs - rhs).abs() <= 1e-12, "({s}, {t})");
            }
        }
        let k = CovKernel::fbm_decomposition();
        assert!((k.cov(0.3, 0.9).unwrap() - rho_fbm_quarter(0.3, 0.9).unwrap()).abs() <= 1e-12);
    }

    #[test]
    fn exact_symmetry_and_zero_start() {
        let mut kernels = ALL.to_vec();
        kernels.push(CovKernel::fbm_decomposition());
        for k in &kernels {
            for i in 0..100 {
                for j in 0..100 {
                    let (s, t) = (i as f64 / 33.0, j as f64 / 33.0);
                    assert_eq!(k.cov(s, t).unwrap().to_bits(), k.cov(t, s).unwrap().to_bits());
                }
                assert_eq!(k.cov(0.0, i as f64 / 33.0).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn heat_increment_band() {
        let n = 64;
        for i in 0..=n {
            for j in i + 1..=n {
                let (s, t) = (i as f64 / 16.0, j as f64 / 16.0);
                let v = rho_heat(t, t).unwrap() - 2.0 * rho_heat(s, t).unwrap() + rho_heat(s, s).unwrap();
                let d = (t - s).sqrt();
                assert!(v >= d / PI.sqrt() - 1e-14 && v <= 2.0 * d, "({s}, {t}) -> {v}");
            }
        }
    }

    #[test]
    fn gram_matrix_examples() {
        let m = build_cov_matrix(&CovKernel::Heat, &Grid::new(1, 1.0).unwrap()).unwrap();
        assert_eq!(m.dim(), 1);
        assert!((m.get(0, 0) - 1.0 / PI.sqrt()).abs() < 1e-15);

        let m = build_cov_matrix(&CovKernel::BrownianMotion, &Grid::new(2, 1.0).unwrap()).unwrap();
        assert_eq!(m, Matrix::from_rows(&[vec![0.5, 0.5], vec![0.5, 1.0]]).unwrap());
    }

    #[test]
    fn composite_validation() {
        let nested = CovKernel::Composite {
            c: 1.0,
            components: vec![CovKernel::fbm_decomposition()],
            mean: None,
        };
        assert!(nested.validate().is_err());
        let empty = CovKernel::Composite { c: 1.0, components: vec![], mean: None };
        assert!(empty.validate().is_err());
    }

    #[test]
    fn heat_scale_of_kernels() {
        assert_eq!(CovKernel::Heat.heat_scale(), Some(1.0));
        assert_eq!(CovKernel::fbm_decomposition().heat_scale(), Some(fbm_heat_scale()));
        assert_eq!(CovKernel::BrownianMotion.heat_scale(), None);
    }

    #[test]
    fn tagged_serialization() {
        let k: CovKernel = serde_json::from_str(
            r#"{"kind":"composite","c":0.5,"components":[{"kind":"heat"},{"kind":"lei_nualart_xi"}],"mean":{"coeffs":[0,1]}}"#,
        )
        .unwrap();
        assert_eq!(k.heat_scale(), Some(0.5));
        assert_eq!(k.mean(2.0), 2.0);
        assert!(serde_json::from_str::<CovKernel>(r#"{"kind":"spline"}"#).is_err());
        assert!(serde_json::from_str::<CovKernel>(r#"{"kind":"heat","c":1.0}"#).is_err());
        assert!(serde_json::from_str::<CovKernel>(r#"{"kind":"heat","scale":1.0}"#).is_err());
        assert!(serde_json::from_str::<CovKernel>(r#"{"kind":"composite","components":[]}"#).is_err());
        for k in [CovKernel::Heat, CovKernel::fbm_decomposition(), k] {
            let back: CovKernel = serde_json::from_str(&serde_json::to_string(&k).unwrap()).unwrap();
            assert_eq!(back, k);
        }
    }
}
