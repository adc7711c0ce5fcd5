//! Test integrands `g(x, t)` with hand-coded derivatives.
//!
//! Every builtin is `C^∞`, so each certifies the class `C^{9,1}_4` (nine
//! spatial derivatives, mixed `∂_t ∂_x^j` up to `j = 4`). Derivatives are
//! closed forms rather than automatic differentiation so they can serve as an
//! independent oracle.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::analytic::hermite::hermite_eval;
use crate::error::{Error, Result};

/// Highest spatial derivative order guaranteed by the smoothness tag.
pub const MAX_DX: u32 = 9;
/// Highest `j` in the mixed derivatives `∂_t ∂_x^j` guaranteed by the tag.
pub const MAX_DTDX: u32 = 4;

/// Longest coefficient list accepted by `poly_k` (degree 9).
pub const MAX_POLY_COEFFS: usize = 10;

pub const BUILTIN_IDS: [&str; 8] = ["const", "linear", "square", "cube", "poly_k", "sine", "gauss_bump", "poly_xt"];

/// The class `C^{k,1}_r`: `k` continuous spatial derivatives and continuous
/// `∂_t ∂_x^j` for `j <= r`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Smoothness {
    pub k: u32,
    pub r: u32,
}

impl Smoothness {
    pub fn certifies(&self, k: u32, r: u32) -> bool {
        self.k >= k && self.r >= r
    }
}

impl fmt::Display for Smoothness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "C^{{{},1}}_{}", self.k, self.r)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "snake_case", deny_unknown_fields)]
pub enum TestFunction {
    /// `g = value`.
    Const { value: f64 },
    /// `g = slope·x + intercept`.
    Linear { slope: f64, intercept: f64 },
    /// `g = x²`.
    Square,
    /// `g = x³`.
    Cube,
    /// `g = Σ_k a_k x^k`, at most ten coefficients.
    PolyK { coeffs: Vec<f64> },
    /// `g = sin(ω x)`.
    Sine { frequency: f64 },
    /// `g = exp(−x²/2)`.
    GaussBump,
    /// `g = x³ (1 + t)`.
    PolyXt,
    /// `g = p(x) q(t)` for polynomials `p`, `q`.
    Separable { x_coeffs: Vec<f64>, t_coeffs: Vec<f64> },
}

fn poly_eval(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &a| acc * x + a)
}

/// `j`-th derivative of `Σ a_k x^k`.
fn poly_deriv(coeffs: &[f64], j: u32, x: f64) -> f64 {
    let j = j as usize;
    if j >= coeffs.len() {
        return 0.0;
    }
    let mut acc = 0.0;
    for k in (j..coeffs.len()).rev() {
        let falling: f64 = ((k - j + 1)..=k).map(|m| m as f64).product();
        acc = acc * x + coeffs[k] * falling;
    }
    acc
}

const CUBE: [f64; 4] = [0.0, 0.0, 0.0, 1.0];

impl TestFunction {
    /// Builtin with default parameters: `const` is 1, `linear` is `x`,
    /// `poly_k` is `x⁴`, `sine` has frequency 1.
    pub fn builtin(name: &str) -> Result<Self> {
        Ok(match name {
            "const" => TestFunction::Const { value: 1.0 },
            "linear" => TestFunction::Linear { slope: 1.0, intercept: 0.0 },
            "square" => TestFunction::Square,
            "cube" => TestFunction::Cube,
            "poly_k" => TestFunction::PolyK { coeffs: vec![0.0, 0.0, 0.0, 0.0, 1.0] },
            "sine" => TestFunction::Sine { frequency: 1.0 },
            "gauss_bump" => TestFunction::GaussBump,
            "poly_xt" => TestFunction::PolyXt,
            _ => {
                return Err(Error::UnknownFunction { name: name.to_string(), available: BUILTIN_IDS.join(", ") });
            }
        })
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |v: &[f64]| v.iter().all(|a| a.is_finite());
        match self {
            TestFunction::Const { value } if !value.is_finite() => Err(Error::domain("const value must be finite")),
            TestFunction::Linear { slope, intercept } if !(slope.is_finite() && intercept.is_finite()) => {
                Err(Error::domain("linear coefficients must be finite"))
            }
            TestFunction::PolyK { coeffs } => {
                if coeffs.is_empty() || coeffs.len() > MAX_POLY_COEFFS {
                    return Err(Error::domain(format!(
                        "poly_k takes 1 to {MAX_POLY_COEFFS} coefficients, got {}",
                        coeffs.len()
                    )));
                }
                if !finite(coeffs) {
                    return Err(Error::domain("poly_k coefficients must be finite"));
                }
                Ok(())
            }
            TestFunction::Sine { frequency } if !frequency.is_finite() => Err(Error::domain("sine frequency must be finite")),
            TestFunction::Separable { x_coeffs, t_coeffs } => {
                if x_coeffs.is_empty() || t_coeffs.is_empty() || !finite(x_coeffs) || !finite(t_coeffs) {
                    return Err(Error::domain("separable needs nonempty finite coefficient lists"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Stable identifier including parameters.
    pub fn id(&self) -> String {
        let list = |v: &[f64]| v.iter().map(|a| format!("{a}")).collect::<Vec<_>>().join(",");
        match self {
            TestFunction::Const { value } => format!("const:{value}"),
            TestFunction::Linear { slope, intercept } => format!("linear:{slope},{intercept}"),
            TestFunction::Square => "square".into(),
            TestFunction::Cube => "cube".into(),
            TestFunction::PolyK { coeffs } => format!("poly_k:{}", list(coeffs)),
            TestFunction::Sine { frequency } => format!("sine:{frequency}"),
            TestFunction::GaussBump => "gauss_bump".into(),
            TestFunction::PolyXt => "poly_xt".into(),
            TestFunction::Separable { x_coeffs, t_coeffs } => format!("separable:{};{}", list(x_coeffs), list(t_coeffs)),
        }
    }

    pub fn smoothness(&self) -> Smoothness {
        Smoothness { k: MAX_DX, r: MAX_DTDX }
    }

    /// True when `g` does not depend on `t`.
    pub fn is_time_independent(&self) -> bool {
        match self {
            TestFunction::PolyXt => false,
            TestFunction::Separable { t_coeffs, .. } => t_coeffs.iter().skip(1).all(|&a| a == 0.0),
            _ => true,
        }
    }

    pub fn eval(&self, x: f64, t: f64) -> f64 {
        self.dx(0, x, t)
    }

    /// `∂_x^j g(x, t)`.
    pub fn dx(&self, j: u32, x: f64, t: f64) -> f64 {
        match self {
            TestFunction::Const { value } => {
                if j == 0 {
                    *value
                } else {
                    0.0
                }
            }
            TestFunction::Linear { slope, intercept } => match j {
                0 => slope * x + intercept,
                1 => *slope,
                _ => 0.0,
            },
            TestFunction::Square => match j {
                0 => x * x,
                1 => 2.0 * x,
                2 => 2.0,
                _ => 0.0,
            },
            TestFunction::Cube => poly_deriv(&CUBE, j, x),
            TestFunction::PolyK { coeffs } => poly_deriv(coeffs, j, x),
            TestFunction::Sine { frequency } => {
                // d^j/dx^j sin(ωx) = ω^j sin(ωx + jπ/2), by the period-4 cycle.
                let w = *frequency;
                let s = (w * x).sin_cos();
                let base = match j % 4 {
                    0 => s.0,
                    1 => s.1,
                    2 => -s.0,
                    _ => -s.1,
                };
                w.powi(j as i32) * base
            }
            TestFunction::GaussBump => {
                // d^j/dx^j e^{−x²/2} = (−1)^j h_j(x) e^{−x²/2}.
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                sign * hermite_eval(j as i64, x) * (-0.5 * x * x).exp()
            }
            TestFunction::PolyXt => (1.0 + t) * poly_deriv(&CUBE, j, x),
            TestFunction::Separable { x_coeffs, t_coeffs } => poly_deriv(x_coeffs, j, x) * poly_eval(t_coeffs, t),
        }
    }

    /// `∂_t ∂_x^j g(x, t)`.
    pub fn dtdx(&self, j: u32, x: f64, t: f64) -> f64 {
        match self {
            TestFunction::PolyXt => poly_deriv(&CUBE, j, x),
            TestFunction::Separable { x_coeffs, t_coeffs } => poly_deriv(x_coeffs, j, x) * poly_deriv(t_coeffs, 1, t),
            _ => 0.0,
        }
    }
}

impl FromStr for TestFunction {
    type Err = Error;

    /// Parses `name` or `name:p1,p2,...`, e.g. `sine:2` or `poly_k:0,1,0,3`.
    /// `separable` takes `x coefficients;t coefficients`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, params) = match s.split_once(':') {
            Some((n, p)) => (n.trim(), Some(p)),
            None => (s.trim(), None),
        };
        let nums = |p: &str| -> Result<Vec<f64>> {
            p.split(',')
                .map(|v| v.trim().parse::<f64>().map_err(|e| Error::domain(format!("bad parameter `{v}` in `{s}`: {e}"))))
                .collect()
        };
        let f = match (name, params) {
            ("separable", None) => return Err(Error::domain("separable needs coefficients")),
            (_, None) => TestFunction::builtin(name)?,
            ("const", Some(p)) => match nums(p)?.as_slice() {
                [v] => TestFunction::Const { value: *v },
                _ => return Err(Error::domain("const takes one parameter")),
            },
            ("linear", Some(p)) => match nums(p)?.as_slice() {
                [a] => TestFunction::Linear { slope: *a, intercept: 0.0 },
                [a, b] => TestFunction::Linear { slope: *a, intercept: *b },
                _ => return Err(Error::domain("linear takes slope[,intercept]")),
            },
            ("poly_k", Some(p)) => TestFunction::PolyK { coeffs: nums(p)? },
            ("sine", Some(p)) => match nums(p)?.as_slice() {
                [w] => TestFunction::Sine { frequency: *w },
                _ => return Err(Error::domain("sine takes one frequency")),
            },
            ("separable", Some(p)) => {
                let (xs, ts) = p.split_once(';').ok_or_else(|| Error::domain("separable takes `x coeffs;t coeffs`"))?;
                TestFunction::Separable { x_coeffs: nums(xs)?, t_coeffs: nums(ts)? }
            }
            (other, Some(_)) if BUILTIN_IDS.contains(&other) => {
                return Err(Error::domain(format!("`{other}` takes no parameters")));
            }
            (other, Some(_)) => {
                return Err(Error::UnknownFunction { name: other.to_string(), available: BUILTIN_IDS.join(", ") });
            }
        };
        f.validate()?;
        Ok(f)
    }
}

/// Log-log slope of the centered-difference error of `∂_x^j g` against
/// `∂_x^{j+1} g` over the step sizes `hs`. `None` when every error is below
/// `floor` (the difference quotient is exact up to roundoff, as for low-degree
/// polynomials).
pub fn fd_consistency_slope(g: &TestFunction, j: u32, x: f64, t: f64, hs: &[f64], floor: f64) -> Option<f64> {
    let target = g.dx(j + 1, x, t);
    let errs: Vec<f64> = hs
        .iter()
        .map(|&h| ((g.dx(j, x + h, t) - g.dx(j, x - h, t)) / (2.0 * h) - target).abs())
        .collect();
    if errs.iter().all(|&e| e <= floor) {
        return None;
    }
    let lx: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
    let ly: Vec<f64> = errs.iter().map(|e| e.max(f64::MIN_POSITIVE).ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    Some(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{NormalStream, StreamRole};

    fn all_builtins() -> Vec<TestFunction> {
        let mut v: Vec<TestFunction> = BUILTIN_IDS.iter().map(|n| TestFunction::builtin(n).unwrap()).collect();
        v.push(TestFunction::PolyK { coeffs: vec![0.3, -1.0, 0.5, 0.0, 0.25, 0.0, -0.1, 0.02, 0.01, -0.003] });
        v.push(TestFunction::Sine { frequency: 1.7 });
        v.push(TestFunction::Separable { x_coeffs: vec![0.0, 1.0], t_coeffs: vec![0.0, 1.0] });
        v
    }

    #[test]
    fn documented_values() {
        let sq = TestFunction::builtin("square").unwrap();
        assert_eq!((sq.eval(3.0, 0.2), sq.dx(1, 3.0, 0.2), sq.dx(2, 3.0, 0.2), sq.dx(3, 3.0, 0.2)), (9.0, 6.0, 2.0, 0.0));

        let pxt = TestFunction::builtin("poly_xt").unwrap();
        assert_eq!(pxt.eval(2.0, 0.5), 12.0);
        assert_eq!(pxt.dtdx(0, 2.0, 0.5), 8.0);
        assert_eq!(pxt.dx(1, 2.0, 0.5), 18.0);

        let sine = TestFunction::builtin("sine").unwrap();
        for &x in &[-2.0, 0.3, 1.1] {
            assert!((sine.dx(4, x, 0.0) - x.sin()).abs() < 1e-15);
            assert!((sine.dx(9, x, 0.0) - x.cos()).abs() < 1e-15);
        }

        let cube = TestFunction::builtin("cube").unwrap();
        assert_eq!((cube.dx(1, 2.0, 0.0), cube.dx(2, 2.0, 0.0), cube.dx(3, 2.0, 0.0), cube.dx(4, 2.0, 0.0)), (12.0, 12.0, 6.0, 0.0));
    }

    #[test]
    fn dx_zero_is_eval_and_time_derivatives() {
        for g in all_builtins() {
            for &(x, t) in &[(0.3, 0.1), (-1.2, 0.9)] {
                assert_eq!(g.dx(0, x, t), g.eval(x, t));
                if g.is_time_independent() {
                    assert_eq!(g.dtdx(0, x, t), 0.0, "{}", g.id());
                } else {
                    let h = 1e-5;
                    for j in 0..=MAX_DTDX {
                        let fd = (g.dx(j, x, t + h) - g.dx(j, x, t - h)) / (2.0 * h);
                        assert!((fd - g.dtdx(j, x, t)).abs() < 1e-8, "{} j = {j}", g.id());
                    }
                }
            }
        }
    }

    #[test]
    fn finite_differences_converge_at_second_order() {
        let mut rng = NormalStream::new(2024, 0, StreamRole::Auxiliary);
        let hs = [0.02, 0.01, 0.005];
        for g in all_builtins() {
            for _ in 0..20 {
                let x = 3.0 * (2.0 * rng.next_uniform() - 1.0);
                let t = rng.next_uniform();
                for j in 0..MAX_DX {
                    let scale = 1.0 + g.dx(j + 1, x, t).abs();
                    if let Some(slope) = fd_consistency_slope(&g, j, x, t, &hs, 1e-9 * scale) {
                        assert!((slope - 2.0).abs() <= 0.1, "{} j = {j} x = {x}: slope {slope}", g.id());
                    }
                }
            }
        }
    }

    #[test]
    fn gauss_bump_tail_underflows() {
        let g = TestFunction::GaussBump;
        for &x in &[40.5, -41.0, 60.0, -1e3] {
            assert!(g.eval(x, 0.0).abs() < 1e-300);
        }
        assert_eq!(g.eval(0.0, 0.0), 1.0);
        assert!((g.dx(2, 0.0, 0.0) + 1.0).abs() < 1e-15);
    }

    #[test]
    fn unknown_names_list_the_builtins() {
        match TestFunction::builtin("cosh") {
            Err(Error::UnknownFunction { name, available }) => {
                assert_eq!(name, "cosh");
                for id in BUILTIN_IDS {
                    assert!(available.contains(id));
                }
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parsing() {
        assert_eq!("square".parse::<TestFunction>().unwrap(), TestFunction::Square);
        assert_eq!("sine:2".parse::<TestFunction>().unwrap(), TestFunction::Sine { frequency: 2.0 });
        assert_eq!("poly_k:1,0,3".parse::<TestFunction>().unwrap(), TestFunction::PolyK { coeffs: vec![1.0, 0.0, 3.0] });
        assert_eq!(
            "separable:0,1;0,1".parse::<TestFunction>().unwrap(),
            TestFunction::Separable { x_coeffs: vec![0.0, 1.0], t_coeffs: vec![0.0, 1.0] }
        );
        assert!("poly_k:1,1,1,1,1,1,1,1,1,1,1".parse::<TestFunction>().is_err());
        assert!("cube:2".parse::<TestFunction>().is_err());
        assert!(matches!("tanh".parse::<TestFunction>(), Err(Error::UnknownFunction { .. })));
        for g in all_builtins() {
            assert_eq!(g.id().parse::<TestFunction>().unwrap(), g, "{}", g.id());
        }
    }

    #[test]
    fn serde_round_trip() {
        for g in all_builtins() {
            let s = serde_json::to_string(&g).unwrap();
            assert_eq!(serde_json::from_str::<TestFunction>(&s).unwrap(), g);
        }
        assert!(serde_json::from_str::<TestFunction>(r#"{"id":"sine","frequency":1,"phase":0}"#).is_err());
    }

    #[test]
    fn smoothness_tag() {
        let s = TestFunction::Cube.smoothness();
        assert!(s.certifies(9, 4) && s.certifies(7, 3));
        assert!(!s.certifies(10, 4));
        assert_eq!(s.to_string(), "C^{9,1}_4");
    }
}
