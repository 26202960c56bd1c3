//! Double-well potentials, damping laws and the scalar constants derived from them.

use crate::error::{Error, Result};
use crate::poly::Poly;
use crate::quad::tanh_sinh;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use libm::sqrt;
use serde::{Deserialize, Serialize};

/// Relative tolerance used for every model-level integral.
pub const QUAD_TOL: f64 = 1e-12;
const WELL_TOL: f64 = 1e-12;
const DAMPING_SAMPLES: usize = 10_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum PotentialFamily {
    Quartic,
    Asymmetric { a: f64 },
    /// Ascending coefficients of F.
    Custom { coeffs: Vec<f64> },
}

/// A polynomial potential F together with f = F', f' and f''.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PotentialFamily", into = "PotentialFamily")]
pub struct Potential {
    family: PotentialFamily,
    big_f: Poly,
    f: Poly,
    df: Poly,
    d2f: Poly,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelValues {
    pub big_f: f64,
    pub f: f64,
    pub df: f64,
    pub d2f: f64,
}

impl TryFrom<PotentialFamily> for Potential {
    type Error = Error;
    fn try_from(family: PotentialFamily) -> Result<Self> {
        Potential::new(family)
    }
}

impl From<Potential> for PotentialFamily {
    fn from(p: Potential) -> Self {
        p.family
    }
}

impl Potential {
    /// Builds the polynomials. Only structural checks happen here; see [`validate_double_well`].
    pub fn new(family: PotentialFamily) -> Result<Self> {
        let coeffs = match &family {
            PotentialFamily::Quartic => vec![0.25, 0.0, -0.5, 0.0, 0.25],
            PotentialFamily::Asymmetric { a } => {
                if !(a.abs() < 1.0) {
                    return Err(Error::InvalidModel(format!("asymmetry |a| = {} must be < 1", a.abs())));
                }
                // (1 - u^2)^2 (1 + a u) / 4
                let a = *a;
                vec![0.25, 0.25 * a, -0.5, -0.5 * a, 0.25, 0.25 * a]
            }
            PotentialFamily::Custom { coeffs } => {
                if coeffs.is_empty() || coeffs.iter().any(|c| !c.is_finite()) {
                    return Err(Error::InvalidModel("custom coefficients must be finite and non-empty".into()));
                }
                coeffs.clone()
            }
        };
        let big_f = Poly::new(coeffs);
        let f = big_f.derivative();
        let df = f.derivative();
        let d2f = df.derivative();
        Ok(Potential { family, big_f, f, df, d2f })
    }

    pub fn quartic() -> Self {
        Potential::new(PotentialFamily::Quartic).expect("quartic is valid")
    }

    pub fn asymmetric(a: f64) -> Result<Self> {
        Potential::new(PotentialFamily::Asymmetric { a })
    }

    pub fn custom(coeffs: Vec<f64>) -> Result<Self> {
        Potential::new(PotentialFamily::Custom { coeffs })
    }

    /// Builds and rejects anything that is not a double well.
    pub fn validated(family: PotentialFamily) -> Result<Self> {
        let p = Potential::new(family)?;
        let report = validate_double_well(&p);
        if !report.passed() {
            return Err(Error::InvalidModel(report.first_failure().unwrap_or_default()));
        }
        Ok(p)
    }

    pub fn family(&self) -> &PotentialFamily {
        &self.family
    }

    pub fn poly(&self) -> &Poly {
        &self.big_f
    }

    #[inline]
    pub fn big_f(&self, u: f64) -> f64 {
        self.big_f.eval(u)
    }

    #[inline]
    pub fn f(&self, u: f64) -> f64 {
        self.f.eval(u)
    }

    #[inline]
    pub fn df(&self, u: f64) -> f64 {
        self.df.eval(u)
    }

    pub fn eval(&self, u: f64) -> ModelValues {
        ModelValues { big_f: self.big_f.eval(u), f: self.f.eval(u), df: self.df.eval(u), d2f: self.d2f.eval(u) }
    }

    /// kF as a custom potential.
    pub fn scaled(&self, k: f64) -> Potential {
        Potential::custom(self.big_f.scale(k).coeffs().to_vec()).expect("finite coefficients")
    }

    /// sqrt(F''(+1)) for `sign > 0`, sqrt(F''(-1)) otherwise.
    pub fn well_rate(&self, sign: f64) -> f64 {
        sqrt(self.df.eval(if sign > 0.0 { 1.0 } else { -1.0 }))
    }
}

/// `eval_model`: (F, f, f', f'') at `u`.
pub fn eval_model(spec: &Potential, u: f64) -> (f64, f64, f64, f64) {
    let v = spec.eval(u);
    (v.big_f, v.f, v.df, v.d2f)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// Measured quantity (residual or extremum) behind the verdict.
    pub value: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn first_failure(&self) -> Option<String> {
        self.checks.iter().find(|c| !c.passed).map(|c| format!("{} (measured {:e})", c.name, c.value))
    }
}

pub fn validate_double_well(spec: &Potential) -> ValidationReport {
    let mut checks = Vec::new();
    let mut push = |name: &str, passed: bool, value: f64| {
        checks.push(Check { name: name.into(), passed, value })
    };
    for (label, u) in [("-1", -1.0), ("+1", 1.0)] {
        let v = spec.eval(u);
        push(&format!("F({label}) = 0"), v.big_f.abs() <= WELL_TOL, v.big_f);
        push(&format!("F'({label}) = 0"), v.f.abs() <= WELL_TOL, v.f);
        push(&format!("F''({label}) > 0"), v.df > 0.0, v.df);
    }
    let n = 2000;
    let mut min_f = f64::INFINITY;
    for i in 1..n {
        let u = -1.0 + 2.0 * i as f64 / n as f64;
        min_f = min_f.min(spec.big_f(u));
    }
    push("F > 0 on (-1, 1)", min_f > 0.0, min_f);
    ValidationReport { checks }
}

/// Damping law g(u, tau).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Damping {
    One,
    /// g = 1 + tau f'(u).
    Relaxation,
    /// Piecewise linear in u, constant beyond the end knots.
    Table { u: Vec<f64>, g: Vec<f64> },
}

impl Damping {
    pub fn table(u: Vec<f64>, g: Vec<f64>) -> Result<Self> {
        if u.len() < 2 || u.len() != g.len() {
            return Err(Error::InvalidModel("damping table needs >= 2 matching knots".into()));
        }
        if u.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidModel("damping table knots must increase".into()));
        }
        Ok(Damping::Table { u, g })
    }

    #[inline]
    pub fn eval(&self, pot: &Potential, u: f64, tau: f64) -> f64 {
        match self {
            Damping::One => 1.0,
            Damping::Relaxation => 1.0 + tau * pot.df(u),
            Damping::Table { u: knots, g } => {
                if u <= knots[0] {
                    return g[0];
                }
                let last = knots.len() - 1;
                if u >= knots[last] {
                    return g[last];
                }
                let k = knots.partition_point(|&x| x <= u) - 1;
                let s = (u - knots[k]) / (knots[k + 1] - knots[k]);
                g[k] + s * (g[k + 1] - g[k])
            }
        }
    }

    fn sample_extrema(&self, pot: &Potential, tau: f64) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..=DAMPING_SAMPLES {
            let u = -1.5 + 3.0 * i as f64 / DAMPING_SAMPLES as f64;
            let g = self.eval(pot, u, tau);
            lo = lo.min(g);
            hi = hi.max(g);
        }
        (lo, hi)
    }

    /// Sampled floor c_g of g(., tau) over [-1.5, 1.5].
    pub fn floor(&self, pot: &Potential, tau: f64) -> f64 {
        self.sample_extrema(pot, tau).0
    }

    pub fn max(&self, pot: &Potential, tau: f64) -> f64 {
        self.sample_extrema(pot, tau).1
    }

    /// Returns c_g, or an error when the sampled floor is not positive.
    pub fn check(&self, pot: &Potential, tau: f64) -> Result<f64> {
        let c = self.floor(pot, tau);
        if c > 0.0 {
            Ok(c)
        } else {
            Err(Error::InvalidModel(format!("damping floor c_g = {c} is not positive at tau = {tau}")))
        }
    }
}

/// The JSON model document: potential plus damping.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub potential: Potential,
    #[serde(default = "default_damping")]
    pub damping: Damping,
}

fn default_damping() -> Damping {
    Damping::One
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub eps: f64,
    pub tau: f64,
    pub n: usize,
    /// Minimal spacing.
    pub delta: f64,
    pub rho: f64,
    /// Channel width.
    pub gamma: f64,
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0) || !(self.tau >= 0.0) || self.n == 0 || !(self.gamma > 0.0) {
            return Err(Error::Config("need eps > 0, tau >= 0, N >= 1, Gamma > 0".into()));
        }
        let gap = self.eps / self.rho;
        let top = 1.0 / self.n as f64;
        if !(self.delta > 0.0 && self.delta < gap && gap < top) {
            return Err(Error::Config(format!(
                "triangle condition violated: delta = {}, eps/rho = {gap}, 1/N = {top}",
                self.delta
            )));
        }
        Ok(())
    }

    /// Minimal admissible spacing eps/rho.
    pub fn min_gap(&self) -> f64 {
        self.eps / self.rho
    }
}

fn sqrt_f(pot: &Potential, s: f64) -> f64 {
    sqrt(pot.big_f(s).max(0.0))
}

/// Average of `g` against the weight sqrt(F) on [-1, 1].
pub fn weighted_average_with<G: FnMut(f64) -> f64>(spec: &Potential, mut g: G) -> Result<f64> {
    let num = tanh_sinh(|s| sqrt_f(spec, s) * g(s), -1.0, 1.0, QUAD_TOL)?;
    let den = tanh_sinh(|s| sqrt_f(spec, s), -1.0, 1.0, QUAD_TOL)?;
    Ok(num.value / den.value)
}

pub fn weighted_average(spec: &Potential, g: &Damping, tau: f64) -> Result<f64> {
    weighted_average_with(spec, |s| g.eval(spec, s, tau))
}

/// D_inf = int_{-1}^{1} sqrt(2F).
pub fn d_infinity(spec: &Potential) -> Result<f64> {
    Ok(tanh_sinh(|s| sqrt(2.0 * spec.big_f(s).max(0.0)), -1.0, 1.0, QUAD_TOL)?.value)
}

/// gamma_tau = int sqrt(2F) g / D_inf, computed along two routes that must agree.
pub fn gamma_tau(spec: &Potential, g: &Damping, tau: f64) -> Result<f64> {
    let direct = tanh_sinh(|s| sqrt(2.0 * spec.big_f(s).max(0.0)) * g.eval(spec, s, tau), -1.0, 1.0, QUAD_TOL)?
        .value
        / d_infinity(spec)?;
    let via_average = weighted_average(spec, g, tau)?;
    let gap = (direct - via_average).abs();
    if gap > 1e-10 * direct.abs().max(1.0) {
        return Err(Error::Quadrature { requested: 1e-10, achieved: gap });
    }
    Ok(direct)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quartic_values() {
        let p = Potential::quartic();
        assert_eq!(eval_model(&p, 1.0), (0.0, 0.0, 2.0, 6.0));
        assert_eq!(eval_model(&p, 0.0), (0.25, 0.0, -1.0, 0.0));
    }

    #[test]
    fn asymmetric_curvatures() {
        let p = Potential::asymmetric(0.5).unwrap();
        assert!((p.df(-1.0) - 1.0).abs() < 1e-14);
        assert!((p.df(1.0) - 3.0).abs() < 1e-14);
        assert!((p.well_rate(1.0) - libm::sqrt(3.0)).abs() < 1e-14);
    }

    #[test]
    fn table_damping_interpolates() {
        let d = Damping::table(vec![-1.0, 0.0, 1.0], vec![2.0, 1.0, 2.0]).unwrap();
        let p = Potential::quartic();
        assert_eq!(d.eval(&p, 0.5, 0.0), 1.5);
        assert_eq!(d.eval(&p, -3.0, 0.0), 2.0);
        assert!(Damping::table(vec![0.0, 0.0], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn relaxation_floor_needs_small_tau() {
        let p = Potential::quartic();
        assert!(Damping::Relaxation.check(&p, 0.5).is_ok());
        assert!(Damping::Relaxation.check(&p, 1.0).is_err());
    }

    #[test]
    fn triangle_condition() {
        let ok = ModelParams { eps: 0.03, tau: 0.1, n: 2, delta: 0.05, rho: 0.3, gamma: 1.0 };
        assert!(ok.validate().is_ok());
        let bad = ModelParams { rho: 0.03, ..ok };
        assert!(bad.validate().is_err());
    }
}
