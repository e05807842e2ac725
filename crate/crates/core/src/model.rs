//! Erosion functions in slope (`f`), inverse-slope (`g`) and drop (`h`)
//! coordinates.
//!
//! Every erosion law sits behind the [`ErosionFunction`] trait. Builtins are
//! registered by name in a [`ModelRegistry`]; user laws enter as polynomial
//! coefficients of `g(z)` and become a [`PolynomialErosion`]. The
//! [`ErosionModel`] wrapper caches the limit values at `z = 0` and `z = 1`
//! and owns validation.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::bisect_polish;

/// Below this distance from `z = 1` the `h` and `h'` evaluators return the
/// cached limits.
pub const LIMIT_SWITCH: f64 = 1e-7;

/// An erosion law `g(z)` on `[0, 1]` together with `h(z) = g(z)/(1 - z)`.
pub trait ErosionFunction: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;
    fn g(&self, z: f64) -> f64;
    fn g_prime(&self, z: f64) -> f64;
    fn g_second(&self, z: f64) -> f64;
    /// `h(z)` as a regular function on all of `[0, 1]`.
    fn h(&self, z: f64) -> f64;
    fn h_prime(&self, z: f64) -> f64;
    fn h_second(&self, z: f64) -> f64;
}

fn horner(c: &[f64], z: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &a| acc * z + a)
}

fn derive(c: &[f64]) -> Vec<f64> {
    if c.len() <= 1 {
        return vec![0.0];
    }
    c.iter().enumerate().skip(1).map(|(k, &a)| a * k as f64).collect()
}

/// `g(z) = sum c_k z^k`. Since `g(1) = 0`, `h = g/(1-z)` is the deflated
/// polynomial, which is evaluated directly so `h` stays well conditioned near
/// `z = 1`.
#[derive(Debug, Clone)]
pub struct PolynomialErosion {
    name: String,
    g: Vec<f64>,
    dg: Vec<f64>,
    d2g: Vec<f64>,
    h: Vec<f64>,
    dh: Vec<f64>,
    d2h: Vec<f64>,
}

impl PolynomialErosion {
    pub fn new(name: impl Into<String>, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() < 2 {
            return Err(Error::ShortPolynomial(coeffs.len()));
        }
        // g = (1 - z) h gives c_n = -h_{n-1} and c_k = h_k - h_{k-1}.
        let n = coeffs.len() - 1;
        let mut h = vec![0.0; n];
        h[n - 1] = -coeffs[n];
        for k in (0..n - 1).rev() {
            h[k] = h[k + 1] - coeffs[k + 1];
        }
        let dg = derive(&coeffs);
        let d2g = derive(&dg);
        let dh = derive(&h);
        let d2h = derive(&dh);
        Ok(Self { name: name.into(), g: coeffs, dg, d2g, h, dh, d2h })
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.g
    }
}

impl ErosionFunction for PolynomialErosion {
    fn name(&self) -> &str {
        &self.name
    }
    fn g(&self, z: f64) -> f64 {
        horner(&self.g, z)
    }
    fn g_prime(&self, z: f64) -> f64 {
        horner(&self.dg, z)
    }
    fn g_second(&self, z: f64) -> f64 {
        horner(&self.d2g, z)
    }
    fn h(&self, z: f64) -> f64 {
        horner(&self.h, z)
    }
    fn h_prime(&self, z: f64) -> f64 {
        horner(&self.dh, z)
    }
    fn h_second(&self, z: f64) -> f64 {
        horner(&self.d2h, z)
    }
}

type Builder = fn() -> Box<dyn ErosionFunction>;

/// Name -> constructor table for the builtin erosion laws.
pub struct ModelRegistry {
    builders: BTreeMap<&'static str, (Builder, &'static str)>,
}

impl ModelRegistry {
    pub fn empty() -> Self {
        Self { builders: BTreeMap::new() }
    }

    pub fn register(&mut self, name: &'static str, about: &'static str, build: Builder) {
        self.builders.insert(name, (build, about));
    }

    pub fn build(&self, name: &str) -> Result<Box<dyn ErosionFunction>> {
        self.builders
            .get(name)
            .map(|(b, _)| b())
            .ok_or_else(|| Error::UnknownBuiltin(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = (&'static str, &'static str)> + '_ {
        self.builders.iter().map(|(k, (_, a))| (*k, *a))
    }
}

impl Default for ModelRegistry {
    fn default() -> Self {
        let mut r = Self::empty();
        r.register("quadratic", "g(z) = 1 - z^2, h(z) = 1 + z", || {
            Box::new(PolynomialErosion::new("quadratic", vec![1.0, 0.0, -1.0]).expect("static coefficients"))
        });
        r.register("example5", "g(z) = (1 - z)(1/2 + z), h(z) = 1/2 + z", || {
            Box::new(PolynomialErosion::new("example5", vec![0.5, 0.5, -1.0]).expect("static coefficients"))
        });
        r.register("bounded", "g(z) = z(1 - z), h(z) = z; slope stays bounded", || {
            Box::new(PolynomialErosion::new("bounded", vec![0.0, 1.0, -1.0]).expect("static coefficients"))
        });
        r
    }
}

/// Serializable description of an erosion law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelSpec {
    Builtin { builtin: String },
    Polynomial { g_poly: Vec<f64> },
}

impl ModelSpec {
    pub fn builtin(name: &str) -> Self {
        ModelSpec::Builtin { builtin: name.to_string() }
    }
}

/// Which function `eval` returns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selector {
    G,
    GPrime,
    H,
    HPrime,
}

/// A validated-on-demand erosion law with cached limit values.
#[derive(Clone)]
pub struct ErosionModel {
    spec: ModelSpec,
    func: Arc<dyn ErosionFunction>,
    /// `h(0) = g(0) = f'(+inf)`.
    pub h0: f64,
    /// `h(1) = -g'(1) = f'(1)`.
    pub h1: f64,
    /// `h'(1) = -g''(1)/2`.
    pub hprime1: f64,
}

impl fmt::Debug for ErosionModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ErosionModel")
            .field("spec", &self.spec)
            .field("h0", &self.h0)
            .field("h1", &self.h1)
            .field("hprime1", &self.hprime1)
            .finish()
    }
}

/// One hypothesis of the validation report.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    /// Grid point with the worst margin and the margin itself (negative = violated).
    pub worst_z: f64,
    pub worst_margin: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

impl ErosionModel {
    pub fn from_spec(spec: &ModelSpec) -> Result<Self> {
        Self::from_spec_with(spec, &ModelRegistry::default())
    }

    pub fn from_spec_with(spec: &ModelSpec, registry: &ModelRegistry) -> Result<Self> {
        let func: Arc<dyn ErosionFunction> = match spec {
            ModelSpec::Builtin { builtin } => Arc::from(registry.build(builtin)?),
            ModelSpec::Polynomial { g_poly } => Arc::new(PolynomialErosion::new("polynomial", g_poly.clone())?),
        };
        Ok(Self::from_function(spec.clone(), func))
    }

    pub fn from_function(spec: ModelSpec, func: Arc<dyn ErosionFunction>) -> Self {
        let h0 = func.g(0.0);
        let h1 = -func.g_prime(1.0);
        let hprime1 = -0.5 * func.g_second(1.0);
        Self { spec, func, h0, h1, hprime1 }
    }

    pub fn builtin(name: &str) -> Result<Self> {
        Self::from_spec(&ModelSpec::builtin(name))
    }

    pub fn polynomial(coeffs: &[f64]) -> Result<Self> {
        Self::from_spec(&ModelSpec::Polynomial { g_poly: coeffs.to_vec() })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn function(&self) -> &dyn ErosionFunction {
        self.func.as_ref()
    }

    pub fn g(&self, z: f64) -> f64 {
        self.func.g(z)
    }
    pub fn g_prime(&self, z: f64) -> f64 {
        self.func.g_prime(z)
    }
    pub fn g_second(&self, z: f64) -> f64 {
        self.func.g_second(z)
    }

    /// `h(z)`, switching to the cached limit next to `z = 1`.
    pub fn h(&self, z: f64) -> f64 {
        if (1.0 - z).abs() < LIMIT_SWITCH {
            self.h1
        } else {
            self.func.h(z)
        }
    }

    pub fn h_prime(&self, z: f64) -> f64 {
        if (1.0 - z).abs() < LIMIT_SWITCH {
            self.hprime1
        } else {
            self.func.h_prime(z)
        }
    }

    pub fn h_second(&self, z: f64) -> f64 {
        self.func.h_second(z)
    }

    /// Checked evaluation on `[0, 1]`.
    pub fn eval(&self, which: Selector, z: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&z) || z.is_nan() {
            return Err(Error::OutOfDomain { name: "z", value: z, lo: 0.0, hi: 1.0 });
        }
        Ok(match which {
            Selector::G => self.g(z),
            Selector::GPrime => self.g_prime(z),
            Selector::H => self.h(z),
            Selector::HPrime => self.h_prime(z),
        })
    }

    /// Unique `z` in `[0, 1]` with `h(z) = y`.
    pub fn h_inverse(&self, y: f64) -> Result<f64> {
        let tol = 1e-12 * (1.0 + self.h1.abs());
        if y < self.h0 - tol || y > self.h1 + tol || y.is_nan() {
            return Err(Error::OutOfDomain { name: "y", value: y, lo: self.h0, hi: self.h1 });
        }
        if y <= self.h0 {
            return Ok(0.0);
        }
        if y >= self.h1 {
            return Ok(1.0);
        }
        let f = &self.func;
        bisect_polish(|z| f.h(z) - y, Some(|z: f64| f.h_prime(z)), 0.0, 1.0, 1e-13)
    }

    /// `f(w) = w g(1/w)` for `w >= 1`.
    pub fn f_eval(&self, w: f64) -> Result<f64> {
        if !(w >= 1.0) {
            return Err(Error::OutOfDomain { name: "w", value: w, lo: 1.0, hi: f64::INFINITY });
        }
        Ok(w * self.g(1.0 / w))
    }

    /// `f'(w) = g(1/w) - g'(1/w)/w`.
    pub fn f_prime(&self, w: f64) -> f64 {
        let z = 1.0 / w;
        self.g(z) - self.g_prime(z) * z
    }

    /// `f'(1) = h(1)`.
    pub fn f_prime_at_one(&self) -> f64 {
        self.h1
    }

    /// `f'(+inf) = lim f(w)/w = g(0)`.
    pub fn f_prime_at_infinity(&self) -> f64 {
        self.h0
    }

    /// Checks the structural hypotheses on a 1001-point grid; failures are
    /// reported, never raised.
    pub fn validate(&self) -> ValidationReport {
        let grid: Vec<f64> = (0..=1000).map(|i| i as f64 / 1000.0).collect();
        let mut checks = Vec::new();

        let g1 = self.g(1.0);
        checks.push(Check { name: "g(1) = 0", passed: g1.abs() <= 1e-12, worst_z: 1.0, worst_margin: 1e-12 - g1.abs() });
        let g0 = self.g(0.0);
        checks.push(Check { name: "g(0) >= 0", passed: g0 >= 0.0, worst_z: 0.0, worst_margin: g0 });

        let worst = |name: &'static str, pts: &mut dyn Iterator<Item = f64>, margin: &dyn Fn(f64) -> f64, strict: bool| {
            let (mut wz, mut wm) = (f64::NAN, f64::INFINITY);
            for z in pts {
                let m = margin(z);
                if m < wm || m.is_nan() {
                    wz = z;
                    wm = m;
                }
            }
            let passed = if strict { wm > 0.0 } else { wm >= 0.0 };
            Check { name, passed, worst_z: wz, worst_margin: wm }
        };
        checks.push(worst("g'' < 0", &mut grid.iter().copied(), &|z| -self.g_second(z), true));
        checks.push(worst("h >= 0", &mut grid.iter().copied(), &|z| self.h(z), false));
        checks.push(worst("h' > 0", &mut grid.iter().copied(), &|z| self.h_prime(z), true));
        checks.push(worst(
            "h'' < 2h'/(1-z)",
            &mut grid.iter().copied().filter(|&z| z <= 1.0 - 1e-3),
            &|z| 2.0 * self.h_prime(z) / (1.0 - z) - self.h_second(z),
            true,
        ));
        ValidationReport { checks }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_have_expected_limits() {
        let q = ErosionModel::builtin("quadratic").unwrap();
        assert_eq!((q.h0, q.h1, q.hprime1), (1.0, 2.0, 1.0));
        let e = ErosionModel::builtin("example5").unwrap();
        assert_eq!((e.h0, e.h1, e.hprime1), (0.5, 1.5, 1.0));
    }

    #[test]
    fn unknown_builtin_and_empty_poly_rejected() {
        assert!(matches!(ErosionModel::builtin("nope"), Err(Error::UnknownBuiltin(_))));
        assert!(matches!(ErosionModel::polynomial(&[]), Err(Error::ShortPolynomial(0))));
    }

    #[test]
    fn eval_examples() {
        let q = ErosionModel::builtin("quadratic").unwrap();
        assert!((q.eval(Selector::H, 0.5).unwrap() - 1.5).abs() < 1e-15);
        assert_eq!(q.eval(Selector::H, 1.0).unwrap(), 2.0);
        let e = ErosionModel::builtin("example5").unwrap();
        assert!((e.eval(Selector::H, 0.0).unwrap() - 0.5).abs() < 1e-15);
        assert!(q.eval(Selector::H, 1.5).is_err());
        assert!(q.eval(Selector::G, -0.1).is_err());
    }

    #[test]
    fn h_inverse_examples() {
        let q = ErosionModel::builtin("quadratic").unwrap();
        assert!((q.h_inverse(1.5).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(q.h_inverse(2.0).unwrap(), 1.0);
        let e = ErosionModel::builtin("example5").unwrap();
        assert!((e.h_inverse(1.0).unwrap() - 0.5).abs() < 1e-12);
        assert!(e.h_inverse(0.4).is_err());
        assert!(e.h_inverse(1.6).is_err());
    }

    #[test]
    fn f_examples() {
        let q = ErosionModel::builtin("quadratic").unwrap();
        assert!((q.f_eval(2.0).unwrap() - 1.5).abs() < 1e-15);
        assert_eq!(q.f_eval(1.0).unwrap(), 0.0);
        assert!(q.f_eval(0.5).is_err());
        assert_eq!(q.f_prime_at_one(), 2.0);
        let e = ErosionModel::builtin("example5").unwrap();
        assert_eq!(e.f_prime_at_infinity(), 0.5);
        // f(w)/w -> g(0) for large w
        assert!((e.f_eval(1e9).unwrap() / 1e9 - 0.5).abs() < 1e-8);
    }

    #[test]
    fn validation_examples() {
        for name in ["quadratic", "example5", "bounded"] {
            let m = ErosionModel::builtin(name).unwrap();
            let r = m.validate();
            assert!(r.all_passed(), "{name}: {:?}", r);
        }
        let lin = ErosionModel::polynomial(&[1.0, -1.0]).unwrap();
        let r = lin.validate();
        assert!(!r.all_passed());
        assert!(!r.checks.iter().find(|c| c.name == "g'' < 0").unwrap().passed);
    }

    #[test]
    fn deflation_matches_quotient() {
        let m = ErosionModel::polynomial(&[0.3, 0.9, -0.4, -0.8]).unwrap();
        for i in 0..=999 {
            let z = i as f64 / 1000.0;
            let quotient = m.g(z) / (1.0 - z);
            assert!((m.h(z) - quotient).abs() < 1e-10);
            let dq = ((1.0 - z) * m.g_prime(z) + m.g(z)) / (1.0 - z).powi(2);
            assert!((m.h_prime(z) - dq).abs() < 1e-6 * (1.0 + dq.abs()));
        }
    }
}
