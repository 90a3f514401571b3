//! Relaxation kernels, coefficient profiles and the standing hypotheses.
//!
//! The kernel family is the single exponential `g(s) = g0 * exp(-m s)`, for
//! which `g' = -m g` holds with equality. Coefficient profiles are either the
//! local layout `0 < alpha < beta < gamma < L` (damping on `(0, beta)`,
//! coupling on `(alpha, gamma)`) or the global layout where damping and
//! coupling act on the whole interval.

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exponential relaxation kernel `g(s) = g0 * exp(-m s)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub g0: f64,
    pub m: f64,
}

impl KernelSpec {
    pub fn new(g0: f64, m: f64) -> Self {
        Self { g0, m }
    }

    /// `g(s)`; rejects negative `s`.
    pub fn value(&self, s: f64) -> Result<f64> {
        if !(s >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "kernel argument must be nonnegative, got s = {s}"
            )));
        }
        Ok(self.value_unchecked(s))
    }

    #[inline]
    pub(crate) fn value_unchecked(&self, s: f64) -> f64 {
        self.g0 * (-self.m * s).exp()
    }

    /// `g'(s) = -m g(s)`.
    #[inline]
    pub fn derivative(&self, s: f64) -> f64 {
        -self.m * self.value_unchecked(s)
    }

    /// Total mass `g~ = int_0^inf g(s) ds = g0 / m`.
    pub fn total(&self) -> f64 {
        self.g0 / self.m
    }

    /// `g_lambda = int_0^inf g(s) exp(-i lambda s) ds = g0 / (m + i lambda)`.
    pub fn laplace(&self, lambda: f64) -> Complex64 {
        Complex64::new(self.g0, 0.0) / Complex64::new(self.m, lambda)
    }

    /// Memory horizon `S_max` with `g(S_max) = g_tol * g0`.
    pub fn horizon(&self, g_tol: f64) -> f64 {
        (1.0 / g_tol).ln() / self.m
    }
}

pub fn kernel_value(kernel: &KernelSpec, s: f64) -> Result<f64> {
    kernel.value(s)
}

pub fn kernel_total(kernel: &KernelSpec) -> f64 {
    kernel.total()
}

pub fn kernel_laplace(kernel: &KernelSpec, lambda: f64) -> Complex64 {
    kernel.laplace(lambda)
}

/// Domain length, speed and the piecewise-constant damping/coupling layout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoefficientProfile {
    #[serde(rename = "L")]
    pub length: f64,
    pub a: f64,
    pub b0: f64,
    pub c0: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

/// Pointwise coefficient values `(b, c, b~)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficients {
    pub b: f64,
    pub c: f64,
    pub b_tilde: f64,
}

impl CoefficientProfile {
    pub fn local(length: f64, a: f64, b0: f64, c0: f64, alpha: f64, beta: f64, gamma: f64) -> Self {
        Self { length, a, b0, c0, alpha, beta, gamma }
    }

    /// Memory and coupling on all of `(0, L)` with unit amplitudes.
    pub fn global(length: f64, a: f64) -> Self {
        Self { length, a, b0: 1.0, c0: 1.0, alpha: 0.0, beta: length, gamma: length }
    }

    pub fn is_global(&self) -> bool {
        self.alpha == 0.0 && self.beta == self.length && self.gamma == self.length
    }

    /// `b~0 = a - b0 g~` (equals `a~ = a - g~` for the global layout).
    pub fn damped_stiffness(&self, kernel: &KernelSpec) -> f64 {
        self.a - self.b0 * kernel.total()
    }

    pub fn coeff_at(&self, kernel: &KernelSpec, x: f64) -> Result<Coefficients> {
        if !(x >= 0.0 && x <= self.length) {
            return Err(Error::InvalidArgument(format!(
                "x = {x} lies outside [0, {}]",
                self.length
            )));
        }
        let (b, c) = if self.is_global() {
            (self.b0, self.c0)
        } else {
            let b = if x < self.beta { self.b0 } else { 0.0 };
            let c = if x >= self.alpha && x < self.gamma { self.c0 } else { 0.0 };
            (b, c)
        };
        Ok(Coefficients { b, c, b_tilde: self.a - b * kernel.total() })
    }
}

pub fn coeff_at(profile: &CoefficientProfile, kernel: &KernelSpec, x: f64) -> Result<Coefficients> {
    profile.coeff_at(kernel, x)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub constraint: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn has(&self, constraint: &str) -> bool {
        self.violations.iter().any(|v| v.constraint == constraint)
    }

    pub fn into_result(self) -> Result<()> {
        if self.ok {
            Ok(())
        } else {
            Err(Error::Hypothesis(self))
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.ok {
            return write!(f, "ok");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "  - {}: {}", v.constraint, v.detail)?;
        }
        Ok(())
    }
}

/// Checks every standing hypothesis and reports all violations at once.
pub fn validate_config(profile: &CoefficientProfile, kernel: &KernelSpec) -> ValidationReport {
    let mut violations = Vec::new();
    let mut push = |constraint: &str, detail: String| {
        violations.push(Violation { constraint: constraint.to_string(), detail });
    };

    let positive = [
        ("g0 positivity", kernel.g0),
        ("m positivity", kernel.m),
        ("L positivity", profile.length),
        ("a positivity", profile.a),
    ];
    for (name, value) in positive {
        if !(value > 0.0 && value.is_finite()) {
            push(name, format!("value {value} is not a finite positive number"));
        }
    }
    for (name, value) in [("b0 sign", profile.b0), ("c0 sign", profile.c0)] {
        if !(value >= 0.0 && value.is_finite()) {
            push(name, format!("value {value} is negative or not finite"));
        }
    }

    let (alpha, beta, gamma, l) = (profile.alpha, profile.beta, profile.gamma, profile.length);
    if profile.is_global() {
        if profile.b0 != 1.0 || profile.c0 != 1.0 {
            push(
                "global amplitudes",
                format!("global layout requires b0 = c0 = 1, got b0 = {}, c0 = {}", profile.b0, profile.c0),
            );
        }
    } else if !(0.0 < alpha && alpha < beta && beta < gamma && gamma < l) {
        push(
            "interface ordering",
            format!("need 0 < alpha < beta < gamma < L, got alpha = {alpha}, beta = {beta}, gamma = {gamma}, L = {l}"),
        );
    }

    if kernel.g0 > 0.0 && kernel.m > 0.0 {
        let stiffness = profile.damped_stiffness(kernel);
        if !(stiffness > 0.0) {
            let name = if profile.is_global() { "a~ positivity" } else { "b~0 positivity" };
            let symbol = if profile.is_global() { "a~" } else { "b~0" };
            push(
                name,
                format!("{symbol} = a - b0 g~ = {stiffness} <= 0 (a = {}, b0 = {}, g~ = {})", profile.a, profile.b0, kernel.total()),
            );
        }
    }

    ValidationReport { ok: violations.is_empty(), violations }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference() -> (CoefficientProfile, KernelSpec) {
        (CoefficientProfile::local(1.0, 1.0, 0.5, 1.0, 0.2, 0.5, 0.8), KernelSpec::new(1.0, 2.0))
    }

    #[test]
    fn reference_config_is_valid() {
        let (p, k) = reference();
        let report = validate_config(&p, &k);
        assert!(report.ok, "{report}");
        assert_eq!(k.total(), 0.5);
        assert_eq!(p.damped_stiffness(&k), 0.75);
    }

    #[test]
    fn negative_damped_stiffness_is_reported() {
        let (mut p, k) = reference();
        p.b0 = 3.0;
        let report = validate_config(&p, &k);
        assert!(!report.ok);
        assert!(report.has("b~0 positivity"));
        assert!(report.violations[0].detail.contains("-0.5"));
    }

    #[test]
    fn interface_ordering_is_reported() {
        let (mut p, k) = reference();
        p.alpha = 0.5;
        p.beta = 0.2;
        let report = validate_config(&p, &k);
        assert!(report.has("interface ordering"));
        assert_eq!(report.violations.len(), 1);
    }

    #[test]
    fn all_violations_listed_together() {
        let p = CoefficientProfile::local(-1.0, 0.0, 1.0, 1.0, 0.9, 0.5, 0.1);
        let k = KernelSpec::new(0.0, -1.0);
        let report = validate_config(&p, &k);
        for name in ["g0 positivity", "m positivity", "L positivity", "a positivity", "interface ordering"] {
            assert!(report.has(name), "missing {name}: {report}");
        }
    }

    #[test]
    fn global_layout_validation() {
        let k = KernelSpec::new(1.0, 1.0);
        assert!(validate_config(&CoefficientProfile::global(2.0, 2.0), &k).ok);
        let report = validate_config(&CoefficientProfile::global(2.0, 1.0), &k);
        assert!(report.has("a~ positivity"));
    }

    #[test]
    fn kernel_values() {
        let k = KernelSpec::new(1.0, 1.0);
        assert_eq!(k.value(0.0).unwrap(), 1.0);
        assert!(k.value(-0.1).is_err());
        let k = KernelSpec::new(1.0, 2.0);
        assert!((k.value(0.5).unwrap() - (-1.0f64).exp()).abs() < 1e-15);
        let k = KernelSpec::new(2.0, 3.0);
        let mut prev = f64::INFINITY;
        for i in 0..200 {
            let g = k.value(i as f64 * 0.25).unwrap();
            assert!(g < prev);
            prev = g;
        }
        assert!(prev < 1e-60);
    }

    #[test]
    fn kernel_totals() {
        assert_eq!(KernelSpec::new(1.0, 1.0).total(), 1.0);
        assert!((KernelSpec::new(2.0, 3.0).total() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(KernelSpec::new(0.5, 0.25).total(), 2.0);
    }

    #[test]
    fn kernel_transform() {
        let k = KernelSpec::new(1.0, 1.0);
        let g1 = k.laplace(1.0);
        assert!((g1 - Complex64::new(0.5, -0.5)).norm() < 1e-15);
        let k = KernelSpec::new(1.5, 0.7);
        assert!((k.laplace(0.0) - Complex64::new(k.total(), 0.0)).norm() < 1e-15);
        for lambda in [1e2, 1e4, 1e6] {
            let lg = k.laplace(lambda) * lambda;
            assert!((lg - Complex64::new(0.0, -k.g0)).norm() < 2.0 * k.g0 * k.m / lambda);
        }
    }

    #[test]
    fn quadrature_of_kernel_converges_to_total() {
        let k = KernelSpec::new(1.3, 2.0);
        for s_max in [2.0, 5.0, 10.0] {
            // Simpson with a fine grid; error dominated by the truncation tail.
            let n = 20_000;
            let h = s_max / n as f64;
            let mut sum = k.value_unchecked(0.0) + k.value_unchecked(s_max);
            for i in 1..n {
                let w = if i % 2 == 1 { 4.0 } else { 2.0 };
                sum += w * k.value_unchecked(i as f64 * h);
            }
            let integral = sum * h / 3.0;
            let rel = (k.total() - integral) / k.total();
            let bound = k.value_unchecked(s_max) / (k.m * k.total());
            assert!(rel >= 0.0 && rel <= bound * (1.0 + 1e-6), "rel {rel} bound {bound}");
        }
    }

    #[test]
    fn coefficient_layout() {
        let (p, k) = reference();
        let c = p.coeff_at(&k, 0.1).unwrap();
        assert_eq!((c.b, c.c, c.b_tilde), (0.5, 0.0, 0.75));
        let c = p.coeff_at(&k, 0.6).unwrap();
        assert_eq!((c.b, c.c, c.b_tilde), (0.0, 1.0, 1.0));
        let c = p.coeff_at(&k, 0.9).unwrap();
        assert_eq!((c.b, c.c, c.b_tilde), (0.0, 0.0, 1.0));
        let c = p.coeff_at(&k, 0.3).unwrap();
        assert_eq!((c.b, c.c, c.b_tilde), (0.5, 1.0, 0.75));
        assert!(p.coeff_at(&k, 1.1).is_err());
        assert!(p.coeff_at(&k, -0.1).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn laplace_conjugate_symmetry(g0 in 0.01f64..10.0, m in 0.01f64..10.0, lambda in -1e3f64..1e3) {
                let k = KernelSpec::new(g0, m);
                let d = k.laplace(-lambda) - k.laplace(lambda).conj();
                prop_assert!(d.norm() <= 1e-14 * k.laplace(lambda).norm().max(1e-300));
            }

            #[test]
            fn stiffness_positive_everywhere_when_valid(
                b0 in 0.0f64..2.0, a in 0.1f64..3.0, m in 0.5f64..4.0, x in 0.0f64..1.0
            ) {
                let p = CoefficientProfile::local(1.0, a, b0, 1.0, 0.2, 0.5, 0.8);
                let k = KernelSpec::new(1.0, m);
                if validate_config(&p, &k).ok {
                    prop_assert!(p.coeff_at(&k, x).unwrap().b_tilde > 0.0);
                }
            }

            #[test]
            fn kernel_matches_closed_form(g0 in 0.01f64..10.0, m in 0.01f64..10.0, s in 0.0f64..50.0) {
                let k = KernelSpec::new(g0, m);
                prop_assert_eq!(k.value(s).unwrap(), g0 * (-m * s).exp());
                prop_assert!((k.derivative(s) + m * k.value(s).unwrap()).abs() <= 1e-15 * g0 * m);
            }
        }
    }
}
