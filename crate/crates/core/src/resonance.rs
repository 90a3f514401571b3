//! Explicit resonant sequence for the globally damped system with `a != 1`.
//!
//! With `F_n = (0, 0, 0, sin(n pi x / L), 0)` and the ansatz
//! `u_n = A_n sin`, `y_n = B_n sin`, `omega_n = A_n (1 - e^{-i lambda_n s}) sin`,
//! the resolvent equation reduces to a 2x2 complex system for `(A_n, B_n)`.

use num_complex::Complex64;
use serde::Serialize;
use std::f64::consts::PI;

use crate::dynamics::Field;
use crate::error::{Error, Result};
use crate::model::{CoefficientProfile, KernelSpec};
use crate::spectral::{GeneratorMatrix, TRUST_LIMIT};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResonanceResult {
    pub n: u32,
    pub lambda_n: f64,
    pub a_n: Complex64,
    pub b_n: Complex64,
    pub b1: Complex64,
    pub b2: Complex64,
    pub b3: Complex64,
    /// `lambda_n |B_n| sqrt(L / 2)`, the `L^2` norm of `z_n`.
    pub z_norm: f64,
    /// `z_norm / lambda_n^2`.
    pub ratio: f64,
    /// Energy norm of `U_n` including the history slot.
    pub u_norm: f64,
    /// Relative gap between the factored closed form and the direct solve.
    pub closed_form_gap: f64,
    /// Relative residual of the 2x2 system at the returned pair.
    pub system_residual: f64,
    /// `lambda_n > n pi / L`, which happens for `a < 1`.
    pub above_mode: bool,
}

/// `n pi / L - L / (2 n pi (a - 1))`.
pub fn lambda_n(n: u32, length: f64, a: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    if a == 1.0 {
        return Err(Error::InvalidArgument("the resonant sequence needs a != 1".into()));
    }
    if !(length > 0.0) {
        return Err(Error::InvalidArgument(format!("L must be positive, got {length}")));
    }
    let nf = n as f64;
    if a > 1.0 && nf * nf <= length * length / (2.0 * PI * PI * (a - 1.0)) {
        return Err(Error::InvalidArgument(format!(
            "n = {n} is below the threshold n^2 > L^2 / (2 pi^2 (a - 1)) = {}",
            length * length / (2.0 * PI * PI * (a - 1.0))
        )));
    }
    Ok(nf * PI / length - length / (2.0 * nf * PI * (a - 1.0)))
}

/// `P = n^2 pi^2`, `D = n^2 pi^2 - L^2 lambda_n^2` and `q = n pi - L lambda_n`.
///
/// `D = q (2 n pi - q)` avoids the cancellation in the naive difference.
fn invariants(n: u32, length: f64, a: f64) -> (f64, f64, f64) {
    let npi = n as f64 * PI;
    let q = length * length / (2.0 * npi * (a - 1.0));
    (npi * npi, q * (2.0 * npi - q), q)
}

/// The 2x2 matrix and right-hand side `M (A, B)^T = r`.
fn system(n: u32, length: f64, a: f64, lambda: f64, g_lambda: Complex64) -> ([[Complex64; 2]; 2], [Complex64; 2]) {
    let i = Complex64::i();
    let l2 = length * length;
    let (p, d, _) = invariants(n, length, a);
    let m = [
        [i * l2 * lambda, Complex64::from(-d)],
        [p * (a - 1.0 - g_lambda) + d, i * l2 * lambda],
    ];
    (m, [Complex64::from(-l2), Complex64::from(0.0)])
}

/// Determinant of [`system`], written without the leading-order cancellation.
fn determinant(n: u32, length: f64, a: f64, g_lambda: Complex64) -> Complex64 {
    let (p, d, q) = invariants(n, length, a);
    length * length * d - (a - 1.0) * q * q * p + d * d - d * p * g_lambda
}
/// Factors `(B_1, B_2, B_3)` of the closed-form coefficient `B_n`.
/// Factors with `B_n = B_1 (1 + B_2 / (lambda_n g_lambda + B_3))`.
pub fn closed_form_factors(n: u32, length: f64, a: f64, lambda: f64) -> (f64, f64, f64) {
    let l2 = length * length;
    let (p, d, q) = invariants(n, length, a);
    let b1 = l2 / d;
    let b2 = -l2 * l2 * lambda.powi(3) / (p * d);
    // Numerator of B_3 reduced with (1 - a) q 2 n pi = -L^2.
    let num = (a - 1.0) * p * q * q - l2 * d - d * d;
    let b3 = num * lambda / (p * d);
    (b1, b2, b3)
}

/// Direct 2x2 solve (reference) and the factored closed form (cross-check).
pub fn solve_coefficients(n: u32, length: f64, a: f64, kernel: &KernelSpec) -> Result<ResonanceResult> {
    let lambda = lambda_n(n, length, a)?;
    let g_lambda = kernel.laplace(lambda);
    let (m, r) = system(n, length, a, lambda, g_lambda);
    let det = determinant(n, length, a, g_lambda);
    let scale = m.iter().flatten().map(|c| c.norm()).fold(0.0, f64::max);
    if !(det.norm() > 1e-14 * scale * scale) {
        return Err(Error::Singular(format!("2x2 resonance system is singular at n = {n}")));
    }
    let a_n = (r[0] * m[1][1] - m[0][1] * r[1]) / det;
    let b_n = (m[0][0] * r[1] - m[1][0] * r[0]) / det;
    let residual = [m[0][0] * a_n + m[0][1] * b_n - r[0], m[1][0] * a_n + m[1][1] * b_n - r[1]];
    let size = (m[0][0].norm() * a_n.norm() + m[0][1].norm() * b_n.norm()).max(r[0].norm());
    let system_residual = residual.iter().map(|c| c.norm()).fold(0.0, f64::max) / size;

    let (b1, b2, b3) = closed_form_factors(n, length, a, lambda);
    let i = Complex64::i();
    let b_closed = b1 * (1.0 + b2 / (lambda * g_lambda + b3));
    let a_closed = i / lambda - i * invariants(n, length, a).1 * b_closed / (length * length * lambda);
    let closed_form_gap = ((a_closed - a_n).norm() / a_n.norm()).max((b_closed - b_n).norm() / b_n.norm());

    let z_norm = lambda * b_n.norm() * (length / 2.0).sqrt();
    let k = n as f64 * PI / length;
    let g_total = kernel.total();
    // int g |1 - e^{-i lambda s}|^2 ds = 2 (g~ - Re g_lambda).
    let history = 2.0 * (g_total - g_lambda.re);
    let half = length / 2.0;
    let u_norm2 = half
        * (lambda * lambda * a_n.norm_sqr()
            + (a - g_total) * k * k * a_n.norm_sqr()
            + lambda * lambda * b_n.norm_sqr()
            + k * k * b_n.norm_sqr()
            + history * k * k * a_n.norm_sqr());
    Ok(ResonanceResult {
        n,
        lambda_n: lambda,
        a_n,
        b_n,
        b1: b1.into(),
        b2: b2.into(),
        b3: b3.into(),
        z_norm,
        ratio: z_norm / (lambda * lambda),
        u_norm: u_norm2.sqrt(),
        closed_form_gap,
        system_residual,
        above_mode: lambda > k,
    })
}

/// Per-n asymptotic quantities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AsymptoticRow {
    pub n: u32,
    /// `|B_{1,n} - (a - 1)|`.
    pub b1_defect: f64,
    /// `|B_{2,n} L / ((1 - a) pi n) - 1|`.
    pub b2_relative: f64,
    /// `|B_{2,n} - (1 - a) pi n / L|`.
    pub b2_absolute: f64,
    /// `|B_{3,n}|`.
    pub b3: f64,
    /// `|lambda_n g_{lambda_n} + i g0|`.
    pub transform_defect: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AsymptoticReport {
    pub rows: Vec<AsymptoticRow>,
    /// Fitted decay orders `p` with `value ~ n^-p`, in row-field order.
    pub b1_order: f64,
    pub b2_relative_order: f64,
    pub b2_absolute_order: f64,
    pub b3_order: f64,
    pub transform_order: f64,
}

pub fn asymptotic_report(ns: &[u32], length: f64, a: f64, kernel: &KernelSpec) -> Result<AsymptoticReport> {
    if ns.len() < 2 {
        return Err(Error::InsufficientData("need at least two values of n".into()));
    }
    let rows = ns
        .iter()
        .map(|&n| {
            let lambda = lambda_n(n, length, a)?;
            let (b1, b2, b3) = closed_form_factors(n, length, a, lambda);
            let target = (1.0 - a) * PI * n as f64 / length;
            Ok(AsymptoticRow {
                n,
                b1_defect: (b1 - (a - 1.0)).abs(),
                b2_relative: (b2 / target - 1.0).abs(),
                b2_absolute: (b2 - target).abs(),
                b3: b3.abs(),
                transform_defect: (lambda * kernel.laplace(lambda) + Complex64::new(0.0, kernel.g0)).norm(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let order = |f: &dyn Fn(&AsymptoticRow) -> f64| {
        let x: Vec<f64> = rows.iter().map(|r| (r.n as f64).ln()).collect();
        let y: Vec<f64> = rows.iter().map(|r| f(r).ln()).collect();
        -log_slope(&x, &y)
    };
    Ok(AsymptoticReport {
        b1_order: order(&|r| r.b1_defect),
        b2_relative_order: order(&|r| r.b2_relative),
        b2_absolute_order: order(&|r| r.b2_absolute),
        b3_order: order(&|r| r.b3),
        transform_order: order(&|r| r.transform_defect),
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GrowthCheck {
    /// Slope of `log z_norm` against `log lambda_n`.
    pub slope: f64,
    /// `z_norm / lambda_n^2` at the largest `n`.
    pub limit_ratio: f64,
    /// `sqrt(L / 2) (a - 1)^2 / g0`.
    pub expected_ratio: f64,
}

pub fn growth_check(ns: &[u32], length: f64, a: f64, kernel: &KernelSpec) -> Result<GrowthCheck> {
    let (lo, hi) = ns.iter().fold((u32::MAX, 0), |(lo, hi), &n| (lo.min(n), hi.max(n)));
    if ns.len() < 2 || (hi as f64) < 10.0 * lo as f64 {
        return Err(Error::InsufficientData("n range must span at least a decade".into()));
    }
    let results = ns.iter().map(|&n| solve_coefficients(n, length, a, kernel)).collect::<Result<Vec<_>>>()?;
    let x: Vec<f64> = results.iter().map(|r| r.lambda_n.ln()).collect();
    let y: Vec<f64> = results.iter().map(|r| r.z_norm.ln()).collect();
    let last = results.iter().max_by_key(|r| r.n).unwrap();
    Ok(GrowthCheck {
        slope: log_slope(&x, &y),
        limit_ratio: last.ratio,
        expected_ratio: (length / 2.0).sqrt() * (a - 1.0).powi(2) / kernel.g0,
    })
}

fn log_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

fn require_global(gen: &GeneratorMatrix) -> Result<CoefficientProfile> {
    let p = gen.disc.profile;
    if !p.is_global() {
        return Err(Error::InvalidArgument("the resonant sequence is defined for the global profile only".into()));
    }
    Ok(p)
}

/// Packed `U_n` on the grid (auxiliary form, `psi_n = A_n (g~ - g_lambda) sin`).
pub fn sample_state(gen: &GeneratorMatrix, res: &ResonanceResult) -> Result<Vec<Complex64>> {
    let p = require_global(gen)?;
    let disc = &gen.disc;
    let i = Complex64::i();
    let psi_amp = res.a_n * (disc.g_total - disc.kernel.laplace(res.lambda_n));
    let mut out = vec![Complex64::new(0.0, 0.0); gen.dim()];
    for j in 1..disc.nodes() - 1 {
        let s = (res.n as f64 * PI * disc.grid.x(j) / p.length).sin();
        let lay = &gen.layout;
        out[lay.index(Field::U, j).unwrap()] = res.a_n * s;
        out[lay.index(Field::V, j).unwrap()] = i * res.lambda_n * res.a_n * s;
        out[lay.index(Field::Y, j).unwrap()] = res.b_n * s;
        out[lay.index(Field::Z, j).unwrap()] = i * res.lambda_n * res.b_n * s;
        if let Some(k) = lay.index(Field::Psi, j) {
            out[k] = psi_amp * s;
        }
    }
    Ok(out)
}

/// Packed `F_n`: `sin(n pi x / L)` in the `z` slot.
pub fn sample_forcing(gen: &GeneratorMatrix, n: u32) -> Result<Vec<Complex64>> {
    let p = require_global(gen)?;
    let disc = &gen.disc;
    let mut out = vec![Complex64::new(0.0, 0.0); gen.dim()];
    for j in 1..disc.nodes() - 1 {
        out[gen.layout.index(Field::Z, j).unwrap()] = Complex64::from((n as f64 * PI * disc.grid.x(j) / p.length).sin());
    }
    Ok(out)
}

/// `(i lambda_n - A_h) U_n` on the grid.
pub fn apply_resolvent_operator(gen: &GeneratorMatrix, lambda: f64, x: &[Complex64]) -> Vec<Complex64> {
    let re: Vec<f64> = x.iter().map(|c| c.re).collect();
    let im: Vec<f64> = x.iter().map(|c| c.im).collect();
    let mut are = vec![0.0; x.len()];
    let mut aim = vec![0.0; x.len()];
    gen.a.matvec(&re, &mut are);
    gen.a.matvec(&im, &mut aim);
    x.iter()
        .zip(are.iter().zip(&aim))
        .map(|(c, (r, i))| Complex64::new(0.0, lambda) * c - Complex64::new(*r, *i))
        .collect()
}

/// Discrete check of the resonant sequence on a generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridCheck {
    /// `||(i lambda_n - A_h) U_n - F_n|| / ||F_n||` in the energy norm.
    pub residual: f64,
    pub u_norm: f64,
    pub f_norm: f64,
}

pub fn grid_check(gen: &GeneratorMatrix, res: &ResonanceResult) -> Result<GridCheck> {
    let product = res.lambda_n * gen.disc.dx();
    if product > TRUST_LIMIT {
        return Err(Error::Unresolved { lambda: res.lambda_n, product, limit: TRUST_LIMIT });
    }
    let u = sample_state(gen, res)?;
    let f = sample_forcing(gen, res.n)?;
    let mut r = apply_resolvent_operator(gen, res.lambda_n, &u);
    r.iter_mut().zip(&f).for_each(|(a, b)| *a -= b);
    let f_norm = gen.energy_norm(&f);
    Ok(GridCheck { residual: gen.energy_norm(&r) / f_norm, u_norm: gen.energy_norm(&u), f_norm })
}

/// Relative energy-norm residual of the sampled resonant pair on the grid.
pub fn residual_on_grid(gen: &GeneratorMatrix, n: u32) -> Result<f64> {
    let p = require_global(gen)?;
    let res = solve_coefficients(n, p.length, p.a, &gen.disc.kernel)?;
    Ok(grid_check(gen, &res)?.residual)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::Discretization;
    use crate::spectral::assemble_generator;
    use proptest::prelude::*;

    #[test]
    fn lambda_examples() {
        assert!((lambda_n(1, PI, 2.0).unwrap() - 0.5).abs() < 1e-15);
        assert!((lambda_n(2, PI, 2.0).unwrap() - 1.75).abs() < 1e-15);
        assert!(lambda_n(3, 2.0, 1.0).is_err());
        assert!(lambda_n(0, 2.0, 2.0).is_err());
        // n^2 > L^2 / (2 pi^2) fails for n = 1 with L = 5.
        assert!(lambda_n(1, 5.0, 2.0).is_err());
        let big = lambda_n(100_000, 2.0, 2.0).unwrap();
        assert!((big / (100_000.0 * PI / 2.0) - 1.0).abs() < 1e-9);
        // a < 1: every n is accepted and lambda_n lies above n pi / L.
        let r = solve_coefficients(1, 2.0, 0.8, &KernelSpec::new(0.5, 1.0)).unwrap();
        assert!(r.above_mode && r.lambda_n > PI / 2.0);
    }

    #[test]
    fn reference_coefficients() {
        let k = KernelSpec::new(1.0, 1.0);
        for n in [1, 2, 5, 50, 100, 500, 5000] {
            let r = solve_coefficients(n, 2.0, 2.0, &k).unwrap();
            assert!(r.system_residual <= 1e-12, "n={n} residual {}", r.system_residual);
            assert!(r.closed_form_gap <= 1e-10, "n={n} gap {}", r.closed_form_gap);
            assert!(r.lambda_n > 0.0 && !r.above_mode);
            assert!(r.u_norm >= r.z_norm);
        }
        let r = solve_coefficients(100, 2.0, 2.0, &k).unwrap();
        assert!((r.b_n.norm() / (100.0 * PI) - 0.5).abs() < 0.01);
        assert!((r.b1.re - 1.0).abs() < 1e-4);
    }

    #[test]
    fn stable_forms_match_naive() {
        for (n, a) in [(1, 2.0), (3, 1.5), (4, 0.7), (10, 3.0)] {
            let length = 2.0;
            let lambda = lambda_n(n, length, a).unwrap();
            let npi2 = (n as f64 * PI).powi(2);
            let naive = npi2 - length * length * lambda * lambda;
            assert!((invariants(n, length, a).1 - naive).abs() < 1e-12 * npi2);
            let l4 = length.powi(4);
            let b3 = (-npi2 * npi2 * a + length * length * npi2 * lambda * lambda * (a + 1.0)
                + l4 * (lambda * lambda - lambda.powi(4)))
                * lambda
                / (npi2 * naive);
            let (_, _, stable) = closed_form_factors(n, length, a, lambda);
            assert!((stable - b3).abs() < 1e-9 * (1.0 + b3.abs()), "n={n} {stable} vs {b3}");
            let g = KernelSpec::new(0.5, 1.0).laplace(lambda);
            let (m, _) = system(n, length, a, lambda, g);
            let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
            assert!((determinant(n, length, a, g) - det).norm() < 1e-10 * det.norm().max(1.0));
        }
    }

    #[test]
    fn ratio_and_growth() {
        let k = KernelSpec::new(1.0, 1.0);
        let ns: Vec<u32> = (50..=500).step_by(10).collect();
        let g = growth_check(&ns, 2.0, 2.0, &k).unwrap();
        assert!((g.expected_ratio - 1.0).abs() < 1e-15);
        assert!((g.limit_ratio - 1.0).abs() < 0.02);
        assert!((1.9..=2.1).contains(&g.slope));
        // lambda^{-3/2} ||U_n|| keeps increasing.
        let weighted: Vec<f64> = ns
            .iter()
            .map(|&n| {
                let r = solve_coefficients(n, 2.0, 2.0, &k).unwrap();
                r.u_norm * r.lambda_n.powf(-1.5)
            })
            .collect();
        assert!(weighted.windows(2).all(|w| w[1] > w[0]));
        assert!(growth_check(&[50, 100], 2.0, 2.0, &k).is_err());
    }

    #[test]
    fn transform_defect_is_first_order() {
        let k = KernelSpec::new(1.0, 1.0);
        let ns: Vec<u32> = (50..=500).step_by(25).collect();
        let rep = asymptotic_report(&ns, 2.0, 2.0, &k).unwrap();
        assert!((rep.transform_order - 1.0).abs() < 0.05);
        assert!((rep.b1_order - 2.0).abs() < 0.05);
        assert!((rep.b3_order - 1.0).abs() < 0.1);
        assert!((rep.b2_absolute_order - 1.0).abs() < 0.05);
    }

    #[test]
    fn forcing_norm_is_exact() {
        let p = CoefficientProfile::global(2.0, 2.0);
        let gen = assemble_generator(&Discretization::new(&p, &KernelSpec::new(1.0, 1.0), 101).unwrap());
        for n in [1, 7, 10, 40] {
            let f = sample_forcing(&gen, n).unwrap();
            assert!((gen.energy_norm(&f) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn local_profile_rejected() {
        let p = CoefficientProfile::local(1.0, 1.0, 0.5, 1.0, 0.2, 0.5, 0.8);
        let gen = assemble_generator(&Discretization::new(&p, &KernelSpec::new(1.0, 2.0), 41).unwrap());
        assert!(residual_on_grid(&gen, 2).is_err());
    }

    proptest! {
        #[test]
        fn direct_and_closed_form_agree(n in 1u32..2000, a in 1.2f64..4.0, g0 in 0.2f64..1.0, m in 0.5f64..3.0) {
            let length = 2.0;
            prop_assume!(g0 / m < a);
            if let Ok(r) = solve_coefficients(n, length, a, &KernelSpec::new(g0, m)) {
                prop_assert!(r.system_residual <= 1e-10);
                prop_assert!(r.closed_form_gap <= 1e-8);
                prop_assert!(r.lambda_n > 0.0);
            }
        }
    }
}
