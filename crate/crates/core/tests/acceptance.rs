//! End-to-end acceptance checks. Each test prints one `criterion K: PASS|FAIL` line.

use std::time::{Duration, Instant};

use histwave::analysis::{classify_decay, fit_exponential_rate, sup_weighted, ClassifyOptions, DecayKind};
use histwave::dynamics::{
    energy, initial_state, run, Discretization, HistoryProfile, InitialData, MemorySpec, SimConfig, Stepper,
};
use histwave::memory::{reduced_energy, DEFAULT_G_TOL};
use histwave::model::{CoefficientProfile, KernelSpec};
use histwave::resonance::{asymptotic_report, grid_check, growth_check, residual_on_grid, solve_coefficients};
use histwave::spectral::{
    assemble_generator, growth_exponent, refine_peaks, resolvent_norm, rightmost_eigenvalues, sweep_lambdas,
    sweep_resolvent, ResolventOptions, TRUST_LIMIT,
};

fn report(k: u32, pass: bool, detail: String) {
    println!("criterion {k}: {} {detail}", if pass { "PASS" } else { "FAIL" });
}

fn reference(a: f64, b0: f64) -> CoefficientProfile {
    CoefficientProfile::local(1.0, a, b0, 1.0, 0.2, 0.5, 0.8)
}

fn reference_kernel() -> KernelSpec {
    KernelSpec::new(1.0, 2.0)
}

fn series(out: &histwave::dynamics::RunOutput) -> (Vec<f64>, Vec<f64>) {
    (out.reports.iter().map(|r| r.t).collect(), out.reports.iter().map(|r| r.total).collect())
}

fn within(elapsed: Duration, seconds: u64) -> bool {
    elapsed <= Duration::from_secs(seconds)
}

/// Largest `|(E_{k+1} - E_k)/dt - (D_k + D_{k+1})/2| / E_0` over the run.
fn identity_defect(disc: &Discretization, dt: f64) -> (f64, bool) {
    let cfg = SimConfig { dt, t_end: 20.0, ..SimConfig::default() };
    let out = run(disc, &cfg).unwrap();
    let e0 = out.reports[0].total;
    let mut worst = 0.0f64;
    let mut monotone = true;
    for w in out.reports.windows(2) {
        monotone &= w[1].total <= w[0].total + 1e-12 * e0;
        let defect = (w[1].total - w[0].total) / dt - 0.5 * (w[0].dissipation + w[1].dissipation);
        worst = worst.max(defect.abs() / e0);
    }
    (worst, monotone)
}

#[test]
fn criterion_1_dissipation_law() {
    let start = Instant::now();
    let disc = Discretization::new(&reference(1.0, 0.5), &reference_kernel(), 401).unwrap();
    let (coarse, monotone_coarse) = identity_defect(&disc, 1e-3);
    let (fine, monotone_fine) = identity_defect(&disc, 5e-4);
    let ratio = coarse / fine;
    let elapsed = start.elapsed();
    let pass = monotone_coarse && monotone_fine && (ratio - 4.0).abs() <= 0.8 && within(elapsed, 60);
    report(
        1,
        pass,
        format!(
            "monotone={} defect(dt)={coarse:.3e} defect(dt/2)={fine:.3e} ratio={ratio:.3} time={elapsed:.1?}",
            monotone_coarse && monotone_fine
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_2_conservative_limit() {
    let start = Instant::now();
    let disc = Discretization::new(&reference(1.0, 0.0), &reference_kernel(), 401).unwrap();
    let out = run(&disc, &SimConfig { stride: 1000, ..SimConfig::default() }).unwrap();
    let (e0, e1) = (out.reports[0].total, out.reports.last().unwrap().total);
    let drift = ((e1 - e0) / e0).abs();
    let elapsed = start.elapsed();
    let pass = drift <= 1e-10 && within(elapsed, 30);
    report(2, pass, format!("|E(T)-E(0)|/E(0)={drift:.3e} time={elapsed:.1?}"));
    assert!(pass);
}

/// Largest relative gap between the history path (kinetic plus elastic plus
/// the reduced energy of its kernel moment) and the aux path on `[0, 10]`.
fn backend_gap(disc: &Discretization, dt: f64) -> (f64, f64) {
    let base = SimConfig { dt, history: HistoryProfile::Linear { rate: 1.0 }, ..SimConfig::default() };
    let hist_cfg = SimConfig { memory: MemorySpec::History { ds: dt, g_tol: DEFAULT_G_TOL }, ..base.clone() };
    let mut aux = initial_state(disc, &base).unwrap();
    let mut hist = initial_state(disc, &hist_cfg).unwrap();
    let sa = Stepper::new(disc, base.scheme, dt, &aux.memory).unwrap();
    let sh = Stepper::new(disc, base.scheme, dt, &hist.memory).unwrap();
    let steps = (10.0 / dt).round() as usize;
    let every = (0.01 / dt).round().max(1.0) as usize;
    let (mut reduced_gap, mut full_gap) = (0.0f64, 0.0f64);
    for k in 0..=steps {
        if k % every == 0 {
            let ea = energy(&aux, disc);
            let eh = energy(&hist, disc);
            let reduced = eh.e1 + eh.e2 + reduced_energy(&hist.memory.moment(&disc.kernel), disc);
            reduced_gap = reduced_gap.max((reduced - ea.total).abs() / ea.total);
            full_gap = full_gap.max((eh.total - ea.total).abs() / ea.total);
        }
        if k < steps {
            sa.step(&mut aux).unwrap();
            sh.step(&mut hist).unwrap();
        }
    }
    (reduced_gap, full_gap)
}

#[test]
fn criterion_3_memory_backends() {
    let start = Instant::now();
    let disc = Discretization::new(&reference(1.0, 0.5), &reference_kernel(), 401).unwrap();
    let (gap, full) = backend_gap(&disc, 1e-3);
    let (coarse, _) = backend_gap(&disc, 2e-3);
    let elapsed = start.elapsed();
    let pass = gap <= 0.02 && gap < coarse && within(elapsed, 300);
    report(
        3,
        pass,
        format!("gap(ds=1e-3)={gap:.3e} gap(ds=2e-3)={coarse:.3e} full-E3 gap={full:.3e} time={elapsed:.1?}"),
    );
    assert!(pass);
}

#[test]
fn criterion_4_exponential_decay() {
    let start = Instant::now();
    let disc = Discretization::new(&reference(1.0, 0.5), &reference_kernel(), 401).unwrap();
    let cfg = SimConfig { t_end: 40.0, stride: 10, initial: InitialData::Rotating { mode: 1 }, ..SimConfig::default() };
    let (t, e) = series(&run(&disc, &cfg).unwrap());
    let early = fit_exponential_rate(&t, &e, (10.0, 20.0)).unwrap();
    let late = fit_exponential_rate(&t, &e, (20.0, 40.0)).unwrap();
    let drift = (late.value - early.value).abs() / early.value;
    let kind = classify_decay(&t, &e, &ClassifyOptions::default()).unwrap().kind;
    let elapsed = start.elapsed();
    let pass = drift <= 0.10
        && early.r_squared > 0.99
        && late.r_squared > 0.99
        && kind == DecayKind::Exponential
        && within(elapsed, 120);
    report(
        4,
        pass,
        format!(
            "rate[10,20]={:.4} (R2 {:.4}) rate[20,40]={:.4} (R2 {:.4}) drift={drift:.3} class={kind:?} time={elapsed:.1?}",
            early.value, early.r_squared, late.value, late.r_squared
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_5_polynomial_decay() {
    let start = Instant::now();
    let disc = Discretization::new(&reference(2.0, 0.5), &reference_kernel(), 401).unwrap();
    let cfg = SimConfig {
        t_end: 400.0,
        stride: 100,
        initial: InitialData::Random { seed: 1, modes: 32 },
        ..SimConfig::default()
    };
    let (t, e) = series(&run(&disc, &cfg).unwrap());
    let cut = t.iter().position(|&x| x > 200.0 + 1e-9).unwrap();
    let fit = classify_decay(&t[..cut], &e[..cut], &ClassifyOptions::default()).unwrap();
    let rate_t = fit_exponential_rate(&t, &e, (100.0, 200.0)).unwrap().value;
    let rate_2t = fit_exponential_rate(&t, &e, (200.0, 400.0)).unwrap().value;
    let drop = 1.0 - rate_2t / rate_t;
    let sup_ratio = sup_weighted(&t, &e, (100.0, 200.0)).unwrap() / sup_weighted(&t, &e, (50.0, 100.0)).unwrap();
    let elapsed = start.elapsed();
    let order_ok = fit.kind == DecayKind::Polynomial && (0.7..=1.3).contains(&fit.value);
    let pass = order_ok && drop > 0.30 && sup_ratio <= 1.2 && within(elapsed, 600);
    report(
        5,
        pass,
        format!(
            "class={:?} value={:.3} (R2 {:.4}) rate drop={drop:.3} sup ratio={sup_ratio:.3} time={elapsed:.1?}",
            fit.kind, fit.value, fit.r_squared
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_6_resonance_target() {
    let start = Instant::now();
    let kernel = KernelSpec::new(1.0, 1.0);
    let ns: Vec<u32> = (50..=500).collect();
    let g = growth_check(&ns, 2.0, 2.0, &kernel).unwrap();
    let gap = ns
        .iter()
        .map(|&n| solve_coefficients(n, 2.0, 2.0, &kernel).unwrap().closed_form_gap)
        .fold(0.0, f64::max);
    let target = (g.limit_ratio / g.expected_ratio - 1.0).abs();
    let elapsed = start.elapsed();
    let pass = target <= 0.02 && (1.9..=2.1).contains(&g.slope) && gap <= 1e-10 && within(elapsed, 10);
    report(
        6,
        pass,
        format!(
            "ratio(500)={:.6} expected={:.6} slope={:.4} max closed-form gap={gap:.2e} time={elapsed:.1?}",
            g.limit_ratio, g.expected_ratio, g.slope
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_7_asymptotic_exponents() {
    let start = Instant::now();
    let ns: Vec<u32> = (50..=500).collect();
    let rep = asymptotic_report(&ns, 2.0, 2.0, &KernelSpec::new(1.0, 1.0)).unwrap();
    let checks = [
        ("B1-(a-1)", rep.b1_order, 2.0),
        ("B2*L/((1-a)pi n)-1", rep.b2_relative_order, 1.0),
        ("B3", rep.b3_order, 1.0),
        ("lambda g_lambda + i g0", rep.transform_order, 1.0),
    ];
    let elapsed = start.elapsed();
    let pass = checks.iter().all(|(_, got, want)| (got - want).abs() <= 0.2) && within(elapsed, 10);
    let detail: Vec<String> = checks.iter().map(|(name, got, want)| format!("{name}: {got:.3} (want {want})")).collect();
    report(
        7,
        pass,
        format!(
            "{}; B2-(1-a)pi n/L: {:.3} time={elapsed:.1?}",
            detail.join(", "),
            rep.b2_absolute_order
        ),
    );
    assert!(pass);
}

fn sweep_exponent(a: f64, m: f64, extra: &[f64]) -> (histwave::spectral::GeneratorMatrix, f64) {
    let disc = Discretization::new(&CoefficientProfile::global(2.0, a), &KernelSpec::new(1.0, m), 801).unwrap();
    let gen = assemble_generator(&disc);
    let opts = ResolventOptions::default();
    let lams = sweep_lambdas(&disc, 1.0, None, 2000, extra);
    let mut samples = sweep_resolvent(&gen, &lams, &opts).unwrap();
    samples.extend(refine_peaks(&gen, &samples, &opts, 30).unwrap());
    samples.sort_by(|x, y| x.lambda.total_cmp(&y.lambda));
    let slope = growth_exponent(&samples).unwrap();
    (gen, slope)
}

#[test]
fn criterion_8_resolvent_growth() {
    let start = Instant::now();
    let (_, flat) = sweep_exponent(1.0, 2.0, &[]);

    let kernel = KernelSpec::new(1.0, 1.0);
    let dx = 2.0 / 800.0;
    let resonant: Vec<_> = (1u32..)
        .map(|n| solve_coefficients(n, 2.0, 2.0, &kernel).unwrap())
        .take_while(|r| r.lambda_n * dx <= TRUST_LIMIT)
        .collect();
    let lambdas: Vec<f64> = resonant.iter().map(|r| r.lambda_n).collect();
    let (gen, steep) = sweep_exponent(2.0, 1.0, &lambdas);
    let opts = ResolventOptions::default();
    let mut resolved = 0;
    let mut bound_ok = true;
    let mut worst = f64::INFINITY;
    for r in &resonant {
        let check = grid_check(&gen, r).unwrap();
        if check.residual > 0.05 {
            continue;
        }
        resolved += 1;
        let norm = resolvent_norm(&gen, r.lambda_n, &opts).unwrap();
        let ratio = norm / (check.u_norm / check.f_norm);
        worst = worst.min(ratio);
        bound_ok &= ratio >= 0.95;
    }
    let elapsed = start.elapsed();
    let pass = flat < 0.2 && (steep - 2.0).abs() <= 0.3 && resolved > 0 && bound_ok && within(elapsed, 900);
    report(
        8,
        pass,
        format!(
            "a=1 slope={flat:.3} a=2 slope={steep:.3} resolved n={resolved} min norm/(|U|/|F|)={worst:.3} time={elapsed:.1?}"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_9_grid_residual() {
    let start = Instant::now();
    let profile = CoefficientProfile::global(2.0, 2.0);
    let kernel = KernelSpec::new(1.0, 1.0);
    let residuals: Vec<f64> = [201, 401, 801, 1601]
        .iter()
        .map(|&nodes| {
            let gen = assemble_generator(&Discretization::new(&profile, &kernel, nodes).unwrap());
            residual_on_grid(&gen, 10).unwrap()
        })
        .collect();
    let ratios: Vec<f64> = residuals.windows(2).map(|w| w[0] / w[1]).collect();
    let elapsed = start.elapsed();
    let pass = ratios.iter().all(|r| (r - 4.0).abs() <= 1.0) && within(elapsed, 60);
    let shown: Vec<String> = residuals.iter().map(|r| format!("{r:.3e}")).collect();
    report(9, pass, format!("residuals=[{}] ratios={ratios:.3?} time={elapsed:.1?}", shown.join(", ")));
    assert!(pass);
}

#[test]
fn criterion_10_spectral_check() {
    let start = Instant::now();
    let rightmost = |b0: f64| {
        let gen = assemble_generator(&Discretization::new(&reference(1.0, b0), &reference_kernel(), 201).unwrap());
        rightmost_eigenvalues(&gen, 1).unwrap()[0].re
    };
    let damped = rightmost(0.5);
    let free = rightmost(0.0);
    let elapsed = start.elapsed();
    let pass = damped < 0.0 && free.abs() <= 1e-12 && within(elapsed, 120);
    report(10, pass, format!("max Re (b0=0.5)={damped:.3e} max Re (b0=0)={free:.3e} time={elapsed:.1?}"));
    assert!(pass);
}
