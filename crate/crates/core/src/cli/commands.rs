use serde::Serialize;
use std::path::Path;

use super::config::{ProfileKind, RunConfig};
use super::manifest::{GridMeta, RunManifest};
use super::CliError;
use crate::analysis::classify_decay;
use crate::dynamics::{initial_state, run_from};
use crate::model::validate_config;
use crate::resonance::{asymptotic_report, grid_check, growth_check, lambda_n, solve_coefficients};
use crate::spectral::{
    assemble_generator, dissipativity_margin, growth_exponent, peak_envelope, refine_peaks, rightmost_eigenvalues,
    sweep_lambdas, sweep_resolvent, ResolventSample, TRUST_LIMIT,
};
use crate::Error;

const PLOT_SCRIPT: &str = r#"#!/usr/bin/env python3
"""Plots whichever histwave CSV outputs are present in this directory."""
import csv
import os
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(sys.argv[0]))


def load(name):
    path = os.path.join(here, name)
    if not os.path.exists(path):
        return None
    with open(path) as f:
        rows = list(csv.DictReader(f))
    return {k: [r[k] for r in rows] for k in rows[0]} if rows else None


def num(col):
    return [float(x) for x in col]


energy = load("energy.csv")
if energy:
    t, e = num(energy["t"]), num(energy["E_total"])
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    ax1.semilogy(t, e)
    ax1.set_xlabel("t")
    ax1.set_ylabel("E(t)")
    pos = [(a, b) for a, b in zip(t, e) if a > 0]
    ax2.loglog([a for a, _ in pos], [a * b for a, b in pos])
    ax2.set_xlabel("t")
    ax2.set_ylabel("t E(t)")
    fig.tight_layout()
    fig.savefig(os.path.join(here, "energy.png"), dpi=120)

sweep = load("sweep.csv")
if sweep:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.loglog(num(sweep["lambda"]), num(sweep["norm"]), lw=0.6, label="sweep")
    env = load("envelope.csv")
    if env:
        ax.loglog(num(env["lambda"]), num(env["norm"]), "o-", label="peak envelope")
    ax.set_xlabel("lambda")
    ax.set_ylabel("resolvent norm")
    ax.legend()
    fig.tight_layout()
    fig.savefig(os.path.join(here, "sweep.png"), dpi=120)

res = load("resonance.csv")
if res:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.loglog(num(res["lambda_n"]), num(res["z_norm"]), "o")
    ax.set_xlabel("lambda_n")
    ax.set_ylabel("||z_n||")
    fig.tight_layout()
    fig.savefig(os.path.join(here, "resonance.png"), dpi=120)
"#;

fn put<T: Serialize>(table: &mut toml::Table, key: &str, value: T) {
    if let Ok(v) = toml::Value::try_from(value) {
        table.insert(key.to_string(), v);
    }
}

fn write_csv<T: Serialize>(dir: &Path, name: &str, rows: &[T], manifest: &mut RunManifest) -> Result<(), CliError> {
    let path = dir.join(name);
    let fail = |e: csv::Error| CliError::Runtime(format!("cannot write {}: {e}", path.display()));
    let mut w = csv::Writer::from_path(&path).map_err(fail)?;
    for r in rows {
        w.serialize(r).map_err(fail)?;
    }
    w.flush().map_err(|e| CliError::Runtime(e.to_string()))?;
    manifest.outputs.push(name.to_string());
    Ok(())
}

fn write_plot(dir: &Path, manifest: &mut RunManifest) -> Result<(), CliError> {
    std::fs::write(dir.join("plot.py"), PLOT_SCRIPT).map_err(|e| CliError::Runtime(format!("cannot write plot.py: {e}")))?;
    manifest.outputs.push("plot.py".to_string());
    Ok(())
}

fn runtime(e: Error) -> CliError {
    match e {
        Error::Hypothesis(_) => CliError::Validation(e.to_string()),
        e => CliError::Runtime(e.to_string()),
    }
}

pub fn validate(config: &RunConfig, manifest: &mut RunManifest) -> Result<(), CliError> {
    let report = validate_config(&config.profile(), &config.kernel());
    put(&mut manifest.summary, "ok", report.ok);
    put(&mut manifest.summary, "violations", &report.violations);
    if !report.ok {
        return Err(CliError::Validation(format!("configuration violates the standing hypotheses:\n{report}")));
    }
    manifest.grid = Some(GridMeta::new(&config.discretization()?));
    Ok(())
}

#[derive(Serialize)]
struct EnergyRow {
    t: f64,
    #[serde(rename = "E1")]
    e1: f64,
    #[serde(rename = "E2")]
    e2: f64,
    #[serde(rename = "E3")]
    e3: f64,
    #[serde(rename = "E_total")]
    total: f64,
    dissipation: f64,
}

pub fn simulate(config: &RunConfig, dir: &Path, manifest: &mut RunManifest) -> Result<(), CliError> {
    let disc = config.discretization()?;
    manifest.grid = Some(GridMeta::new(&disc));
    let sim = config.sim_config();
    let state = initial_state(&disc, &sim).map_err(CliError::from_core_config)?;
    let out = run_from(&disc, &sim, state).map_err(runtime)?;
    let rows: Vec<EnergyRow> = out
        .reports
        .iter()
        .map(|r| EnergyRow { t: r.t, e1: r.e1, e2: r.e2, e3: r.e3, total: r.total, dissipation: r.dissipation })
        .collect();
    write_csv(dir, "energy.csv", &rows, manifest)?;
    write_plot(dir, manifest)?;
    let s = &mut manifest.summary;
    put(s, "steps", out.steps as u64);
    put(s, "energy_initial", out.reports[0].total);
    put(s, "energy_final", out.reports.last().unwrap().total);
    let t: Vec<f64> = out.reports.iter().map(|r| r.t).collect();
    let e: Vec<f64> = out.reports.iter().map(|r| r.total).collect();
    match classify_decay(&t, &e, &config.analysis) {
        Ok(fit) => put(s, "decay", fit),
        Err(err) => put(s, "decay_error", err.to_string()),
    }
    Ok(())
}

#[derive(Serialize)]
struct SweepRow {
    lambda: f64,
    norm: f64,
    source: &'static str,
}

/// Resonant frequencies inside `[lo, hi]`, empty unless the profile is global with `a != 1`.
fn resonant_frequencies(config: &RunConfig, lo: f64, hi: f64) -> Vec<f64> {
    if config.profile != ProfileKind::Global || config.a == 1.0 {
        return Vec::new();
    }
    (1u32..)
        .map(|n| (n, lambda_n(n, config.length, config.a)))
        .take_while(|(n, _)| (*n as f64) * std::f64::consts::PI / config.length <= 2.0 * hi + 1.0)
        .filter_map(|(_, l)| l.ok())
        .filter(|&l| l >= lo && l <= hi)
        .collect()
}

pub fn sweep(config: &RunConfig, dir: &Path, manifest: &mut RunManifest) -> Result<(), CliError> {
    let disc = config.discretization()?;
    manifest.grid = Some(GridMeta::new(&disc));
    let gen = assemble_generator(&disc);
    let opts = config.resolvent_options();
    let band = TRUST_LIMIT / disc.dx();
    let hi = config.sweep.lambda_max.unwrap_or(band).min(band);
    let lo = config.sweep.lambda_min;
    if !(lo < hi) {
        return Err(CliError::Validation(format!("sweep band [{lo}, {hi}] is empty (resolved band ends at {band})")));
    }
    let resonant = if config.sweep.resonant { resonant_frequencies(config, lo, hi) } else { Vec::new() };
    let lams = sweep_lambdas(&disc, lo, Some(hi), config.sweep.count, &resonant);
    let samples = sweep_resolvent(&gen, &lams, &opts).map_err(runtime)?;
    let peaks = if config.sweep.refine > 0 {
        refine_peaks(&gen, &samples, &opts, config.sweep.refine).map_err(runtime)?
    } else {
        Vec::new()
    };
    let mut rows: Vec<SweepRow> = samples
        .iter()
        .map(|s| SweepRow {
            lambda: s.lambda,
            norm: s.norm,
            source: if resonant.contains(&s.lambda) { "resonant" } else { "grid" },
        })
        .chain(peaks.iter().map(|s| SweepRow { lambda: s.lambda, norm: s.norm, source: "peak" }))
        .collect();
    rows.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
    let all: Vec<ResolventSample> = rows.iter().map(|r| ResolventSample { lambda: r.lambda, norm: r.norm }).collect();
    let envelope = peak_envelope(&all);
    write_csv(dir, "sweep.csv", &rows, manifest)?;
    write_csv(dir, "envelope.csv", &envelope, manifest)?;
    write_plot(dir, manifest)?;
    let s = &mut manifest.summary;
    put(s, "band", [lo, hi]);
    put(s, "samples", rows.len() as u64);
    put(s, "solver", if gen.dim() <= opts.dense_limit { "dense" } else { "iterative" });
    put(s, "max_norm", all.iter().map(|r| r.norm).fold(0.0, f64::max));
    match growth_exponent(&all) {
        Ok(g) => put(s, "growth_exponent", g),
        Err(e) => put(s, "growth_exponent_error", e.to_string()),
    }
    Ok(())
}

#[derive(Serialize)]
struct ResonanceRow {
    n: u32,
    lambda_n: f64,
    re_a: f64,
    im_a: f64,
    re_b: f64,
    im_b: f64,
    z_norm: f64,
    ratio: f64,
    /// Grid residual; NaN outside the resolved band.
    residual: f64,
}

pub fn resonance(config: &RunConfig, dir: &Path, manifest: &mut RunManifest) -> Result<(), CliError> {
    if config.profile != ProfileKind::Global {
        return Err(CliError::Validation("resonance needs profile = \"global\"".into()));
    }
    if config.a == 1.0 {
        return Err(CliError::Validation("resonance needs a != 1".into()));
    }
    let disc = config.discretization()?;
    manifest.grid = Some(GridMeta::new(&disc));
    let gen = assemble_generator(&disc);
    let kernel = config.kernel();
    let r = &config.resonance;
    let ns: Vec<u32> = (r.n_min..=r.n_max).step_by(r.n_step as usize).collect();
    let mut rows = Vec::with_capacity(ns.len());
    let mut above = 0u64;
    for &n in &ns {
        let res = solve_coefficients(n, config.length, config.a, &kernel).map_err(CliError::from_core_config)?;
        let residual = match grid_check(&gen, &res) {
            Ok(c) => c.residual,
            Err(Error::Unresolved { .. }) => f64::NAN,
            Err(e) => return Err(runtime(e)),
        };
        above += res.above_mode as u64;
        rows.push(ResonanceRow {
            n,
            lambda_n: res.lambda_n,
            re_a: res.a_n.re,
            im_a: res.a_n.im,
            re_b: res.b_n.re,
            im_b: res.b_n.im,
            z_norm: res.z_norm,
            ratio: res.ratio,
            residual,
        });
    }
    write_csv(dir, "resonance.csv", &rows, manifest)?;
    write_plot(dir, manifest)?;
    let s = &mut manifest.summary;
    put(s, "lambda_above_mode", above);
    match growth_check(&ns, config.length, config.a, &kernel) {
        Ok(g) => put(s, "growth", g),
        Err(e) => put(s, "growth_error", e.to_string()),
    }
    match asymptotic_report(&ns, config.length, config.a, &kernel) {
        Ok(rep) => {
            let mut orders = toml::Table::new();
            put(&mut orders, "b1", rep.b1_order);
            put(&mut orders, "b2_relative", rep.b2_relative_order);
            put(&mut orders, "b2_absolute", rep.b2_absolute_order);
            put(&mut orders, "b3", rep.b3_order);
            put(&mut orders, "transform", rep.transform_order);
            s.insert("orders".into(), toml::Value::Table(orders));
        }
        Err(e) => put(s, "orders_error", e.to_string()),
    }
    Ok(())
}

#[derive(Serialize)]
struct SpectrumRow {
    rank: usize,
    re: f64,
    im: f64,
}

pub fn spectrum(config: &RunConfig, dir: &Path, manifest: &mut RunManifest) -> Result<(), CliError> {
    let disc = config.discretization()?;
    manifest.grid = Some(GridMeta::new(&disc));
    let gen = assemble_generator(&disc);
    if gen.dim() > config.spectrum.max_dim {
        return Err(CliError::Runtime(format!(
            "generator dimension {} exceeds spectrum.max_dim = {}",
            gen.dim(),
            config.spectrum.max_dim
        )));
    }
    let eig = rightmost_eigenvalues(&gen, config.spectrum.count).map_err(runtime)?;
    let rows: Vec<SpectrumRow> = eig.iter().enumerate().map(|(i, z)| SpectrumRow { rank: i + 1, re: z.re, im: z.im }).collect();
    write_csv(dir, "spectrum.csv", &rows, manifest)?;
    let s = &mut manifest.summary;
    put(s, "dimension", gen.dim() as u64);
    if let Some(z) = eig.first() {
        put(s, "rightmost_real_part", z.re);
    }
    put(s, "dissipativity_margin", dissipativity_margin(&gen));
    Ok(())
}
