//! Decay-rate fits and the exponential/polynomial classification of energy series.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecayKind {
    Exponential,
    Polynomial,
    Undetermined,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayFit {
    pub kind: DecayKind,
    /// Amplitude rate for exponential fits, order for polynomial fits.
    pub value: f64,
    pub r_squared: f64,
    pub window: (f64, f64),
}

/// Thresholds of [`classify_decay`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifyOptions {
    /// Largest relative change of the exponential rate between the two windows.
    pub drift_tol: f64,
    pub exp_r_squared: f64,
    /// Largest ratio `sup_{[T/2,T]} tE / sup_{[T/4,T/2]} tE`.
    pub bound_ratio: f64,
    pub poly_r_squared: f64,
    pub min_samples: usize,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        Self { drift_tol: 0.10, exp_r_squared: 0.99, bound_ratio: 1.2, poly_r_squared: 0.95, min_samples: 10 }
    }
}

struct LineFit {
    slope: f64,
    r_squared: f64,
}

fn least_squares(x: &[f64], y: &[f64]) -> LineFit {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
        syy += (b - my) * (b - my);
    }
    let slope = sxy / sxx;
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - my - slope * (a - mx)).powi(2)).sum();
    let r_squared = if syy > 0.0 { (1.0 - ss_res / syy).clamp(0.0, 1.0) } else { 0.0 };
    LineFit { slope, r_squared }
}

fn window_samples(t: &[f64], e: &[f64], window: (f64, f64), min_samples: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if t.len() != e.len() {
        return Err(Error::InvalidArgument(format!("{} times but {} energies", t.len(), e.len())));
    }
    let (lo, hi) = window;
    if !(lo < hi) {
        return Err(Error::InvalidArgument(format!("empty window [{lo}, {hi}]")));
    }
    let tol = 1e-9 * hi.abs().max(1.0);
    let mut ts = Vec::new();
    let mut es = Vec::new();
    for (&ti, &ei) in t.iter().zip(e) {
        if ti >= lo - tol && ti <= hi + tol {
            if !(ei > 0.0) {
                return Err(Error::InvalidArgument(format!("energy {ei} at t = {ti} is not positive")));
            }
            ts.push(ti);
            es.push(ei);
        }
    }
    if ts.len() < min_samples {
        return Err(Error::InsufficientData(format!(
            "window [{lo}, {hi}] holds {} samples, need {min_samples}",
            ts.len()
        )));
    }
    Ok((ts, es))
}

/// Slope of `ln E` against `t`; the rate is `-slope / 2` (energy decays at twice the amplitude rate).
pub fn fit_exponential_rate(t: &[f64], e: &[f64], window: (f64, f64)) -> Result<DecayFit> {
    let (ts, es) = window_samples(t, e, window, 10)?;
    let logs: Vec<f64> = es.iter().map(|v| v.ln()).collect();
    let fit = least_squares(&ts, &logs);
    Ok(DecayFit { kind: DecayKind::Exponential, value: -0.5 * fit.slope, r_squared: fit.r_squared, window })
}

/// Slope of `ln E` against `ln t`; the order is `-slope`.
pub fn fit_polynomial_order(t: &[f64], e: &[f64], window: (f64, f64)) -> Result<DecayFit> {
    if window.0 < 1.0 {
        return Err(Error::InvalidArgument(format!("polynomial fits start at t >= 1, got {}", window.0)));
    }
    let (ts, es) = window_samples(t, e, window, 10)?;
    let logt: Vec<f64> = ts.iter().map(|v| v.ln()).collect();
    let logs: Vec<f64> = es.iter().map(|v| v.ln()).collect();
    let fit = least_squares(&logt, &logs);
    Ok(DecayFit { kind: DecayKind::Polynomial, value: -fit.slope, r_squared: fit.r_squared, window })
}

/// `sup t E(t)` over the samples inside `window`.
pub fn sup_weighted(t: &[f64], e: &[f64], window: (f64, f64)) -> Result<f64> {
    let (ts, es) = window_samples(t, e, window, 1)?;
    Ok(ts.iter().zip(&es).map(|(a, b)| a * b).fold(f64::NEG_INFINITY, f64::max))
}

/// Exponential, polynomial or undetermined, judged on `[T/4, T/2]` and `[T/2, T]`.
///
/// Exponential needs a positive rate that moves by at most `drift_tol`
/// between the windows with both fits above `exp_r_squared`. Polynomial needs
/// `sup tE` to stay bounded (`bound_ratio`) and a log-log fit on `[T/4, T]`
/// above `poly_r_squared`.
pub fn classify_decay(t: &[f64], e: &[f64], options: &ClassifyOptions) -> Result<DecayFit> {
    let t_end = *t.last().ok_or_else(|| Error::InsufficientData("empty series".into()))?;
    let quarter = 0.25 * t_end;
    if quarter < t[0].max(1.0) {
        return Err(Error::InsufficientData(format!(
            "series must reach T with T/4 >= max(1, t_0); T = {t_end}, t_0 = {}",
            t[0]
        )));
    }
    let early = (quarter, 0.5 * t_end);
    let late = (0.5 * t_end, t_end);
    let (early_t, early_e) = window_samples(t, e, early, options.min_samples)?;
    let (late_t, late_e) = window_samples(t, e, late, options.min_samples)?;
    let r1 = fit_exponential_rate(&early_t, &early_e, early)?;
    let r2 = fit_exponential_rate(&late_t, &late_e, late)?;
    if r1.value > 0.0
        && r2.value > 0.0
        && (r2.value - r1.value).abs() <= options.drift_tol * r1.value
        && r1.r_squared > options.exp_r_squared
        && r2.r_squared > options.exp_r_squared
    {
        let whole = fit_exponential_rate(t, e, (quarter, t_end))?;
        return Ok(DecayFit { r_squared: whole.r_squared.min(r1.r_squared).min(r2.r_squared), ..whole });
    }
    let ratio = sup_weighted(t, e, late)? / sup_weighted(t, e, early)?;
    let poly = fit_polynomial_order(t, e, (quarter, t_end))?;
    if ratio <= options.bound_ratio && poly.r_squared > options.poly_r_squared && poly.value > 0.0 {
        return Ok(poly);
    }
    Ok(DecayFit { kind: DecayKind::Undetermined, value: f64::NAN, r_squared: poly.r_squared, window: (quarter, t_end) })
}
