//! Run configuration: a TOML file with top-level model keys and optional sections.
//!
//! ```toml
//! L = 1.0
//! a = 1.0
//! b0 = 0.5
//! c0 = 1.0
//! alpha = 0.2
//! beta = 0.5
//! gamma = 0.8
//! g0 = 1.0
//! m = 2.0
//!
//! [time]
//! T = 40.0
//! ```
//!
//! Environment variables `HISTWAVE_<KEY>` and `HISTWAVE_<SECTION>__<KEY>`
//! override file values; keys match case-insensitively.

use serde::{Deserialize, Serialize};
use std::path::Path;

use super::CliError;
use crate::analysis::ClassifyOptions;
use crate::dynamics::{Discretization, HistoryProfile, InitialData, MemorySpec, Scheme, SimConfig};
use crate::memory::DEFAULT_G_TOL;
use crate::model::{CoefficientProfile, KernelSpec};
use crate::spectral::ResolventOptions;

pub const MANIFEST_FORMAT: &str = "histwave-manifest";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileKind {
    #[default]
    Local,
    Global,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub profile: ProfileKind,
    #[serde(rename = "L")]
    pub length: f64,
    pub a: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    pub g0: f64,
    pub m: f64,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub time: TimeSection,
    #[serde(default)]
    pub memory: MemorySection,
    #[serde(default)]
    pub initial: InitialSection,
    #[serde(default)]
    pub analysis: ClassifyOptions,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub resonance: ResonanceSection,
    #[serde(default)]
    pub spectrum: SpectrumSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    #[serde(rename = "N")]
    pub nodes: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        Self { nodes: 401 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeSection {
    pub dt: f64,
    #[serde(rename = "T")]
    pub t_end: f64,
    pub scheme: Scheme,
    pub stride: usize,
}

impl Default for TimeSection {
    fn default() -> Self {
        Self { dt: 1e-3, t_end: 20.0, scheme: Scheme::ImplicitMidpoint, stride: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MemoryKind {
    #[default]
    Aux,
    History,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MemorySection {
    pub kind: MemoryKind,
    /// Memory-grid spacing; defaults to `dt`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ds: Option<f64>,
    pub g_tol: f64,
    /// `u0(x, s) = (1 + past_rate s) u0(x)`.
    pub past_rate: f64,
}

impl Default for MemorySection {
    fn default() -> Self {
        Self { kind: MemoryKind::Aux, ds: None, g_tol: DEFAULT_G_TOL, past_rate: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialKind {
    #[default]
    Sine,
    Rotating,
    Bump,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialSection {
    pub kind: InitialKind,
    pub mode: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub center: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub width: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub modes: usize,
    pub amplitude: f64,
}

impl Default for InitialSection {
    fn default() -> Self {
        Self { kind: InitialKind::Sine, mode: 1, center: None, width: None, seed: None, modes: 32, amplitude: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub lambda_min: f64,
    /// Defaults to the edge of the resolved band.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_max: Option<f64>,
    pub count: usize,
    /// Golden-section iterations per local maximum (0 disables refinement).
    pub refine: usize,
    /// Adds the resonant frequencies for the global profile with `a != 1`.
    pub resonant: bool,
    pub dense_limit: usize,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        let r = ResolventOptions::default();
        Self {
            lambda_min: 1.0,
            lambda_max: None,
            count: 2000,
            refine: 30,
            resonant: true,
            dense_limit: r.dense_limit,
            tol: r.tol,
            max_iter: r.max_iter,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResonanceSection {
    pub n_min: u32,
    pub n_max: u32,
    pub n_step: u32,
}

impl Default for ResonanceSection {
    fn default() -> Self {
        Self { n_min: 50, n_max: 500, n_step: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumSection {
    pub count: usize,
    /// Largest generator dimension for the dense eigensolve.
    pub max_dim: usize,
}

impl Default for SpectrumSection {
    fn default() -> Self {
        Self { count: 10, max_dim: 4000 }
    }
}

const TOP_KEYS: &[&str] = &["profile", "L", "a", "b0", "c0", "alpha", "beta", "gamma", "g0", "m"];
const SECTION_KEYS: &[(&str, &[&str])] = &[
    ("grid", &["N"]),
    ("time", &["dt", "T", "scheme", "stride"]),
    ("memory", &["kind", "ds", "g_tol", "past_rate"]),
    ("initial", &["kind", "mode", "center", "width", "seed", "modes", "amplitude"]),
    ("analysis", &["drift_tol", "exp_r_squared", "bound_ratio", "poly_r_squared", "min_samples"]),
    ("sweep", &["lambda_min", "lambda_max", "count", "refine", "resonant", "dense_limit", "tol", "max_iter"]),
    ("resonance", &["n_min", "n_max", "n_step"]),
    ("spectrum", &["count", "max_dim"]),
];

fn env_value(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Applies `HISTWAVE_*` overrides to a raw table.
pub fn apply_env<I>(table: &mut toml::Table, vars: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = (String, String)>,
{
    for (name, raw) in vars {
        let Some(rest) = name.strip_prefix("HISTWAVE_") else { continue };
        let unknown = || CliError::Validation(format!("unknown override {name}"));
        let value = env_value(&raw);
        match rest.split_once("__") {
            None => {
                let key = TOP_KEYS.iter().find(|k| k.eq_ignore_ascii_case(rest)).ok_or_else(unknown)?;
                table.insert(key.to_string(), value);
            }
            Some((section, key)) => {
                let (section, keys) = SECTION_KEYS
                    .iter()
                    .find(|(s, _)| s.eq_ignore_ascii_case(section))
                    .ok_or_else(unknown)?;
                let key = keys.iter().find(|k| k.eq_ignore_ascii_case(key)).ok_or_else(unknown)?;
                let entry = table.entry(section.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
                let toml::Value::Table(t) = entry else {
                    return Err(CliError::Validation(format!("`{section}` must be a table")));
                };
                t.insert(key.to_string(), value);
            }
        }
    }
    Ok(())
}

/// Parses TOML text; a run manifest is accepted and its `[config]` table used.
pub fn parse_config_str<I>(text: &str, env: I) -> Result<RunConfig, CliError>
where
    I: IntoIterator<Item = (String, String)>,
{
    let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::Validation(e.to_string()))?;
    if table.get("format").and_then(|v| v.as_str()) == Some(MANIFEST_FORMAT) {
        table = match table.remove("config") {
            Some(toml::Value::Table(t)) => t,
            _ => return Err(CliError::Validation("manifest has no [config] table".into())),
        };
    }
    apply_env(&mut table, env)?;
    let config: RunConfig =
        RunConfig::deserialize(toml::Value::Table(table)).map_err(|e| CliError::Validation(e.to_string()))?;
    config.check()?;
    Ok(config)
}

pub fn parse_config<I>(path: &Path, env: I) -> Result<RunConfig, CliError>
where
    I: IntoIterator<Item = (String, String)>,
{
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", path.display())))?;
    parse_config_str(&text, env)
}

impl RunConfig {
    fn check(&self) -> Result<(), CliError> {
        let local = [("b0", self.b0), ("c0", self.c0), ("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma)];
        match self.profile {
            ProfileKind::Local => {
                let missing: Vec<&str> = local.iter().filter(|(_, v)| v.is_none()).map(|(k, _)| *k).collect();
                if !missing.is_empty() {
                    return Err(CliError::Validation(format!("local profile needs {}", missing.join(", "))));
                }
            }
            ProfileKind::Global => {
                let given: Vec<&str> = local.iter().filter(|(_, v)| v.is_some()).map(|(k, _)| *k).collect();
                if !given.is_empty() {
                    return Err(CliError::Validation(format!(
                        "{} not used with the global profile",
                        given.join(", ")
                    )));
                }
            }
        }
        if self.time.stride == 0 {
            return Err(CliError::Validation("time.stride must be at least 1".into()));
        }
        if !(self.time.dt > 0.0) {
            return Err(CliError::Validation(format!("time.dt must be positive, got {}", self.time.dt)));
        }
        if self.resonance.n_step == 0 || self.resonance.n_min == 0 || self.resonance.n_min > self.resonance.n_max {
            return Err(CliError::Validation("resonance needs 1 <= n_min <= n_max and n_step >= 1".into()));
        }
        Ok(())
    }

    /// Fills every defaulted field that depends on other values or on the flags.
    pub fn resolve(&mut self, seed: Option<u64>) {
        if let Some(s) = seed {
            self.initial.seed = Some(s);
        }
        if self.initial.kind == InitialKind::Random {
            self.initial.seed.get_or_insert(0);
        }
        if self.memory.kind == MemoryKind::History {
            self.memory.ds.get_or_insert(self.time.dt);
        }
        if self.initial.kind == InitialKind::Bump {
            self.initial.center.get_or_insert(0.5 * self.length);
            self.initial.width.get_or_insert(0.25 * self.length);
        }
    }

    pub fn profile(&self) -> CoefficientProfile {
        match self.profile {
            ProfileKind::Global => CoefficientProfile::global(self.length, self.a),
            ProfileKind::Local => CoefficientProfile::local(
                self.length,
                self.a,
                self.b0.unwrap_or(0.0),
                self.c0.unwrap_or(0.0),
                self.alpha.unwrap_or(0.0),
                self.beta.unwrap_or(0.0),
                self.gamma.unwrap_or(0.0),
            ),
        }
    }

    pub fn kernel(&self) -> KernelSpec {
        KernelSpec::new(self.g0, self.m)
    }

    pub fn discretization(&self) -> Result<Discretization, CliError> {
        Discretization::new(&self.profile(), &self.kernel(), self.grid.nodes).map_err(CliError::from_core_config)
    }

    pub fn sim_config(&self) -> SimConfig {
        let initial = match self.initial.kind {
            InitialKind::Sine => InitialData::Sine { mode: self.initial.mode },
            InitialKind::Rotating => InitialData::Rotating { mode: self.initial.mode },
            InitialKind::Bump => InitialData::Bump {
                center: self.initial.center.unwrap_or(0.5 * self.length),
                width: self.initial.width.unwrap_or(0.25 * self.length),
            },
            InitialKind::Random => InitialData::Random { seed: self.initial.seed.unwrap_or(0), modes: self.initial.modes },
        };
        let memory = match self.memory.kind {
            MemoryKind::Aux => MemorySpec::Aux,
            MemoryKind::History => {
                MemorySpec::History { ds: self.memory.ds.unwrap_or(self.time.dt), g_tol: self.memory.g_tol }
            }
        };
        let history = if self.memory.past_rate == 0.0 {
            HistoryProfile::Static
        } else {
            HistoryProfile::Linear { rate: self.memory.past_rate }
        };
        SimConfig {
            dt: self.time.dt,
            t_end: self.time.t_end,
            scheme: self.time.scheme,
            memory,
            initial,
            history,
            stride: self.time.stride,
            amplitude: self.initial.amplitude,
        }
    }

    pub fn resolvent_options(&self) -> ResolventOptions {
        ResolventOptions { dense_limit: self.sweep.dense_limit, tol: self.sweep.tol, max_iter: self.sweep.max_iter }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "L = 1.0\na = 1.0\nb0 = 0.5\nc0 = 1.0\nalpha = 0.2\nbeta = 0.5\ngamma = 0.8\ng0 = 1.0\nm = 2.0\n";

    fn none() -> Vec<(String, String)> {
        Vec::new()
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config_str(MINIMAL, none()).unwrap();
        assert_eq!(c.grid.nodes, 401);
        assert_eq!(c.time.dt, 1e-3);
        assert_eq!(c.time.t_end, 20.0);
        assert_eq!(c.time.scheme, Scheme::ImplicitMidpoint);
        assert_eq!(c.memory.kind, MemoryKind::Aux);
        assert!(c.discretization().is_ok());
    }

    #[test]
    fn unknown_key_is_named() {
        let err = parse_config_str(&format!("{MINIMAL}speeed = 2.0\n"), none()).unwrap_err();
        assert!(matches!(&err, CliError::Validation(m) if m.contains("speeed")), "{err:?}");
        let err = parse_config_str(&format!("{MINIMAL}[time]\ndtt = 1.0\n"), none()).unwrap_err();
        assert!(matches!(&err, CliError::Validation(m) if m.contains("dtt")), "{err:?}");
    }

    #[test]
    fn hypothesis_violation_is_validation() {
        let text = MINIMAL.replace("b0 = 0.5", "b0 = 2.0");
        let c = parse_config_str(&text, none()).unwrap();
        match c.discretization().unwrap_err() {
            CliError::Validation(m) => assert!(m.contains("b~0")),
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn env_overrides() {
        let env = vec![
            ("HISTWAVE_A".to_string(), "2.0".to_string()),
            ("HISTWAVE_TIME__T".to_string(), "5".to_string()),
            ("HISTWAVE_time__scheme".to_string(), "explicit-rk4".to_string()),
            ("PATH".to_string(), "/bin".to_string()),
        ];
        let c = parse_config_str(MINIMAL, env).unwrap();
        assert_eq!(c.a, 2.0);
        assert_eq!(c.time.t_end, 5.0);
        assert_eq!(c.time.scheme, Scheme::ExplicitRk4);
        let bad = vec![("HISTWAVE_GRID__NN".to_string(), "3".to_string())];
        assert!(parse_config_str(MINIMAL, bad).is_err());
    }

    #[test]
    fn global_profile_rules() {
        let c = parse_config_str("profile = \"global\"\nL = 2.0\na = 2.0\ng0 = 1.0\nm = 1.0\n", none()).unwrap();
        assert!(c.profile().is_global());
        assert!(parse_config_str("profile = \"global\"\nL = 2.0\na = 2.0\nb0 = 1.0\ng0 = 1.0\nm = 1.0\n", none()).is_err());
        assert!(parse_config_str("L = 2.0\na = 2.0\ng0 = 1.0\nm = 1.0\n", none()).is_err());
    }

    #[test]
    fn echo_round_trips() {
        let mut c = parse_config_str(&format!("{MINIMAL}[initial]\nkind = \"random\"\n[memory]\nkind = \"history\"\n"), none()).unwrap();
        c.resolve(Some(9));
        assert_eq!(c.initial.seed, Some(9));
        assert_eq!(c.memory.ds, Some(1e-3));
        let text = toml::to_string(&c).unwrap();
        assert_eq!(parse_config_str(&text, none()).unwrap(), c);
    }
}
