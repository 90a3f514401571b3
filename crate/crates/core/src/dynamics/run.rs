use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::{energy, Discretization, EnergyReport, Scheme, State, Stepper};
use crate::error::{Error, Result};
use crate::memory::{init_history, AuxMemory, Memory, SGrid, DEFAULT_G_TOL};

/// Built-in initial data; all fields vanish at both ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialData {
    /// `u0 = y0 = sin(k pi x / L)`, zero velocities.
    Sine { mode: usize },
    /// `u0 = sin(k pi x / L)`, `y_t(0) = (k pi / L) sin(k pi x / L)`: the two
    /// waves start a quarter period apart, which excites one branch of each
    /// coupled pair instead of both.
    Rotating { mode: usize },
    /// Compactly supported `(1 - r^2)^4` bump in `u0` and `y0`.
    Bump { center: f64, width: f64 },
    /// Sine series in every field with coefficients uniform in `[-k^-3, k^-3]`.
    Random { seed: u64, modes: usize },
}

impl Default for InitialData {
    fn default() -> Self {
        InitialData::Sine { mode: 1 }
    }
}

/// Past displacement `u0(x, s)` for `s > 0` in terms of `u0(x) = u0(x, 0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum HistoryProfile {
    /// `u0(x, s) = u0(x)`: the system starts from rest in the memory.
    Static,
    /// `u0(x, s) = (1 + rate s) u0(x)`.
    Linear { rate: f64 },
}

impl Default for HistoryProfile {
    fn default() -> Self {
        HistoryProfile::Static
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MemorySpec {
    Aux,
    /// Uniform s-grid of spacing `ds` truncated where `g / g0 = g_tol`.
    History { ds: f64, g_tol: f64 },
}

impl MemorySpec {
    pub fn history(ds: f64) -> Self {
        MemorySpec::History { ds, g_tol: DEFAULT_G_TOL }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub t_end: f64,
    pub scheme: Scheme,
    pub memory: MemorySpec,
    pub initial: InitialData,
    pub history: HistoryProfile,
    /// An energy report every `stride` steps (plus the final step).
    pub stride: usize,
    /// Multiplies every initial field.
    pub amplitude: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_end: 20.0,
            scheme: Scheme::ImplicitMidpoint,
            memory: MemorySpec::Aux,
            initial: InitialData::default(),
            history: HistoryProfile::default(),
            stride: 1,
            amplitude: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub reports: Vec<EnergyReport>,
    pub final_state: State,
    pub steps: usize,
}

/// Samples the initial displacement/velocity fields on the grid.
pub fn initial_fields(disc: &Discretization, data: &InitialData) -> Result<[Vec<f64>; 4]> {
    let n = disc.nodes();
    let length = disc.grid.length;
    let mut fields = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    match *data {
        InitialData::Sine { mode } | InitialData::Rotating { mode } => {
            if mode == 0 {
                return Err(Error::InvalidArgument("sine mode must be at least 1".into()));
            }
            let k = mode as f64 * PI / length;
            let rotating = matches!(data, InitialData::Rotating { .. });
            for j in 1..n - 1 {
                let w = (k * disc.grid.x(j)).sin();
                fields[0][j] = w;
                if rotating {
                    fields[3][j] = k * w;
                } else {
                    fields[2][j] = w;
                }
            }
        }
        InitialData::Bump { center, width } => {
            if !(width > 0.0) || center - width < 0.0 || center + width > length {
                return Err(Error::InvalidArgument(format!(
                    "bump [{}, {}] must lie inside [0, {length}]",
                    center - width,
                    center + width
                )));
            }
            for j in 1..n - 1 {
                let r = (disc.grid.x(j) - center) / width;
                let w = if r.abs() < 1.0 { (1.0 - r * r).powi(4) } else { 0.0 };
                fields[0][j] = w;
                fields[2][j] = w;
            }
        }
        InitialData::Random { seed, modes } => {
            if modes == 0 {
                return Err(Error::InvalidArgument("random data needs at least one mode".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for field in fields.iter_mut() {
                for k in 1..=modes {
                    let amp = (k as f64).powi(-3);
                    let coeff = rng.random_range(-amp..=amp);
                    for (j, f) in field.iter_mut().enumerate().take(n - 1).skip(1) {
                        *f += coeff * (k as f64 * PI * disc.grid.x(j) / length).sin();
                    }
                }
            }
        }
    }
    Ok(fields)
}

/// Initial state for the chosen memory back end.
pub fn initial_state(disc: &Discretization, config: &SimConfig) -> Result<State> {
    let [mut u, mut v, mut y, mut z] = initial_fields(disc, &config.initial)?;
    for f in [&mut u, &mut v, &mut y, &mut z] {
        f.iter_mut().for_each(|x| *x *= config.amplitude);
    }
    let rate = match config.history {
        HistoryProfile::Static => 0.0,
        HistoryProfile::Linear { rate } => rate,
    };
    let mem_nodes = disc.memory_nodes();
    let memory = match config.memory {
        MemorySpec::Aux => {
            // int g(s) (-rate s u0) ds = -rate g0 / m^2 u0.
            let factor = -rate * disc.kernel.g0 / (disc.kernel.m * disc.kernel.m);
            let mut aux = AuxMemory::zeros(mem_nodes, disc.memory_right_dirichlet);
            for i in 1..mem_nodes {
                aux.psi[i] = factor * u[i];
            }
            if disc.memory_right_dirichlet {
                aux.psi[mem_nodes - 1] = 0.0;
            }
            Memory::Aux(aux)
        }
        MemorySpec::History { ds, g_tol } => {
            let s_grid = SGrid::for_kernel(&disc.kernel, ds, g_tol)?;
            let xs: Vec<f64> = (0..mem_nodes).map(|i| disc.grid.x(i)).collect();
            let now = &u[..mem_nodes];
            let lookup = |x: f64, s: f64| {
                let i = (x / disc.dx()).round() as usize;
                (1.0 + rate * s) * u[i]
            };
            Memory::History(init_history(now, lookup, &xs, s_grid, disc.memory_right_dirichlet)?)
        }
    };
    Ok(State { t: 0.0, u, v, y, z, memory })
}

/// Integrates to `t_end` and records energy reports at the sampling stride.
pub fn run(disc: &Discretization, config: &SimConfig) -> Result<RunOutput> {
    let state = initial_state(disc, config)?;
    run_from(disc, config, state)
}

pub fn run_from(disc: &Discretization, config: &SimConfig, mut state: State) -> Result<RunOutput> {
    if !(config.t_end >= 0.0) || !config.t_end.is_finite() {
        return Err(Error::InvalidArgument(format!("T must be nonnegative, got {}", config.t_end)));
    }
    if config.stride == 0 {
        return Err(Error::InvalidArgument("stride must be at least 1".into()));
    }
    let steps = (config.t_end / config.dt).round() as usize;
    let mut reports = vec![energy(&state, disc)];
    if steps == 0 {
        return Ok(RunOutput { reports, final_state: state, steps });
    }
    let stepper = Stepper::new(disc, config.scheme, config.dt, &state.memory)?;
    for k in 1..=steps {
        stepper.step(&mut state)?;
        state.t = k as f64 * config.dt;
        if k % config.stride == 0 || k == steps {
            reports.push(energy(&state, disc));
        }
    }
    Ok(RunOutput { reports, final_state: state, steps })
}
