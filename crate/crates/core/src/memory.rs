//! Past-history memory in two representations.
//!
//! [`HistoryField`] keeps the history variable `omega(x, s)` on a truncated
//! uniform grid in `s` and transports it with first-order upwinding.
//! [`AuxMemory`] keeps only the first moment `psi(x) = int g(s) omega(x, s) ds`,
//! which for the exponential kernel obeys the closed equation
//! `psi_t = g~ v - m psi`.

use crate::dynamics::Discretization;
use crate::error::{Error, Result};
use crate::model::KernelSpec;

/// Default relative truncation level `g(S_max) / g0`.
pub const DEFAULT_G_TOL: f64 = 1e-8;

/// Uniform grid `s_j = j ds`, `j = 0..count`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SGrid {
    pub ds: f64,
    pub count: usize,
}

impl SGrid {
    /// Smallest uniform grid of spacing `ds` reaching `ln(1/g_tol) / m`.
    pub fn for_kernel(kernel: &KernelSpec, ds: f64, g_tol: f64) -> Result<Self> {
        if !(ds > 0.0) || !(g_tol > 0.0 && g_tol < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "need ds > 0 and 0 < g_tol < 1, got ds = {ds}, g_tol = {g_tol}"
            )));
        }
        let s_max = kernel.horizon(g_tol);
        let count = (s_max / ds - 1e-9).ceil() as usize + 1;
        Ok(Self { ds, count })
    }

    pub fn s(&self, j: usize) -> f64 {
        j as f64 * self.ds
    }

    pub fn s_max(&self) -> f64 {
        self.s(self.count - 1)
    }

    /// Trapezoid weights times `g(s_j)`.
    pub fn kernel_weights(&self, kernel: &KernelSpec) -> Vec<f64> {
        (0..self.count)
            .map(|j| {
                let w = if j == 0 || j + 1 == self.count { 0.5 * self.ds } else { self.ds };
                w * kernel.value_unchecked(self.s(j))
            })
            .collect()
    }
}

/// `omega(x_i, s_j)` for the memory nodes `x_0 .. x_{nx-1}`, row-major in `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryField {
    pub omega: Vec<f64>,
    pub nx: usize,
    pub s_grid: SGrid,
    /// `omega` is pinned to zero on the last x-node as well as the first.
    pub right_dirichlet: bool,
}

impl HistoryField {
    pub fn zeros(nx: usize, s_grid: SGrid, right_dirichlet: bool) -> Self {
        Self { omega: vec![0.0; nx * s_grid.count], nx, s_grid, right_dirichlet }
    }

    #[inline]
    pub fn ns(&self) -> usize {
        self.s_grid.count
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        let ns = self.ns();
        &self.omega[i * ns..(i + 1) * ns]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let ns = self.ns();
        &mut self.omega[i * ns..(i + 1) * ns]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.omega[i * self.ns() + j]
    }

    /// Largest `|omega(x, 0)|`; zero for every admissible field.
    pub fn inflow_defect(&self) -> f64 {
        (0..self.nx).map(|i| self.get(i, 0).abs()).fold(0.0, f64::max)
    }

    fn pinned(&self, i: usize) -> bool {
        i == 0 || (self.right_dirichlet && i + 1 == self.nx)
    }
}

/// `psi(x_i)` on the memory nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxMemory {
    pub psi: Vec<f64>,
    pub right_dirichlet: bool,
}

impl AuxMemory {
    pub fn zeros(nx: usize, right_dirichlet: bool) -> Self {
        Self { psi: vec![0.0; nx], right_dirichlet }
    }
}

/// Builds `omega(x, s, 0) = u0(x, 0) - u0(x, s)` from a past displacement.
///
/// `now[i]` must equal `past(xs[i], 0)`; a mismatch beyond round-off is an
/// inconsistent history and is rejected.
pub fn init_history(
    now: &[f64],
    past: impl Fn(f64, f64) -> f64,
    xs: &[f64],
    s_grid: SGrid,
    right_dirichlet: bool,
) -> Result<HistoryField> {
    if now.len() != xs.len() {
        return Err(Error::InvalidArgument(format!(
            "snapshot has {} values for {} nodes",
            now.len(),
            xs.len()
        )));
    }
    let scale = now.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
    let mut field = HistoryField::zeros(xs.len(), s_grid, right_dirichlet);
    for (i, (&x, &u_now)) in xs.iter().zip(now).enumerate() {
        let defect = (u_now - past(x, 0.0)).abs();
        if defect > 1e-12 * scale {
            return Err(Error::InconsistentHistory(defect));
        }
        let row = field.row_mut(i);
        for (j, w) in row.iter_mut().enumerate().skip(1) {
            *w = u_now - past(x, s_grid.s(j));
        }
    }
    for i in 0..field.nx {
        if field.pinned(i) {
            let worst = field.row(i).iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
            if worst > 1e-12 * scale {
                return Err(Error::InvalidArgument(format!(
                    "history violates the Dirichlet condition at memory node {i} (|omega| = {worst:e})"
                )));
            }
            field.row_mut(i).fill(0.0);
        }
    }
    Ok(field)
}

/// Trapezoid quadrature of `g(s) omega(x, s)` over the s-grid.
pub fn reduce_to_aux(history: &HistoryField, kernel: &KernelSpec) -> AuxMemory {
    let weights = history.s_grid.kernel_weights(kernel);
    let psi = (0..history.nx)
        .map(|i| {
            if history.pinned(i) {
                0.0
            } else {
                dot(history.row(i), &weights)
            }
        })
        .collect();
    AuxMemory { psi, right_dirichlet: history.right_dirichlet }
}

fn check_transport_cfl(history: &HistoryField, dt: f64) -> Result<f64> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    let courant = dt / history.s_grid.ds;
    if courant > 1.0 + 1e-12 {
        return Err(Error::Cfl { dt, limit: history.s_grid.ds, reason: "upwind transport in s needs dt <= ds" });
    }
    Ok(courant.min(1.0))
}

/// One upwind step of `omega_t + omega_s = v` with inflow `omega(., 0) = 0`.
///
/// `v` holds the velocity on the memory nodes (entries on pinned nodes are ignored).
pub fn advance_history(history: &HistoryField, v: &[f64], dt: f64) -> Result<HistoryField> {
    let mut next = history.clone();
    advance_history_in_place(&mut next, v, dt)?;
    Ok(next)
}

pub fn advance_history_in_place(history: &mut HistoryField, v: &[f64], dt: f64) -> Result<()> {
    let courant = check_transport_cfl(history, dt)?;
    if v.len() < history.nx {
        return Err(Error::InvalidArgument(format!("velocity has {} entries, need {}", v.len(), history.nx)));
    }
    for i in 0..history.nx {
        if history.pinned(i) {
            continue;
        }
        let source = dt * v[i];
        let row = history.row_mut(i);
        // Descending so row[j - 1] is still the old value.
        for j in (1..row.len()).rev() {
            row[j] += courant * (row[j - 1] - row[j]) + source;
        }
        row[0] = 0.0;
    }
    Ok(())
}

/// Quadrature of the transported field (no source) and of the source weight.
///
/// Returns `(psi_transport, g_source)` so that after
/// [`advance_history_in_place`] with velocity `v` the moment equals
/// `psi_transport + g_source * dt * v` exactly.
pub(crate) fn transported_moment(history: &HistoryField, kernel: &KernelSpec, dt: f64) -> Result<(Vec<f64>, f64)> {
    let courant = check_transport_cfl(history, dt)?;
    let weights = history.s_grid.kernel_weights(kernel);
    let g_source: f64 = weights[1..].iter().sum();
    let moment = (0..history.nx)
        .map(|i| {
            if history.pinned(i) {
                return 0.0;
            }
            let row = history.row(i);
            let mut acc = 0.0;
            for j in 1..row.len() {
                acc += weights[j] * (row[j] + courant * (row[j - 1] - row[j]));
            }
            acc
        })
        .collect();
    Ok((moment, g_source))
}

/// Time integrator for `psi_t = g~ v - m psi` over one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AuxUpdate {
    /// Exact integrating factor with the source frozen at its midpoint value.
    Exponential,
    /// Implicit midpoint (the (1,1) Padé form of the integrating factor).
    Midpoint,
}

pub fn advance_aux(psi: &AuxMemory, v_mid: &[f64], dt: f64, kernel: &KernelSpec, form: AuxUpdate) -> Result<AuxMemory> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    if v_mid.len() < psi.psi.len() {
        return Err(Error::InvalidArgument(format!(
            "velocity has {} entries, need {}",
            v_mid.len(),
            psi.psi.len()
        )));
    }
    let m = kernel.m;
    let g_total = kernel.total();
    let (decay, gain) = match form {
        AuxUpdate::Exponential => {
            let e = (-m * dt).exp();
            // g~ (1 - e^{-m dt}) / m, written to stay accurate for small m dt.
            (e, g_total * -(-m * dt).exp_m1() / m)
        }
        AuxUpdate::Midpoint => {
            let denom = 1.0 + 0.5 * m * dt;
            ((1.0 - 0.5 * m * dt) / denom, g_total * dt / denom)
        }
    };
    let n = psi.psi.len();
    let out = psi
        .psi
        .iter()
        .zip(v_mid)
        .enumerate()
        .map(|(i, (&p, &v))| {
            if i == 0 || (psi.right_dirichlet && i + 1 == n) {
                0.0
            } else {
                decay * p + gain * v
            }
        })
        .collect();
    Ok(AuxMemory { psi: out, right_dirichlet: psi.right_dirichlet })
}

/// Memory state carried by a simulation.
#[derive(Debug, Clone, PartialEq)]
pub enum Memory {
    Aux(AuxMemory),
    History(HistoryField),
}

impl Memory {
    pub fn nx(&self) -> usize {
        match self {
            Memory::Aux(a) => a.psi.len(),
            Memory::History(h) => h.nx,
        }
    }

    /// First moment `psi` on the memory nodes.
    pub fn moment(&self, kernel: &KernelSpec) -> Vec<f64> {
        match self {
            Memory::Aux(a) => a.psi.clone(),
            Memory::History(h) => reduce_to_aux(h, kernel).psi,
        }
    }
}

/// `int g(s) omega_x(x, s) ds` at the half points `j + 1/2`, `j = 0..N-1`.
///
/// Zero outside the memory domain.
pub fn memory_flux(memory: &Memory, disc: &Discretization) -> Vec<f64> {
    let dx = disc.dx();
    let mut flux = vec![0.0; disc.nodes() - 1];
    match memory {
        Memory::Aux(a) => {
            for (j, f) in flux.iter_mut().enumerate().take(disc.memory_half_count()) {
                *f = (a.psi[j + 1] - a.psi[j]) / dx;
            }
        }
        Memory::History(h) => {
            let weights = h.s_grid.kernel_weights(&disc.kernel);
            for (j, f) in flux.iter_mut().enumerate().take(disc.memory_half_count()) {
                let (left, right) = (h.row(j), h.row(j + 1));
                let mut acc = 0.0;
                for s in 0..weights.len() {
                    acc += weights[s] * (right[s] - left[s]);
                }
                *f = acc / dx;
            }
        }
    }
    flux
}

/// Memory energy: `E3` on the history grid, reduced `E3~` for the auxiliary field.
///
/// `E3 = 1/2 sum_h b_h int g |omega_x|^2 ds dx`, `E3~ = 1/(2 g~) sum_h b_h |psi_x|^2 dx`.
pub fn memory_energy(memory: &Memory, disc: &Discretization) -> f64 {
    match memory {
        Memory::Aux(a) => reduced_energy(&a.psi, disc),
        Memory::History(h) => {
            let weights = h.s_grid.kernel_weights(&disc.kernel);
            0.5 * weighted_strain(h, disc, &weights)
        }
    }
}

/// Instantaneous rate of energy change due to the memory (never positive).
///
/// History grid: `1/2 sum_h b_h int g' |omega_x|^2`; auxiliary field:
/// `-(m / g~) sum_h b_h |psi_x|^2 dx`.
pub fn memory_dissipation(memory: &Memory, disc: &Discretization) -> f64 {
    let kernel = &disc.kernel;
    match memory {
        Memory::Aux(a) => -2.0 * kernel.m * reduced_energy(&a.psi, disc),
        Memory::History(h) => {
            let weights: Vec<f64> = h.s_grid.kernel_weights(kernel).iter().map(|w| -kernel.m * w).collect();
            0.5 * weighted_strain(h, disc, &weights)
        }
    }
}

/// `(1 / (2 g~)) sum_h b_h ((psi_{j+1} - psi_j) / dx)^2 dx`.
pub fn reduced_energy(psi: &[f64], disc: &Discretization) -> f64 {
    let dx = disc.dx();
    let sum: f64 = (0..disc.memory_half_count())
        .map(|j| {
            let d = psi[j + 1] - psi[j];
            disc.b_half[j] * d * d
        })
        .sum();
    0.5 * sum / (disc.g_total * dx)
}

fn weighted_strain(h: &HistoryField, disc: &Discretization, weights: &[f64]) -> f64 {
    let dx = disc.dx();
    let mut total = 0.0;
    for j in 0..disc.memory_half_count() {
        let b = disc.b_half[j];
        if b == 0.0 {
            continue;
        }
        let (left, right) = (h.row(j), h.row(j + 1));
        let mut acc = 0.0;
        for s in 0..weights.len() {
            let d = right[s] - left[s];
            acc += weights[s] * d * d;
        }
        total += b * acc;
    }
    total / dx
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
