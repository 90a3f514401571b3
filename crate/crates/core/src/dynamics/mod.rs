//! Semi-discrete generator, energy functional and time integration.

mod grid;
mod run;
mod step;

pub use grid::{Discretization, Grid};
pub use run::{initial_fields, initial_state, run, run_from, HistoryProfile, InitialData, MemorySpec, RunOutput, SimConfig};
pub use step::{Scheme, Stepper, DEFAULT_CFL};

use serde::Serialize;

use crate::banded::BandMatrix;
use crate::memory::{memory_dissipation, memory_energy, memory_flux, AuxMemory, HistoryField, Memory};

/// Discrete fields on all nodes (boundary entries are zero) plus the memory.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub t: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub memory: Memory,
}

impl State {
    pub fn zeros_aux(disc: &Discretization) -> Self {
        let n = disc.nodes();
        Self {
            t: 0.0,
            u: vec![0.0; n],
            v: vec![0.0; n],
            y: vec![0.0; n],
            z: vec![0.0; n],
            memory: Memory::Aux(AuxMemory::zeros(disc.memory_nodes(), disc.memory_right_dirichlet)),
        }
    }

    /// `self += alpha * other` on every field (time untouched).
    pub fn axpy(&mut self, alpha: f64, other: &State) {
        for (a, b) in [
            (&mut self.u, &other.u),
            (&mut self.v, &other.v),
            (&mut self.y, &other.y),
            (&mut self.z, &other.z),
        ] {
            axpy(a, alpha, b);
        }
        match (&mut self.memory, &other.memory) {
            (Memory::Aux(a), Memory::Aux(b)) => axpy(&mut a.psi, alpha, &b.psi),
            (Memory::History(a), Memory::History(b)) => axpy(&mut a.omega, alpha, &b.omega),
            _ => panic!("mixed memory representations"),
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for f in [&mut self.u, &mut self.v, &mut self.y, &mut self.z] {
            f.iter_mut().for_each(|x| *x *= alpha);
        }
        match &mut self.memory {
            Memory::Aux(a) => a.psi.iter_mut().for_each(|x| *x *= alpha),
            Memory::History(h) => h.omega.iter_mut().for_each(|x| *x *= alpha),
        }
    }

    /// Largest violation of the Dirichlet conditions on `u, v, y, z`.
    pub fn boundary_defect(&self) -> f64 {
        let n = self.u.len();
        [&self.u, &self.v, &self.y, &self.z]
            .iter()
            .map(|f| f[0].abs().max(f[n - 1].abs()))
            .fold(0.0, f64::max)
    }
}

fn axpy(a: &mut [f64], alpha: f64, b: &[f64]) {
    for (x, y) in a.iter_mut().zip(b) {
        *x += alpha * y;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyReport {
    pub t: f64,
    pub e1: f64,
    pub e2: f64,
    pub e3: f64,
    pub total: f64,
    pub dissipation: f64,
}

/// `E1 + E2 + E3` and the instantaneous dissipation rate.
///
/// On the auxiliary path `E3` is the reduced functional and the rate is the
/// reduced identity `-(m / g~) sum b |psi_x|^2 dx`.
pub fn energy(state: &State, disc: &Discretization) -> EnergyReport {
    let dx = disc.dx();
    let n = disc.nodes();
    let mut e1 = 0.0;
    let mut e2 = 0.0;
    for j in 1..n - 1 {
        e1 += state.v[j] * state.v[j];
        e2 += state.z[j] * state.z[j];
    }
    e1 *= 0.5 * dx;
    e2 *= 0.5 * dx;
    let mut strain_u = 0.0;
    let mut strain_y = 0.0;
    for h in 0..n - 1 {
        let du = state.u[h + 1] - state.u[h];
        let dy = state.y[h + 1] - state.y[h];
        strain_u += disc.b_tilde_half[h] * du * du;
        strain_y += dy * dy;
    }
    e1 += 0.5 * strain_u / dx;
    e2 += 0.5 * strain_y / dx;
    let e3 = memory_energy(&state.memory, disc);
    EnergyReport {
        t: state.t,
        e1,
        e2,
        e3,
        total: e1 + e2 + e3,
        dissipation: memory_dissipation(&state.memory, disc),
    }
}

/// `d/dt` of the state under the semi-discrete system; `t` of the result is zero.
pub fn apply_generator(state: &State, disc: &Discretization) -> State {
    let n = disc.nodes();
    let dx = disc.dx();
    let mem_flux = memory_flux(&state.memory, disc);
    let flux: Vec<f64> = (0..n - 1)
        .map(|h| disc.b_tilde_half[h] * (state.u[h + 1] - state.u[h]) / dx + disc.b_half[h] * mem_flux[h])
        .collect();
    let mut out = State {
        t: 0.0,
        u: vec![0.0; n],
        v: vec![0.0; n],
        y: vec![0.0; n],
        z: vec![0.0; n],
        memory: state.memory.clone(),
    };
    let inv_dx2 = 1.0 / (dx * dx);
    for j in 1..n - 1 {
        let c = disc.c_node[j];
        out.u[j] = state.v[j];
        out.v[j] = (flux[j] - flux[j - 1]) / dx - c * state.z[j];
        out.y[j] = state.z[j];
        out.z[j] = (state.y[j + 1] - 2.0 * state.y[j] + state.y[j - 1]) * inv_dx2 + c * state.v[j];
    }
    let kernel = &disc.kernel;
    match (&state.memory, &mut out.memory) {
        (Memory::Aux(a), Memory::Aux(d)) => {
            let last = disc.memory_last_free();
            for i in 0..d.psi.len() {
                d.psi[i] = if i == 0 || i > last { 0.0 } else { disc.g_total * state.v[i] - kernel.m * a.psi[i] };
            }
        }
        (Memory::History(h), Memory::History(d)) => history_derivative(h, &state.v, disc, d),
        _ => unreachable!(),
    }
    out
}

fn history_derivative(h: &HistoryField, v: &[f64], disc: &Discretization, out: &mut HistoryField) {
    let inv_ds = 1.0 / h.s_grid.ds;
    let last = disc.memory_last_free();
    for i in 0..h.nx {
        let row_out = out.row_mut(i);
        if i == 0 || i > last {
            row_out.fill(0.0);
            continue;
        }
        let row = h.row(i);
        row_out[0] = 0.0;
        for j in 1..row.len() {
            row_out[j] = v[i] - (row[j] - row[j - 1]) * inv_ds;
        }
    }
}

/// Interleaved packing of the interior unknowns, node by node:
/// `(u_j, v_j, y_j, z_j[, psi_j])`, which keeps the generator banded.
#[derive(Debug, Clone)]
pub struct Layout {
    nodes: usize,
    /// Offset of `u_j` for interior node `j` (index `j - 1`).
    base: Vec<usize>,
    psi_last: Option<usize>,
    dim: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    U,
    V,
    Y,
    Z,
    Psi,
}

impl Layout {
    /// With `with_memory`, nodes `1..=memory_last_free` also carry `psi`.
    pub fn new(disc: &Discretization, with_memory: bool) -> Self {
        let nodes = disc.nodes();
        let psi_last = with_memory.then(|| disc.memory_last_free());
        let mut base = Vec::with_capacity(nodes - 2);
        let mut next = 0;
        for j in 1..nodes - 1 {
            base.push(next);
            next += if psi_last.is_some_and(|l| j <= l) { 5 } else { 4 };
        }
        Self { nodes, base, psi_last, dim: next }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn has_memory(&self) -> bool {
        self.psi_last.is_some()
    }

    /// Packed index of `field` at node `j`, `None` for pinned or absent entries.
    pub fn index(&self, field: Field, j: usize) -> Option<usize> {
        if j == 0 || j + 1 >= self.nodes {
            return None;
        }
        let b = self.base[j - 1];
        match field {
            Field::U => Some(b),
            Field::V => Some(b + 1),
            Field::Y => Some(b + 2),
            Field::Z => Some(b + 3),
            Field::Psi => self.psi_last.filter(|&l| j <= l).map(|_| b + 4),
        }
    }

    /// Packs `u, v, y, z` and, when this layout has memory, the auxiliary field.
    pub fn pack(&self, state: &State) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for j in 1..self.nodes - 1 {
            let b = self.base[j - 1];
            out[b] = state.u[j];
            out[b + 1] = state.v[j];
            out[b + 2] = state.y[j];
            out[b + 3] = state.z[j];
            if let Some(k) = self.index(Field::Psi, j) {
                if let Memory::Aux(a) = &state.memory {
                    out[k] = a.psi[j];
                }
            }
        }
        out
    }

    /// Writes packed values back into `state` (memory only for the auxiliary field).
    pub fn unpack_into(&self, packed: &[f64], state: &mut State) {
        for j in 1..self.nodes - 1 {
            let b = self.base[j - 1];
            state.u[j] = packed[b];
            state.v[j] = packed[b + 1];
            state.y[j] = packed[b + 2];
            state.z[j] = packed[b + 3];
            if let Some(k) = self.index(Field::Psi, j) {
                if let Memory::Aux(a) = &mut state.memory {
                    a.psi[j] = packed[k];
                }
            }
        }
    }

    /// Aux-formulation state built from a packed vector.
    pub fn unpack(&self, packed: &[f64], disc: &Discretization) -> State {
        let mut s = State::zeros_aux(disc);
        self.unpack_into(packed, &mut s);
        s
    }
}

/// Coordinate-list triplets `(row, col, value)` of the generator.
///
/// `kappa_half` is the elastic coefficient in the u-flux; the generator of the
/// system uses `b~`. When the layout carries memory the `psi` couplings are
/// included.
pub fn generator_triplets(disc: &Discretization, layout: &Layout, kappa_half: &[f64]) -> Vec<(usize, usize, f64)> {
    let n = disc.nodes();
    let dx = disc.dx();
    let inv_dx2 = 1.0 / (dx * dx);
    let mut out = Vec::with_capacity(12 * n);
    let idx = |f: Field, j: usize| layout.index(f, j);
    for j in 1..n - 1 {
        let (u, v, y, z) = (
            idx(Field::U, j).unwrap(),
            idx(Field::V, j).unwrap(),
            idx(Field::Y, j).unwrap(),
            idx(Field::Z, j).unwrap(),
        );
        out.push((u, v, 1.0));
        let (kl, kr) = (kappa_half[j - 1], kappa_half[j]);
        out.push((v, u, -(kl + kr) * inv_dx2));
        if let Some(c) = idx(Field::U, j - 1) {
            out.push((v, c, kl * inv_dx2));
        }
        if let Some(c) = idx(Field::U, j + 1) {
            out.push((v, c, kr * inv_dx2));
        }
        if layout.has_memory() {
            let (bl, br) = (disc.b_half[j - 1], disc.b_half[j]);
            for (node, w) in [(j - 1, bl), (j, -(bl + br)), (j + 1, br)] {
                if w != 0.0 {
                    if let Some(c) = idx(Field::Psi, node) {
                        out.push((v, c, w * inv_dx2));
                    }
                }
            }
        }
        let c = disc.c_node[j];
        if c != 0.0 {
            out.push((v, z, -c));
            out.push((z, v, c));
        }
        out.push((y, z, 1.0));
        out.push((z, y, -2.0 * inv_dx2));
        if let Some(c) = idx(Field::Y, j - 1) {
            out.push((z, c, inv_dx2));
        }
        if let Some(c) = idx(Field::Y, j + 1) {
            out.push((z, c, inv_dx2));
        }
        if let Some(p) = idx(Field::Psi, j) {
            out.push((p, v, disc.g_total));
            out.push((p, p, -disc.kernel.m));
        }
    }
    out
}

/// Banded matrix from triplets; bandwidths are taken from the entries.
pub fn band_from_triplets(dim: usize, triplets: &[(usize, usize, f64)]) -> BandMatrix<f64> {
    let (mut kl, mut ku) = (0, 0);
    for &(i, j, _) in triplets {
        kl = kl.max(i.saturating_sub(j));
        ku = ku.max(j.saturating_sub(i));
    }
    let mut m = BandMatrix::zeros(dim, kl, ku);
    for &(i, j, v) in triplets {
        m.add(i, j, v);
    }
    m
}
