use serde::{Deserialize, Serialize};

use super::{apply_generator, band_from_triplets, generator_triplets, Discretization, Field, Layout, State};
use crate::banded::{BandLu, BandMatrix};
use crate::error::{Error, Result};
use crate::memory::{advance_history_in_place, reduce_to_aux, transported_moment, Memory};

pub const DEFAULT_CFL: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    ImplicitMidpoint,
    ExplicitRk4,
}

#[derive(Debug)]
enum Kind {
    MidpointAux {
        layout: Layout,
        generator: BandMatrix<f64>,
        lu: BandLu<f64>,
    },
    MidpointHistory {
        layout: Layout,
        elastic: BandMatrix<f64>,
        lu: BandLu<f64>,
    },
    Rk4,
}

/// Fixed-step integrator; the implicit system is factored once at construction.
#[derive(Debug)]
pub struct Stepper {
    disc: Discretization,
    dt: f64,
    scheme: Scheme,
    kind: Kind,
}

impl Stepper {
    /// `memory` selects the back end (auxiliary field or history grid).
    pub fn new(disc: &Discretization, scheme: Scheme, dt: f64, memory: &Memory) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
        }
        if let Memory::History(h) = memory {
            if h.nx != disc.memory_nodes() {
                return Err(Error::InvalidArgument(format!(
                    "history field has {} x-nodes, the memory domain has {}",
                    h.nx,
                    disc.memory_nodes()
                )));
            }
            if dt > h.s_grid.ds * (1.0 + 1e-12) {
                return Err(Error::Cfl { dt, limit: h.s_grid.ds, reason: "history transport needs dt <= ds" });
            }
        }
        let kind = match (scheme, memory) {
            (Scheme::ExplicitRk4, _) => {
                let limit = DEFAULT_CFL * disc.dx() / disc.profile.a.sqrt().max(1.0);
                if dt > limit {
                    return Err(Error::Cfl { dt, limit, reason: "explicit RK4 needs dt <= 0.9 dx / max(sqrt(a), 1)" });
                }
                Kind::Rk4
            }
            (Scheme::ImplicitMidpoint, Memory::Aux(_)) => {
                let layout = Layout::new(disc, true);
                let generator = band_from_triplets(layout.dim(), &generator_triplets(disc, &layout, &disc.b_tilde_half));
                let lu = shifted(&generator, -0.5 * dt).factor()?;
                Kind::MidpointAux { layout, generator, lu }
            }
            (Scheme::ImplicitMidpoint, Memory::History(h)) => {
                let layout = Layout::new(disc, false);
                let (_, g_source) = transported_moment(h, &disc.kernel, dt)?;
                let kappa: Vec<f64> = disc
                    .b_tilde_half
                    .iter()
                    .zip(&disc.b_half)
                    .map(|(bt, b)| bt + b * g_source)
                    .collect();
                let implicit = band_from_triplets(layout.dim(), &generator_triplets(disc, &layout, &kappa));
                let lu = shifted(&implicit, -0.5 * dt).factor()?;
                let elastic = band_from_triplets(layout.dim(), &generator_triplets(disc, &layout, &disc.b_tilde_half));
                Kind::MidpointHistory { layout, elastic, lu }
            }
        };
        Ok(Self { disc: disc.clone(), dt, scheme, kind })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn discretization(&self) -> &Discretization {
        &self.disc
    }

    pub fn step(&self, state: &mut State) -> Result<()> {
        let dt = self.dt;
        match &self.kind {
            Kind::MidpointAux { layout, generator, lu } => {
                if !matches!(state.memory, Memory::Aux(_)) {
                    return Err(Error::InvalidArgument("stepper was built for the auxiliary field".into()));
                }
                let x = layout.pack(state);
                let mut rhs = vec![0.0; x.len()];
                generator.matvec(&x, &mut rhs);
                for (r, xi) in rhs.iter_mut().zip(&x) {
                    *r = xi + 0.5 * dt * *r;
                }
                lu.solve_in_place(&mut rhs);
                layout.unpack_into(&rhs, state);
            }
            Kind::MidpointHistory { layout, elastic, lu } => {
                let Memory::History(history) = &state.memory else {
                    return Err(Error::InvalidArgument("stepper was built for the history grid".into()));
                };
                let disc = &self.disc;
                let kernel = &disc.kernel;
                let psi_now = reduce_to_aux(history, kernel).psi;
                let (psi_transport, g_source) = transported_moment(history, kernel, dt)?;
                let phi: Vec<f64> = (0..disc.memory_nodes())
                    .map(|i| psi_now[i] + psi_transport[i] - g_source * state.u[i])
                    .collect();
                let x = layout.pack(state);
                let mut rhs = vec![0.0; x.len()];
                elastic.matvec(&x, &mut rhs);
                for (r, xi) in rhs.iter_mut().zip(&x) {
                    *r = xi + 0.5 * dt * *r;
                }
                let dx = disc.dx();
                let flux = |h: usize| {
                    if h < disc.memory_half_count() {
                        disc.b_half[h] * (phi[h + 1] - phi[h]) / dx
                    } else {
                        0.0
                    }
                };
                for j in 1..disc.nodes() - 1 {
                    let div = (flux(j) - flux(j - 1)) / dx;
                    if div != 0.0 {
                        rhs[layout.index(Field::V, j).unwrap()] += 0.5 * dt * div;
                    }
                }
                lu.solve_in_place(&mut rhs);
                let u_old: Vec<f64> = state.u[..disc.memory_nodes()].to_vec();
                layout.unpack_into(&rhs, state);
                let v_mid: Vec<f64> = u_old.iter().zip(&state.u).map(|(a, b)| (b - a) / dt).collect();
                let Memory::History(history) = &mut state.memory else { unreachable!() };
                advance_history_in_place(history, &v_mid, dt)?;
            }
            Kind::Rk4 => {
                let disc = &self.disc;
                let k1 = apply_generator(state, disc);
                let mut tmp = state.clone();
                tmp.axpy(0.5 * dt, &k1);
                let k2 = apply_generator(&tmp, disc);
                let mut tmp = state.clone();
                tmp.axpy(0.5 * dt, &k2);
                let k3 = apply_generator(&tmp, disc);
                let mut tmp = state.clone();
                tmp.axpy(dt, &k3);
                let k4 = apply_generator(&tmp, disc);
                state.axpy(dt / 6.0, &k1);
                state.axpy(dt / 3.0, &k2);
                state.axpy(dt / 3.0, &k3);
                state.axpy(dt / 6.0, &k4);
            }
        }
        state.t += dt;
        Ok(())
    }
}

/// `I + alpha A`.
fn shifted(a: &BandMatrix<f64>, alpha: f64) -> BandMatrix<f64> {
    let mut m = a.map(|v| alpha * v);
    for i in 0..m.dim() {
        m.add(i, i, 1.0);
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::energy;
    use crate::memory::{HistoryField, SGrid};
    use crate::model::{CoefficientProfile, KernelSpec};
    use std::f64::consts::PI;

    fn disc(b0: f64, nodes: usize) -> Discretization {
        let p = CoefficientProfile::local(1.0, 1.0, b0, 1.0, 0.2, 0.5, 0.8);
        Discretization::new(&p, &KernelSpec::new(1.0, 2.0), nodes).unwrap()
    }

    fn smooth(disc: &Discretization) -> State {
        let mut s = State::zeros_aux(disc);
        for j in 1..disc.nodes() - 1 {
            let x = disc.grid.x(j);
            s.u[j] = (PI * x).sin();
            s.y[j] = 0.5 * (2.0 * PI * x).sin();
        }
        s
    }

    #[test]
    fn zero_state_stays_zero() {
        let d = disc(0.5, 21);
        for scheme in [Scheme::ImplicitMidpoint, Scheme::ExplicitRk4] {
            let mut s = State::zeros_aux(&d);
            let stepper = Stepper::new(&d, scheme, 1e-3, &s.memory).unwrap();
            for _ in 0..10 {
                stepper.step(&mut s).unwrap();
            }
            assert_eq!(energy(&s, &d).total, 0.0);
        }
    }

    #[test]
    fn midpoint_conserves_energy_without_damping() {
        let d = disc(0.0, 41);
        let mut s = smooth(&d);
        let e0 = energy(&s, &d).total;
        let stepper = Stepper::new(&d, Scheme::ImplicitMidpoint, 1e-2, &s.memory).unwrap();
        for _ in 0..10_000 {
            stepper.step(&mut s).unwrap();
        }
        assert!(((energy(&s, &d).total - e0) / e0).abs() < 1e-10);
    }

    #[test]
    fn midpoint_energy_identity_is_exact() {
        // E_{k+1} - E_k = dt D((U_k + U_{k+1}) / 2) for the quadratic dissipation.
        let d = disc(0.5, 41);
        let mut s = smooth(&d);
        let dt = 5e-3;
        let stepper = Stepper::new(&d, Scheme::ImplicitMidpoint, dt, &s.memory).unwrap();
        for _ in 0..200 {
            let before = s.clone();
            stepper.step(&mut s).unwrap();
            let mut mid = before.clone();
            mid.axpy(1.0, &s);
            mid.scale(0.5);
            let de = energy(&s, &d).total - energy(&before, &d).total;
            let rate = energy(&mid, &d).dissipation;
            assert!(de <= 0.0);
            assert!((de - dt * rate).abs() < 1e-13, "{de} vs {}", dt * rate);
        }
    }

    #[test]
    fn schemes_agree() {
        let d = disc(0.5, 41);
        let t_end = 0.5;
        let run = |scheme: Scheme, dt: f64| {
            let mut s = smooth(&d);
            let stepper = Stepper::new(&d, scheme, dt, &s.memory).unwrap();
            for _ in 0..(t_end / dt).round() as usize {
                stepper.step(&mut s).unwrap();
            }
            s
        };
        let reference = run(Scheme::ExplicitRk4, 1e-3);
        let err = |s: &State| s.u.iter().zip(&reference.u).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let (e1, e2) = (err(&run(Scheme::ImplicitMidpoint, 0.01)), err(&run(Scheme::ImplicitMidpoint, 0.005)));
        assert!(e1 < 1e-2);
        assert!((e1 / e2 - 4.0).abs() < 0.8, "ratio {}", e1 / e2);
    }

    #[test]
    fn rk4_cfl_guard() {
        let d = disc(0.5, 41);
        let s = State::zeros_aux(&d);
        assert!(matches!(Stepper::new(&d, Scheme::ExplicitRk4, 0.1, &s.memory), Err(Error::Cfl { .. })));
        assert!(Stepper::new(&d, Scheme::ImplicitMidpoint, 0.1, &s.memory).is_ok());
        assert!(Stepper::new(&d, Scheme::ImplicitMidpoint, -0.1, &s.memory).is_err());
    }

    #[test]
    fn history_midpoint_tracks_aux() {
        let d = disc(0.5, 41);
        let dt = 2e-3;
        let s_grid = SGrid::for_kernel(&d.kernel, dt, 1e-8).unwrap();
        let mut aux = smooth(&d);
        let mut hist = aux.clone();
        hist.memory = Memory::History(HistoryField::zeros(d.memory_nodes(), s_grid, false));
        assert!(matches!(
            Stepper::new(&d, Scheme::ImplicitMidpoint, 2.0 * dt, &hist.memory),
            Err(Error::Cfl { .. })
        ));
        let sa = Stepper::new(&d, Scheme::ImplicitMidpoint, dt, &aux.memory).unwrap();
        let sh = Stepper::new(&d, Scheme::ImplicitMidpoint, dt, &hist.memory).unwrap();
        for _ in 0..500 {
            sa.step(&mut aux).unwrap();
            sh.step(&mut hist).unwrap();
        }
        // Compare against the reduced energy of the history moment.
        let ea = energy(&aux, &d).total;
        let reduced = crate::memory::reduced_energy(&hist.memory.moment(&d.kernel), &d);
        let eh = energy(&hist, &d);
        assert!(eh.e3 >= reduced);
        let eh = eh.e1 + eh.e2 + reduced;
        assert!((ea - eh).abs() / ea < 1e-2, "{ea} {eh}");
        let Memory::History(h) = &hist.memory else { panic!() };
        assert_eq!(h.inflow_defect(), 0.0);
    }
}
