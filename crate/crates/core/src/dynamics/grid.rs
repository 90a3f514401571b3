use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{validate_config, CoefficientProfile, KernelSpec};

/// Uniform node grid on `[0, L]` with the interfaces snapped onto it.
///
/// The coupling interfaces `alpha`, `gamma` are moved to the nearest half
/// point, so every node carries an unambiguous value of `c`. The damping
/// interface `beta` is moved to the nearest node, so every half point (where
/// fluxes live) carries an unambiguous value of `b`, and the memory domain
/// `[0, beta]` ends on a node.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Grid {
    pub nodes: usize,
    pub dx: f64,
    pub length: f64,
    pub alpha_hat: f64,
    pub beta_hat: f64,
    pub gamma_hat: f64,
    /// Half-point index `k` with `alpha_hat = (k + 1/2) dx`.
    pub alpha_half: usize,
    /// Node index with `beta_hat = k dx`.
    pub beta_node: usize,
    /// Half-point index `k` with `gamma_hat = (k + 1/2) dx`.
    pub gamma_half: usize,
}

impl Grid {
    pub fn new(profile: &CoefficientProfile, nodes: usize) -> Result<Self> {
        if nodes < 5 {
            return Err(Error::InvalidArgument(format!("need at least 5 nodes, got {nodes}")));
        }
        let length = profile.length;
        let dx = length / (nodes - 1) as f64;
        if profile.is_global() {
            return Ok(Self {
                nodes,
                dx,
                length,
                alpha_hat: 0.0,
                beta_hat: length,
                gamma_hat: length,
                alpha_half: 0,
                beta_node: nodes - 1,
                gamma_half: nodes - 2,
            });
        }
        let snap_half = |x: f64| ((x / dx - 0.5).round().max(0.0) as usize).min(nodes - 2);
        let alpha_half = snap_half(profile.alpha);
        let gamma_half = snap_half(profile.gamma);
        let beta_node = ((profile.beta / dx).round().max(1.0) as usize).min(nodes - 2);
        let grid = Self {
            nodes,
            dx,
            length,
            alpha_hat: (alpha_half as f64 + 0.5) * dx,
            beta_hat: beta_node as f64 * dx,
            gamma_hat: (gamma_half as f64 + 0.5) * dx,
            alpha_half,
            beta_node,
            gamma_half,
        };
        if !(grid.alpha_hat < grid.beta_hat && grid.beta_hat < grid.gamma_hat && grid.gamma_hat < length) {
            return Err(Error::InvalidArgument(format!(
                "grid with {nodes} nodes is too coarse to separate the interfaces \
                 (alpha^ = {}, beta^ = {}, gamma^ = {})",
                grid.alpha_hat, grid.beta_hat, grid.gamma_hat
            )));
        }
        Ok(grid)
    }

    #[inline]
    pub fn x(&self, j: usize) -> f64 {
        j as f64 * self.dx
    }

    #[inline]
    pub fn x_half(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.dx
    }

    pub fn node_positions(&self) -> Vec<f64> {
        (0..self.nodes).map(|j| self.x(j)).collect()
    }
}

/// Grid plus coefficients sampled where the scheme needs them.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub grid: Grid,
    pub profile: CoefficientProfile,
    pub kernel: KernelSpec,
    pub g_total: f64,
    /// `b` at half points `j + 1/2`, `j = 0..N-1`.
    pub b_half: Vec<f64>,
    /// `b~ = a - b g~` at half points.
    pub b_tilde_half: Vec<f64>,
    /// `c` at nodes.
    pub c_node: Vec<f64>,
    /// Last node of the memory domain (`beta^` locally, `L` globally).
    pub memory_last: usize,
    /// The memory variable also vanishes at `x = L` (global layout only).
    pub memory_right_dirichlet: bool,
}

impl Discretization {
    /// Validates the configuration and samples the coefficients.
    pub fn new(profile: &CoefficientProfile, kernel: &KernelSpec, nodes: usize) -> Result<Self> {
        validate_config(profile, kernel).into_result()?;
        let grid = Grid::new(profile, nodes)?;
        let g_total = kernel.total();
        let global = profile.is_global();
        let b_half: Vec<f64> = (0..nodes - 1)
            .map(|j| if global || j < grid.beta_node { profile.b0 } else { 0.0 })
            .collect();
        let b_tilde_half = b_half.iter().map(|b| profile.a - b * g_total).collect();
        let c_node = (0..nodes)
            .map(|j| {
                if global || (j > grid.alpha_half && j <= grid.gamma_half) {
                    profile.c0
                } else {
                    0.0
                }
            })
            .collect();
        Ok(Self {
            memory_last: grid.beta_node,
            memory_right_dirichlet: global,
            grid,
            profile: *profile,
            kernel: *kernel,
            g_total,
            b_half,
            b_tilde_half,
            c_node,
        })
    }

    #[inline]
    pub fn nodes(&self) -> usize {
        self.grid.nodes
    }

    #[inline]
    pub fn dx(&self) -> f64 {
        self.grid.dx
    }

    /// Number of x-nodes carrying memory (`0..=memory_last`).
    pub fn memory_nodes(&self) -> usize {
        self.memory_last + 1
    }

    /// Last memory node that is an unknown (not pinned by a Dirichlet condition).
    pub fn memory_last_free(&self) -> usize {
        if self.memory_right_dirichlet {
            self.memory_last - 1
        } else {
            self.memory_last
        }
    }

    /// Half points `0..count` whose flux sees the memory term.
    pub fn memory_half_count(&self) -> usize {
        self.memory_last
    }
}
