//! Controlled forward equation, backward adjoint equation, and the norm
//! suite, all on the truncated eigenbasis.
//!
//! Controls are piecewise constant in time, so per-mode Duhamel integration
//! is exact on each time cell:
//!
//!   a_k(t_{j+1}) = a_k(t_j) e^{-w_k^2 dt} + f_{k,j} (1 - e^{-w_k^2 dt}) / w_k^2
//!
//! and the duality pairing <y(T), z_T> - <y_0, z(0)> - int <source, z> dt
//! vanishes on the truncated basis up to rounding. Every later module leans
//! on that identity, so the time integrals against the exponential adjoint
//! are always evaluated in closed form per cell (`cell_decay_integrals`).
//!
//! Set restrictions come in two deliberately distinct flavors:
//! * characteristic-function masking (`SpatialMask`) is binary per node, so
//!   chi is idempotent and the bang-bang normalization identities hold to
//!   rounding;
//! * set-restricted integrals (`SetQuadrature`) weight each node by the
//!   overlap fraction of its dual cell, so |S| is integrated exactly and
//!   slicing quadratures are measure-consistent. Both agree except at the
//!   mesh cells straddling a set boundary (documented first-order effect).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{SpaceSet, SpaceTimeSet, TimeSet};
use crate::spectral::{EigenSystem, SpectralError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PdeError {
    #[error("time grids differ: {0}")]
    GridMismatch(String),
    #[error("control holds {got} cells, grid has {expect}")]
    CellCount { got: usize, expect: usize },
    #[error("grid profile has {got} nodes, mesh has {expect}")]
    NodeCount { got: usize, expect: usize },
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error("time grid needs T > 0 and n_steps >= 2 (got T = {t}, n_steps = {n})")]
    BadGrid { t: f64, n: usize },
}

/// Uniform time grid on [0, T] with nodes t_j = j T / n_steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t_final: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(t_final: f64, n_steps: usize) -> Result<TimeGrid, PdeError> {
        if !(t_final > 0.0) || n_steps < 2 {
            return Err(PdeError::BadGrid {
                t: t_final,
                n: n_steps,
            });
        }
        Ok(TimeGrid { t_final, n_steps })
    }

    pub fn dt(&self) -> f64 {
        self.t_final / self.n_steps as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        self.t_final * j as f64 / self.n_steps as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|j| self.node(j)).collect()
    }

    pub fn cell_midpoint(&self, j: usize) -> f64 {
        0.5 * (self.node(j) + self.node(j + 1))
    }

    /// Trapezoid weights = dual-cell lengths of the time nodes.
    pub fn dual_weights(&self) -> Vec<f64> {
        let dt = self.dt();
        (0..=self.n_steps)
            .map(|j| {
                if j == 0 || j == self.n_steps {
                    0.5 * dt
                } else {
                    dt
                }
            })
            .collect()
    }

    /// |E intersect dual cell of node j| per node, for time-restricted
    /// integrals.
    pub fn restricted_weights(&self, e: &TimeSet) -> Vec<f64> {
        let dt = self.dt();
        (0..=self.n_steps)
            .map(|j| {
                let lo = (self.node(j) - 0.5 * dt).max(0.0);
                let hi = (self.node(j) + 0.5 * dt).min(self.t_final);
                e.to_f64_cells()
                    .iter()
                    .map(|&(a, b)| (b.min(hi) - a.max(lo)).max(0.0))
                    .sum()
            })
            .collect()
    }

    pub fn same_as(&self, other: &TimeGrid) -> bool {
        self.n_steps == other.n_steps && self.t_final == other.t_final
    }
}

/// Binary characteristic-function mask: node weight 1 inside the set,
/// 0 outside. Idempotent by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialMask {
    pub weights: Vec<f64>,
}

impl SpatialMask {
    pub fn membership(sys: &EigenSystem, set: &SpaceSet) -> SpatialMask {
        SpatialMask {
            weights: sys
                .mesh
                .iter()
                .map(|&x| if set.contains_point_f64(x) { 1.0 } else { 0.0 })
                .collect(),
        }
    }

    pub fn apply(&self, grid_fn: &[f64]) -> Vec<f64> {
        grid_fn
            .iter()
            .zip(&self.weights)
            .map(|(v, w)| v * w)
            .collect()
    }
}

/// Fractional quadrature weights for set-restricted integrals: node weight
/// is the overlap fraction of the node's dual cell with the set, so that
/// sum_i m_i w_i = |S| up to boundary clipping of the domain.
#[derive(Debug, Clone, PartialEq)]
pub struct SetQuadrature {
    pub weights: Vec<f64>,
}

impl SetQuadrature {
    pub fn overlap(sys: &EigenSystem, set: &SpaceSet) -> SetQuadrature {
        let n = sys.mesh.len();
        let cells = set.to_f64_cells();
        let weights = (0..n)
            .map(|i| {
                let lo = if i == 0 {
                    sys.mesh[0]
                } else {
                    0.5 * (sys.mesh[i - 1] + sys.mesh[i])
                };
                let hi = if i + 1 == n {
                    sys.mesh[i]
                } else {
                    0.5 * (sys.mesh[i] + sys.mesh[i + 1])
                };
                let len = hi - lo;
                if len <= 0.0 {
                    return 0.0;
                }
                let overlap: f64 = cells
                    .iter()
                    .map(|&(a, b)| (b.min(hi) - a.max(lo)).max(0.0))
                    .sum();
                (overlap / len).clamp(0.0, 1.0)
            })
            .collect();
        SetQuadrature { weights }
    }
}

/// Piecewise-constant-in-time control with grid-sampled spatial profiles,
/// masked to its support set at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Control {
    pub grid: TimeGrid,
    /// `values[j]` is the profile on time cell `[t_j, t_{j+1})`, full mesh nodes.
    pub values: Vec<Vec<f64>>,
    pub support: SpaceSet,
}

impl Control {
    pub fn zero(sys: &EigenSystem, grid: TimeGrid, support: SpaceSet) -> Control {
        Control {
            grid,
            values: vec![vec![0.0; sys.n_nodes()]; grid.n_steps],
            support,
        }
    }

    pub fn from_grid_profiles(
        sys: &EigenSystem,
        grid: TimeGrid,
        profiles: Vec<Vec<f64>>,
        support: SpaceSet,
    ) -> Result<Control, PdeError> {
        if profiles.len() != grid.n_steps {
            return Err(PdeError::CellCount {
                got: profiles.len(),
                expect: grid.n_steps,
            });
        }
        let mask = SpatialMask::membership(sys, &support);
        let values = profiles
            .into_iter()
            .map(|p| {
                if p.len() != sys.n_nodes() {
                    Err(PdeError::NodeCount {
                        got: p.len(),
                        expect: sys.n_nodes(),
                    })
                } else {
                    Ok(mask.apply(&p))
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Control {
            grid,
            values,
            support,
        })
    }

    /// Constant-in-time control from mode coefficients of the profile.
    pub fn constant_from_modes(
        sys: &EigenSystem,
        grid: TimeGrid,
        modes: &[f64],
        support: SpaceSet,
    ) -> Result<Control, PdeError> {
        sys.check_mode_dim(modes)?;
        let profile = sys.synthesize(modes);
        Control::from_grid_profiles(sys, grid, vec![profile; grid.n_steps], support)
    }

    /// Per-cell mode coefficients, synthesized and masked.
    pub fn from_modes_per_cell(
        sys: &EigenSystem,
        grid: TimeGrid,
        modes: &[Vec<f64>],
        support: SpaceSet,
    ) -> Result<Control, PdeError> {
        let profiles = modes
            .iter()
            .map(|m| {
                sys.check_mode_dim(m)?;
                Ok(sys.synthesize(m))
            })
            .collect::<Result<Vec<_>, PdeError>>()?;
        Control::from_grid_profiles(sys, grid, profiles, support)
    }

    /// Internal constructor for profiles that are already masked; skips the
    /// second mask application so normalization identities stay exact.
    pub(crate) fn from_masked_profiles(
        grid: TimeGrid,
        values: Vec<Vec<f64>>,
        support: SpaceSet,
    ) -> Control {
        Control {
            grid,
            values,
            support,
        }
    }

    /// max over time cells of ||u(t)||_L2.
    pub fn linf_l2(&self, sys: &EigenSystem) -> f64 {
        self.values
            .iter()
            .map(|v| l2_space(sys, v))
            .fold(0.0, f64::max)
    }

    /// sum over cells of dt ||u(t)||_L2.
    pub fn l1_l2(&self, sys: &EigenSystem) -> f64 {
        let dt = self.grid.dt();
        self.values.iter().map(|v| dt * l2_space(sys, v)).sum()
    }

    /// Per-cell L2 norms, for bang-bang profiles and reports.
    pub fn cell_norms(&self, sys: &EigenSystem) -> Vec<f64> {
        self.values.iter().map(|v| l2_space(sys, v)).collect()
    }

    /// Refines each time cell into `factor` equal subcells (same values),
    /// producing an identical piecewise-constant control on a finer grid.
    pub fn refine(&self, factor: usize) -> Control {
        let grid = TimeGrid {
            t_final: self.grid.t_final,
            n_steps: self.grid.n_steps * factor,
        };
        let mut values = Vec::with_capacity(grid.n_steps);
        for v in &self.values {
            for _ in 0..factor {
                values.push(v.clone());
            }
        }
        Control {
            grid,
            values,
            support: self.support.clone(),
        }
    }

    pub fn scale(&self, s: f64) -> Control {
        Control {
            grid: self.grid,
            values: self
                .values
                .iter()
                .map(|v| v.iter().map(|x| s * x).collect())
                .collect(),
            support: self.support.clone(),
        }
    }

    /// L1(0,T; L2) distance between two controls on the same grid.
    pub fn l1_l2_distance(&self, sys: &EigenSystem, other: &Control) -> f64 {
        let dt = self.grid.dt();
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| {
                let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
                dt * l2_space(sys, &diff)
            })
            .sum()
    }
}

/// Time-sampled solution in mode coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub grid: TimeGrid,
    /// `states[j]` = mode vector at node t_j.
    pub states: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn terminal_state(&self) -> &[f64] {
        self.states
            .last()
            .expect("trajectory has at least one node")
    }

    pub fn state_at(&self, j: usize) -> &[f64] {
        &self.states[j]
    }
}

/// Exact per-cell integrals d_{k,j} = int_{t_j}^{t_{j+1}} e^{-w_k^2 (T - t)} dt.
///
/// These are simultaneously the Duhamel weights of the forward solver and
/// the cell integrals of the adjoint, which is what makes the pairing
/// identity exact.
pub fn cell_decay_integrals(sys: &EigenSystem, grid: &TimeGrid) -> Vec<Vec<f64>> {
    let dt = grid.dt();
    let t_final = grid.t_final;
    sys.eigenvalues
        .iter()
        .map(|&w2| {
            (0..grid.n_steps)
                .map(|j| {
                    let t_right = grid.node(j + 1);
                    ((-w2 * (t_final - t_right)).exp()) * (1.0 - (-w2 * dt).exp()) / w2
                })
                .collect()
        })
        .collect()
}

fn check_same_grid(grid: &TimeGrid, ctl: &Control, name: &str) -> Result<(), PdeError> {
    if !grid.same_as(&ctl.grid) {
        return Err(PdeError::GridMismatch(format!(
            "{name}: control grid T={} n={} vs solver grid T={} n={}",
            ctl.grid.t_final, ctl.grid.n_steps, grid.t_final, grid.n_steps
        )));
    }
    Ok(())
}

/// Forward solve of y_t = A y + chi_w g + chi_w1 u1 + chi_w2 u2 by exact
/// per-mode Duhamel integration of the piecewise-constant sources.
pub fn solve_forward(
    sys: &EigenSystem,
    y0: &[f64],
    g: &Control,
    u1: &Control,
    u2: &Control,
    grid: &TimeGrid,
) -> Result<Trajectory, PdeError> {
    sys.check_mode_dim(y0)?;
    check_same_grid(grid, g, "leader")?;
    check_same_grid(grid, u1, "follower 1")?;
    check_same_grid(grid, u2, "follower 2")?;
    let k = sys.n_modes();
    let dt = grid.dt();
    let decay: Vec<f64> = sys.eigenvalues.iter().map(|w2| (-w2 * dt).exp()).collect();
    let gain: Vec<f64> = sys
        .eigenvalues
        .iter()
        .zip(&decay)
        .map(|(w2, e)| (1.0 - e) / w2)
        .collect();
    let mut states = Vec::with_capacity(grid.n_steps + 1);
    let mut current = y0.to_vec();
    states.push(current.clone());
    let n = sys.n_nodes();
    let mut source = vec![0.0; n];
    for j in 0..grid.n_steps {
        for i in 0..n {
            source[i] = g.values[j][i] + u1.values[j][i] + u2.values[j][i];
        }
        let f = sys.project(&source);
        for kk in 0..k {
            current[kk] = current[kk] * decay[kk] + f[kk] * gain[kk];
        }
        states.push(current.clone());
    }
    Ok(Trajectory {
        grid: *grid,
        states,
    })
}

/// Backward adjoint z_t + A z = 0 with terminal datum z(T) = z_T, sampled on
/// the grid: mode k carries z_T,k e^{-w_k^2 (T - t)}.
pub fn solve_adjoint(sys: &EigenSystem, z_terminal: &[f64], grid: &TimeGrid) -> Trajectory {
    let states = (0..=grid.n_steps)
        .map(|j| {
            let t = grid.node(j);
            z_terminal
                .iter()
                .zip(&sys.eigenvalues)
                .map(|(c, w2)| c * (-w2 * (grid.t_final - t)).exp())
                .collect()
        })
        .collect();
    Trajectory {
        grid: *grid,
        states,
    }
}

/// |<y(T), z_T> - <y_0, z(0)> - int_0^T <source(t), z(t)> dt| with the time
/// integral evaluated exactly per cell against the exponential adjoint.
pub fn pairing_residual(
    sys: &EigenSystem,
    y0: &[f64],
    g: &Control,
    u1: &Control,
    u2: &Control,
    z_terminal: &[f64],
    grid: &TimeGrid,
) -> Result<f64, PdeError> {
    sys.check_mode_dim(z_terminal)?;
    let traj = solve_forward(sys, y0, g, u1, u2, grid)?;
    let y_terminal = traj.terminal_state();
    let lhs: f64 = y_terminal.iter().zip(z_terminal).map(|(a, b)| a * b).sum();
    let z0: Vec<f64> = z_terminal
        .iter()
        .zip(&sys.eigenvalues)
        .map(|(c, w2)| c * (-w2 * grid.t_final).exp())
        .collect();
    let init: f64 = y0.iter().zip(&z0).map(|(a, b)| a * b).sum();
    let d = cell_decay_integrals(sys, grid);
    let n = sys.n_nodes();
    let mut source = vec![0.0; n];
    let mut coupling = 0.0;
    for j in 0..grid.n_steps {
        for i in 0..n {
            source[i] = g.values[j][i] + u1.values[j][i] + u2.values[j][i];
        }
        let f = sys.project(&source);
        for k in 0..sys.n_modes() {
            coupling += f[k] * z_terminal[k] * d[k][j];
        }
    }
    Ok((lhs - init - coupling).abs())
}

// --- norm suite -----------------------------------------------------------

/// ||v||_{L2(0,1)} by dual-cell quadrature on the mesh.
pub fn l2_space(sys: &EigenSystem, grid_fn: &[f64]) -> f64 {
    sys.inner(grid_fn, grid_fn).max(0.0).sqrt()
}

/// l2 norm of a mode vector (Parseval twin of `l2_space`).
pub fn l2_modes(modes: &[f64]) -> f64 {
    modes.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// ||v||_{L2(S)} with fractional dual-cell overlap weights.
pub fn l2_on(sys: &EigenSystem, set: &SpaceSet, grid_fn: &[f64]) -> f64 {
    let q = SetQuadrature::overlap(sys, set);
    l2_on_quad(sys, &q, grid_fn)
}

pub fn l2_on_quad(sys: &EigenSystem, quad: &SetQuadrature, grid_fn: &[f64]) -> f64 {
    sys.mass
        .iter()
        .zip(quad.weights.iter().zip(grid_fn))
        .map(|(m, (w, v))| m * w * v * v)
        .sum::<f64>()
        .max(0.0)
        .sqrt()
}

/// L1(S) integral of |v|.
pub fn l1_on(sys: &EigenSystem, set: &SpaceSet, grid_fn: &[f64]) -> f64 {
    let q = SetQuadrature::overlap(sys, set);
    l1_on_quad(sys, &q, grid_fn)
}

pub fn l1_on_quad(sys: &EigenSystem, quad: &SetQuadrature, grid_fn: &[f64]) -> f64 {
    sys.mass
        .iter()
        .zip(quad.weights.iter().zip(grid_fn))
        .map(|(m, (w, v))| m * w * v.abs())
        .sum()
}

/// L1(0,T; L2) norm of a trajectory by trapezoid in time.
pub fn l1t_l2x_traj(traj: &Trajectory) -> f64 {
    let tau = traj.grid.dual_weights();
    traj.states
        .iter()
        .zip(&tau)
        .map(|(s, w)| w * l2_modes(s))
        .sum()
}

/// int_D |y| dx dt by trapezoid in time over exact slice quadratures.
/// First-order in dt near the time boundaries of D.
pub fn integral_abs_over(
    sys: &EigenSystem,
    d: &SpaceTimeSet,
    traj: &Trajectory,
) -> Result<f64, PdeError> {
    let tau = traj.grid.dual_weights();
    let mut total = 0.0;
    for (j, weight) in tau.iter().enumerate() {
        let t = traj.grid.node(j);
        let slice = d
            .slice_at_f64(t)
            .map_err(|e| PdeError::GridMismatch(format!("slice at t = {t}: {e}")))?;
        if slice.is_empty() {
            continue;
        }
        let grid_fn = sys.synthesize(traj.state_at(j));
        total += weight * l1_on(sys, &slice, &grid_fn);
    }
    Ok(total)
}

/// Weighted gradient seminorm ||sqrt(x^alpha) v_x||_{L2} from grid data
/// (face differences). Exposed for completeness alongside the H^1_alpha
/// norm; no quantitative statement is tested against it.
pub fn weighted_grad_seminorm(sys: &EigenSystem, grid_fn: &[f64]) -> f64 {
    let n = sys.mesh.len();
    let mut acc = 0.0;
    for i in 0..n - 1 {
        let h = sys.mesh[i + 1] - sys.mesh[i];
        if h <= 0.0 {
            continue;
        }
        let xm = 0.5 * (sys.mesh[i] + sys.mesh[i + 1]);
        let slope = (grid_fn[i + 1] - grid_fn[i]) / h;
        acc += xm.powf(sys.alpha) * slope * slope * h;
    }
    acc.sqrt()
}

/// Gram matrix G_{km} = <chi_S e_m, e_k> of the masked eigenfunctions.
pub fn masked_gram(sys: &EigenSystem, mask: &SpatialMask) -> Vec<Vec<f64>> {
    let k = sys.n_modes();
    let n = sys.n_nodes();
    let masked: Vec<Vec<f64>> = sys.eigenfunctions.iter().map(|e| mask.apply(e)).collect();
    let mut g = vec![vec![0.0; k]; k];
    for a in 0..k {
        for b in a..k {
            let mut s = 0.0;
            for i in 0..n {
                s += sys.mass[i] * masked[a][i] * masked[b][i];
            }
            g[a][b] = s;
            g[b][a] = s;
        }
    }
    g
}

/// Constant-in-time control supported on `support` whose total Duhamel
/// contribution to y(T) equals `delta_modes`: solves the masked Gram system
/// (G c)_k beta_k = delta_k with beta_k = int_0^T e^{-w_k^2 (T-t)} dt.
pub fn steer_constant_control(
    sys: &EigenSystem,
    grid: TimeGrid,
    support: &SpaceSet,
    delta_modes: &[f64],
) -> Result<Control, PdeError> {
    sys.check_mode_dim(delta_modes)?;
    let mask = SpatialMask::membership(sys, support);
    let gram = masked_gram(sys, &mask);
    let beta: Vec<f64> = sys
        .eigenvalues
        .iter()
        .map(|w2| (1.0 - (-w2 * grid.t_final).exp()) / w2)
        .collect();
    let rhs: Vec<f64> = delta_modes.iter().zip(&beta).map(|(d, b)| d / b).collect();
    let coeffs = crate::linalg::solve_dense(&gram, &rhs)
        .map_err(|e| PdeError::GridMismatch(format!("steering Gram solve: {e}")))?;
    let profile = mask.apply(&sys.synthesize(&coeffs));
    Ok(Control::from_masked_profiles(
        grid,
        vec![profile; grid.n_steps],
        support.clone(),
    ))
}

/// Exports a trajectory as CSV: one row per time node, columns t, a_1..a_K.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut out = String::from("t");
    let k = traj.states.first().map(|s| s.len()).unwrap_or(0);
    for i in 1..=k {
        out.push_str(&format!(",a{i}"));
    }
    out.push('\n');
    for (j, state) in traj.states.iter().enumerate() {
        out.push_str(&format!("{}", traj.grid.node(j)));
        for v in state {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}

/// Exports a control as CSV: one row per time cell, columns t_mid, the
/// per-cell L2 norm, then the mode coefficients of the cell profile.
pub fn control_csv(sys: &EigenSystem, ctl: &Control) -> String {
    let mut out = String::from("t_mid,l2_norm");
    for i in 1..=sys.n_modes() {
        out.push_str(&format!(",a{i}"));
    }
    out.push('\n');
    for (j, v) in ctl.values.iter().enumerate() {
        out.push_str(&format!(
            "{},{}",
            ctl.grid.cell_midpoint(j),
            l2_space(sys, v)
        ));
        for c in sys.project(v) {
            out.push_str(&format!(",{c}"));
        }
        out.push('\n');
    }
    out
}
