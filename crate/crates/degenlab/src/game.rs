//! Stackelberg-Nash follower game: best responses, alternating equilibrium
//! computation, N0/N1/N2 classification, and the closed-form bang-bang
//! characterizations.
//!
//! Each follower minimizes J_i(u_1, u_2) = ||y(T) - y_T^i||_{L2(G_i)} over
//! the per-time-cell L2 ball ||u_i(t)|| <= M_i. The best response runs
//! conditional-gradient iteration: the linear maximizer of the per-cell
//! pairing against the adjoint state is the ball extreme point
//!
//!   v(t) = M chi_{omega_i} z(t) / ||chi_{omega_i} z(t)||,
//!
//! realized here with the exact per-cell integral of the exponential
//! adjoint, so the reported duality gap is the exact discrete variational
//! inequality residual. Equilibrium candidates come from Gauss-Seidel
//! alternation; existence is not constructive, so non-convergence is
//! reported, never patched. Verification probes the Nash inequalities
//! directly with random and extreme feasible deviations.

use serde::Serialize;
use thiserror::Error;

use crate::geometry::{GeometryError, SpaceSet};
use crate::pde::{
    self, cell_decay_integrals, l2_modes, l2_space, Control, PdeError, SetQuadrature, SpatialMask,
    TimeGrid,
};
use crate::rng::Rng;
use crate::spectral::{EigenSystem, SpectralError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GameError {
    #[error("targets coincide: ||y_T^1 - y_T^2|| = {0:.3e} <= 1e-12")]
    TargetsCoincide(f64),
    #[error("follower region omega_{0} is not contained in its observation set G_{0}")]
    FollowerRegionNotObserved(usize),
    #[error("set omega_{0} has zero measure")]
    DegenerateRegion(usize),
    #[error("leader norm {norm:.6} exceeds bound M0 = {bound}")]
    LeaderBoundViolated { norm: f64, bound: f64 },
    #[error("control bound M_{0} is negative")]
    NegativeBound(usize),
    #[error("classification tolerance {tol:.3e} >= ||y_T^1 - y_T^2||/2 = {half_gap:.3e}")]
    ClassTolTooLarge { tol: f64, half_gap: f64 },
    #[error("nash_verify needs at least one probe")]
    NoProbes,
    #[error("singular normalization: ||chi z(t)|| < 1e-14 on time cell {cell}")]
    SingularNormalization { cell: usize },
    #[error(transparent)]
    Pde(#[from] PdeError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Full data of one game instance.
#[derive(Debug, Clone)]
pub struct GameSpec {
    pub sys: EigenSystem,
    pub grid: TimeGrid,
    pub omega: SpaceSet,
    pub omega1: SpaceSet,
    pub omega2: SpaceSet,
    pub g_obs1: SpaceSet,
    pub g_obs2: SpaceSet,
    pub m0: f64,
    pub m1: f64,
    pub m2: f64,
    pub y0: Vec<f64>,
    pub y_t1: Vec<f64>,
    pub y_t2: Vec<f64>,
    pub leader: Control,
}

impl GameSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        sys: EigenSystem,
        grid: TimeGrid,
        omega: SpaceSet,
        omega1: SpaceSet,
        omega2: SpaceSet,
        g_obs1: SpaceSet,
        g_obs2: SpaceSet,
        m0: f64,
        m1: f64,
        m2: f64,
        y0: Vec<f64>,
        y_t1: Vec<f64>,
        y_t2: Vec<f64>,
        leader: Control,
    ) -> Result<GameSpec, GameError> {
        sys.check_mode_dim(&y0)?;
        sys.check_mode_dim(&y_t1)?;
        sys.check_mode_dim(&y_t2)?;
        let target_gap = l2_modes(
            &y_t1
                .iter()
                .zip(&y_t2)
                .map(|(a, b)| a - b)
                .collect::<Vec<_>>(),
        );
        if target_gap <= 1e-12 {
            return Err(GameError::TargetsCoincide(target_gap));
        }
        for (i, (w, g)) in [(&omega1, &g_obs1), (&omega2, &g_obs2)].iter().enumerate() {
            if !w.subset_of(g) {
                return Err(GameError::FollowerRegionNotObserved(i + 1));
            }
            if !w.measure()?.is_positive() {
                return Err(GameError::DegenerateRegion(i + 1));
            }
        }
        for (i, m) in [m0, m1, m2].iter().enumerate() {
            if *m < 0.0 {
                return Err(GameError::NegativeBound(i));
            }
        }
        let leader_norm = leader.linf_l2(&sys);
        if leader_norm > m0 * (1.0 + 1e-9) + 1e-12 {
            return Err(GameError::LeaderBoundViolated {
                norm: leader_norm,
                bound: m0,
            });
        }
        Ok(GameSpec {
            sys,
            grid,
            omega,
            omega1,
            omega2,
            g_obs1,
            g_obs2,
            m0,
            m1,
            m2,
            y0,
            y_t1,
            y_t2,
            leader,
        })
    }

    pub fn target_gap(&self) -> f64 {
        l2_modes(
            &self
                .y_t1
                .iter()
                .zip(&self.y_t2)
                .map(|(a, b)| a - b)
                .collect::<Vec<_>>(),
        )
    }

    fn follower_sets(&self, i: usize) -> (&SpaceSet, &SpaceSet, f64, &[f64]) {
        if i == 1 {
            (&self.omega1, &self.g_obs1, self.m1, &self.y_t1)
        } else {
            (&self.omega2, &self.g_obs2, self.m2, &self.y_t2)
        }
    }

    pub fn zero_follower(&self, i: usize) -> Control {
        let (omega, _, _, _) = self.follower_sets(i);
        Control::zero(&self.sys, self.grid, omega.clone())
    }
}

/// J_i(u_1, u_2) = ||y(T; y_0, g, u_1, u_2) - y_T^i||_{L2(G_i)}.
pub fn cost_j(i: usize, spec: &GameSpec, u1: &Control, u2: &Control) -> Result<f64, GameError> {
    let traj = pde::solve_forward(&spec.sys, &spec.y0, &spec.leader, u1, u2, &spec.grid)?;
    let (_, g_obs, _, target) = spec.follower_sets(i);
    let y_grid = spec.sys.synthesize(traj.terminal_state());
    let t_grid = spec.sys.synthesize(target);
    let diff: Vec<f64> = y_grid.iter().zip(&t_grid).map(|(a, b)| a - b).collect();
    Ok(pde::l2_on(&spec.sys, g_obs, &diff))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BestResponseStatus {
    Converged,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct BestResponse {
    pub control: Control,
    /// Final conditional-gradient duality gap (discrete variational
    /// inequality residual).
    pub vi_gap: f64,
    pub cost: f64,
    pub iterations: usize,
    pub status: BestResponseStatus,
}

struct BrWorkspace<'a> {
    sys: &'a EigenSystem,
    /// masked eigenfunctions on omega_i
    masked_basis: Vec<Vec<f64>>,
    /// fractional quadrature weights of G_i
    obs_quad: SetQuadrature,
    /// exact per-cell decay integrals d_{k,j}
    d: Vec<Vec<f64>>,
    bound: f64,
    target_grid: Vec<f64>,
}

impl<'a> BrWorkspace<'a> {
    fn new(spec: &'a GameSpec, i: usize) -> BrWorkspace<'a> {
        let (omega, g_obs, bound, target) = spec.follower_sets(i);
        let mask = SpatialMask::membership(&spec.sys, omega);
        let masked_basis = spec
            .sys
            .eigenfunctions
            .iter()
            .map(|e| mask.apply(e))
            .collect();
        BrWorkspace {
            sys: &spec.sys,
            masked_basis,
            obs_quad: SetQuadrature::overlap(&spec.sys, g_obs),
            d: cell_decay_integrals(&spec.sys, &spec.grid),
            bound,
            target_grid: spec.sys.synthesize(target),
        }
    }

    /// <a, b>_{G_i} with the observation quadrature.
    fn obs_inner(&self, a: &[f64], b: &[f64]) -> f64 {
        self.sys
            .mass
            .iter()
            .zip(self.obs_quad.weights.iter().zip(a.iter().zip(b)))
            .map(|(m, (w, (x, y)))| m * w * x * y)
            .sum()
    }

    /// Adjoint datum modes z_k = <chi_{G} r, e_k> for grid residual r.
    fn adjoint_datum(&self, r: &[f64]) -> Vec<f64> {
        self.sys
            .eigenfunctions
            .iter()
            .map(|e| {
                self.sys
                    .mass
                    .iter()
                    .zip(self.obs_quad.weights.iter().zip(r.iter().zip(e)))
                    .map(|(m, (w, (x, y)))| m * w * x * y)
                    .sum()
            })
            .collect()
    }

    /// chi_omega int_cell z dt on cell j for adjoint datum modes `zt`.
    fn integrated_masked_adjoint(&self, zt: &[f64], j: usize) -> Vec<f64> {
        let n = self.sys.n_nodes();
        let mut p = vec![0.0; n];
        for (k, basis) in self.masked_basis.iter().enumerate() {
            let c = zt[k] * self.d[k][j];
            if c == 0.0 {
                continue;
            }
            for i in 0..n {
                p[i] += c * basis[i];
            }
        }
        p
    }

    /// Terminal mode contribution of per-cell masked profiles.
    fn terminal_contribution(&self, profiles: &[Vec<f64>]) -> Vec<f64> {
        let k = self.sys.n_modes();
        let mut out = vec![0.0; k];
        for (j, p) in profiles.iter().enumerate() {
            let f = self.sys.project(p);
            for kk in 0..k {
                out[kk] += f[kk] * self.d[kk][j];
            }
        }
        out
    }
}

/// Conditional-gradient best response of follower `i` with the other
/// follower's control fixed. Terminates when the duality gap drops below
/// `tol`, when the cost reaches the reachability branch (J_i <= cost_tol),
/// or at `max_iter`.
pub fn best_response(
    i: usize,
    spec: &GameSpec,
    other: &Control,
    tol: f64,
    max_iter: usize,
) -> Result<BestResponse, GameError> {
    best_response_with(i, spec, other, tol, 1e-12, max_iter)
}

pub fn best_response_with(
    i: usize,
    spec: &GameSpec,
    other: &Control,
    tol: f64,
    cost_tol: f64,
    max_iter: usize,
) -> Result<BestResponse, GameError> {
    let ws = BrWorkspace::new(spec, i);
    let mine_zero = spec.zero_follower(i);
    let (u1b, u2b) = if i == 1 {
        (&mine_zero, other)
    } else {
        (other, &mine_zero)
    };
    let base = pde::solve_forward(&spec.sys, &spec.y0, &spec.leader, u1b, u2b, &spec.grid)?;
    let b_modes = base.terminal_state().to_vec();
    let n = spec.sys.n_nodes();
    let n_cells = spec.grid.n_steps;
    let mut u: Vec<Vec<f64>> = vec![vec![0.0; n]; n_cells];
    let mut lu = vec![0.0; spec.sys.n_modes()];
    let mut gap = f64::INFINITY;
    let mut cost = f64::INFINITY;
    let mut status = BestResponseStatus::MaxIterations;
    let mut iterations = 0;
    for it in 0..max_iter {
        iterations = it + 1;
        let y_modes: Vec<f64> = b_modes.iter().zip(&lu).map(|(a, b)| a + b).collect();
        let y_grid = spec.sys.synthesize(&y_modes);
        // datum direction (y_T^i - y(T)), restricted to G_i by the
        // observation quadrature
        let r: Vec<f64> = ws
            .target_grid
            .iter()
            .zip(&y_grid)
            .map(|(t, y)| t - y)
            .collect();
        cost = ws.obs_inner(&r, &r).max(0.0).sqrt();
        let zt = ws.adjoint_datum(&r);
        // vertex and gap
        let mut vertex: Vec<Vec<f64>> = Vec::with_capacity(n_cells);
        gap = 0.0;
        for j in 0..n_cells {
            let p = ws.integrated_masked_adjoint(&zt, j);
            let norm = l2_space(&spec.sys, &p);
            let v: Vec<f64> = if norm < 1e-14 || ws.bound == 0.0 {
                vec![0.0; n]
            } else {
                p.iter().map(|x| ws.bound * x / norm).collect()
            };
            let mut pairing = 0.0;
            for idx in 0..n {
                pairing += spec.sys.mass[idx] * p[idx] * (v[idx] - u[j][idx]);
            }
            gap += pairing;
            vertex.push(v);
        }
        if cost <= cost_tol {
            status = BestResponseStatus::Converged;
            break;
        }
        if gap <= tol {
            status = BestResponseStatus::Converged;
            break;
        }
        // exact line search on the quadratic cost along u + lambda (v - u)
        let diff: Vec<Vec<f64>> = (0..n_cells)
            .map(|j| {
                (0..n)
                    .map(|idx| vertex[j][idx] - u[j][idx])
                    .collect::<Vec<f64>>()
            })
            .collect();
        let ld = ws.terminal_contribution(&diff);
        let s = spec.sys.synthesize(&ld);
        let denom = ws.obs_inner(&s, &s);
        if denom <= 0.0 {
            status = BestResponseStatus::Converged;
            break;
        }
        let lambda = (ws.obs_inner(&r, &s) / denom).clamp(0.0, 1.0);
        if lambda == 0.0 {
            status = BestResponseStatus::Converged;
            break;
        }
        for j in 0..n_cells {
            for idx in 0..n {
                u[j][idx] += lambda * diff[j][idx];
            }
        }
        for (a, b) in lu.iter_mut().zip(&ld) {
            *a += lambda * b;
        }
    }
    let (omega, _, _, _) = spec.follower_sets(i);
    Ok(BestResponse {
        control: Control::from_masked_profiles(spec.grid, u, omega.clone()),
        vi_gap: gap,
        cost,
        iterations,
        status,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum NashClass {
    N0,
    N1,
    N2,
    Unclassified,
}

/// Classifies an equilibrium candidate by its terminal state: N1 when
/// y(T) hits y_T^1 within `tol_class`, N2 symmetrically, N0 when it misses
/// both. `tol_class` must stay below half the target separation.
pub fn classify(
    spec: &GameSpec,
    u1: &Control,
    u2: &Control,
    tol_class: f64,
) -> Result<NashClass, GameError> {
    let half_gap = 0.5 * spec.target_gap();
    if tol_class >= half_gap {
        return Err(GameError::ClassTolTooLarge {
            tol: tol_class,
            half_gap,
        });
    }
    let traj = pde::solve_forward(&spec.sys, &spec.y0, &spec.leader, u1, u2, &spec.grid)?;
    let yt = traj.terminal_state();
    let d1 = l2_modes(
        &yt.iter()
            .zip(&spec.y_t1)
            .map(|(a, b)| a - b)
            .collect::<Vec<_>>(),
    );
    let d2 = l2_modes(
        &yt.iter()
            .zip(&spec.y_t2)
            .map(|(a, b)| a - b)
            .collect::<Vec<_>>(),
    );
    Ok(match (d1 <= tol_class, d2 <= tol_class) {
        (true, false) => NashClass::N1,
        (false, true) => NashClass::N2,
        (false, false) => NashClass::N0,
        (true, true) => NashClass::Unclassified,
    })
}

/// Worst J_i improvement found by feasible deviations (positive gap means
/// the pair is not a Nash point at that tolerance).
pub fn nash_verify(
    spec: &GameSpec,
    u1: &Control,
    u2: &Control,
    probes: usize,
    seed: u64,
) -> Result<(f64, f64), GameError> {
    if probes == 0 {
        return Err(GameError::NoProbes);
    }
    let mut gaps = [f64::NEG_INFINITY; 2];
    for i in [1usize, 2usize] {
        let (omega, _, bound, _) = spec.follower_sets(i);
        let base = if i == 1 {
            cost_j(1, spec, u1, u2)?
        } else {
            cost_j(2, spec, u1, u2)?
        };
        let mask = SpatialMask::membership(&spec.sys, omega);
        let mut rng = Rng::stream(seed, i as u64);
        let mut best_gap = f64::NEG_INFINITY;
        for p in 0..probes {
            let probe = if p == 0 {
                // conditional-gradient vertex at the current pair
                let other = if i == 1 { u2 } else { u1 };
                best_response_with(i, spec, other, f64::INFINITY, 0.0, 1)?
                    .control
                    .values
                    .clone()
            } else {
                // random feasible point: extreme on odd probes, interior on even
                let scale_kind_extreme = p % 2 == 1;
                (0..spec.grid.n_steps)
                    .map(|_| {
                        let raw = spec.sys.synthesize(&rng.normal_vec(spec.sys.n_modes()));
                        let masked = mask.apply(&raw);
                        let norm = l2_space(&spec.sys, &masked);
                        if norm < 1e-14 {
                            return vec![0.0; spec.sys.n_nodes()];
                        }
                        let target = if scale_kind_extreme {
                            bound
                        } else {
                            bound * rng.next_f64()
                        };
                        masked.iter().map(|x| target * x / norm).collect()
                    })
                    .collect::<Vec<_>>()
            };
            let candidate = Control::from_masked_profiles(spec.grid, probe, omega.clone());
            let cost = if i == 1 {
                cost_j(1, spec, &candidate, u2)?
            } else {
                cost_j(2, spec, u1, &candidate)?
            };
            best_gap = best_gap.max(base - cost);
        }
        gaps[i - 1] = best_gap;
    }
    Ok((gaps[0], gaps[1]))
}

/// Per-follower bang-bang statistics of a control.
#[derive(Debug, Clone, Serialize)]
pub struct BangBangStats {
    /// max over time cells of | ||u(t)|| - M |.
    pub max_residual: f64,
    /// fraction of time cells with | ||u(t)|| - M | <= 1e-6.
    pub on_bound_fraction: f64,
    pub cell_norms: Vec<f64>,
}

pub fn bang_bang_stats(sys: &EigenSystem, ctl: &Control, bound: f64) -> BangBangStats {
    let cell_norms = ctl.cell_norms(sys);
    let residuals: Vec<f64> = cell_norms.iter().map(|n| (n - bound).abs()).collect();
    let max_residual = residuals.iter().copied().fold(0.0, f64::max);
    let on_bound = residuals.iter().filter(|r| **r <= 1e-6).count();
    BangBangStats {
        max_residual,
        on_bound_fraction: on_bound as f64 / cell_norms.len().max(1) as f64,
        cell_norms,
    }
}

/// Equilibrium candidate report. Controls are kept for further computation;
/// the serialized form carries the numerical summary and per-cell norms.
#[derive(Debug, Clone, Serialize)]
pub struct EquilibriumReport {
    #[serde(skip)]
    pub u1: Control,
    #[serde(skip)]
    pub u2: Control,
    pub class: NashClass,
    pub bang_bang: Vec<BangBangStats>,
    pub nash_gaps: (f64, f64),
    pub rounds: usize,
    pub converged: bool,
    pub br_gaps: (f64, f64),
    pub final_costs: (f64, f64),
    pub update_delta: f64,
}

/// Options for `nash_solve`; defaults follow the per-module ledger.
#[derive(Debug, Clone)]
pub struct NashOptions {
    pub tol: f64,
    pub max_rounds: usize,
    pub br_tol: f64,
    pub br_max_iter: usize,
    pub verify_probes: usize,
    pub seed: u64,
    /// Classification tolerance; defaults to 1e-6 * target gap when None.
    pub tol_class: Option<f64>,
}

impl Default for NashOptions {
    fn default() -> Self {
        NashOptions {
            tol: 1e-9,
            max_rounds: 200,
            br_tol: 1e-8,
            br_max_iter: 40_000,
            verify_probes: 200,
            seed: 1,
            tol_class: None,
        }
    }
}

/// Gauss-Seidel alternating best response from (0, 0). Convergence is not
/// guaranteed by the theory; the report carries an honest `converged` flag.
pub fn nash_solve(spec: &GameSpec, opts: &NashOptions) -> Result<EquilibriumReport, GameError> {
    let mut u1 = spec.zero_follower(1);
    let mut u2 = spec.zero_follower(2);
    let mut converged = false;
    let mut rounds = 0;
    let mut br_gaps = (0.0, 0.0);
    let mut final_costs = (0.0, 0.0);
    let mut delta = f64::INFINITY;
    for round in 0..opts.max_rounds {
        rounds = round + 1;
        let r1 = best_response(1, spec, &u2, opts.br_tol, opts.br_max_iter)?;
        let r2 = best_response(2, spec, &r1.control, opts.br_tol, opts.br_max_iter)?;
        let d1 = r1.control.l1_l2_distance(&spec.sys, &u1);
        let d2 = r2.control.l1_l2_distance(&spec.sys, &u2);
        u1 = r1.control;
        u2 = r2.control;
        br_gaps = (r1.vi_gap, r2.vi_gap);
        final_costs = (r1.cost, r2.cost);
        delta = d1.max(d2);
        if delta <= opts.tol {
            converged = true;
            break;
        }
    }
    let tol_class = opts.tol_class.unwrap_or(1e-6 * spec.target_gap());
    let class = classify(spec, &u1, &u2, tol_class)?;
    let nash_gaps = nash_verify(spec, &u1, &u2, opts.verify_probes, opts.seed)?;
    let bang_bang = vec![
        bang_bang_stats(&spec.sys, &u1, spec.m1),
        bang_bang_stats(&spec.sys, &u2, spec.m2),
    ];
    Ok(EquilibriumReport {
        u1,
        u2,
        class,
        bang_bang,
        nash_gaps,
        rounds,
        converged,
        br_gaps,
        final_costs,
        update_delta: delta,
    })
}

/// Closed-form follower candidate: the adjoint flow from the target
/// difference, normalized per time cell and scaled to the bound
/// (time-cell realization of the N1/N2 characterization).
///
/// i = 2 uses terminal datum y_T^2 - y_T^1, i = 1 the negative.
pub fn explicit_follower(i: usize, spec: &GameSpec) -> Result<Control, GameError> {
    let datum: Vec<f64> = if i == 2 {
        spec.y_t2
            .iter()
            .zip(&spec.y_t1)
            .map(|(a, b)| a - b)
            .collect()
    } else {
        spec.y_t1
            .iter()
            .zip(&spec.y_t2)
            .map(|(a, b)| a - b)
            .collect()
    };
    explicit_adjoint_control(i, spec, &datum)
}

/// Followers entering the leader's dual problem: adjoint flow from the
/// targets themselves (terminal datum y_T^i), which does not depend on the
/// leader control.
pub fn n0_followers(spec: &GameSpec) -> Result<(Control, Control), GameError> {
    Ok((
        explicit_adjoint_control(1, spec, &spec.y_t1.clone())?,
        explicit_adjoint_control(2, spec, &spec.y_t2.clone())?,
    ))
}

fn explicit_adjoint_control(
    i: usize,
    spec: &GameSpec,
    datum: &[f64],
) -> Result<Control, GameError> {
    let (omega, _, bound, _) = spec.follower_sets(i);
    if bound == 0.0 {
        return Ok(spec.zero_follower(i));
    }
    let mask = SpatialMask::membership(&spec.sys, omega);
    let masked_basis: Vec<Vec<f64>> = spec
        .sys
        .eigenfunctions
        .iter()
        .map(|e| mask.apply(e))
        .collect();
    let d = cell_decay_integrals(&spec.sys, &spec.grid);
    let n = spec.sys.n_nodes();
    let dt = spec.grid.dt();
    let mut profiles = Vec::with_capacity(spec.grid.n_steps);
    for j in 0..spec.grid.n_steps {
        let mut p = vec![0.0; n];
        for (k, basis) in masked_basis.iter().enumerate() {
            // per-cell average of the adjoint: exact integral / dt
            let c = datum[k] * d[k][j] / dt;
            if c == 0.0 {
                continue;
            }
            for idx in 0..n {
                p[idx] += c * basis[idx];
            }
        }
        let norm = l2_space(&spec.sys, &p);
        if norm < 1e-14 {
            return Err(GameError::SingularNormalization { cell: j });
        }
        profiles.push(p.iter().map(|x| bound * x / norm).collect());
    }
    Ok(Control::from_masked_profiles(
        spec.grid,
        profiles,
        omega.clone(),
    ))
}

/// Report of the N1-slice membership equivalence check.
#[derive(Debug, Clone, Serialize)]
pub struct N1ConsistencyReport {
    pub steering_error: f64,
    pub precondition_met: bool,
    pub nash_gaps: Option<(f64, f64)>,
}

/// With u_2^* the explicit candidate, any u_1 steering y(T) to y_T^1 within
/// `tol` must make (u_1, u_2^*) pass the Nash inequalities; when the
/// steering precondition fails, no claim is made.
pub fn n1_consistency_check(
    spec: &GameSpec,
    u1: &Control,
    tol: f64,
    probes: usize,
    seed: u64,
) -> Result<N1ConsistencyReport, GameError> {
    let u2 = explicit_follower(2, spec)?;
    let traj = pde::solve_forward(&spec.sys, &spec.y0, &spec.leader, u1, &u2, &spec.grid)?;
    let yt = traj.terminal_state();
    let steering_error = l2_modes(
        &yt.iter()
            .zip(&spec.y_t1)
            .map(|(a, b)| a - b)
            .collect::<Vec<_>>(),
    );
    if steering_error > tol {
        return Ok(N1ConsistencyReport {
            steering_error,
            precondition_met: false,
            nash_gaps: None,
        });
    }
    let gaps = nash_verify(spec, u1, &u2, probes, seed)?;
    Ok(N1ConsistencyReport {
        steering_error,
        precondition_met: true,
        nash_gaps: Some(gaps),
    })
}

/// Convexity probe of J_i in its own control (used by property tests and
/// the verification pipeline): J_i(lambda u + (1-lambda) u') <=
/// lambda J_i(u) + (1-lambda) J_i(u') + 1e-10.
pub fn convexity_defect(
    i: usize,
    spec: &GameSpec,
    u: &Control,
    u_prime: &Control,
    other: &Control,
    lambda: f64,
) -> Result<f64, GameError> {
    let blend_values: Vec<Vec<f64>> = u
        .values
        .iter()
        .zip(&u_prime.values)
        .map(|(a, b)| {
            a.iter()
                .zip(b)
                .map(|(x, y)| lambda * x + (1.0 - lambda) * y)
                .collect()
        })
        .collect();
    let blend = Control::from_masked_profiles(spec.grid, blend_values, u.support.clone());
    let (j_blend, j_u, j_up) = if i == 1 {
        (
            cost_j(1, spec, &blend, other)?,
            cost_j(1, spec, u, other)?,
            cost_j(1, spec, u_prime, other)?,
        )
    } else {
        (
            cost_j(2, spec, other, &blend)?,
            cost_j(2, spec, other, u)?,
            cost_j(2, spec, other, u_prime)?,
        )
    };
    Ok(j_blend - (lambda * j_u + (1.0 - lambda) * j_up))
}

/// Mode-space unconstrained least-squares steering oracle used by tests:
/// the control profile (constant in time, supported on omega) minimizing
/// ||y(T) - target||_{L2} without a norm bound.
pub fn unconstrained_steering_residual(spec: &GameSpec, i: usize) -> Result<f64, GameError> {
    let (omega, _, _, target) = spec.follower_sets(i);
    let other = spec.zero_follower(if i == 1 { 2 } else { 1 });
    let mine = spec.zero_follower(i);
    let (u1, u2) = if i == 1 {
        (&mine, &other)
    } else {
        (&other, &mine)
    };
    let base = pde::solve_forward(&spec.sys, &spec.y0, &spec.leader, u1, u2, &spec.grid)?;
    let delta: Vec<f64> = target
        .iter()
        .zip(base.terminal_state())
        .map(|(t, b)| t - b)
        .collect();
    let steer = pde::steer_constant_control(&spec.sys, spec.grid, omega, &delta)?;
    let (s1, s2) = if i == 1 {
        (steer.clone(), other.clone())
    } else {
        (other.clone(), steer.clone())
    };
    let traj = pde::solve_forward(&spec.sys, &spec.y0, &spec.leader, &s1, &s2, &spec.grid)?;
    Ok(l2_modes(
        &traj
            .terminal_state()
            .iter()
            .zip(target)
            .map(|(a, b)| a - b)
            .collect::<Vec<_>>(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::IntervalSet;
    use crate::spectral::{self, DegenerateOperatorSpec};

    fn base_spec(k: usize, m1: f64, m2: f64) -> GameSpec {
        let op = DegenerateOperatorSpec::new(1.0, 160, 2.0).unwrap();
        let sys = spectral::eigen_fd(&op, k).unwrap();
        let grid = TimeGrid::new(0.5, 16).unwrap();
        let omega = IntervalSet::interval(0.3, 0.7).unwrap();
        let omega1 = IntervalSet::interval(0.35, 0.55).unwrap();
        let omega2 = IntervalSet::interval(0.5, 0.66).unwrap();
        let g1 = IntervalSet::interval(0.3, 0.6).unwrap();
        let g2 = IntervalSet::interval(0.45, 0.7).unwrap();
        let leader = Control::zero(&sys, grid, omega.clone());
        let mut y_t1 = vec![0.0; k];
        y_t1[0] = 1.0;
        let mut y_t2 = vec![0.0; k];
        y_t2[0] = -1.0;
        GameSpec::new(
            sys,
            grid,
            omega,
            omega1,
            omega2,
            g1,
            g2,
            1.0,
            m1,
            m2,
            vec![0.0; k],
            y_t1,
            y_t2,
            leader,
        )
        .unwrap()
    }

    #[test]
    fn spec_validation() {
        let spec = base_spec(4, 1.0, 1.0);
        // coinciding targets rejected
        let bad = GameSpec::new(
            spec.sys.clone(),
            spec.grid,
            spec.omega.clone(),
            spec.omega1.clone(),
            spec.omega2.clone(),
            spec.g_obs1.clone(),
            spec.g_obs2.clone(),
            1.0,
            1.0,
            1.0,
            spec.y0.clone(),
            spec.y_t1.clone(),
            spec.y_t1.clone(),
            spec.leader.clone(),
        );
        assert!(matches!(bad, Err(GameError::TargetsCoincide(_))));
        // omega_i not inside G_i rejected
        let bad = GameSpec::new(
            spec.sys.clone(),
            spec.grid,
            spec.omega.clone(),
            IntervalSet::interval(0.1, 0.2).unwrap(),
            spec.omega2.clone(),
            spec.g_obs1.clone(),
            spec.g_obs2.clone(),
            1.0,
            1.0,
            1.0,
            spec.y0.clone(),
            spec.y_t1.clone(),
            spec.y_t2.clone(),
            spec.leader.clone(),
        );
        assert!(matches!(bad, Err(GameError::FollowerRegionNotObserved(1))));
    }

    #[test]
    fn cost_zero_dynamics_equals_target_norm() {
        let spec = base_spec(4, 1.0, 1.0);
        let u1 = spec.zero_follower(1);
        let u2 = spec.zero_follower(2);
        let j1 = cost_j(1, &spec, &u1, &u2).unwrap();
        // e_1 only decays; with y0 = 0 and no controls, y(T) = 0, so J1 =
        // ||y_T^1||_{L2(G_1)} = ||e_1||_{L2(G_1)}
        let e1_on_g1 = pde::l2_on(&spec.sys, &spec.g_obs1, &spec.sys.eigenfunctions[0]);
        assert!((j1 - e1_on_g1).abs() < 1e-12);
        assert!(j1 >= 0.0);
    }

    #[test]
    fn cost_zero_for_preimage_initial_state() {
        // y0 = e^{AT}-preimage of y_T^1 in mode space
        let spec = base_spec(4, 1.0, 1.0);
        let t = spec.grid.t_final;
        let y0: Vec<f64> = spec
            .y_t1
            .iter()
            .zip(&spec.sys.eigenvalues)
            .map(|(c, w2)| c * (w2 * t).exp())
            .collect();
        let spec2 = GameSpec { y0, ..spec.clone() };
        let u1 = spec2.zero_follower(1);
        let u2 = spec2.zero_follower(2);
        let j1 = cost_j(1, &spec2, &u1, &u2).unwrap();
        assert!(j1 < 1e-10, "J1 = {j1}");
    }

    #[test]
    fn best_response_zero_when_target_already_hit() {
        let spec = base_spec(4, 1.0, 1.0);
        let t = spec.grid.t_final;
        let y0: Vec<f64> = spec
            .y_t1
            .iter()
            .zip(&spec.sys.eigenvalues)
            .map(|(c, w2)| c * (w2 * t).exp())
            .collect();
        let spec2 = GameSpec { y0, ..spec.clone() };
        let br = best_response(1, &spec2, &spec2.zero_follower(2), 1e-10, 100).unwrap();
        assert_eq!(br.status, BestResponseStatus::Converged);
        assert!(br.vi_gap.abs() <= 1e-10);
        let max_norm = br.control.linf_l2(&spec2.sys);
        assert!(max_norm <= 1e-12, "control norm {max_norm}");
    }

    #[test]
    fn best_response_reaches_reachable_target() {
        // target constructed as the image of a feasible control with norm
        // well below the bound -> interior optimum, J <= 1e-6
        let mut spec = base_spec(6, 5.0, 1.0);
        let witness = {
            let raw = Control::constant_from_modes(
                &spec.sys,
                spec.grid,
                &[0.4, -0.2, 0.1, 0.05, 0.0, 0.0],
                spec.omega1.clone(),
            )
            .unwrap();
            raw.scale(0.5 / raw.linf_l2(&spec.sys))
        };
        let traj = pde::solve_forward(
            &spec.sys,
            &spec.y0,
            &spec.leader,
            &witness,
            &spec.zero_follower(2),
            &spec.grid,
        )
        .unwrap();
        spec.y_t1 = traj.terminal_state().to_vec();
        let br =
            best_response_with(1, &spec, &spec.zero_follower(2), 1e-14, 1e-7, 200_000).unwrap();
        assert!(
            br.cost <= 1e-6,
            "cost {} after {} iters",
            br.cost,
            br.iterations
        );
        // interior: the bound is far from active
        assert!(br.control.linf_l2(&spec.sys) < 5.0 * 0.9);
        // unconstrained least-squares oracle agrees the target is attainable
        let resid = unconstrained_steering_residual(&spec, 1).unwrap();
        assert!(resid < 1e-7, "steering oracle residual {resid}");
    }

    #[test]
    fn best_response_bang_bang_for_unreachable_target() {
        let mut spec = base_spec(6, 1.0, 1.0);
        // unreachable: big target, small bound
        spec.y_t1 = {
            let mut t = vec![0.0; 6];
            t[0] = 4.0;
            t[1] = 2.0;
            t
        };
        let br = best_response(1, &spec, &spec.zero_follower(2), 1e-8, 40_000).unwrap();
        assert_eq!(
            br.status,
            BestResponseStatus::Converged,
            "gap {}",
            br.vi_gap
        );
        let stats = bang_bang_stats(&spec.sys, &br.control, spec.m1);
        assert!(
            stats.on_bound_fraction >= 0.99,
            "bang-bang fraction {}",
            stats.on_bound_fraction
        );
    }

    #[test]
    fn nash_degenerate_zero_bounds() {
        let spec = base_spec(4, 0.0, 0.0);
        let report = nash_solve(&spec, &NashOptions::default()).unwrap();
        assert!(report.converged);
        assert!(report.u1.linf_l2(&spec.sys) == 0.0);
        assert!(report.u2.linf_l2(&spec.sys) == 0.0);
        assert!(report.nash_gaps.0 <= 1e-12 && report.nash_gaps.1 <= 1e-12);
    }

    #[test]
    fn nash_single_player_reduction() {
        let spec = base_spec(4, 1.0, 0.0);
        let report = nash_solve(&spec, &NashOptions::default()).unwrap();
        assert!(report.converged);
        // follower 2 pinned at zero; follower 1 at its best response
        assert_eq!(report.u2.linf_l2(&spec.sys), 0.0);
        assert!(report.br_gaps.0 <= 1e-8);
        assert!(matches!(report.class, NashClass::N0));
    }

    #[test]
    fn symmetric_instance_antisymmetric_equilibrium() {
        // omega1 = omega2, G1 = G2, M1 = M2, y0 = 0, g = 0, yT2 = -yT1
        let op = DegenerateOperatorSpec::new(1.0, 160, 2.0).unwrap();
        let sys = spectral::eigen_fd(&op, 5).unwrap();
        let grid = TimeGrid::new(0.4, 12).unwrap();
        let omega = IntervalSet::interval(0.3, 0.7).unwrap();
        let shared = IntervalSet::interval(0.4, 0.6).unwrap();
        let obs = IntervalSet::interval(0.35, 0.65).unwrap();
        let leader = Control::zero(&sys, grid, omega.clone());
        let mut y_t1 = vec![0.0; 5];
        y_t1[0] = 1.2;
        y_t1[2] = -0.4;
        let y_t2: Vec<f64> = y_t1.iter().map(|x| -x).collect();
        let spec = GameSpec::new(
            sys,
            grid,
            omega,
            shared.clone(),
            shared,
            obs.clone(),
            obs,
            1.0,
            0.8,
            0.8,
            vec![0.0; 5],
            y_t1,
            y_t2,
            leader,
        )
        .unwrap();
        let opts = NashOptions {
            tol: 1e-10,
            br_tol: 1e-11,
            verify_probes: 20,
            ..NashOptions::default()
        };
        let report = nash_solve(&spec, &opts).unwrap();
        assert!(report.converged, "delta {}", report.update_delta);
        // u2 = -u1 within 1e-8 in L-inf(L2)
        let diff_values: Vec<Vec<f64>> = report
            .u1
            .values
            .iter()
            .zip(&report.u2.values)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect())
            .collect();
        let diff = Control::from_masked_profiles(spec.grid, diff_values, spec.omega1.clone());
        let dev = diff.linf_l2(&spec.sys);
        assert!(dev <= 1e-8, "antisymmetry deviation {dev}");
    }

    #[test]
    fn verify_detects_improvable_pair() {
        let mut spec = base_spec(4, 1.0, 1.0);
        spec.y_t1 = {
            let mut t = vec![0.0; 4];
            t[0] = 3.0;
            t
        };
        // a deliberately poor u1 (zero) against a steering target: the FW
        // vertex probe finds an improvement
        let u1 = spec.zero_follower(1);
        let u2 = spec.zero_follower(2);
        let (gap1, _) = nash_verify(&spec, &u1, &u2, 4, 7).unwrap();
        assert!(gap1 > 1e-6, "expected positive improvement, got {gap1}");
        assert!(matches!(
            nash_verify(&spec, &u1, &u2, 0, 7),
            Err(GameError::NoProbes)
        ));
    }

    #[test]
    fn classify_cases_and_tolerance_contract() {
        let spec = base_spec(4, 1.0, 1.0);
        let u1 = spec.zero_follower(1);
        let u2 = spec.zero_follower(2);
        // y(T) = 0, far from both e_1-type targets
        assert!(matches!(
            classify(&spec, &u1, &u2, 1e-6).unwrap(),
            NashClass::N0
        ));
        // terminal state equal to y_T^1 exactly
        let t = spec.grid.t_final;
        let y0: Vec<f64> = spec
            .y_t1
            .iter()
            .zip(&spec.sys.eigenvalues)
            .map(|(c, w2)| c * (w2 * t).exp())
            .collect();
        let spec2 = GameSpec { y0, ..spec.clone() };
        assert!(matches!(
            classify(&spec2, &u1, &u2, 1e-6).unwrap(),
            NashClass::N1
        ));
        // too-large tolerance rejected
        assert!(matches!(
            classify(&spec, &u1, &u2, spec.target_gap()).unwrap_err(),
            GameError::ClassTolTooLarge { .. }
        ));
    }

    #[test]
    fn explicit_follower_single_mode_time_constant() {
        let mut spec = base_spec(4, 1.0, 1.0);
        // y_T^2 - y_T^1 = e_1
        spec.y_t1 = vec![0.0; 4];
        spec.y_t2 = {
            let mut t = vec![0.0; 4];
            t[0] = 1.0;
            t
        };
        let u2 = explicit_follower(2, &spec).unwrap();
        let norms = u2.cell_norms(&spec.sys);
        for n in &norms {
            assert!((n - spec.m2).abs() <= 1e-12, "cell norm {n}");
        }
        // time-constant: profiles identical across cells
        for j in 1..u2.values.len() {
            for i in 0..spec.sys.n_nodes() {
                assert!(
                    (u2.values[j][i] - u2.values[0][i]).abs() <= 1e-12,
                    "cell {j} node {i}"
                );
            }
        }
    }

    #[test]
    fn explicit_follower_generic_norm_exact() {
        let spec = base_spec(5, 1.0, 0.7);
        let u2 = explicit_follower(2, &spec).unwrap();
        for n in u2.cell_norms(&spec.sys) {
            assert!((n - spec.m2).abs() <= 1e-12);
        }
        assert!((u2.linf_l2(&spec.sys) - spec.m2).abs() <= 1e-12);
        let u1 = explicit_follower(1, &spec).unwrap();
        for n in u1.cell_norms(&spec.sys) {
            assert!((n - spec.m1).abs() <= 1e-12);
        }
    }

    #[test]
    fn n1_consistency_with_steering_oracle() {
        // follower 1 with a large bound steers exactly to y_T^1 (mode-space
        // construction); the pair with the explicit u_2^* passes the check
        let op = DegenerateOperatorSpec::new(1.0, 160, 2.0).unwrap();
        let sys = spectral::eigen_fd(&op, 4).unwrap();
        let grid = TimeGrid::new(0.5, 12).unwrap();
        let omega = IntervalSet::interval(0.25, 0.75).unwrap();
        let omega1 = IntervalSet::interval(0.3, 0.6).unwrap();
        let omega2 = IntervalSet::interval(0.55, 0.7).unwrap();
        let g1 = IntervalSet::interval(0.25, 0.65).unwrap();
        let g2 = IntervalSet::interval(0.5, 0.75).unwrap();
        let leader = Control::zero(&sys, grid, omega.clone());
        let mut y_t1 = vec![0.0; 4];
        y_t1[0] = 0.08;
        y_t1[1] = -0.03;
        let mut y_t2 = vec![0.0; 4];
        y_t2[0] = -0.6;
        let spec = GameSpec::new(
            sys,
            grid,
            omega,
            omega1,
            omega2,
            g1,
            g2,
            1.0,
            1e6,
            0.5,
            vec![0.0; 4],
            y_t1,
            y_t2,
            leader,
        )
        .unwrap();
        // steering control must hit y_T^1 given u_2^* fixed
        let u2 = explicit_follower(2, &spec).unwrap();
        let base = pde::solve_forward(
            &spec.sys,
            &spec.y0,
            &spec.leader,
            &spec.zero_follower(1),
            &u2,
            &spec.grid,
        )
        .unwrap();
        let delta: Vec<f64> = spec
            .y_t1
            .iter()
            .zip(base.terminal_state())
            .map(|(t, b)| t - b)
            .collect();
        let u1 = pde::steer_constant_control(&spec.sys, spec.grid, &spec.omega1, &delta).unwrap();
        let rep = n1_consistency_check(&spec, &u1, 1e-8, 40, 3).unwrap();
        assert!(
            rep.precondition_met,
            "steering error {}",
            rep.steering_error
        );
        let gaps = rep.nash_gaps.unwrap();
        assert!(gaps.0 <= 1e-6 && gaps.1 <= 1e-6, "gaps {gaps:?}");
        // unmet precondition branch: zero candidate control
        let rep2 = n1_consistency_check(&spec, &spec.zero_follower(1), 1e-8, 10, 3).unwrap();
        assert!(!rep2.precondition_met);
        assert!(rep2.nash_gaps.is_none());
    }

    #[test]
    fn cost_convexity_in_own_control() {
        let spec = base_spec(4, 1.0, 1.0);
        let mut rng = Rng::new(17);
        let mask = SpatialMask::membership(&spec.sys, &spec.omega1);
        let mk = |rng: &mut Rng| {
            let values: Vec<Vec<f64>> = (0..spec.grid.n_steps)
                .map(|_| {
                    let raw = spec.sys.synthesize(&rng.normal_vec(4));
                    let masked = mask.apply(&raw);
                    let norm = l2_space(&spec.sys, &masked);
                    let target = rng.next_f64() * spec.m1;
                    masked
                        .iter()
                        .map(|x| target * x / norm.max(1e-14))
                        .collect()
                })
                .collect();
            Control::from_masked_profiles(spec.grid, values, spec.omega1.clone())
        };
        let other = spec.zero_follower(2);
        for _ in 0..5 {
            let u = mk(&mut rng);
            let v = mk(&mut rng);
            for lambda in [0.25, 0.5, 0.75] {
                let defect = convexity_defect(1, &spec, &u, &v, &other, lambda).unwrap();
                assert!(defect <= 1e-10, "convexity defect {defect}");
            }
        }
    }

    #[test]
    fn nash_solve_deterministic() {
        let spec = base_spec(4, 0.6, 0.8);
        let opts = NashOptions {
            max_rounds: 8,
            verify_probes: 10,
            ..NashOptions::default()
        };
        let a = nash_solve(&spec, &opts).unwrap();
        let b = nash_solve(&spec, &opts).unwrap();
        assert_eq!(a.u1.values, b.u1.values);
        assert_eq!(a.u2.values, b.u2.values);
        assert_eq!(a.nash_gaps, b.nash_gaps);
    }
}
