//! Leader norm-optimal control through the dual variational problem.
//!
//! The leader steers y(T) to zero with minimal L-inf(0,T; L2) norm while the
//! followers play their explicit (leader-independent) strategies. On the
//! truncated basis with piecewise-constant controls the primal/dual pair is
//! finite-dimensional and exactly dual:
//!
//!   V = min_z  1/2 (sum_j ||chi_w int_cell z dt||)^2 + <y_0, z(0)>
//!              + sum_i int <chi_wi u_i^*, z> dt,
//!
//! minimized over adjoint terminal data z_T in the mode span. The per-cell
//! integrals of the exponential adjoint are closed-form, so the recovered
//! leader
//!
//!   g^*(t_j) = L chi_w zeta_j / ||chi_w zeta_j||,   L = sum_j ||chi_w zeta_j||
//!
//! has constant cell norm L and satisfies the reach-zero identity up to the
//! optimizer tolerance. The nonsmooth sum of norms is minimized by damped
//! Newton on the epsilon-smoothed objective with a decreasing epsilon
//! schedule and warm starts; V(eps) is monotone along the schedule. An
//! independent primal estimate (penalty continuation with an annealed
//! softmax surrogate of the max) cross-validates V = -1/2 N^2.

use serde::Serialize;
use thiserror::Error;

use crate::geometry::SpaceSet;
use crate::linalg::{self, LinalgError};
use crate::pde::{self, cell_decay_integrals, l2_modes, Control, PdeError, SpatialMask, TimeGrid};
use crate::spectral::{EigenSystem, SpectralError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NormOptError {
    #[error("dual truncation k = {k} exceeds the system truncation {max}")]
    DualTruncation { k: usize, max: usize },
    #[error("descent stagnated above tolerance: |grad| = {grad:.3e} at V = {v:.6e}")]
    Stagnation { grad: f64, v: f64 },
    #[error("delta must be positive (got {0}); the discrete solver cannot hit zero exactly")]
    DeltaContract(f64),
    #[error("singular normalization: ||chi_w zeta(t)|| < 1e-14 on time cell {cell} in the nonzero branch")]
    SingularNormalization { cell: usize },
    #[error("primal solve infeasible: terminal residual {residual:.3e} > delta = {delta:.3e}")]
    Infeasible { residual: f64, delta: f64 },
    #[error("empty epsilon schedule")]
    EmptySchedule,
    #[error(transparent)]
    Pde(#[from] PdeError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Data of the leader's problem: system, grid, leader region, initial state.
#[derive(Debug, Clone)]
pub struct NormOptProblem {
    pub sys: EigenSystem,
    pub grid: TimeGrid,
    pub omega: SpaceSet,
    pub y0: Vec<f64>,
}

/// Terminal datum of the adjoint, spanning the discrete core of the
/// observation space.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualVariable {
    pub z_t_modes: Vec<f64>,
}

/// Precomputed quadratic structure of the dual objective.
struct DualMachine {
    /// B_j with (B_j)_{km} = d_{k,j} d_{m,j} G_{km}; n_j(z)^2 = z' B_j z.
    cell_quadratics: Vec<Vec<Vec<f64>>>,
    /// linear term b_k = y0_k e^{-w_k^2 T} + sum_j d_{k,j} <u1_j + u2_j, e_k>.
    linear: Vec<f64>,
    /// d_{k,j} integrals for leader recovery.
    d: Vec<Vec<f64>>,
    /// masked eigenfunctions (binary chi_omega e_k).
    masked_basis: Vec<Vec<f64>>,
    /// Gram of the masked basis.
    gram: Vec<Vec<f64>>,
    k: usize,
    n_cells: usize,
}

impl DualMachine {
    fn new(
        prob: &NormOptProblem,
        u1: &Control,
        u2: &Control,
        k: usize,
    ) -> Result<DualMachine, NormOptError> {
        let sys = &prob.sys;
        if k > sys.n_modes() {
            return Err(NormOptError::DualTruncation {
                k,
                max: sys.n_modes(),
            });
        }
        if !prob.grid.same_as(&u1.grid) || !prob.grid.same_as(&u2.grid) {
            return Err(PdeError::GridMismatch("followers vs problem grid".into()).into());
        }
        let mask = SpatialMask::membership(sys, &prob.omega);
        let masked_basis: Vec<Vec<f64>> = sys.eigenfunctions[..k]
            .iter()
            .map(|e| mask.apply(e))
            .collect();
        let mut gram = vec![vec![0.0; k]; k];
        for a in 0..k {
            for b in a..k {
                let s = sys.inner(&masked_basis[a], &masked_basis[b]);
                gram[a][b] = s;
                gram[b][a] = s;
            }
        }
        let d_full = cell_decay_integrals(sys, &prob.grid);
        let d: Vec<Vec<f64>> = d_full[..k].to_vec();
        let n_cells = prob.grid.n_steps;
        let mut cell_quadratics = Vec::with_capacity(n_cells);
        for j in 0..n_cells {
            let mut bj = vec![vec![0.0; k]; k];
            for a in 0..k {
                for b in 0..k {
                    bj[a][b] = d[a][j] * d[b][j] * gram[a][b];
                }
            }
            cell_quadratics.push(bj);
        }
        let mut linear = vec![0.0; k];
        for kk in 0..k {
            linear[kk] = prob.y0[kk] * (-sys.eigenvalues[kk] * prob.grid.t_final).exp();
        }
        let n = sys.n_nodes();
        let mut source = vec![0.0; n];
        for j in 0..n_cells {
            for i in 0..n {
                source[i] = u1.values[j][i] + u2.values[j][i];
            }
            let f = sys.project(&source);
            for kk in 0..k {
                linear[kk] += f[kk] * d[kk][j];
            }
        }
        Ok(DualMachine {
            cell_quadratics,
            linear,
            d,
            masked_basis,
            gram,
            k,
            n_cells,
        })
    }

    fn cell_norm_sq(&self, j: usize, z: &[f64]) -> f64 {
        let bj = &self.cell_quadratics[j];
        let mut s = 0.0;
        for a in 0..self.k {
            let mut row = 0.0;
            for b in 0..self.k {
                row += bj[a][b] * z[b];
            }
            s += z[a] * row;
        }
        s.max(0.0)
    }

    fn bj_times(&self, j: usize, z: &[f64]) -> Vec<f64> {
        let bj = &self.cell_quadratics[j];
        (0..self.k)
            .map(|a| (0..self.k).map(|b| bj[a][b] * z[b]).sum())
            .collect()
    }

    /// Unsmoothed objective 1/2 Q(z)^2 + <b, z> with Q = sum_j n_j.
    fn objective(&self, z: &[f64]) -> f64 {
        let q: f64 = (0..self.n_cells)
            .map(|j| self.cell_norm_sq(j, z).sqrt())
            .sum();
        0.5 * q * q + linalg::dot(&self.linear, z)
    }

    /// Smoothed objective, gradient, Hessian at `z`.
    fn smoothed(&self, z: &[f64], eps: f64) -> (f64, Vec<f64>, Vec<Vec<f64>>) {
        let k = self.k;
        let mut s_total = 0.0;
        let mut grad_q = vec![0.0; k];
        let mut hess_q = vec![vec![0.0; k]; k];
        let mut per_cell: Vec<(f64, Vec<f64>)> = Vec::with_capacity(self.n_cells);
        for j in 0..self.n_cells {
            let bz = self.bj_times(j, z);
            let s = (self.cell_norm_sq(j, z) + eps * eps).sqrt();
            s_total += s;
            for a in 0..k {
                grad_q[a] += bz[a] / s;
            }
            per_cell.push((s, bz));
        }
        for (j, (s, bz)) in per_cell.iter().enumerate() {
            let bj = &self.cell_quadratics[j];
            for a in 0..k {
                for b in 0..k {
                    hess_q[a][b] += bj[a][b] / s - bz[a] * bz[b] / (s * s * s);
                }
            }
        }
        let value = 0.5 * s_total * s_total + linalg::dot(&self.linear, z);
        let grad: Vec<f64> = (0..k)
            .map(|a| s_total * grad_q[a] + self.linear[a])
            .collect();
        let mut hess = vec![vec![0.0; k]; k];
        for a in 0..k {
            for b in 0..k {
                hess[a][b] = grad_q[a] * grad_q[b] + s_total * hess_q[a][b];
            }
        }
        (value, grad, hess)
    }

    /// chi_omega zeta_j = per-cell integrated masked adjoint profile.
    fn masked_cell_profile(&self, z: &[f64], j: usize, n_nodes: usize) -> Vec<f64> {
        let mut p = vec![0.0; n_nodes];
        for kk in 0..self.k {
            let c = z[kk] * self.d[kk][j];
            if c == 0.0 {
                continue;
            }
            for i in 0..n_nodes {
                p[i] += c * self.masked_basis[kk][i];
            }
        }
        p
    }
}

/// Value of the dual functional at `z` given the fixed followers.
pub fn dual_j(
    prob: &NormOptProblem,
    z: &DualVariable,
    u1: &Control,
    u2: &Control,
) -> Result<f64, NormOptError> {
    let machine = DualMachine::new(prob, u1, u2, z.z_t_modes.len())?;
    Ok(machine.objective(&z.z_t_modes))
}

#[derive(Debug, Clone, Serialize)]
pub struct DualStage {
    pub eps: f64,
    pub value: f64,
    pub grad_norm: f64,
    pub newton_steps: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct DualSolution {
    pub z_star: DualVariable,
    /// V = dual objective at the unsmoothed functional.
    pub v: f64,
    pub zero_case: bool,
    pub stages: Vec<DualStage>,
    pub grad_inf_norm: f64,
}

pub fn default_eps_schedule() -> Vec<f64> {
    (2..=8).map(|p| 10f64.powi(-p)).collect()
}

/// Minimizes the dual functional over z_T in the first `k` modes by damped
/// Newton with epsilon-smoothing continuation and warm starts. Declares the
/// zero branch when ||z*|| <= tol.
pub fn dual_minimize(
    prob: &NormOptProblem,
    u1: &Control,
    u2: &Control,
    k: usize,
    eps_schedule: &[f64],
    tol: f64,
) -> Result<DualSolution, NormOptError> {
    if eps_schedule.is_empty() {
        return Err(NormOptError::EmptySchedule);
    }
    let machine = DualMachine::new(prob, u1, u2, k)?;
    let mut z = vec![0.0; k];
    let mut stages = Vec::with_capacity(eps_schedule.len());
    let mut last_grad = 0.0;
    for &eps in eps_schedule {
        let mut newton_steps = 0;
        loop {
            let (value, grad, hess) = machine.smoothed(&z, eps);
            let gnorm = grad.iter().fold(0.0f64, |a, g| a.max(g.abs()));
            last_grad = gnorm;
            if gnorm <= tol * (1.0 + value.abs()) || newton_steps >= 200 {
                stages.push(DualStage {
                    eps,
                    value,
                    grad_norm: gnorm,
                    newton_steps,
                });
                break;
            }
            newton_steps += 1;
            // ridge keeps the PSD Hessian invertible along flat directions
            let mut h = hess.clone();
            let trace: f64 = (0..machine.k).map(|i| hess[i][i]).sum();
            let ridge = 1e-12 * (1.0 + trace.abs());
            for (i, row) in h.iter_mut().enumerate() {
                row[i] += ridge;
                let _ = i;
            }
            let neg_grad: Vec<f64> = grad.iter().map(|g| -g).collect();
            let step = match linalg::solve_dense(&h, &neg_grad) {
                Ok(s) => s,
                Err(_) => neg_grad.clone(),
            };
            // backtracking on the smoothed objective
            let slope = linalg::dot(&grad, &step);
            let dir = if slope < 0.0 { step } else { neg_grad };
            let slope = linalg::dot(&grad, &dir);
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..60 {
                let cand: Vec<f64> = z.iter().zip(&dir).map(|(a, s)| a + t * s).collect();
                let (v_new, _, _) = machine.smoothed(&cand, eps);
                if v_new <= value + 1e-4 * t * slope {
                    z = cand;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                if gnorm <= 1e3 * tol * (1.0 + value.abs()) {
                    stages.push(DualStage {
                        eps,
                        value,
                        grad_norm: gnorm,
                        newton_steps,
                    });
                    break;
                }
                return Err(NormOptError::Stagnation {
                    grad: gnorm,
                    v: machine.objective(&z),
                });
            }
        }
    }
    let v = machine.objective(&z);
    let zero_case = l2_modes(&z) <= tol;
    Ok(DualSolution {
        z_star: DualVariable { z_t_modes: z },
        v,
        zero_case,
        stages,
        grad_inf_norm: last_grad,
    })
}

/// Recovered leader: zero in the zero branch, otherwise the constant-norm
/// profile g_j = L chi_w zeta_j / ||chi_w zeta_j|| with L the L1(0,T; L2)
/// norm of the masked adjoint.
pub fn recover_leader(
    prob: &NormOptProblem,
    sol: &DualSolution,
    u1: &Control,
    u2: &Control,
) -> Result<Control, NormOptError> {
    if sol.zero_case {
        return Ok(Control::zero(&prob.sys, prob.grid, prob.omega.clone()));
    }
    let k = sol.z_star.z_t_modes.len();
    let machine = DualMachine::new(prob, u1, u2, k)?;
    let z = &sol.z_star.z_t_modes;
    let n = prob.sys.n_nodes();
    let mut norms = Vec::with_capacity(machine.n_cells);
    let mut profiles = Vec::with_capacity(machine.n_cells);
    for j in 0..machine.n_cells {
        let p = machine.masked_cell_profile(z, j, n);
        let norm = pde::l2_space(&prob.sys, &p);
        if norm < 1e-14 {
            return Err(NormOptError::SingularNormalization { cell: j });
        }
        norms.push(norm);
        profiles.push(p);
    }
    let l1_norm: f64 = norms.iter().sum();
    let values: Vec<Vec<f64>> = profiles
        .into_iter()
        .zip(&norms)
        .map(|(p, nj)| p.iter().map(|x| l1_norm * x / nj).collect())
        .collect();
    Ok(Control::from_masked_profiles(
        prob.grid,
        values,
        prob.omega.clone(),
    ))
}

/// L1(0,T; L2) norm of the masked adjoint generated by `z`, with the same
/// per-cell-exact quadrature used by the dual objective and the recovery
/// formula.
pub fn masked_adjoint_l1_norm(
    prob: &NormOptProblem,
    z: &DualVariable,
    u1: &Control,
    u2: &Control,
) -> Result<f64, NormOptError> {
    let machine = DualMachine::new(prob, u1, u2, z.z_t_modes.len())?;
    Ok((0..machine.n_cells)
        .map(|j| machine.cell_norm_sq(j, &z.z_t_modes).sqrt())
        .sum())
}

#[derive(Debug, Clone, Serialize)]
pub struct PrimalSolution {
    pub n_primal: f64,
    #[serde(skip)]
    pub leader: Control,
    pub terminal_residual: f64,
    pub stages: usize,
}

#[derive(Debug, Clone)]
pub struct PenaltySchedule {
    pub outer_stages: usize,
    pub inner_iters: usize,
    pub rho0: f64,
    pub rho_factor: f64,
}

impl Default for PenaltySchedule {
    fn default() -> Self {
        PenaltySchedule {
            outer_stages: 10,
            inner_iters: 40,
            rho0: 1e2,
            rho_factor: 10.0,
        }
    }
}

/// Lower Cholesky factor of an SPD matrix, with a tiny diagonal lift for
/// Gram matrices of nearly dependent masked modes.
fn cholesky(g: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, NormOptError> {
    let k = g.len();
    let trace: f64 = (0..k).map(|i| g[i][i]).sum();
    let lift = 1e-14 * trace.max(1e-300);
    let mut l = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..=i {
            let mut s = g[i][j];
            for q in 0..j {
                s -= l[i][q] * l[j][q];
            }
            if i == j {
                let d = s + lift;
                if d <= 0.0 {
                    return Err(LinalgError::SingularSystem(d, i).into());
                }
                l[i][i] = d.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    Ok(l)
}

fn backward_solve_transpose(l: &[Vec<f64>], rhs: &[f64]) -> Vec<f64> {
    let k = rhs.len();
    let mut x = vec![0.0; k];
    for i in (0..k).rev() {
        let mut s = rhs[i];
        for j in i + 1..k {
            s -= l[j][i] * x[j];
        }
        x[i] = s / l[i][i];
    }
    x
}

/// Independent primal estimate of N: minimizes the max-over-cells leader
/// norm subject to ||y(T)|| <= delta by quadratic-penalty continuation with
/// an annealed softmax surrogate of the max; each penalized subproblem is
/// solved by damped Newton. The leader is parametrized in Cholesky
/// coordinates of the masked Gram (q = L' p), which makes the cell norms
/// euclidean. Feasibility is anchored by minimum-energy steering
/// corrections (exact up to iterative refinement) at initialization and
/// after every stage, and the best feasible iterate is kept.
pub fn primal_norm(
    prob: &NormOptProblem,
    u1: &Control,
    u2: &Control,
    k: usize,
    delta: f64,
    schedule: &PenaltySchedule,
) -> Result<PrimalSolution, NormOptError> {
    if delta <= 0.0 {
        return Err(NormOptError::DeltaContract(delta));
    }
    let machine = DualMachine::new(prob, u1, u2, k)?;
    let b = machine.linear.clone();
    let chol = cholesky(&machine.gram)?;
    let n_cells = machine.n_cells;
    // terminal map in q coordinates: y_T = b + sum_j d_.j o (L q_j)
    let terminal = |q: &[Vec<f64>]| -> Vec<f64> {
        let mut y = b.clone();
        for (j, qj) in q.iter().enumerate() {
            for a in 0..k {
                let mut lq = 0.0;
                for bb in 0..=a {
                    lq += chol[a][bb] * qj[bb];
                }
                y[a] += machine.d[a][j] * lq;
            }
        }
        y
    };
    // minimum-energy steering: per-cell corrections q_j += D_j L' lambda
    // with (sum_j B_j) lambda = defect, plus iterative refinement
    let hum_gramian: Vec<Vec<f64>> = {
        let mut m = vec![vec![0.0; k]; k];
        for j in 0..n_cells {
            for a in 0..k {
                for bb in 0..k {
                    m[a][bb] += machine.cell_quadratics[j][a][bb];
                }
            }
        }
        m
    };
    let steer_correction = |defect: &[f64]| -> Result<Vec<Vec<f64>>, NormOptError> {
        // lambda: K coefficients; correction_j = (L' D_j) lambda
        let mut lambda = linalg::solve_dense(&hum_gramian, defect)?;
        for _ in 0..2 {
            // refinement on the residual
            let mut resid = defect.to_vec();
            for a in 0..k {
                for bb in 0..k {
                    resid[a] -= hum_gramian[a][bb] * lambda[bb];
                }
            }
            if let Ok(upd) = linalg::solve_dense(&hum_gramian, &resid) {
                for a in 0..k {
                    lambda[a] += upd[a];
                }
            }
        }
        let mut corr = Vec::with_capacity(n_cells);
        for j in 0..n_cells {
            // (L' D_j lambda)_m = sum_{a >= m} L_am d_aj lambda_a
            let cj: Vec<f64> = (0..k)
                .map(|m| {
                    (m..k)
                        .map(|a| chol[a][m] * machine.d[a][j] * lambda[a])
                        .sum()
                })
                .collect();
            corr.push(cj);
        }
        Ok(corr)
    };
    let mut q: Vec<Vec<f64>> = vec![vec![0.0; k]; n_cells];
    let init_corr = steer_correction(&b.iter().map(|x| -x).collect::<Vec<_>>())?;
    for (qj, cj) in q.iter_mut().zip(&init_corr) {
        for a in 0..k {
            qj[a] += cj[a];
        }
    }
    let b_scale = l2_modes(&b).max(1e-300);
    let mut rho = schedule.rho0 / (b_scale * b_scale);
    let n_init = q.iter().map(|qj| l2_modes(qj)).fold(0.0, f64::max);
    let mut tau = (n_init / 4.0).max(1e-14);
    let delta_target = 0.5 * delta;
    // best feasible iterate seen (the init is feasible by construction)
    let mut best_q = q.clone();
    let mut best_norm = n_init;
    let dim = n_cells * k;
    let value_of = |q: &[Vec<f64>], tau: f64, rho: f64| -> f64 {
        let norms: Vec<f64> = q.iter().map(|qj| l2_modes(qj)).collect();
        let nmax = norms.iter().fold(0.0f64, |a, x| a.max(*x));
        let wsum: f64 = norms.iter().map(|x| ((x - nmax) / tau).exp()).sum();
        let viol = (l2_modes(&terminal(q)) - delta_target).max(0.0);
        tau * wsum.ln() + nmax + 0.5 * rho * viol * viol
    };
    // sensitivity blocks (J_j)_{a,m} = d_{a,j} L_{a,m}
    let sens = |j: usize, a: usize, m: usize| -> f64 {
        if m <= a {
            machine.d[a][j] * chol[a][m]
        } else {
            0.0
        }
    };
    for _stage in 0..schedule.outer_stages {
        for _ in 0..schedule.inner_iters {
            let norms: Vec<f64> = q.iter().map(|qj| l2_modes(qj).max(1e-300)).collect();
            let nmax = norms.iter().fold(0.0f64, |a, x| a.max(*x));
            let sigma: Vec<f64> = {
                let raw: Vec<f64> = norms.iter().map(|x| ((x - nmax) / tau).exp()).collect();
                let sum: f64 = raw.iter().sum();
                raw.into_iter().map(|w| w / sum).collect()
            };
            let y_t = terminal(&q);
            let c = l2_modes(&y_t).max(1e-300);
            let viol = (c - delta_target).max(0.0);
            let value = {
                let wsum: f64 = norms.iter().map(|x| ((x - nmax) / tau).exp()).sum();
                tau * wsum.ln() + nmax + 0.5 * rho * viol * viol
            };
            // gradient
            let y_hat: Vec<f64> = y_t.iter().map(|x| x / c).collect();
            // per-cell penalty direction P_j = J_j' y_hat
            let pen_dir: Vec<Vec<f64>> = (0..n_cells)
                .map(|j| {
                    (0..k)
                        .map(|m| (m..k).map(|a| sens(j, a, m) * y_hat[a]).sum())
                        .collect()
                })
                .collect();
            let mut grad = vec![0.0; dim];
            for j in 0..n_cells {
                for m in 0..k {
                    let mut g = sigma[j] * q[j][m] / norms[j];
                    if viol > 0.0 {
                        g += rho * viol * pen_dir[j][m];
                    }
                    grad[j * k + m] = g;
                }
            }
            let gnorm = l2_modes(&grad);
            if gnorm < 1e-11 * (1.0 + value.abs()) {
                break;
            }
            // Hessian: softmax part + penalty part
            let mut h = vec![vec![0.0; dim]; dim];
            for j in 0..n_cells {
                let s_j: Vec<f64> = q[j].iter().map(|x| x / norms[j]).collect();
                for m in 0..k {
                    for mm in 0..k {
                        let iden = if m == mm { 1.0 } else { 0.0 };
                        h[j * k + m][j * k + mm] += sigma[j] * (iden - s_j[m] * s_j[mm]) / norms[j];
                    }
                }
                for l in 0..n_cells {
                    let s_l: Vec<f64> = q[l].iter().map(|x| x / norms[l]).collect();
                    let coef = if j == l {
                        (sigma[j] - sigma[j] * sigma[l]) / tau
                    } else {
                        -sigma[j] * sigma[l] / tau
                    };
                    if coef != 0.0 {
                        for m in 0..k {
                            for mm in 0..k {
                                h[j * k + m][l * k + mm] += coef * s_j[m] * s_l[mm];
                            }
                        }
                    }
                }
            }
            if viol > 0.0 {
                // rho (P_j)(P_l)' + rho viol [J_j'(I - yy')J_l]/c
                for j in 0..n_cells {
                    for l in 0..n_cells {
                        for m in 0..k {
                            for mm in 0..k {
                                let mut cross = 0.0;
                                // J_j' J_l term: sum_a sens(j,a,m) sens(l,a,mm)
                                let hi = k;
                                for a in m.max(mm)..hi {
                                    cross += sens(j, a, m) * sens(l, a, mm);
                                }
                                let proj = cross - pen_dir[j][m] * pen_dir[l][mm];
                                h[j * k + m][l * k + mm] +=
                                    rho * (pen_dir[j][m] * pen_dir[l][mm] + viol * proj / c);
                            }
                        }
                    }
                }
            }
            let trace: f64 = (0..dim).map(|i| h[i][i]).sum();
            let ridge = 1e-12 * (1.0 + trace.abs());
            for i in 0..dim {
                h[i][i] += ridge;
            }
            let neg: Vec<f64> = grad.iter().map(|g| -g).collect();
            let dir = match linalg::solve_dense(&h, &neg) {
                Ok(d) => {
                    if linalg::dot(&d, &grad) < 0.0 {
                        d
                    } else {
                        neg.clone()
                    }
                }
                Err(_) => neg.clone(),
            };
            let slope = linalg::dot(&dir, &grad);
            let mut t = 1.0;
            let mut improved = false;
            for _ in 0..60 {
                let cand: Vec<Vec<f64>> = (0..n_cells)
                    .map(|j| (0..k).map(|m| q[j][m] + t * dir[j * k + m]).collect())
                    .collect();
                let cval = value_of(&cand, tau, rho);
                if cval <= value + 1e-4 * t * slope {
                    q = cand;
                    improved = true;
                    break;
                }
                t *= 0.5;
            }
            if !improved {
                break;
            }
        }
        // exact feasibility restoration and best-iterate tracking
        let y_t = terminal(&q);
        if let Ok(corr) = steer_correction(&y_t.iter().map(|x| -x).collect::<Vec<_>>()) {
            for (qj, cj) in q.iter_mut().zip(&corr) {
                for a in 0..k {
                    qj[a] += cj[a];
                }
            }
        }
        let restored_resid = l2_modes(&terminal(&q));
        let restored_norm = q.iter().map(|qj| l2_modes(qj)).fold(0.0, f64::max);
        if restored_resid <= delta && restored_norm < best_norm {
            best_norm = restored_norm;
            best_q = q.clone();
        }
        rho *= schedule.rho_factor;
        tau = (tau / 2.0).max(1e-14);
    }
    let q = best_q;
    let y_t = terminal(&q);
    let residual = l2_modes(&y_t);
    if residual > delta {
        return Err(NormOptError::Infeasible { residual, delta });
    }
    // materialize the control and its exact norm
    let n = prob.sys.n_nodes();
    let values: Vec<Vec<f64>> = q
        .iter()
        .map(|qj| {
            let pj = backward_solve_transpose(&chol, qj);
            let mut prof = vec![0.0; n];
            for (kk, basis) in machine.masked_basis.iter().enumerate() {
                if pj[kk] == 0.0 {
                    continue;
                }
                for i in 0..n {
                    prof[i] += pj[kk] * basis[i];
                }
            }
            prof
        })
        .collect();
    let leader = Control::from_masked_profiles(prob.grid, values, prob.omega.clone());
    let n_primal = leader.linf_l2(&prob.sys);
    Ok(PrimalSolution {
        n_primal,
        leader,
        terminal_residual: residual,
        stages: schedule.outer_stages,
    })
}

/// Relative duality gap |V + 1/2 N^2| / max(1/2 N^2, 1e-12); the zero
/// instance reports 0.
pub fn duality_gap(v: f64, n_primal: f64) -> f64 {
    let half_n2 = 0.5 * n_primal * n_primal;
    if half_n2 <= 1e-12 && v.abs() <= 1e-12 {
        return 0.0;
    }
    (v + half_n2).abs() / half_n2.max(1e-12)
}

/// ||y(T; y0, g, u1, u2)|| for a candidate leader.
pub fn reach_zero_check(
    prob: &NormOptProblem,
    g: &Control,
    u1: &Control,
    u2: &Control,
) -> Result<f64, NormOptError> {
    let traj = pde::solve_forward(&prob.sys, &prob.y0, g, u1, u2, &prob.grid)?;
    Ok(l2_modes(traj.terminal_state()))
}

/// Weak-duality defect J(z) + 1/2 ||g||^2 + delta ||z_T||, which must be
/// nonnegative for every dual probe z and feasible primal g (pairing
/// identity plus Hoelder, with the explicit delta correction).
pub fn weak_duality_defect(
    prob: &NormOptProblem,
    z: &DualVariable,
    u1: &Control,
    u2: &Control,
    g: &Control,
    delta: f64,
) -> Result<f64, NormOptError> {
    let j = dual_j(prob, z, u1, u2)?;
    let g_norm = g.linf_l2(&prob.sys);
    Ok(j + 0.5 * g_norm * g_norm + delta * l2_modes(&z.z_t_modes))
}

/// Full report of the leader problem.
#[derive(Debug, Clone, Serialize)]
pub struct NormOptReport {
    pub v: f64,
    pub n_dual: f64,
    pub n_primal: f64,
    pub duality_gap: f64,
    pub zero_case: bool,
    pub reach_zero_residual: f64,
    pub leader_cell_norms: Vec<f64>,
    pub z_star: DualVariable,
    pub stages: Vec<DualStage>,
    #[serde(skip)]
    pub g_star: Control,
}

#[derive(Debug, Clone)]
pub struct NormOptOptions {
    pub k_dual: usize,
    pub eps_schedule: Vec<f64>,
    pub tol: f64,
    /// Terminal tolerance; None means 1e-8 max(||y0||, 1).
    pub delta: Option<f64>,
    pub penalty: PenaltySchedule,
}

impl NormOptOptions {
    pub fn with_k(k_dual: usize) -> NormOptOptions {
        NormOptOptions {
            k_dual,
            eps_schedule: default_eps_schedule(),
            tol: 1e-9,
            delta: None,
            penalty: PenaltySchedule::default(),
        }
    }
}

/// One round of the exploratory fixed-point alternation g -> Nash -> g:
/// given the current leader, the followers play their alternating best
/// responses, then the dual problem is re-solved against those followers.
/// Off by default everywhere; the g-independent explicit followers are the
/// production route.
#[derive(Debug, Clone, Serialize)]
pub struct AlternationRound {
    pub round: usize,
    pub n_dual: f64,
    pub followers_converged: bool,
}

pub fn alternation_explore(
    game_spec: &crate::game::GameSpec,
    prob: &NormOptProblem,
    opts: &NormOptOptions,
    nash_opts: &crate::game::NashOptions,
    rounds: usize,
) -> Result<(Vec<AlternationRound>, Control), NormOptError> {
    let mut spec = game_spec.clone();
    let mut leader = spec.leader.clone();
    let mut history = Vec::with_capacity(rounds);
    for round in 0..rounds {
        let report = crate::game::nash_solve(&spec, nash_opts)
            .map_err(|e| NormOptError::Pde(PdeError::GridMismatch(e.to_string())))?;
        let sol = dual_minimize(
            prob,
            &report.u1,
            &report.u2,
            opts.k_dual,
            &opts.eps_schedule,
            opts.tol,
        )?;
        leader = recover_leader(prob, &sol, &report.u1, &report.u2)?;
        // keep the leader admissible for the next followers' round
        let norm = leader.linf_l2(&prob.sys);
        if norm > spec.m0 && spec.m0 > 0.0 {
            leader = leader.scale(spec.m0 / norm);
        }
        spec.leader = leader.clone();
        history.push(AlternationRound {
            round,
            n_dual: if sol.v <= 0.0 {
                (-2.0 * sol.v).sqrt()
            } else {
                0.0
            },
            followers_converged: report.converged,
        });
    }
    Ok((history, leader))
}

/// Runs the whole pipeline: dual minimization, leader recovery, independent
/// primal estimate, duality gap, and the reach-zero diagnostic.
pub fn solve_full(
    prob: &NormOptProblem,
    u1: &Control,
    u2: &Control,
    opts: &NormOptOptions,
) -> Result<NormOptReport, NormOptError> {
    let delta = opts.delta.unwrap_or(1e-8 * l2_modes(&prob.y0).max(1.0));
    let sol = dual_minimize(prob, u1, u2, opts.k_dual, &opts.eps_schedule, opts.tol)?;
    let g_star = recover_leader(prob, &sol, u1, u2)?;
    let primal = primal_norm(prob, u1, u2, opts.k_dual, delta, &opts.penalty)?;
    let reach = reach_zero_check(prob, &g_star, u1, u2)?;
    let n_dual = if sol.v <= 0.0 {
        (-2.0 * sol.v).sqrt()
    } else {
        0.0
    };
    Ok(NormOptReport {
        v: sol.v,
        n_dual,
        n_primal: primal.n_primal,
        duality_gap: duality_gap(sol.v, primal.n_primal),
        zero_case: sol.zero_case,
        reach_zero_residual: reach,
        leader_cell_norms: g_star.cell_norms(&prob.sys),
        z_star: sol.z_star.clone(),
        stages: sol.stages.clone(),
        g_star,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::IntervalSet;
    use crate::rng::Rng;
    use crate::spectral::{self, DegenerateOperatorSpec};

    fn one_mode_problem() -> (NormOptProblem, Control, Control) {
        let op = DegenerateOperatorSpec::new(1.0, 200, 2.0).unwrap();
        let sys = spectral::eigen_fd(&op, 1).unwrap();
        let grid = TimeGrid::new(0.5, 20).unwrap();
        let omega = IntervalSet::interval(0.0, 1.0).unwrap();
        let u1 = Control::zero(&sys, grid, omega.clone());
        let u2 = Control::zero(&sys, grid, omega.clone());
        (
            NormOptProblem {
                sys,
                grid,
                omega,
                y0: vec![1.0],
            },
            u1,
            u2,
        )
    }

    fn one_mode_beta_gamma(prob: &NormOptProblem) -> (f64, f64) {
        let w2 = prob.sys.eigenvalues[0];
        let t = prob.grid.t_final;
        let beta = (1.0 - (-w2 * t).exp()) / w2;
        let gamma = (-w2 * t).exp();
        (beta, gamma)
    }

    #[test]
    fn dual_j_examples() {
        let (prob, u1, u2) = one_mode_problem();
        // z = 0 -> J = 0
        let z0 = DualVariable {
            z_t_modes: vec![0.0],
        };
        assert_eq!(dual_j(&prob, &z0, &u1, &u2).unwrap(), 0.0);
        // y0 = 0: J = 1/2 ||chi z||_{L1L2}^2 >= 0
        let prob_zero = NormOptProblem {
            y0: vec![0.0],
            ..prob.clone()
        };
        let z = DualVariable {
            z_t_modes: vec![0.7],
        };
        let j = dual_j(&prob_zero, &z, &u1, &u2).unwrap();
        assert!(j > 0.0);
        // one-mode closed form: J(c) = 1/2 c^2 beta^2 + c gamma
        let (beta, gamma) = one_mode_beta_gamma(&prob);
        for c in [-2.0, -0.5, 0.3, 1.7] {
            let z = DualVariable { z_t_modes: vec![c] };
            let j = dual_j(&prob, &z, &u1, &u2).unwrap();
            let expected = 0.5 * c * c * beta * beta + c * gamma;
            assert!(
                (j - expected).abs() <= 1e-10 * expected.abs().max(1.0),
                "c = {c}: {j} vs {expected}"
            );
        }
    }

    #[test]
    fn dual_minimize_zero_instance() {
        let (prob, u1, u2) = one_mode_problem();
        let prob_zero = NormOptProblem {
            y0: vec![0.0],
            ..prob
        };
        let sol = dual_minimize(&prob_zero, &u1, &u2, 1, &default_eps_schedule(), 1e-9).unwrap();
        assert!(sol.zero_case);
        assert!(sol.v.abs() <= 1e-12);
        let g = recover_leader(&prob_zero, &sol, &u1, &u2).unwrap();
        assert_eq!(g.linf_l2(&prob_zero.sys), 0.0);
        // zero instance reports zero gap (the 0/0 branch)
        assert_eq!(duality_gap(sol.v, g.linf_l2(&prob_zero.sys)), 0.0);
    }

    #[test]
    fn dual_minimize_one_mode_closed_form() {
        let (prob, u1, u2) = one_mode_problem();
        let (beta, gamma) = one_mode_beta_gamma(&prob);
        let sol = dual_minimize(&prob, &u1, &u2, 1, &default_eps_schedule(), 1e-11).unwrap();
        let c_expected = -gamma / (beta * beta);
        let v_expected = -0.5 * gamma * gamma / (beta * beta);
        assert!(
            (sol.z_star.z_t_modes[0] - c_expected).abs() <= 1e-6 * c_expected.abs(),
            "c* = {} vs {}",
            sol.z_star.z_t_modes[0],
            c_expected
        );
        assert!(
            (sol.v - v_expected).abs() <= 1e-8 * v_expected.abs(),
            "V = {} vs {}",
            sol.v,
            v_expected
        );
        assert!(!sol.zero_case);
        // V <= 0 and V <= J(probe) for probes
        assert!(sol.v <= 0.0);
        for c in [-1.0, 0.0, 0.5] {
            let j = dual_j(&prob, &DualVariable { z_t_modes: vec![c] }, &u1, &u2).unwrap();
            assert!(sol.v <= j + 1e-12);
        }
        // monotone V along the eps schedule
        for w in sol.stages.windows(2) {
            assert!(w[1].value <= w[0].value + 1e-12);
        }
        let last_two = &sol.stages[sol.stages.len() - 2..];
        assert!((last_two[1].value - last_two[0].value).abs() <= 1e-8);
    }

    #[test]
    fn recover_leader_one_mode() {
        let (prob, u1, u2) = one_mode_problem();
        let (beta, gamma) = one_mode_beta_gamma(&prob);
        let sol = dual_minimize(&prob, &u1, &u2, 1, &default_eps_schedule(), 1e-11).unwrap();
        let g = recover_leader(&prob, &sol, &u1, &u2).unwrap();
        let n_expected = gamma / beta;
        for norm in g.cell_norms(&prob.sys) {
            assert!(
                (norm - n_expected).abs() <= 1e-6 * n_expected,
                "cell norm {norm} vs {n_expected}"
            );
        }
        // constant-norm identity: linf = l1 of the masked adjoint
        let l1 = masked_adjoint_l1_norm(&prob, &sol.z_star, &u1, &u2).unwrap();
        assert!((g.linf_l2(&prob.sys) - l1).abs() <= 1e-12 * l1.max(1.0));
        // reach zero: the recovered leader drives y(T) to 0
        let resid = reach_zero_check(&prob, &g, &u1, &u2).unwrap();
        assert!(resid <= 1e-8, "reach-zero residual {resid}");
    }

    #[test]
    fn recover_leader_constant_norm_multimode() {
        let op = DegenerateOperatorSpec::new(1.0, 200, 2.0).unwrap();
        let sys = spectral::eigen_fd(&op, 6).unwrap();
        let grid = TimeGrid::new(0.5, 16).unwrap();
        let omega = IntervalSet::interval(0.2, 0.8).unwrap();
        let mut rng = Rng::new(12);
        let y0 = rng.normal_vec(6);
        let u1 = Control::zero(&sys, grid, omega.clone());
        let u2 = Control::zero(&sys, grid, omega.clone());
        let prob = NormOptProblem {
            sys,
            grid,
            omega,
            y0,
        };
        let sol = dual_minimize(&prob, &u1, &u2, 6, &default_eps_schedule(), 1e-10).unwrap();
        let g = recover_leader(&prob, &sol, &u1, &u2).unwrap();
        let norms = g.cell_norms(&prob.sys);
        let first = norms[0];
        for n in &norms {
            assert!((n - first).abs() <= 1e-12 * first.max(1.0), "norms differ");
        }
        // EL stationarity: per-coordinate gradient small
        assert!(sol.grad_inf_norm <= 1e-10 * (1.0 + sol.v.abs()) * 1e3);
    }

    #[test]
    fn primal_one_mode_matches_closed_form() {
        let (prob, u1, u2) = one_mode_problem();
        let (beta, gamma) = one_mode_beta_gamma(&prob);
        let sol = primal_norm(&prob, &u1, &u2, 1, 1e-8, &PenaltySchedule::default()).unwrap();
        let expected = gamma / beta;
        assert!(
            (sol.n_primal - expected).abs() <= 1e-2 * expected,
            "N_primal {} vs {}",
            sol.n_primal,
            expected
        );
        assert!(sol.terminal_residual <= 1e-8);
        // zero instance: N = 0, g = 0
        let prob_zero = NormOptProblem {
            y0: vec![0.0],
            ..prob
        };
        let z = primal_norm(&prob_zero, &u1, &u2, 1, 1e-10, &PenaltySchedule::default()).unwrap();
        assert!(z.n_primal <= 1e-12);
        // delta = 0 -> contract error
        assert!(matches!(
            primal_norm(&prob_zero, &u1, &u2, 1, 0.0, &PenaltySchedule::default()),
            Err(NormOptError::DeltaContract(_))
        ));
    }

    #[test]
    fn duality_identity_one_mode() {
        let (prob, u1, u2) = one_mode_problem();
        let opts = NormOptOptions::with_k(1);
        let rep = solve_full(&prob, &u1, &u2, &opts).unwrap();
        let (beta, gamma) = one_mode_beta_gamma(&prob);
        // closed-form chain: N from the dual route and the recovered leader
        let n_exact = gamma / beta;
        assert!((rep.n_dual - n_exact).abs() <= 1e-6 * n_exact);
        let g_norm = rep.g_star.linf_l2(&prob.sys);
        assert!((g_norm - n_exact).abs() <= 1e-6 * n_exact);
        // dual-internal identity V = -1/2 ||g*||^2 at the solver tolerance
        let internal_gap = (rep.v + 0.5 * g_norm * g_norm).abs() / (0.5 * g_norm * g_norm);
        assert!(internal_gap <= 1e-6, "internal gap {internal_gap}");
        // cross-solver gap against the 1%-accurate penalty estimate
        assert!(rep.duality_gap <= 5e-2, "gap {}", rep.duality_gap);
        assert!(rep.reach_zero_residual <= 1e-6 * l2_modes(&prob.y0));
    }

    #[test]
    fn duality_gap_randomized_k8() {
        let op = DegenerateOperatorSpec::new(1.0, 200, 2.0).unwrap();
        let sys = spectral::eigen_fd(&op, 8).unwrap();
        let grid = TimeGrid::new(0.5, 24).unwrap();
        let omega = IntervalSet::interval(0.15, 0.85).unwrap();
        let mut rng = Rng::new(2025);
        for trial in 0..3 {
            let y0 = rng.normal_vec(8);
            let u1 = Control::zero(&sys, grid, omega.clone());
            let u2 = Control::zero(&sys, grid, omega.clone());
            let prob = NormOptProblem {
                sys: sys.clone(),
                grid,
                omega: omega.clone(),
                y0,
            };
            let rep = solve_full(&prob, &u1, &u2, &NormOptOptions::with_k(8)).unwrap();
            assert!(
                rep.duality_gap <= 5e-2,
                "trial {trial}: gap {}",
                rep.duality_gap
            );
            assert!(rep.v <= 1e-12);
        }
    }

    #[test]
    fn weak_duality_probes() {
        let (prob, u1, u2) = one_mode_problem();
        let delta = 1e-8;
        let primal = primal_norm(&prob, &u1, &u2, 1, delta, &PenaltySchedule::default()).unwrap();
        let mut rng = Rng::new(3);
        for _ in 0..20 {
            let z = DualVariable {
                z_t_modes: vec![rng.uniform(-3.0, 3.0)],
            };
            let defect = weak_duality_defect(&prob, &z, &u1, &u2, &primal.leader, delta).unwrap();
            assert!(defect >= -1e-10, "weak duality violated: {defect}");
        }
    }

    #[test]
    fn scaling_law() {
        let op = DegenerateOperatorSpec::new(1.0, 200, 2.0).unwrap();
        let sys = spectral::eigen_fd(&op, 4).unwrap();
        let grid = TimeGrid::new(0.5, 16).unwrap();
        let omega = IntervalSet::interval(0.2, 0.8).unwrap();
        let u1 = Control::zero(&sys, grid, omega.clone());
        let u2 = Control::zero(&sys, grid, omega.clone());
        let y0 = vec![0.8, -0.3, 0.2, 0.1];
        let base = NormOptProblem {
            sys: sys.clone(),
            grid,
            omega: omega.clone(),
            y0: y0.clone(),
        };
        let sol_base = dual_minimize(&base, &u1, &u2, 4, &default_eps_schedule(), 1e-11).unwrap();
        let prim_base = primal_norm(&base, &u1, &u2, 4, 1e-9, &PenaltySchedule::default()).unwrap();
        for s in [0.5, 2.0] {
            let scaled = NormOptProblem {
                y0: y0.iter().map(|x| s * x).collect(),
                sys: sys.clone(),
                grid,
                omega: omega.clone(),
            };
            let sol = dual_minimize(&scaled, &u1, &u2, 4, &default_eps_schedule(), 1e-11).unwrap();
            assert!(
                (sol.v - s * s * sol_base.v).abs() <= 1e-5 * sol_base.v.abs(),
                "V({s}) = {} vs {}",
                sol.v,
                s * s * sol_base.v
            );
            let prim =
                primal_norm(&scaled, &u1, &u2, 4, 1e-9 * s, &PenaltySchedule::default()).unwrap();
            assert!(
                (prim.n_primal - s * prim_base.n_primal).abs() <= 2e-2 * s * prim_base.n_primal,
                "N({s}) = {} vs {}",
                prim.n_primal,
                s * prim_base.n_primal
            );
        }
    }

    #[test]
    fn alternation_explore_smoke() {
        use crate::game::{GameSpec, NashOptions};
        let op = DegenerateOperatorSpec::new(1.0, 128, 2.0).unwrap();
        let sys = spectral::eigen_fd(&op, 3).unwrap();
        let grid = TimeGrid::new(0.4, 8).unwrap();
        let omega = IntervalSet::interval(0.2, 0.8).unwrap();
        let omega1 = IntervalSet::interval(0.3, 0.5).unwrap();
        let omega2 = IntervalSet::interval(0.5, 0.7).unwrap();
        let g1 = IntervalSet::interval(0.25, 0.55).unwrap();
        let g2 = IntervalSet::interval(0.45, 0.75).unwrap();
        let leader = Control::zero(&sys, grid, omega.clone());
        let mut y_t1 = vec![0.0; 3];
        y_t1[0] = 1.0;
        let mut y_t2 = vec![0.0; 3];
        y_t2[0] = -1.0;
        let game_spec = GameSpec::new(
            sys.clone(),
            grid,
            omega.clone(),
            omega1,
            omega2,
            g1,
            g2,
            5.0,
            0.2,
            0.2,
            vec![0.4, -0.1, 0.05],
            y_t1,
            y_t2,
            leader,
        )
        .unwrap();
        let prob = NormOptProblem {
            sys,
            grid,
            omega,
            y0: game_spec.y0.clone(),
        };
        let nash_opts = NashOptions {
            verify_probes: 4,
            max_rounds: 10,
            ..NashOptions::default()
        };
        let (history, leader) =
            alternation_explore(&game_spec, &prob, &NormOptOptions::with_k(3), &nash_opts, 2)
                .unwrap();
        assert_eq!(history.len(), 2);
        assert!(history.iter().all(|r| r.n_dual.is_finite()));
        assert!(leader.linf_l2(&prob.sys) <= 5.0 + 1e-9);
    }

    #[test]
    fn truncation_too_small_reported_honestly() {
        // dual over 1 mode of a 3-mode system with energy in mode 2: the
        // recovered leader cannot kill the uncontrolled modes
        let op = DegenerateOperatorSpec::new(1.0, 200, 2.0).unwrap();
        let sys = spectral::eigen_fd(&op, 3).unwrap();
        let grid = TimeGrid::new(0.5, 16).unwrap();
        let omega = IntervalSet::interval(0.2, 0.8).unwrap();
        let u1 = Control::zero(&sys, grid, omega.clone());
        let u2 = Control::zero(&sys, grid, omega.clone());
        let prob = NormOptProblem {
            sys,
            grid,
            omega,
            y0: vec![1.0, 2.0, 0.0],
        };
        let sol = dual_minimize(&prob, &u1, &u2, 1, &default_eps_schedule(), 1e-10).unwrap();
        let g = recover_leader(&prob, &sol, &u1, &u2).unwrap();
        let resid = reach_zero_check(&prob, &g, &u1, &u2).unwrap();
        let delta = 1e-6 * l2_modes(&prob.y0);
        assert!(
            resid > delta,
            "expected honest residual above delta, got {resid}"
        );
        // and the dual truncation contract is enforced
        assert!(matches!(
            dual_minimize(&prob, &u1, &u2, 7, &default_eps_schedule(), 1e-10),
            Err(NormOptError::DualTruncation { .. })
        ));
    }
}
