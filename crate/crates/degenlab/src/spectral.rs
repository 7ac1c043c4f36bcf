//! Eigensystem of the degenerate operator A v = (x^alpha v_x)_x on (0,1).
//!
//! Two independent routes to the spectrum are provided and cross-checked:
//!
//! * `eigen_closed_form` uses the Sturm-Liouville reduction to Bessel
//!   functions: w_k = ((2 - alpha)/2) j_{nu,k} with nu = |1 - alpha|/(2 - alpha).
//! * `eigen_fd` assembles the symmetric flux-form tridiagonal discretization
//!   on a graded mesh (node i at (i/n)^grading) with the coefficient x^alpha
//!   evaluated at cell faces, and solves the generalized symmetric
//!   tridiagonal eigenproblem against the diagonal mass of the dual cells.
//!
//! The boundary operator at x = 0 switches with alpha: Dirichlet for
//! alpha in (0,1), zero weighted flux x^alpha v_x for alpha in [1,2).
//! Dirichlet always holds at x = 1. Semigroup propagation e^{At} is exact
//! per mode on the truncated basis.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bessel::{self, BesselError};
use crate::linalg::{LinalgError, SymTridiag};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("alpha = {0} outside admissible range (0, 2) (alpha = 0 needs validation mode)")]
    AlphaRange(f64),
    #[error("n_cells = {0} too small (need >= 16)")]
    MeshTooCoarse(usize),
    #[error("grading = {0} must be >= 1")]
    GradingRange(f64),
    #[error("mode count K = {k} exceeds available interior unknowns {max}")]
    TooManyModes { k: usize, max: usize },
    #[error("negative time t = {0}: the semigroup is forward-only")]
    NegativeTime(f64),
    #[error("mode vector has length {got}, eigensystem holds {expect} modes")]
    ModeDimension { got: usize, expect: usize },
    #[error(transparent)]
    Bessel(#[from] BesselError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Parameters of the degenerate diffusion operator and its discretization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegenerateOperatorSpec {
    pub alpha: f64,
    pub n_cells: usize,
    pub grading: f64,
    /// Accepts alpha = 0 (classical Laplacian) for cross-validation only.
    #[serde(default)]
    pub validation_mode: bool,
}

impl DegenerateOperatorSpec {
    pub fn new(alpha: f64, n_cells: usize, grading: f64) -> Result<Self, SpectralError> {
        let spec = DegenerateOperatorSpec {
            alpha,
            n_cells,
            grading,
            validation_mode: false,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Same as `new` but admits alpha = 0 for sine-basis cross-checks.
    pub fn validation(alpha: f64, n_cells: usize, grading: f64) -> Result<Self, SpectralError> {
        let spec = DegenerateOperatorSpec {
            alpha,
            n_cells,
            grading,
            validation_mode: true,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), SpectralError> {
        let lo_ok = if self.validation_mode {
            self.alpha >= 0.0
        } else {
            self.alpha > 0.0
        };
        if !lo_ok || self.alpha >= 2.0 {
            return Err(SpectralError::AlphaRange(self.alpha));
        }
        if self.n_cells < 16 {
            return Err(SpectralError::MeshTooCoarse(self.n_cells));
        }
        if self.grading < 1.0 {
            return Err(SpectralError::GradingRange(self.grading));
        }
        Ok(())
    }

    /// Graded mesh nodes x_i = (i/n)^grading, i = 0..=n.
    pub fn mesh(&self) -> Vec<f64> {
        let n = self.n_cells;
        (0..=n)
            .map(|i| (i as f64 / n as f64).powf(self.grading))
            .collect()
    }

    fn dirichlet_left(&self) -> bool {
        self.alpha < 1.0
    }
}

/// Bessel order nu_alpha = |1 - alpha| / (2 - alpha) of the closed-form
/// eigenfunction representation.
pub fn bessel_order(alpha: f64) -> Result<f64, SpectralError> {
    if !(0.0..2.0).contains(&alpha) {
        return Err(SpectralError::AlphaRange(alpha));
    }
    Ok((1.0 - alpha).abs() / (2.0 - alpha))
}

/// Closed-form eigenvalues w_k^2 = ((2-alpha)/2)^2 j_{nu,k}^2, k = 1..=K.
pub fn eigen_closed_form(alpha: f64, k: usize, tol: f64) -> Result<Vec<f64>, SpectralError> {
    let nu = bessel_order(alpha)?;
    let zeros = bessel::bessel_j_zeros(nu, k, tol)?;
    let scale = (2.0 - alpha) / 2.0;
    Ok(zeros.iter().map(|z| (scale * z).powi(2)).collect())
}

/// Truncated orthonormal eigenbasis of -A with the alpha-dependent boundary
/// operator. Eigenfunctions are stored on the full node array (boundary
/// values included) and are orthonormal in the diagonal mass inner product.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EigenSystem {
    pub alpha: f64,
    pub bessel_order: f64,
    /// Eigenvalues w_k^2, strictly increasing, strictly positive.
    pub eigenvalues: Vec<f64>,
    /// `eigenfunctions[k][i] = e_k(x_i)` on the full mesh.
    pub eigenfunctions: Vec<Vec<f64>>,
    /// Node coordinates, x_0 = 0 through x_n = 1.
    pub mesh: Vec<f64>,
    /// Dual-cell mass weights per node (quadrature weights).
    pub mass: Vec<f64>,
    pub dirichlet_left: bool,
}

impl EigenSystem {
    pub fn n_modes(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.mesh.len()
    }

    /// Quadrature inner product sum_i m_i a_i b_i over grid functions.
    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        self.mass
            .iter()
            .zip(a.iter().zip(b))
            .map(|(m, (x, y))| m * x * y)
            .sum()
    }

    /// Grid function -> mode coefficients against the stored basis.
    pub fn project(&self, grid_fn: &[f64]) -> Vec<f64> {
        self.eigenfunctions
            .iter()
            .map(|e| self.inner(e, grid_fn))
            .collect()
    }

    /// Mode coefficients -> grid function.
    pub fn synthesize(&self, modes: &[f64]) -> Vec<f64> {
        let n = self.n_nodes();
        let mut out = vec![0.0; n];
        for (c, e) in modes.iter().zip(&self.eigenfunctions) {
            if *c == 0.0 {
                continue;
            }
            for i in 0..n {
                out[i] += c * e[i];
            }
        }
        out
    }

    pub fn check_mode_dim(&self, v: &[f64]) -> Result<(), SpectralError> {
        if v.len() != self.n_modes() {
            return Err(SpectralError::ModeDimension {
                got: v.len(),
                expect: self.n_modes(),
            });
        }
        Ok(())
    }
}

/// Assembled generalized eigenproblem K v = lambda M v, kept public within
/// the crate so time-stepping oracles can reuse the exact same matrices.
pub(crate) struct Discretization {
    pub tridiag_k: SymTridiag,
    pub mass: Vec<f64>,
    /// Index of the first mesh node carrying an unknown.
    pub first_node: usize,
}

pub(crate) fn assemble(spec: &DegenerateOperatorSpec) -> Discretization {
    let nodes = spec.mesh();
    let n = spec.n_cells;
    let dirichlet_left = spec.dirichlet_left();
    let first = if dirichlet_left { 1 } else { 0 };
    let unknowns: Vec<usize> = (first..n).collect(); // node n is Dirichlet
    let m = unknowns.len();
    // face coefficient c_{i+1/2} = ((x_i + x_{i+1})/2)^alpha / h_{i+1/2}
    let face = |i: usize| -> f64 {
        let xm = 0.5 * (nodes[i] + nodes[i + 1]);
        let h = nodes[i + 1] - nodes[i];
        xm.powf(spec.alpha) / h
    };
    let mut diag = vec![0.0; m];
    let mut off = vec![0.0; m.saturating_sub(1)];
    let mut mass = vec![0.0; m];
    for (row, &i) in unknowns.iter().enumerate() {
        let left = if i == 0 {
            0.0 // zero weighted flux through the degenerate end
        } else {
            face(i - 1)
        };
        let right = face(i);
        diag[row] = left + right;
        if row + 1 < m {
            off[row] = -right;
        }
        let lo = if i == 0 {
            nodes[0]
        } else {
            0.5 * (nodes[i - 1] + nodes[i])
        };
        let hi = 0.5 * (nodes[i] + nodes[i + 1]);
        mass[row] = hi - lo;
    }
    Discretization {
        tridiag_k: SymTridiag { diag, off },
        mass,
        first_node: first,
    }
}

/// Finite-difference eigensystem: K smallest eigenpairs of the flux-form
/// discretization, mass-orthonormalized, sign fixed so each eigenfunction is
/// positive on its first interior arch.
pub fn eigen_fd(spec: &DegenerateOperatorSpec, k: usize) -> Result<EigenSystem, SpectralError> {
    spec.validate()?;
    let disc = assemble(spec);
    let m = disc.mass.len();
    if k > m {
        return Err(SpectralError::TooManyModes { k, max: m });
    }
    // scale to a standard symmetric tridiagonal problem: B = D^-1/2 K D^-1/2
    let sqrt_m: Vec<f64> = disc.mass.iter().map(|x| x.sqrt()).collect();
    let b = SymTridiag {
        diag: disc
            .tridiag_k
            .diag
            .iter()
            .zip(&disc.mass)
            .map(|(d, mm)| d / mm)
            .collect(),
        off: (0..m - 1)
            .map(|i| disc.tridiag_k.off[i] / (sqrt_m[i] * sqrt_m[i + 1]))
            .collect(),
    };
    let eigenvalues = b.smallest_eigenvalues(k, 1e-13);
    let nodes = spec.mesh();
    let n_nodes = nodes.len();
    let mut scaled_vectors: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut eigenfunctions = Vec::with_capacity(k);
    for (idx, &lam) in eigenvalues.iter().enumerate() {
        let w = b
            .eigenvector(lam, &scaled_vectors)
            .map_err(|_| LinalgError::EigenNonConvergence(idx))?;
        // unscale to the generalized problem; ||w|| = 1 gives v' M v = 1
        let mut full = vec![0.0; n_nodes];
        for (row, wi) in w.iter().enumerate() {
            full[disc.first_node + row] = wi / sqrt_m[row];
        }
        // first-arch-positive sign convention
        let maxabs = full.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
        if let Some(first_sig) = full.iter().find(|x| x.abs() > 1e-8 * maxabs) {
            if *first_sig < 0.0 {
                for x in full.iter_mut() {
                    *x = -*x;
                }
                // keep the scaled copy consistent for later orthogonalization
                scaled_vectors.push(w.iter().map(|x| -x).collect());
            } else {
                scaled_vectors.push(w);
            }
        } else {
            scaled_vectors.push(w);
        }
        eigenfunctions.push(full);
    }
    // full-node mass: dual cells of every node (Dirichlet nodes included;
    // their values are zero so quadrature is unaffected)
    let mut mass = vec![0.0; n_nodes];
    for i in 0..n_nodes {
        let lo = if i == 0 {
            nodes[0]
        } else {
            0.5 * (nodes[i - 1] + nodes[i])
        };
        let hi = if i + 1 == n_nodes {
            nodes[i]
        } else {
            0.5 * (nodes[i] + nodes[i + 1])
        };
        mass[i] = hi - lo;
    }
    // strictness check on the spectrum
    for i in 1..eigenvalues.len() {
        if eigenvalues[i] <= eigenvalues[i - 1] {
            return Err(LinalgError::EigenNonConvergence(i).into());
        }
    }
    Ok(EigenSystem {
        alpha: spec.alpha,
        bessel_order: bessel_order(spec.alpha)?,
        eigenvalues,
        eigenfunctions,
        mesh: nodes,
        mass,
        dirichlet_left: disc.first_node == 1,
    })
}

/// Exact semigroup action on mode coefficients: a_k -> a_k exp(-w_k^2 t).
pub fn propagate(sys: &EigenSystem, coeffs: &[f64], t: f64) -> Result<Vec<f64>, SpectralError> {
    if t < 0.0 {
        return Err(SpectralError::NegativeTime(t));
    }
    sys.check_mode_dim(coeffs)?;
    Ok(coeffs
        .iter()
        .zip(&sys.eigenvalues)
        .map(|(a, w2)| a * (-w2 * t).exp())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use std::f64::consts::PI;

    #[test]
    fn bessel_order_examples() {
        assert_eq!(bessel_order(0.0).unwrap(), 0.5);
        assert_eq!(bessel_order(1.0).unwrap(), 0.0);
        assert!((bessel_order(0.5).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(bessel_order(2.0).is_err());
        assert!(bessel_order(2.5).is_err());
    }

    #[test]
    fn closed_form_alpha_zero_is_sine_spectrum() {
        let ev = eigen_closed_form(0.0, 3, 1e-12).unwrap();
        for (k, &w2) in ev.iter().enumerate() {
            let exact = ((k + 1) as f64 * PI).powi(2);
            assert!((w2 - exact).abs() < 1e-8 * exact);
        }
    }

    #[test]
    fn closed_form_alpha_one_first_eigenvalue() {
        let ev = eigen_closed_form(1.0, 1, 1e-12).unwrap();
        // (1/4) j_{0,1}^2 with j_{0,1} = 2.404825557695773
        let exact = 0.25 * 2.404825557695773f64.powi(2);
        assert!((ev[0] - exact).abs() < 1e-9);
        assert!((ev[0] - 1.445796).abs() < 1e-5);
    }

    #[test]
    fn fd_matches_sine_basis_for_alpha_zero() {
        let spec = DegenerateOperatorSpec::validation(0.0, 512, 1.0).unwrap();
        let sys = eigen_fd(&spec, 2).unwrap();
        assert!((sys.eigenvalues[0] - PI * PI).abs() < 1e-3 * PI * PI);
        assert!((sys.eigenvalues[1] - 4.0 * PI * PI).abs() < 1e-3 * 4.0 * PI * PI);
    }

    #[test]
    fn fd_matches_closed_form_alpha_one() {
        let spec = DegenerateOperatorSpec::new(1.0, 2000, 2.0).unwrap();
        let sys = eigen_fd(&spec, 1).unwrap();
        let exact = eigen_closed_form(1.0, 1, 1e-12).unwrap()[0];
        assert!(
            (sys.eigenvalues[0] - exact).abs() < 1e-3 * exact,
            "fd {} vs closed {}",
            sys.eigenvalues[0],
            exact
        );
    }

    #[test]
    fn fd_matches_closed_form_alpha_half_fine_mesh() {
        // (3/4)^2 j_{1/3,1}^2 against the discretization at n = 4000
        let spec = DegenerateOperatorSpec::new(0.5, 4000, 2.0).unwrap();
        let sys = eigen_fd(&spec, 1).unwrap();
        let exact = eigen_closed_form(0.5, 1, 1e-12).unwrap()[0];
        assert!(
            (sys.eigenvalues[0] - exact).abs() < 1e-3 * exact,
            "fd {} vs closed {}",
            sys.eigenvalues[0],
            exact
        );
    }

    #[test]
    fn fd_spectrum_is_increasing_positive_orthonormal() {
        let spec = DegenerateOperatorSpec::new(1.5, 2000, 2.0).unwrap();
        let sys = eigen_fd(&spec, 5).unwrap();
        for i in 0..5 {
            assert!(sys.eigenvalues[i] > 0.0);
            if i > 0 {
                assert!(sys.eigenvalues[i] > sys.eigenvalues[i - 1]);
            }
        }
        let mut max_resid = 0.0f64;
        for j in 0..5 {
            for k in 0..5 {
                let g = sys.inner(&sys.eigenfunctions[j], &sys.eigenfunctions[k]);
                let target = if j == k { 1.0 } else { 0.0 };
                max_resid = max_resid.max((g - target).abs());
            }
        }
        assert!(max_resid <= 1e-8, "orthonormality residual {max_resid}");
    }

    #[test]
    fn boundary_compliance_under_refinement() {
        // alpha < 1: |e_k(x_1)| shrinks as the mesh refines
        let v_coarse = {
            let spec = DegenerateOperatorSpec::new(0.5, 250, 2.0).unwrap();
            let sys = eigen_fd(&spec, 1).unwrap();
            sys.eigenfunctions[0][1].abs()
        };
        let v_fine = {
            let spec = DegenerateOperatorSpec::new(0.5, 2000, 2.0).unwrap();
            let sys = eigen_fd(&spec, 1).unwrap();
            sys.eigenfunctions[0][1].abs()
        };
        assert!(v_fine < v_coarse);
        // alpha >= 1: discrete first-face flux shrinks under refinement
        let flux = |n: usize| -> f64 {
            let spec = DegenerateOperatorSpec::new(1.5, n, 2.0).unwrap();
            let sys = eigen_fd(&spec, 1).unwrap();
            let x0 = sys.mesh[0];
            let x1 = sys.mesh[1];
            let c = (0.5 * (x0 + x1)).powf(1.5);
            c * (sys.eigenfunctions[0][1] - sys.eigenfunctions[0][0]) / (x1 - x0)
        };
        assert!(flux(2000).abs() < flux(250).abs());
    }

    #[test]
    fn sign_convention_positive_first_arch() {
        for &alpha in &[0.5, 1.0, 1.5] {
            let spec = DegenerateOperatorSpec::new(alpha, 300, 2.0).unwrap();
            let sys = eigen_fd(&spec, 3).unwrap();
            for e in &sys.eigenfunctions {
                let maxabs = e.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
                let first = e.iter().find(|x| x.abs() > 1e-8 * maxabs).unwrap();
                assert!(*first > 0.0);
            }
        }
    }

    #[test]
    fn propagate_identity_and_decay() {
        let spec = DegenerateOperatorSpec::new(1.0, 64, 2.0).unwrap();
        let sys = eigen_fd(&spec, 3).unwrap();
        let coeffs = vec![1.0, -0.5, 0.25];
        assert_eq!(propagate(&sys, &coeffs, 0.0).unwrap(), coeffs);
        let one_mode = vec![1.0, 0.0, 0.0];
        let t = 0.7;
        let out = propagate(&sys, &one_mode, t).unwrap();
        assert!((out[0] - (-sys.eigenvalues[0] * t).exp()).abs() < 1e-15);
        assert_eq!(out[1], 0.0);
        assert!(propagate(&sys, &coeffs, -0.1).is_err());
    }

    #[test]
    fn semigroup_law_and_self_adjointness() {
        let spec = DegenerateOperatorSpec::new(0.75, 64, 2.0).unwrap();
        let sys = eigen_fd(&spec, 4).unwrap();
        let mut rng = Rng::new(11);
        let a = rng.normal_vec(4);
        let b = rng.normal_vec(4);
        let (s, t) = (0.123, 0.456);
        let ab = propagate(&sys, &propagate(&sys, &a, s).unwrap(), t).unwrap();
        let direct = propagate(&sys, &a, s + t).unwrap();
        for i in 0..4 {
            assert!((ab[i] - direct[i]).abs() <= 1e-12 * direct[i].abs().max(1.0));
        }
        let lhs: f64 = propagate(&sys, &a, t)
            .unwrap()
            .iter()
            .zip(&b)
            .map(|(x, y)| x * y)
            .sum();
        let rhs: f64 = propagate(&sys, &b, t)
            .unwrap()
            .iter()
            .zip(&a)
            .map(|(x, y)| x * y)
            .sum();
        assert!((lhs - rhs).abs() <= 1e-12);
    }

    #[test]
    fn propagation_energy_monotone() {
        let spec = DegenerateOperatorSpec::new(1.25, 64, 2.0).unwrap();
        let sys = eigen_fd(&spec, 4).unwrap();
        let mut rng = Rng::new(5);
        let a = rng.normal_vec(4);
        let mut prev = f64::INFINITY;
        for i in 0..10 {
            let t = i as f64 * 0.05;
            let norm: f64 = propagate(&sys, &a, t)
                .unwrap()
                .iter()
                .map(|x| x * x)
                .sum::<f64>()
                .sqrt();
            assert!(norm <= prev + 1e-14);
            prev = norm;
        }
    }

    #[test]
    fn spec_validation_errors() {
        assert!(DegenerateOperatorSpec::new(0.0, 64, 2.0).is_err());
        assert!(DegenerateOperatorSpec::validation(0.0, 64, 2.0).is_ok());
        assert!(DegenerateOperatorSpec::new(2.0, 64, 2.0).is_err());
        assert!(DegenerateOperatorSpec::new(1.0, 8, 2.0).is_err());
        assert!(DegenerateOperatorSpec::new(1.0, 64, 0.5).is_err());
        let spec = DegenerateOperatorSpec::new(1.0, 16, 1.0).unwrap();
        assert!(eigen_fd(&spec, 100).is_err());
    }
}
