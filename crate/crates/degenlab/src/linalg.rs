//! Small dense/tridiagonal linear algebra kernels.
//!
//! Everything here is sized for desk-scale runs: symmetric tridiagonal
//! eigenpairs via Sturm-sequence bisection plus inverse iteration (meshes up
//! to a few thousand cells), Gaussian elimination with partial pivoting for
//! mode-space Gram systems (a few dozen unknowns), and Fornberg weights for
//! derivatives on non-uniform stencils.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("eigensolver failed to converge for eigenvalue index {0}")]
    EigenNonConvergence(usize),
    #[error("singular linear system (pivot {0:.3e} at column {1})")]
    SingularSystem(f64, usize),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Symmetric tridiagonal matrix by its diagonal and subdiagonal.
#[derive(Clone, Debug)]
pub struct SymTridiag {
    pub diag: Vec<f64>,
    pub off: Vec<f64>, // length diag.len() - 1
}

impl SymTridiag {
    pub fn n(&self) -> usize {
        self.diag.len()
    }

    /// Number of eigenvalues strictly below `x` (Sturm sequence count).
    fn count_below(&self, x: f64) -> usize {
        let n = self.n();
        let mut count = 0usize;
        let mut d = self.diag[0] - x;
        if d < 0.0 {
            count += 1;
        }
        for i in 1..n {
            let off2 = self.off[i - 1] * self.off[i - 1];
            let denom = if d.abs() < 1e-300 {
                1e-300_f64.copysign(if d == 0.0 { 1.0 } else { d })
            } else {
                d
            };
            d = (self.diag[i] - x) - off2 / denom;
            if d < 0.0 {
                count += 1;
            }
        }
        count
    }

    /// The `k` smallest eigenvalues (ascending), each bisected to
    /// `tol * max(1, |lambda|)` absolute width.
    pub fn smallest_eigenvalues(&self, k: usize, tol: f64) -> Vec<f64> {
        let n = self.n();
        // Gershgorin bounds
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let mut r = 0.0;
            if i > 0 {
                r += self.off[i - 1].abs();
            }
            if i + 1 < n {
                r += self.off[i].abs();
            }
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        let mut out = Vec::with_capacity(k);
        for idx in 1..=k.min(n) {
            let (mut a, mut b) = (lo, hi);
            for _ in 0..200 {
                let mid = 0.5 * (a + b);
                if self.count_below(mid) >= idx {
                    b = mid;
                } else {
                    a = mid;
                }
                if b - a <= tol * b.abs().max(1.0) {
                    break;
                }
            }
            out.push(0.5 * (a + b));
        }
        out
    }

    /// Solve (T - shift I) x = rhs by banded LU with partial pivoting
    /// (fill-in on the second superdiagonal). Stable for the near-singular
    /// shifts used by inverse iteration.
    fn solve_shifted(&self, shift: f64, rhs: &[f64]) -> Vec<f64> {
        let n = self.n();
        // row storage: [diag, super1, super2]
        let mut a = vec![[0.0f64; 3]; n];
        let mut b = rhs.to_vec();
        for i in 0..n {
            a[i][0] = self.diag[i] - shift;
            a[i][1] = if i + 1 < n { self.off[i] } else { 0.0 };
        }
        for i in 0..n.saturating_sub(1) {
            let mut row_i = a[i];
            let mut row_j = [self.off[i], a[i + 1][0], a[i + 1][1]];
            let mut bi = b[i];
            let mut bj = b[i + 1];
            if row_j[0].abs() > row_i[0].abs() {
                std::mem::swap(&mut row_i, &mut row_j);
                std::mem::swap(&mut bi, &mut bj);
            }
            let piv = if row_i[0].abs() < 1e-300 {
                1e-300_f64.copysign(if row_i[0] == 0.0 { 1.0 } else { row_i[0] })
            } else {
                row_i[0]
            };
            let m = row_j[0] / piv;
            row_j[1] -= m * row_i[1];
            row_j[2] -= m * row_i[2];
            bj -= m * bi;
            a[i] = row_i;
            a[i + 1] = [row_j[1], row_j[2], 0.0];
            b[i] = bi;
            b[i + 1] = bj;
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut s = b[i];
            if i + 1 < n {
                s -= a[i][1] * x[i + 1];
            }
            if i + 2 < n {
                s -= a[i][2] * x[i + 2];
            }
            let piv = if a[i][0].abs() < 1e-300 {
                1e-300_f64.copysign(if a[i][0] == 0.0 { 1.0 } else { a[i][0] })
            } else {
                a[i][0]
            };
            x[i] = s / piv;
        }
        x
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        let n = self.n();
        let mut out = vec![0.0; n];
        for i in 0..n {
            let mut s = self.diag[i] * v[i];
            if i > 0 {
                s += self.off[i - 1] * v[i - 1];
            }
            if i + 1 < n {
                s += self.off[i] * v[i + 1];
            }
            out[i] = s;
        }
        out
    }

    /// Eigenvector for an isolated eigenvalue via inverse iteration,
    /// orthogonalized against `previous` (unit vectors).
    pub fn eigenvector(&self, lambda: f64, previous: &[Vec<f64>]) -> Result<Vec<f64>, LinalgError> {
        let n = self.n();
        let shift = lambda * (1.0 + 1e-11) + 1e-300;
        // deterministic start: alternating signs avoids orthogonality traps
        let mut v: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { 0.7 }).collect();
        normalize(&mut v);
        let mut best_res = f64::INFINITY;
        let mut best = v.clone();
        for _ in 0..8 {
            let mut w = self.solve_shifted(shift, &v);
            for p in previous {
                let c = dot(&w, p);
                for i in 0..n {
                    w[i] -= c * p[i];
                }
            }
            let norm = norm2(&w);
            if !norm.is_finite() || norm == 0.0 {
                break;
            }
            for x in w.iter_mut() {
                *x /= norm;
            }
            v = w;
            let r = {
                let av = self.matvec(&v);
                let mut s = 0.0;
                for i in 0..n {
                    let d = av[i] - lambda * v[i];
                    s += d * d;
                }
                s.sqrt()
            };
            if r < best_res {
                best_res = r;
                best = v.clone();
            }
            if r < 1e-10 * lambda.abs().max(1.0) {
                return Ok(best);
            }
        }
        if best_res < 1e-6 * lambda.abs().max(1.0) {
            Ok(best)
        } else {
            Err(LinalgError::EigenNonConvergence(0))
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn normalize(a: &mut [f64]) {
    let n = norm2(a);
    if n > 0.0 {
        for x in a.iter_mut() {
            *x /= n;
        }
    }
}

/// Solve a dense `n x n` system by Gaussian elimination with partial pivoting.
pub fn solve_dense(a: &[Vec<f64>], rhs: &[f64]) -> Result<Vec<f64>, LinalgError> {
    let n = a.len();
    if rhs.len() != n || a.iter().any(|row| row.len() != n) {
        return Err(LinalgError::Dimension(format!(
            "dense solve: matrix {}x?, rhs {}",
            n,
            rhs.len()
        )));
    }
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut b = rhs.to_vec();
    for col in 0..n {
        let (pivot_row, pivot_val) = (col..n)
            .map(|r| (r, m[r][col].abs()))
            .max_by(|x, y| x.1.partial_cmp(&y.1).unwrap())
            .unwrap();
        if pivot_val < 1e-300 {
            return Err(LinalgError::SingularSystem(pivot_val, col));
        }
        m.swap(col, pivot_row);
        b.swap(col, pivot_row);
        for r in col + 1..n {
            let f = m[r][col] / m[col][col];
            if f == 0.0 {
                continue;
            }
            for c in col..n {
                m[r][c] -= f * m[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let mut s = b[r];
        for c in r + 1..n {
            s -= m[r][c] * x[c];
        }
        x[r] = s / m[r][r];
    }
    Ok(x)
}

/// Fornberg weights: for nodes `xs` and evaluation point `x0`, returns
/// weights `w[m][j]` so that `f^(m)(x0) ~ sum_j w[m][j] f(xs[j])` for
/// derivative orders m = 0..=max_order.
pub fn fornberg_weights(x0: f64, xs: &[f64], max_order: usize) -> Vec<Vec<f64>> {
    let n = xs.len();
    let m = max_order;
    let mut c = vec![vec![vec![0.0f64; n]; m + 1]; n];
    c[0][0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = xs[0] - x0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - x0;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k][i] =
                        c1 * (k as f64 * c[i - 1][k - 1][i - 1] - c5 * c[i - 1][k][i - 1]) / c2;
                }
                c[i][0][i] = -c1 * c5 * c[i - 1][0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[i][k][j] = (c4 * c[i - 1][k][j] - k as f64 * c[i - 1][k - 1][j]) / c3;
            }
            c[i][0][j] = c4 * c[i - 1][0][j] / c3;
        }
        c1 = c2;
    }
    (0..=m).map(|k| c[n - 1][k].clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn tridiag_eigen_matches_laplacian() {
        // -u'' on (0,1), Dirichlet, uniform mesh: eigenvalues known exactly
        let n = 200usize;
        let h = 1.0 / n as f64;
        let t = SymTridiag {
            diag: vec![2.0 / (h * h); n - 1],
            off: vec![-1.0 / (h * h); n - 2],
        };
        let ev = t.smallest_eigenvalues(3, 1e-13);
        for (k, &lam) in ev.iter().enumerate() {
            let kk = (k + 1) as f64;
            // discrete dirichlet laplacian eigenvalue: (2/h^2)(1 - cos(k pi h))
            let exact = 2.0 / (h * h) * (1.0 - (kk * PI * h).cos());
            assert!(
                (lam - exact).abs() < 1e-7 * exact,
                "k={k}: {lam} vs {exact}"
            );
        }
        // eigenvector residual
        let v = t.eigenvector(ev[0], &[]).unwrap();
        let av = t.matvec(&v);
        let res: f64 = av
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - ev[0] * b).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(res < 1e-8 * ev[0]);
    }

    #[test]
    fn dense_solve_roundtrip() {
        let a = vec![
            vec![4.0, 1.0, 0.5],
            vec![1.0, 3.0, -1.0],
            vec![0.5, -1.0, 5.0],
        ];
        let x_true = [1.0, -2.0, 0.25];
        let rhs: Vec<f64> = (0..3)
            .map(|i| (0..3).map(|j| a[i][j] * x_true[j]).sum())
            .collect();
        let x = solve_dense(&a, &rhs).unwrap();
        for i in 0..3 {
            assert!((x[i] - x_true[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn dense_solve_rejects_singular() {
        let a = vec![vec![1.0, 2.0], vec![2.0, 4.0]];
        assert!(solve_dense(&a, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn fornberg_first_derivative_on_graded_nodes() {
        // f(x) = sin(3x), non-uniform stencil around x0
        let xs: Vec<f64> = vec![0.40, 0.45, 0.52, 0.60, 0.63, 0.71, 0.80];
        let x0 = 0.60;
        let w = fornberg_weights(x0, &xs, 2);
        let f: Vec<f64> = xs.iter().map(|&x| (3.0 * x).sin()).collect();
        let d1: f64 = w[1].iter().zip(&f).map(|(wi, fi)| wi * fi).sum();
        let d2: f64 = w[2].iter().zip(&f).map(|(wi, fi)| wi * fi).sum();
        assert!((d1 - 3.0 * (3.0 * x0).cos()).abs() < 1e-6);
        assert!((d2 + 9.0 * (3.0 * x0).sin()).abs() < 1e-4);
    }
}
