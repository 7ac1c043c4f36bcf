//! Bessel functions of the first kind and their positive zeros.
//!
//! J_nu is evaluated by its ascending power series with terms generated by
//! recurrence; terms are added until the last one drops below 1e-16 of the
//! running sum. That keeps full accuracy for the argument range the
//! eigenvalue oracle actually visits (first few dozen zeros). Zeros are
//! bracketed by a 0.1-step sign scan and refined by bisection.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BesselError {
    #[error("bessel order {0} out of supported range [0, 50]")]
    OrderRange(f64),
    #[error("failed to bracket zero #{index} of J_{nu} within scan range {scan_max:.1}")]
    BracketingFailure {
        nu: f64,
        index: usize,
        scan_max: f64,
    },
}

/// ln Gamma(x) for x > 0 (Lanczos approximation, g = 7, 9 coefficients).
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.99999999999980993,
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ];
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + G + 0.5;
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// J_nu(x) by the ascending power series, nu >= 0, x >= 0.
pub fn bessel_j(nu: f64, x: f64) -> f64 {
    if x == 0.0 {
        return if nu == 0.0 { 1.0 } else { 0.0 };
    }
    let half = 0.5 * x;
    // leading term (x/2)^nu / Gamma(nu + 1)
    let mut term = (nu * half.ln() - ln_gamma(nu + 1.0)).exp();
    let mut sum = term;
    let q = half * half;
    for m in 1..500 {
        let mf = m as f64;
        term *= -q / (mf * (mf + nu));
        sum += term;
        if term.abs() < 1e-16 * sum.abs().max(1e-300) {
            break;
        }
    }
    sum
}

/// First `k` positive zeros of J_nu, ascending, each to absolute
/// tolerance `tol`.
pub fn bessel_j_zeros(nu: f64, k: usize, tol: f64) -> Result<Vec<f64>, BesselError> {
    if !(0.0..=50.0).contains(&nu) {
        return Err(BesselError::OrderRange(nu));
    }
    let mut zeros = Vec::with_capacity(k);
    // the k-th zero sits near (k + nu/2 - 1/4) pi; scan a margin past it
    let scan_max = (k as f64 + nu / 2.0 + 2.0) * std::f64::consts::PI + 5.0;
    let step = 0.1;
    let mut x_prev = step * 0.5;
    let mut f_prev = bessel_j(nu, x_prev);
    let mut x = x_prev + step;
    while zeros.len() < k && x <= scan_max {
        let f = bessel_j(nu, x);
        if f_prev == 0.0 {
            zeros.push(x_prev);
        } else if f_prev.signum() != f.signum() {
            let (mut a, mut b) = (x_prev, x);
            let mut fa = f_prev;
            for _ in 0..200 {
                let mid = 0.5 * (a + b);
                let fm = bessel_j(nu, mid);
                if fm == 0.0 {
                    a = mid;
                    b = mid;
                    break;
                }
                if fa.signum() != fm.signum() {
                    b = mid;
                } else {
                    a = mid;
                    fa = fm;
                }
                if b - a <= tol {
                    break;
                }
            }
            zeros.push(0.5 * (a + b));
        }
        x_prev = x;
        f_prev = f;
        x += step;
    }
    if zeros.len() < k {
        return Err(BesselError::BracketingFailure {
            nu,
            index: zeros.len() + 1,
            scan_max,
        });
    }
    Ok(zeros)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn ln_gamma_known_values() {
        assert!((ln_gamma(1.0)).abs() < 1e-13);
        assert!((ln_gamma(2.0)).abs() < 1e-13);
        assert!((ln_gamma(5.0) - 24f64.ln()).abs() < 1e-12);
        assert!((ln_gamma(0.5) - PI.sqrt().ln()).abs() < 1e-12);
    }

    #[test]
    fn j_half_is_scaled_sine() {
        // J_{1/2}(x) = sqrt(2/(pi x)) sin x
        for &x in &[0.3, 1.0, 2.5, 7.0, 12.0] {
            let expected = (2.0 / (PI * x)).sqrt() * x.sin();
            assert!((bessel_j(0.5, x) - expected).abs() < 1e-12, "x = {x}");
        }
    }

    #[test]
    fn j0_first_zeros() {
        let z = bessel_j_zeros(0.0, 3, 1e-12).unwrap();
        assert!((z[0] - 2.404825557695773).abs() < 1e-10);
        assert!((z[1] - 5.520078110286311).abs() < 1e-10);
        assert!((z[2] - 8.653727912911013).abs() < 1e-10);
    }

    #[test]
    fn j_half_zeros_are_multiples_of_pi() {
        let z = bessel_j_zeros(0.5, 4, 1e-12).unwrap();
        for (i, &zi) in z.iter().enumerate() {
            assert!((zi - (i + 1) as f64 * PI).abs() < 1e-10);
        }
    }

    #[test]
    fn order_out_of_range_rejected() {
        assert!(bessel_j_zeros(-0.5, 1, 1e-10).is_err());
        assert!(bessel_j_zeros(60.0, 1, 1e-10).is_err());
    }
}
