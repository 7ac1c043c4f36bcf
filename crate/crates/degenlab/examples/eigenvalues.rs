//! Eigensystem of the degenerate operator: finite-difference spectrum
//! against the Bessel closed form, and exact semigroup propagation.
//!
//! Run with: cargo run --release --example eigenvalues

use degenlab::spectral::{
    bessel_order, eigen_closed_form, eigen_fd, propagate, DegenerateOperatorSpec,
};

fn main() {
    println!("first 5 eigenvalues w_k^2, fd (n = 2000, grading 2) vs closed form\n");
    for alpha in [0.5, 1.0, 1.5] {
        let spec = DegenerateOperatorSpec::new(alpha, 2000, 2.0).unwrap();
        let sys = eigen_fd(&spec, 5).unwrap();
        let closed = eigen_closed_form(alpha, 5, 1e-12).unwrap();
        println!(
            "alpha = {alpha}   (Bessel order nu = {:.6})",
            bessel_order(alpha).unwrap()
        );
        println!("  k     fd              closed form     rel. gap");
        for k in 0..5 {
            let rel = (sys.eigenvalues[k] - closed[k]).abs() / closed[k];
            println!(
                "  {}     {:<15.9} {:<15.9} {:.2e}",
                k + 1,
                sys.eigenvalues[k],
                closed[k],
                rel
            );
        }
        println!();
    }

    // semigroup: single-mode decay law and the semigroup property
    let spec = DegenerateOperatorSpec::new(1.0, 400, 2.0).unwrap();
    let sys = eigen_fd(&spec, 4).unwrap();
    let a = vec![1.0, -0.5, 0.25, 0.1];
    let half = propagate(&sys, &a, 0.25).unwrap();
    let full_via_half = propagate(&sys, &half, 0.25).unwrap();
    let full = propagate(&sys, &a, 0.5).unwrap();
    let dev: f64 = full
        .iter()
        .zip(&full_via_half)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    println!("semigroup law e^(A(s+t)) = e^(As) e^(At): max deviation {dev:.2e}");
    println!(
        "single-mode decay over T = 0.5: a_1 {:.6} -> {:.6} (e^(-w_1^2 T) = {:.6})",
        a[0],
        full[0],
        (-sys.eigenvalues[0] * 0.5f64).exp()
    );
}
