//! Short-horizon blow-up of the observability constant: fits
//! ln c_lower(T) against T^(-mu/(1-mu)) over a list of horizons.
//! An empirical consistency probe of the scaling form, not a proof.
//!
//! Run with: cargo run --release --example blowup_scaling

use degenlab::geometry::IntervalSet;
use degenlab::observability::{blowup_exponent_fit, default_mu, ObsParams};
use degenlab::spectral::{eigen_fd, DegenerateOperatorSpec};

fn main() {
    let alpha = 1.0;
    let spec = DegenerateOperatorSpec::new(alpha, 300, 2.0).unwrap();
    let sys = eigen_fd(&spec, 5).unwrap();
    let omega = IntervalSet::interval(0.3, 0.7).unwrap();
    let mu = default_mu(alpha);
    let t_list = [0.05, 0.08, 0.12, 0.2, 0.35, 0.6];
    let params = ObsParams {
        restarts: 8,
        seed: 11,
        ..Default::default()
    };
    let fit = blowup_exponent_fit(&sys, &omega, mu, &t_list, 32, &params).unwrap();
    println!(
        "alpha = {alpha}, mu = {mu}, exponent -mu/(1-mu) = {:.4}\n",
        -mu / (1.0 - mu)
    );
    println!("  T        c_lower          T^(-mu/(1-mu))");
    for (t, c) in &fit.points {
        println!("  {t:<8} {c:<16.6e} {:.4}", t.powf(-mu / (1.0 - mu)));
    }
    println!(
        "\nleast-squares fit of ln c_lower: slope {:.6}, intercept {:.4}, rms residual {:.4}",
        fit.slope, fit.intercept, fit.residual
    );
    println!("(slope > 0 means the constant inflates like exp(C T^(-mu/(1-mu))) as T -> 0)");
}
