//! Stackelberg-Nash follower game: alternating best responses, equilibrium
//! verification, classification, and the bang-bang profile of the followers.
//!
//! Run with: cargo run --release --example stackelberg_nash

use degenlab::game::{explicit_follower, nash_solve, GameSpec, NashOptions};
use degenlab::geometry::IntervalSet;
use degenlab::pde::{Control, TimeGrid};
use degenlab::spectral::{eigen_fd, DegenerateOperatorSpec};

fn main() {
    let op = DegenerateOperatorSpec::new(1.0, 200, 2.0).unwrap();
    let sys = eigen_fd(&op, 5).unwrap();
    let grid = TimeGrid::new(0.5, 16).unwrap();
    let omega = IntervalSet::interval(0.25, 0.75).unwrap();
    let omega1 = IntervalSet::interval(0.3, 0.55).unwrap();
    let omega2 = IntervalSet::interval(0.5, 0.7).unwrap();
    let g1 = IntervalSet::interval(0.25, 0.6).unwrap();
    let g2 = IntervalSet::interval(0.45, 0.75).unwrap();

    // leader: modest constant profile on omega (fixed before the followers play)
    let leader =
        Control::constant_from_modes(&sys, grid, &[0.2, 0.0, -0.1, 0.0, 0.0], omega.clone())
            .unwrap();

    // unreachable targets with small bounds: bang-bang territory
    let mut y_t1 = vec![0.0; 5];
    y_t1[0] = 3.0;
    y_t1[1] = 1.0;
    let mut y_t2 = vec![0.0; 5];
    y_t2[0] = -2.0;
    y_t2[2] = 1.5;
    let spec = GameSpec::new(
        sys,
        grid,
        omega,
        omega1,
        omega2,
        g1,
        g2,
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
        verify_probes: 100,
        seed: 42,
        ..NashOptions::default()
    };
    let report = nash_solve(&spec, &opts).unwrap();
    println!(
        "Gauss-Seidel alternation: {} rounds, converged = {}",
        report.rounds, report.converged
    );
    println!(
        "classification: {:?} (terminal state vs the two targets)",
        report.class
    );
    println!(
        "best-response VI gaps: ({:.2e}, {:.2e}); costs J_1 = {:.4}, J_2 = {:.4}",
        report.br_gaps.0, report.br_gaps.1, report.final_costs.0, report.final_costs.1
    );
    println!(
        "Nash verification over 100 probes per follower: worst improvements ({:.2e}, {:.2e})",
        report.nash_gaps.0, report.nash_gaps.1
    );
    for (i, bb) in report.bang_bang.iter().enumerate() {
        println!(
            "follower {}: on-bound fraction {:.2}%, max | ||u(t)|| - M | = {:.2e}",
            i + 1,
            100.0 * bb.on_bound_fraction,
            bb.max_residual
        );
    }
    println!("\nper-cell norms ||u_1(t)||:");
    for (j, n) in report.bang_bang[0].cell_norms.iter().enumerate() {
        println!(
            "  t in [{:.3}, {:.3}): {n:.9}",
            grid.node(j),
            grid.node(j + 1)
        );
    }

    // closed-form candidate of the N1/N2 characterization
    let u2_explicit = explicit_follower(2, &spec).unwrap();
    println!(
        "\nexplicit follower-2 candidate: every cell norm = M_2 = {} (max dev {:.1e})",
        spec.m2,
        u2_explicit
            .cell_norms(&spec.sys)
            .iter()
            .map(|n| (n - spec.m2).abs())
            .fold(0.0f64, f64::max)
    );
}
