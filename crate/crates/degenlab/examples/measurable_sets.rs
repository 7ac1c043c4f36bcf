//! Measurable-set machinery: fat Cantor sets with exact measures, the
//! Fubini slicing of a space-time observation set, and the telescoping
//! sequence around a density point.
//!
//! Run with: cargo run --release --example measurable_sets

use degenlab::geometry::{
    fat_cantor, find_density_point, slice_set, telescoping_sequence, IntervalSet, SpaceTimeSet,
};

fn main() {
    // Smith-Volterra-Cantor pre-sets: nowhere dense, positive measure
    println!("fat Cantor sets on [0,1], removal ratio 1/4:");
    for level in [1u32, 3, 6] {
        let s = fat_cantor(level, 0.25, (0.0, 1.0)).unwrap();
        println!(
            "  level {level}: {} intervals, measure = {} = {:.6}",
            s.intervals().len(),
            s.measure().unwrap(),
            s.measure_f64()
        );
    }

    // slicing: D = (fat Cantor in x) x (fat Cantor in t) inside omega x (0,T)
    let omega = IntervalSet::interval(0.25, 0.9).unwrap();
    let dx = fat_cantor(3, 0.25, (0.3, 0.85)).unwrap();
    let dt = fat_cantor(3, 0.25, (0.0, 1.0)).unwrap();
    let d = SpaceTimeSet::product(&dx, &dt).unwrap();
    let res = slice_set(&d, &omega, 1.0).unwrap();
    println!(
        "\nslicing D (measure {:.6}): threshold |D|/(2T) = {:.6}",
        d.measure_f64(),
        res.threshold
    );
    println!(
        "  E = fat time slices: measure {:.6} over {} intervals",
        res.fat_times.measure_f64(),
        res.fat_times.intervals().len()
    );
    let bound = d.measure_f64() / (2.0 * omega.measure_f64());
    println!(
        "  guaranteed bound |E| >= |D|/(2|omega|) = {:.6}: {}",
        bound,
        res.fat_times.measure_f64() >= bound
    );

    // telescoping sequence around a density point of E
    let e = fat_cantor(3, 0.25, (0.0, 1.0)).unwrap();
    let l = find_density_point(&e).unwrap().expect("density point");
    let seq = telescoping_sequence(&e, l, 0.5, 10, None).unwrap();
    println!("\ntelescoping sequence around density point l = {l:.6}, q = 1/2:");
    println!(
        "  ell_1 = {:.6}, ell_11 = {:.6}, geometric gap residual {:.1e}",
        seq.ells[0], seq.ells[10], seq.gap_identity_residual
    );
    println!(
        "  one-third measure bound margins (first 4): {:?}",
        &seq.margins[..4]
            .iter()
            .map(|m| format!("{m:.4e}"))
            .collect::<Vec<_>>()
    );
}
