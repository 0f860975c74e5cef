//! First-hitting statistics: the exponential law for stadium holes and
//! the extremal index at periodic points of 1D maps.
//!
//! Run with: cargo run --example hitting_statistics

use slowmix::billiards::StadiumTable;
use slowmix::dynamics1d::MapSystem;
use slowmix::pointproc::{
    ensemble_hitting_times, exponential_law_check, extremal_index_formula, l_alpha_s, HoleSpec,
    LalphaConfig,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // Stadium: rescaled hitting times into a boundary hole approach the
    // unit exponential law as the hole shrinks.
    let table = StadiumTable::new(1.0)?;
    println!("stadium hitting law at q = 0.8 (KS vs Exp(1), 4000 samples):");
    for r in [0.2, 0.1, 0.05] {
        let hole = HoleSpec::stadium(table, 0.8, r)?;
        let cap = (50.0 / hole.measure()).ceil() as u64;
        let samples = ensemble_hitting_times(&hole, 4_000, cap, 1_000, 21);
        let ks = exponential_law_check(&samples)?;
        println!("  r = {r:<5}: KS = {ks:.4}");
    }

    // Doubling map: at the fixed point 0 the hitting law picks up the
    // extremal index 1 - 1/|Df(0)| = 1/2; at a generic point it is 1.
    let map = MapSystem::doubling();
    let theta = extremal_index_formula(&map, 0.0, 1)?;
    println!("\nextremal index at z = 0 (closed form): {theta}");
    let cfg = LalphaConfig {
        ensemble: 4_000,
        measure_orbit_len: 5_000_000,
        ..LalphaConfig::default()
    };
    let at_zero = l_alpha_s(map, 0.0, &cfg, &[0.05, 0.02, 0.01], 22)?;
    println!("hitting-scaling estimates at z = 0:");
    for p in &at_zero {
        println!(
            "  r = {:<5}: {:.3} (CI [{:.3}, {:.3}])",
            p.r, p.estimate, p.ci_lo, p.ci_hi
        );
    }
    let generic = l_alpha_s(
        map,
        1.0 / std::f64::consts::PI,
        &cfg,
        &[0.05, 0.02, 0.01],
        23,
    )?;
    println!("hitting-scaling estimates at a generic z = 1/pi:");
    for p in &generic {
        println!(
            "  r = {:<5}: {:.3} (CI [{:.3}, {:.3}])",
            p.r, p.estimate, p.ci_lo, p.ci_hi
        );
    }

    // Periodic orbits of longer period: 1 - 2^-p for the doubling map.
    for (z, p) in [(1.0 / 3.0, 2u64), (1.0 / 7.0, 3)] {
        println!(
            "extremal index at z = {z:.4} (period {p}): {:.4} (formula 1 - 2^-{p})",
            extremal_index_formula(&map, z, p)?
        );
    }
    Ok(())
}
