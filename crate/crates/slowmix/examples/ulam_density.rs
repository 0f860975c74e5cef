//! Ulam discretization: invariant densities and transfer-operator decay.
//!
//! Run with: cargo run --example ulam_density

use slowmix::dynamics1d::MapSystem;
use slowmix::rng::stream_rng;
use slowmix::transfer::build_ulam;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // Doubling map: the stationary density is uniform and one transfer
    // step annihilates cos(2 pi x) exactly; the residue is Monte-Carlo
    // noise in the matrix.
    let mut rng = stream_rng(5, "example", 0);
    let op = build_ulam(&MapSystem::doubling(), 1_024, 200, &mut rng)?;
    let cos = op.discretize(|x| (2.0 * std::f64::consts::PI * x).cos());
    let grid: Vec<u64> = (0..=6).collect();
    let curve = op.norm_decay(&cos, 2.0, &grid, "cos(2 pi x)")?;
    println!("doubling map, k = 1024: ||P^n cos||_2");
    for &(n, v) in &curve.points {
        println!("  n = {n}: {v:.3e}");
    }
    println!(
        "fitted per-step factor: {:.3}",
        curve.per_step_factor(1e-14).unwrap()
    );

    // Intermittent map: the density blows up at the neutral fixed point.
    let map = MapSystem::intermittent(0.5)?;
    let mut rng = stream_rng(5, "example", 1);
    let op = build_ulam(&map, 2_048, 200, &mut rng)?;
    println!("\nintermittent map (gamma = 0.5), k = 2048:");
    println!("  power iteration converged in {} sweeps", op.sweeps());
    let pi = op.stationary();
    println!("  density near 0:   {:.2}", pi[0]);
    println!("  density near 1/2: {:.2}", pi[op.cell_count() / 2]);
    println!("  density near 1:   {:.2}", pi[op.cell_count() - 1]);
    println!(
        "  mass of [0, 1/4]: {:.3} (Lebesgue 0.25)",
        op.mass_of_cells(0.0, 0.25)
    );
    Ok(())
}
