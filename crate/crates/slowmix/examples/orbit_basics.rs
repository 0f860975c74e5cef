//! Orbits, Birkhoff sums and invariant sampling for the 1D maps.
//!
//! Run with: cargo run --example orbit_basics

use slowmix::dynamics1d::{
    birkhoff_sum, orbit, sample_invariant, with_frozen_mean, MapSystem, Observable,
};
use slowmix::rng::stream_rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // The doubling map: fast mixing, Lebesgue invariant.
    let doubling = MapSystem::doubling();
    let orb = orbit(&doubling, 0.1, 6)?;
    println!("doubling orbit of 0.1: {:?}", orb.points);

    // The intermittent family: a neutral fixed point at 0 slows everything
    // down. T(1/2) = 1 for every exponent.
    for gamma in [0.3, 0.5, 0.8] {
        let map = MapSystem::intermittent(gamma)?;
        println!(
            "gamma = {gamma}: T(0.25) = {:.6}, T(0.5) = {:.6}, T'(0) = {}",
            map.step(0.25)?,
            map.step(0.5)?,
            map.derivative(0.0),
        );
    }

    // Birkhoff averages of a centered indicator converge to 0.
    let map = MapSystem::intermittent(0.5)?;
    let mut rng = stream_rng(1, "example", 0);
    let obs = with_frozen_mean(&map, Observable::indicator(0.5, 1.0), 1_000_000, &mut rng)?;
    println!(
        "frozen mean of 1_[1/2,1] under the invariant measure: {:.4}",
        obs.mean_shift()
    );
    let x0 = sample_invariant(&map, 1_000, &mut rng)?;
    for n in [100u64, 10_000, 1_000_000] {
        let s = birkhoff_sum(&map, &obs, x0, n)?;
        println!("S_n/n at n = {n:>8}: {:+.5}", s / n as f64);
    }

    // Occupation near the neutral fixed point exceeds Lebesgue mass.
    let mut near_zero = 0u64;
    let samples = 50_000;
    for _ in 0..samples {
        if sample_invariant(&map, 1_000, &mut rng)? <= 0.1 {
            near_zero += 1;
        }
    }
    println!(
        "invariant mass of [0, 0.1]: {:.3} (Lebesgue would be 0.1)",
        near_zero as f64 / samples as f64
    );
    Ok(())
}
