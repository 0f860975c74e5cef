//! The stadium billiard map: collisions, reversibility, the mean free
//! path, and wavefront-curvature evolution along an orbit.
//!
//! Run with: cargo run --example stadium_orbits

use slowmix::billiards::{
    expansion_factor, propagate_curvature, BilliardStream, PhasePoint, StadiumTable,
};
use slowmix::rng::stream_rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let table = StadiumTable::new(1.0)?;
    println!(
        "stadium l = 1: perimeter {:.4}, area {:.4}, mean free path {:.4}",
        table.perimeter(),
        table.area(),
        table.mean_free_path()
    );

    // A bounce across the flats and the diameter orbit through the apexes.
    let [_, b1, _, b3] = table.breakpoints();
    let (hit, step) = table.step(&PhasePoint::new(b3 + 1.0, 0.0))?;
    println!(
        "bottom-flat midpoint, phi = 0: tau = {}, lands at q = {:.4} (top midpoint {:.4})",
        step.tau,
        hit.q,
        b1 + 1.0
    );

    // Reversibility: run forward, flip the angle, run back.
    let x = PhasePoint::new(0.7, 0.35);
    let (y, _) = table.step(&x)?;
    let (back, _) = table.step(&PhasePoint::new(y.q, -y.phi))?;
    println!(
        "reversibility residual: dq = {:.2e}, dphi = {:.2e}",
        (back.q - x.q).abs(),
        (back.phi + x.phi).abs()
    );

    // Wavefront curvature along a random orbit: free flight then the
    // focusing jump -2/cos(phi) on arcs, nothing on flats.
    let mut rng = stream_rng(9, "example", 0);
    let mut stream = BilliardStream::new(table, &mut rng);
    let mut b_plus = 0.0f64;
    println!("\nstep  component   tau      B+ after   expansion |1 + tau B+|");
    for i in 0..12 {
        let before = b_plus;
        let (point, step) = stream.next_collision();
        let k = table.curvature(point.q);
        let e = expansion_factor(before, step.tau);
        b_plus = propagate_curvature(before, step.tau, k, point.phi);
        println!(
            "{i:>4}  {:<11} {:.4}   {:+9.4}   {:.4}",
            step.to_component.name(),
            step.tau,
            b_plus,
            e
        );
    }

    // Ergodic average of tau approaches pi * area / perimeter.
    let mut total = 0.0;
    let n = 200_000;
    for _ in 0..n {
        let (_, step) = stream.next_collision();
        total += step.tau;
    }
    println!(
        "\nergodic mean free path over {n} collisions: {:.4} (formula {:.4})",
        total / n as f64,
        table.mean_free_path()
    );
    Ok(())
}
