//! First-return machinery over a reference interval: records, the
//! empirical survival curve and its power-law exponent.
//!
//! Run with: cargo run --example return_times

use slowmix::curves::{fit_exponent, log_grid};
use slowmix::dynamics1d::MapSystem;
use slowmix::inducing::{first_return_time, induced_orbit, return_tail, ReferenceSet};
use slowmix::rng::stream_rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let map = MapSystem::intermittent(0.5)?;
    let j = ReferenceSet::right_half();

    // A few individual returns: escaping near the branch cut takes a long
    // excursion through the neutral region.
    for x in [0.9, 0.75, 0.51, 0.500001] {
        match first_return_time(&map, &j, x, 1_000_000)? {
            slowmix::inducing::ReturnOutcome::Returned(rec) => {
                println!("R({x}) = {} (lands at {:.6})", rec.return_time, rec.image)
            }
            slowmix::inducing::ReturnOutcome::Censored { cap, .. } => {
                println!("R({x}) > {cap} (censored)")
            }
        }
    }

    // Chained returns: the induced map f^R in action.
    let recs = induced_orbit(&map, &j, 0.87, 5, 1_000_000)?;
    let times: Vec<u64> = recs
        .iter()
        .filter_map(|o| o.record().map(|r| r.return_time))
        .collect();
    println!("first 5 return times from 0.87: {times:?}");

    // The survival curve Leb(R > N) decays like N^(-1/gamma).
    let mut rng = stream_rng(7, "example", 0);
    let grid = log_grid(10, 1_000, 12);
    let curve = return_tail(&map, &j, 300_000, &grid, 10_000_000, &mut rng)?;
    println!("\n   N     P(R > N)");
    for p in &curve.points {
        println!("{:>5}    {:.2e} ± {:.1e}", p.n, p.value, p.ci_halfwidth);
    }
    let fit = fit_exponent(&curve.fit_points(), (10.0, 1_000.0))?;
    println!(
        "\nfitted log-log slope: {:.3} ± {:.3} (1/gamma = 2 predicts -2)",
        fit.slope, fit.stderr
    );
    Ok(())
}
