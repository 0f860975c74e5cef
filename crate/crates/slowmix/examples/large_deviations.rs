//! Large-deviation vs maximal large-deviation tails, with the exponent
//! fit that recovers the polynomial mixing rate.
//!
//! Run with: cargo run --example large_deviations

use slowmix::curves::{fit_exponent, log_grid};
use slowmix::deviations::{ld_mld_profile, moment_curve, DeviationConfig, StreamSource};
use slowmix::dynamics1d::{with_frozen_mean, MapSystem, Observable};
use slowmix::rng::stream_rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // Validate the machinery on an i.i.d. stream first: E(S_N/N)^2 = 1/N.
    let mut cfg = DeviationConfig::new(0.1, vec![100, 1_000], 3_000);
    cfg.n_max = 1_000;
    let moments = moment_curve(&StreamSource::IidSigns, &cfg, 1)?;
    println!("i.i.d. +-1 second moments (exact value 1/N):");
    for p in &moments.plain.points {
        println!("  N = {:>5}: {:.3e} ± {:.1e}", p.n, p.value, p.stderr);
    }

    // The intermittent map with a centered indicator: orbits trapped near
    // the neutral fixed point keep |S_n/n| large for long stretches, and
    // the maximal tail decays like N^{-(1/gamma - 1)}.
    let map = MapSystem::intermittent(0.5)?;
    let mut rng = stream_rng(2, "example", 0);
    let obs = with_frozen_mean(&map, Observable::indicator(0.5, 1.0), 5_000_000, &mut rng)?;
    let eps = 0.2 * obs.sup_norm();
    let src = StreamSource::Map1d {
        map,
        observable: obs,
        burn_in: 1_000,
    };
    let grid = log_grid(100, 1_000, 6);
    let profile = ld_mld_profile(&src, &grid, 10_000, &[eps], 4_000, 2)?;
    println!("\nintermittent map, eps = {eps:.3}:");
    println!("   N      ld(N)      mld(N)");
    for (gi, &n) in grid.iter().enumerate() {
        println!(
            "{:>6}   {:.2e}   {:.2e}",
            n, profile.ld[0].points[gi].value, profile.mld[0].points[gi].value
        );
    }
    let fit = fit_exponent(&profile.mld[0].fit_points(), (1.0, 1e9))?;
    println!(
        "mld slope: {:.3} ± {:.3} (gamma = 0.5 predicts -1)",
        fit.slope, fit.stderr
    );
    Ok(())
}
