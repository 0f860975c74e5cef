//! Property tests for the structural invariants of the maps, the
//! billiard, and the curve containers.

use proptest::prelude::*;

use slowmix::billiards::{expansion_factor, riemannian_norm, PhasePoint, StadiumTable};
use slowmix::curves::TailCurve;
use slowmix::dynamics1d::{birkhoff_sum, orbit, MapSystem, Observable};

proptest! {
    // The intermittent map keeps [0, 1] invariant for every exponent.
    #[test]
    fn intermittent_step_stays_in_domain(x in 0.0f64..=1.0, gamma in 0.0f64..0.99) {
        let map = MapSystem::intermittent(gamma).unwrap();
        let y = map.step(x).unwrap();
        prop_assert!((0.0..=1.0).contains(&y));
    }

    // Strict monotonicity within each branch.
    #[test]
    fn branches_are_strictly_increasing(
        a in 0.0f64..0.5,
        delta in 1e-9f64..0.4,
        gamma in 0.0f64..0.99,
        right in proptest::bool::ANY,
    ) {
        let map = MapSystem::intermittent(gamma).unwrap();
        let (x, y) = if right {
            let x = 0.5 + a.min(0.499) + 1e-12;
            (x, (x + delta).min(1.0))
        } else {
            (a, (a + delta).min(0.5))
        };
        if y > x {
            prop_assert!(map.step(x).unwrap() < map.step(y).unwrap());
        }
    }

    // Birkhoff sums telescope: S_{n+m}(x) = S_n(x) + S_m(f^n x).
    #[test]
    fn birkhoff_cocycle(x0 in 0.0f64..=1.0, n in 1u64..40, m in 1u64..40) {
        let map = MapSystem::intermittent(0.5).unwrap();
        let obs = Observable::cosine();
        let total = birkhoff_sum(&map, &obs, x0, n + m).unwrap();
        let head = birkhoff_sum(&map, &obs, x0, n).unwrap();
        let mid = orbit(&map, x0, n).unwrap().points[n as usize];
        let tail = birkhoff_sum(&map, &obs, mid, m).unwrap();
        prop_assert!((total - head - tail).abs() < 1e-9);
    }

    // One collision plus its angle-reversed partner returns home.
    #[test]
    fn billiard_step_is_reversible(
        q_frac in 0.0f64..1.0,
        phi in -1.5f64..1.5,
        l in 0.2f64..3.0,
    ) {
        let table = StadiumTable::new(l).unwrap();
        let x = PhasePoint::new(q_frac * table.perimeter(), phi);
        if let Ok((y, step)) = table.step(&x) {
            prop_assert!(step.tau > 0.0 && step.tau <= table.diameter() + 1e-9);
            if let Ok((z, _)) = table.step(&PhasePoint::new(y.q, -y.phi)) {
                let dq = (z.q - x.q).abs();
                let dq = dq.min(table.perimeter() - dq);
                prop_assert!(dq < 1e-8, "dq = {dq}");
                prop_assert!((z.phi + x.phi).abs() < 1e-8);
            }
        }
    }

    // The expansion factor is even in the chord direction and vanishes
    // exactly at the conjugate point tau = -1/B.
    #[test]
    fn expansion_factor_nonnegative(b in -50.0f64..50.0, tau in 0.0f64..10.0) {
        prop_assert!(expansion_factor(b, tau) >= 0.0);
    }

    // Riemannian length is homogeneous of degree one in the vector.
    #[test]
    fn riemannian_norm_is_homogeneous(
        dq in -5.0f64..5.0,
        dphi in -5.0f64..5.0,
        phi in -1.4f64..1.4,
        scale in 0.01f64..10.0,
    ) {
        let base = riemannian_norm(dq, dphi, phi).unwrap();
        let scaled = riemannian_norm(scale * dq, scale * dphi, phi).unwrap();
        prop_assert!((scaled - scale * base).abs() <= 1e-9 * (1.0 + scaled));
    }

    // Survival-style counts produce nonincreasing curves with valid CIs.
    #[test]
    fn tail_curves_from_monotone_counts_are_monotone(
        counts in proptest::collection::vec(0u64..1000, 2..12),
    ) {
        let mut sorted = counts.clone();
        sorted.sort_unstable_by(|a, b| b.cmp(a));
        let grid: Vec<u64> = (1..=sorted.len() as u64).collect();
        let curve = TailCurve::from_counts(&grid, &sorted, 1000, 0);
        prop_assert!(curve.is_nonincreasing());
        for p in &curve.points {
            prop_assert!((0.0..=1.0).contains(&p.value));
            prop_assert!((0.0..=1.0).contains(&p.ci_halfwidth));
        }
    }

    // Orbits satisfy the defining iteration identity everywhere.
    #[test]
    fn orbits_satisfy_iteration_invariant(x0 in 0.0f64..=1.0, n in 1u64..100) {
        let map = MapSystem::doubling();
        let orb = orbit(&map, x0, n).unwrap();
        prop_assert_eq!(orb.points.len(), n as usize + 1);
        for w in orb.points.windows(2) {
            prop_assert_eq!(w[1], map.step_unchecked(w[0]));
        }
    }
}
