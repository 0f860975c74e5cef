//! Large-deviation and maximal large-deviation tails of Birkhoff averages,
//! with moment curves and log-log exponent fits.
//!
//! For an ensemble of invariant-distributed starts this module estimates
//!
//! ```text
//! ld(N)  = mu(|S_N / N| >= eps)
//! mld(N) = mu(sup_{N <= n <= N_max} |S_n / n| >= eps)
//! ```
//!
//! where `S_n` is the Birkhoff sum of the stream's observable. The
//! mathematical sup runs over all `n >= N`; it is truncated at `N_max`
//! (default ten times the largest grid point) and the truncation horizon
//! is part of the output. [`mld_truncation_sensitivity`] quantifies the
//! discarded tail by recomputing at twice the horizon with the same member
//! seeds: the almost-sure convergence of `S_n/n` makes the difference
//! vanish, and the check reports what remains at finite range.
//!
//! Streams come in four flavors: a 1D map with an observable, centered
//! first-return times over a reference interval, centered first-return
//! times to the stadium's arc-entry set, and a synthetic i.i.d. +-1 source
//! used to validate the estimators against exact binomial oracles.

use serde::{Deserialize, Serialize};

use crate::billiards::{BilliardStream, StadiumTable, XReturnItem, XReturnStream};
use crate::curves::TailCurve;
pub use crate::curves::{fit_exponent, ExponentFit, FitError};
use crate::dynamics1d::{MapStream, MapSystem, Observable, MIN_BURN_IN};
use crate::inducing::{InducedReturnStream, ReferenceSet, ReturnStreamItem};
use crate::rng::{run_indexed, stream_rng};

/// Label used to derive ensemble-member seeds.
const MEMBER_LABEL: &str = "deviation-member";

#[derive(Debug, Clone, PartialEq)]
pub enum DeviationError {
    InvalidConfig(String),
    Dynamics(crate::dynamics1d::DynamicsError),
}

impl std::fmt::Display for DeviationError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DeviationError::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
            DeviationError::Dynamics(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for DeviationError {}

impl From<crate::dynamics1d::DynamicsError> for DeviationError {
    fn from(e: crate::dynamics1d::DynamicsError) -> Self {
        DeviationError::Dynamics(e)
    }
}

/// What feeds the Birkhoff sums.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StreamSource {
    /// `phi ∘ f^i` along an invariant-started orbit of a 1D map.
    Map1d {
        map: MapSystem,
        observable: Observable,
        burn_in: u64,
    },
    /// Centered first-return times `(R - mean) ∘ (f^R)^i` over a 1D
    /// reference interval.
    MapReturnTimes {
        map: MapSystem,
        reference: ReferenceSet,
        burn_in: u64,
        cap: u64,
        mean: f64,
    },
    /// Centered first-return times to the stadium's arc-entry set X.
    BilliardReturnTimes {
        table: StadiumTable,
        cap: u64,
        mean: f64,
    },
    /// Synthetic i.i.d. +-1 values (exact binomial oracle available).
    IidSigns,
}

impl StreamSource {
    /// Sup-norm of the stream values where one exists (used to pick eps).
    pub fn sup_norm(&self) -> Option<f64> {
        match self {
            StreamSource::Map1d { observable, .. } => Some(observable.sup_norm()),
            StreamSource::IidSigns => Some(1.0),
            _ => None,
        }
    }

    /// Materializes member `index`; identical `(master_seed, index)` gives
    /// the identical stream.
    pub fn member(&self, master_seed: u64, index: u64) -> MemberStream {
        let mut rng = stream_rng(master_seed, MEMBER_LABEL, index);
        let state = match self {
            StreamSource::Map1d {
                map,
                observable,
                burn_in,
            } => {
                let stream = MapStream::from_invariant(map, (*burn_in).max(MIN_BURN_IN), &mut rng)
                    .expect("burn-in validated at construction");
                MemberState::MapObs {
                    stream,
                    obs: observable.clone(),
                }
            }
            StreamSource::MapReturnTimes {
                map,
                reference,
                burn_in,
                cap,
                mean,
            } => {
                let stream = MapStream::from_invariant(map, (*burn_in).max(MIN_BURN_IN), &mut rng)
                    .expect("burn-in validated at construction");
                match InducedReturnStream::new(stream, *reference, *cap) {
                    Some(s) => MemberState::MapReturns {
                        stream: s,
                        mean: *mean,
                        cap: *cap,
                    },
                    None => MemberState::Dead,
                }
            }
            StreamSource::BilliardReturnTimes { table, cap, mean } => {
                let stream = BilliardStream::new(*table, &mut rng);
                match XReturnStream::new(stream, *cap) {
                    Some(s) => MemberState::BilliardReturns {
                        stream: s,
                        mean: *mean,
                        cap: *cap,
                    },
                    None => MemberState::Dead,
                }
            }
            StreamSource::IidSigns => MemberState::Signs { rng },
        };
        MemberStream { state, censored: 0 }
    }
}

/// One ensemble member's value stream.
pub struct MemberStream {
    state: MemberState,
    censored: u64,
}

enum MemberState {
    MapObs {
        stream: MapStream,
        obs: Observable,
    },
    MapReturns {
        stream: InducedReturnStream,
        mean: f64,
        cap: u64,
    },
    BilliardReturns {
        stream: XReturnStream,
        mean: f64,
        cap: u64,
    },
    Signs {
        rng: rand_chacha::ChaCha8Rng,
    },
    /// Anchoring failed within the cap; contributes zeros and a censor
    /// mark rather than stalling the ensemble.
    Dead,
}

impl MemberStream {
    /// Next stream value. Censored return-time searches contribute the cap
    /// (centered) and are counted in [`censored`](Self::censored).
    pub fn next_value(&mut self) -> f64 {
        match &mut self.state {
            MemberState::MapObs { stream, obs } => {
                let v = obs.eval(stream.current());
                stream.advance();
                v
            }
            MemberState::MapReturns { stream, mean, cap } => match stream.next_return() {
                ReturnStreamItem::Time(k) => k as f64 - *mean,
                ReturnStreamItem::Censored => {
                    self.censored += 1;
                    *cap as f64 - *mean
                }
            },
            MemberState::BilliardReturns { stream, mean, cap } => match stream.next_return() {
                XReturnItem::Time(k) => k as f64 - *mean,
                XReturnItem::Censored => {
                    self.censored += 1;
                    *cap as f64 - *mean
                }
            },
            MemberState::Signs { rng } => {
                if crate::rng::uniform_unit(rng) < 0.5 {
                    -1.0
                } else {
                    1.0
                }
            }
            MemberState::Dead => {
                self.censored += 1;
                0.0
            }
        }
    }

    pub fn censored(&self) -> u64 {
        self.censored
    }
}

/// Ensemble and grid parameters for tail estimation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeviationConfig {
    /// Deviation threshold for |S_n / n|.
    pub epsilon: f64,
    /// Increasing horizons N at which the tails are recorded.
    pub n_grid: Vec<u64>,
    /// Truncation horizon for the sup in the maximal tail.
    pub n_max: u64,
    /// Ensemble size.
    pub ensemble: u64,
    /// Even moment order 2p for [`moment_curve`].
    pub moment_order: u32,
}

impl DeviationConfig {
    /// Grid from `lo` to `hi`, horizon ten times the largest grid point.
    pub fn new(epsilon: f64, n_grid: Vec<u64>, ensemble: u64) -> Self {
        let n_max = n_grid.last().copied().unwrap_or(1) * 10;
        DeviationConfig {
            epsilon,
            n_grid,
            n_max,
            ensemble,
            moment_order: 2,
        }
    }

    pub fn validate(&self) -> Result<(), DeviationError> {
        if !(self.epsilon > 0.0) {
            return Err(DeviationError::InvalidConfig(
                "epsilon must be positive".into(),
            ));
        }
        if self.n_grid.is_empty() {
            return Err(DeviationError::InvalidConfig(
                "n_grid must be nonempty".into(),
            ));
        }
        if self.n_grid[0] == 0 || !self.n_grid.windows(2).all(|w| w[0] < w[1]) {
            return Err(DeviationError::InvalidConfig(
                "n_grid must be strictly increasing and start at N >= 1".into(),
            ));
        }
        if self.n_grid.len() > 64 {
            return Err(DeviationError::InvalidConfig(
                "n_grid is limited to 64 points".into(),
            ));
        }
        if self.n_max < *self.n_grid.last().unwrap() {
            return Err(DeviationError::InvalidConfig(
                "n_max must be at least the largest grid point".into(),
            ));
        }
        if self.ensemble == 0 {
            return Err(DeviationError::InvalidConfig(
                "ensemble must be positive".into(),
            ));
        }
        if self.moment_order < 2 || !self.moment_order.is_multiple_of(2) {
            return Err(DeviationError::InvalidConfig(
                "moment_order must be an even integer >= 2".into(),
            ));
        }
        Ok(())
    }
}

/// Joint ld/mld tails over shared ensembles, for a family of thresholds.
///
/// Sharing the ensemble makes the domination `mld >= ld` and the
/// monotonicity in `eps` exact member by member, not just in expectation.
#[derive(Debug, Clone)]
pub struct LdMldProfile {
    pub epsilons: Vec<f64>,
    pub n_grid: Vec<u64>,
    pub n_max: u64,
    /// One ld curve per epsilon.
    pub ld: Vec<TailCurve>,
    /// One mld curve per epsilon.
    pub mld: Vec<TailCurve>,
}

/// Per-member tail flags for every (epsilon, grid point) pair, packed as
/// bit masks over the grid.
fn member_masks(
    src: &StreamSource,
    master_seed: u64,
    index: u64,
    n_grid: &[u64],
    n_max: u64,
    epsilons: &[f64],
    abs_means: &mut Vec<f64>,
) -> (Vec<u64>, Vec<u64>, u64) {
    let mut member = src.member(master_seed, index);
    abs_means.clear();
    abs_means.reserve(n_max as usize);
    let mut sum = 0.0f64;
    for n in 1..=n_max {
        sum += member.next_value();
        abs_means.push((sum / n as f64).abs());
    }
    let mut ld_masks = vec![0u64; epsilons.len()];
    let mut mld_masks = vec![0u64; epsilons.len()];
    for (gi, &n) in n_grid.iter().enumerate() {
        let v = abs_means[(n - 1) as usize];
        for (ei, &eps) in epsilons.iter().enumerate() {
            if v >= eps {
                ld_masks[ei] |= 1 << gi;
            }
        }
    }
    // Suffix maxima of |S_n/n| evaluated at the grid points.
    let mut run_max = f64::NEG_INFINITY;
    let mut gi = n_grid.len();
    for n in (1..=n_max).rev() {
        run_max = run_max.max(abs_means[(n - 1) as usize]);
        while gi > 0 && n_grid[gi - 1] == n {
            gi -= 1;
            for (ei, &eps) in epsilons.iter().enumerate() {
                if run_max >= eps {
                    mld_masks[ei] |= 1 << gi;
                }
            }
        }
    }
    (ld_masks, mld_masks, member.censored())
}

/// Estimates ld and mld tails for every threshold in `epsilons` over one
/// shared ensemble.
pub fn ld_mld_profile(
    src: &StreamSource,
    n_grid: &[u64],
    n_max: u64,
    epsilons: &[f64],
    ensemble: u64,
    master_seed: u64,
) -> Result<LdMldProfile, DeviationError> {
    let check = DeviationConfig {
        epsilon: epsilons.iter().copied().fold(f64::INFINITY, f64::min),
        n_grid: n_grid.to_vec(),
        n_max,
        ensemble,
        moment_order: 2,
    };
    check.validate()?;
    use rayon::prelude::*;
    let per_member: Vec<(Vec<u64>, Vec<u64>, u64)> = (0..ensemble as usize)
        .into_par_iter()
        .map_init(Vec::new, |buf, i| {
            member_masks(src, master_seed, i as u64, n_grid, n_max, epsilons, buf)
        })
        .collect();
    let mut ld_counts = vec![vec![0u64; n_grid.len()]; epsilons.len()];
    let mut mld_counts = vec![vec![0u64; n_grid.len()]; epsilons.len()];
    let mut censored = 0u64;
    for (ld_masks, mld_masks, c) in &per_member {
        censored += u64::from(*c > 0);
        for ei in 0..epsilons.len() {
            for gi in 0..n_grid.len() {
                ld_counts[ei][gi] += (ld_masks[ei] >> gi) & 1;
                mld_counts[ei][gi] += (mld_masks[ei] >> gi) & 1;
            }
        }
    }
    let ld = ld_counts
        .into_iter()
        .map(|c| TailCurve::from_counts(n_grid, &c, ensemble, censored))
        .collect();
    let mld = mld_counts
        .into_iter()
        .map(|c| TailCurve::from_counts(n_grid, &c, ensemble, censored))
        .collect();
    Ok(LdMldProfile {
        epsilons: epsilons.to_vec(),
        n_grid: n_grid.to_vec(),
        n_max,
        ld,
        mld,
    })
}

/// Plain large-deviation tail `mu(|S_N/N| >= eps)` over the grid.
pub fn ld_tail(
    src: &StreamSource,
    cfg: &DeviationConfig,
    master_seed: u64,
) -> Result<TailCurve, DeviationError> {
    cfg.validate()?;
    let profile = ld_mld_profile(
        src,
        &cfg.n_grid,
        cfg.n_max,
        &[cfg.epsilon],
        cfg.ensemble,
        master_seed,
    )?;
    Ok(profile.ld.into_iter().next().unwrap())
}

/// Maximal large-deviation tail with its truncation horizon.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MldCurve {
    pub curve: TailCurve,
    /// The sup over n >= N was truncated at this horizon.
    pub horizon: u64,
}

/// Maximal large-deviation tail
/// `mu(max_{N <= n <= N_max} |S_n/n| >= eps)` over the grid.
pub fn mld_tail(
    src: &StreamSource,
    cfg: &DeviationConfig,
    master_seed: u64,
) -> Result<MldCurve, DeviationError> {
    cfg.validate()?;
    let profile = ld_mld_profile(
        src,
        &cfg.n_grid,
        cfg.n_max,
        &[cfg.epsilon],
        cfg.ensemble,
        master_seed,
    )?;
    Ok(MldCurve {
        curve: profile.mld.into_iter().next().unwrap(),
        horizon: cfg.n_max,
    })
}

/// Recomputes the mld tail at horizons `N_max` and `2 N_max` with the same
/// member seeds and reports the largest pointwise difference; a difference
/// below the confidence width means the sup truncation is not biasing the
/// curve.
pub fn mld_truncation_sensitivity(
    src: &StreamSource,
    cfg: &DeviationConfig,
    master_seed: u64,
) -> Result<(MldCurve, MldCurve, f64), DeviationError> {
    let base = mld_tail(src, cfg, master_seed)?;
    let mut wide_cfg = cfg.clone();
    wide_cfg.n_max = cfg.n_max * 2;
    let wide = mld_tail(src, &wide_cfg, master_seed)?;
    let max_diff = base
        .curve
        .points
        .iter()
        .zip(&wide.curve.points)
        .map(|(a, b)| (a.value - b.value).abs())
        .fold(0.0f64, f64::max);
    Ok((base, wide, max_diff))
}

/// One point of a moment curve, with its Monte-Carlo standard error.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MomentPoint {
    pub n: u64,
    pub value: f64,
    pub stderr: f64,
}

/// Ensemble moment estimates over the grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MomentCurve {
    pub points: Vec<MomentPoint>,
    /// The even order 2p.
    pub order: u32,
}

/// The two moment laws measured together: `E|S_N/N|^{2p}` and the
/// windowed-suffix maximum `E(max_{n<=N} |sum_{n<=i<=N} v_i| / N)^{2p}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MomentCurves {
    pub plain: MomentCurve,
    pub windowed_max: MomentCurve,
}

/// Estimates both moment curves over the grid.
pub fn moment_curve(
    src: &StreamSource,
    cfg: &DeviationConfig,
    master_seed: u64,
) -> Result<MomentCurves, DeviationError> {
    cfg.validate()?;
    let order = cfg.moment_order;
    let grid = cfg.n_grid.clone();
    let per_member: Vec<(Vec<f64>, Vec<f64>)> = run_indexed(cfg.ensemble as usize, |i| {
        let mut member = src.member(master_seed, i as u64);
        let mut plain = Vec::with_capacity(grid.len());
        let mut winmax = Vec::with_capacity(grid.len());
        let mut sum = 0.0f64;
        let mut prefix_min = 0.0f64;
        let mut prefix_max = 0.0f64;
        let mut gi = 0;
        for n in 1..=*grid.last().unwrap() {
            // Prefix extremes over S_0 .. S_{n-1}, updated before S_n.
            prefix_min = prefix_min.min(sum);
            prefix_max = prefix_max.max(sum);
            sum += member.next_value();
            if gi < grid.len() && grid[gi] == n {
                let nf = n as f64;
                plain.push((sum / nf).abs().powi(order as i32));
                let w = (sum - prefix_min).max(prefix_max - sum);
                winmax.push((w / nf).powi(order as i32));
                gi += 1;
            }
        }
        (plain, winmax)
    });
    let collect = |select: &dyn Fn(&(Vec<f64>, Vec<f64>)) -> &Vec<f64>| -> MomentCurve {
        let points = grid
            .iter()
            .enumerate()
            .map(|(gi, &n)| {
                let vals: Vec<f64> = per_member.iter().map(|m| select(m)[gi]).collect();
                let (mean, _) = crate::stats::mean_and_variance(&vals);
                MomentPoint {
                    n,
                    value: mean,
                    stderr: crate::stats::stderr_of_mean(&vals),
                }
            })
            .collect();
        MomentCurve { points, order }
    };
    Ok(MomentCurves {
        plain: collect(&|m| &m.0),
        windowed_max: collect(&|m| &m.1),
    })
}

/// Mean first-return time over `samples` returns of one long induced
/// orbit; used to freeze the centering of return-time streams.
pub fn calibrate_map_return_mean(
    map: &MapSystem,
    reference: &ReferenceSet,
    cap: u64,
    samples: u64,
    master_seed: u64,
) -> Result<f64, DeviationError> {
    let mut rng = stream_rng(master_seed, "return-mean-1d", 0);
    let stream = MapStream::from_invariant(map, MIN_BURN_IN, &mut rng)?;
    let mut induced = InducedReturnStream::new(stream, *reference, cap).ok_or_else(|| {
        DeviationError::InvalidConfig("orbit never entered the reference set".into())
    })?;
    let mut total = 0u64;
    let mut kept = 0u64;
    for _ in 0..samples {
        if let ReturnStreamItem::Time(k) = induced.next_return() {
            total += k;
            kept += 1;
        }
    }
    if kept == 0 {
        return Err(DeviationError::InvalidConfig(
            "all return-time samples were censored".into(),
        ));
    }
    Ok(total as f64 / kept as f64)
}

/// Mean first-return time to the stadium's arc-entry set.
pub fn calibrate_billiard_return_mean(
    table: &StadiumTable,
    cap: u64,
    samples: u64,
    master_seed: u64,
) -> Result<f64, DeviationError> {
    let mut rng = stream_rng(master_seed, "return-mean-billiard", 0);
    let stream = BilliardStream::new(*table, &mut rng);
    let mut xs = XReturnStream::new(stream, cap)
        .ok_or_else(|| DeviationError::InvalidConfig("orbit never entered X".into()))?;
    let mut total = 0u64;
    let mut kept = 0u64;
    for _ in 0..samples {
        if let XReturnItem::Time(k) = xs.next_return() {
            total += k;
            kept += 1;
        }
    }
    if kept == 0 {
        return Err(DeviationError::InvalidConfig(
            "all billiard return samples were censored".into(),
        ));
    }
    Ok(total as f64 / kept as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn signs() -> StreamSource {
        StreamSource::IidSigns
    }

    /// Exact two-sided binomial tail P(|2 Bin(n,1/2) - n| >= eps n).
    fn binomial_two_sided(n: u64, eps: f64) -> f64 {
        let lower = ((1.0 - eps) * n as f64 / 2.0).floor();
        let mut pmf = 0.5f64.powi(n as i32);
        let mut acc = 0.0;
        let mut prob_le_lower = 0.0;
        for k in 0..=n {
            if (k as f64) <= lower {
                prob_le_lower += pmf;
            }
            acc += pmf;
            pmf *= (n - k) as f64 / (k + 1) as f64;
        }
        debug_assert!((acc - 1.0).abs() < 1e-9);
        // Symmetric law: mass >= upper threshold equals mass <= lower.
        2.0 * prob_le_lower
    }

    #[test]
    fn zero_observable_gives_zero_tails() {
        let src = StreamSource::Map1d {
            map: MapSystem::doubling(),
            observable: Observable::constant(0.0),
            burn_in: 1_000,
        };
        let cfg = DeviationConfig::new(0.1, vec![5, 10, 20], 200);
        let ld = ld_tail(&src, &cfg, 1).unwrap();
        let mld = mld_tail(&src, &cfg, 1).unwrap();
        assert!(ld.points.iter().all(|p| p.value == 0.0));
        assert!(mld.curve.points.iter().all(|p| p.value == 0.0));
    }

    #[test]
    fn epsilon_above_sup_norm_gives_zero_tail() {
        let obs = Observable::indicator(0.5, 1.0).with_mean_shift(0.5);
        let src = StreamSource::Map1d {
            map: MapSystem::doubling(),
            observable: obs.clone(),
            burn_in: 1_000,
        };
        let cfg = DeviationConfig::new(obs.sup_norm() * 1.01, vec![5, 10], 500);
        let ld = ld_tail(&src, &cfg, 2).unwrap();
        assert!(ld.points.iter().all(|p| p.value == 0.0));
    }

    #[test]
    fn iid_ld_matches_exact_binomial_tail() {
        let cfg = DeviationConfig::new(0.1, vec![100], 20_000);
        let ld = ld_tail(&signs(), &cfg, 3).unwrap();
        let exact = binomial_two_sided(100, 0.1);
        let emp = ld.points[0].value;
        let tol = 4.0 * (exact * (1.0 - exact) / 20_000.0).sqrt() + 1e-4;
        assert!(
            (emp - exact).abs() < tol,
            "empirical {emp} vs exact {exact}"
        );

        // At eps = 0.5 the exact tail is ~5.6e-7: empirically zero.
        let cfg_big = DeviationConfig::new(0.5, vec![100], 20_000);
        let ld_big = ld_tail(&signs(), &cfg_big, 3).unwrap();
        let exact_big = binomial_two_sided(100, 0.5);
        assert!(exact_big < 1e-6);
        assert!((ld_big.points[0].value - exact_big).abs() < 5e-4);
    }

    #[test]
    fn domination_and_monotonicity_are_exact() {
        let obs = Observable::indicator(0.5, 1.0).with_mean_shift(0.5);
        let src = StreamSource::Map1d {
            map: MapSystem::doubling(),
            observable: obs,
            burn_in: 1_000,
        };
        let grid = vec![4, 8, 16, 32, 64];
        let epsilons = [0.05, 0.1, 0.2, 0.4];
        let profile = ld_mld_profile(&src, &grid, 640, &epsilons, 3_000, 4).unwrap();
        for ei in 0..epsilons.len() {
            // mld dominates ld pointwise and is monotone in N.
            for gi in 0..grid.len() {
                assert!(profile.mld[ei].points[gi].value >= profile.ld[ei].points[gi].value);
                assert!(profile.ld[ei].points[gi].value <= 1.0);
            }
            assert!(profile.mld[ei].is_nonincreasing());
            // Both monotone in epsilon at every N.
            if ei > 0 {
                for gi in 0..grid.len() {
                    assert!(profile.ld[ei].points[gi].value <= profile.ld[ei - 1].points[gi].value);
                    assert!(
                        profile.mld[ei].points[gi].value <= profile.mld[ei - 1].points[gi].value
                    );
                }
            }
        }
    }

    #[test]
    fn iid_second_moment_is_one_over_n() {
        let mut cfg = DeviationConfig::new(0.1, vec![100, 1_000], 4_000);
        cfg.n_max = 1_000;
        cfg.moment_order = 2;
        let curves = moment_curve(&signs(), &cfg, 5).unwrap();
        for p in &curves.plain.points {
            let expected = 1.0 / p.n as f64;
            assert!(
                (p.value - expected).abs() <= 3.0 * p.stderr,
                "N = {}: {} vs {} (stderr {})",
                p.n,
                p.value,
                expected,
                p.stderr
            );
        }
        // The windowed maximum dominates the plain moment at every N.
        for (a, b) in curves.plain.points.iter().zip(&curves.windowed_max.points) {
            assert!(b.value >= a.value);
        }
    }

    #[test]
    fn zero_stream_moments_vanish() {
        let src = StreamSource::Map1d {
            map: MapSystem::doubling(),
            observable: Observable::constant(0.0),
            burn_in: 1_000,
        };
        let mut cfg = DeviationConfig::new(0.1, vec![10, 100], 100);
        cfg.moment_order = 4;
        let curves = moment_curve(&src, &cfg, 6).unwrap();
        assert!(curves.plain.points.iter().all(|p| p.value == 0.0));
        assert!(curves.windowed_max.points.iter().all(|p| p.value == 0.0));
    }

    #[test]
    fn truncation_sensitivity_small_on_doubling_baseline() {
        let obs = Observable::indicator(0.0, 0.5).with_mean_shift(0.5);
        let src = StreamSource::Map1d {
            map: MapSystem::doubling(),
            observable: obs,
            burn_in: 1_000,
        };
        let cfg = DeviationConfig::new(0.1, vec![20, 40, 80], 2_000);
        let (base, _, max_diff) = mld_truncation_sensitivity(&src, &cfg, 7).unwrap();
        let max_ci = base
            .curve
            .points
            .iter()
            .map(|p| p.ci_halfwidth)
            .fold(0.0f64, f64::max);
        assert!(
            max_diff <= max_ci.max(1e-3),
            "horizon sensitivity {max_diff} vs CI {max_ci}"
        );
    }

    #[test]
    fn return_time_stream_has_negative_mld_slope() {
        // Centered return times over J for the intermittent map: the
        // maximal tail must decay with a strictly negative fitted slope.
        let map = MapSystem::intermittent(0.5).unwrap();
        let j = ReferenceSet::right_half();
        let mean = calibrate_map_return_mean(&map, &j, 1_000_000, 200_000, 11).unwrap();
        let src = StreamSource::MapReturnTimes {
            map,
            reference: j,
            burn_in: 1_000,
            cap: 1_000_000,
            mean,
        };
        let grid = vec![20, 40, 80, 160, 320];
        let cfg = DeviationConfig::new(0.35, grid, 2_000);
        let mld = mld_tail(&src, &cfg, 12).unwrap();
        let fit = fit_exponent(&mld.curve.fit_points(), (1.0, 1e9)).unwrap();
        assert!(fit.slope < -0.2, "slope {}", fit.slope);
    }

    #[test]
    fn billiard_return_stream_has_negative_mld_slope() {
        let table = crate::billiards::StadiumTable::new(1.0).unwrap();
        let mean = calibrate_billiard_return_mean(&table, 100_000, 30_000, 13).unwrap();
        let src = StreamSource::BilliardReturnTimes {
            table,
            cap: 100_000,
            mean,
        };
        let grid = vec![10, 20, 40, 80, 160];
        let cfg = DeviationConfig::new(0.6, grid, 300);
        let mld = mld_tail(&src, &cfg, 14).unwrap();
        assert!(mld.curve.is_nonincreasing());
        let fit = fit_exponent(&mld.curve.fit_points(), (1.0, 1e9)).unwrap();
        assert!(fit.slope < -0.1, "slope {}", fit.slope);
        assert_eq!(mld.curve.censored, 0);
    }

    #[test]
    fn member_streams_reproduce() {
        let src = StreamSource::Map1d {
            map: MapSystem::intermittent(0.5).unwrap(),
            observable: Observable::coordinate(),
            burn_in: 1_000,
        };
        let pull = || {
            let mut m = src.member(42, 7);
            (0..50).map(|_| m.next_value()).collect::<Vec<f64>>()
        };
        assert_eq!(pull(), pull());
    }

    #[test]
    fn config_validation_messages() {
        let mut cfg = DeviationConfig::new(0.1, vec![10, 5], 100);
        assert!(cfg.validate().is_err());
        cfg.n_grid = vec![5, 10];
        cfg.n_max = 3;
        assert!(cfg.validate().is_err());
        cfg.n_max = 100;
        cfg.moment_order = 3;
        assert!(cfg.validate().is_err());
        cfg.moment_order = 2;
        assert!(cfg.validate().is_ok());
    }
}
