//! Dynamical point processes into small holes: first hitting times, the
//! exponential law, Poisson approximation of window counts in total
//! variation, the hitting-scaling estimator L_{alpha,s}, and the
//! closed-form extremal index at periodic points.
//!
//! A hole is a metric ball: `B_r(z)` in [0, 1] for a 1D map, or the full
//! cylinder `B_r(q) x S^1` over an arc-length ball on the stadium
//! boundary. Hitting indices are rescaled by the hole measure, which makes
//! the hit times of a well-mixing orbit approach a unit-rate Poisson
//! process; everything here quantifies that approach at finite radius.
//!
//! The billiard hole measure is exact (`2r / perimeter`: the q-marginal of
//! the collision measure is uniform). The 1D hole measure is estimated as
//! the occupation fraction of a long orbit and carries a confidence width
//! computed as if the visits were independent, which understates the
//! correlated-orbit uncertainty; it is reported for scale, not inference.

use serde::{Deserialize, Serialize};

use crate::billiards::{BilliardStream, PhasePoint, StadiumTable};
use crate::dynamics1d::{DynamicsError, MapStream, MapSystem, MIN_BURN_IN};
use crate::rng::{run_indexed, stream_rng};
use crate::stats;

/// Minimum uncensored samples for the exponential-law KS check.
pub const MIN_KS_SAMPLES: usize = 1_000;

/// Tolerance for the periodicity precondition of the extremal index.
pub const PERIODICITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum PointProcError {
    InvalidHole(String),
    /// System kind and start-point kind do not match.
    SystemMismatch,
    InsufficientSamples {
        have: usize,
        need: usize,
    },
    /// `z` does not return to itself after `p` steps within tolerance.
    NotPeriodic {
        z: f64,
        period: u64,
        drift: f64,
    },
    InvalidParameter(String),
    Dynamics(DynamicsError),
}

impl std::fmt::Display for PointProcError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PointProcError::InvalidHole(msg) => write!(f, "invalid hole: {msg}"),
            PointProcError::SystemMismatch => write!(f, "start point does not match the system"),
            PointProcError::InsufficientSamples { have, need } => {
                write!(f, "need {need} uncensored samples, have {have}")
            }
            PointProcError::NotPeriodic { z, period, drift } => {
                write!(f, "{z} is not {period}-periodic (drift {drift:.3e})")
            }
            PointProcError::InvalidParameter(msg) => write!(f, "invalid parameter: {msg}"),
            PointProcError::Dynamics(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for PointProcError {}

impl From<DynamicsError> for PointProcError {
    fn from(e: DynamicsError) -> Self {
        PointProcError::Dynamics(e)
    }
}

/// The dynamical system a hole lives in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum HoleSystem {
    Map1d(MapSystem),
    Stadium(StadiumTable),
}

/// A hole with its (exact or estimated) invariant measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoleSpec {
    system: HoleSystem,
    /// z in [0, 1] for maps, boundary arc length q for the stadium.
    center: f64,
    radius: f64,
    measure: f64,
    /// 95% half-width of the measure estimate (0 when analytic).
    measure_ci: f64,
}

impl HoleSpec {
    /// Stadium hole `B_r(q) x S^1` with its exact measure `2r/perimeter`
    /// (arc-length ball; the q-marginal of the collision measure is
    /// uniform, so the formula holds for any center).
    pub fn stadium(
        table: StadiumTable,
        q_center: f64,
        radius: f64,
    ) -> Result<Self, PointProcError> {
        if !(radius > 0.0) || 2.0 * radius >= table.perimeter() {
            return Err(PointProcError::InvalidHole(format!(
                "radius {radius} out of range for perimeter {}",
                table.perimeter()
            )));
        }
        Ok(HoleSpec {
            system: HoleSystem::Stadium(table),
            center: table.wrap_q(q_center),
            radius,
            measure: 2.0 * radius / table.perimeter(),
            measure_ci: 0.0,
        })
    }

    /// 1D hole `B_r(z)` with measure estimated by the occupation fraction
    /// of an `orbit_len`-step invariant-started orbit.
    pub fn map1d(
        map: MapSystem,
        z: f64,
        radius: f64,
        orbit_len: u64,
        master_seed: u64,
    ) -> Result<Self, PointProcError> {
        let measures = estimate_hole_measures(&map, z, &[radius], orbit_len, master_seed)?;
        let (measure, measure_ci) = measures[0];
        if !(measure > 0.0 && measure < 1.0) {
            return Err(PointProcError::InvalidHole(format!(
                "estimated measure {measure} outside (0, 1)"
            )));
        }
        Ok(HoleSpec {
            system: HoleSystem::Map1d(map),
            center: z,
            radius,
            measure,
            measure_ci,
        })
    }

    /// 1D hole with an externally supplied measure estimate (used when a
    /// batch of radii shares one estimation orbit).
    pub fn map1d_with_measure(
        map: MapSystem,
        z: f64,
        radius: f64,
        measure: f64,
        measure_ci: f64,
    ) -> Result<Self, PointProcError> {
        if !(0.0..=1.0).contains(&z) || !(radius > 0.0) {
            return Err(PointProcError::InvalidHole(format!(
                "z = {z}, r = {radius}"
            )));
        }
        if !(measure > 0.0 && measure < 1.0) {
            return Err(PointProcError::InvalidHole(format!(
                "measure {measure} outside (0, 1)"
            )));
        }
        Ok(HoleSpec {
            system: HoleSystem::Map1d(map),
            center: z,
            radius,
            measure,
            measure_ci,
        })
    }

    pub fn system(&self) -> HoleSystem {
        self.system
    }

    pub fn center(&self) -> f64 {
        self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn measure(&self) -> f64 {
        self.measure
    }

    pub fn measure_ci(&self) -> f64 {
        self.measure_ci
    }

    /// Membership of a 1D point.
    #[inline]
    pub fn contains_x(&self, x: f64) -> bool {
        (x - self.center).abs() < self.radius
    }

    /// Membership of a billiard collision (any angle).
    #[inline]
    pub fn contains_q(&self, q: f64, table: &StadiumTable) -> bool {
        let d = (q - self.center).abs();
        d.min(table.perimeter() - d) < self.radius
    }
}

/// Occupation-fraction measures of the nested holes `B_r(z)` for every r
/// in `r_grid`, from a single long orbit.
pub fn estimate_hole_measures(
    map: &MapSystem,
    z: f64,
    r_grid: &[f64],
    orbit_len: u64,
    master_seed: u64,
) -> Result<Vec<(f64, f64)>, PointProcError> {
    if r_grid.is_empty() || r_grid.iter().any(|r| !(*r > 0.0)) {
        return Err(PointProcError::InvalidParameter(
            "radii must be positive".into(),
        ));
    }
    if orbit_len == 0 {
        return Err(PointProcError::InvalidParameter(
            "orbit_len must be positive".into(),
        ));
    }
    let mut rng = stream_rng(master_seed, "hole-measure", 0);
    let mut stream = MapStream::from_invariant(map, MIN_BURN_IN, &mut rng)?;
    let r_max = r_grid.iter().copied().fold(0.0f64, f64::max);
    let mut counts = vec![0u64; r_grid.len()];
    let mut x = stream.current();
    for _ in 0..orbit_len {
        let d = (x - z).abs();
        if d < r_max {
            for (c, &r) in counts.iter_mut().zip(r_grid) {
                if d < r {
                    *c += 1;
                }
            }
        }
        x = stream.advance();
    }
    Ok(counts
        .iter()
        .map(|&c| {
            (
                c as f64 / orbit_len as f64,
                stats::wilson_halfwidth(c, orbit_len),
            )
        })
        .collect())
}

/// A starting condition matching the hole's system kind.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StartPoint {
    Map(f64),
    Billiard(PhasePoint),
}

/// One first-hitting observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HittingSample {
    /// Raw hitting index (>= 1); the cap if censored.
    pub tau: u64,
    /// tau times the hole measure.
    pub rescaled: f64,
    pub censored: bool,
}

/// First index `n >= 1` whose iterate lies in the hole, capped. Censoring
/// is flagged, never an exception.
pub fn hitting_time(
    hole: &HoleSpec,
    start: StartPoint,
    cap: u64,
    master_seed: u64,
) -> Result<HittingSample, PointProcError> {
    if cap == 0 {
        return Err(PointProcError::InvalidParameter("cap must be >= 1".into()));
    }
    let tau = match (hole.system, start) {
        (HoleSystem::Map1d(map), StartPoint::Map(x0)) => {
            let mut stream = MapStream::from_point(&map, x0)?;
            let mut hit = None;
            for n in 1..=cap {
                if hole.contains_x(stream.advance()) {
                    hit = Some(n);
                    break;
                }
            }
            hit
        }
        (HoleSystem::Stadium(table), StartPoint::Billiard(x0)) => {
            let mut rng = stream_rng(master_seed, "hitting-fixed", 0);
            let mut stream = BilliardStream::from_point(table, x0, &mut rng);
            let mut hit = None;
            for n in 1..=cap {
                let (point, _) = stream.next_collision();
                if hole.contains_q(point.q, &table) {
                    hit = Some(n);
                    break;
                }
            }
            hit
        }
        _ => return Err(PointProcError::SystemMismatch),
    };
    Ok(match tau {
        Some(n) => HittingSample {
            tau: n,
            rescaled: n as f64 * hole.measure,
            censored: false,
        },
        None => HittingSample {
            tau: cap,
            rescaled: cap as f64 * hole.measure,
            censored: true,
        },
    })
}

/// Ensemble of first-hitting times from invariant/SRB-distributed starts.
pub fn ensemble_hitting_times(
    hole: &HoleSpec,
    samples: u64,
    cap: u64,
    burn_in: u64,
    master_seed: u64,
) -> Vec<HittingSample> {
    let hole = *hole;
    run_indexed(samples as usize, move |i| {
        let mut rng = stream_rng(master_seed, "hitting-member", i as u64);
        match hole.system {
            HoleSystem::Map1d(map) => {
                let mut stream =
                    MapStream::from_invariant(&map, burn_in.max(MIN_BURN_IN), &mut rng)
                        .expect("validated burn-in");
                for n in 1..=cap {
                    if hole.contains_x(stream.advance()) {
                        return HittingSample {
                            tau: n,
                            rescaled: n as f64 * hole.measure,
                            censored: false,
                        };
                    }
                }
                HittingSample {
                    tau: cap,
                    rescaled: cap as f64 * hole.measure,
                    censored: true,
                }
            }
            HoleSystem::Stadium(table) => {
                let mut stream = BilliardStream::new(table, &mut rng);
                for n in 1..=cap {
                    let (point, _) = stream.next_collision();
                    if hole.contains_q(point.q, &table) {
                        return HittingSample {
                            tau: n,
                            rescaled: n as f64 * hole.measure,
                            censored: false,
                        };
                    }
                }
                HittingSample {
                    tau: cap,
                    rescaled: cap as f64 * hole.measure,
                    censored: true,
                }
            }
        }
    })
}

/// Rescaled hit times of one orbit on [0, T].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountingSample {
    /// Increasing rescaled event times `n * measure <= T`, n >= 1.
    pub times: Vec<f64>,
    pub horizon: f64,
}

impl CountingSample {
    /// Number of events with time in `(lo, hi]`.
    pub fn count_in(&self, lo: f64, hi: f64) -> u64 {
        self.times.iter().filter(|&&t| t > lo && t <= hi).count() as u64
    }

    pub fn total(&self) -> u64 {
        self.times.len() as u64
    }
}

fn collect_point_process<F: FnMut() -> bool>(
    measure: f64,
    horizon: f64,
    mut in_hole_next: F,
) -> CountingSample {
    let steps = (horizon / measure).floor() as u64;
    let mut times = Vec::new();
    for n in 1..=steps {
        if in_hole_next() {
            times.push(n as f64 * measure);
        }
    }
    CountingSample { times, horizon }
}

/// All rescaled hit times in [0, T] for a fixed start (events indexed from
/// the first iterate).
pub fn point_process(
    hole: &HoleSpec,
    start: StartPoint,
    horizon: f64,
    master_seed: u64,
) -> Result<CountingSample, PointProcError> {
    if horizon < 0.0 {
        return Err(PointProcError::InvalidParameter(
            "horizon must be >= 0".into(),
        ));
    }
    match (hole.system, start) {
        (HoleSystem::Map1d(map), StartPoint::Map(x0)) => {
            let mut stream = MapStream::from_point(&map, x0)?;
            Ok(collect_point_process(hole.measure, horizon, move || {
                hole.contains_x(stream.advance())
            }))
        }
        (HoleSystem::Stadium(table), StartPoint::Billiard(x0)) => {
            let mut rng = stream_rng(master_seed, "pp-fixed", 0);
            let mut stream = BilliardStream::from_point(table, x0, &mut rng);
            Ok(collect_point_process(hole.measure, horizon, move || {
                let (point, _) = stream.next_collision();
                hole.contains_q(point.q, &table)
            }))
        }
        _ => Err(PointProcError::SystemMismatch),
    }
}

/// Ensemble of point-process realizations from invariant/SRB starts.
pub fn ensemble_point_processes(
    hole: &HoleSpec,
    samples: u64,
    horizon: f64,
    burn_in: u64,
    master_seed: u64,
) -> Vec<CountingSample> {
    let hole = *hole;
    run_indexed(samples as usize, move |i| {
        let mut rng = stream_rng(master_seed, "pp-member", i as u64);
        match hole.system {
            HoleSystem::Map1d(map) => {
                let mut stream =
                    MapStream::from_invariant(&map, burn_in.max(MIN_BURN_IN), &mut rng)
                        .expect("validated burn-in");
                collect_point_process(hole.measure, horizon, move || {
                    hole.contains_x(stream.advance())
                })
            }
            HoleSystem::Stadium(table) => {
                let mut stream = BilliardStream::new(table, &mut rng);
                collect_point_process(hole.measure, horizon, move || {
                    let (point, _) = stream.next_collision();
                    hole.contains_q(point.q, &table)
                })
            }
        }
    })
}

/// KS distance between the uncensored rescaled hitting times and the unit
/// exponential law.
pub fn exponential_law_check(samples: &[HittingSample]) -> Result<f64, PointProcError> {
    let uncensored: Vec<f64> = samples
        .iter()
        .filter(|s| !s.censored)
        .map(|s| s.rescaled)
        .collect();
    if uncensored.len() < MIN_KS_SAMPLES {
        return Err(PointProcError::InsufficientSamples {
            have: uncensored.len(),
            need: MIN_KS_SAMPLES,
        });
    }
    Ok(stats::ks_exp1(&uncensored))
}

/// Comparison of window counts against the product-Poisson reference on a
/// finite sub-algebra: `m` equal windows of [0, T], counts truncated at
/// `k_max`.
///
/// The total-variation distance over this sub-algebra lower-bounds the
/// distance over the full point-process sigma-algebra, which is generated
/// by exactly such window-count events.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoissonComparison {
    pub windows: usize,
    pub k_max: u64,
    pub horizon: f64,
    /// Half-L1 distance between the empirical joint truncated-count law
    /// and the product-Poisson law with per-window mean T/m.
    pub d_tv: f64,
    /// Per-window (mean, variance) of the raw counts.
    pub per_window: Vec<(f64, f64)>,
    pub sample_count: u64,
}

/// Half-L1 distance between two probability vectors.
pub fn half_l1(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// Truncated Poisson pmf over {0, ..., k_max} with the clipped mass on
/// k_max.
fn truncated_poisson(lambda: f64, k_max: u64) -> Vec<f64> {
    let mut pmf: Vec<f64> = (0..k_max).map(|k| stats::poisson_pmf(k, lambda)).collect();
    let head: f64 = pmf.iter().sum();
    pmf.push((1.0 - head).max(0.0));
    pmf
}

/// Estimates the total-variation distance between the law of the window
/// counts and the product-Poisson reference.
pub fn dtv_window_counts(
    samples: &[CountingSample],
    windows: usize,
    k_max: u64,
) -> Result<PoissonComparison, PointProcError> {
    if samples.is_empty() {
        return Err(PointProcError::InsufficientSamples { have: 0, need: 1 });
    }
    if windows == 0 || (k_max + 1).pow(windows as u32) > 1_000_000 {
        return Err(PointProcError::InvalidParameter(
            "window/count grid too large to estimate".into(),
        ));
    }
    let horizon = samples[0].horizon;
    if samples.iter().any(|s| (s.horizon - horizon).abs() > 1e-12) {
        return Err(PointProcError::InvalidParameter(
            "samples disagree on the horizon".into(),
        ));
    }
    let base = (k_max + 1) as usize;
    let cells = base.pow(windows as u32);
    let mut joint = vec![0.0f64; cells];
    let mut raw_counts = vec![Vec::with_capacity(samples.len()); windows];
    for s in samples {
        let mut idx = 0usize;
        for (w, bucket) in raw_counts.iter_mut().enumerate() {
            let lo = horizon * w as f64 / windows as f64;
            let hi = horizon * (w + 1) as f64 / windows as f64;
            let c = s.count_in(lo, hi);
            bucket.push(c as f64);
            idx = idx * base + (c.min(k_max)) as usize;
        }
        joint[idx] += 1.0;
    }
    let n = samples.len() as f64;
    joint.iter_mut().for_each(|v| *v /= n);
    // Product of per-window truncated Poisson laws, mean T/m each.
    let marginal = truncated_poisson(horizon / windows as f64, k_max);
    let mut reference = vec![0.0f64; cells];
    for (idx, r) in reference.iter_mut().enumerate() {
        let mut p = 1.0;
        let mut rest = idx;
        for _ in 0..windows {
            p *= marginal[rest % base];
            rest /= base;
        }
        *r = p;
    }
    let d_tv = half_l1(&joint, &reference);
    let per_window = raw_counts
        .iter()
        .map(|c| stats::mean_and_variance(c))
        .collect();
    Ok(PoissonComparison {
        windows,
        k_max,
        horizon,
        d_tv,
        per_window,
        sample_count: samples.len() as u64,
    })
}

/// Inverts a survival probability into the hitting-scaling estimate:
/// `-log(survival) / (s * measure^{1-alpha})`.
pub fn l_estimate(survival: f64, s: f64, measure: f64, alpha: f64) -> f64 {
    -survival.ln() / (s * measure.powf(1.0 - alpha))
}

/// One radius of the L_{alpha,s} estimate sequence.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LalphaPoint {
    pub r: f64,
    pub measure: f64,
    pub measure_ci: f64,
    /// Survival threshold `ceil(s * measure^{-alpha})` in steps.
    pub threshold_steps: u64,
    pub survival: f64,
    pub estimate: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// False when the survival fraction was degenerate (0 or 1) or the
    /// measure estimate too uncertain; such radii are excluded from
    /// extrapolation.
    pub usable: bool,
}

/// Parameters of the L_{alpha,s} sweep.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LalphaConfig {
    /// Scaling exponent in (0, 1].
    pub alpha: f64,
    /// Time-scale multiplier s > 0.
    pub s: f64,
    pub ensemble: u64,
    pub burn_in: u64,
    /// Orbit length for the occupation-measure estimates.
    pub measure_orbit_len: u64,
    /// Radii whose measure estimate has a relative CI above this are
    /// flagged unusable.
    pub max_rel_measure_ci: f64,
}

impl Default for LalphaConfig {
    fn default() -> Self {
        LalphaConfig {
            alpha: 1.0,
            s: 1.0,
            ensemble: 10_000,
            burn_in: MIN_BURN_IN,
            measure_orbit_len: 100_000_000,
            max_rel_measure_ci: 0.05,
        }
    }
}

/// Estimates `-log mu(tau_{r,z} > s mu(B_r)^{-alpha}) / (s mu(B_r)^{1-alpha})`
/// for each radius in `r_grid` (decreasing radii recommended).
/// Extrapolation in r is left to the caller.
pub fn l_alpha_s(
    map: MapSystem,
    z: f64,
    cfg: &LalphaConfig,
    r_grid: &[f64],
    master_seed: u64,
) -> Result<Vec<LalphaPoint>, PointProcError> {
    if !(cfg.alpha > 0.0 && cfg.alpha <= 1.0) {
        return Err(PointProcError::InvalidParameter(format!(
            "alpha {} outside (0, 1]",
            cfg.alpha
        )));
    }
    if !(cfg.s > 0.0) {
        return Err(PointProcError::InvalidParameter(
            "s must be positive".into(),
        ));
    }
    let measures = estimate_hole_measures(&map, z, r_grid, cfg.measure_orbit_len, master_seed)?;
    let mut out = Vec::with_capacity(r_grid.len());
    for (ri, (&r, &(measure, measure_ci))) in r_grid.iter().zip(&measures).enumerate() {
        if !(measure > 0.0 && measure < 1.0) {
            out.push(LalphaPoint {
                r,
                measure,
                measure_ci,
                threshold_steps: 0,
                survival: f64::NAN,
                estimate: f64::NAN,
                ci_lo: f64::NAN,
                ci_hi: f64::NAN,
                usable: false,
            });
            continue;
        }
        let hole = HoleSpec::map1d_with_measure(map, z, r, measure, measure_ci)?;
        let threshold = (cfg.s * measure.powf(-cfg.alpha)).ceil() as u64;
        let hits = ensemble_hitting_times(
            &hole,
            cfg.ensemble,
            threshold,
            cfg.burn_in,
            crate::rng::derive_seed(master_seed, "l-alpha-r", ri as u64),
        );
        let survivors = hits.iter().filter(|h| h.censored).count() as u64;
        let survival = survivors as f64 / cfg.ensemble as f64;
        let hw = stats::wilson_halfwidth(survivors, cfg.ensemble);
        let denom_ok = measure_ci / measure <= cfg.max_rel_measure_ci;
        let usable = survivors > 0 && survivors < cfg.ensemble && denom_ok;
        let (estimate, ci_lo, ci_hi) = if usable {
            let est = l_estimate(survival, cfg.s, measure, cfg.alpha);
            // Lower survival -> larger estimate, so the CI flips.
            let hi = l_estimate((survival - hw).max(1e-12), cfg.s, measure, cfg.alpha);
            let lo = l_estimate((survival + hw).min(1.0 - 1e-12), cfg.s, measure, cfg.alpha);
            (est, lo, hi)
        } else {
            (f64::NAN, f64::NAN, f64::NAN)
        };
        out.push(LalphaPoint {
            r,
            measure,
            measure_ci,
            threshold_steps: threshold,
            survival,
            estimate,
            ci_lo,
            ci_hi,
            usable,
        });
    }
    Ok(out)
}

/// Closed-form extremal index at a `p`-periodic point `z` of a 1D map:
/// `1 - 1/|Df^p(z)|` (the potential is `-log|Df|` summed along the
/// orbit). Verifies `|f^p(z) - z| < 1e-9` first.
pub fn extremal_index_formula(map: &MapSystem, z: f64, period: u64) -> Result<f64, PointProcError> {
    if period == 0 {
        return Err(PointProcError::InvalidParameter(
            "period must be >= 1".into(),
        ));
    }
    let mut x = z;
    let mut log_df = 0.0f64;
    for _ in 0..period {
        log_df += map.derivative(x).abs().ln();
        x = map.step(x)?;
    }
    let drift = (x - z).abs();
    if drift >= PERIODICITY_TOL {
        return Err(PointProcError::NotPeriodic { z, period, drift });
    }
    Ok(1.0 - (-log_df).exp())
}
