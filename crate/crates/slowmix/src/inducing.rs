//! First-return machinery to a reference interval J: return times, the
//! induced map F = f^R, empirical return-time tails, and expansion /
//! distortion diagnostics of the induced map (Gibbs–Markov–Young style).
//!
//! For the intermittent family the canonical reference set is J = [1/2, 1]:
//! every excursion through the neutral fixed point at 0 re-enters J, and
//! the tail of the return time R decays like `N^{-1/g}`.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::curves::TailCurve;
use crate::dynamics1d::{DynamicsError, MapStream, MapSystem};
use crate::rng::uniform_unit;

/// Default iteration cap for return-time searches.
pub const DEFAULT_RETURN_CAP: u64 = 10_000_000;

/// Errors from the inducing machinery.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InducingError {
    /// Reference interval invalid (needs 0 <= a < b <= 1).
    InvalidReference {
        a: f64,
        b: f64,
    },
    /// Starting point not inside the reference set.
    NotInReference {
        x: f64,
    },
    /// Grid or cap invalid for the requested tail curve.
    InvalidGrid,
    Dynamics(DynamicsError),
}

impl std::fmt::Display for InducingError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InducingError::InvalidReference { a, b } => {
                write!(
                    f,
                    "reference interval [{a}, {b}] is not a sub-interval of [0, 1]"
                )
            }
            InducingError::NotInReference { x } => {
                write!(f, "point {x} lies outside the reference interval")
            }
            InducingError::InvalidGrid => {
                write!(f, "grid must be nonempty, increasing and below the cap")
            }
            InducingError::Dynamics(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for InducingError {}

impl From<DynamicsError> for InducingError {
    fn from(e: DynamicsError) -> Self {
        InducingError::Dynamics(e)
    }
}

/// A reference interval J = [a, b] inside [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSet {
    a: f64,
    b: f64,
}

impl ReferenceSet {
    pub fn new(a: f64, b: f64) -> Result<Self, InducingError> {
        if !(0.0..=1.0).contains(&a) || !(0.0..=1.0).contains(&b) || a >= b {
            return Err(InducingError::InvalidReference { a, b });
        }
        Ok(ReferenceSet { a, b })
    }

    /// The canonical choice [1/2, 1] for intermittent maps.
    pub fn right_half() -> Self {
        ReferenceSet { a: 0.5, b: 1.0 }
    }

    #[inline]
    pub fn contains(&self, x: f64) -> bool {
        x >= self.a && x <= self.b
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn length(&self) -> f64 {
        self.b - self.a
    }

    /// Uniform draw on J.
    pub fn sample_uniform(&self, rng: &mut ChaCha8Rng) -> f64 {
        self.a + self.length() * uniform_unit(rng)
    }
}

/// One completed first return: smallest k >= 1 with `f^k(x)` back in J.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReturnRecord {
    pub x: f64,
    pub return_time: u64,
    pub image: f64,
}

/// Outcome of a capped return-time search. Censoring is data, not an
/// error: it is recorded and reported, never dropped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ReturnOutcome {
    Returned(ReturnRecord),
    Censored { x: f64, cap: u64 },
}

impl ReturnOutcome {
    pub fn record(&self) -> Option<&ReturnRecord> {
        match self {
            ReturnOutcome::Returned(r) => Some(r),
            ReturnOutcome::Censored { .. } => None,
        }
    }

    pub fn is_censored(&self) -> bool {
        matches!(self, ReturnOutcome::Censored { .. })
    }
}

/// First return time of `x in J` under `map`, capped at `cap` iterations.
pub fn first_return_time(
    map: &MapSystem,
    j: &ReferenceSet,
    x: f64,
    cap: u64,
) -> Result<ReturnOutcome, InducingError> {
    if !j.contains(x) {
        return Err(InducingError::NotInReference { x });
    }
    if cap == 0 {
        return Err(InducingError::InvalidGrid);
    }
    let mut y = x;
    for k in 1..=cap {
        y = map.step_unchecked(y);
        if j.contains(y) {
            return Ok(ReturnOutcome::Returned(ReturnRecord {
                x,
                return_time: k,
                image: y,
            }));
        }
    }
    Ok(ReturnOutcome::Censored { x, cap })
}

/// Chains `n_returns` consecutive first returns starting from `x0 in J`.
/// Stops early if a search is censored; the censored entry is included.
pub fn induced_orbit(
    map: &MapSystem,
    j: &ReferenceSet,
    x0: f64,
    n_returns: u64,
    cap: u64,
) -> Result<Vec<ReturnOutcome>, InducingError> {
    if !j.contains(x0) {
        return Err(InducingError::NotInReference { x: x0 });
    }
    let mut out = Vec::with_capacity(n_returns as usize);
    let mut x = x0;
    for _ in 0..n_returns {
        let outcome = first_return_time(map, j, x, cap)?;
        let done = outcome.is_censored();
        if let ReturnOutcome::Returned(rec) = &outcome {
            x = rec.image;
        }
        out.push(outcome);
        if done {
            break;
        }
    }
    Ok(out)
}

/// Empirical survival curve `Leb(x in J : R(x) > N)` over `n_grid`, from
/// uniform samples on J. Censored samples (R > cap) count as survivors at
/// every grid point and are reported through [`TailCurve::censored`].
pub fn return_tail(
    map: &MapSystem,
    j: &ReferenceSet,
    samples: u64,
    n_grid: &[u64],
    cap: u64,
    rng: &mut ChaCha8Rng,
) -> Result<TailCurve, InducingError> {
    if n_grid.is_empty()
        || !n_grid.windows(2).all(|w| w[0] < w[1])
        || *n_grid.last().unwrap() > cap
        || samples == 0
    {
        return Err(InducingError::InvalidGrid);
    }
    let mut counts = vec![0u64; n_grid.len()];
    let mut censored = 0u64;
    for _ in 0..samples {
        let x = j.sample_uniform(rng);
        let r = match first_return_time(map, j, x, cap)? {
            ReturnOutcome::Returned(rec) => rec.return_time,
            ReturnOutcome::Censored { .. } => {
                censored += 1;
                cap + 1
            }
        };
        for (slot, &n) in counts.iter_mut().zip(n_grid) {
            if r > n {
                *slot += 1;
            }
        }
    }
    Ok(TailCurve::from_counts(n_grid, &counts, samples, censored))
}

/// Expansion and distortion estimates for the induced map F = f^R.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GmyDiagnostics {
    /// Estimated sup of 1/|DF| over the sampled points; uniform expansion
    /// of F means this stays strictly below 1.
    pub rho_hat: f64,
    /// Max of |log(DF(x)/DF(y))| over sampled same-branch pairs at
    /// distance <= the requested pair distance.
    pub distortion_hat: f64,
    /// Number of distinct return-time values seen among the samples (a
    /// lower bound on the number of branches of F explored).
    pub branch_count_sampled: u64,
    /// Same-branch pairs that entered the distortion estimate.
    pub pairs_used: u64,
    /// Samples censored at the cap (excluded from both estimates).
    pub censored: u64,
}

/// Derivative of the induced map along the return block of `x`, by the
/// chain rule: `DF(x) = prod_{i<R} f'(f^i(x))`.
fn induced_derivative(map: &MapSystem, x: f64, return_time: u64) -> f64 {
    let mut df = 1.0;
    let mut y = x;
    for _ in 0..return_time {
        df *= map.derivative(y);
        y = map.step_unchecked(y);
    }
    df
}

/// Orbits of `x` and `y` stay in the same branch of F: equal return time
/// and no crossing of the branch cut of `f` at 1/2 along the block.
fn same_branch(map: &MapSystem, x: f64, y: f64, return_time: u64) -> bool {
    let mut a = x;
    let mut b = y;
    for _ in 0..return_time {
        if (a <= 0.5) != (b <= 0.5) {
            return false;
        }
        a = map.step_unchecked(a);
        b = map.step_unchecked(b);
    }
    true
}

/// Samples uniform expansion (`rho_hat`) and bounded distortion
/// (`distortion_hat`) of the induced map over J.
///
/// Pairs straddling a branch boundary of F (different return times or a
/// branch-cut crossing along the block) are discarded, as are pairs
/// leaving J when offset by `pair_distance`.
pub fn gmy_diagnostics(
    map: &MapSystem,
    j: &ReferenceSet,
    samples: u64,
    pair_distance: f64,
    cap: u64,
    rng: &mut ChaCha8Rng,
) -> Result<GmyDiagnostics, InducingError> {
    if samples == 0 || pair_distance <= 0.0 {
        return Err(InducingError::InvalidGrid);
    }
    let mut rho_hat = 0.0f64;
    let mut distortion_hat = 0.0f64;
    let mut branches = std::collections::BTreeSet::new();
    let mut pairs_used = 0u64;
    let mut censored = 0u64;
    for _ in 0..samples {
        let x = j.sample_uniform(rng);
        let rec = match first_return_time(map, j, x, cap)? {
            ReturnOutcome::Returned(rec) => rec,
            ReturnOutcome::Censored { .. } => {
                censored += 1;
                continue;
            }
        };
        let dfx = induced_derivative(map, x, rec.return_time);
        rho_hat = rho_hat.max(1.0 / dfx.abs());
        branches.insert(rec.return_time);

        let y = x + pair_distance;
        if !j.contains(y) {
            continue;
        }
        if let ReturnOutcome::Returned(rec_y) = first_return_time(map, j, y, cap)? {
            if rec_y.return_time == rec.return_time && same_branch(map, x, y, rec.return_time) {
                let dfy = induced_derivative(map, y, rec.return_time);
                distortion_hat = distortion_hat.max((dfx / dfy).abs().ln().abs());
                pairs_used += 1;
            }
        }
    }
    Ok(GmyDiagnostics {
        rho_hat,
        distortion_hat,
        branch_count_sampled: branches.len() as u64,
        pairs_used,
        censored,
    })
}

/// Item produced by [`InducedReturnStream`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReturnStreamItem {
    Time(u64),
    Censored,
}

/// Successive first-return times along one long orbit.
///
/// The underlying orbit is advanced until it enters J, then each call to
/// [`next_return`](Self::next_return) counts steps to the next visit.
/// Built on [`MapStream`], so doubling orbits stay exact over arbitrarily
/// many returns.
#[derive(Debug, Clone)]
pub struct InducedReturnStream {
    stream: MapStream,
    j: ReferenceSet,
    cap: u64,
}

impl InducedReturnStream {
    /// Positions the orbit on its first visit to J (capped).
    pub fn new(mut stream: MapStream, j: ReferenceSet, cap: u64) -> Option<Self> {
        if !j.contains(stream.current()) {
            let mut entered = false;
            for _ in 0..cap {
                if j.contains(stream.advance()) {
                    entered = true;
                    break;
                }
            }
            if !entered {
                return None;
            }
        }
        Some(InducedReturnStream { stream, j, cap })
    }

    /// Next first-return time, or `Censored` if the cap is exceeded (the
    /// orbit is then re-anchored at its current position).
    pub fn next_return(&mut self) -> ReturnStreamItem {
        for k in 1..=self.cap {
            if self.j.contains(self.stream.advance()) {
                return ReturnStreamItem::Time(k);
            }
        }
        ReturnStreamItem::Censored
    }
}
