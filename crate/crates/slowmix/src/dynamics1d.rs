//! One-dimensional map systems: the doubling map and the intermittent
//! family
//!
//! ```text
//! T_g(x) = x + 2^g x^{1+g}   on [0, 1/2],      g in [0, 1)
//!        = 2x - 1            on (1/2, 1],
//! ```
//!
//! together with orbits, observables, Birkhoff sums and invariant-measure
//! sampling.
//!
//! The neutral fixed point of `T_g` at 0 makes mixing polynomial rather
//! than exponential; the escape exponent is controlled by `g`. The doubling
//! map is the fast-mixing baseline.
//!
//! Long doubling orbits cannot be iterated in `f64`: each step shifts one
//! bit out of the mantissa, so every start collapses to the fixed point 0
//! within ~53 steps. [`MapStream`] therefore realizes doubling orbits on
//! the binary sequence space, feeding fresh seeded bits from the low end;
//! the `f64` view of the state is a 53-bit window onto an exact orbit.
//! Fixed-point orbits ([`orbit`], [`MapSystem::step`]) keep literal `f64`
//! stepping, which is exact for the dyadic representative of the start.

use rand::RngCore;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::rng::uniform_unit;

/// Minimum burn-in accepted by [`sample_invariant`].
pub const MIN_BURN_IN: u64 = 1_000;

/// Errors from map construction and evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DynamicsError {
    /// Point outside the domain [0, 1].
    OutOfDomain { x: f64 },
    /// Intermittency exponent outside [0, 1).
    InvalidGamma { gamma: f64 },
    /// Burn-in below [`MIN_BURN_IN`].
    BurnInTooShort { burn_in: u64 },
    /// Orbit/sum length must be at least 1.
    EmptyLength,
}

impl std::fmt::Display for DynamicsError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DynamicsError::OutOfDomain { x } => write!(f, "point {x} outside [0, 1]"),
            DynamicsError::InvalidGamma { gamma } => {
                write!(f, "intermittency exponent {gamma} outside [0, 1)")
            }
            DynamicsError::BurnInTooShort { burn_in } => {
                write!(f, "burn-in {burn_in} below minimum {MIN_BURN_IN}")
            }
            DynamicsError::EmptyLength => write!(f, "length must be at least 1"),
        }
    }
}

impl std::error::Error for DynamicsError {}

/// Which interval map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapKind {
    Doubling,
    Intermittent,
}

/// A piecewise-expanding map of [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapSystem {
    kind: MapKind,
    gamma: f64,
}

impl MapSystem {
    /// The doubling map 2x mod 1.
    pub fn doubling() -> Self {
        MapSystem {
            kind: MapKind::Doubling,
            gamma: 0.0,
        }
    }

    /// The intermittent map with exponent `gamma` in [0, 1).
    pub fn intermittent(gamma: f64) -> Result<Self, DynamicsError> {
        if !(0.0..1.0).contains(&gamma) || !gamma.is_finite() {
            return Err(DynamicsError::InvalidGamma { gamma });
        }
        Ok(MapSystem {
            kind: MapKind::Intermittent,
            gamma,
        })
    }

    pub fn kind(&self) -> MapKind {
        self.kind
    }

    /// Intermittency exponent (0 for the doubling map).
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// One application of the map; domain-checked.
    pub fn step(&self, x: f64) -> Result<f64, DynamicsError> {
        if !(0.0..=1.0).contains(&x) {
            return Err(DynamicsError::OutOfDomain { x });
        }
        Ok(self.step_unchecked(x))
    }

    /// One application of the map without the domain check. Both branches
    /// keep the result inside [0, 1] (the left intermittent branch is
    /// clamped at 1 against floating-point overshoot of `T(1/2) = 1`).
    #[inline]
    pub fn step_unchecked(&self, x: f64) -> f64 {
        debug_assert!((0.0..=1.0).contains(&x));
        match self.kind {
            MapKind::Doubling => (2.0 * x).fract(),
            MapKind::Intermittent => {
                if x <= 0.5 {
                    let xg = if self.gamma == 0.5 {
                        x.sqrt()
                    } else {
                        x.powf(self.gamma)
                    };
                    (x + two_pow(self.gamma) * xg * x).min(1.0)
                } else {
                    2.0 * x - 1.0
                }
            }
        }
    }

    /// Derivative of the map at `x` (left branch at the cut 1/2).
    pub fn derivative(&self, x: f64) -> f64 {
        match self.kind {
            MapKind::Doubling => 2.0,
            MapKind::Intermittent => {
                if x <= 0.5 {
                    let xg = if self.gamma == 0.5 {
                        x.sqrt()
                    } else {
                        x.powf(self.gamma)
                    };
                    1.0 + two_pow(self.gamma) * (1.0 + self.gamma) * xg
                } else {
                    2.0
                }
            }
        }
    }
}

#[inline]
fn two_pow(gamma: f64) -> f64 {
    if gamma == 0.5 {
        std::f64::consts::SQRT_2
    } else {
        2f64.powf(gamma)
    }
}

/// An observable on [0, 1] with an explicitly stored sup-norm and a frozen
/// mean shift.
///
/// The sup-norm is stored rather than recomputed because large-deviation
/// constants scale with it; the mean shift is frozen once (analytically or
/// from a long calibration orbit) so that repeated runs see the identical
/// centered observable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observable {
    kind: ObservableKind,
    sup_norm: f64,
    mean_shift: f64,
}

/// Supported observable shapes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservableKind {
    /// Indicator of the interval [a, b].
    Indicator {
        a: f64,
        b: f64,
    },
    /// The identity x.
    Coordinate,
    /// cos(2 pi x).
    Cosine,
    Constant {
        c: f64,
    },
    /// Piecewise constant on a uniform partition of [0, 1].
    Table {
        values: Vec<f64>,
    },
}

impl Observable {
    pub fn indicator(a: f64, b: f64) -> Self {
        Observable::from_kind(ObservableKind::Indicator { a, b })
    }

    pub fn coordinate() -> Self {
        Observable::from_kind(ObservableKind::Coordinate)
    }

    pub fn cosine() -> Self {
        Observable::from_kind(ObservableKind::Cosine)
    }

    pub fn constant(c: f64) -> Self {
        Observable::from_kind(ObservableKind::Constant { c })
    }

    pub fn table(values: Vec<f64>) -> Self {
        Observable::from_kind(ObservableKind::Table { values })
    }

    fn from_kind(kind: ObservableKind) -> Self {
        let mut obs = Observable {
            kind,
            sup_norm: 0.0,
            mean_shift: 0.0,
        };
        obs.sup_norm = obs.compute_sup_norm();
        obs
    }

    /// Same observable with `mean_shift` subtracted on evaluation; the
    /// stored sup-norm is updated to bound the shifted values.
    pub fn with_mean_shift(mut self, mean_shift: f64) -> Self {
        self.mean_shift = mean_shift;
        self.sup_norm = self.compute_sup_norm();
        self
    }

    fn compute_sup_norm(&self) -> f64 {
        let m = self.mean_shift;
        match &self.kind {
            ObservableKind::Indicator { .. } => m.abs().max((1.0 - m).abs()),
            ObservableKind::Coordinate => m.abs().max((1.0 - m).abs()),
            ObservableKind::Cosine => (1.0 - m).abs().max((-1.0 - m).abs()),
            ObservableKind::Constant { c } => (c - m).abs(),
            ObservableKind::Table { values } => {
                values.iter().map(|v| (v - m).abs()).fold(0.0f64, f64::max)
            }
        }
    }

    /// Centered value at `x`.
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        self.raw(x) - self.mean_shift
    }

    /// Value before mean removal.
    #[inline]
    pub fn raw(&self, x: f64) -> f64 {
        match &self.kind {
            ObservableKind::Indicator { a, b } => {
                if x >= *a && x <= *b {
                    1.0
                } else {
                    0.0
                }
            }
            ObservableKind::Coordinate => x,
            ObservableKind::Cosine => (2.0 * std::f64::consts::PI * x).cos(),
            ObservableKind::Constant { c } => *c,
            ObservableKind::Table { values } => {
                let k = values.len();
                let idx = ((x * k as f64) as usize).min(k - 1);
                values[idx]
            }
        }
    }

    pub fn sup_norm(&self) -> f64 {
        self.sup_norm
    }

    pub fn mean_shift(&self) -> f64 {
        self.mean_shift
    }

    pub fn kind(&self) -> &ObservableKind {
        &self.kind
    }

    /// Mean with respect to Lebesgue measure, where it is available in
    /// closed form (all kinds except `Table` reduce to one line).
    pub fn lebesgue_mean(&self) -> f64 {
        match &self.kind {
            ObservableKind::Indicator { a, b } => (b.min(1.0) - a.max(0.0)).max(0.0),
            ObservableKind::Coordinate => 0.5,
            ObservableKind::Cosine => 0.0,
            ObservableKind::Constant { c } => *c,
            ObservableKind::Table { values } => values.iter().sum::<f64>() / values.len() as f64,
        }
    }
}

/// A finite orbit: `points[0] = x0`, `points[k+1] = f(points[k])`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Orbit {
    pub x0: f64,
    pub points: Vec<f64>,
}

impl Orbit {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Iterates the map `n` times from `x0`, returning all `n + 1` points.
pub fn orbit(map: &MapSystem, x0: f64, n: u64) -> Result<Orbit, DynamicsError> {
    if !(0.0..=1.0).contains(&x0) {
        return Err(DynamicsError::OutOfDomain { x: x0 });
    }
    if n == 0 {
        return Err(DynamicsError::EmptyLength);
    }
    let mut points = Vec::with_capacity(n as usize + 1);
    points.push(x0);
    let mut x = x0;
    for _ in 0..n {
        x = map.step_unchecked(x);
        points.push(x);
    }
    Ok(Orbit { x0, points })
}

/// Birkhoff sum `S_n = sum_{i=0}^{n-1} phi(f^i(x0))`.
pub fn birkhoff_sum(
    map: &MapSystem,
    obs: &Observable,
    x0: f64,
    n: u64,
) -> Result<f64, DynamicsError> {
    if !(0.0..=1.0).contains(&x0) {
        return Err(DynamicsError::OutOfDomain { x: x0 });
    }
    if n == 0 {
        return Err(DynamicsError::EmptyLength);
    }
    let mut sum = 0.0;
    let mut x = x0;
    for _ in 0..n {
        sum += obs.eval(x);
        x = map.step_unchecked(x);
    }
    Ok(sum)
}

/// Draws an approximately invariant-distributed point: `f^burn_in(u)` for
/// `u` uniform on (0, 1).
///
/// For the doubling map the invariant measure is Lebesgue and the orbit of
/// a uniform point stays uniform, so the draw is returned directly (exact
/// in distribution; literal `f64` iteration would collapse to 0 instead,
/// see the module docs).
pub fn sample_invariant(
    map: &MapSystem,
    burn_in: u64,
    rng: &mut ChaCha8Rng,
) -> Result<f64, DynamicsError> {
    if burn_in < MIN_BURN_IN {
        return Err(DynamicsError::BurnInTooShort { burn_in });
    }
    let u = uniform_unit(rng);
    match map.kind {
        MapKind::Doubling => Ok(u),
        MapKind::Intermittent => {
            let mut x = u;
            for _ in 0..burn_in {
                x = map.step_unchecked(x);
            }
            Ok(x)
        }
    }
}

/// A lazily extended orbit suitable for long runs on either map.
///
/// Intermittent orbits iterate in `f64`; doubling orbits shift seeded bits
/// through a 64-bit window so the dynamics never degenerates (module docs).
#[derive(Debug, Clone)]
pub struct MapStream {
    state: StreamState,
}

#[derive(Debug, Clone)]
enum StreamState {
    Fp {
        map: MapSystem,
        x: f64,
    },
    Bits {
        word: u64,
        reservoir: u64,
        bits_left: u8,
        rng: ChaCha8Rng,
    },
}

impl MapStream {
    /// Stream started from an invariant-distributed point (burn-in
    /// semantics as in [`sample_invariant`]).
    pub fn from_invariant(
        map: &MapSystem,
        burn_in: u64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self, DynamicsError> {
        if burn_in < MIN_BURN_IN {
            return Err(DynamicsError::BurnInTooShort { burn_in });
        }
        match map.kind {
            MapKind::Doubling => {
                let word = rng.next_u64();
                let bit_rng = ChaCha8Rng::seed_from_u64(rng.next_u64());
                Ok(MapStream {
                    state: StreamState::Bits {
                        word,
                        reservoir: 0,
                        bits_left: 0,
                        rng: bit_rng,
                    },
                })
            }
            MapKind::Intermittent => {
                let x = sample_invariant(map, burn_in, rng)?;
                Ok(MapStream {
                    state: StreamState::Fp { map: *map, x },
                })
            }
        }
    }

    /// Stream started from a fixed point of the domain; plain `f64`
    /// iteration for both maps.
    pub fn from_point(map: &MapSystem, x0: f64) -> Result<Self, DynamicsError> {
        if !(0.0..=1.0).contains(&x0) {
            return Err(DynamicsError::OutOfDomain { x: x0 });
        }
        Ok(MapStream {
            state: StreamState::Fp { map: *map, x: x0 },
        })
    }

    /// Current point of the orbit.
    #[inline]
    pub fn current(&self) -> f64 {
        match &self.state {
            StreamState::Fp { x, .. } => *x,
            StreamState::Bits { word, .. } => word_to_unit(*word),
        }
    }

    /// Advances one step and returns the new point.
    #[inline]
    pub fn advance(&mut self) -> f64 {
        match &mut self.state {
            StreamState::Fp { map, x } => {
                *x = map.step_unchecked(*x);
                *x
            }
            StreamState::Bits {
                word,
                reservoir,
                bits_left,
                rng,
            } => {
                if *bits_left == 0 {
                    *reservoir = rng.next_u64();
                    *bits_left = 64;
                }
                let bit = *reservoir >> 63;
                *reservoir <<= 1;
                *bits_left -= 1;
                *word = (*word << 1) | bit;
                word_to_unit(*word)
            }
        }
    }
}

use rand::SeedableRng;

#[inline]
fn word_to_unit(word: u64) -> f64 {
    (word >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Average of the raw observable along a long invariant-started orbit;
/// used to freeze `mean_shift`.
pub fn estimate_orbit_mean(
    map: &MapSystem,
    obs: &Observable,
    steps: u64,
    rng: &mut ChaCha8Rng,
) -> Result<f64, DynamicsError> {
    let mut stream = MapStream::from_invariant(map, MIN_BURN_IN, rng)?;
    let mut sum = 0.0;
    let mut x = stream.current();
    for _ in 0..steps {
        sum += obs.raw(x);
        x = stream.advance();
    }
    Ok(sum / steps as f64)
}

/// Returns the observable with its mean shift frozen: the Lebesgue mean
/// for the doubling map, a `steps`-long orbit average otherwise.
pub fn with_frozen_mean(
    map: &MapSystem,
    obs: Observable,
    steps: u64,
    rng: &mut ChaCha8Rng,
) -> Result<Observable, DynamicsError> {
    let mean = match map.kind {
        MapKind::Doubling => obs.lebesgue_mean(),
        MapKind::Intermittent => estimate_orbit_mean(map, &obs, steps, rng)?,
    };
    Ok(obs.with_mean_shift(mean))
}
