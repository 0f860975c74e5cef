//! Simulation and empirical limit laws for slowly mixing dynamical systems.
//!
//! `slowmix` simulates two families of weakly chaotic systems, intermittent
//! interval maps with a neutral fixed point and stadium billiards, and
//! measures the statistical laws that govern them when mixing is only
//! polynomial:
//!
//! - return-time tails of induced (first-return) maps and their power-law
//!   exponents ([`inducing`]),
//! - decay of transfer-operator norms ||P^n phi||_p under an Ulam discretization
//!   ([`transfer`]),
//! - large-deviation and *maximal* large-deviation tails of Birkhoff
//!   averages, mu(sup_{n>=N} |S_n/n| >= eps), with log-log exponent fits
//!   ([`deviations`]),
//! - hitting-time statistics, Poisson approximation of dynamical point
//!   processes, and extremal indices at periodic points ([`pointproc`]),
//! - the stadium billiard map itself, with wavefront-curvature evolution,
//!   unstable cones and expansion factors ([`billiards`]).
//!
//! Everything is driven by explicit seeds: ensembles split a master seed
//! into per-member streams so that results are bit-identical regardless of
//! how many worker threads run the computation.
//!
//! The `slowmix` binary exposes each experiment as a subcommand and as a
//! TOML-configured batch run; see [`experiments`]. The `examples/`
//! directory of this crate contains one runnable walk-through per major
//! capability.

pub mod billiards;
pub mod curves;
pub mod deviations;
pub mod dynamics1d;
pub mod experiments;
pub mod inducing;
pub mod pointproc;
pub mod report;
pub mod rng;
pub mod stats;
pub mod transfer;

pub use curves::{DecayCurve, ExponentFit, TailCurve};
pub use dynamics1d::{MapSystem, Observable, Orbit};
