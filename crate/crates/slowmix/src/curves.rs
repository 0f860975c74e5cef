//! Curve containers shared across modules: empirical tail curves, norm
//! decay curves, and power-law exponent fits on log-log axes.

use serde::{Deserialize, Serialize};

use crate::stats;

/// Minimum number of positive-valued points required for an exponent fit.
pub const MIN_FIT_POINTS: usize = 5;

/// One point of an empirical tail or survival curve.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TailPoint {
    /// Grid value N (iterations).
    pub n: u64,
    /// Empirical probability at N.
    pub value: f64,
    /// 95% Wilson half-width for `value`.
    pub ci_halfwidth: f64,
}

/// An empirical probability curve over a grid of horizons N, e.g.
/// `P(R > N)` or `μ(sup_{n≥N} |S_n/n| ≥ ε)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TailCurve {
    pub points: Vec<TailPoint>,
    /// Number of ensemble members behind every point.
    pub sample_size: u64,
    /// Members that hit the iteration cap before resolving; they count as
    /// survivors at every grid point and are reported, never dropped.
    pub censored: u64,
}

impl TailCurve {
    /// Builds a curve from per-point success counts over a common ensemble.
    pub fn from_counts(grid: &[u64], counts: &[u64], sample_size: u64, censored: u64) -> Self {
        assert_eq!(grid.len(), counts.len());
        let points = grid
            .iter()
            .zip(counts)
            .map(|(&n, &k)| TailPoint {
                n,
                value: k as f64 / sample_size as f64,
                ci_halfwidth: stats::wilson_halfwidth(k, sample_size),
            })
            .collect();
        TailCurve {
            points,
            sample_size,
            censored,
        }
    }

    /// Fraction of members censored at the cap.
    pub fn censoring_rate(&self) -> f64 {
        if self.sample_size == 0 {
            0.0
        } else {
            self.censored as f64 / self.sample_size as f64
        }
    }

    /// True when values never increase along the grid.
    pub fn is_nonincreasing(&self) -> bool {
        self.points.windows(2).all(|w| w[1].value <= w[0].value)
    }

    /// Points usable for exponent fits: positive value, and censored mass
    /// below 1% of the value at that point (censoring would otherwise
    /// flatten the measured tail).
    pub fn fit_points(&self) -> Vec<(f64, f64)> {
        let c = self.censoring_rate();
        self.points
            .iter()
            .filter(|p| p.value > 0.0 && c <= 0.01 * p.value)
            .map(|p| (p.n as f64, p.value))
            .collect()
    }

    /// All points as (n, value) pairs.
    pub fn xy(&self) -> Vec<(f64, f64)> {
        self.points.iter().map(|p| (p.n as f64, p.value)).collect()
    }
}

/// A norm decay curve `n ↦ ‖Pⁿφ‖_p` (or any nonnegative quantity indexed
/// by an integer power).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecayCurve {
    /// (n, norm) pairs.
    pub points: Vec<(u64, f64)>,
    /// Norm exponent p.
    pub p: f64,
    /// Human-readable identifier of the observable measured.
    pub observable: String,
}

impl DecayCurve {
    pub fn xy(&self) -> Vec<(f64, f64)> {
        self.points.iter().map(|&(n, v)| (n as f64, v)).collect()
    }

    /// Fitted per-step decay factor from least squares of log(norm)
    /// against n, using points with norm above `floor`. `None` when fewer
    /// than two usable points remain.
    pub fn per_step_factor(&self, floor: f64) -> Option<f64> {
        let xs: Vec<f64> = self
            .points
            .iter()
            .filter(|&&(_, v)| v > floor)
            .map(|&(n, _)| n as f64)
            .collect();
        let ys: Vec<f64> = self
            .points
            .iter()
            .filter(|&&(_, v)| v > floor)
            .map(|&(_, v)| v.ln())
            .collect();
        stats::linear_fit(&xs, &ys).map(|f| f.slope.exp())
    }
}

/// Result of a log-log power-law fit; the tail exponent is `-slope`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ExponentFit {
    pub slope: f64,
    pub intercept: f64,
    pub stderr: f64,
    pub r_squared: f64,
    pub points_used: usize,
}

/// Why an exponent fit could not be produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitError {
    /// Fewer positive-valued points in the window than [`MIN_FIT_POINTS`].
    InsufficientPoints { have: usize, need: usize },
}

impl std::fmt::Display for FitError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FitError::InsufficientPoints { have, need } => {
                write!(f, "exponent fit needs {need} positive points, found {have}")
            }
        }
    }
}

impl std::error::Error for FitError {}

/// Least-squares fit of log(value) against log(n) over points whose n lies
/// in `window = (lo, hi)` inclusive and whose value is positive.
///
/// The slope estimates the power-law exponent of the curve; for tails
/// decaying like `N^{-beta}` the fit reports `slope ≈ -beta`.
pub fn fit_exponent(points: &[(f64, f64)], window: (f64, f64)) -> Result<ExponentFit, FitError> {
    let (lo, hi) = window;
    let usable: Vec<(f64, f64)> = points
        .iter()
        .filter(|(n, v)| *n >= lo && *n <= hi && *v > 0.0 && *n > 0.0)
        .copied()
        .collect();
    if usable.len() < MIN_FIT_POINTS {
        return Err(FitError::InsufficientPoints {
            have: usable.len(),
            need: MIN_FIT_POINTS,
        });
    }
    let xs: Vec<f64> = usable.iter().map(|(n, _)| n.ln()).collect();
    let ys: Vec<f64> = usable.iter().map(|(_, v)| v.ln()).collect();
    let fit = stats::linear_fit(&xs, &ys).expect("usable points checked above");
    Ok(ExponentFit {
        slope: fit.slope,
        intercept: fit.intercept,
        stderr: fit.slope_stderr,
        r_squared: fit.r_squared,
        points_used: usable.len(),
    })
}

/// Slope of log2(value) against n over positive-valued points: the
/// geometric decay rate per unit n, for curves that fall off like `2^{sn}`.
pub fn fit_exponent_log2(points: &[(f64, f64)]) -> Option<f64> {
    let xs: Vec<f64> = points
        .iter()
        .filter(|(_, v)| *v > 0.0)
        .map(|(n, _)| *n)
        .collect();
    let ys: Vec<f64> = points
        .iter()
        .filter(|(_, v)| *v > 0.0)
        .map(|(_, v)| v.log2())
        .collect();
    stats::linear_fit(&xs, &ys).map(|f| f.slope)
}

/// Log-spaced integer grid from `lo` to `hi` inclusive with roughly
/// `points` distinct entries.
pub fn log_grid(lo: u64, hi: u64, points: usize) -> Vec<u64> {
    assert!(lo >= 1 && hi >= lo && points >= 1);
    let mut grid = Vec::with_capacity(points);
    let (llo, lhi) = ((lo as f64).ln(), (hi as f64).ln());
    for i in 0..points {
        let t = if points == 1 {
            0.0
        } else {
            i as f64 / (points - 1) as f64
        };
        let n = (llo + t * (lhi - llo)).exp().round() as u64;
        let n = n.clamp(lo, hi);
        if grid.last() != Some(&n) {
            grid.push(n);
        }
    }
    grid
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn exact_power_law_fits_perfectly() {
        let pts: Vec<(f64, f64)> = (1..=20).map(|n| (n as f64, (n as f64).powi(-2))).collect();
        let fit = fit_exponent(&pts, (1.0, 20.0)).unwrap();
        assert_relative_eq!(fit.slope, -2.0, epsilon = 1e-10);
        assert_relative_eq!(fit.r_squared, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn constant_values_fit_zero_slope() {
        let pts: Vec<(f64, f64)> = (1..=10).map(|n| (n as f64, 0.37)).collect();
        let fit = fit_exponent(&pts, (1.0, 10.0)).unwrap();
        assert_relative_eq!(fit.slope, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn noisy_power_law_fits_within_tolerance() {
        // 3 N^{-1.5} with a deterministic 1% modulation.
        let pts: Vec<(f64, f64)> = (0..30)
            .map(|i| {
                let n = 10.0 * 1.3f64.powi(i);
                let noise = 1.0 + 0.01 * ((i as f64) * 2.399).sin();
                (n, 3.0 * n.powf(-1.5) * noise)
            })
            .collect();
        let fit = fit_exponent(&pts, (1.0, 1e9)).unwrap();
        assert!((fit.slope + 1.5).abs() < 0.05, "slope = {}", fit.slope);
    }

    #[test]
    fn too_few_points_is_an_error() {
        let pts = vec![(1.0, 0.5), (2.0, 0.2), (3.0, 0.0), (4.0, 0.0)];
        match fit_exponent(&pts, (1.0, 4.0)) {
            Err(FitError::InsufficientPoints { have: 2, need: 5 }) => {}
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn tail_curve_counts_and_monotonicity() {
        let grid = [1, 2, 4, 8];
        let counts = [900, 500, 200, 50];
        let curve = TailCurve::from_counts(&grid, &counts, 1000, 0);
        assert!(curve.is_nonincreasing());
        assert_relative_eq!(curve.points[0].value, 0.9, epsilon = 1e-12);
        assert!(curve.points[3].ci_halfwidth > 0.0);
    }

    #[test]
    fn censoring_removes_contaminated_fit_points() {
        let grid = [1, 10, 100];
        let counts = [800, 80, 8];
        // 2 censored of 1000: rate 0.002; usable needs value >= 0.2.
        let curve = TailCurve::from_counts(&grid, &counts, 1000, 2);
        let pts = curve.fit_points();
        assert_eq!(pts.len(), 1);
        assert_relative_eq!(pts[0].1, 0.8, epsilon = 1e-12);
    }

    #[test]
    fn log_grid_is_increasing_and_bounded() {
        let g = log_grid(10, 1000, 12);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(*g.first().unwrap(), 10);
        assert_eq!(*g.last().unwrap(), 1000);
    }
}
