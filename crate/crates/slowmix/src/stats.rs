//! Small statistical toolbox: Wilson intervals, Kolmogorov–Smirnov
//! distances, least-squares fits and Poisson probabilities.

/// z-score for the 95% confidence level used throughout.
pub const Z95: f64 = 1.959963984540054;

/// Half-width of the 95% Wilson score interval for `successes` out of `n`.
///
/// Wilson rather than Wald: tail counts here are routinely near zero,
/// where the Wald width collapses while Wilson stays positive.
pub fn wilson_halfwidth(successes: u64, n: u64) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let nf = n as f64;
    let p = successes as f64 / nf;
    let z2 = Z95 * Z95;
    Z95 * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / (1.0 + z2 / nf)
}

/// Kolmogorov–Smirnov distance between an empirical sample and the
/// distribution with CDF `cdf`. The input need not be sorted.
pub fn ks_distance<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("NaN in KS sample"));
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, x) in sorted.iter().enumerate() {
        let f = cdf(*x);
        let lo = i as f64 / n;
        let hi = (i + 1) as f64 / n;
        d = d.max((f - lo).abs()).max((hi - f).abs());
    }
    d
}

/// KS distance to the unit exponential law.
pub fn ks_exp1(samples: &[f64]) -> f64 {
    ks_distance(samples, |t| if t <= 0.0 { 0.0 } else { 1.0 - (-t).exp() })
}

/// KS distance to the uniform law on [lo, hi].
pub fn ks_uniform(samples: &[f64], lo: f64, hi: f64) -> f64 {
    ks_distance(samples, |x| ((x - lo) / (hi - lo)).clamp(0.0, 1.0))
}

/// Ordinary least squares of y against x.
#[derive(Debug, Clone, Copy)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope estimate.
    pub slope_stderr: f64,
    pub r_squared: f64,
    pub n: usize,
}

/// Fits `y = a + b x` by least squares. Returns `None` for fewer than two
/// points or degenerate x.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<LinearFit> {
    let n = xs.len();
    if n < 2 || n != ys.len() {
        return None;
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res = (syy - slope * sxy).max(0.0);
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
    let slope_stderr = if n > 2 {
        (ss_res / (nf - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Some(LinearFit {
        slope,
        intercept,
        slope_stderr,
        r_squared,
        n,
    })
}

/// Poisson probability mass `P(X = k)` for mean `lambda`, by stable
/// iteration (no factorial overflow for the small k used here).
pub fn poisson_pmf(k: u64, lambda: f64) -> f64 {
    if lambda == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    let mut log_p = -lambda;
    for j in 1..=k {
        log_p += lambda.ln() - (j as f64).ln();
    }
    log_p.exp()
}

/// Sample mean and unbiased sample variance.
pub fn mean_and_variance(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n as f64 - 1.0);
    (mean, var)
}

/// Standard error of the sample mean.
pub fn stderr_of_mean(xs: &[f64]) -> f64 {
    let (_, var) = mean_and_variance(xs);
    (var / xs.len() as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn wilson_shrinks_with_n() {
        assert!(wilson_halfwidth(5, 10) > wilson_halfwidth(500, 1000));
        assert!(wilson_halfwidth(0, 100) > 0.0);
    }

    #[test]
    fn ks_of_exact_uniform_grid_is_small() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        assert!(ks_uniform(&xs, 0.0, 1.0) < 1e-3 + 1e-12);
    }

    #[test]
    fn linear_fit_recovers_exact_line() {
        let xs: Vec<f64> = (1..=10).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 - 2.0 * x).collect();
        let fit = linear_fit(&xs, &ys).unwrap();
        assert_relative_eq!(fit.slope, -2.0, epsilon = 1e-12);
        assert_relative_eq!(fit.intercept, 3.0, epsilon = 1e-12);
        assert_relative_eq!(fit.r_squared, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn poisson_pmf_sums_to_one() {
        let total: f64 = (0..200).map(|k| poisson_pmf(k, 2.5)).sum();
        assert_relative_eq!(total, 1.0, epsilon = 1e-12);
        assert_relative_eq!(poisson_pmf(0, 2.5), (-2.5f64).exp(), epsilon = 1e-12);
    }

    #[test]
    fn variance_of_constant_is_zero() {
        let (m, v) = mean_and_variance(&[3.0; 17]);
        assert_relative_eq!(m, 3.0, epsilon = 1e-14);
        assert_relative_eq!(v, 0.0, epsilon = 1e-14);
    }
}
