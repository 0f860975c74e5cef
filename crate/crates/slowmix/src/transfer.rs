//! Ulam discretization of the transfer operator of a 1D map.
//!
//! The operator is the finite row-stochastic matrix
//! `U[i][j] = Leb(A_i ∩ f^{-1} A_j) / Leb(A_i)` on a uniform partition
//! `A_1, ..., A_k` of [0, 1], estimated by within-cell Monte-Carlo
//! sampling. Its leading left fixed vector approximates the invariant
//! density, and the weighted adjoint action implements the transfer
//! operator relative to that density, so the decay of `‖Pⁿφ‖_p` in
//! `L^p(μ)` can be measured directly.
//!
//! Norms are taken against the Ulam stationary density π rather than the
//! true invariant measure; for intermittent maps this carries a
//! discretization bias that is reported, not hidden (the operator exposes
//! π so callers can compare it with long-orbit occupation).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curves::DecayCurve;
use crate::dynamics1d::MapSystem;
use crate::rng::uniform_unit;

/// Maximum power-iteration sweeps before the build is declared defective.
pub const MAX_POWER_SWEEPS: usize = 100_000;

/// Row-sum tolerance asserted after every build.
pub const ROW_SUM_TOL: f64 = 1e-10;

/// Normalization tolerance for the stationary density.
pub const DENSITY_NORM_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TransferError {
    /// Need at least two cells.
    TooFewCells { k: usize },
    /// Per-cell sample count must be positive.
    NoSamples,
    /// Power iteration did not reach the fixed point within
    /// [`MAX_POWER_SWEEPS`]; the discretization is defective.
    PowerIterationDiverged { sweeps: usize, residual: f64 },
    /// A build invariant failed (row sums or density normalization).
    DefectiveBuild { detail: &'static str },
    /// Observable vector length does not match the cell count.
    DimensionMismatch { expected: usize, got: usize },
}

impl std::fmt::Display for TransferError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TransferError::TooFewCells { k } => write!(f, "need k >= 2 cells, got {k}"),
            TransferError::NoSamples => write!(f, "mc_per_cell must be positive"),
            TransferError::PowerIterationDiverged { sweeps, residual } => write!(
                f,
                "stationary vector not found after {sweeps} sweeps (residual {residual:.3e})"
            ),
            TransferError::DefectiveBuild { detail } => write!(f, "defective build: {detail}"),
            TransferError::DimensionMismatch { expected, got } => {
                write!(f, "expected {expected} cells, got {got}")
            }
        }
    }
}

impl std::error::Error for TransferError {}

/// Finite row-stochastic approximation of the transfer operator, with its
/// stationary density.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UlamOperator {
    cell_count: usize,
    /// Sparse rows: `(column, weight)` with weights summing to 1.
    rows: Vec<Vec<(u32, f64)>>,
    /// Cellwise invariant density w.r.t. Lebesgue (mean 1 across cells).
    stationary: Vec<f64>,
    /// Sweeps the power iteration needed.
    sweeps: usize,
}

/// Builds the Ulam operator for `map` on `k` uniform cells using
/// `mc_per_cell` Monte-Carlo points per cell, then finds the stationary
/// density by power iteration.
///
/// Cell sampling is parallel with one derived generator per cell, so the
/// result is independent of the worker count.
pub fn build_ulam(
    map: &MapSystem,
    k: usize,
    mc_per_cell: u32,
    rng: &mut ChaCha8Rng,
) -> Result<UlamOperator, TransferError> {
    if k < 2 {
        return Err(TransferError::TooFewCells { k });
    }
    if mc_per_cell == 0 {
        return Err(TransferError::NoSamples);
    }
    use rand::RngCore;
    let base_seed = rng.next_u64();
    let width = 1.0 / k as f64;
    let rows: Vec<Vec<(u32, f64)>> = (0..k)
        .into_par_iter()
        .map(|i| {
            let mut cell_rng = ChaCha8Rng::seed_from_u64(crate::rng::derive_seed(
                base_seed,
                "ulam-cell",
                i as u64,
            ));
            let lo = i as f64 * width;
            let mut counts: std::collections::BTreeMap<u32, u32> =
                std::collections::BTreeMap::new();
            for _ in 0..mc_per_cell {
                let x = lo + width * uniform_unit(&mut cell_rng);
                let y = map.step_unchecked(x.min(1.0));
                let j = ((y * k as f64) as usize).min(k - 1) as u32;
                *counts.entry(j).or_insert(0) += 1;
            }
            counts
                .into_iter()
                .map(|(j, c)| (j, f64::from(c) / f64::from(mc_per_cell)))
                .collect()
        })
        .collect();

    for row in &rows {
        let s: f64 = row.iter().map(|&(_, w)| w).sum();
        if (s - 1.0).abs() > ROW_SUM_TOL {
            return Err(TransferError::DefectiveBuild {
                detail: "row sum off unity",
            });
        }
    }

    let (stationary, sweeps) = stationary_density(&rows, k)?;
    let total: f64 = stationary.iter().sum::<f64>() / k as f64;
    if (total - 1.0).abs() > DENSITY_NORM_TOL {
        return Err(TransferError::DefectiveBuild {
            detail: "stationary density does not integrate to one",
        });
    }
    Ok(UlamOperator {
        cell_count: k,
        rows,
        stationary,
        sweeps,
    })
}

/// Leading left fixed probability vector by power iteration, returned as a
/// cellwise density (mean 1).
fn stationary_density(
    rows: &[Vec<(u32, f64)>],
    k: usize,
) -> Result<(Vec<f64>, usize), TransferError> {
    let mut p = vec![1.0 / k as f64; k];
    let mut next = vec![0.0f64; k];
    for sweep in 1..=MAX_POWER_SWEEPS {
        next.iter_mut().for_each(|v| *v = 0.0);
        for (i, row) in rows.iter().enumerate() {
            let pi = p[i];
            if pi == 0.0 {
                continue;
            }
            for &(j, w) in row {
                next[j as usize] += pi * w;
            }
        }
        let norm: f64 = next.iter().sum();
        next.iter_mut().for_each(|v| *v /= norm);
        let delta: f64 = p.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut p, &mut next);
        if delta < 1e-13 {
            let density = p.iter().map(|v| v * k as f64).collect();
            return Ok((density, sweep));
        }
    }
    // Report the final residual rather than guessing.
    let residual: f64 = p.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
    Err(TransferError::PowerIterationDiverged {
        sweeps: MAX_POWER_SWEEPS,
        residual,
    })
}

impl UlamOperator {
    pub fn cell_count(&self) -> usize {
        self.cell_count
    }

    /// Cellwise invariant density (mean 1 across cells).
    pub fn stationary(&self) -> &[f64] {
        &self.stationary
    }

    /// Sparse row `i` as `(column, weight)` pairs.
    pub fn row(&self, i: usize) -> &[(u32, f64)] {
        &self.rows[i]
    }

    pub fn sweeps(&self) -> usize {
        self.sweeps
    }

    /// Midpoints of the cells.
    pub fn cell_centers(&self) -> Vec<f64> {
        let k = self.cell_count as f64;
        (0..self.cell_count).map(|i| (i as f64 + 0.5) / k).collect()
    }

    /// Cellwise (midpoint) discretization of a function on [0, 1].
    pub fn discretize<F: Fn(f64) -> f64>(&self, f: F) -> Vec<f64> {
        self.cell_centers().into_iter().map(f).collect()
    }

    fn check_len(&self, phi: &[f64]) -> Result<(), TransferError> {
        if phi.len() != self.cell_count {
            Err(TransferError::DimensionMismatch {
                expected: self.cell_count,
                got: phi.len(),
            })
        } else {
            Ok(())
        }
    }

    /// Integral of a cell vector against the stationary measure.
    pub fn integral(&self, phi: &[f64]) -> f64 {
        let k = self.cell_count as f64;
        phi.iter()
            .zip(&self.stationary)
            .map(|(v, pi)| v * pi / k)
            .sum()
    }

    /// `L^p` norm of a cell vector with stationary weights.
    pub fn lp_norm(&self, phi: &[f64], p: f64) -> f64 {
        let k = self.cell_count as f64;
        let s: f64 = phi
            .iter()
            .zip(&self.stationary)
            .map(|(v, pi)| v.abs().powf(p) * pi / k)
            .sum();
        s.powf(1.0 / p)
    }

    /// Stationary mass of the interval [lo, hi], by cellwise overlap.
    pub fn mass_of_cells(&self, lo: f64, hi: f64) -> f64 {
        let k = self.cell_count as f64;
        self.stationary
            .iter()
            .enumerate()
            .map(|(i, pi)| {
                let cell_lo = i as f64 / k;
                let cell_hi = (i as f64 + 1.0) / k;
                let overlap = (cell_hi.min(hi) - cell_lo.max(lo)).max(0.0);
                pi * overlap
            })
            .sum()
    }

    /// Subtracts the stationary-weighted mean.
    pub fn zero_mean(&self, phi: &[f64]) -> Vec<f64> {
        let m = self.integral(phi);
        phi.iter().map(|v| v - m).collect()
    }

    /// One application of the transfer operator relative to the stationary
    /// density: `(Pφ)_j = Σ_i φ_i π_i U_ij / π_j`. Preserves ∫φ dμ and
    /// fixes constants.
    pub fn apply_once(&self, phi: &[f64]) -> Result<Vec<f64>, TransferError> {
        self.check_len(phi)?;
        let mut acc = vec![0.0f64; self.cell_count];
        for (i, row) in self.rows.iter().enumerate() {
            let w = phi[i] * self.stationary[i];
            if w == 0.0 {
                continue;
            }
            for &(j, u) in row {
                acc[j as usize] += w * u;
            }
        }
        for (a, pi) in acc.iter_mut().zip(&self.stationary) {
            if *pi > 0.0 {
                *a /= pi;
            } else {
                *a = 0.0;
            }
        }
        Ok(acc)
    }

    /// `n`-fold application of the transfer operator.
    pub fn apply_transfer(&self, phi: &[f64], n: usize) -> Result<Vec<f64>, TransferError> {
        self.check_len(phi)?;
        let mut v = phi.to_vec();
        for _ in 0..n {
            v = self.apply_once(&v)?;
        }
        Ok(v)
    }

    /// Decay curve `n ↦ ‖Pⁿφ‖_p` over `n_grid` (increasing), with the mean
    /// removed first so the decaying part is what gets measured.
    pub fn norm_decay(
        &self,
        phi: &[f64],
        p: f64,
        n_grid: &[u64],
        observable: &str,
    ) -> Result<DecayCurve, TransferError> {
        self.check_len(phi)?;
        let mut v = self.zero_mean(phi);
        let mut points = Vec::with_capacity(n_grid.len());
        let mut current: u64 = 0;
        for &n in n_grid {
            while current < n {
                v = self.apply_once(&v)?;
                current += 1;
            }
            points.push((n, self.lp_norm(&v, p)));
        }
        Ok(DecayCurve {
            points,
            p,
            observable: observable.to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use approx::assert_relative_eq;

    /// Exact Ulam operator of the doubling map on 2^m cells: each row has
    /// entries 1/2 in columns 2i and 2i+1 (mod k). Independent oracle.
    fn exact_dyadic_rows(k: usize) -> Vec<Vec<(u32, f64)>> {
        (0..k)
            .map(|i| vec![((2 * i % k) as u32, 0.5), (((2 * i + 1) % k) as u32, 0.5)])
            .collect()
    }

    #[test]
    fn doubling_ulam_matches_exact_dyadic_operator() {
        let map = MapSystem::doubling();
        let mut rng = stream_rng(21, "ulam", 0);
        let k = 256;
        let mc = 400u32;
        let op = build_ulam(&map, k, mc, &mut rng).unwrap();
        let exact = exact_dyadic_rows(k);
        let tol = 3.0 / (mc as f64).sqrt();
        for (i, exact_row) in exact.iter().enumerate() {
            let mut dense = vec![0.0f64; k];
            for &(j, w) in op.row(i) {
                dense[j as usize] = w;
            }
            let mut dense_exact = vec![0.0f64; k];
            for &(j, w) in exact_row {
                dense_exact[j as usize] = w;
            }
            for j in 0..k {
                assert!(
                    (dense[j] - dense_exact[j]).abs() <= tol,
                    "entry ({i},{j}): {} vs {}",
                    dense[j],
                    dense_exact[j]
                );
            }
        }
        // Uniform stationary density.
        for pi in op.stationary() {
            assert!((pi - 1.0).abs() < 0.2, "pi = {pi}");
        }
    }

    #[test]
    fn rows_are_stochastic() {
        let map = MapSystem::intermittent(0.5).unwrap();
        let mut rng = stream_rng(22, "ulam", 1);
        let op = build_ulam(&map, 128, 200, &mut rng).unwrap();
        for i in 0..op.cell_count() {
            let s: f64 = op.row(i).iter().map(|&(_, w)| w).sum();
            assert_relative_eq!(s, 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn intermittent_density_peaks_at_zero() {
        let map = MapSystem::intermittent(0.5).unwrap();
        let mut rng = stream_rng(23, "ulam", 2);
        let op = build_ulam(&map, 512, 200, &mut rng).unwrap();
        let pi = op.stationary();
        assert!(
            pi[0] > *pi.last().unwrap(),
            "pi_1 = {}, pi_k = {}",
            pi[0],
            pi.last().unwrap()
        );
    }

    #[test]
    fn intermittent_density_matches_orbit_occupation() {
        // Oracle: occupation measure of a long orbit on coarse blocks.
        let map = MapSystem::intermittent(0.5).unwrap();
        let mut rng = stream_rng(24, "occupation", 0);
        let op = build_ulam(&map, 512, 400, &mut rng).unwrap();
        let k = op.cell_count();
        let blocks = [(0.0, 0.25), (0.25, 0.5), (0.5, 1.0)];
        let mut occ = [0u64; 3];
        let steps = 2_000_000u64;
        let mut stream =
            crate::dynamics1d::MapStream::from_invariant(&map, 1_000, &mut rng).unwrap();
        for _ in 0..steps {
            let x = stream.advance();
            for (b, &(lo, hi)) in occ.iter_mut().zip(&blocks) {
                if x >= lo && x < hi {
                    *b += 1;
                }
            }
        }
        for (bi, &(lo, hi)) in blocks.iter().enumerate() {
            let occ_mass = occ[bi] as f64 / steps as f64;
            let cells_lo = (lo * k as f64) as usize;
            let cells_hi = (hi * k as f64) as usize;
            let pi_mass: f64 = (cells_lo..cells_hi)
                .map(|i| op.stationary()[i] / k as f64)
                .sum();
            assert!(
                (occ_mass - pi_mass).abs() < 0.03,
                "block [{lo},{hi}): orbit {occ_mass:.4} vs Ulam {pi_mass:.4}"
            );
        }
    }

    #[test]
    fn transfer_preserves_integrals_and_constants() {
        let map = MapSystem::intermittent(0.5).unwrap();
        let mut rng = stream_rng(25, "ulam", 3);
        let op = build_ulam(&map, 256, 200, &mut rng).unwrap();
        let ones = vec![1.0; op.cell_count()];
        let p1 = op.apply_transfer(&ones, 3).unwrap();
        for v in &p1 {
            assert_relative_eq!(*v, 1.0, epsilon = 1e-9);
        }
        for f in [
            |x: f64| x,
            |x: f64| (2.0 * std::f64::consts::PI * x).cos(),
            |x: f64| if x < 0.3 { 1.0 } else { -0.5 },
        ] {
            let phi = op.discretize(f);
            let before = op.integral(&phi);
            for n in [1usize, 2, 5] {
                let after = op.integral(&op.apply_transfer(&phi, n).unwrap());
                assert_relative_eq!(before, after, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn doubling_contracts_cosine_in_one_step() {
        // Exact transfer of cos(2 pi x) under doubling averages the two
        // preimages: (cos(pi x) + cos(pi x + pi)) / 2 = 0. The Ulam
        // residue is Monte-Carlo noise, far below 0.51 per step.
        let map = MapSystem::doubling();
        let mut rng = stream_rng(26, "ulam", 4);
        let op = build_ulam(&map, 1024, 200, &mut rng).unwrap();
        let phi = op.zero_mean(&op.discretize(|x| (2.0 * std::f64::consts::PI * x).cos()));
        let n0 = op.lp_norm(&phi, 2.0);
        let n1 = op.lp_norm(&op.apply_once(&phi).unwrap(), 2.0);
        assert!(n1 <= 0.51 * n0, "‖Pφ‖₂ = {n1}, ‖φ‖₂ = {n0}");
    }

    #[test]
    fn norm_decay_starts_at_input_norm_and_decays() {
        let map = MapSystem::doubling();
        let mut rng = stream_rng(27, "ulam", 5);
        let op = build_ulam(&map, 1024, 200, &mut rng).unwrap();
        let phi = op.discretize(|x| (2.0 * std::f64::consts::PI * x).cos());
        let grid: Vec<u64> = (0..=5).collect();
        let curve = op.norm_decay(&phi, 2.0, &grid, "cos(2 pi x)").unwrap();
        let centered = op.zero_mean(&phi);
        assert_relative_eq!(
            curve.points[0].1,
            op.lp_norm(&centered, 2.0),
            epsilon = 1e-12
        );
        let factor = curve.per_step_factor(1e-12).unwrap();
        assert!(factor <= 0.6, "per-step factor {factor}");
    }

    #[test]
    fn constant_observable_decays_to_zero_after_mean_removal() {
        let map = MapSystem::doubling();
        let mut rng = stream_rng(28, "ulam", 6);
        let op = build_ulam(&map, 64, 200, &mut rng).unwrap();
        let phi = vec![3.7; 64];
        let curve = op.norm_decay(&phi, 2.0, &[0, 1, 2], "const").unwrap();
        for (_, v) in curve.points {
            assert!(v < 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let map = MapSystem::doubling();
        let mut rng = stream_rng(29, "ulam", 7);
        let op = build_ulam(&map, 64, 50, &mut rng).unwrap();
        assert!(matches!(
            op.apply_transfer(&vec![0.0; 32], 1),
            Err(TransferError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn too_few_cells_rejected() {
        let map = MapSystem::doubling();
        let mut rng = stream_rng(30, "ulam", 8);
        assert!(matches!(
            build_ulam(&map, 1, 50, &mut rng),
            Err(TransferError::TooFewCells { .. })
        ));
    }
}
