//! CSV and JSON emission for experiment runs.
//!
//! Every CSV carries a header row naming the quantity and its units; the
//! JSON summary echoes the resolved configuration so a run can be
//! reproduced from its output directory alone.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::curves::{DecayCurve, TailCurve};
use crate::deviations::MomentCurve;
use crate::pointproc::LalphaPoint;

/// Summary of one experiment run, serialized as `summary.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub kind: String,
    pub name: String,
    pub seed: u64,
    /// Resolved configuration echo.
    pub config: serde_json::Value,
    /// Experiment-specific outputs (fits, KS values, d_tv, ...). Every
    /// reported fit carries its stderr and points_used.
    pub metrics: serde_json::Value,
    /// CSV files written, relative to the run directory.
    pub artifacts: Vec<String>,
    /// Sub-experiments that failed; the rest of the run proceeded.
    pub failures: Vec<String>,
    pub wall_clock_seconds: f64,
}

impl RunReport {
    /// Writes `summary.json` into `dir` and returns its path.
    pub fn write_summary(&self, dir: &Path) -> std::io::Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let path = dir.join("summary.json");
        let mut file = fs::File::create(&path)?;
        let text = serde_json::to_string_pretty(self).expect("report serializes");
        file.write_all(text.as_bytes())?;
        file.write_all(b"\n")?;
        Ok(path)
    }
}

fn open_csv(path: &Path, header: &str) -> std::io::Result<fs::File> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut f = fs::File::create(path)?;
    writeln!(f, "{header}")?;
    Ok(f)
}

/// Tail curve: one row per horizon N with the empirical probability and
/// its Wilson half-width. `value_label` names the estimated probability.
pub fn write_tail_curve_csv(
    path: &Path,
    curve: &TailCurve,
    value_label: &str,
) -> std::io::Result<()> {
    let mut f = open_csv(
        path,
        &format!("N_iterations,{value_label},wilson_halfwidth_95"),
    )?;
    for p in &curve.points {
        writeln!(f, "{},{},{}", p.n, p.value, p.ci_halfwidth)?;
    }
    Ok(())
}

/// Norm decay curve: one row per operator power.
pub fn write_decay_curve_csv(path: &Path, curve: &DecayCurve) -> std::io::Result<()> {
    let mut f = open_csv(path, &format!("n_power,norm_L{}_of_P^n_phi", curve.p))?;
    for &(n, v) in &curve.points {
        writeln!(f, "{n},{v}")?;
    }
    Ok(())
}

/// Moment curve: one row per horizon with the ensemble moment and its
/// Monte-Carlo standard error.
pub fn write_moment_curve_csv(
    path: &Path,
    curve: &MomentCurve,
    value_label: &str,
) -> std::io::Result<()> {
    let mut f = open_csv(path, &format!("N_iterations,{value_label},mc_stderr"))?;
    for p in &curve.points {
        writeln!(f, "{},{},{}", p.n, p.value, p.stderr)?;
    }
    Ok(())
}

/// Hitting-scaling estimates: one row per hole radius.
pub fn write_lalpha_csv(path: &Path, points: &[LalphaPoint]) -> std::io::Result<()> {
    let mut f = open_csv(
        path,
        "hole_radius,hole_measure,measure_halfwidth_95,threshold_steps,survival_prob,L_alpha_s_estimate,ci_lo,ci_hi,usable",
    )?;
    for p in points {
        writeln!(
            f,
            "{},{},{},{},{},{},{},{},{}",
            p.r,
            p.measure,
            p.measure_ci,
            p.threshold_steps,
            p.survival,
            p.estimate,
            p.ci_lo,
            p.ci_hi,
            p.usable
        )?;
    }
    Ok(())
}

/// Billiard orbit dump: one row per collision.
pub fn write_orbit_dump_csv(
    path: &Path,
    rows: &[(u64, f64, f64, f64, &'static str)],
) -> std::io::Result<()> {
    let mut f = open_csv(path, "step,q_arclength,phi_radians,tau_free_path,component")?;
    for (step, q, phi, tau, comp) in rows {
        writeln!(f, "{step},{q},{phi},{tau},{comp}")?;
    }
    Ok(())
}

/// Generic numeric table with caller-supplied header and rows.
pub fn write_table_csv(path: &Path, header: &str, rows: &[Vec<String>]) -> std::io::Result<()> {
    let mut f = open_csv(path, header)?;
    for row in rows {
        writeln!(f, "{}", row.join(","))?;
    }
    Ok(())
}
