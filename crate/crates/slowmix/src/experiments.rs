//! Experiment runner: TOML-configured suites over the library, with CSV
//! curves and a JSON summary per run.
//!
//! Nine experiment kinds are exposed (see [`list_experiments`]); each has
//! a full set of defaults so the CLI subcommands work out of the box, and
//! a `[params]` section in the config file overrides any of them. All
//! randomness is derived from the single master seed, and ensembles are
//! reduced in index order, so a run's statistical outputs are identical
//! for any worker count.
//!
//! Exit-code contract of the `slowmix` binary: 0 on success, 1 when any
//! sub-experiment failed (the others still ran and were reported), 2 on
//! configuration errors.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::billiards::{BilliardStream, StadiumTable, XReturnItem, XReturnStream};
use crate::curves::{fit_exponent, log_grid, ExponentFit};
use crate::deviations::{mld_truncation_sensitivity, DeviationConfig, StreamSource};
use crate::dynamics1d::{with_frozen_mean, MapSystem, Observable};
use crate::inducing::{gmy_diagnostics, return_tail, ReferenceSet};
use crate::pointproc::{
    dtv_window_counts, ensemble_hitting_times, ensemble_point_processes, exponential_law_check,
    extremal_index_formula, l_alpha_s, HoleSpec, LalphaConfig,
};
use crate::report::{
    write_decay_curve_csv, write_lalpha_csv, write_orbit_dump_csv, write_table_csv,
    write_tail_curve_csv, RunReport,
};
use crate::rng::{derive_seed, stream_rng};
use crate::transfer::build_ulam;

/// The experiment kinds, in stable listing order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Mld,
    Ld,
    ReturnTail,
    UlamDecay,
    BilliardInvariance,
    Hitting,
    PointProcess,
    LAlphaS,
    GmyDiagnostics,
}

impl ExperimentKind {
    pub fn all() -> [ExperimentKind; 9] {
        use ExperimentKind::*;
        [
            Mld,
            Ld,
            ReturnTail,
            UlamDecay,
            BilliardInvariance,
            Hitting,
            PointProcess,
            LAlphaS,
            GmyDiagnostics,
        ]
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::Mld => "mld",
            ExperimentKind::Ld => "ld",
            ExperimentKind::ReturnTail => "return-tail",
            ExperimentKind::UlamDecay => "ulam-decay",
            ExperimentKind::BilliardInvariance => "billiard-invariance",
            ExperimentKind::Hitting => "hitting",
            ExperimentKind::PointProcess => "point-process",
            ExperimentKind::LAlphaS => "l-alpha-s",
            ExperimentKind::GmyDiagnostics => "gmy-diagnostics",
        }
    }
}

impl std::str::FromStr for ExperimentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ExperimentKind::all()
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown experiment kind `{s}`"))
    }
}

/// One row of `slowmix list`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ExperimentInfo {
    pub kind: &'static str,
    pub description: &'static str,
    /// The limit law or quantity the experiment estimates.
    pub law: &'static str,
}

/// Stable-ordered catalogue of the experiment kinds.
pub fn list_experiments() -> Vec<ExperimentInfo> {
    vec![
        ExperimentInfo {
            kind: "mld",
            description: "maximal large-deviation tail of Birkhoff averages, with log-log exponent fit and truncation sensitivity",
            law: "mu(sup_{n>=N} |S_n/n| >= eps) ~ N^-beta",
        },
        ExperimentInfo {
            kind: "ld",
            description: "plain large-deviation tail of Birkhoff averages at fixed horizons",
            law: "mu(|S_N/N| >= eps)",
        },
        ExperimentInfo {
            kind: "return-tail",
            description: "survival function of first-return times to a reference interval, with power-law fit",
            law: "Leb(x in J : R(x) > N) ~ N^(-1/gamma)",
        },
        ExperimentInfo {
            kind: "ulam-decay",
            description: "transfer-operator norm decay under an Ulam discretization, plus the stationary density",
            law: "||P^n phi||_p over n",
        },
        ExperimentInfo {
            kind: "billiard-invariance",
            description: "stadium collision-map checks: measure invariance, time reversibility, mean free path, cone invariance, return-time tail to the arc-entry set",
            law: "cos(phi) dphi dq invariant; (Df) C^u inside C^u",
        },
        ExperimentInfo {
            kind: "hitting",
            description: "exponential law of rescaled first hitting times into boundary holes, across radii",
            law: "mu(tau > t/mu(hole)) -> exp(-t)",
        },
        ExperimentInfo {
            kind: "point-process",
            description: "Poisson approximation of hole-visit window counts in total variation, with the variance/mean ratio",
            law: "window counts -> product Poisson, d_tv ~ r^a",
        },
        ExperimentInfo {
            kind: "l-alpha-s",
            description: "hitting-time scaling estimator across shrinking holes, compared with the closed-form extremal index at periodic centers",
            law: "-log mu(tau > s mu^-alpha) / (s mu^(1-alpha)) -> 1 or 1 - 1/|Df^p(z)|",
        },
        ExperimentInfo {
            kind: "gmy-diagnostics",
            description: "expansion and distortion diagnostics of the induced first-return map over a reference interval",
            law: "sup 1/|DF| < 1; |log DF(x)/DF(y)| bounded on branches",
        },
    ]
}

#[derive(Debug)]
pub enum ExperimentError {
    /// Field-level validation messages.
    Config(Vec<String>),
    Io(std::io::Error),
    /// A whole-run failure (as opposed to a reported sub-failure).
    Run(String),
}

impl std::fmt::Display for ExperimentError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ExperimentError::Config(msgs) => {
                writeln!(f, "configuration invalid:")?;
                for m in msgs {
                    writeln!(f, "  - {m}")?;
                }
                Ok(())
            }
            ExperimentError::Io(e) => write!(f, "io error: {e}"),
            ExperimentError::Run(msg) => write!(f, "run failed: {msg}"),
        }
    }
}

impl std::error::Error for ExperimentError {}

impl From<std::io::Error> for ExperimentError {
    fn from(e: std::io::Error) -> Self {
        ExperimentError::Io(e)
    }
}

/// Raw config file shape (everything optional; defaults per kind).
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    experiment: RawExperiment,
    #[serde(default)]
    system: RawSystem,
    #[serde(default)]
    observable: RawObservable,
    #[serde(default)]
    params: RawParams,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExperiment {
    kind: Option<String>,
    name: Option<String>,
    seed: Option<u64>,
    output: Option<String>,
    workers: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSystem {
    map: Option<String>,
    gamma: Option<f64>,
    flat_half_length: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawObservable {
    kind: Option<String>,
    a: Option<f64>,
    b: Option<f64>,
    zero_mean: Option<bool>,
    mean_steps: Option<u64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParams {
    epsilon: Option<f64>,
    epsilon_rel: Option<f64>,
    n_grid_min: Option<u64>,
    n_grid_max: Option<u64>,
    n_grid_points: Option<usize>,
    n_max: Option<u64>,
    ensemble: Option<u64>,
    samples: Option<u64>,
    cap: Option<u64>,
    burn_in: Option<u64>,
    j_lo: Option<f64>,
    j_hi: Option<f64>,
    cells: Option<usize>,
    mc_per_cell: Option<u32>,
    p_norm: Option<f64>,
    decay_steps: Option<u64>,
    radii: Option<Vec<f64>>,
    horizon: Option<f64>,
    windows: Option<usize>,
    k_max: Option<u64>,
    alpha: Option<f64>,
    s: Option<f64>,
    z: Option<f64>,
    period: Option<u64>,
    q_center: Option<f64>,
    pair_distance: Option<f64>,
    measure_orbit_len: Option<u64>,
}

/// A fully resolved experiment plan: the config echo that lands in
/// `summary.json`.
#[derive(Debug, Clone, Serialize)]
pub struct Plan {
    pub kind: ExperimentKind,
    pub name: String,
    pub seed: u64,
    pub output: String,
    pub workers: usize,
    pub map: String,
    pub gamma: f64,
    pub flat_half_length: f64,
    pub observable: String,
    pub obs_a: f64,
    pub obs_b: f64,
    pub zero_mean: bool,
    pub mean_steps: u64,
    pub epsilon: Option<f64>,
    pub epsilon_rel: f64,
    pub n_grid_min: u64,
    pub n_grid_max: u64,
    pub n_grid_points: usize,
    pub n_max: Option<u64>,
    pub ensemble: u64,
    pub samples: u64,
    pub cap: u64,
    pub burn_in: u64,
    pub j_lo: f64,
    pub j_hi: f64,
    pub cells: usize,
    pub mc_per_cell: u32,
    pub p_norm: f64,
    pub decay_steps: u64,
    pub radii: Vec<f64>,
    pub horizon: f64,
    pub windows: usize,
    pub k_max: u64,
    pub alpha: f64,
    pub s: f64,
    pub z: f64,
    pub period: Option<u64>,
    pub q_center: f64,
    pub pair_distance: f64,
    pub measure_orbit_len: u64,
}

/// Defaults for each kind; every field is runnable as-is.
pub fn default_plan(kind: ExperimentKind) -> Plan {
    let mut plan = Plan {
        kind,
        name: kind.as_str().to_string(),
        seed: 20_240_613,
        output: "out".into(),
        workers: 0,
        map: "intermittent".into(),
        gamma: 0.5,
        flat_half_length: 1.0,
        observable: "indicator".into(),
        obs_a: 0.5,
        obs_b: 1.0,
        zero_mean: true,
        mean_steps: 10_000_000,
        epsilon: None,
        epsilon_rel: 0.2,
        n_grid_min: 100,
        n_grid_max: 1_000,
        n_grid_points: 8,
        n_max: None,
        ensemble: 10_000,
        samples: 1_000_000,
        cap: 10_000_000,
        burn_in: 1_000,
        j_lo: 0.5,
        j_hi: 1.0,
        cells: 4_096,
        mc_per_cell: 200,
        p_norm: 2.0,
        decay_steps: 10,
        radii: vec![0.2, 0.1, 0.05],
        horizon: 5.0,
        windows: 2,
        k_max: 5,
        alpha: 1.0,
        s: 1.0,
        z: 0.0,
        period: None,
        q_center: 0.8,
        pair_distance: 1e-4,
        measure_orbit_len: 100_000_000,
    };
    match kind {
        ExperimentKind::ReturnTail => {
            plan.n_grid_min = 10;
            plan.n_grid_points = 12;
        }
        ExperimentKind::UlamDecay => {
            plan.map = "doubling".into();
            plan.observable = "cosine".into();
        }
        ExperimentKind::LAlphaS => {
            plan.map = "doubling".into();
            plan.radii = vec![0.1, 0.05, 0.02, 0.01, 0.005];
            plan.period = Some(1);
        }
        ExperimentKind::PointProcess => {
            plan.radii = vec![0.05];
        }
        ExperimentKind::BilliardInvariance => {
            plan.samples = 100_000;
        }
        ExperimentKind::GmyDiagnostics => {
            plan.samples = 10_000;
        }
        _ => {}
    }
    plan
}

fn apply_raw(plan: &mut Plan, raw: &RawConfig) {
    let e = &raw.experiment;
    if let Some(v) = &e.name {
        plan.name = v.clone();
    }
    if let Some(v) = e.seed {
        plan.seed = v;
    }
    if let Some(v) = &e.output {
        plan.output = v.clone();
    }
    if let Some(v) = e.workers {
        plan.workers = v;
    }
    let s = &raw.system;
    if let Some(v) = &s.map {
        plan.map = v.clone();
    }
    if let Some(v) = s.gamma {
        plan.gamma = v;
    }
    if let Some(v) = s.flat_half_length {
        plan.flat_half_length = v;
    }
    let o = &raw.observable;
    if let Some(v) = &o.kind {
        plan.observable = v.clone();
    }
    if let Some(v) = o.a {
        plan.obs_a = v;
    }
    if let Some(v) = o.b {
        plan.obs_b = v;
    }
    if let Some(v) = o.zero_mean {
        plan.zero_mean = v;
    }
    if let Some(v) = o.mean_steps {
        plan.mean_steps = v;
    }
    let p = &raw.params;
    if let Some(v) = p.epsilon {
        plan.epsilon = Some(v);
    }
    if let Some(v) = p.epsilon_rel {
        plan.epsilon_rel = v;
    }
    if let Some(v) = p.n_grid_min {
        plan.n_grid_min = v;
    }
    if let Some(v) = p.n_grid_max {
        plan.n_grid_max = v;
    }
    if let Some(v) = p.n_grid_points {
        plan.n_grid_points = v;
    }
    if let Some(v) = p.n_max {
        plan.n_max = Some(v);
    }
    if let Some(v) = p.ensemble {
        plan.ensemble = v;
    }
    if let Some(v) = p.samples {
        plan.samples = v;
    }
    if let Some(v) = p.cap {
        plan.cap = v;
    }
    if let Some(v) = p.burn_in {
        plan.burn_in = v;
    }
    if let Some(v) = p.j_lo {
        plan.j_lo = v;
    }
    if let Some(v) = p.j_hi {
        plan.j_hi = v;
    }
    if let Some(v) = p.cells {
        plan.cells = v;
    }
    if let Some(v) = p.mc_per_cell {
        plan.mc_per_cell = v;
    }
    if let Some(v) = p.p_norm {
        plan.p_norm = v;
    }
    if let Some(v) = p.decay_steps {
        plan.decay_steps = v;
    }
    if let Some(v) = &p.radii {
        plan.radii = v.clone();
    }
    if let Some(v) = p.horizon {
        plan.horizon = v;
    }
    if let Some(v) = p.windows {
        plan.windows = v;
    }
    if let Some(v) = p.k_max {
        plan.k_max = v;
    }
    if let Some(v) = p.alpha {
        plan.alpha = v;
    }
    if let Some(v) = p.s {
        plan.s = v;
    }
    if let Some(v) = p.z {
        plan.z = v;
    }
    if let Some(v) = p.period {
        plan.period = Some(v);
    }
    if let Some(v) = p.q_center {
        plan.q_center = v;
    }
    if let Some(v) = p.pair_distance {
        plan.pair_distance = v;
    }
    if let Some(v) = p.measure_orbit_len {
        plan.measure_orbit_len = v;
    }
}

fn validate(plan: &Plan) -> Vec<String> {
    let mut errs = Vec::new();
    if plan.map != "doubling" && plan.map != "intermittent" {
        errs.push(format!(
            "system.map: `{}` is not one of doubling | intermittent",
            plan.map
        ));
    }
    if !(0.0..1.0).contains(&plan.gamma) {
        errs.push(format!("system.gamma: {} must lie in [0, 1)", plan.gamma));
    }
    if !(plan.flat_half_length > 0.0) {
        errs.push(format!(
            "system.flat_half_length: {} must be positive",
            plan.flat_half_length
        ));
    }
    match plan.observable.as_str() {
        "indicator" => {
            if !(plan.obs_a < plan.obs_b) || plan.obs_a < 0.0 || plan.obs_b > 1.0 {
                errs.push(format!(
                    "observable: indicator needs 0 <= a < b <= 1, got a = {}, b = {}",
                    plan.obs_a, plan.obs_b
                ));
            }
        }
        "coordinate" | "cosine" => {}
        other => errs.push(format!(
            "observable.kind: `{other}` is not one of indicator | coordinate | cosine"
        )),
    }
    if let Some(eps) = plan.epsilon {
        if !(eps > 0.0) {
            errs.push(format!("params.epsilon: {eps} must be positive"));
        }
    }
    if !(plan.epsilon_rel > 0.0) {
        errs.push(format!(
            "params.epsilon_rel: {} must be positive",
            plan.epsilon_rel
        ));
    }
    if plan.n_grid_min == 0 || plan.n_grid_min >= plan.n_grid_max {
        errs.push(format!(
            "params.n_grid_min/n_grid_max: need 1 <= min < max, got {} and {}",
            plan.n_grid_min, plan.n_grid_max
        ));
    }
    if plan.n_grid_points < 2 || plan.n_grid_points > 64 {
        errs.push(format!(
            "params.n_grid_points: {} must lie in [2, 64]",
            plan.n_grid_points
        ));
    }
    if let Some(n_max) = plan.n_max {
        if n_max < plan.n_grid_max {
            errs.push(format!(
                "params.n_max: {} must be at least n_grid_max = {}",
                n_max, plan.n_grid_max
            ));
        }
    }
    if plan.ensemble == 0 {
        errs.push("params.ensemble: must be at least 1".into());
    }
    if plan.samples == 0 {
        errs.push("params.samples: must be at least 1".into());
    }
    if plan.cap < plan.n_grid_max {
        errs.push(format!(
            "params.cap: {} must be at least n_grid_max = {}",
            plan.cap, plan.n_grid_max
        ));
    }
    if !(0.0 <= plan.j_lo && plan.j_lo < plan.j_hi && plan.j_hi <= 1.0) {
        errs.push(format!(
            "params.j_lo/j_hi: need 0 <= lo < hi <= 1, got {} and {}",
            plan.j_lo, plan.j_hi
        ));
    }
    if plan.cells < 2 {
        errs.push(format!("params.cells: {} must be at least 2", plan.cells));
    }
    if plan.mc_per_cell == 0 {
        errs.push("params.mc_per_cell: must be at least 1".into());
    }
    if !(plan.p_norm >= 1.0) {
        errs.push(format!("params.p_norm: {} must be at least 1", plan.p_norm));
    }
    if plan.radii.is_empty() || plan.radii.iter().any(|r| !(*r > 0.0)) {
        errs.push("params.radii: need a nonempty list of positive radii".into());
    }
    if !(plan.horizon >= 0.0) {
        errs.push(format!(
            "params.horizon: {} must be nonnegative",
            plan.horizon
        ));
    }
    if plan.windows == 0 || plan.windows > 4 {
        errs.push(format!(
            "params.windows: {} must lie in [1, 4] (the joint law must stay estimable)",
            plan.windows
        ));
    }
    if plan.k_max == 0 || plan.k_max > 16 {
        errs.push(format!("params.k_max: {} must lie in [1, 16]", plan.k_max));
    }
    if !(plan.alpha > 0.0 && plan.alpha <= 1.0) {
        errs.push(format!("params.alpha: {} must lie in (0, 1]", plan.alpha));
    }
    if !(plan.s > 0.0) {
        errs.push(format!("params.s: {} must be positive", plan.s));
    }
    if !(0.0..=1.0).contains(&plan.z) {
        errs.push(format!("params.z: {} must lie in [0, 1]", plan.z));
    }
    if !(plan.pair_distance > 0.0) {
        errs.push(format!(
            "params.pair_distance: {} must be positive",
            plan.pair_distance
        ));
    }
    if plan.measure_orbit_len == 0 {
        errs.push("params.measure_orbit_len: must be at least 1".into());
    }
    errs
}

/// CLI-style overrides applied after the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<String>,
    pub workers: Option<usize>,
}

impl Overrides {
    fn apply(&self, plan: &mut Plan) {
        if let Some(v) = self.seed {
            plan.seed = v;
        }
        if let Some(v) = &self.out {
            plan.output = v.clone();
        }
        if let Some(v) = self.workers {
            plan.workers = v;
        }
    }
}

/// Parses and validates a config file's text into a runnable plan.
pub fn parse_config(text: &str) -> Result<Plan, ExperimentError> {
    let raw: RawConfig = toml::from_str(text)
        .map_err(|e| ExperimentError::Config(vec![format!("toml parse error: {e}")]))?;
    let kind_str = raw
        .experiment
        .kind
        .clone()
        .ok_or_else(|| ExperimentError::Config(vec!["experiment.kind: missing".into()]))?;
    let kind: ExperimentKind = kind_str
        .parse()
        .map_err(|e: String| ExperimentError::Config(vec![format!("experiment.kind: {e}")]))?;
    let mut plan = default_plan(kind);
    apply_raw(&mut plan, &raw);
    let errs = validate(&plan);
    if errs.is_empty() {
        Ok(plan)
    } else {
        Err(ExperimentError::Config(errs))
    }
}

/// Parses, validates and runs a config file.
pub fn run_file(path: &Path, overrides: &Overrides) -> Result<RunOutcome, ExperimentError> {
    let text = std::fs::read_to_string(path)?;
    let mut plan = parse_config(&text)?;
    overrides.apply(&mut plan);
    run_plan(&plan)
}

/// Result of one run: the report, where it was written, and whether any
/// sub-experiment failed.
#[derive(Debug)]
pub struct RunOutcome {
    pub report: RunReport,
    pub out_dir: PathBuf,
    pub any_failed: bool,
}

fn map_from_plan(plan: &Plan) -> Result<MapSystem, ExperimentError> {
    match plan.map.as_str() {
        "doubling" => Ok(MapSystem::doubling()),
        "intermittent" => {
            MapSystem::intermittent(plan.gamma).map_err(|e| ExperimentError::Run(e.to_string()))
        }
        other => Err(ExperimentError::Run(format!("unknown map `{other}`"))),
    }
}

fn observable_from_plan(plan: &Plan, map: &MapSystem) -> Result<Observable, ExperimentError> {
    let base = match plan.observable.as_str() {
        "indicator" => Observable::indicator(plan.obs_a, plan.obs_b),
        "coordinate" => Observable::coordinate(),
        "cosine" => Observable::cosine(),
        other => {
            return Err(ExperimentError::Run(format!(
                "unknown observable `{other}`"
            )))
        }
    };
    if plan.zero_mean {
        let mut rng = stream_rng(plan.seed, "mean-shift", 0);
        with_frozen_mean(map, base, plan.mean_steps, &mut rng)
            .map_err(|e| ExperimentError::Run(e.to_string()))
    } else {
        Ok(base)
    }
}

fn fit_to_json(fit: &Result<ExponentFit, crate::curves::FitError>) -> serde_json::Value {
    match fit {
        Ok(f) => json!({
            "slope": f.slope,
            "intercept": f.intercept,
            "stderr": f.stderr,
            "r_squared": f.r_squared,
            "points_used": f.points_used,
        }),
        Err(e) => json!({ "error": e.to_string() }),
    }
}

/// Runs a resolved plan inside a worker pool of the configured size.
pub fn run_plan(plan: &Plan) -> Result<RunOutcome, ExperimentError> {
    let started = Instant::now();
    let out_dir = PathBuf::from(&plan.output).join(&plan.name);
    std::fs::create_dir_all(&out_dir)?;

    let body = || -> Result<(serde_json::Value, Vec<String>, Vec<String>), ExperimentError> {
        match plan.kind {
            ExperimentKind::Mld | ExperimentKind::Ld => run_deviation(plan, &out_dir),
            ExperimentKind::ReturnTail => run_return_tail(plan, &out_dir),
            ExperimentKind::UlamDecay => run_ulam_decay(plan, &out_dir),
            ExperimentKind::BilliardInvariance => run_billiard_invariance(plan, &out_dir),
            ExperimentKind::Hitting => run_hitting(plan, &out_dir),
            ExperimentKind::PointProcess => run_point_process(plan, &out_dir),
            ExperimentKind::LAlphaS => run_l_alpha_s(plan, &out_dir),
            ExperimentKind::GmyDiagnostics => run_gmy(plan, &out_dir),
        }
    };

    let (metrics, artifacts, failures) = if plan.workers > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(plan.workers)
            .build()
            .map_err(|e| ExperimentError::Run(e.to_string()))?;
        pool.install(body)?
    } else {
        body()?
    };

    let any_failed = !failures.is_empty();
    let report = RunReport {
        kind: plan.kind.as_str().to_string(),
        name: plan.name.clone(),
        seed: plan.seed,
        config: serde_json::to_value(plan).expect("plan serializes"),
        metrics,
        artifacts,
        failures,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    };
    report.write_summary(&out_dir)?;
    Ok(RunOutcome {
        report,
        out_dir,
        any_failed,
    })
}

type RunnerOutput = Result<(serde_json::Value, Vec<String>, Vec<String>), ExperimentError>;

fn run_deviation(plan: &Plan, out_dir: &Path) -> RunnerOutput {
    let map = map_from_plan(plan)?;
    let observable = observable_from_plan(plan, &map)?;
    let sup_norm = observable.sup_norm();
    let epsilon = plan.epsilon.unwrap_or(plan.epsilon_rel * sup_norm);
    let grid = log_grid(plan.n_grid_min, plan.n_grid_max, plan.n_grid_points);
    let n_max = plan.n_max.unwrap_or(plan.n_grid_max * 10);
    let src = StreamSource::Map1d {
        map,
        observable: observable.clone(),
        burn_in: plan.burn_in,
    };
    let cfg = DeviationConfig {
        epsilon,
        n_grid: grid,
        n_max,
        ensemble: plan.ensemble,
        moment_order: 2,
    };
    let mut artifacts = Vec::new();
    let metrics = if plan.kind == ExperimentKind::Mld {
        let (base, wide, max_diff) = mld_truncation_sensitivity(&src, &cfg, plan.seed)
            .map_err(|e| ExperimentError::Run(e.to_string()))?;
        let fit = fit_exponent(&base.curve.fit_points(), (1.0, f64::INFINITY));
        let csv = out_dir.join("mld_tail.csv");
        write_tail_curve_csv(&csv, &base.curve, "prob_sup_birkhoff_mean_ge_eps")?;
        artifacts.push("mld_tail.csv".into());
        let csv2 = out_dir.join("mld_tail_double_horizon.csv");
        write_tail_curve_csv(&csv2, &wide.curve, "prob_sup_birkhoff_mean_ge_eps")?;
        artifacts.push("mld_tail_double_horizon.csv".into());
        let max_ci = base
            .curve
            .points
            .iter()
            .map(|p| p.ci_halfwidth)
            .fold(0.0f64, f64::max);
        json!({
            "epsilon": epsilon,
            "sup_norm": sup_norm,
            "mean_shift": observable.mean_shift(),
            "expected_exponent_if_intermittent": if plan.map == "intermittent" && plan.gamma > 0.0 {
                json!(-(1.0 / plan.gamma - 1.0))
            } else {
                json!(null)
            },
            "truncation_horizon": base.horizon,
            "fit": fit_to_json(&fit),
            "truncation_sensitivity": {
                "horizons": [base.horizon, wide.horizon],
                "max_pointwise_diff": max_diff,
                "max_ci_halfwidth": max_ci,
                "within_ci": max_diff <= max_ci,
            },
            "censored_members": base.curve.censored,
        })
    } else {
        let curve = crate::deviations::ld_tail(&src, &cfg, plan.seed)
            .map_err(|e| ExperimentError::Run(e.to_string()))?;
        let fit = fit_exponent(&curve.fit_points(), (1.0, f64::INFINITY));
        let csv = out_dir.join("ld_tail.csv");
        write_tail_curve_csv(&csv, &curve, "prob_birkhoff_mean_ge_eps")?;
        artifacts.push("ld_tail.csv".into());
        json!({
            "epsilon": epsilon,
            "sup_norm": sup_norm,
            "mean_shift": observable.mean_shift(),
            "fit": fit_to_json(&fit),
        })
    };
    Ok((metrics, artifacts, vec![]))
}

fn run_return_tail(plan: &Plan, out_dir: &Path) -> RunnerOutput {
    let map = map_from_plan(plan)?;
    let j =
        ReferenceSet::new(plan.j_lo, plan.j_hi).map_err(|e| ExperimentError::Run(e.to_string()))?;
    let grid = log_grid(plan.n_grid_min, plan.n_grid_max, plan.n_grid_points);
    let mut rng = stream_rng(plan.seed, "return-tail", 0);
    let curve = return_tail(&map, &j, plan.samples, &grid, plan.cap, &mut rng)
        .map_err(|e| ExperimentError::Run(e.to_string()))?;
    let fit = fit_exponent(&curve.fit_points(), (1.0, f64::INFINITY));
    let csv = out_dir.join("return_tail.csv");
    write_tail_curve_csv(&csv, &curve, "prob_R_gt_N")?;
    let metrics = json!({
        "reference": { "lo": j.a(), "hi": j.b() },
        "samples": curve.sample_size,
        "censored": curve.censored,
        "censoring_rate": curve.censoring_rate(),
        "fit": fit_to_json(&fit),
        "expected_exponent_if_intermittent": if plan.map == "intermittent" && plan.gamma > 0.0 {
            json!(-1.0 / plan.gamma)
        } else {
            json!(null)
        },
    });
    Ok((metrics, vec!["return_tail.csv".into()], vec![]))
}

fn run_ulam_decay(plan: &Plan, out_dir: &Path) -> RunnerOutput {
    let map = map_from_plan(plan)?;
    let mut rng = stream_rng(plan.seed, "ulam", 0);
    let op = build_ulam(&map, plan.cells, plan.mc_per_cell, &mut rng)
        .map_err(|e| ExperimentError::Run(e.to_string()))?;
    let obs = match plan.observable.as_str() {
        "cosine" => op.discretize(|x| (2.0 * std::f64::consts::PI * x).cos()),
        "coordinate" => op.discretize(|x| x),
        "indicator" => {
            let (a, b) = (plan.obs_a, plan.obs_b);
            op.discretize(move |x| if x >= a && x <= b { 1.0 } else { 0.0 })
        }
        other => {
            return Err(ExperimentError::Run(format!(
                "unknown observable `{other}`"
            )))
        }
    };
    let grid: Vec<u64> = (0..=plan.decay_steps).collect();
    let curve = op
        .norm_decay(&obs, plan.p_norm, &grid, &plan.observable)
        .map_err(|e| ExperimentError::Run(e.to_string()))?;
    let per_step = curve.per_step_factor(1e-14);
    write_decay_curve_csv(&out_dir.join("norm_decay.csv"), &curve)?;
    let density_rows: Vec<Vec<String>> = op
        .cell_centers()
        .iter()
        .zip(op.stationary())
        .map(|(x, pi)| vec![x.to_string(), pi.to_string()])
        .collect();
    write_table_csv(
        &out_dir.join("stationary_density.csv"),
        "cell_center,invariant_density",
        &density_rows,
    )?;
    let metrics = json!({
        "cells": op.cell_count(),
        "mc_per_cell": plan.mc_per_cell,
        "power_iteration_sweeps": op.sweeps(),
        "p_norm": plan.p_norm,
        "initial_norm": curve.points.first().map(|p| p.1),
        "per_step_decay_factor": per_step,
        "mass_left_quarter": op.mass_of_cells(0.0, 0.25),
        "mass_right_half": op.mass_of_cells(0.5, 1.0),
    });
    Ok((
        metrics,
        vec!["norm_decay.csv".into(), "stationary_density.csv".into()],
        vec![],
    ))
}

fn run_billiard_invariance(plan: &Plan, out_dir: &Path) -> RunnerOutput {
    let table = StadiumTable::new(plan.flat_half_length)
        .map_err(|e| ExperimentError::Run(e.to_string()))?;
    let mut artifacts = Vec::new();
    let mut failures = Vec::new();
    let mut metrics = serde_json::Map::new();
    metrics.insert("perimeter".into(), json!(table.perimeter()));
    metrics.insert("area".into(), json!(table.area()));

    // Measure invariance: one-step pushforward of SRB samples.
    {
        let n = plan.samples.min(1_000_000) as usize;
        let pushed = crate::rng::run_indexed(n, |i| {
            let mut rng = stream_rng(plan.seed, "invariance", i as u64);
            loop {
                let x = table.sample_srb(&mut rng);
                if let Ok((y, _)) = table.step(&x) {
                    return (y.q, y.phi.sin());
                }
            }
        });
        let qs: Vec<f64> = pushed.iter().map(|p| p.0).collect();
        let sins: Vec<f64> = pushed.iter().map(|p| p.1).collect();
        metrics.insert(
            "pushforward_ks".into(),
            json!({
                "q_marginal": crate::stats::ks_uniform(&qs, 0.0, table.perimeter()),
                "sin_phi_marginal": crate::stats::ks_uniform(&sins, -1.0, 1.0),
                "samples": n,
            }),
        );
    }

    // Time reversibility.
    {
        let n = 10_000usize;
        let worst = crate::rng::run_indexed(n, |i| {
            let mut rng = stream_rng(plan.seed, "reversibility", i as u64);
            loop {
                let x = table.sample_srb(&mut rng);
                let Ok((y, _)) = table.step(&x) else { continue };
                let Ok((z, _)) = table.step(&crate::billiards::PhasePoint::new(y.q, -y.phi)) else {
                    continue;
                };
                let dq = (z.q - x.q).abs();
                let dq = dq.min(table.perimeter() - dq);
                return dq.max((z.phi + x.phi).abs());
            }
        })
        .into_iter()
        .fold(0.0f64, f64::max);
        metrics.insert("reversibility_max_error".into(), json!(worst));
        if worst > 1e-9 {
            failures.push(format!("time reversibility error {worst} above 1e-9"));
        }
    }

    // Mean free path against the geometric formula.
    {
        let n = plan.samples.min(1_000_000) as usize;
        let taus = crate::rng::run_indexed(n, |i| {
            let mut rng = stream_rng(plan.seed, "mfp", i as u64);
            loop {
                let x = table.sample_srb(&mut rng);
                if let Ok((_, step)) = table.step(&x) {
                    return step.tau;
                }
            }
        });
        let mean = taus.iter().sum::<f64>() / taus.len() as f64;
        metrics.insert(
            "mean_free_path".into(),
            json!({
                "empirical": mean,
                "formula": table.mean_free_path(),
                "relative_error": (mean - table.mean_free_path()).abs() / table.mean_free_path(),
            }),
        );
    }

    // Cone invariance of the derivative matrix.
    {
        let n = 10_000usize;
        let violations: u64 = crate::rng::run_indexed(n, |i| {
            let mut rng = stream_rng(plan.seed, "cone", i as u64);
            loop {
                let x = table.sample_srb(&mut rng);
                let Ok((y, step)) = table.step(&x) else {
                    continue;
                };
                let u = crate::rng::uniform_unit(&mut rng);
                let (dq, dphi) = if table.curvature(x.q) == 0.0 {
                    (1.0, (u * std::f64::consts::FRAC_PI_2 * 0.999).tan())
                } else {
                    (1.0, -u)
                };
                let m = table.derivative_matrix(&x, &y, step.tau);
                let dq1 = m[0][0] * dq + m[0][1] * dphi;
                let dphi1 = m[1][0] * dq + m[1][1] * dphi;
                return u64::from(!table.in_unstable_cone(y.q, dq1, dphi1, 1e-12));
            }
        })
        .into_iter()
        .sum();
        metrics.insert(
            "cone_invariance".into(),
            json!({ "vectors": n, "violations": violations }),
        );
        if violations > 0 {
            failures.push(format!("{violations} unstable-cone violations"));
        }
    }

    // Return times to the arc-entry reference set X.
    {
        let mut rng = stream_rng(plan.seed, "x-returns", 0);
        let stream = BilliardStream::new(table, &mut rng);
        match XReturnStream::new(stream, plan.cap) {
            Some(mut xs) => {
                let n = 20_000usize;
                let mut times = Vec::with_capacity(n);
                let mut censored = 0u64;
                for _ in 0..n {
                    match xs.next_return() {
                        XReturnItem::Time(k) => times.push(k),
                        XReturnItem::Censored => censored += 1,
                    }
                }
                let grid: Vec<u64> = (0..7).map(|i| 1u64 << i).collect();
                let counts: Vec<u64> = grid
                    .iter()
                    .map(|&g| times.iter().filter(|&&r| r > g).count() as u64)
                    .collect();
                let curve = crate::curves::TailCurve::from_counts(
                    &grid,
                    &counts,
                    times.len() as u64,
                    censored,
                );
                write_tail_curve_csv(&out_dir.join("x_return_tail.csv"), &curve, "prob_R_gt_N")?;
                artifacts.push("x_return_tail.csv".into());
                let fit = fit_exponent(&curve.fit_points(), (1.0, f64::INFINITY));
                let mean = times.iter().sum::<u64>() as f64 / times.len() as f64;
                metrics.insert(
                    "x_return_times".into(),
                    json!({
                        "mean": mean,
                        "censored": censored,
                        "grazing_discards": xs.discards(),
                        "tail_fit": fit_to_json(&fit),
                    }),
                );
            }
            None => failures.push("orbit never entered the arc-entry set".into()),
        }
    }

    // A short orbit dump for inspection.
    {
        let mut rng = stream_rng(plan.seed, "dump", 0);
        let mut stream = BilliardStream::new(table, &mut rng);
        let rows: Vec<(u64, f64, f64, f64, &'static str)> = (0..1_000)
            .map(|i| {
                let (p, step) = stream.next_collision();
                (i, p.q, p.phi, step.tau, step.to_component.name())
            })
            .collect();
        write_orbit_dump_csv(&out_dir.join("orbit_dump.csv"), &rows)?;
        artifacts.push("orbit_dump.csv".into());
    }

    Ok((serde_json::Value::Object(metrics), artifacts, failures))
}

fn run_hitting(plan: &Plan, out_dir: &Path) -> RunnerOutput {
    let table = StadiumTable::new(plan.flat_half_length)
        .map_err(|e| ExperimentError::Run(e.to_string()))?;
    let mut artifacts = Vec::new();
    let mut failures = Vec::new();
    let mut per_radius = Vec::new();
    for (ri, &r) in plan.radii.iter().enumerate() {
        let hole = match HoleSpec::stadium(table, plan.q_center, r) {
            Ok(h) => h,
            Err(e) => {
                failures.push(format!("radius {r}: {e}"));
                continue;
            }
        };
        let cap = (50.0 / hole.measure()).ceil() as u64;
        let samples = ensemble_hitting_times(
            &hole,
            plan.ensemble,
            cap,
            plan.burn_in,
            derive_seed(plan.seed, "hitting-radius", ri as u64),
        );
        let uncensored = samples.iter().filter(|s| !s.censored).count();
        match exponential_law_check(&samples) {
            Ok(ks) => {
                let mean_rescaled = samples
                    .iter()
                    .filter(|s| !s.censored)
                    .map(|s| s.rescaled)
                    .sum::<f64>()
                    / uncensored.max(1) as f64;
                per_radius.push(json!({
                    "r": r,
                    "hole_measure": hole.measure(),
                    "ks_vs_exp1": ks,
                    "uncensored": uncensored,
                    "censored": samples.len() - uncensored,
                    "mean_rescaled_hit": mean_rescaled,
                }));
                let rows: Vec<Vec<String>> = samples
                    .iter()
                    .map(|s| {
                        vec![
                            s.tau.to_string(),
                            s.rescaled.to_string(),
                            s.censored.to_string(),
                        ]
                    })
                    .collect();
                let name = format!("hitting_times_r{r}.csv");
                write_table_csv(
                    &out_dir.join(&name),
                    "tau_steps,tau_rescaled_by_measure,censored",
                    &rows,
                )?;
                artifacts.push(name);
            }
            Err(e) => failures.push(format!("radius {r}: {e}")),
        }
    }
    // Monotone improvement within CI along shrinking radii.
    let ks_values: Vec<f64> = per_radius
        .iter()
        .map(|v| v["ks_vs_exp1"].as_f64().unwrap())
        .collect();
    let ci = 1.36 / (plan.ensemble as f64).sqrt();
    let monotone_within_ci = ks_values.windows(2).all(|w| w[1] <= w[0] + ci);
    let metrics = json!({
        "q_center": plan.q_center,
        "per_radius": per_radius,
        "ks_ci_95": ci,
        "monotone_within_ci": monotone_within_ci,
    });
    Ok((metrics, artifacts, failures))
}

fn run_point_process(plan: &Plan, out_dir: &Path) -> RunnerOutput {
    let table = StadiumTable::new(plan.flat_half_length)
        .map_err(|e| ExperimentError::Run(e.to_string()))?;
    let r = plan.radii[0];
    let hole = HoleSpec::stadium(table, plan.q_center, r)
        .map_err(|e| ExperimentError::Run(e.to_string()))?;
    let samples = ensemble_point_processes(
        &hole,
        plan.ensemble,
        plan.horizon,
        plan.burn_in,
        derive_seed(plan.seed, "pp", 0),
    );
    let comparison = dtv_window_counts(&samples, plan.windows, plan.k_max)
        .map_err(|e| ExperimentError::Run(e.to_string()))?;
    let totals: Vec<f64> = samples.iter().map(|s| s.total() as f64).collect();
    let (mean, var) = crate::stats::mean_and_variance(&totals);
    let rows: Vec<Vec<String>> = samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let mut row = vec![i.to_string(), s.total().to_string()];
            for w in 0..plan.windows {
                let lo = plan.horizon * w as f64 / plan.windows as f64;
                let hi = plan.horizon * (w + 1) as f64 / plan.windows as f64;
                row.push(s.count_in(lo, hi).to_string());
            }
            row
        })
        .collect();
    let mut header = String::from("sample,total_count");
    for w in 0..plan.windows {
        header.push_str(&format!(",count_window_{w}"));
    }
    write_table_csv(&out_dir.join("window_counts.csv"), &header, &rows)?;
    let metrics = json!({
        "r": r,
        "hole_measure": hole.measure(),
        "horizon": plan.horizon,
        "windows": plan.windows,
        "k_max": plan.k_max,
        "d_tv": comparison.d_tv,
        "per_window_mean_var": comparison.per_window,
        "total_count": { "mean": mean, "variance": var, "fano": var / mean },
    });
    Ok((metrics, vec!["window_counts.csv".into()], vec![]))
}

fn run_l_alpha_s(plan: &Plan, out_dir: &Path) -> RunnerOutput {
    let map = map_from_plan(plan)?;
    let cfg = LalphaConfig {
        alpha: plan.alpha,
        s: plan.s,
        ensemble: plan.ensemble,
        burn_in: plan.burn_in,
        measure_orbit_len: plan.measure_orbit_len,
        max_rel_measure_ci: 0.05,
    };
    let points = l_alpha_s(map, plan.z, &cfg, &plan.radii, plan.seed)
        .map_err(|e| ExperimentError::Run(e.to_string()))?;
    write_lalpha_csv(&out_dir.join("l_alpha_s.csv"), &points)?;
    let formula = plan.period.map(|p| extremal_index_formula(&map, plan.z, p));
    let smallest_usable = points.iter().rev().find(|p| p.usable);
    // Admissible scaling range for the hitting limit: alpha above
    // 1/(1 + beta/2), i.e. 2g/(1+g) for the intermittent family with
    // beta = 1/g - 1; alpha = 1 is always inside.
    let alpha_proven = match plan.map.as_str() {
        "intermittent" if plan.gamma > 0.0 => {
            json!(plan.alpha > 2.0 * plan.gamma / (1.0 + plan.gamma))
        }
        _ => json!(true),
    };
    let metrics = json!({
        "z": plan.z,
        // A center on the domain boundary only admits a one-sided hole;
        // results there are recorded but flagged.
        "z_on_boundary": plan.z == 0.0 || plan.z == 1.0,
        "alpha_in_proven_range": alpha_proven,
        "alpha": plan.alpha,
        "s": plan.s,
        "period_hint": plan.period,
        "extremal_index_formula": match &formula {
            Some(Ok(v)) => json!(v),
            Some(Err(e)) => json!({ "error": e.to_string() }),
            None => json!(null),
        },
        "estimates": points.iter().map(|p| json!({
            "r": p.r,
            "measure": p.measure,
            "estimate": p.estimate,
            "ci": [p.ci_lo, p.ci_hi],
            "usable": p.usable,
        })).collect::<Vec<_>>(),
        "smallest_usable_estimate": smallest_usable.map(|p| p.estimate),
    });
    Ok((metrics, vec!["l_alpha_s.csv".into()], vec![]))
}

fn run_gmy(plan: &Plan, out_dir: &Path) -> RunnerOutput {
    let map = map_from_plan(plan)?;
    let j =
        ReferenceSet::new(plan.j_lo, plan.j_hi).map_err(|e| ExperimentError::Run(e.to_string()))?;
    let mut rng = stream_rng(plan.seed, "gmy", 0);
    let diag = gmy_diagnostics(
        &map,
        &j,
        plan.samples,
        plan.pair_distance,
        plan.cap,
        &mut rng,
    )
    .map_err(|e| ExperimentError::Run(e.to_string()))?;
    let rows = vec![vec![
        diag.rho_hat.to_string(),
        diag.distortion_hat.to_string(),
        diag.branch_count_sampled.to_string(),
        diag.pairs_used.to_string(),
        diag.censored.to_string(),
    ]];
    write_table_csv(
        &out_dir.join("gmy_diagnostics.csv"),
        "rho_hat_sup_inverse_DF,distortion_hat_log_ratio,branches_sampled,pairs_used,censored",
        &rows,
    )?;
    let metrics = json!({
        "reference": { "lo": j.a(), "hi": j.b() },
        "samples": plan.samples,
        "pair_distance": plan.pair_distance,
        "rho_hat": diag.rho_hat,
        "uniformly_expanding": diag.rho_hat < 1.0,
        "distortion_hat": diag.distortion_hat,
        "branches_sampled": diag.branch_count_sampled,
        "pairs_used": diag.pairs_used,
        "censored": diag.censored,
    });
    Ok((metrics, vec!["gmy_diagnostics.csv".into()], vec![]))
}
