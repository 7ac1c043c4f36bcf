//! Configuration-driven experiment runner binding all modules.
//!
//! Experiments are single JSON documents with a strict schema: the `kind`
//! tag selects the pipeline and unknown keys are rejected, so typos in
//! mathematical parameters fail loudly instead of silently running the
//! default. Each run writes `report.json`, pipeline CSVs, and a
//! `manifest.json` into the configured output directory. Reports are
//! byte-identical across reruns of the same (config, seed); wall-clock
//! timings live only in the manifest.
//!
//! Exit codes: 0 success, 2 validation error, 3 numerical-status failure
//! (for example a non-converged Nash alternation), with the report still
//! written in the latter case.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::game::{self, GameSpec, NashOptions};
use crate::geometry::{SpaceSet, SpaceTimeSet};
use crate::normopt::{self, NormOptOptions, NormOptProblem, PenaltySchedule};
use crate::observability::{self, ObsParams};
use crate::pde::{self, Control, TimeGrid};
use crate::spectral::{self, DegenerateOperatorSpec};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("validation: {0}")]
    Validation(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

/// Exit status of a pipeline run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RunStatus {
    Success,
    ValidationError,
    NumericalFailure,
}

impl RunStatus {
    pub fn exit_code(self) -> i32 {
        match self {
            RunStatus::Success => 0,
            RunStatus::ValidationError => 2,
            RunStatus::NumericalFailure => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorConfig {
    pub alpha: f64,
    pub n_cells: usize,
    pub grading: f64,
    #[serde(default)]
    pub validation_mode: bool,
}

impl OperatorConfig {
    fn build(&self) -> Result<DegenerateOperatorSpec, CliError> {
        let spec = if self.validation_mode {
            DegenerateOperatorSpec::validation(self.alpha, self.n_cells, self.grading)
        } else {
            DegenerateOperatorSpec::new(self.alpha, self.n_cells, self.grading)
        };
        spec.map_err(|e| CliError::Validation(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub t_final: f64,
    pub n_steps: usize,
}

impl GridConfig {
    fn build(&self) -> Result<TimeGrid, CliError> {
        TimeGrid::new(self.t_final, self.n_steps).map_err(|e| CliError::Validation(e.to_string()))
    }
}

/// Constant-in-time control profile given by mode coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlConfig {
    pub support: SpaceSet,
    pub profile_modes: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EigConfig {
    pub operator: OperatorConfig,
    pub k: usize,
    #[serde(default)]
    pub output_dir: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveConfig {
    pub operator: OperatorConfig,
    pub k: usize,
    pub grid: GridConfig,
    pub y0: Vec<f64>,
    #[serde(default)]
    pub leader: Option<ControlConfig>,
    #[serde(default)]
    pub follower1: Option<ControlConfig>,
    #[serde(default)]
    pub follower2: Option<ControlConfig>,
    #[serde(default)]
    pub output_dir: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservabilityConfig {
    pub operator: OperatorConfig,
    pub k: usize,
    pub grid: GridConfig,
    pub d: SpaceTimeSet,
    #[serde(default)]
    pub mu: Option<f64>,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<String>,
}

fn default_restarts() -> usize {
    32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameConfig {
    pub operator: OperatorConfig,
    pub k: usize,
    pub grid: GridConfig,
    pub omega: SpaceSet,
    pub omega1: SpaceSet,
    pub omega2: SpaceSet,
    pub g1: SpaceSet,
    pub g2: SpaceSet,
    pub m0: f64,
    pub m1: f64,
    pub m2: f64,
    pub y0: Vec<f64>,
    pub y_t1: Vec<f64>,
    pub y_t2: Vec<f64>,
    #[serde(default)]
    pub leader: Option<ControlConfig>,
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub max_rounds: Option<usize>,
    #[serde(default)]
    pub probes: Option<usize>,
    #[serde(default)]
    pub tol_class: Option<f64>,
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FollowerConfig {
    pub omega1: SpaceSet,
    pub omega2: SpaceSet,
    pub g1: SpaceSet,
    pub g2: SpaceSet,
    pub m1: f64,
    pub m2: f64,
    pub y_t1: Vec<f64>,
    pub y_t2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormoptConfig {
    pub operator: OperatorConfig,
    pub k: usize,
    #[serde(default)]
    pub k_dual: Option<usize>,
    pub grid: GridConfig,
    pub omega: SpaceSet,
    pub y0: Vec<f64>,
    #[serde(default)]
    pub followers: Option<FollowerConfig>,
    #[serde(default)]
    pub eps_schedule: Option<Vec<f64>>,
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Permits follower regions outside the leader region (assumption A1
    /// relaxed); the report records a warning.
    #[serde(default)]
    pub allow_followers_outside_leader_region: bool,
    #[serde(default)]
    pub output_dir: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Base experiment (any non-sweep config value).
    pub base: Value,
    /// Dotted-path overrides, e.g. "grid.t_final" -> [0.1, 0.2].
    pub vary: BTreeMap<String, Vec<Value>>,
    #[serde(default)]
    pub output_dir: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExperimentConfig {
    Eig(EigConfig),
    Solve(SolveConfig),
    Observability(ObservabilityConfig),
    Game(GameConfig),
    Normopt(NormoptConfig),
    Sweep(SweepConfig),
}

impl ExperimentConfig {
    pub fn output_dir(&self) -> PathBuf {
        let dir = match self {
            ExperimentConfig::Eig(c) => &c.output_dir,
            ExperimentConfig::Solve(c) => &c.output_dir,
            ExperimentConfig::Observability(c) => &c.output_dir,
            ExperimentConfig::Game(c) => &c.output_dir,
            ExperimentConfig::Normopt(c) => &c.output_dir,
            ExperimentConfig::Sweep(c) => &c.output_dir,
        };
        PathBuf::from(dir.clone().unwrap_or_else(|| "degenlab_out".to_string()))
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            ExperimentConfig::Eig(_) => "eig",
            ExperimentConfig::Solve(_) => "solve",
            ExperimentConfig::Observability(_) => "observability",
            ExperimentConfig::Game(_) => "game",
            ExperimentConfig::Normopt(_) => "normopt",
            ExperimentConfig::Sweep(_) => "sweep",
        }
    }
}

/// FNV-1a hash of the canonical (sorted-key) JSON form; stable under field
/// reordering in the source file.
pub fn config_hash(value: &Value) -> String {
    let canonical = serde_json::to_string(value).unwrap_or_default();
    let mut hash: u64 = 0xcbf29ce484222325;
    for b in canonical.as_bytes() {
        hash ^= *b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    format!("fnv1a64:{hash:016x}")
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub artifact_version: String,
    pub kind: String,
    pub status: RunStatus,
    pub wall_clock_ms: u128,
    pub timings_ms: Vec<(String, u128)>,
    pub outputs: Vec<String>,
}

/// Headline metrics of a finished run, used by sweep aggregation.
#[derive(Debug, Clone, Serialize)]
pub struct RunOutcome {
    pub status: RunStatus,
    pub metrics: Vec<(String, f64)>,
}

fn write_text(dir: &Path, name: &str, content: &str) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    let path = dir.join(name);
    fs::write(&path, content).map_err(|e| CliError::Io {
        path: path.clone(),
        source: e,
    })?;
    Ok(path)
}

fn build_control(
    sys: &spectral::EigenSystem,
    grid: TimeGrid,
    cfg: &Option<ControlConfig>,
    default_support: &SpaceSet,
) -> Result<Control, CliError> {
    match cfg {
        None => Ok(Control::zero(sys, grid, default_support.clone())),
        Some(c) => Control::constant_from_modes(sys, grid, &c.profile_modes, c.support.clone())
            .map_err(|e| CliError::Validation(e.to_string())),
    }
}

// --- pipelines ------------------------------------------------------------

#[derive(Serialize)]
struct EigReport {
    alpha: f64,
    bessel_order: f64,
    k: usize,
    eigenvalues: Vec<f64>,
    closed_form: Vec<f64>,
}

fn run_eig(cfg: &EigConfig, dir: &Path, outputs: &mut Vec<String>) -> Result<RunOutcome, CliError> {
    let spec = cfg.operator.build()?;
    let sys = spectral::eigen_fd(&spec, cfg.k).map_err(|e| CliError::Numerical(e.to_string()))?;
    let closed = spectral::eigen_closed_form(cfg.operator.alpha, cfg.k, 1e-12)
        .map_err(|e| CliError::Numerical(e.to_string()))?;
    let report = EigReport {
        alpha: cfg.operator.alpha,
        bessel_order: sys.bessel_order,
        k: cfg.k,
        eigenvalues: sys.eigenvalues.clone(),
        closed_form: closed.clone(),
    };
    let json = serde_json::to_string_pretty(&report)?;
    outputs.push(write_text(dir, "report.json", &json)?.display().to_string());
    let mut csv = String::from("k,eigenvalue,closed_form\n");
    for i in 0..cfg.k {
        csv.push_str(&format!("{},{},{}\n", i + 1, sys.eigenvalues[i], closed[i]));
    }
    outputs.push(
        write_text(dir, "eigenvalues.csv", &csv)?
            .display()
            .to_string(),
    );
    Ok(RunOutcome {
        status: RunStatus::Success,
        metrics: vec![("lambda_1".into(), sys.eigenvalues[0])],
    })
}

#[derive(Serialize)]
struct SolveReport {
    k: usize,
    n_steps: usize,
    terminal_l2: f64,
}

fn run_solve(
    cfg: &SolveConfig,
    dir: &Path,
    outputs: &mut Vec<String>,
) -> Result<RunOutcome, CliError> {
    let spec = cfg.operator.build()?;
    let sys = spectral::eigen_fd(&spec, cfg.k).map_err(|e| CliError::Numerical(e.to_string()))?;
    let grid = cfg.grid.build()?;
    if cfg.y0.len() != cfg.k {
        return Err(CliError::Validation(format!(
            "y0 has {} modes, k = {}",
            cfg.y0.len(),
            cfg.k
        )));
    }
    let full = SpaceSet::interval(0.0, 1.0).map_err(|e| CliError::Validation(e.to_string()))?;
    let g = build_control(&sys, grid, &cfg.leader, &full)?;
    let u1 = build_control(&sys, grid, &cfg.follower1, &full)?;
    let u2 = build_control(&sys, grid, &cfg.follower2, &full)?;
    let traj = pde::solve_forward(&sys, &cfg.y0, &g, &u1, &u2, &grid)
        .map_err(|e| CliError::Numerical(e.to_string()))?;
    let terminal_l2 = pde::l2_modes(traj.terminal_state());
    let report = SolveReport {
        k: cfg.k,
        n_steps: grid.n_steps,
        terminal_l2,
    };
    outputs.push(
        write_text(dir, "report.json", &serde_json::to_string_pretty(&report)?)?
            .display()
            .to_string(),
    );
    outputs.push(
        write_text(dir, "trajectory.csv", &pde::trajectory_csv(&traj))?
            .display()
            .to_string(),
    );
    Ok(RunOutcome {
        status: RunStatus::Success,
        metrics: vec![("terminal_l2".into(), terminal_l2)],
    })
}

#[derive(Serialize)]
struct ObsReport<'a> {
    alpha: f64,
    k: usize,
    mu: f64,
    seed: u64,
    c_lower: f64,
    evaluations: usize,
    extremal_y0: &'a [f64],
    per_restart: &'a [observability::RestartStat],
}

fn run_observability(
    cfg: &ObservabilityConfig,
    dir: &Path,
    outputs: &mut Vec<String>,
) -> Result<RunOutcome, CliError> {
    let spec = cfg.operator.build()?;
    if !cfg
        .d
        .measure()
        .map_err(|e| CliError::Validation(e.to_string()))?
        .is_positive()
    {
        return Err(CliError::Validation(
            "observation set D has zero measure".into(),
        ));
    }
    let sys = spectral::eigen_fd(&spec, cfg.k).map_err(|e| CliError::Numerical(e.to_string()))?;
    let grid = cfg.grid.build()?;
    let mu = cfg
        .mu
        .unwrap_or_else(|| observability::default_mu(cfg.operator.alpha));
    let params = ObsParams {
        restarts: cfg.restarts,
        seed: cfg.seed,
        ..Default::default()
    };
    let est = observability::estimate_obs_constant(&sys, &cfg.d, &grid, &params)
        .map_err(|e| CliError::Numerical(e.to_string()))?;
    let report = ObsReport {
        alpha: cfg.operator.alpha,
        k: cfg.k,
        mu,
        seed: cfg.seed,
        c_lower: est.c_lower,
        evaluations: est.evaluations,
        extremal_y0: &est.extremal_y0,
        per_restart: &est.per_restart,
    };
    outputs.push(
        write_text(dir, "report.json", &serde_json::to_string_pretty(&report)?)?
            .display()
            .to_string(),
    );
    let mut csv = String::from("restart,start_ratio,final_ratio,iterations,converged\n");
    for (i, r) in est.per_restart.iter().enumerate() {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            i, r.start_ratio, r.final_ratio, r.iterations, r.converged
        ));
    }
    outputs.push(write_text(dir, "restarts.csv", &csv)?.display().to_string());
    Ok(RunOutcome {
        status: RunStatus::Success,
        metrics: vec![("c_lower".into(), est.c_lower)],
    })
}

fn run_game(
    cfg: &GameConfig,
    dir: &Path,
    outputs: &mut Vec<String>,
) -> Result<RunOutcome, CliError> {
    let spec = cfg.operator.build()?;
    let sys = spectral::eigen_fd(&spec, cfg.k).map_err(|e| CliError::Numerical(e.to_string()))?;
    let grid = cfg.grid.build()?;
    let leader = build_control(&sys, grid, &cfg.leader, &cfg.omega)?;
    let game_spec = GameSpec::new(
        sys,
        grid,
        cfg.omega.clone(),
        cfg.omega1.clone(),
        cfg.omega2.clone(),
        cfg.g1.clone(),
        cfg.g2.clone(),
        cfg.m0,
        cfg.m1,
        cfg.m2,
        cfg.y0.clone(),
        cfg.y_t1.clone(),
        cfg.y_t2.clone(),
        leader,
    )
    .map_err(|e| CliError::Validation(e.to_string()))?;
    let opts = NashOptions {
        tol: cfg.tol.unwrap_or(1e-9),
        max_rounds: cfg.max_rounds.unwrap_or(200),
        verify_probes: cfg.probes.unwrap_or(200),
        seed: cfg.seed,
        tol_class: cfg.tol_class,
        ..NashOptions::default()
    };
    let report =
        game::nash_solve(&game_spec, &opts).map_err(|e| CliError::Numerical(e.to_string()))?;
    outputs.push(
        write_text(dir, "report.json", &serde_json::to_string_pretty(&report)?)?
            .display()
            .to_string(),
    );
    let mut csv = String::from("t_mid,u1_norm,u2_norm\n");
    let n1 = report.u1.cell_norms(&game_spec.sys);
    let n2 = report.u2.cell_norms(&game_spec.sys);
    for j in 0..grid.n_steps {
        csv.push_str(&format!("{},{},{}\n", grid.cell_midpoint(j), n1[j], n2[j]));
    }
    outputs.push(
        write_text(dir, "follower_norms.csv", &csv)?
            .display()
            .to_string(),
    );
    let status = if report.converged {
        RunStatus::Success
    } else {
        RunStatus::NumericalFailure
    };
    Ok(RunOutcome {
        status,
        metrics: vec![
            ("gap1".into(), report.nash_gaps.0),
            ("gap2".into(), report.nash_gaps.1),
            ("converged".into(), if report.converged { 1.0 } else { 0.0 }),
        ],
    })
}

#[derive(Serialize)]
struct NormoptRunReport<'a> {
    #[serde(flatten)]
    inner: &'a normopt::NormOptReport,
    warnings: &'a [String],
}

fn run_normopt(
    cfg: &NormoptConfig,
    dir: &Path,
    outputs: &mut Vec<String>,
) -> Result<RunOutcome, CliError> {
    let spec = cfg.operator.build()?;
    let sys = spectral::eigen_fd(&spec, cfg.k).map_err(|e| CliError::Numerical(e.to_string()))?;
    let grid = cfg.grid.build()?;
    if cfg.y0.len() != cfg.k {
        return Err(CliError::Validation(format!(
            "y0 has {} modes, k = {}",
            cfg.y0.len(),
            cfg.k
        )));
    }
    let mut warnings = Vec::new();
    let (u1, u2) = match &cfg.followers {
        None => (
            Control::zero(&sys, grid, cfg.omega.clone()),
            Control::zero(&sys, grid, cfg.omega.clone()),
        ),
        Some(f) => {
            for (name, region) in [("omega1", &f.omega1), ("omega2", &f.omega2)] {
                if !region.subset_of(&cfg.omega) {
                    let msg = format!(
                        "follower region {name} is not contained in the leader region omega (assumption A1)"
                    );
                    if cfg.allow_followers_outside_leader_region {
                        warnings.push(msg);
                    } else {
                        return Err(CliError::Validation(msg));
                    }
                }
            }
            let leader = Control::zero(&sys, grid, cfg.omega.clone());
            let game_spec = GameSpec::new(
                sys.clone(),
                grid,
                cfg.omega.clone(),
                f.omega1.clone(),
                f.omega2.clone(),
                f.g1.clone(),
                f.g2.clone(),
                0.0,
                f.m1,
                f.m2,
                cfg.y0.clone(),
                f.y_t1.clone(),
                f.y_t2.clone(),
                leader,
            )
            .map_err(|e| CliError::Validation(e.to_string()))?;
            game::n0_followers(&game_spec).map_err(|e| CliError::Numerical(e.to_string()))?
        }
    };
    let prob = NormOptProblem {
        sys,
        grid,
        omega: cfg.omega.clone(),
        y0: cfg.y0.clone(),
    };
    let opts = NormOptOptions {
        k_dual: cfg.k_dual.unwrap_or(cfg.k),
        eps_schedule: cfg
            .eps_schedule
            .clone()
            .unwrap_or_else(normopt::default_eps_schedule),
        tol: cfg.tol.unwrap_or(1e-9),
        delta: cfg.delta,
        penalty: PenaltySchedule::default(),
    };
    let report = normopt::solve_full(&prob, &u1, &u2, &opts)
        .map_err(|e| CliError::Numerical(e.to_string()))?;
    let run_report = NormoptRunReport {
        inner: &report,
        warnings: &warnings,
    };
    outputs.push(
        write_text(
            dir,
            "report.json",
            &serde_json::to_string_pretty(&run_report)?,
        )?
        .display()
        .to_string(),
    );
    // leader profile CSV: t_mid, ||g*(t)||, per-mode z*(t)
    let mut csv = String::from("t_mid,g_norm");
    for i in 1..=report.z_star.z_t_modes.len() {
        csv.push_str(&format!(",z{i}"));
    }
    csv.push('\n');
    for j in 0..grid.n_steps {
        let t = grid.cell_midpoint(j);
        csv.push_str(&format!("{t},{}", report.leader_cell_norms[j]));
        for (kk, z) in report.z_star.z_t_modes.iter().enumerate() {
            let w2 = prob.sys.eigenvalues[kk];
            csv.push_str(&format!(",{}", z * (-w2 * (grid.t_final - t)).exp()));
        }
        csv.push('\n');
    }
    outputs.push(write_text(dir, "leader.csv", &csv)?.display().to_string());
    Ok(RunOutcome {
        status: RunStatus::Success,
        metrics: vec![
            ("n_dual".into(), report.n_dual),
            ("n_primal".into(), report.n_primal),
            ("duality_gap".into(), report.duality_gap),
        ],
    })
}

// --- run / sweep / validate ------------------------------------------------

fn execute(config: &ExperimentConfig, raw: &Value, dir: &Path) -> (RunStatus, Vec<(String, f64)>) {
    let started = Instant::now();
    let mut outputs = Vec::new();
    let mut timings = Vec::new();
    let t0 = Instant::now();
    let result = match config {
        ExperimentConfig::Eig(c) => run_eig(c, dir, &mut outputs),
        ExperimentConfig::Solve(c) => run_solve(c, dir, &mut outputs),
        ExperimentConfig::Observability(c) => run_observability(c, dir, &mut outputs),
        ExperimentConfig::Game(c) => run_game(c, dir, &mut outputs),
        ExperimentConfig::Normopt(c) => run_normopt(c, dir, &mut outputs),
        ExperimentConfig::Sweep(_) => Err(CliError::Validation(
            "nested sweep configs are not supported".into(),
        )),
    };
    timings.push((config.kind_name().to_string(), t0.elapsed().as_millis()));
    let (status, metrics) = match result {
        Ok(outcome) => (outcome.status, outcome.metrics),
        Err(CliError::Validation(msg)) => {
            eprintln!("validation error: {msg}");
            let _ = write_text(dir, "error.txt", &format!("validation error: {msg}\n"));
            (RunStatus::ValidationError, Vec::new())
        }
        Err(err) => {
            eprintln!("numerical failure: {err}");
            let _ = write_text(dir, "error.txt", &format!("{err}\n"));
            (RunStatus::NumericalFailure, Vec::new())
        }
    };
    let manifest = RunManifest {
        config_hash: config_hash(raw),
        artifact_version: env!("CARGO_PKG_VERSION").to_string(),
        kind: config.kind_name().to_string(),
        status,
        wall_clock_ms: started.elapsed().as_millis(),
        timings_ms: timings,
        outputs,
    };
    if let Ok(json) = serde_json::to_string_pretty(&manifest) {
        let _ = write_text(dir, "manifest.json", &json);
    }
    (status, metrics)
}

fn parse_config(raw: &Value) -> Result<ExperimentConfig, CliError> {
    Ok(serde_json::from_value(raw.clone())?)
}

fn load(path: &Path) -> Result<Value, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(serde_json::from_str(&text)?)
}

/// Runs a single (non-sweep) experiment file. Returns the process exit code.
pub fn run(path: &Path) -> i32 {
    let raw = match load(path) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("{e}");
            return RunStatus::ValidationError.exit_code();
        }
    };
    let config = match parse_config(&raw) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return RunStatus::ValidationError.exit_code();
        }
    };
    if let ExperimentConfig::Sweep(_) = config {
        return sweep(path);
    }
    let dir = config.output_dir();
    let (status, _) = execute(&config, &raw, &dir);
    status.exit_code()
}

/// Validates a config without running it.
pub fn validate(path: &Path) -> i32 {
    let raw = match load(path) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("{e}");
            return RunStatus::ValidationError.exit_code();
        }
    };
    match parse_config(&raw) {
        Ok(ExperimentConfig::Sweep(s)) => match expand_sweep(&s) {
            Ok(cells) => {
                for (_, cell_raw) in &cells {
                    if let Err(e) = parse_config(cell_raw) {
                        eprintln!("sweep cell invalid: {e}");
                        return RunStatus::ValidationError.exit_code();
                    }
                }
                println!("ok: sweep with {} cells", cells.len());
                0
            }
            Err(e) => {
                eprintln!("{e}");
                RunStatus::ValidationError.exit_code()
            }
        },
        Ok(c) => {
            println!("ok: {} experiment", c.kind_name());
            0
        }
        Err(e) => {
            eprintln!("{e}");
            RunStatus::ValidationError.exit_code()
        }
    }
}

fn set_dotted(value: &mut Value, path: &str, new_value: &Value) -> Result<(), CliError> {
    let mut cursor = value;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let map = cursor.as_object_mut().ok_or_else(|| {
            CliError::Validation(format!("override path '{path}' does not address an object"))
        })?;
        if i + 1 == parts.len() {
            map.insert(part.to_string(), new_value.clone());
            return Ok(());
        }
        cursor = map
            .entry(part.to_string())
            .or_insert(Value::Object(Default::default()));
    }
    Ok(())
}

/// Expands a sweep into (label values, config value) cells in deterministic
/// order (cartesian product over sorted override keys).
fn expand_sweep(cfg: &SweepConfig) -> Result<Vec<(Vec<(String, Value)>, Value)>, CliError> {
    if cfg.vary.is_empty() {
        return Err(CliError::Validation(
            "sweep has an empty 'vary' grid".into(),
        ));
    }
    for (key, values) in &cfg.vary {
        if values.is_empty() {
            return Err(CliError::Validation(format!(
                "sweep key '{key}' has an empty value list"
            )));
        }
    }
    let keys: Vec<&String> = cfg.vary.keys().collect();
    let mut cells: Vec<(Vec<(String, Value)>, Value)> = vec![(Vec::new(), cfg.base.clone())];
    for key in keys {
        let mut next = Vec::new();
        for (labels, base) in &cells {
            for v in &cfg.vary[key] {
                let mut cell = base.clone();
                set_dotted(&mut cell, key, v)?;
                let mut labels = labels.clone();
                labels.push((key.clone(), v.clone()));
                next.push((labels, cell));
            }
        }
        cells = next;
    }
    Ok(cells)
}

fn worker_count(cells: usize) -> usize {
    let env = std::env::var("DEGENLAB_WORKERS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok());
    let hw = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    env.unwrap_or(hw).clamp(1, cells.max(1))
}

/// Runs a sweep: every cell of the cartesian override grid executes (in
/// parallel, bounded by DEGENLAB_WORKERS), one subdirectory per cell, plus a
/// combined CSV. A failing cell records its failure and never aborts
/// siblings.
pub fn sweep(path: &Path) -> i32 {
    let raw = match load(path) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("{e}");
            return RunStatus::ValidationError.exit_code();
        }
    };
    let config = match parse_config(&raw) {
        Ok(ExperimentConfig::Sweep(s)) => s,
        Ok(_) => {
            eprintln!("not a sweep config; use `degenlab run`");
            return RunStatus::ValidationError.exit_code();
        }
        Err(e) => {
            eprintln!("{e}");
            return RunStatus::ValidationError.exit_code();
        }
    };
    let cells = match expand_sweep(&config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return RunStatus::ValidationError.exit_code();
        }
    };
    let root = PathBuf::from(
        config
            .output_dir
            .clone()
            .unwrap_or_else(|| "degenlab_out".to_string()),
    );
    let n = cells.len();
    let results: Vec<Mutex<Option<(RunStatus, Vec<(String, f64)>)>>> =
        (0..n).map(|_| Mutex::new(None)).collect();
    let next = Mutex::new(0usize);
    let workers = worker_count(n);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let idx = {
                    let mut guard = next.lock().unwrap();
                    if *guard >= n {
                        break;
                    }
                    let i = *guard;
                    *guard += 1;
                    i
                };
                let (_, cell_raw) = &cells[idx];
                let dir = root.join(format!("cell_{idx:04}"));
                let outcome = catch_unwind(AssertUnwindSafe(|| match parse_config(cell_raw) {
                    Ok(ExperimentConfig::Sweep(_)) | Err(_) => {
                        let msg = "sweep cell does not parse as a runnable experiment";
                        eprintln!("cell {idx}: {msg}");
                        let _ = write_text(&dir, "error.txt", &format!("{msg}\n"));
                        (RunStatus::ValidationError, Vec::new())
                    }
                    Ok(cell_config) => execute(&cell_config, cell_raw, &dir),
                }))
                .unwrap_or_else(|_| {
                    let _ = write_text(&dir, "error.txt", "panic during cell execution\n");
                    (RunStatus::NumericalFailure, Vec::new())
                });
                *results[idx].lock().unwrap() = Some(outcome);
            });
        }
    });
    // combined CSV in cell order
    let label_keys: Vec<String> = cells
        .first()
        .map(|(labels, _)| labels.iter().map(|(k, _)| k.clone()).collect())
        .unwrap_or_default();
    let metric_keys: Vec<String> = results
        .iter()
        .filter_map(|m| m.lock().unwrap().clone())
        .find(|(status, metrics)| *status == RunStatus::Success && !metrics.is_empty())
        .map(|(_, metrics)| metrics.iter().map(|(k, _)| k.clone()).collect())
        .unwrap_or_default();
    let mut csv = String::from("cell");
    for k in &label_keys {
        csv.push_str(&format!(",{k}"));
    }
    csv.push_str(",status");
    for k in &metric_keys {
        csv.push_str(&format!(",{k}"));
    }
    csv.push('\n');
    let mut worst = RunStatus::Success;
    for (idx, (labels, _)) in cells.iter().enumerate() {
        let outcome = results[idx].lock().unwrap().clone();
        let (status, metrics) = outcome.unwrap_or((RunStatus::NumericalFailure, Vec::new()));
        csv.push_str(&format!("{idx}"));
        for (_, v) in labels {
            csv.push_str(&format!(",{v}"));
        }
        csv.push_str(&format!(",{}", status.exit_code()));
        for key in &metric_keys {
            let v = metrics.iter().find(|(k, _)| k == key).map(|(_, v)| *v);
            match v {
                Some(v) => csv.push_str(&format!(",{v}")),
                None => csv.push(','),
            }
        }
        csv.push('\n');
        if status != RunStatus::Success {
            worst = status;
        }
    }
    if write_text(&root, "combined.csv", &csv).is_err() {
        return RunStatus::ValidationError.exit_code();
    }
    let manifest = RunManifest {
        config_hash: config_hash(&raw),
        artifact_version: env!("CARGO_PKG_VERSION").to_string(),
        kind: "sweep".into(),
        status: worst,
        wall_clock_ms: 0,
        timings_ms: Vec::new(),
        outputs: vec![root.join("combined.csv").display().to_string()],
    };
    if let Ok(json) = serde_json::to_string_pretty(&manifest) {
        let _ = write_text(&root, "manifest.json", &json);
    }
    worst.exit_code()
}
