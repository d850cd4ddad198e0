//! Experiment orchestration: configuration, cell enumeration, seeded trials,
//! and parallel execution with a canonical output order.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::verify_recovery_bound;
use crate::error::{Error, Result};
use crate::frames::{build_named_frame, build_parseval_random, NamedFrame, TightFrame};
use crate::linalg::binomial;
use crate::measurement::{gaussian_matrix, phase_distance, Field, Noise, PhaselessProblem};
use crate::record::{TrialRecord, TrialStatus, TransitionRow};
use crate::rip::{
    drip_order_for_t, sdrip_constants_with, HalfRule, SdripOptions, DEFAULT_SUPPORT_BUDGET, MAX_EXHAUSTIVE_ROWS,
};
use crate::rng::derive_seed;
use crate::signals::{sample_dictionary_sparse, MagnitudeLaw};
use crate::solver::{solve_irls, solve_oracle_noiseless, IrlsOptions, Method, SolverResult, MAX_ORACLE_ROWS};

pub const CONFIG_SCHEMA: &str = "dictpr.experiment/1";
/// Transition success: phase_distance(x̂, x₀) ≤ this · ‖x₀‖₂.
pub const SUCCESS_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameKind {
    #[default]
    Random,
    Identity,
    Mercedes,
    DuplicatedIdentity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixKind {
    #[default]
    Gaussian,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodChoice {
    /// Oracle for noiseless cells with m within the oracle guard, IRLS otherwise.
    #[default]
    Auto,
    Oracle,
    Irls,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverChoice {
    pub method: MethodChoice,
    pub irls: IrlsOptions,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Budgets {
    /// Supports C(N, order) allowed in exhaustive D-RIP/S-DRIP enumeration.
    pub max_supports: u64,
    pub max_oracle_rows: usize,
    pub max_exhaustive_rows: usize,
}

impl Default for Budgets {
    fn default() -> Self {
        Budgets {
            max_supports: DEFAULT_SUPPORT_BUDGET,
            max_oracle_rows: MAX_ORACLE_ROWS,
            max_exhaustive_rows: MAX_EXHAUSTIVE_ROWS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputPaths {
    pub csv: Option<PathBuf>,
    pub json: Option<PathBuf>,
}

fn default_t() -> Vec<f64> {
    vec![1.0]
}

fn default_noise() -> Vec<f64> {
    vec![0.0]
}

fn default_law() -> MagnitudeLaw {
    MagnitudeLaw::Gaussian
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: String,
    pub n: Vec<usize>,
    #[serde(rename = "N")]
    pub big_n: Vec<usize>,
    pub m: Vec<usize>,
    pub k: Vec<usize>,
    pub q: Vec<f64>,
    #[serde(default = "default_t")]
    pub t: Vec<f64>,
    /// Radii of uniform ℓ2-ball noise; 0 means noiseless.
    #[serde(default = "default_noise")]
    pub noise: Vec<f64>,
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub frame: FrameKind,
    #[serde(default)]
    pub matrix: MatrixKind,
    #[serde(default = "default_law")]
    pub signal_law: MagnitudeLaw,
    #[serde(default)]
    pub solver: SolverChoice,
    #[serde(default)]
    pub half_rule: HalfRule,
    #[serde(default)]
    pub budgets: Budgets,
    #[serde(default)]
    pub output: OutputPaths,
}

impl ExperimentConfig {
    /// A one-cell configuration with defaults everywhere else.
    pub fn single(n: usize, big_n: usize, m: usize, k: usize, q: f64, trials: usize, seed: u64) -> Self {
        ExperimentConfig {
            schema: CONFIG_SCHEMA.into(),
            n: vec![n],
            big_n: vec![big_n],
            m: vec![m],
            k: vec![k],
            q: vec![q],
            t: default_t(),
            noise: default_noise(),
            trials,
            seed,
            frame: FrameKind::default(),
            matrix: MatrixKind::default(),
            signal_law: default_law(),
            solver: SolverChoice::default(),
            half_rule: HalfRule::default(),
            budgets: Budgets::default(),
            output: OutputPaths::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |msg: String| Err(Error::Config(msg));
        if self.schema != CONFIG_SCHEMA {
            return cfg(format!("schema must be `{CONFIG_SCHEMA}`, got `{}`", self.schema));
        }
        for (name, empty) in [
            ("n", self.n.is_empty()),
            ("N", self.big_n.is_empty()),
            ("m", self.m.is_empty()),
            ("k", self.k.is_empty()),
            ("q", self.q.is_empty()),
            ("t", self.t.is_empty()),
            ("noise", self.noise.is_empty()),
        ] {
            if empty {
                return cfg(format!("`{name}` grid is empty"));
            }
        }
        if self.trials == 0 {
            return cfg("trials must be >= 1".into());
        }
        if self.n.contains(&0) || self.m.contains(&0) {
            return cfg("n and m must be >= 1".into());
        }
        if let Some(q) = self.q.iter().find(|q| !(**q > 0.0 && **q <= 1.0)) {
            return cfg(format!("q = {q} outside (0, 1]"));
        }
        if let Some(t) = self.t.iter().find(|t| !(**t > 0.0 && **t < 4.0 / 3.0)) {
            return cfg(format!("t = {t} outside (0, 4/3)"));
        }
        if let Some(e) = self.noise.iter().find(|e| !(e.is_finite() && **e >= 0.0)) {
            return cfg(format!("noise level {e} must be finite and >= 0"));
        }
        let b = &self.budgets;
        if b.max_oracle_rows > MAX_ORACLE_ROWS
            || b.max_exhaustive_rows > MAX_EXHAUSTIVE_ROWS
            || b.max_supports > DEFAULT_SUPPORT_BUDGET
        {
            return cfg(format!(
                "budgets exceed module guards (oracle m <= {MAX_ORACLE_ROWS}, exhaustive m <= {MAX_EXHAUSTIVE_ROWS}, supports <= {DEFAULT_SUPPORT_BUDGET})"
            ));
        }
        self.solver.irls.validate().map_err(|e| Error::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub index: usize,
    pub n: usize,
    pub big_n: usize,
    pub m: usize,
    pub k: usize,
    pub q: f64,
    pub t: f64,
    pub noise: f64,
}

/// Cartesian product in the order n, N, m, k, q, t, noise (last varies fastest).
pub fn enumerate_cells(cfg: &ExperimentConfig) -> Vec<Cell> {
    let mut cells = Vec::new();
    for &n in &cfg.n {
        for &big_n in &cfg.big_n {
            for &m in &cfg.m {
                for &k in &cfg.k {
                    for &q in &cfg.q {
                        for &t in &cfg.t {
                            for &noise in &cfg.noise {
                                cells.push(Cell {
                                    index: cells.len(),
                                    n,
                                    big_n,
                                    m,
                                    k,
                                    q,
                                    t,
                                    noise,
                                });
                            }
                        }
                    }
                }
            }
        }
    }
    cells
}

/// Seed of one trial: `derive_seed(master, cell, trial)`. Within a trial the
/// frame, signal, matrix, noise and solver draw from `derive_seed(seed, j, 0)`
/// for j = 1..=5.
pub fn trial_seed(cfg: &ExperimentConfig, cell: &Cell, trial: usize) -> u64 {
    derive_seed(cfg.seed, cell.index as u64, trial as u64)
}

fn sub_seed(seed: u64, j: u64) -> u64 {
    derive_seed(seed, j, 0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunOptions {
    pub threads: Option<usize>,
    pub max_seconds: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput<R> {
    pub rows: Vec<R>,
    /// The wall-clock budget expired before every trial ran.
    pub truncated: bool,
}

fn pick_method(cfg: &ExperimentConfig, cell: &Cell) -> std::result::Result<Method, String> {
    let oracle_ok = cell.noise == 0.0 && cell.m <= cfg.budgets.max_oracle_rows;
    match cfg.solver.method {
        MethodChoice::Auto if oracle_ok => Ok(Method::Oracle),
        MethodChoice::Auto | MethodChoice::Irls => Ok(Method::Irls),
        MethodChoice::Oracle if oracle_ok => Ok(Method::Oracle),
        MethodChoice::Oracle if cell.noise > 0.0 => Err("oracle requested for a noisy cell".into()),
        MethodChoice::Oracle => Err(format!(
            "oracle requested with m = {} > {}",
            cell.m, cfg.budgets.max_oracle_rows
        )),
    }
}

/// Reasons a cell cannot run, shared by both experiments.
fn common_skip_reason(cfg: &ExperimentConfig, cell: &Cell) -> Option<String> {
    if cell.big_n < cell.n {
        return Some(format!("N = {} < n = {}", cell.big_n, cell.n));
    }
    if cell.k > cell.big_n {
        return Some(format!("k = {} > N = {}", cell.k, cell.big_n));
    }
    if cfg.matrix == MatrixKind::Identity && cell.m != cell.n {
        return Some(format!("identity A needs m = n, got m = {}, n = {}", cell.m, cell.n));
    }
    if let Err(reason) = pick_method(cfg, cell) {
        return Some(reason);
    }
    if pick_method(cfg, cell) == Ok(Method::Oracle) {
        let free = cell.n.saturating_sub(cell.m);
        let count = binomial(cell.big_n, free);
        if count > cfg.budgets.max_supports {
            return Some(format!("oracle needs C({}, {free}) = {count} zero patterns", cell.big_n));
        }
    }
    None
}

fn bound_skip_reason(cfg: &ExperimentConfig, cell: &Cell) -> Option<String> {
    if let Some(r) = common_skip_reason(cfg, cell) {
        return Some(r);
    }
    if cell.k == 0 {
        return Some("k = 0: the bound needs k >= 1".into());
    }
    let order = drip_order_for_t(cell.t, cell.k);
    if order == 0 || order > cell.big_n {
        return Some(format!("order ceil(t·k) = {order} outside [1, N]"));
    }
    if cell.m > cfg.budgets.max_exhaustive_rows {
        return Some(format!(
            "exhaustive S-DRIP needs m <= {}, got {}",
            cfg.budgets.max_exhaustive_rows, cell.m
        ));
    }
    let count = binomial(cell.big_n, order);
    if count > cfg.budgets.max_supports {
        return Some(format!("C({}, {order}) = {count} supports exceed the budget", cell.big_n));
    }
    None
}

fn build_frame(cfg: &ExperimentConfig, cell: &Cell, seed: u64) -> Result<TightFrame> {
    let frame = match cfg.frame {
        FrameKind::Random => return build_parseval_random(cell.n, cell.big_n, seed),
        FrameKind::Identity => build_named_frame(NamedFrame::Identity, cell.n)?,
        FrameKind::Mercedes => build_named_frame(NamedFrame::Mercedes, cell.n)?,
        FrameKind::DuplicatedIdentity => build_named_frame(NamedFrame::DuplicatedIdentity, cell.n)?,
    };
    if frame.n() != cell.n || frame.len() != cell.big_n {
        return Err(Error::Config(format!(
            "{} frame is {}×{}, cell asks for {}×{}",
            frame.id(),
            frame.n(),
            frame.len(),
            cell.n,
            cell.big_n
        )));
    }
    Ok(frame)
}

/// Draws the frame, signal, matrix and measurements of one trial.
pub fn build_trial_problem(cfg: &ExperimentConfig, cell: &Cell, seed: u64) -> Result<PhaselessProblem> {
    let frame = build_frame(cfg, cell, sub_seed(seed, 1))?;
    let truth = sample_dictionary_sparse(&frame, cell.k, sub_seed(seed, 2), cfg.signal_law)?;
    let a = match cfg.matrix {
        MatrixKind::Gaussian => gaussian_matrix(cell.m, cell.n, sub_seed(seed, 3)),
        MatrixKind::Identity => DMatrix::identity(cell.m, cell.n),
    };
    let noise = if cell.noise > 0.0 { Noise::Bounded(cell.noise) } else { Noise::None };
    PhaselessProblem::simulate(a, frame, truth, noise, cell.q, sub_seed(seed, 4))
}

fn solve_with(cfg: &ExperimentConfig, cell: &Cell, p: &PhaselessProblem, seed: u64) -> Result<SolverResult> {
    match pick_method(cfg, cell).map_err(Error::Config)? {
        Method::Oracle => solve_oracle_noiseless(p),
        Method::Irls => solve_irls(
            p,
            &IrlsOptions {
                seed: sub_seed(seed, 5),
                ..cfg.solver.irls
            },
        ),
    }
}

fn base_record(cell: &Cell, trial: usize, seed: u64) -> TrialRecord {
    TrialRecord {
        cell: cell.index,
        trial,
        seed,
        m: cell.m,
        n: cell.n,
        big_n: cell.big_n,
        k: cell.k,
        q: cell.q,
        t: cell.t,
        noise_level: cell.noise,
        eps: cell.noise,
        order: drip_order_for_t(cell.t, cell.k),
        ..TrialRecord::default()
    }
}

fn skipped(mut rec: TrialRecord, reason: String) -> TrialRecord {
    rec.status = Some(TrialStatus::Skipped);
    rec.reason = reason;
    rec
}

/// One bound-verification trial, reproducible from (config, cell, trial).
pub fn run_bound_trial(cfg: &ExperimentConfig, cell: &Cell, trial: usize) -> TrialRecord {
    let started = Instant::now();
    let seed = trial_seed(cfg, cell, trial);
    let base = base_record(cell, trial, seed);
    if let Some(reason) = bound_skip_reason(cfg, cell) {
        return skipped(base, reason);
    }
    let outcome = (|| -> Result<TrialRecord> {
        let p = build_trial_problem(cfg, cell, seed)?;
        let order = drip_order_for_t(cell.t, cell.k);
        let rip = sdrip_constants_with(
            &p.a,
            &p.frame,
            order,
            SdripOptions {
                half_rule: cfg.half_rule,
                sampled: None,
            },
        )?;
        let result = solve_with(cfg, cell, &p, seed)?;
        verify_recovery_bound(&p, &result, &rip, cell.t)
    })();
    let mut rec = match outcome {
        Ok(r) => TrialRecord {
            cell: base.cell,
            trial,
            seed,
            noise_level: cell.noise,
            ..r
        },
        Err(e) => skipped(base, e.to_string()),
    };
    rec.wall_seconds = started.elapsed().as_secs_f64();
    rec
}

/// Outcome of one transition trial: `Ok(success)` or the reason it could not run.
pub fn run_transition_trial(cfg: &ExperimentConfig, cell: &Cell, trial: usize) -> Result<bool> {
    let seed = trial_seed(cfg, cell, trial);
    let p = build_trial_problem(cfg, cell, seed)?;
    let res = solve_with(cfg, cell, &p, seed)?;
    let x0 = &p.truth.as_ref().expect("simulated problems carry truth").x;
    Ok(phase_distance(&res.x_hat, x0, Field::Real)? <= SUCCESS_TOL * x0.norm())
}

fn with_pool<T: Send>(threads: Option<usize>, job: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(job()),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t.max(1))
                .build()
                .map_err(|e| Error::Resource(format!("cannot start {t} threads: {e}")))?;
            Ok(pool.install(job))
        }
    }
}

fn run_grid<T: Send>(
    cfg: &ExperimentConfig,
    cells: &[Cell],
    opts: RunOptions,
    trial_fn: impl Fn(&Cell, usize) -> T + Sync + Send,
) -> Result<(Vec<Option<T>>, bool)> {
    let deadline = opts.max_seconds.map(|s| Instant::now() + Duration::from_secs(s));
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..cfg.trials).map(move |t| (c, t)))
        .collect();
    let results = with_pool(opts.threads, || {
        jobs.par_iter()
            .map(|&(c, t)| {
                if deadline.is_some_and(|d| Instant::now() >= d) {
                    return None;
                }
                Some(trial_fn(&cells[c], t))
            })
            .collect::<Vec<_>>()
    })?;
    let truncated = results.iter().any(Option::is_none);
    Ok((results, truncated))
}

/// Every (cell, trial) record in canonical order. Trials cut off by the
/// wall-clock budget are dropped and reported through `truncated`.
pub fn run_bound_experiment(cfg: &ExperimentConfig, opts: RunOptions) -> Result<RunOutput<TrialRecord>> {
    cfg.validate()?;
    let cells = enumerate_cells(cfg);
    let (results, truncated) = run_grid(cfg, &cells, opts, |cell, t| run_bound_trial(cfg, cell, t))?;
    Ok(RunOutput {
        rows: results.into_iter().flatten().collect(),
        truncated,
    })
}

/// Success fraction per (n, N, m, k, q) cell; `t` and `noise` are ignored
/// because recovery is judged on noiseless instances.
pub fn run_phase_transition(cfg: &ExperimentConfig, opts: RunOptions) -> Result<RunOutput<TransitionRow>> {
    cfg.validate()?;
    let flat = ExperimentConfig {
        t: default_t(),
        noise: default_noise(),
        ..cfg.clone()
    };
    let cells = enumerate_cells(&flat);
    let (results, truncated) = run_grid(&flat, &cells, opts, |cell, t| {
        match common_skip_reason(&flat, cell) {
            Some(reason) => Err(reason),
            None => run_transition_trial(&flat, cell, t).map_err(|e| e.to_string()),
        }
    })?;
    let mut rows = Vec::with_capacity(cells.len());
    for (cell, chunk) in cells.iter().zip(results.chunks(flat.trials)) {
        let method = pick_method(&flat, cell).ok().map(|m| m.to_string());
        let mut row = TransitionRow {
            cell: cell.index,
            m: cell.m,
            n: cell.n,
            big_n: cell.big_n,
            k: cell.k,
            q: cell.q,
            method,
            trials: 0,
            successes: 0,
            success_rate: None,
            status: "ok".into(),
            reason: String::new(),
        };
        if let Some(reason) = common_skip_reason(&flat, cell) {
            row.status = "skipped".into();
            row.reason = reason;
            rows.push(row);
            continue;
        }
        let mut errors = 0;
        for r in chunk.iter().flatten() {
            row.trials += 1;
            match r {
                Ok(true) => row.successes += 1,
                Ok(false) => {}
                Err(e) => {
                    errors += 1;
                    if row.reason.is_empty() {
                        row.reason = e.clone();
                    }
                }
            }
        }
        if errors > 0 {
            row.reason = format!("{errors} trial(s) failed to run: {}", row.reason);
        }
        if row.trials < flat.trials {
            row.status = "truncated".into();
        }
        if row.trials > 0 {
            row.success_rate = Some(row.successes as f64 / row.trials as f64);
        }
        rows.push(row);
    }
    Ok(RunOutput { rows, truncated })
}
