//! Per-trial records and their CSV/JSON serialization.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialStatus {
    Pass,
    Fail,
    NotApplicable,
    Skipped,
}

impl TrialStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            TrialStatus::Pass => "pass",
            TrialStatus::Fail => "fail",
            TrialStatus::NotApplicable => "not_applicable",
            TrialStatus::Skipped => "skipped",
        }
    }
}

/// One bound-verification trial. Everything except `wall_seconds` is a
/// function of the configuration and the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct TrialRecord {
    pub cell: usize,
    pub trial: usize,
    pub seed: u64,
    pub m: usize,
    pub n: usize,
    pub big_n: usize,
    pub k: usize,
    pub q: f64,
    pub t: f64,
    pub noise_level: f64,
    pub eps: f64,
    pub order: usize,
    pub delta: Option<f64>,
    pub theta_minus: Option<f64>,
    pub theta_plus: Option<f64>,
    pub delta_theta_bound: Option<f64>,
    pub admissible: bool,
    pub marginal: bool,
    pub theta_condition_ok: Option<bool>,
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    pub sigma: Option<f64>,
    pub lhs: Option<f64>,
    pub rhs: Option<f64>,
    pub method: Option<String>,
    pub objective: Option<f64>,
    pub feasibility: Option<f64>,
    pub status: Option<TrialStatus>,
    pub reason: String,
    /// Excluded from CSV so that tabular output is byte-reproducible.
    #[serde(default)]
    pub wall_seconds: f64,
}

impl TrialRecord {
    pub fn status(&self) -> TrialStatus {
        self.status.unwrap_or(TrialStatus::NotApplicable)
    }
}

/// Column order of the trial CSV.
pub const TRIAL_CSV_HEADER: &str = "cell,trial,seed,m,n,big_n,k,q,t,noise_level,eps,order,delta,theta_minus,theta_plus,delta_theta_bound,admissible,marginal,theta_condition_ok,c1,c2,sigma,lhs,rhs,method,objective,feasibility,status,reason";

/// One (m, k) cell of a phase-transition sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionRow {
    pub cell: usize,
    pub m: usize,
    pub n: usize,
    pub big_n: usize,
    pub k: usize,
    pub q: f64,
    pub method: Option<String>,
    pub trials: usize,
    pub successes: usize,
    pub success_rate: Option<f64>,
    pub status: String,
    pub reason: String,
}

pub const TRANSITION_CSV_HEADER: &str = "cell,m,n,big_n,k,q,method,trials,successes,success_rate,status,reason";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::Config(format!("unknown output format `{other}`"))),
        }
    }
}

/// 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

fn opt_f64(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn opt_bool(v: Option<bool>) -> String {
    v.map(|b| b.to_string()).unwrap_or_default()
}

pub trait CsvRow {
    const HEADER: &'static str;
    fn fields(&self) -> Vec<String>;
}

impl CsvRow for TrialRecord {
    const HEADER: &'static str = TRIAL_CSV_HEADER;

    fn fields(&self) -> Vec<String> {
        vec![
            self.cell.to_string(),
            self.trial.to_string(),
            self.seed.to_string(),
            self.m.to_string(),
            self.n.to_string(),
            self.big_n.to_string(),
            self.k.to_string(),
            fmt_f64(self.q),
            fmt_f64(self.t),
            fmt_f64(self.noise_level),
            fmt_f64(self.eps),
            self.order.to_string(),
            opt_f64(self.delta),
            opt_f64(self.theta_minus),
            opt_f64(self.theta_plus),
            opt_f64(self.delta_theta_bound),
            self.admissible.to_string(),
            self.marginal.to_string(),
            opt_bool(self.theta_condition_ok),
            opt_f64(self.c1),
            opt_f64(self.c2),
            opt_f64(self.sigma),
            opt_f64(self.lhs),
            opt_f64(self.rhs),
            self.method.clone().unwrap_or_default(),
            opt_f64(self.objective),
            opt_f64(self.feasibility),
            self.status().as_str().to_string(),
            self.reason.clone(),
        ]
    }
}

impl CsvRow for TransitionRow {
    const HEADER: &'static str = TRANSITION_CSV_HEADER;

    fn fields(&self) -> Vec<String> {
        vec![
            self.cell.to_string(),
            self.m.to_string(),
            self.n.to_string(),
            self.big_n.to_string(),
            self.k.to_string(),
            fmt_f64(self.q),
            self.method.clone().unwrap_or_default(),
            self.trials.to_string(),
            self.successes.to_string(),
            opt_f64(self.success_rate),
            self.status.clone(),
            self.reason.clone(),
        ]
    }
}

pub fn to_csv<R: CsvRow>(rows: &[R]) -> Result<String> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Config(format!("csv encoding failed: {e}"));
    w.write_record(R::HEADER.split(',')).map_err(csv_err)?;
    for r in rows {
        w.write_record(r.fields()).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(format!("csv encoding failed: {e}")))?;
    Ok(String::from_utf8(bytes).expect("fields are utf-8"))
}

/// Writes `rows` to `path` as CSV (documented header) or a JSON array.
pub fn emit_results<R: CsvRow + Serialize>(rows: &[R], format: Format, path: &Path) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::Parameter("no records to emit".into()));
    }
    let text = match format {
        Format::Csv => to_csv(rows)?,
        Format::Json => {
            let mut s = serde_json::to_string_pretty(rows).map_err(|e| Error::Json {
                path: path.to_path_buf(),
                source: e,
            })?;
            s.push('\n');
            s
        }
    };
    write_text(path, &text)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    s.push('\n');
    write_text(path, &s)
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })
}
