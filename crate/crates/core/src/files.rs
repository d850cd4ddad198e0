//! JSON layouts for problems and trials exchanged with the command line.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frames::{build_named_frame, FrameFile, NamedFrame, TightFrame};
use crate::linalg::{from_rows, to_rows};
use crate::measurement::PhaselessProblem;
use crate::record::read_json;
use crate::rip::RipReport;
use crate::signals::DictionarySparseSignal;
use crate::solver::SolverResult;

/// A frame given inline, by name (`identity`, `mercedes`,
/// `duplicated_identity`), or as a path relative to the referencing file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FrameRef {
    Inline(FrameFile),
    Name(String),
}

impl FrameRef {
    pub fn resolve(&self, n: usize, base: Option<&Path>) -> Result<TightFrame> {
        match self {
            FrameRef::Inline(f) => TightFrame::from_file(f),
            FrameRef::Name(s) => {
                if let Ok(named) = s.parse::<NamedFrame>() {
                    return build_named_frame(named, n);
                }
                let path = match base.and_then(Path::parent) {
                    Some(dir) => dir.join(s),
                    None => Path::new(s).to_path_buf(),
                };
                let file: FrameFile = read_json(&path)?;
                TightFrame::from_file(&file)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemFile {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    #[serde(default)]
    pub eps: f64,
    pub q: f64,
    pub frame: FrameRef,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<DictionarySparseSignal>,
}

impl ProblemFile {
    pub fn from_problem(p: &PhaselessProblem) -> Self {
        ProblemFile {
            a: to_rows(&p.a),
            b: p.b.iter().copied().collect(),
            eps: p.eps,
            q: p.q,
            frame: FrameRef::Inline(p.frame.to_file()),
            truth: p.truth.clone(),
        }
    }

    /// `base` is the file this problem was read from, for relative frame paths.
    pub fn into_problem(self, base: Option<&Path>) -> Result<PhaselessProblem> {
        let cols = self.a.first().map_or(0, Vec::len);
        let a: DMatrix<f64> =
            from_rows(&self.a, cols).ok_or_else(|| Error::Dimension("ragged rows in A".into()))?;
        let frame = self.frame.resolve(cols, base)?;
        let p = PhaselessProblem::new(a, frame, DVector::from_vec(self.b), self.eps, self.q)?;
        match self.truth {
            Some(t) => p.with_truth(t),
            None => Ok(p),
        }
    }

    pub fn load(path: &Path) -> Result<PhaselessProblem> {
        let file: ProblemFile = read_json(path)?;
        file.into_problem(Some(path))
    }
}

/// Everything `bound verify` needs; the S-DRIP report is recomputed when absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialFile {
    pub problem: ProblemFile,
    pub result: SolverResult,
    pub t: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rip: Option<RipReport>,
}
