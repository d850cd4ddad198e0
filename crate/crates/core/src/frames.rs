//! Parseval (tight) frames used as redundant analysis dictionaries.
//!
//! A frame is stored as its synthesis matrix `D` (n×N, rows orthonormal so
//! that `D Dᵀ = I_n`) together with `D_perp`, the (N−n)×N block completing
//! the rows of `D` to an orthogonal N×N matrix.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, max_abs_diff};
use crate::rng;

/// Tolerance on `D Dᵀ = I` and on orthogonality of `[D; D_perp]`.
pub const FRAME_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct TightFrame {
    d: DMatrix<f64>,
    d_perp: DMatrix<f64>,
    id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedFrame {
    Identity,
    Mercedes,
    DuplicatedIdentity,
}

impl fmt::Display for NamedFrame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NamedFrame::Identity => "identity",
            NamedFrame::Mercedes => "mercedes",
            NamedFrame::DuplicatedIdentity => "duplicated_identity",
        })
    }
}

impl std::str::FromStr for NamedFrame {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(NamedFrame::Identity),
            "mercedes" => Ok(NamedFrame::Mercedes),
            "duplicated_identity" => Ok(NamedFrame::DuplicatedIdentity),
            other => Err(Error::Config(format!("unknown frame name `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameValidation {
    /// max |D Dᵀ − I_n|
    pub parseval_deviation: f64,
    /// max |Q Qᵀ − I_N| for the stacked Q = [D; D_perp]
    pub orthogonality_deviation: f64,
    pub pass: bool,
}

impl TightFrame {
    /// Wraps a synthesis matrix, completing it with an orthonormal complement.
    ///
    /// Rejects matrices that are not Parseval within [`FRAME_TOL`].
    pub fn from_synthesis(d: DMatrix<f64>, id: impl Into<String>) -> Result<Self> {
        let (n, big_n) = d.shape();
        check_dims(n, big_n)?;
        let dev = max_abs_diff(&(&d * d.transpose()), &DMatrix::identity(n, n));
        if dev >= FRAME_TOL {
            return Err(Error::Domain(format!(
                "not a Parseval frame: max |DDᵀ - I| = {dev:e}"
            )));
        }
        let d_perp = linalg::null_space(&d).transpose();
        if d_perp.nrows() != big_n - n {
            return Err(Error::Domain(format!(
                "complement has {} rows, expected {}",
                d_perp.nrows(),
                big_n - n
            )));
        }
        Ok(TightFrame {
            d,
            d_perp,
            id: id.into(),
        })
    }

    /// Wraps a frame and a caller-supplied complement; use [`validate_frame`]
    /// to check them.
    pub fn from_parts(d: DMatrix<f64>, d_perp: DMatrix<f64>, id: impl Into<String>) -> Result<Self> {
        let (n, big_n) = d.shape();
        check_dims(n, big_n)?;
        if d_perp.ncols() != big_n || d_perp.nrows() != big_n - n {
            return Err(Error::Dimension(format!(
                "D_perp must be {}x{big_n}, got {}x{}",
                big_n - n,
                d_perp.nrows(),
                d_perp.ncols()
            )));
        }
        Ok(TightFrame {
            d,
            d_perp,
            id: id.into(),
        })
    }

    pub fn n(&self) -> usize {
        self.d.nrows()
    }

    /// Number of frame vectors.
    pub fn len(&self) -> usize {
        self.d.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.d.ncols() == 0
    }

    pub fn d(&self) -> &DMatrix<f64> {
        &self.d
    }

    pub fn d_perp(&self) -> &DMatrix<f64> {
        &self.d_perp
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    /// Synthesis `D z`.
    pub fn synthesize(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.d * z
    }

    /// Analysis coefficients `Dᵀ x`.
    pub fn analyze(&self, x: &DVector<f64>) -> DVector<f64> {
        self.d.tr_mul(x)
    }

    pub fn to_file(&self) -> FrameFile {
        FrameFile {
            n: self.n(),
            big_n: self.len(),
            d: linalg::to_rows(&self.d),
            d_perp: linalg::to_rows(&self.d_perp),
            id: Some(self.id.clone()),
        }
    }

    /// Loads a serialized frame and checks the Parseval invariants.
    pub fn from_file(file: &FrameFile) -> Result<Self> {
        let d = linalg::from_rows(&file.d, file.big_n)
            .ok_or_else(|| Error::Dimension("ragged D rows".into()))?;
        let d_perp = linalg::from_rows(&file.d_perp, file.big_n)
            .ok_or_else(|| Error::Dimension("ragged D_perp rows".into()))?;
        if d.shape() != (file.n, file.big_n) {
            return Err(Error::Dimension(format!(
                "D is {}x{}, header says {}x{}",
                d.nrows(),
                d.ncols(),
                file.n,
                file.big_n
            )));
        }
        let id = file.id.clone().unwrap_or_else(|| "file".into());
        let frame = if file.d_perp.is_empty() && file.big_n > file.n {
            TightFrame::from_synthesis(d, id)?
        } else {
            TightFrame::from_parts(d, d_perp, id)?
        };
        let report = validate_frame(&frame);
        if !report.pass {
            return Err(Error::Domain(format!(
                "frame fails validation: parseval {:e}, orthogonality {:e}",
                report.parseval_deviation, report.orthogonality_deviation
            )));
        }
        Ok(frame)
    }
}

/// On-disk frame layout; matrices are row-major nested arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameFile {
    pub n: usize,
    #[serde(rename = "N")]
    pub big_n: usize,
    #[serde(rename = "D")]
    pub d: Vec<Vec<f64>>,
    #[serde(rename = "D_perp", default)]
    pub d_perp: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
}

fn check_dims(n: usize, big_n: usize) -> Result<()> {
    if n < 1 || big_n < n {
        return Err(Error::Dimension(format!(
            "frame needs 1 <= n <= N, got n={n}, N={big_n}"
        )));
    }
    Ok(())
}

/// Haar-random N×N orthogonal matrix from a seeded Gaussian draw.
pub fn random_orthogonal(size: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = rng::seeded(seed);
    let g = DMatrix::<f64>::from_fn(size, size, |_, _| StandardNormal.sample(&mut rng));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    // Sign fix makes the distribution Haar rather than QR-biased.
    for j in 0..size {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// First `n` rows of a seeded random N×N orthogonal matrix; the remaining
/// rows form the complement.
pub fn build_parseval_random(n: usize, big_n: usize, seed: u64) -> Result<TightFrame> {
    check_dims(n, big_n)?;
    let q = random_orthogonal(big_n, seed);
    let d = q.rows(0, n).into_owned();
    let d_perp = q.rows(n, big_n - n).into_owned();
    TightFrame::from_parts(d, d_perp, format!("random:n={n},N={big_n},seed={seed}"))
}

/// Deterministic fixtures. `n` is used by `identity` and
/// `duplicated_identity`; `mercedes` is always 2×3.
pub fn build_named_frame(name: NamedFrame, n: usize) -> Result<TightFrame> {
    match name {
        NamedFrame::Identity => {
            check_dims(n, n)?;
            TightFrame::from_parts(
                DMatrix::identity(n, n),
                DMatrix::zeros(0, n),
                format!("identity:{n}"),
            )
        }
        NamedFrame::DuplicatedIdentity => {
            check_dims(n, 2 * n)?;
            let s = std::f64::consts::FRAC_1_SQRT_2;
            let d = DMatrix::from_fn(n, 2 * n, |i, j| if j % n == i { s } else { 0.0 });
            let d_perp = DMatrix::from_fn(n, 2 * n, |i, j| match j {
                j if j == i => s,
                j if j == i + n => -s,
                _ => 0.0,
            });
            TightFrame::from_parts(d, d_perp, format!("duplicated_identity:{n}"))
        }
        NamedFrame::Mercedes => {
            let c = (2.0f64 / 3.0).sqrt();
            let h = 3.0f64.sqrt() / 2.0;
            let d = DMatrix::from_row_slice(2, 3, &[c, -0.5 * c, -0.5 * c, 0.0, h * c, -h * c]);
            let w = 1.0 / 3.0f64.sqrt();
            let d_perp = DMatrix::from_row_slice(1, 3, &[w, w, w]);
            TightFrame::from_parts(d, d_perp, "mercedes")
        }
    }
}

pub fn validate_frame(frame: &TightFrame) -> FrameValidation {
    let (n, big_n) = frame.d.shape();
    let parseval_deviation = max_abs_diff(
        &(&frame.d * frame.d.transpose()),
        &DMatrix::identity(n, n),
    );
    let mut stacked = DMatrix::zeros(frame.d.nrows() + frame.d_perp.nrows(), big_n);
    stacked.view_mut((0, 0), (n, big_n)).copy_from(&frame.d);
    stacked
        .view_mut((n, 0), (frame.d_perp.nrows(), big_n))
        .copy_from(&frame.d_perp);
    let orthogonality_deviation = if stacked.nrows() == big_n {
        max_abs_diff(&(&stacked * stacked.transpose()), &DMatrix::identity(big_n, big_n))
    } else {
        f64::INFINITY
    };
    FrameValidation {
        parseval_deviation,
        orthogonality_deviation,
        pass: parseval_deviation < FRAME_TOL && orthogonality_deviation < FRAME_TOL,
    }
}
