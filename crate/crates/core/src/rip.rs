//! Exact (enumerative) D-RIP and S-DRIP constants at desk scale.
//!
//! For a support S the restricted quotient `‖A D_S z‖² / ‖D_S z‖²` is a
//! generalized Rayleigh quotient. It is reduced to an ordinary symmetric
//! eigenproblem on an orthonormal basis of `range(D_S)`, which also drops
//! directions where `D_S z = 0`.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frames::TightFrame;
use crate::linalg::{self, binomial, combinations, select_cols, sym_extremes};
use crate::rng;

pub const DEFAULT_SUPPORT_BUDGET: u64 = 1_000_000;
/// Row-subset enumeration guard for exhaustive S-DRIP.
pub const MAX_EXHAUSTIVE_ROWS: usize = 14;
/// Relative eigenvalue cut for rank-deficient `D_S`.
pub const GRAM_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HalfRule {
    /// |I| ≥ ⌈m/2⌉
    #[default]
    Ceil,
    /// |I| ≥ ⌊m/2⌋
    Floor,
}

impl HalfRule {
    pub fn min_subset_size(self, m: usize) -> usize {
        match self {
            HalfRule::Ceil => m.div_ceil(2),
            HalfRule::Floor => m / 2,
        }
    }
}

impl fmt::Display for HalfRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HalfRule::Ceil => "ceil",
            HalfRule::Floor => "floor",
        })
    }
}

impl std::str::FromStr for HalfRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ceil" => Ok(HalfRule::Ceil),
            "floor" => Ok(HalfRule::Floor),
            other => Err(Error::Config(format!("unknown half rule `{other}`"))),
        }
    }
}

/// Orthonormal basis of `range(D_S)` plus the map back to coefficients:
/// `D_S coeff = basis`, so `z_S = coeff w` realizes `D_S z_S = basis w`.
struct SupportBasis {
    basis: DMatrix<f64>,
    coeff: DMatrix<f64>,
}

fn support_basis(d: &DMatrix<f64>, support: &[usize]) -> Option<SupportBasis> {
    let ds = select_cols(d, support);
    let gram = ds.tr_mul(&ds);
    let eig = gram.symmetric_eigen();
    let top = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    if top <= 0.0 {
        return None;
    }
    let keep: Vec<usize> = (0..eig.eigenvalues.len())
        .filter(|&i| eig.eigenvalues[i] > GRAM_TOL * top)
        .collect();
    let coeff = DMatrix::from_fn(support.len(), keep.len(), |i, j| {
        eig.eigenvectors[(i, keep[j])] / eig.eigenvalues[keep[j]].sqrt()
    });
    let basis = &ds * &coeff;
    Some(SupportBasis { basis, coeff })
}

/// Extreme restricted quotients on one support.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportSpectrum {
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// Length-N coefficient vectors attaining the extremes.
    pub z_min: DVector<f64>,
    pub z_max: DVector<f64>,
}

fn embed(support: &[usize], zs: &DVector<f64>, len: usize) -> DVector<f64> {
    let mut z = DVector::zeros(len);
    for (k, &i) in support.iter().enumerate() {
        z[i] = zs[k];
    }
    z
}

/// Extremes of `‖A D_S z‖² / ‖D_S z‖²` over z supported on `support` with
/// `D_S z ≠ 0`; `None` when every such `D_S z` vanishes.
pub fn support_spectrum(
    a: &DMatrix<f64>,
    d: &DMatrix<f64>,
    support: &[usize],
) -> Option<SupportSpectrum> {
    let sb = support_basis(d, support)?;
    let m = a * &sb.basis;
    let (lmin, wmin, lmax, wmax) = sym_extremes(m.tr_mul(&m));
    Some(SupportSpectrum {
        lambda_min: lmin,
        lambda_max: lmax,
        z_min: embed(support, &(&sb.coeff * wmin), d.ncols()),
        z_max: embed(support, &(&sb.coeff * wmax), d.ncols()),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DripResult {
    pub order: usize,
    pub delta: f64,
    /// Smallest restricted quotient over all evaluated supports.
    pub lambda_min: f64,
    /// Largest restricted quotient over all evaluated supports.
    pub lambda_max: f64,
    pub witness_support: Vec<usize>,
    /// Coefficient vector whose quotient deviates from 1 by exactly `delta`.
    #[serde(with = "crate::serde_vec::vector")]
    pub witness_z: DVector<f64>,
    pub exhaustive: bool,
    pub supports_evaluated: usize,
}

fn check_inputs(a: &DMatrix<f64>, frame: &TightFrame, order: usize) -> Result<()> {
    if a.ncols() != frame.n() {
        return Err(Error::Dimension(format!(
            "A has {} columns, frame dimension is {}",
            a.ncols(),
            frame.n()
        )));
    }
    if order < 1 || order > frame.len() {
        return Err(Error::Parameter(format!(
            "order must lie in [1, {}], got {order}",
            frame.len()
        )));
    }
    Ok(())
}

fn check_budget(big_n: usize, order: usize, budget: u64) -> Result<()> {
    let count = binomial(big_n, order);
    if count > budget {
        return Err(Error::Resource(format!(
            "C({big_n}, {order}) = {count} supports exceed the budget {budget}; use sampled mode"
        )));
    }
    Ok(())
}

#[derive(Clone)]
struct Extremes {
    lambda_min: f64,
    min_at: usize,
    lambda_max: f64,
    max_at: usize,
}

impl Extremes {
    fn empty() -> Self {
        Extremes {
            lambda_min: f64::INFINITY,
            min_at: usize::MAX,
            lambda_max: f64::NEG_INFINITY,
            max_at: usize::MAX,
        }
    }

    fn single(idx: usize, lmin: f64, lmax: f64) -> Self {
        Extremes {
            lambda_min: lmin,
            min_at: idx,
            lambda_max: lmax,
            max_at: idx,
        }
    }

    // Total-order selection with index tie-break: associative and
    // commutative, so any reduction tree yields the same answer.
    fn merge(self, o: Self) -> Self {
        let (lambda_min, min_at) = if o.lambda_min < self.lambda_min
            || (o.lambda_min == self.lambda_min && o.min_at < self.min_at)
        {
            (o.lambda_min, o.min_at)
        } else {
            (self.lambda_min, self.min_at)
        };
        let (lambda_max, max_at) = if o.lambda_max > self.lambda_max
            || (o.lambda_max == self.lambda_max && o.max_at < self.max_at)
        {
            (o.lambda_max, o.max_at)
        } else {
            (self.lambda_max, self.max_at)
        };
        Extremes {
            lambda_min,
            min_at,
            lambda_max,
            max_at,
        }
    }
}

fn drip_over_supports(
    a: &DMatrix<f64>,
    frame: &TightFrame,
    order: usize,
    supports: &[Vec<usize>],
    exhaustive: bool,
) -> Result<DripResult> {
    let d = frame.d();
    let ext = supports
        .par_iter()
        .enumerate()
        .filter_map(|(i, s)| {
            support_spectrum(a, d, s).map(|sp| Extremes::single(i, sp.lambda_min, sp.lambda_max))
        })
        .reduce(Extremes::empty, Extremes::merge);
    if ext.min_at == usize::MAX {
        return Err(Error::Degenerate(
            "every support has D_S = 0; the restricted quotient is undefined".into(),
        ));
    }
    let upper = ext.lambda_max - 1.0;
    let lower = 1.0 - ext.lambda_min;
    let (at, use_max) = if upper >= lower {
        (ext.max_at, true)
    } else {
        (ext.min_at, false)
    };
    let sp = support_spectrum(a, d, &supports[at]).expect("evaluated above");
    Ok(DripResult {
        order,
        delta: upper.max(lower).max(0.0),
        lambda_min: ext.lambda_min,
        lambda_max: ext.lambda_max,
        witness_support: supports[at].clone(),
        witness_z: if use_max { sp.z_max } else { sp.z_min },
        exhaustive,
        supports_evaluated: supports.len(),
    })
}

/// Exhaustive D-RIP constant of order `order`.
pub fn drip_constant(a: &DMatrix<f64>, frame: &TightFrame, order: usize) -> Result<DripResult> {
    drip_constant_with_budget(a, frame, order, DEFAULT_SUPPORT_BUDGET)
}

pub fn drip_constant_with_budget(
    a: &DMatrix<f64>,
    frame: &TightFrame,
    order: usize,
    budget: u64,
) -> Result<DripResult> {
    check_inputs(a, frame, order)?;
    check_budget(frame.len(), order, budget)?;
    let supports = combinations(frame.len(), order);
    drip_over_supports(a, frame, order, &supports, true)
}

fn random_supports(big_n: usize, order: usize, samples: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut r = rng::seeded(seed);
    (0..samples)
        .map(|_| {
            let mut s = index::sample(&mut r, big_n, order).into_vec();
            s.sort_unstable();
            s
        })
        .collect()
}

/// Lower bound on δ from `samples` seeded random supports.
pub fn drip_constant_sampled(
    a: &DMatrix<f64>,
    frame: &TightFrame,
    order: usize,
    samples: usize,
    seed: u64,
) -> Result<DripResult> {
    check_inputs(a, frame, order)?;
    let supports = random_supports(frame.len(), order, samples.max(1), seed);
    drip_over_supports(a, frame, order, &supports, false)
}

/// D-RIP and S-DRIP constants for one order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RipReport {
    pub order: usize,
    pub delta: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub theta_minus: f64,
    pub theta_plus: f64,
    pub min_subset_size: usize,
    pub half_rule: HalfRule,
    pub exhaustive: bool,
    /// Sampling budget when `exhaustive` is false.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<usize>,
}

impl RipReport {
    /// The δ bound implied by the S-DRIP pair: `max{1 − θ−, θ+ − 1}`.
    pub fn theta_delta_bound(&self) -> f64 {
        (1.0 - self.theta_minus).max(self.theta_plus - 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SdripOptions {
    pub half_rule: HalfRule,
    /// `Some((samples, seed))` switches to sampled mode.
    pub sampled: Option<(usize, u64)>,
}

pub fn sdrip_constants(a: &DMatrix<f64>, frame: &TightFrame, order: usize) -> Result<RipReport> {
    sdrip_constants_with(a, frame, order, SdripOptions::default())
}

/// S-DRIP constants.
///
/// Adding rows to I only adds positive semidefinite terms to the restricted
/// Gram matrix, so θ+ is attained at I = [1:m] and θ− at subsets of the
/// minimal admissible size; those are the only subsets enumerated.
pub fn sdrip_constants_with(
    a: &DMatrix<f64>,
    frame: &TightFrame,
    order: usize,
    opts: SdripOptions,
) -> Result<RipReport> {
    check_inputs(a, frame, order)?;
    let m = a.nrows();
    let h = opts.half_rule.min_subset_size(m);
    let (supports, exhaustive, budget) = match opts.sampled {
        None => {
            if m > MAX_EXHAUSTIVE_ROWS {
                return Err(Error::Resource(format!(
                    "m = {m} exceeds the exhaustive S-DRIP guard {MAX_EXHAUSTIVE_ROWS}; use sampled mode"
                )));
            }
            check_budget(frame.len(), order, DEFAULT_SUPPORT_BUDGET)?;
            (combinations(frame.len(), order), true, None)
        }
        Some((samples, seed)) => (
            random_supports(frame.len(), order, samples.max(1), seed),
            false,
            Some(samples),
        ),
    };
    let d = frame.d();
    let subset_seed = opts.sampled.map(|(_, s)| rng::splitmix64(s));

    let per_support: Vec<Option<(f64, f64, f64)>> = supports
        .par_iter()
        .enumerate()
        .map(|(idx, s)| {
            let sb = support_basis(d, s)?;
            let mb = a * &sb.basis;
            let (full_min, _, full_max, _) = sym_extremes(mb.tr_mul(&mb));
            let theta_minus = match subset_seed {
                None => min_over_subsets(&mb, h),
                Some(seed) => {
                    let mut r = rng::seeded(rng::derive_seed(seed, idx as u64, 0));
                    let mut rows = index::sample(&mut r, m, h).into_vec();
                    rows.sort_unstable();
                    restricted_min(&mb, &rows)
                }
            };
            Some((theta_minus, full_min, full_max))
        })
        .collect();

    let mut theta_minus = f64::INFINITY;
    let mut lambda_min = f64::INFINITY;
    let mut lambda_max = f64::NEG_INFINITY;
    for (tm, lmin, lmax) in per_support.into_iter().flatten() {
        theta_minus = theta_minus.min(tm);
        lambda_min = lambda_min.min(lmin);
        lambda_max = lambda_max.max(lmax);
    }
    if !lambda_max.is_finite() {
        return Err(Error::Degenerate(
            "every support has D_S = 0; the restricted quotient is undefined".into(),
        ));
    }
    Ok(RipReport {
        order,
        delta: (lambda_max - 1.0).max(1.0 - lambda_min).max(0.0),
        lambda_min,
        lambda_max,
        theta_minus,
        theta_plus: lambda_max,
        min_subset_size: h,
        half_rule: opts.half_rule,
        exhaustive,
        budget,
    })
}

fn restricted_min(mb: &DMatrix<f64>, rows: &[usize]) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    let sub = linalg::select_rows(mb, rows);
    sym_extremes(sub.tr_mul(&sub)).0
}

fn min_over_subsets(mb: &DMatrix<f64>, h: usize) -> f64 {
    let m = mb.nrows();
    if h == 0 {
        return 0.0;
    }
    let r = mb.ncols();
    let outer: Vec<DMatrix<f64>> = (0..m)
        .map(|i| {
            let row = mb.row(i);
            row.transpose() * row
        })
        .collect();
    let mut best = f64::INFINITY;
    for rows in combinations(m, h) {
        let mut g = DMatrix::zeros(r, r);
        for &i in &rows {
            g += &outer[i];
        }
        best = best.min(sym_extremes(g).0);
    }
    best
}

/// ⌈t·k⌉, the order used for δ_tk when t·k is not an integer.
pub fn drip_order_for_t(t: f64, k: usize) -> usize {
    let tk = t * k as f64;
    // absorb representation error such as 0.7 * 10 = 7.000000000000001
    (tk - 1e-9 * tk.max(1.0)).ceil().max(0.0) as usize
}
