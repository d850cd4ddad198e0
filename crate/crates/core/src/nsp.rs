//! Null-space-property conditions for exact phaseless recovery through the
//! ℓq-analysis model: witness evaluation (real and complex) and a seeded
//! counterexample search for the real case.
//!
//! The search is a falsifier, not a verifier. Finding no witness within the
//! budget is evidence that the property holds, never a proof.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frames::TightFrame;
use crate::linalg::{self, binomial, combinations, mask_indices, null_space, select_cols, select_rows};
use crate::rip::{DEFAULT_SUPPORT_BUDGET, MAX_EXHAUSTIVE_ROWS};
use crate::rng;
use crate::signals::{self, check_q};

/// Null-space membership tolerance, relative to ‖A‖_F‖u‖.
pub const MEMBERSHIP_TOL: f64 = 1e-9;
/// Relative residual allowed when certifying dictionary sparsity.
pub const SPARSITY_TOL: f64 = 1e-8;
/// Slack on the strict inequality; equality within it counts as a violation.
pub const STRICTNESS_TOL: f64 = 1e-12;

fn violates(lhs: f64, rhs: f64) -> bool {
    lhs >= rhs - STRICTNESS_TOL * rhs.max(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NspWitness {
    /// Λ ⊆ [0, m)
    pub lambda: Vec<usize>,
    /// u ∈ N(A_Λ)
    #[serde(with = "crate::serde_vec::vector")]
    pub u: DVector<f64>,
    /// v ∈ N(A_{Λᶜ})
    #[serde(with = "crate::serde_vec::vector")]
    pub v: DVector<f64>,
    pub q: f64,
    /// ‖D*(u+v)‖_q^q
    pub lhs: f64,
    /// ‖D*(u−v)‖_q^q
    pub rhs: f64,
    pub violated: bool,
}

impl NspWitness {
    pub fn new(lambda: Vec<usize>, u: DVector<f64>, v: DVector<f64>, q: f64) -> Self {
        NspWitness {
            lambda,
            u,
            v,
            q,
            lhs: f64::NAN,
            rhs: f64::NAN,
            violated: false,
        }
    }

    /// The two signals a violation makes indistinguishable: `x₀ = u + v`
    /// and `x̂ = u − v` share magnitudes `|A x₀| = |A x̂|`.
    pub fn ambiguous_pair(&self) -> (DVector<f64>, DVector<f64>) {
        (&self.u + &self.v, &self.u - &self.v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaMode {
    AllSubsets,
    /// |Λ| ≤ k, the literal reading of the condition.
    #[default]
    CardAtMostK,
}

impl std::str::FromStr for LambdaMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all_subsets" => Ok(LambdaMode::AllSubsets),
            "card_at_most_k" => Ok(LambdaMode::CardAtMostK),
            other => Err(Error::Config(format!("unknown lambda mode `{other}`"))),
        }
    }
}

/// Smallest residual `‖y − D_S z‖₂` over all k-supports, with its support.
pub fn dictionary_sparse_residual(d: &DMatrix<f64>, y: &DVector<f64>, k: usize) -> Result<(f64, Vec<usize>)> {
    let count = binomial(d.ncols(), k);
    if count > DEFAULT_SUPPORT_BUDGET {
        return Err(Error::Resource(format!("C({}, {k}) = {count} supports exceed the budget", d.ncols())));
    }
    let mut best = (y.norm(), Vec::new());
    for s in combinations(d.ncols(), k) {
        let ds = select_cols(d, &s);
        let z = linalg::lstsq(&ds, y);
        let res = (y - ds * z).norm();
        if res < best.0 {
            best = (res, s);
        }
    }
    Ok(best)
}

fn lambda_complement(lambda: &[usize], m: usize) -> Vec<usize> {
    (0..m).filter(|i| !lambda.contains(i)).collect()
}

/// Checks the witness hypotheses and fills in both quasi-norms.
pub fn nsp_real_evaluate(
    a: &DMatrix<f64>,
    frame: &TightFrame,
    k: usize,
    w: &NspWitness,
) -> Result<NspWitness> {
    check_q(w.q)?;
    let (m, n) = a.shape();
    if frame.n() != n || w.u.len() != n || w.v.len() != n {
        return Err(Error::Dimension("witness, A and frame dimensions disagree".into()));
    }
    if let Some(bad) = w.lambda.iter().find(|&&i| i >= m) {
        return Err(Error::InvalidWitness(format!("Λ index {bad} out of range")));
    }
    let un = w.u.norm();
    let vn = w.v.norm();
    if un == 0.0 {
        return Err(Error::InvalidWitness("u must be nonzero".into()));
    }
    if vn == 0.0 {
        return Err(Error::InvalidWitness("v must be nonzero".into()));
    }
    let a_norm = a.norm();
    let lambda_c = lambda_complement(&w.lambda, m);
    let au = (select_rows(a, &w.lambda) * &w.u).norm();
    if au > MEMBERSHIP_TOL * a_norm * un {
        return Err(Error::InvalidWitness(format!("u is not in N(A_Λ): ‖A_Λ u‖ = {au:e}")));
    }
    let av = (select_rows(a, &lambda_c) * &w.v).norm();
    if av > MEMBERSHIP_TOL * a_norm * vn {
        return Err(Error::InvalidWitness(format!("v is not in N(A_Λᶜ): ‖A_Λᶜ v‖ = {av:e}")));
    }
    let (x0, x_hat) = w.ambiguous_pair();
    let (res, _) = dictionary_sparse_residual(frame.d(), &x0, k)?;
    if res > SPARSITY_TOL * x0.norm() {
        return Err(Error::InvalidWitness(format!(
            "u + v is not dictionary-{k}-sparse (residual {res:e})"
        )));
    }
    let lhs = signals::analysis_lq(frame.analyze(&x0).as_slice(), w.q);
    let rhs = signals::analysis_lq(frame.analyze(&x_hat).as_slice(), w.q);
    Ok(NspWitness {
        lhs,
        rhs,
        violated: violates(lhs, rhs),
        ..w.clone()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FalsifyOptions {
    pub k: usize,
    pub q: f64,
    /// Objective evaluations allowed per (Λ, S) cell.
    pub budget: usize,
    pub seed: u64,
    pub lambda_mode: LambdaMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FalsifyReport {
    pub witness: Option<NspWitness>,
    pub options: FalsifyOptions,
    /// (Λ, S) cells in the search space.
    pub cells: usize,
    /// Cells examined before stopping (all of them when no witness exists).
    pub cells_examined: usize,
    /// Examined cells whose constrained solution space was nontrivial.
    pub cells_nontrivial: usize,
    pub evaluations: u64,
}

struct CellOutcome {
    witness: Option<NspWitness>,
    nontrivial: bool,
    evaluations: u64,
}

/// Parametrization of {(u, v) : u ∈ N(A_Λ), v ∈ N(A_Λᶜ), u + v ∈ range(D_S)}
/// by coefficients c: `u = pu c`, `v = pv c`.
struct CellSpace {
    pu: DMatrix<f64>,
    pv: DMatrix<f64>,
    sum_coef: DMatrix<f64>,
    diff_coef: DMatrix<f64>,
}

impl CellSpace {
    fn build(a: &DMatrix<f64>, frame: &TightFrame, lambda: &[usize], support: &[usize]) -> Option<Self> {
        let m = a.nrows();
        let n = a.ncols();
        let u_basis = null_space(&select_rows(a, lambda));
        let v_basis = null_space(&select_rows(a, &lambda_complement(lambda, m)));
        let (du, dv) = (u_basis.ncols(), v_basis.ncols());
        if du == 0 || dv == 0 {
            return None;
        }
        let ds = select_cols(frame.d(), support);
        let k = ds.ncols();
        let mut stacked = DMatrix::zeros(n, du + dv + k);
        stacked.view_mut((0, 0), (n, du)).copy_from(&u_basis);
        stacked.view_mut((0, du), (n, dv)).copy_from(&v_basis);
        stacked.view_mut((0, du + dv), (n, k)).copy_from(&(-ds));
        let w = null_space(&stacked);
        if w.ncols() == 0 {
            return None;
        }
        let pu = &u_basis * w.rows(0, du);
        let pv = &v_basis * w.rows(du, dv);
        if pu.norm() == 0.0 || pv.norm() == 0.0 {
            return None;
        }
        let sum_coef = frame.d().tr_mul(&(&pu + &pv));
        let diff_coef = frame.d().tr_mul(&(&pu - &pv));
        Some(CellSpace {
            pu,
            pv,
            sum_coef,
            diff_coef,
        })
    }

    fn dim(&self) -> usize {
        self.pu.ncols()
    }

    /// gap = ‖D*(u+v)‖_q^q − ‖D*(u−v)‖_q^q, or `None` if u or v vanishes.
    fn gap(&self, c: &DVector<f64>, q: f64) -> Option<f64> {
        let u = &self.pu * c;
        let v = &self.pv * c;
        let scale = u.norm() + v.norm();
        if u.norm() <= 1e-8 * scale || v.norm() <= 1e-8 * scale {
            return None;
        }
        let lhs = signals::analysis_lq((&self.sum_coef * c).as_slice(), q);
        let rhs = signals::analysis_lq((&self.diff_coef * c).as_slice(), q);
        Some(lhs - (rhs - STRICTNESS_TOL * rhs.max(1.0)))
    }
}

fn search_cell(
    a: &DMatrix<f64>,
    frame: &TightFrame,
    k: usize,
    lambda: &[usize],
    support: &[usize],
    opts: &FalsifyOptions,
    seed: u64,
) -> CellOutcome {
    let Some(space) = CellSpace::build(a, frame, lambda, support) else {
        return CellOutcome {
            witness: None,
            nontrivial: false,
            evaluations: 0,
        };
    };
    let dim = space.dim();
    let q = opts.q;
    let budget = opts.budget.max(1) as u64;
    let mut evals = 0u64;
    let mut found: Option<DVector<f64>> = None;

    let try_point = |c: &DVector<f64>, evals: &mut u64| -> Option<f64> {
        *evals += 1;
        space.gap(c, q)
    };

    // basis directions first: in one dimension this is the whole space
    for j in 0..dim {
        if evals >= budget {
            break;
        }
        let c = DVector::from_fn(dim, |i, _| if i == j { 1.0 } else { 0.0 });
        if try_point(&c, &mut evals).is_some_and(|g| g >= 0.0) {
            found = Some(c);
            break;
        }
    }

    let mut r = rng::seeded(seed);
    while found.is_none() && dim > 1 && evals < budget {
        let mut c = DVector::from_fn(dim, |_, _| {
            let g: f64 = StandardNormal.sample(&mut r);
            g
        });
        c /= c.norm();
        let Some(mut best) = try_point(&c, &mut evals) else {
            continue;
        };
        if best >= 0.0 {
            found = Some(c);
            break;
        }
        let mut step = 0.5;
        'ascent: while step > 1e-6 && evals < budget {
            let mut improved = false;
            for j in 0..dim {
                for sign in [1.0, -1.0] {
                    if evals >= budget {
                        break 'ascent;
                    }
                    let mut cand = c.clone();
                    cand[j] += sign * step;
                    let norm = cand.norm();
                    if norm == 0.0 {
                        continue;
                    }
                    cand /= norm;
                    if let Some(g) = try_point(&cand, &mut evals) {
                        if g > best {
                            best = g;
                            c = cand;
                            improved = true;
                            if best >= 0.0 {
                                found = Some(c.clone());
                                break 'ascent;
                            }
                        }
                    }
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
    }

    let witness = found.and_then(|c| {
        let w = NspWitness::new(lambda.to_vec(), &space.pu * &c, &space.pv * &c, q);
        nsp_real_evaluate(a, frame, k, &w).ok().filter(|w| w.violated)
    });
    CellOutcome {
        witness,
        nontrivial: true,
        evaluations: evals,
    }
}

/// Searches every admissible Λ and every k-support S for a violation of the
/// real null space property. Cells are scanned in (Λ, S) order and the first
/// witness in that order is returned, independent of thread scheduling.
pub fn nsp_real_falsify(
    a: &DMatrix<f64>,
    frame: &TightFrame,
    opts: FalsifyOptions,
) -> Result<FalsifyReport> {
    check_q(opts.q)?;
    let (m, n) = a.shape();
    if frame.n() != n {
        return Err(Error::Dimension("A and frame dimensions disagree".into()));
    }
    if opts.k < 1 || opts.k > frame.len() {
        return Err(Error::Parameter(format!("k must lie in [1, {}]", frame.len())));
    }
    if m > MAX_EXHAUSTIVE_ROWS {
        return Err(Error::Resource(format!(
            "m = {m} exceeds the subset enumeration guard {MAX_EXHAUSTIVE_ROWS}"
        )));
    }
    let count = binomial(frame.len(), opts.k);
    if count > DEFAULT_SUPPORT_BUDGET {
        return Err(Error::Resource(format!("C({}, {}) = {count} supports exceed the budget", frame.len(), opts.k)));
    }
    let lambdas: Vec<Vec<usize>> = (0u32..1 << m)
        .filter(|mask| match opts.lambda_mode {
            LambdaMode::AllSubsets => true,
            LambdaMode::CardAtMostK => mask.count_ones() as usize <= opts.k,
        })
        .map(|mask| mask_indices(mask, m))
        .collect();
    let supports = combinations(frame.len(), opts.k);
    let cells = lambdas.len() * supports.len();

    let mut report = FalsifyReport {
        witness: None,
        options: opts,
        cells,
        cells_examined: 0,
        cells_nontrivial: 0,
        evaluations: 0,
    };
    const CHUNK: usize = 256;
    let mut start = 0;
    while start < cells {
        let end = (start + CHUNK).min(cells);
        let outcomes: Vec<CellOutcome> = (start..end)
            .into_par_iter()
            .map(|cell| {
                let lambda = &lambdas[cell / supports.len()];
                let support = &supports[cell % supports.len()];
                let seed = rng::derive_seed(opts.seed, cell as u64, 0);
                search_cell(a, frame, opts.k, lambda, support, &opts, seed)
            })
            .collect();
        for out in outcomes {
            report.cells_examined += 1;
            report.cells_nontrivial += usize::from(out.nontrivial);
            report.evaluations += out.evaluations;
            if out.witness.is_some() {
                report.witness = out.witness;
                return Ok(report);
            }
        }
        start = end;
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexNspWitness {
    /// Partition Ω of [0, m) into p blocks.
    pub omega: Vec<Vec<usize>>,
    /// φ_i ∈ N(A_{Ω_i})
    pub phis: Vec<Vec<Complex64>>,
    /// Distinct unimodular constants d_i.
    pub ds: Vec<Complex64>,
    pub pair: (usize, usize),
    /// ‖D*(φ_i − φ_j)‖_q^q
    pub lhs: f64,
    /// ‖D*(d_j φ_i − d_i φ_j)‖_q^q
    pub rhs: f64,
    pub violated: bool,
}

fn complex_lq(v: &DVector<Complex64>, q: f64) -> f64 {
    let mags: Vec<f64> = v.iter().map(|z| z.norm()).collect();
    signals::analysis_lq(&mags, q)
}

fn complex_sparse_residual(d: &DMatrix<Complex64>, y: &DVector<Complex64>, k: usize) -> f64 {
    let mut best = y.norm();
    for s in combinations(d.ncols(), k) {
        let ds = DMatrix::from_fn(d.nrows(), s.len(), |i, j| d[(i, s[j])]);
        let svd = ds.clone().svd(true, true);
        let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
        if smax == 0.0 {
            continue;
        }
        let z = svd.solve(y, linalg::RANK_TOL * smax).expect("u and v_t computed");
        best = best.min((y - ds * z).norm());
    }
    best
}

/// Checks the partition hypotheses and evaluates the designated pair.
pub fn nsp_complex_evaluate(
    a: &DMatrix<Complex64>,
    d: &DMatrix<Complex64>,
    k: usize,
    w: &ComplexNspWitness,
    q: f64,
) -> Result<ComplexNspWitness> {
    check_q(q)?;
    let (m, n) = a.shape();
    let p = w.omega.len();
    if d.nrows() != n {
        return Err(Error::Dimension("A and D dimensions disagree".into()));
    }
    if p < 2 || w.phis.len() != p || w.ds.len() != p {
        return Err(Error::InvalidWitness(
            "need p >= 2 blocks with one φ and one d per block".into(),
        ));
    }
    let (i, j) = w.pair;
    if i >= p || j >= p || i == j {
        return Err(Error::InvalidWitness(format!("invalid pair ({i}, {j})")));
    }
    let mut seen = vec![false; m];
    for idx in w.omega.iter().flatten() {
        if *idx >= m || seen[*idx] {
            return Err(Error::InvalidWitness("Ω is not a partition of [0, m)".into()));
        }
        seen[*idx] = true;
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::InvalidWitness("Ω does not cover [0, m)".into()));
    }
    for (a_idx, da) in w.ds.iter().enumerate() {
        if (da.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidWitness(format!("|d_{a_idx}| != 1")));
        }
        if w.ds[..a_idx].iter().any(|db| (da - db).norm() <= 1e-9) {
            return Err(Error::InvalidWitness("the d_i are not distinct".into()));
        }
    }
    let phis: Vec<DVector<Complex64>> = w.phis.iter().map(|v| DVector::from_vec(v.clone())).collect();
    if phis.iter().any(|v| v.len() != n) {
        return Err(Error::Dimension("φ length does not match A".into()));
    }
    let a_norm = a.norm();
    for (b, (block, phi)) in w.omega.iter().zip(&phis).enumerate() {
        let pn = phi.norm();
        if pn == 0.0 {
            return Err(Error::InvalidWitness(format!("φ_{b} is zero")));
        }
        let rows = DMatrix::from_fn(block.len(), n, |r, c| a[(block[r], c)]);
        let res = (rows * phi).norm();
        if res > MEMBERSHIP_TOL * a_norm * pn {
            return Err(Error::InvalidWitness(format!("φ_{b} is not in N(A_Ω{b})")));
        }
    }
    let ratio = |j: usize| (&phis[0] - &phis[j]) / (w.ds[0] - w.ds[j]);
    let y = ratio(1);
    let scale = phis.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if y.norm() <= 1e-12 * scale {
        return Err(Error::InvalidWitness("the common ratio is zero".into()));
    }
    for jj in 2..p {
        if (ratio(jj) - &y).norm() > 1e-9 * y.norm() {
            return Err(Error::InvalidWitness(format!(
                "consistency ratio for block {jj} disagrees with block 1"
            )));
        }
    }
    let res = complex_sparse_residual(d, &y, k);
    if res > SPARSITY_TOL * y.norm() {
        return Err(Error::InvalidWitness(format!(
            "the common ratio is not dictionary-{k}-sparse (residual {res:e})"
        )));
    }
    let dh = d.adjoint();
    let lhs = complex_lq(&(&dh * (&phis[i] - &phis[j])), q);
    let rhs = complex_lq(&(&dh * (&phis[i] * w.ds[j] - &phis[j] * w.ds[i])), q);
    Ok(ComplexNspWitness {
        lhs,
        rhs,
        violated: violates(lhs, rhs),
        ..w.clone()
    })
}
