//! Solvers for the ℓq-analysis phaseless model: an exhaustive global oracle
//! for tiny noiseless instances and an iteratively reweighted least-squares
//! scheme with phase alternation for everything else.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frames::TightFrame;
use crate::linalg::{self, binomial, combinations, null_space};
use crate::measurement::PhaselessProblem;
use crate::rip::DEFAULT_SUPPORT_BUDGET;
use crate::rng;
use crate::signals::{analysis_lq, check_q};

/// Largest m accepted by the sign-pattern enumeration.
pub const MAX_ORACLE_ROWS: usize = 10;
/// Relative least-squares residual above which a linear system is inconsistent.
pub const CONSISTENCY_TOL: f64 = 1e-8;
/// Absolute slack on the ε-constraint when flagging a result feasible.
pub const FEASIBILITY_SLACK: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Oracle,
    Irls,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oracle" => Ok(Method::Oracle),
            "irls" => Ok(Method::Irls),
            other => Err(Error::Config(format!("unknown method `{other}`"))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Oracle => "oracle",
            Method::Irls => "irls",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleCertificate {
    /// Winning sign pattern, first entry fixed to +1.
    pub signs: Vec<i8>,
    /// Coefficients of D*x̂ forced to zero; empty when the affine set is a point.
    pub zero_set: Vec<usize>,
    /// The winner is the minimum-norm fallback rather than a vertex.
    pub min_norm_fallback: bool,
    /// Some zero-pattern subsystem was singular for the winning pattern.
    pub degenerate: bool,
    pub patterns_total: usize,
    pub patterns_feasible: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverResult {
    #[serde(with = "crate::serde_vec::vector")]
    pub x_hat: DVector<f64>,
    pub objective: f64,
    pub feasibility: f64,
    pub feasible: bool,
    pub method: Method,
    pub certificate: Option<OracleCertificate>,
    pub iterations: usize,
    pub restarts: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AffineSolution {
    pub x: DVector<f64>,
    pub objective: f64,
    pub zero_set: Vec<usize>,
    pub min_norm_fallback: bool,
    pub degenerate: bool,
}

fn analysis_objective(frame: &TightFrame, x: &DVector<f64>, q: f64) -> f64 {
    analysis_lq(frame.analyze(x).as_slice(), q)
}

/// Minimizes ‖D*x‖_q^q over {x : Ax = c} by enumerating which coefficients
/// of D*x vanish. On each orthant the objective is concave, so some minimizer
/// sits where n − rank(A) analysis coefficients are zero.
pub fn solve_affine_lq_oracle(
    a: &DMatrix<f64>,
    c: &DVector<f64>,
    frame: &TightFrame,
    q: f64,
) -> Result<AffineSolution> {
    check_q(q)?;
    let (m, n) = a.shape();
    if c.len() != m || frame.n() != n {
        return Err(Error::Dimension("A, c and frame dimensions disagree".into()));
    }
    let r = linalg::rank(a);
    if m <= n && r < m {
        return Err(Error::Degenerate(format!("A has rank {r} < m = {m}")));
    }
    let x_p = linalg::lstsq(a, c);
    let res = (a * &x_p - c).norm();
    if res > CONSISTENCY_TOL * c.norm() {
        return Err(Error::Infeasible(format!("Ax = c is inconsistent (residual {res:e})")));
    }
    let free = n - r;
    let big_n = frame.len();
    let count = binomial(big_n, free);
    if count > DEFAULT_SUPPORT_BUDGET {
        return Err(Error::Resource(format!("C({big_n}, {free}) = {count} zero patterns exceed the budget")));
    }

    let mut best = AffineSolution {
        objective: analysis_objective(frame, &x_p, q),
        x: x_p.clone(),
        zero_set: Vec::new(),
        min_norm_fallback: free > 0,
        degenerate: false,
    };
    if free == 0 {
        return Ok(best);
    }
    let basis = null_space(a);
    // D_Z* (x_p + N w) = 0 is a square system in w
    let dt_basis = frame.d().tr_mul(&basis);
    let dt_xp = frame.analyze(&x_p);
    let mut degenerate = false;
    for z in combinations(big_n, free) {
        let m_z = DMatrix::from_fn(free, free, |i, j| dt_basis[(z[i], j)]);
        let rhs = DVector::from_fn(free, |i, _| -dt_xp[z[i]]);
        if linalg::rank(&m_z) < free {
            degenerate = true;
            continue;
        }
        let Some(w) = m_z.lu().solve(&rhs) else {
            degenerate = true;
            continue;
        };
        let x = &x_p + &basis * w;
        let obj = analysis_objective(frame, &x, q);
        if obj < best.objective || (best.min_norm_fallback && obj <= best.objective) {
            best = AffineSolution {
                x,
                objective: obj,
                zero_set: z,
                min_norm_fallback: false,
                degenerate: false,
            };
        }
    }
    best.degenerate = degenerate;
    Ok(best)
}

fn sign_pattern(index: usize, m: usize) -> Vec<i8> {
    // bit j of the index flips entry j + 1; entry 0 stays +1
    (0..m)
        .map(|i| if i > 0 && (index >> (i - 1)) & 1 == 1 { -1 } else { 1 })
        .collect()
}

fn finish(p: &PhaselessProblem, x_hat: DVector<f64>, method: Method) -> SolverResult {
    let feasibility = p.feasibility(&x_hat);
    SolverResult {
        objective: p.objective(&x_hat),
        feasible: feasibility <= p.eps + FEASIBILITY_SLACK,
        feasibility,
        x_hat,
        method,
        certificate: None,
        iterations: 0,
        restarts: 0,
    }
}

/// Global minimizer of ‖D*x‖_q^q subject to |Ax| = b, by enumerating the
/// 2^{m−1} sign patterns and solving each affine subproblem exactly.
pub fn solve_oracle_noiseless(p: &PhaselessProblem) -> Result<SolverResult> {
    let m = p.m();
    if p.eps != 0.0 {
        return Err(Error::Parameter("the global oracle requires eps = 0".into()));
    }
    if m > MAX_ORACLE_ROWS {
        return Err(Error::Resource(format!(
            "m = {m} exceeds the sign enumeration guard {MAX_ORACLE_ROWS}"
        )));
    }
    let patterns = 1usize << m.saturating_sub(1);
    let outcomes: Vec<Result<Option<AffineSolution>>> = (0..patterns)
        .into_par_iter()
        .map(|idx| {
            let s = sign_pattern(idx, m);
            let c = DVector::from_fn(m, |i, _| f64::from(s[i]) * p.b[i]);
            match solve_affine_lq_oracle(&p.a, &c, &p.frame, p.q) {
                Ok(sol) => Ok(Some(sol)),
                Err(Error::Infeasible(_)) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect();
    let mut best: Option<(usize, AffineSolution)> = None;
    let mut feasible = 0;
    for (idx, out) in outcomes.into_iter().enumerate() {
        let Some(sol) = out? else { continue };
        feasible += 1;
        if best.as_ref().map_or(true, |(_, b)| sol.objective < b.objective) {
            best = Some((idx, sol));
        }
    }
    let Some((idx, sol)) = best else {
        return Err(Error::Infeasible("no sign pattern admits a consistent system".into()));
    };
    let mut out = finish(p, sol.x, Method::Oracle);
    out.certificate = Some(OracleCertificate {
        signs: sign_pattern(idx, m),
        zero_set: sol.zero_set,
        min_norm_fallback: sol.min_norm_fallback,
        degenerate: sol.degenerate,
        patterns_total: patterns,
        patterns_feasible: feasible,
    });
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IrlsOptions {
    pub max_iters: usize,
    pub eps0: f64,
    pub decay: f64,
    /// Penalty weight; `None` means 10⁻³·‖b‖₂².
    pub lambda: Option<f64>,
    pub restarts: usize,
    pub seed: u64,
    pub tol: f64,
}

impl Default for IrlsOptions {
    fn default() -> Self {
        IrlsOptions {
            max_iters: 500,
            eps0: 1.0,
            decay: 0.7,
            lambda: None,
            restarts: 10,
            seed: 0,
            tol: 1e-8,
        }
    }
}

impl IrlsOptions {
    pub fn validate(&self) -> Result<()> {
        let lambda_ok = self.lambda.map_or(true, |l| l > 0.0 && l.is_finite());
        if self.max_iters == 0
            || self.restarts == 0
            || !(self.eps0 > 0.0)
            || !(self.decay > 0.0 && self.decay < 1.0)
            || !(self.tol > 0.0)
            || !lambda_ok
        {
            return Err(Error::Parameter(
                "irls options must be positive with decay in (0, 1)".into(),
            ));
        }
        Ok(())
    }
}

fn phase(v: &DVector<f64>) -> DVector<f64> {
    v.map(|t| if t < 0.0 { -1.0 } else { 1.0 })
}

fn irls_weights(y: &DVector<f64>, eps: f64, q: f64) -> DVector<f64> {
    y.map(|t| (t * t + eps * eps).powf(q / 2.0 - 1.0))
}

fn solve_spd(h: DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    match h.clone().cholesky() {
        Some(ch) => Some(ch.solve(rhs)),
        None => h.lu().solve(rhs),
    }
}

/// Smoothed penalized objective majorized by each reweighted step:
/// ‖diag(p)Ax − b‖² + (2λ/q)·Σ((D*x)_i² + ε²)^{q/2}.
pub fn irls_surrogate(p: &PhaselessProblem, x: &DVector<f64>, phases: &DVector<f64>, eps: f64, lambda: f64) -> f64 {
    let fit = (phases.component_mul(&(&p.a * x)) - &p.b).norm_squared();
    let pen: f64 = p.frame.analyze(x).iter().map(|t| (t * t + eps * eps).powf(p.q / 2.0)).sum();
    fit + 2.0 * lambda / p.q * pen
}

fn reweighted_step(p: &PhaselessProblem, x: &DVector<f64>, phases: &DVector<f64>, eps: f64, lambda: f64) -> Option<DVector<f64>> {
    let d = p.frame.d();
    let w = irls_weights(&p.frame.analyze(x), eps, p.q);
    let dw = DMatrix::from_fn(d.nrows(), d.ncols(), |i, j| d[(i, j)] * w[j]);
    let h = p.a.tr_mul(&p.a) + (dw * d.transpose()) * lambda;
    let rhs = p.a.tr_mul(&phases.component_mul(&p.b));
    solve_spd(h, &rhs)
}

/// Surrogate values along `iters` reweighted steps with the phase pattern and
/// smoothing held fixed. Used to check the majorize-minimize descent.
pub fn irls_inner_trace(
    p: &PhaselessProblem,
    x0: &DVector<f64>,
    phases: &DVector<f64>,
    eps: f64,
    lambda: f64,
    iters: usize,
) -> Vec<f64> {
    let mut x = x0.clone();
    let mut trace = vec![irls_surrogate(p, &x, phases, eps, lambda)];
    for _ in 0..iters {
        let Some(next) = reweighted_step(p, &x, phases, eps, lambda) else { break };
        x = next;
        trace.push(irls_surrogate(p, &x, phases, eps, lambda));
    }
    trace
}

/// Leading eigenvector of Σ b_i² a_i a_iᵀ, scaled so that ‖Ax‖ = ‖b‖.
pub fn spectral_init(p: &PhaselessProblem) -> DVector<f64> {
    let n = p.n();
    let mut y = DMatrix::zeros(n, n);
    for (i, row) in p.a.row_iter().enumerate() {
        let r = row.transpose();
        y += &r * r.transpose() * (p.b[i] * p.b[i]);
    }
    let (_, _, _, v) = linalg::sym_extremes(y);
    let av = (&p.a * &v).norm();
    if av == 0.0 {
        return DVector::zeros(n);
    }
    v * (p.b.norm() / av)
}

/// Equality-constrained IRLS on {x : Ax = p⊙b} started from `x`; returns the
/// least-squares point when the affine set is empty or a single point.
fn polish(p: &PhaselessProblem, x: &DVector<f64>, phases: &DVector<f64>, opts: &IrlsOptions) -> DVector<f64> {
    let c = phases.component_mul(&p.b);
    let x_p = linalg::lstsq(&p.a, &c);
    let basis = null_space(&p.a);
    if basis.ncols() == 0 || (&p.a * &x_p - &c).norm() > CONSISTENCY_TOL * c.norm() {
        return x_p;
    }
    let m_mat = p.frame.d().tr_mul(&basis);
    let offset = p.frame.analyze(&x_p);
    let mut w = basis.tr_mul(&(x - &x_p));
    let mut eps = opts.eps0;
    for _ in 0..opts.max_iters {
        let y = &offset + &m_mat * &w;
        let weights = irls_weights(&y, eps, p.q);
        let mw = DMatrix::from_fn(m_mat.nrows(), m_mat.ncols(), |i, j| m_mat[(i, j)] * weights[i]);
        let h = mw.tr_mul(&m_mat);
        let rhs = -mw.tr_mul(&offset);
        let Some(next) = solve_spd(h, &rhs) else { break };
        let step = (&next - &w).norm();
        w = next;
        if step <= opts.tol && eps <= opts.tol {
            break;
        }
        eps = (eps * opts.decay).max(opts.tol);
    }
    x_p + basis * w
}

/// Best-improvement single-sign flips on r(s) = min_x ‖Ax − s⊙b‖₂, which is
/// the distance from s⊙b to range(A).
fn refine_phases(p: &PhaselessProblem, phases: DVector<f64>) -> DVector<f64> {
    let svd = p.a.clone().svd(true, false);
    let u = svd.u.expect("u computed");
    let smax = svd.singular_values.max();
    let cols: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > linalg::RANK_TOL * smax)
        .collect();
    if cols.len() >= p.m() {
        return phases;
    }
    let u = linalg::select_cols(&u, &cols);
    let residual = |s: &DVector<f64>| {
        let c = s.component_mul(&p.b);
        (c.norm_squared() - u.tr_mul(&c).norm_squared()).max(0.0)
    };
    let mut s = phases;
    let mut current = residual(&s);
    loop {
        let mut best: Option<(f64, usize)> = None;
        for i in 0..s.len() {
            s[i] = -s[i];
            let r = residual(&s);
            s[i] = -s[i];
            if r < current && best.map_or(true, |(b, _)| r < b) {
                best = Some((r, i));
            }
        }
        let Some((r, i)) = best else { return s };
        s[i] = -s[i];
        current = r;
    }
}

struct RestartOutcome {
    candidates: Vec<DVector<f64>>,
    best_iterate: DVector<f64>,
    iterations: usize,
}

fn run_restart(p: &PhaselessProblem, start: DVector<f64>, lambda: f64, opts: &IrlsOptions) -> RestartOutcome {
    let mut x = start;
    let mut best_iterate = x.clone();
    let mut best_feas = p.feasibility(&x);
    let mut eps = opts.eps0;
    let mut iterations = opts.max_iters;
    for it in 0..opts.max_iters {
        let phases = phase(&(&p.a * &x));
        let Some(next) = reweighted_step(p, &x, &phases, eps, lambda) else {
            iterations = it;
            break;
        };
        let step = (&next - &x).norm();
        x = next;
        let feas = p.feasibility(&x);
        if feas < best_feas {
            best_feas = feas;
            best_iterate = x.clone();
        }
        if step <= opts.tol && eps <= opts.tol {
            iterations = it + 1;
            break;
        }
        eps = (eps * opts.decay).max(opts.tol);
    }
    let phases = refine_phases(p, phase(&(&p.a * &x)));
    let polished = polish(p, &x, &phases, opts);
    RestartOutcome {
        candidates: vec![polished, x],
        best_iterate,
        iterations,
    }
}

/// Alternates a phase step with reweighted least squares over several seeded
/// restarts. Among candidates within the ε-constraint the lowest objective
/// wins; if none qualifies the most feasible point seen is returned.
pub fn solve_irls(p: &PhaselessProblem, opts: &IrlsOptions) -> Result<SolverResult> {
    opts.validate()?;
    let n = p.n();
    if p.b.norm() == 0.0 {
        let mut out = finish(p, DVector::zeros(n), Method::Irls);
        out.restarts = opts.restarts;
        return Ok(out);
    }
    let lambda = opts.lambda.unwrap_or(1e-3 * p.b.norm_squared());
    let init = spectral_init(p);
    let spread = (init.norm() / (n as f64).sqrt()).max(f64::MIN_POSITIVE) * 0.5;
    let outcomes: Vec<RestartOutcome> = (0..opts.restarts)
        .into_par_iter()
        .map(|r| {
            let start = if r == 0 {
                init.clone()
            } else {
                let mut g = rng::seeded(rng::derive_seed(opts.seed, r as u64, 0));
                let normal = Normal::new(0.0, spread).expect("positive spread");
                &init + DVector::from_fn(n, |_, _| normal.sample(&mut g))
            };
            run_restart(p, start, lambda, opts)
        })
        .collect();

    let scored = |x: &DVector<f64>| (p.feasibility(x), p.objective(x));
    let mut best_feasible: Option<(f64, usize, DVector<f64>)> = None;
    let mut most_feasible: Option<(f64, usize, DVector<f64>)> = None;
    for (r, out) in outcomes.iter().enumerate() {
        for x in out.candidates.iter().chain(std::iter::once(&out.best_iterate)) {
            let (feas, obj) = scored(x);
            if !feas.is_finite() || !obj.is_finite() {
                continue;
            }
            if feas <= p.eps + FEASIBILITY_SLACK && best_feasible.as_ref().map_or(true, |b| obj < b.0) {
                best_feasible = Some((obj, r, x.clone()));
            }
            if most_feasible.as_ref().map_or(true, |b| feas < b.0) {
                most_feasible = Some((feas, r, x.clone()));
            }
        }
    }
    let (_, r, x) = best_feasible
        .or(most_feasible)
        .unwrap_or((f64::NAN, 0, init));
    let mut out = finish(p, x, Method::Irls);
    out.iterations = outcomes.get(r).map_or(0, |o| o.iterations);
    out.restarts = opts.restarts;
    Ok(out)
}
