//! Closed-form stability constants for the noisy recovery bound, their
//! admissibility conditions, and end-to-end verification of a solver output.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measurement::{phase_distance, Field, PhaselessProblem};
use crate::record::{TrialRecord, TrialStatus};
use crate::rip::{drip_order_for_t, RipReport};
use crate::signals::{best_k_term_error, check_q};
use crate::solver::SolverResult;

/// Distance to the admissibility threshold below which a result is marginal.
pub const MARGINAL_TOL: f64 = 1e-6;
/// Absolute slack in `lhs ≤ rhs`.
pub const PASS_TOL: f64 = 1e-9;
pub const T_MAX: f64 = 4.0 / 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    pub q: f64,
    pub t: f64,
    /// max{t, √t}
    pub t_tilde: f64,
    pub delta: f64,
    /// t / (3 + 2^{2/q−2} − t)
    pub threshold: f64,
    /// t − (3 + 2^{2/q−2} − t)·δ
    pub denominator: f64,
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    pub admissible: bool,
    pub marginal: bool,
    /// Whether t lies in the window induced by (θ−, θ+), when those are known.
    pub theta_condition_ok: Option<bool>,
}

impl BoundConstants {
    pub fn with_thetas(mut self, theta_minus: f64, theta_plus: f64) -> Result<Self> {
        let rep = admissibility_check(self.q, self.t, theta_minus, theta_plus)?;
        self.theta_condition_ok = Some(rep.t_in_window);
        Ok(self)
    }
}

/// 3 + 2^{2/q−2}
fn kappa(q: f64) -> f64 {
    3.0 + (2.0 / q - 2.0).exp2()
}

fn check_t(t: f64) -> Result<()> {
    if !(t > 0.0 && t < T_MAX) {
        return Err(Error::Parameter(format!("t must lie in (0, 4/3), got {t}")));
    }
    Ok(())
}

/// `t − (κ − t)δ` written as `t(1 + δ) − κδ` with one fused rounding.
fn denominator(kappa: f64, t: f64, delta: f64) -> f64 {
    t.mul_add(1.0 + delta, -kappa * delta)
}

pub fn constants_c1_c2(q: f64, t: f64, delta: f64) -> Result<BoundConstants> {
    check_q(q)?;
    check_t(t)?;
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::Parameter(format!("delta must lie in [0, 1), got {delta}")));
    }
    let kap = kappa(q);
    let threshold = t / (kap - t);
    let den = denominator(kap, t, delta);
    let admissible = delta < threshold && den > 0.0;
    let t_tilde = t.max(t.sqrt());
    let (c1, c2) = if admissible {
        let lead = 1.0 + (1.0 / q - 1.0).exp2();
        let c1 = lead * t_tilde * (1.0 + delta).sqrt() / den;
        let c2 = lead * ((1.0 / q).exp2() * delta + (den * delta).sqrt()) / den + 1.0;
        (Some(c1), Some(c2))
    } else {
        (None, None)
    };
    Ok(BoundConstants {
        q,
        t,
        t_tilde,
        delta,
        threshold,
        denominator: den,
        c1,
        c2,
        admissible,
        marginal: (delta - threshold).abs() <= MARGINAL_TOL,
        theta_condition_ok: None,
    })
}

/// The q = 1 specialization.
pub fn constants_c3_c4(t: f64, delta: f64) -> Result<(f64, f64)> {
    check_t(t)?;
    if !(delta >= 0.0 && delta < t / (4.0 - t)) {
        return Err(Error::Parameter(format!(
            "delta must lie in [0, t/(4 − t)) = [0, {}), got {delta}",
            t / (4.0 - t)
        )));
    }
    let den = denominator(4.0, t, delta);
    let c3 = 2.0 * t.max(t.sqrt()) * (1.0 + delta).sqrt() / den;
    let c4 = (4.0 * delta + 2.0 * (den * delta).sqrt()) / den + 1.0;
    Ok((c3, c4))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub q: f64,
    pub t: f64,
    /// κ(1 − θ−)/(2 − θ−)
    pub lower_minus: f64,
    /// κ(θ+ − 1)/θ+
    pub lower_plus: f64,
    pub lower: f64,
    pub upper: f64,
    pub window_nonempty: bool,
    pub t_in_window: bool,
    /// max{1 − θ−, θ+ − 1}
    pub delta_bound: f64,
}

pub fn admissibility_check(q: f64, t: f64, theta_minus: f64, theta_plus: f64) -> Result<AdmissibilityReport> {
    check_q(q)?;
    for (name, v) in [("theta_minus", theta_minus), ("theta_plus", theta_plus)] {
        if !(v > 0.0 && v < 2.0) {
            return Err(Error::Parameter(format!("{name} must lie in (0, 2), got {v}")));
        }
    }
    let kap = kappa(q);
    let lower_minus = kap * (1.0 - theta_minus) / (2.0 - theta_minus);
    let lower_plus = kap * (theta_plus - 1.0) / theta_plus;
    let lower = lower_minus.max(lower_plus);
    Ok(AdmissibilityReport {
        q,
        t,
        lower_minus,
        lower_plus,
        lower,
        upper: T_MAX,
        window_nonempty: lower < T_MAX,
        t_in_window: lower < t && t < T_MAX,
        delta_bound: (1.0 - theta_minus).max(theta_plus - 1.0),
    })
}

/// `c₁ε + c₂·2^{2/q−1}·σ / k^{1/q−1/2}`
pub fn bound_rhs(consts: &BoundConstants, eps: f64, sigma: f64, k: usize) -> Result<f64> {
    let (Some(c1), Some(c2)) = (consts.c1, consts.c2) else {
        return Err(Error::Domain("bound constants are not admissible".into()));
    };
    if k == 0 {
        return Err(Error::Parameter("k must be >= 1".into()));
    }
    if !(eps >= 0.0 && sigma >= 0.0) {
        return Err(Error::Parameter("eps and sigma must be nonnegative".into()));
    }
    let q = consts.q;
    let scale = (2.0 / q - 1.0).exp2() / (k as f64).powf(1.0 / q - 0.5);
    Ok(c1 * eps + c2 * scale * sigma)
}

/// Checks `‖x̂ ∓ x₀‖ ≤ c₁ε + c₂…` for one solved instance. Inadmissible
/// δ yields a not-applicable record rather than an error.
pub fn verify_recovery_bound(
    p: &PhaselessProblem,
    result: &SolverResult,
    rip: &RipReport,
    t: f64,
) -> Result<TrialRecord> {
    let truth = p
        .truth
        .as_ref()
        .ok_or_else(|| Error::Config("bound verification needs the true signal".into()))?;
    let k = truth.coefficients.k;
    let order = drip_order_for_t(t, k);
    if rip.order != order {
        return Err(Error::Parameter(format!(
            "rip order {} does not match ceil(t·k) = {order}",
            rip.order
        )));
    }
    let mut rec = TrialRecord {
        m: p.m(),
        n: p.n(),
        big_n: p.frame.len(),
        k,
        q: p.q,
        t,
        eps: p.eps,
        order,
        delta: Some(rip.delta),
        theta_minus: Some(rip.theta_minus),
        theta_plus: Some(rip.theta_plus),
        delta_theta_bound: Some(rip.theta_delta_bound()),
        method: Some(result.method.to_string()),
        objective: Some(result.objective),
        feasibility: Some(result.feasibility),
        ..TrialRecord::default()
    };
    rec.lhs = Some(phase_distance(&result.x_hat, &truth.x, Field::Real)?);
    if rip.delta >= 1.0 {
        rec.status = Some(TrialStatus::NotApplicable);
        rec.reason = format!("delta = {} >= 1", rip.delta);
        return Ok(rec);
    }
    let mut consts = constants_c1_c2(p.q, t, rip.delta)?;
    if let Ok(with) = consts.with_thetas(rip.theta_minus, rip.theta_plus) {
        consts = with;
    }
    rec.admissible = consts.admissible;
    rec.marginal = consts.marginal;
    rec.theta_condition_ok = consts.theta_condition_ok;
    rec.c1 = consts.c1;
    rec.c2 = consts.c2;
    let sigma = best_k_term_error(p.frame.analyze(&truth.x).as_slice(), k, p.q)?;
    rec.sigma = Some(sigma);
    if !consts.admissible {
        rec.status = Some(TrialStatus::NotApplicable);
        rec.reason = format!("delta = {} not below threshold {}", rip.delta, consts.threshold);
        return Ok(rec);
    }
    let rhs = bound_rhs(&consts, p.eps, sigma, k)?;
    rec.rhs = Some(rhs);
    let lhs = rec.lhs.expect("set above");
    rec.status = Some(if lhs <= rhs + PASS_TOL { TrialStatus::Pass } else { TrialStatus::Fail });
    Ok(rec)
}
