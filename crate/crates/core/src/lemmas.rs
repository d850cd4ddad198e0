//! Executable forms of the auxiliary combinatorial and convexity lemmas the
//! stability analysis relies on. Each checker returns both sides of the
//! inequality or identity so that failures can be inspected.

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{binomial, combinations};
use crate::rng;
use crate::signals;

/// Largest index-set size accepted by [`subset_sum_identities`].
pub const MAX_SUBSET_SUM_K: usize = 12;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsetSums {
    /// Σ_i Σ_{p∈T_i} v_p, summed over every l-subset T_i of T.
    pub lhs1: Vec<i64>,
    /// C(k−1, l−1) Σ_p v_p
    pub rhs1: Vec<i64>,
    /// Σ_i Σ_{p≠q∈T_i} ⟨v_p, v_q⟩ over ordered pairs; `None` when l < 2.
    pub lhs2: Option<i64>,
    /// C(k−2, l−2) Σ_{p≠q} ⟨v_p, v_q⟩; `None` when l < 2.
    pub rhs2: Option<i64>,
}

/// Evaluates both subset-sum identities by explicit enumeration of every
/// l-subset of the k given vectors (all of equal dimension).
pub fn subset_sum_identities(k: usize, l: usize, v: &[Vec<i64>]) -> Result<SubsetSums> {
    if k > MAX_SUBSET_SUM_K {
        return Err(Error::Resource(format!(
            "k = {k} exceeds the enumeration guard {MAX_SUBSET_SUM_K}"
        )));
    }
    if l < 1 || l > k {
        return Err(Error::Parameter(format!("need 1 <= l <= k, got l={l}, k={k}")));
    }
    if v.len() != k {
        return Err(Error::Dimension(format!("expected {k} vectors, got {}", v.len())));
    }
    let dim = v[0].len();
    if v.iter().any(|x| x.len() != dim) {
        return Err(Error::Dimension("vectors differ in length".into()));
    }
    let dot = |a: &[i64], b: &[i64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<i64>();
    let pair_sum = |idx: &[usize]| -> i64 {
        let mut s = 0;
        for &p in idx {
            for &q in idx {
                if p != q {
                    s += dot(&v[p], &v[q]);
                }
            }
        }
        s
    };

    let mut lhs1 = vec![0i64; dim];
    let mut lhs2 = 0i64;
    for subset in combinations(k, l) {
        for &p in &subset {
            for (acc, x) in lhs1.iter_mut().zip(&v[p]) {
                *acc += x;
            }
        }
        if l >= 2 {
            lhs2 += pair_sum(&subset);
        }
    }
    let c1 = binomial(k - 1, l - 1) as i64;
    let mut rhs1 = vec![0i64; dim];
    for x in v {
        for (acc, xi) in rhs1.iter_mut().zip(x) {
            *acc += c1 * xi;
        }
    }
    let (lhs2, rhs2) = if l >= 2 {
        let all: Vec<usize> = (0..k).collect();
        (Some(lhs2), Some(binomial(k - 2, l - 2) as i64 * pair_sum(&all)))
    } else {
        (None, None)
    };
    Ok(SubsetSums {
        lhs1,
        rhs1,
        lhs2,
        rhs2,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecompositionBranch {
    /// x is already k-sparse.
    Trivial,
    /// Cyclic windows of k support entries, scaled by r/k; meets (r/k)‖x‖₂².
    CyclicWindows,
    /// Systematic sampling with inclusion probabilities |x_i|^q/α^q; meets
    /// α^q‖x‖_{2−q}^{2−q}.
    SystematicSampling,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvexDecomposition {
    pub weights: Vec<f64>,
    pub atoms: Vec<DVector<f64>>,
    pub k: usize,
    pub branch: DecompositionBranch,
    /// min{(r/k)‖x‖₂², α^q‖x‖_{2−q}^{2−q}}
    pub bound: f64,
}

impl ConvexDecomposition {
    pub fn reconstruct(&self) -> DVector<f64> {
        let len = self.atoms.first().map_or(0, |a| a.len());
        self.weights
            .iter()
            .zip(&self.atoms)
            .fold(DVector::zeros(len), |acc, (w, u)| acc + u * *w)
    }

    /// Σ λ_i ‖u_i‖₂²
    pub fn weighted_energy(&self) -> f64 {
        self.weights
            .iter()
            .zip(&self.atoms)
            .map(|(w, u)| w * u.norm_squared())
            .sum()
    }
}

/// Writes `x` (with r = ‖x‖₀ ≥ k, ‖x‖_q^q ≤ kα^q, ‖x‖_∞ ≤ α) as a convex
/// combination of k-sparse vectors whose weighted energy meets the smaller
/// of the two classical bounds.
pub fn sparse_convex_decomposition(
    x: &DVector<f64>,
    k: usize,
    alpha: f64,
    q: f64,
) -> Result<ConvexDecomposition> {
    signals::check_q(q)?;
    if !(alpha > 0.0) {
        return Err(Error::Domain(format!("alpha must be positive, got {alpha}")));
    }
    if k < 1 {
        return Err(Error::Domain("k must be at least 1".into()));
    }
    let support: Vec<usize> = (0..x.len()).filter(|&i| x[i] != 0.0).collect();
    let r = support.len();
    if r < k {
        return Err(Error::Domain(format!("‖x‖₀ = {r} is below k = {k}")));
    }
    let inf = x.amax();
    if inf > alpha * (1.0 + 1e-12) {
        return Err(Error::Domain(format!("‖x‖_∞ = {inf} exceeds alpha = {alpha}")));
    }
    let alpha_q = alpha.powf(q);
    let lq = signals::lq_unchecked(x.as_slice(), q);
    if lq > k as f64 * alpha_q * (1.0 + 1e-12) {
        return Err(Error::Domain(format!(
            "‖x‖_q^q = {lq} exceeds k·alpha^q = {}",
            k as f64 * alpha_q
        )));
    }

    let energy_windows = r as f64 / k as f64 * x.norm_squared();
    let energy_sampling: f64 = support
        .iter()
        .map(|&i| alpha_q * x[i].abs().powf(2.0 - q))
        .sum();
    let bound = energy_windows.min(energy_sampling);

    if r == k {
        return Ok(ConvexDecomposition {
            weights: vec![1.0],
            atoms: vec![x.clone()],
            k,
            branch: DecompositionBranch::Trivial,
            bound,
        });
    }
    let (weights, atoms, branch) = if energy_windows <= energy_sampling {
        let (w, a) = cyclic_windows(x, &support, k);
        (w, a, DecompositionBranch::CyclicWindows)
    } else {
        let (w, a) = systematic_sampling(x, &support, k, alpha_q, q);
        (w, a, DecompositionBranch::SystematicSampling)
    };
    Ok(ConvexDecomposition {
        weights,
        atoms,
        k,
        branch,
        bound,
    })
}

fn cyclic_windows(x: &DVector<f64>, support: &[usize], k: usize) -> (Vec<f64>, Vec<DVector<f64>>) {
    let r = support.len();
    let scale = r as f64 / k as f64;
    let atoms = (0..r)
        .map(|start| {
            let mut u = DVector::zeros(x.len());
            for off in 0..k {
                let i = support[(start + off) % r];
                u[i] = scale * x[i];
            }
            u
        })
        .collect();
    (vec![1.0 / r as f64; r], atoms)
}

fn systematic_sampling(
    x: &DVector<f64>,
    support: &[usize],
    k: usize,
    alpha_q: f64,
    q: f64,
) -> (Vec<f64>, Vec<DVector<f64>>) {
    let mut probs: Vec<f64> = support
        .iter()
        .map(|&i| (x[i].abs().powf(q) / alpha_q).min(1.0))
        .collect();
    let total: f64 = probs.iter().sum();
    if total > k as f64 {
        // only reachable through the 1e-12 admission slack
        for p in &mut probs {
            *p *= k as f64 / total;
        }
    }
    let values: Vec<f64> = support
        .iter()
        .zip(&probs)
        .map(|(&i, p)| x[i] / p)
        .collect();
    let mut cum = vec![0.0; probs.len() + 1];
    for (j, p) in probs.iter().enumerate() {
        cum[j + 1] = cum[j] + p;
    }
    let mut breaks: Vec<f64> = cum.iter().map(|c| c - c.floor()).collect();
    breaks.push(0.0);
    breaks.push(1.0);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();

    let mut weights = Vec::new();
    let mut atoms = Vec::new();
    for pair in breaks.windows(2) {
        let len = pair[1] - pair[0];
        if len <= 0.0 {
            continue;
        }
        let u_mid = 0.5 * (pair[0] + pair[1]);
        let mut atom = DVector::zeros(x.len());
        for (j, &i) in support.iter().enumerate() {
            let shift = (cum[j] - u_mid).ceil();
            if u_mid + shift < cum[j + 1] {
                atom[i] = values[j];
            }
        }
        weights.push(len);
        atoms.push(atom);
    }
    (weights, atoms)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailBound {
    /// Σ_{i>k} b_i^ω
    pub lhs: f64,
    /// k·[(Σ_{i≤k} b_i^ω / k)^{1/ω} + d/k]^ω
    pub rhs: f64,
    pub holds: bool,
}

/// Tail-versus-head power inequality for a nonincreasing nonnegative
/// sequence whose tail mass is dominated by head mass plus `d`.
pub fn tail_power_bound_check(b: &[f64], k: usize, d: f64, omega: f64) -> Result<TailBound> {
    if k < 1 || k > b.len() {
        return Err(Error::Domain(format!(
            "need 1 <= k <= r, got k={k}, r={}",
            b.len()
        )));
    }
    if !(omega >= 1.0) {
        return Err(Error::Domain(format!("omega must be >= 1, got {omega}")));
    }
    if !(d >= 0.0) {
        return Err(Error::Domain(format!("d must be >= 0, got {d}")));
    }
    if b.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::Domain("entries must be nonnegative".into()));
    }
    if b.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::Domain("sequence must be nonincreasing".into()));
    }
    let head: f64 = b[..k].iter().sum();
    let tail: f64 = b[k..].iter().sum();
    if head + d < tail * (1.0 - 1e-12) {
        return Err(Error::Domain(format!(
            "hypothesis fails: head {head} + d {d} < tail {tail}"
        )));
    }
    let kf = k as f64;
    let lhs: f64 = b[k..].iter().map(|v| v.powf(omega)).sum();
    let head_pow: f64 = b[..k].iter().map(|v| v.powf(omega)).sum();
    let rhs = kf * ((head_pow / kf).powf(1.0 / omega) + d / kf).powf(omega);
    Ok(TailBound {
        lhs,
        rhs,
        holds: lhs <= rhs + 1e-12 * rhs.max(1.0),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaCheck {
    pub name: String,
    pub cases: usize,
    pub failures: usize,
    /// Description of the first failing case, if any.
    pub first_failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfCheckReport {
    pub seed: u64,
    pub checks: Vec<LemmaCheck>,
    pub pass: bool,
}

fn tally(name: &str, cases: impl Iterator<Item = std::result::Result<(), String>>) -> LemmaCheck {
    let mut check = LemmaCheck {
        name: name.into(),
        cases: 0,
        failures: 0,
        first_failure: None,
    };
    for c in cases {
        check.cases += 1;
        if let Err(msg) = c {
            check.failures += 1;
            check.first_failure.get_or_insert(msg);
        }
    }
    check
}

/// Seeded randomized check of all three lemmas: subset-sum identities for
/// k ≤ 8, 1000 decompositions and 10000 tail-bound instances.
pub fn selfcheck_lemmas(seed: u64) -> SelfCheckReport {
    let mut r = rng::seeded(seed);

    let mut subset_cases = Vec::new();
    for _ in 0..100 {
        let k = r.gen_range(1..=8);
        let dim = r.gen_range(1..=3);
        let v: Vec<Vec<i64>> = (0..k).map(|_| (0..dim).map(|_| r.gen_range(-50..=50)).collect()).collect();
        for l in 1..=k {
            subset_cases.push((k, l, v.clone()));
        }
    }
    let subset = tally(
        "subset_sum_identities",
        subset_cases.into_iter().map(|(k, l, v)| {
            let s = subset_sum_identities(k, l, &v).map_err(|e| e.to_string())?;
            if s.lhs1 != s.rhs1 || s.lhs2 != s.rhs2 {
                return Err(format!("k={k}, l={l}: {s:?}"));
            }
            Ok(())
        }),
    );

    let decomposition = tally(
        "sparse_convex_decomposition",
        (0..1000).map(|_| {
            let len = r.gen_range(1..=10);
            let nnz = r.gen_range(1..=len);
            let mut x = DVector::zeros(len);
            for i in rand::seq::index::sample(&mut r, len, nnz) {
                let mag: f64 = r.gen_range(0.05..3.0);
                x[i] = if r.gen_bool(0.5) { mag } else { -mag };
            }
            let k = r.gen_range(1..=nnz);
            let q: f64 = r.gen_range(0.05..=1.0);
            let lq = signals::lq_unchecked(x.as_slice(), q);
            let alpha = x.amax().max((lq / k as f64).powf(1.0 / q)) * r.gen_range(1.0..1.5);
            let dec = sparse_convex_decomposition(&x, k, alpha, q).map_err(|e| e.to_string())?;
            let wsum: f64 = dec.weights.iter().sum();
            let sparse = dec.atoms.iter().all(|u| u.iter().filter(|v| **v != 0.0).count() <= k);
            let positive = dec.weights.iter().all(|w| *w > 0.0);
            let recon = (dec.reconstruct() - &x).norm() <= 1e-10 * x.norm();
            let energy = dec.weighted_energy() <= dec.bound + 1e-9;
            if (wsum - 1.0).abs() > 1e-12 || !sparse || !positive || !recon || !energy {
                return Err(format!("x={:?}, k={k}, alpha={alpha}, q={q}", x.as_slice()));
            }
            Ok(())
        }),
    );

    let tail = tally(
        "tail_power_bound_check",
        (0..10000).map(|_| {
            let len = r.gen_range(1..=10);
            let mut b: Vec<f64> = (0..len).map(|_| r.gen_range(0.0..5.0)).collect();
            b.sort_by(|x, y| y.total_cmp(x));
            let k = r.gen_range(1..=len);
            let head: f64 = b[..k].iter().sum();
            let tail: f64 = b[k..].iter().sum();
            let d = (tail - head).max(0.0) + r.gen_range(0.0..1.0);
            let omega = r.gen_range(1.0..4.0);
            let t = tail_power_bound_check(&b, k, d, omega).map_err(|e| e.to_string())?;
            if !t.holds {
                return Err(format!("b={b:?}, k={k}, d={d}, omega={omega}: {t:?}"));
            }
            Ok(())
        }),
    );

    let checks = vec![subset, decomposition, tail];
    SelfCheckReport {
        seed,
        pass: checks.iter().all(|c| c.failures == 0),
        checks,
    }
}
