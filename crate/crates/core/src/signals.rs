//! Dictionary-sparse signals, ℓq quasi-norms and best k-term errors.

use nalgebra::DVector;
use rand::seq::index;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frames::TightFrame;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MagnitudeLaw {
    Gaussian,
    Rademacher,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseCoefficients {
    #[serde(with = "crate::serde_vec::vector")]
    pub z: DVector<f64>,
    pub support: Vec<usize>,
    pub k: usize,
}

impl SparseCoefficients {
    pub fn new(z: DVector<f64>, support: Vec<usize>, k: usize) -> Result<Self> {
        if support.len() > k {
            return Err(Error::Parameter(format!(
                "support of size {} exceeds budget {k}",
                support.len()
            )));
        }
        if let Some(&bad) = support.iter().find(|&&i| i >= z.len()) {
            return Err(Error::Dimension(format!("support index {bad} out of range")));
        }
        if let Some(i) = (0..z.len()).find(|i| z[*i] != 0.0 && !support.contains(i)) {
            return Err(Error::Domain(format!("z is nonzero off the support at {i}")));
        }
        Ok(SparseCoefficients { z, support, k })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DictionarySparseSignal {
    #[serde(with = "crate::serde_vec::vector")]
    pub x: DVector<f64>,
    #[serde(flatten)]
    pub coefficients: SparseCoefficients,
    pub frame_id: String,
}

pub(crate) fn check_q(q: f64) -> Result<()> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::Parameter(format!("q must lie in (0, 1], got {q}")));
    }
    Ok(())
}

/// `Σ |v_i|^q`, with `0^q = 0`.
pub fn lq_quasinorm(v: &[f64], q: f64) -> Result<f64> {
    check_q(q)?;
    Ok(lq_unchecked(v, q))
}

pub(crate) fn lq_unchecked(v: &[f64], q: f64) -> f64 {
    if q == 1.0 {
        return v.iter().map(|x| x.abs()).sum();
    }
    v.iter()
        .filter(|x| **x != 0.0)
        .map(|x| x.abs().powf(q))
        .sum()
}

/// Relative magnitude below which a computed analysis coefficient counts as
/// an exact zero. t ↦ t^q has infinite slope at 0, so round-off of order
/// 1e-16 would otherwise add about 1e-8 per coefficient at q = 1/2.
pub const ROUNDOFF_ZERO: f64 = 1e-12;

/// `Σ |y_i|^q` over analysis coefficients, with entries at or below
/// `ROUNDOFF_ZERO · max|y|` treated as zero.
pub fn analysis_lq(y: &[f64], q: f64) -> f64 {
    let cut = ROUNDOFF_ZERO * y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    y.iter()
        .filter(|v| v.abs() > cut)
        .map(|v| if q == 1.0 { v.abs() } else { v.abs().powf(q) })
        .sum()
}

/// σ_k(z)_q: the ℓq quasi-norm (not its q-th power) of `z` with its `k`
/// largest-magnitude entries removed. Ties go to the lowest index.
pub fn best_k_term_error(z: &[f64], k: usize, q: f64) -> Result<f64> {
    check_q(q)?;
    if k > z.len() {
        return Err(Error::Parameter(format!(
            "k = {k} exceeds vector length {}",
            z.len()
        )));
    }
    let mut order: Vec<usize> = (0..z.len()).collect();
    order.sort_by(|&a, &b| z[b].abs().total_cmp(&z[a].abs()).then(a.cmp(&b)));
    let tail: Vec<f64> = order[k..].iter().map(|&i| z[i]).collect();
    Ok(lq_unchecked(&tail, q).powf(1.0 / q))
}

/// Draws a k-sparse coefficient vector (uniform support, i.i.d. nonzeros)
/// and synthesizes `x = D z`.
pub fn sample_dictionary_sparse(
    frame: &TightFrame,
    k: usize,
    seed: u64,
    law: MagnitudeLaw,
) -> Result<DictionarySparseSignal> {
    let big_n = frame.len();
    if k > big_n {
        return Err(Error::Parameter(format!("k = {k} exceeds frame size {big_n}")));
    }
    let mut r = rng::seeded(seed);
    let mut support = index::sample(&mut r, big_n, k).into_vec();
    support.sort_unstable();
    let mut z = DVector::zeros(big_n);
    for &i in &support {
        z[i] = match law {
            MagnitudeLaw::Gaussian => {
                let v: f64 = StandardNormal.sample(&mut r);
                // a Gaussian draw of exactly zero would shrink the support
                if v == 0.0 {
                    f64::MIN_POSITIVE
                } else {
                    v
                }
            }
            MagnitudeLaw::Rademacher => {
                if r.gen::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
        };
    }
    let x = frame.synthesize(&z);
    Ok(DictionarySparseSignal {
        x,
        coefficients: SparseCoefficients { z, support, k },
        frame_id: frame.id().to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::{build_named_frame, NamedFrame};
    use crate::linalg::combinations;
    use proptest::prelude::*;

    #[test]
    fn quasinorm_examples() {
        assert_eq!(lq_quasinorm(&[0.0, 0.0], 0.3).unwrap(), 0.0);
        assert_eq!(lq_quasinorm(&[3.0, -4.0], 1.0).unwrap(), 7.0);
        assert!((lq_quasinorm(&[4.0, 9.0], 0.5).unwrap() - 5.0).abs() < 1e-15);
        assert!(matches!(lq_quasinorm(&[1.0], 0.0), Err(Error::Parameter(_))));
        assert!(matches!(lq_quasinorm(&[1.0], 1.5), Err(Error::Parameter(_))));
    }

    #[test]
    fn best_k_term_examples() {
        let z = [3.0, 1.0, -2.0, 0.0];
        assert_eq!(best_k_term_error(&z, 2, 1.0).unwrap(), 1.0);
        assert_eq!(best_k_term_error(&z, 3, 0.5).unwrap(), 0.0);
        let want = (1.0 + 2f64.sqrt()).powi(2);
        assert!((best_k_term_error(&z, 1, 0.5).unwrap() - want).abs() < 1e-12);
        assert!(matches!(best_k_term_error(&z, 5, 1.0), Err(Error::Parameter(_))));
    }

    fn brute_force_sigma(z: &[f64], k: usize, q: f64) -> f64 {
        combinations(z.len(), k)
            .into_iter()
            .map(|keep| {
                let rest: f64 = (0..z.len())
                    .filter(|i| !keep.contains(i))
                    .map(|i| if z[i] == 0.0 { 0.0 } else { z[i].abs().powf(q) })
                    .sum();
                rest.powf(1.0 / q)
            })
            .fold(f64::INFINITY, f64::min)
    }

    proptest! {
        #[test]
        fn sigma_matches_exhaustive_search(
            z in prop::collection::vec(-5.0f64..5.0, 1..=10),
            q in 0.05f64..=1.0,
            kk in 0usize..=10,
        ) {
            let k = kk.min(z.len());
            let got = best_k_term_error(&z, k, q).unwrap();
            let want = brute_force_sigma(&z, k, q);
            prop_assert!((got - want).abs() <= 1e-9 * want.max(1.0));
        }

        #[test]
        fn sigma_nonincreasing_in_k(
            z in prop::collection::vec(-5.0f64..5.0, 1..=12),
            q in 0.05f64..=1.0,
        ) {
            let n = z.len();
            let first = best_k_term_error(&z, 0, q).unwrap();
            let full = lq_quasinorm(&z, q).unwrap().powf(1.0 / q);
            prop_assert!((first - full).abs() <= 1e-12 * full.max(1.0));
            prop_assert_eq!(best_k_term_error(&z, n, q).unwrap(), 0.0);
            for k in 0..n {
                prop_assert!(best_k_term_error(&z, k + 1, q).unwrap()
                    <= best_k_term_error(&z, k, q).unwrap());
            }
        }

        #[test]
        fn q_triangle_inequality(
            pair in (1usize..8).prop_flat_map(|n| (
                prop::collection::vec(-3.0f64..3.0, n),
                prop::collection::vec(-3.0f64..3.0, n),
            )),
            q in 0.05f64..=1.0,
        ) {
            let (u, v) = pair;
            let sum: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a + b).collect();
            let lhs = lq_quasinorm(&sum, q).unwrap();
            let rhs = lq_quasinorm(&u, q).unwrap() + lq_quasinorm(&v, q).unwrap();
            prop_assert!(lhs <= rhs * (1.0 + 1e-12) + 1e-12);
        }
    }

    #[test]
    fn sampling_edge_cases() {
        let id = build_named_frame(NamedFrame::Identity, 4).unwrap();
        let s = sample_dictionary_sparse(&id, 0, 3, MagnitudeLaw::Gaussian).unwrap();
        assert_eq!(s.x.norm(), 0.0);
        let s = sample_dictionary_sparse(&id, 1, 3, MagnitudeLaw::Rademacher).unwrap();
        assert_eq!(s.x.iter().filter(|v| **v != 0.0).count(), 1);
        assert_eq!(s.x.norm(), 1.0);
        assert!(matches!(
            sample_dictionary_sparse(&id, 5, 3, MagnitudeLaw::Gaussian),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn duplicated_identity_contracts() {
        let f = build_named_frame(NamedFrame::DuplicatedIdentity, 3).unwrap();
        for seed in 0..50 {
            let s = sample_dictionary_sparse(&f, 1 + seed as usize % 6, seed, MagnitudeLaw::Gaussian)
                .unwrap();
            let z = &s.coefficients.z;
            let perp = f.d_perp() * z;
            assert!((s.x.norm_squared() + perp.norm_squared() - z.norm_squared()).abs() < 1e-12);
            assert!(s.x.norm() <= z.norm() + 1e-12);
        }
    }

    #[test]
    fn signal_json_record() {
        let f = build_named_frame(NamedFrame::Mercedes, 0).unwrap();
        let s = sample_dictionary_sparse(&f, 2, 1, MagnitudeLaw::Gaussian).unwrap();
        let v: serde_json::Value = serde_json::to_value(&s).unwrap();
        for key in ["x", "z", "support", "frame_id"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        let back: DictionarySparseSignal = serde_json::from_value(v).unwrap();
        assert_eq!(back, s);
    }
}
