//! Phaseless forward model `b = |A x₀| + e` and phase-invariant distances.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frames::TightFrame;
use crate::rng;
use crate::signals::{self, DictionarySparseSignal};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "level")]
pub enum Noise {
    None,
    /// i.i.d. N(0, σ²) per measurement.
    Gaussian(f64),
    /// Uniform in the ℓ2 ball of the given radius.
    Bounded(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    Real,
    Complex,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub b: DVector<f64>,
    pub e: DVector<f64>,
    pub eps_realized: f64,
}

/// A phaseless recovery instance for the ℓq-analysis model.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaselessProblem {
    pub a: DMatrix<f64>,
    pub frame: TightFrame,
    /// Observed magnitudes; may hold negative entries under noise.
    pub b: DVector<f64>,
    pub eps: f64,
    pub q: f64,
    pub truth: Option<DictionarySparseSignal>,
}

impl PhaselessProblem {
    pub fn new(
        a: DMatrix<f64>,
        frame: TightFrame,
        b: DVector<f64>,
        eps: f64,
        q: f64,
    ) -> Result<Self> {
        if a.ncols() != frame.n() {
            return Err(Error::Dimension(format!(
                "A has {} columns but the frame lives in R^{}",
                a.ncols(),
                frame.n()
            )));
        }
        if a.nrows() != b.len() {
            return Err(Error::Dimension(format!(
                "A has {} rows but b has {} entries",
                a.nrows(),
                b.len()
            )));
        }
        if !(eps >= 0.0) {
            return Err(Error::Parameter(format!("eps must be >= 0, got {eps}")));
        }
        signals::check_q(q)?;
        if eps == 0.0 && b.iter().any(|v| *v < 0.0) {
            return Err(Error::Domain("noiseless magnitudes must be nonnegative".into()));
        }
        Ok(PhaselessProblem {
            a,
            frame,
            b,
            eps,
            q,
            truth: None,
        })
    }

    pub fn with_truth(mut self, truth: DictionarySparseSignal) -> Result<Self> {
        if truth.x.len() != self.a.ncols() {
            return Err(Error::Dimension("truth length does not match A".into()));
        }
        self.truth = Some(truth);
        Ok(self)
    }

    /// Simulates `b = |A x₀| + e` for a known signal.
    pub fn simulate(
        a: DMatrix<f64>,
        frame: TightFrame,
        truth: DictionarySparseSignal,
        noise: Noise,
        q: f64,
        seed: u64,
    ) -> Result<Self> {
        let fwd = forward_phaseless(&a, &truth.x, noise, seed)?;
        let eps = match noise {
            Noise::None => 0.0,
            Noise::Bounded(r) => r,
            Noise::Gaussian(_) => fwd.eps_realized,
        };
        let mut p = PhaselessProblem {
            a,
            frame,
            b: fwd.b,
            eps,
            q,
            truth: None,
        };
        signals::check_q(q)?;
        p = p.with_truth(truth)?;
        Ok(p)
    }

    pub fn m(&self) -> usize {
        self.a.nrows()
    }

    pub fn n(&self) -> usize {
        self.a.ncols()
    }

    /// `‖D* x‖_q^q`
    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        signals::analysis_lq(self.frame.analyze(x).as_slice(), self.q)
    }

    /// `‖|A x| − b‖₂`
    pub fn feasibility(&self, x: &DVector<f64>) -> f64 {
        let ax = &self.a * x;
        ax.iter()
            .zip(self.b.iter())
            .map(|(v, b)| (v.abs() - b).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// i.i.d. N(0, 1/m) entries.
pub fn gaussian_matrix(m: usize, n: usize, seed: u64) -> DMatrix<f64> {
    let mut r = rng::seeded(seed);
    let scale = 1.0 / (m.max(1) as f64).sqrt();
    DMatrix::from_fn(m, n, |_, _| {
        let g: f64 = StandardNormal.sample(&mut r);
        scale * g
    })
}

pub fn forward_phaseless(
    a: &DMatrix<f64>,
    x0: &DVector<f64>,
    noise: Noise,
    seed: u64,
) -> Result<Forward> {
    if a.ncols() != x0.len() {
        return Err(Error::Dimension(format!(
            "A has {} columns, x0 has length {}",
            a.ncols(),
            x0.len()
        )));
    }
    let m = a.nrows();
    let clean = (a * x0).map(f64::abs);
    let mut r = rng::seeded(seed);
    let e = match noise {
        Noise::None => DVector::zeros(m),
        Noise::Gaussian(sigma) => {
            let dist = Normal::new(0.0, sigma)
                .map_err(|_| Error::Parameter(format!("invalid noise sigma {sigma}")))?;
            DVector::from_fn(m, |_, _| dist.sample(&mut r))
        }
        Noise::Bounded(radius) => {
            if !(radius >= 0.0) {
                return Err(Error::Parameter(format!("invalid noise radius {radius}")));
            }
            if m == 0 || radius == 0.0 {
                DVector::zeros(m)
            } else {
                let dir = DVector::from_fn(m, |_, _| {
                    let g: f64 = StandardNormal.sample(&mut r);
                    g
                });
                let norm = dir.norm();
                let u: f64 = r.gen();
                let rad = radius * u.powf(1.0 / m as f64);
                if norm == 0.0 {
                    DVector::zeros(m)
                } else {
                    dir * (rad / norm)
                }
            }
        }
    };
    let eps_realized = e.norm();
    Ok(Forward {
        b: clean + &e,
        e,
        eps_realized,
    })
}

/// Distance modulo the global sign (real) or global phase (complex).
///
/// Real inputs have the same distance under either field since the optimal
/// unimodular factor of a real inner product is ±1.
pub fn phase_distance(x_hat: &DVector<f64>, x0: &DVector<f64>, field: Field) -> Result<f64> {
    if x_hat.len() != x0.len() {
        return Err(Error::Dimension(format!(
            "lengths differ: {} vs {}",
            x_hat.len(),
            x0.len()
        )));
    }
    Ok(match field {
        Field::Real => (x_hat - x0).norm().min((x_hat + x0).norm()),
        Field::Complex => {
            let xc = x_hat.map(|v| Complex64::new(v, 0.0));
            let yc = x0.map(|v| Complex64::new(v, 0.0));
            phase_distance_complex(&xc, &yc)?
        }
    })
}

/// `min_{|c|=1} ‖x̂ − c x₀‖₂ = sqrt(‖x̂‖² + ‖x₀‖² − 2|⟨x̂, x₀⟩|)`, evaluated at
/// the optimal phase to avoid cancellation.
pub fn phase_distance_complex(
    x_hat: &DVector<Complex64>,
    x0: &DVector<Complex64>,
) -> Result<f64> {
    if x_hat.len() != x0.len() {
        return Err(Error::Dimension(format!(
            "lengths differ: {} vs {}",
            x_hat.len(),
            x0.len()
        )));
    }
    // ⟨x₀, x̂⟩ = x₀ᴴ x̂; the minimizing c is its phase.
    let inner: Complex64 = x0.iter().zip(x_hat.iter()).map(|(a, b)| a.conj() * b).sum();
    let c = if inner.norm() == 0.0 {
        Complex64::new(1.0, 0.0)
    } else {
        inner / inner.norm()
    };
    Ok(x_hat
        .iter()
        .zip(x0.iter())
        .map(|(a, b)| (a - c * b).norm_sqr())
        .sum::<f64>()
        .sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn forward_examples() {
        let a = DMatrix::identity(2, 2);
        let f = forward_phaseless(&a, &DVector::from_vec(vec![1.0, -2.0]), Noise::None, 0).unwrap();
        assert_eq!(f.b.as_slice(), &[1.0, 2.0]);
        assert_eq!(f.eps_realized, 0.0);
        let f = forward_phaseless(&a, &DVector::zeros(2), Noise::None, 0).unwrap();
        assert_eq!(f.b.norm(), 0.0);
        assert!(matches!(
            forward_phaseless(&a, &DVector::zeros(3), Noise::None, 0),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn bounded_noise_stays_in_ball() {
        for seed in 0..200 {
            let a = gaussian_matrix(6, 3, seed);
            let x = DVector::from_vec(vec![1.0, -0.5, 2.0]);
            let f = forward_phaseless(&a, &x, Noise::Bounded(0.1), seed + 1000).unwrap();
            let clean = (&a * &x).map(f64::abs);
            assert!((f.b - clean).norm() <= 0.1 + 1e-15);
            assert!(f.eps_realized <= 0.1);
        }
    }

    #[test]
    fn distance_examples() {
        let x = DVector::from_vec(vec![1.0, -3.0, 0.5]);
        assert_eq!(phase_distance(&(-&x), &x, Field::Real).unwrap(), 0.0);
        let e1 = DVector::from_vec(vec![1.0, 0.0]);
        let e2 = DVector::from_vec(vec![0.0, 1.0]);
        let d = phase_distance(&e1, &e2, Field::Real).unwrap();
        assert!((d - 2f64.sqrt()).abs() < 1e-15);
        let xc = DVector::from_vec(vec![Complex64::new(1.0, 2.0), Complex64::new(-0.5, 0.3)]);
        let ix = xc.map(|v| v * Complex64::i());
        assert!(phase_distance_complex(&ix, &xc).unwrap() < 1e-12);
    }

    proptest! {
        #[test]
        fn unimodular_factor_is_invisible(
            re in prop::collection::vec(-3.0f64..3.0, 4),
            im in prop::collection::vec(-3.0f64..3.0, 4),
            angle in 0.0f64..std::f64::consts::TAU,
        ) {
            let x = DVector::from_fn(4, |i, _| Complex64::new(re[i], im[i]));
            let c = Complex64::from_polar(1.0, angle);
            let y = x.map(|v| v * c);
            prop_assert!(phase_distance_complex(&x, &y).unwrap() < 1e-12);
        }

        #[test]
        fn symmetric_and_dominated(
            x in prop::collection::vec(-3.0f64..3.0, 5),
            y in prop::collection::vec(-3.0f64..3.0, 5),
        ) {
            let (x, y) = (DVector::from_vec(x), DVector::from_vec(y));
            for field in [Field::Real, Field::Complex] {
                let d1 = phase_distance(&x, &y, field).unwrap();
                let d2 = phase_distance(&y, &x, field).unwrap();
                prop_assert!((d1 - d2).abs() < 1e-12);
                prop_assert!(d1 <= (&x - &y).norm() + 1e-12);
            }
            let closed = (x.norm_squared() + y.norm_squared() - 2.0 * x.dot(&y).abs()).max(0.0).sqrt();
            prop_assert!((phase_distance(&x, &y, Field::Real).unwrap() - closed).abs() < 1e-7);
        }

        #[test]
        fn sign_flip_gives_same_magnitudes(seed in 0u64..1000) {
            let a = gaussian_matrix(5, 3, seed);
            let x = DVector::from_fn(3, |i, _| (i as f64 + 1.0) * if seed % 2 == 0 { 1.0 } else { -0.7 });
            let p = forward_phaseless(&a, &x, Noise::None, 1).unwrap();
            let n = forward_phaseless(&a, &(-&x), Noise::None, 1).unwrap();
            prop_assert_eq!(p.b, n.b);
        }
    }
}
