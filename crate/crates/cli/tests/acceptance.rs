//! Acceptance suite. Each criterion prints one PASS/FAIL line; the process
//! exits nonzero if any criterion fails.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rand::seq::index;
use rand::Rng;

use dictpr::bounds::{constants_c1_c2, constants_c3_c4};
use dictpr::frames::{build_named_frame, build_parseval_random, NamedFrame, TightFrame};
use dictpr::harness::{enumerate_cells, run_bound_trial, ExperimentConfig};
use dictpr::lemmas::{sparse_convex_decomposition, subset_sum_identities, tail_power_bound_check};
use dictpr::linalg::{combinations, select_cols, select_rows};
use dictpr::measurement::{gaussian_matrix, phase_distance, Field, Noise, PhaselessProblem};
use dictpr::nsp::{nsp_real_falsify, FalsifyOptions, LambdaMode};
use dictpr::record::TrialStatus;
use dictpr::rip::{drip_constant, sdrip_constants};
use dictpr::rng::seeded;
use dictpr::signals::{sample_dictionary_sparse, MagnitudeLaw};
use dictpr::solver::solve_oracle_noiseless;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

// ---------------------------------------------------------------- criterion 1

fn frame_axioms() -> Verdict {
    let mut r = seeded(1);
    let mut worst = 0.0f64;
    for i in 0..100u64 {
        let n = r.gen_range(1..=16);
        let big_n = r.gen_range(n..=32);
        let f = build_parseval_random(n, big_n, i).unwrap();
        let d = f.d();
        worst = worst.max((d * d.transpose() - DMatrix::identity(n, n)).amax());
        let mut stacked = DMatrix::zeros(big_n, big_n);
        stacked.rows_mut(0, n).copy_from(d);
        stacked.rows_mut(n, big_n - n).copy_from(f.d_perp());
        worst = worst.max((&stacked * stacked.transpose() - DMatrix::identity(big_n, big_n)).amax());
        for _ in 0..10 {
            let z = DVector::from_fn(big_n, |_, _| r.gen_range(-1.0..1.0));
            let split = (d * &z).norm_squared() + (f.d_perp() * &z).norm_squared();
            worst = worst.max((z.norm_squared() - split).abs() / z.norm_squared());
            let x = DVector::from_fn(n, |_, _| r.gen_range(-1.0..1.0));
            worst = worst.max((x.norm_squared() - (d.transpose() * &x).norm_squared()).abs() / x.norm_squared());
        }
    }
    verdict(worst < 1e-9, format!("max relative error {worst:.2e} over 100 frames"))
}

// ---------------------------------------------------------------- criterion 2

fn binom(n: i64, k: i64) -> i64 {
    if k < 0 || k > n {
        return 0;
    }
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

fn lemma_suite() -> Verdict {
    let mut r = seeded(2);
    let mut identity_cases = 0;
    for _ in 0..100 {
        let k = r.gen_range(1..=8usize);
        let dim = r.gen_range(1..=3);
        let v: Vec<Vec<i64>> = (0..k).map(|_| (0..dim).map(|_| r.gen_range(-100..=100)).collect()).collect();
        let total: Vec<i64> = (0..dim).map(|j| v.iter().map(|x| x[j]).sum()).collect();
        let mut pairs = 0i64;
        for p in 0..k {
            for q in 0..k {
                if p != q {
                    pairs += v[p].iter().zip(&v[q]).map(|(a, b)| a * b).sum::<i64>();
                }
            }
        }
        for l in 1..=k {
            let s = subset_sum_identities(k, l, &v).unwrap();
            let rhs1: Vec<i64> = total.iter().map(|t| binom(k as i64 - 1, l as i64 - 1) * t).collect();
            if s.lhs1 != rhs1 || s.rhs1 != rhs1 {
                return verdict(false, format!("identity 1 fails at k={k}, l={l}"));
            }
            if l >= 2 {
                let rhs2 = binom(k as i64 - 2, l as i64 - 2) * pairs;
                if s.lhs2 != Some(rhs2) || s.rhs2 != Some(rhs2) {
                    return verdict(false, format!("identity 2 fails at k={k}, l={l}"));
                }
            }
            identity_cases += 1;
        }
    }

    for case in 0..1000 {
        let len = r.gen_range(1..=12);
        let nnz = r.gen_range(1..=len);
        let mut x: DVector<f64> = DVector::zeros(len);
        for i in index::sample(&mut r, len, nnz) {
            x[i] = r.gen_range(0.01..4.0) * if r.gen_bool(0.5) { 1.0 } else { -1.0 };
        }
        let k = r.gen_range(1..=nnz);
        let q: f64 = r.gen_range(0.02..=1.0);
        let lq: f64 = x.iter().filter(|v| **v != 0.0).map(|v| v.abs().powf(q)).sum();
        let alpha = x.amax().max((lq / k as f64).powf(1.0 / q)) * r.gen_range(1.0..2.0);
        let dec = sparse_convex_decomposition(&x, k, alpha, q).unwrap();
        let bound = (nnz as f64 / k as f64 * x.norm_squared())
            .min(alpha.powf(q) * x.iter().map(|v| v.abs().powf(2.0 - q)).sum::<f64>());
        let wsum: f64 = dec.weights.iter().sum();
        let mut recon = DVector::zeros(len);
        let mut energy = 0.0;
        for (w, u) in dec.weights.iter().zip(&dec.atoms) {
            recon += u * *w;
            energy += w * u.norm_squared();
        }
        let ok = (wsum - 1.0).abs() <= 1e-12
            && dec.weights.iter().all(|w| *w > 0.0)
            && dec.atoms.iter().all(|u| u.iter().filter(|v| **v != 0.0).count() <= k)
            && (recon - &x).norm() <= 1e-10 * x.norm()
            && energy <= bound + 1e-9;
        if !ok {
            return verdict(false, format!("decomposition case {case} violates the contract"));
        }
    }

    for case in 0..10000 {
        let len = r.gen_range(1..=12);
        let mut b: Vec<f64> = (0..len).map(|_| r.gen_range(0.0..10.0)).collect();
        b.sort_by(|p, q| q.total_cmp(p));
        let k = r.gen_range(1..=len);
        let head: f64 = b[..k].iter().sum();
        let tail: f64 = b[k..].iter().sum();
        let d = (tail - head).max(0.0) + r.gen_range(0.0..2.0);
        let omega = r.gen_range(1.0..5.0);
        let t = tail_power_bound_check(&b, k, d, omega).unwrap();
        let lhs: f64 = b[k..].iter().map(|v| v.powf(omega)).sum();
        let head_pow: f64 = b[..k].iter().map(|v| v.powf(omega)).sum();
        let rhs = k as f64 * ((head_pow / k as f64).powf(1.0 / omega) + d / k as f64).powf(omega);
        if !t.holds || lhs > rhs * (1.0 + 1e-12) + 1e-12 {
            return verdict(false, format!("tail bound case {case}: lhs {lhs} rhs {rhs}"));
        }
    }
    verdict(
        true,
        format!("{identity_cases} identity cases, 1000 decompositions, 10000 tail-bound cases"),
    )
}

// ---------------------------------------------------------------- criteria 3, 4

struct RipInstance {
    a: DMatrix<f64>,
    frame: TightFrame,
    k: usize,
}

fn rip_instances() -> Vec<RipInstance> {
    let mut r = seeded(3);
    (0..50u64)
        .map(|i| {
            let n = r.gen_range(2..=6);
            let big_n = r.gen_range(n..=9);
            let m = r.gen_range(2..=8);
            let k = r.gen_range(1..=2usize.min(big_n));
            RipInstance {
                a: gaussian_matrix(m, n, 1000 + i),
                frame: build_parseval_random(n, big_n, 2000 + i).unwrap(),
                k,
            }
        })
        .collect()
}

/// ‖A D_S z‖² / ‖D_S z‖²
fn quotient(a: &DMatrix<f64>, ds: &DMatrix<f64>, z: &DVector<f64>) -> f64 {
    let y = ds * z;
    (a * &y).norm_squared() / y.norm_squared()
}

/// Normalized gradient steps on the quotient over one support; `sign` = +1
/// ascends, −1 descends.
fn refine(a: &DMatrix<f64>, ds: &DMatrix<f64>, z0: &DVector<f64>, sign: f64) -> f64 {
    let p = ds.transpose() * a.transpose() * a * ds;
    let qm = ds.transpose() * ds;
    let mut z = z0.normalize();
    let mut f = quotient(a, ds, &z);
    let mut step = 0.5;
    for _ in 0..20_000 {
        let den = (z.transpose() * &qm * &z)[(0, 0)];
        let grad = (&p * &z - &qm * &z * f) * (2.0 / den);
        if grad.norm() == 0.0 {
            break;
        }
        let cand = (&z + grad.normalize() * (sign * step)).normalize();
        let fc = quotient(a, ds, &cand);
        if sign * (fc - f) > 0.0 {
            z = cand;
            f = fc;
        } else {
            step *= 0.5;
            if step < 1e-15 {
                break;
            }
        }
    }
    f
}

fn sampled_delta(inst: &RipInstance, seed: u64) -> f64 {
    let mut r = seeded(seed);
    let d = inst.frame.d();
    let big_n = inst.frame.len();
    let supports = combinations(big_n, inst.k);
    // best samples per support: (max, argmax, min, argmin)
    let mut best: Vec<Option<(f64, DVector<f64>, f64, DVector<f64>)>> = vec![None; supports.len()];
    for _ in 0..100_000 {
        let s = r.gen_range(0..supports.len());
        let ds = select_cols(d, &supports[s]);
        let z = DVector::from_fn(inst.k, |_, _| r.gen_range(-1.0..1.0));
        if (&ds * &z).norm() < 1e-12 {
            continue;
        }
        let f = quotient(&inst.a, &ds, &z);
        let e = best[s].get_or_insert((f, z.clone(), f, z.clone()));
        if f > e.0 {
            e.0 = f;
            e.1 = z.clone();
        }
        if f < e.2 {
            e.2 = f;
            e.3 = z;
        }
    }
    let mut delta = 0.0f64;
    for (s, b) in best.iter().enumerate() {
        let Some((_, zmax, _, zmin)) = b else { continue };
        let ds = select_cols(d, &supports[s]);
        delta = delta.max(refine(&inst.a, &ds, zmax, 1.0) - 1.0);
        delta = delta.max(1.0 - refine(&inst.a, &ds, zmin, -1.0));
    }
    delta
}

fn drip_oracle() -> Verdict {
    let mut worst_gap = 0.0f64;
    let mut above = 0.0f64;
    for (i, inst) in rip_instances().iter().enumerate() {
        let exact = drip_constant(&inst.a, &inst.frame, inst.k).unwrap().delta;
        let sampled = sampled_delta(inst, 30 + i as u64);
        worst_gap = worst_gap.max(exact - sampled);
        above = above.max(sampled - exact);
        // nested supports give δ_1 ≤ … ≤ δ_n up to round-off
        let n = inst.frame.n();
        let deltas: Vec<f64> = (1..=n.min(inst.frame.len()))
            .map(|k| drip_constant(&inst.a, &inst.frame, k).unwrap().delta)
            .collect();
        if deltas.windows(2).any(|w| w[1] < w[0] - 1e-12) {
            return verdict(false, format!("instance {i}: δ not monotone: {deltas:?}"));
        }
    }
    verdict(
        worst_gap < 1e-4 && above <= 1e-12,
        format!("max exact − sampled gap {worst_gap:.2e}; sampled exceeds exact by at most {above:.2e}; monotone"),
    )
}

/// min over |I| ≥ h and k-supports of the restricted quotient, by whitening
/// with a Cholesky factor of D_Sᵀ D_S.
fn brute_theta_minus(a: &DMatrix<f64>, frame: &TightFrame, k: usize, h: usize) -> f64 {
    let m = a.nrows();
    let mut best = f64::INFINITY;
    for s in combinations(frame.len(), k) {
        let ds = select_cols(frame.d(), &s);
        let Some(ch) = Cholesky::new(ds.transpose() * &ds) else { continue };
        let l_inv = ch.l().try_inverse().unwrap();
        for mask in 0u32..1 << m {
            if (mask.count_ones() as usize) < h {
                continue;
            }
            let rows: Vec<usize> = (0..m).filter(|i| mask >> i & 1 == 1).collect();
            let g = select_rows(a, &rows) * &ds;
            let w = &l_inv * g.transpose() * &g * l_inv.transpose();
            let ev = SymmetricEigen::new(w).eigenvalues;
            best = best.min(ev.min());
        }
    }
    best
}

fn sdrip_consistency() -> Verdict {
    let mut literal_both = 0;
    let mut worst_brute = 0.0f64;
    for (i, inst) in rip_instances().iter().enumerate() {
        let drip = drip_constant(&inst.a, &inst.frame, inst.k).unwrap();
        let rep = sdrip_constants(&inst.a, &inst.frame, inst.k).unwrap();
        let ok = rep.theta_minus <= drip.lambda_min + 1e-12
            && rep.theta_plus >= drip.lambda_max - 1e-12
            && rep.theta_delta_bound() >= drip.delta - 1e-12;
        if !ok {
            return verdict(false, format!("instance {i}: θ = ({}, {}) vs δ = {}", rep.theta_minus, rep.theta_plus, drip.delta));
        }
        if rep.theta_minus <= 1.0 - drip.delta + 1e-12 && rep.theta_plus >= 1.0 + drip.delta - 1e-12 {
            literal_both += 1;
        }
        let brute = brute_theta_minus(&inst.a, &inst.frame, inst.k, rep.min_subset_size);
        worst_brute = worst_brute.max((brute - rep.theta_minus).abs());
    }
    verdict(
        worst_brute < 1e-10,
        format!(
            "one-sided bounds hold on 50/50; θ− matches all-subset brute force within {worst_brute:.2e}; two-sided literal reading holds on {literal_both}/50"
        ),
    )
}

// ---------------------------------------------------------------- criterion 5

fn oracle_recovery() -> Verdict {
    let mut no_witness = 0;
    let mut exceptions = 0;
    for q in [0.5, 1.0] {
        for t in 0..100u64 {
            let frame = build_parseval_random(4, 6, 5000 + t).unwrap();
            let truth = sample_dictionary_sparse(&frame, 1, 6000 + t, MagnitudeLaw::Gaussian).unwrap();
            let a = gaussian_matrix(8, 4, 7000 + t);
            let opts = FalsifyOptions {
                k: 1,
                q,
                budget: 10_000,
                seed: t,
                lambda_mode: LambdaMode::AllSubsets,
            };
            if nsp_real_falsify(&a, &frame, opts).unwrap().witness.is_some() {
                continue;
            }
            no_witness += 1;
            let x0 = truth.x.clone();
            let p = PhaselessProblem::simulate(a, frame, truth, Noise::None, q, t).unwrap();
            let res = solve_oracle_noiseless(&p).unwrap();
            if phase_distance(&res.x_hat, &x0, Field::Real).unwrap() >= 1e-8 * x0.norm() {
                exceptions += 1;
            }
        }
    }
    verdict(
        exceptions == 0,
        format!("{no_witness}/200 trials without counterexample, {exceptions} recovery exceptions"),
    )
}

// ---------------------------------------------------------------- criterion 6

fn nsp_converse() -> Verdict {
    let id2 = build_named_frame(NamedFrame::Identity, 2).unwrap();
    let id3 = build_named_frame(NamedFrame::Identity, 3).unwrap();
    let mercedes = build_named_frame(NamedFrame::Mercedes, 2).unwrap();
    let repeated = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
    let cases = [
        ("repeated rows, identity, k=2", repeated.clone(), id2.clone(), 2),
        ("repeated rows, mercedes, k=2", repeated.clone(), mercedes, 2),
        (
            "repeated rows in R^3, identity, k=2",
            DMatrix::from_row_slice(4, 3, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]),
            id3,
            2,
        ),
        ("sum/difference rows, identity, k=1", DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, -1.0]), id2.clone(), 1),
    ];
    let mut checked = 0;
    let mut worst_feas = 0.0f64;
    for (name, a, frame, k) in &cases {
        for q in [0.5, 1.0] {
            for mode in [LambdaMode::AllSubsets, LambdaMode::CardAtMostK] {
                let opts = FalsifyOptions {
                    k: *k,
                    q,
                    budget: 10_000,
                    seed: 6,
                    lambda_mode: mode,
                };
                let Some(w) = nsp_real_falsify(a, frame, opts).unwrap().witness else {
                    return verdict(false, format!("{name}, q={q}, {mode:?}: no witness"));
                };
                let x0 = &w.u + &w.v;
                let x_hat = &w.u - &w.v;
                let feas = ((a * &x0).abs() - (a * &x_hat).abs()).amax();
                worst_feas = worst_feas.max(feas);
                let obj = |x: &DVector<f64>| -> f64 { frame.analyze(x).iter().map(|v| v.abs().powf(q)).sum() };
                let distinct = phase_distance(&x_hat, &x0, Field::Real).unwrap() > 1e-6 * x0.norm();
                if feas > 1e-9 || obj(&x_hat) > obj(&x0) * (1.0 + 1e-12) + 1e-12 || !distinct {
                    return verdict(false, format!("{name}, q={q}: construction check failed"));
                }
                checked += 1;
            }
        }
    }
    // the k = 1 reading of the repeated-row instance has no violation
    let none = nsp_real_falsify(
        &repeated,
        &id2,
        FalsifyOptions {
            k: 1,
            q: 1.0,
            budget: 10_000,
            seed: 6,
            lambda_mode: LambdaMode::AllSubsets,
        },
    )
    .unwrap()
    .witness
    .is_none();
    verdict(
        none,
        format!("{checked} witnesses verified, max | |Ax̂| − |Ax₀| | = {worst_feas:.1e}; repeated rows with k=1 correctly yield none"),
    )
}

// ---------------------------------------------------------------- criterion 7

fn bound_family(big_n: usize, seed: u64, exact: bool) -> std::result::Result<(usize, f64), String> {
    let cfg = ExperimentConfig::single(4, big_n, 8, 1, 1.0, 1, seed);
    let cell = enumerate_cells(&cfg)[0];
    let mut admissible = 0;
    let mut max_ratio = 0.0f64;
    let mut tried = 0;
    while admissible < 100 {
        if tried >= 50_000 {
            return Err(format!("only {admissible} admissible trials in {tried}"));
        }
        let rec = run_bound_trial(&cfg, &cell, tried);
        tried += 1;
        match rec.status() {
            TrialStatus::NotApplicable => continue,
            TrialStatus::Pass => {}
            other => return Err(format!("trial {}: {other:?} {}", rec.trial, rec.reason)),
        }
        admissible += 1;
        let (lhs, rhs, sigma) = (rec.lhs.unwrap(), rec.rhs.unwrap(), rec.sigma.unwrap());
        if exact && (lhs > 1e-12 || sigma > 1e-12) {
            return Err(format!("trial {}: exact case has lhs {lhs:e}, sigma {sigma:e}", rec.trial));
        }
        if !exact && sigma <= 0.0 {
            return Err(format!("trial {}: sigma vanished", rec.trial));
        }
        if rhs > 0.0 {
            max_ratio = max_ratio.max(lhs / rhs);
        }
    }
    Ok((tried, max_ratio))
}

fn bound_verification() -> Verdict {
    let exact = bound_family(4, 71, true);
    let dense = bound_family(6, 72, false);
    match (exact, dense) {
        (Ok((t1, _)), Ok((t2, ratio))) => verdict(
            true,
            format!("100/100 exact-sparse pass ({t1} draws), 100/100 non-sparse pass ({t2} draws, max lhs/rhs {ratio:.2e})"),
        ),
        (Err(e), _) | (_, Err(e)) => verdict(false, e),
    }
}

// ---------------------------------------------------------------- criterion 8

fn constant_formulas() -> Verdict {
    let mut worst = 0.0f64;
    for i in 0..50 {
        let t = (i as f64 + 0.5) / 50.0 * (4.0 / 3.0);
        let threshold = t / (4.0 - t);
        let mut prev = (0.0, 0.0);
        for j in 0..50 {
            let delta = j as f64 / 50.0 * threshold;
            let c = constants_c1_c2(1.0, t, delta).unwrap();
            let (c3, c4) = constants_c3_c4(t, delta).unwrap();
            let (c1, c2) = (c.c1.unwrap(), c.c2.unwrap());
            worst = worst.max((c1 - c3).abs() / c3.max(1.0)).max((c2 - c4).abs() / c4.max(1.0));
            if c1 < prev.0 || c2 < prev.1 {
                return verdict(false, format!("not monotone at t={t}, δ={delta}"));
            }
            prev = (c1, c2);
        }
    }
    let mut limit_err = 0.0f64;
    for q in [0.25, 0.5, 0.75, 1.0] {
        let lead = 1.0 + (1.0 / q - 1.0f64).exp2();
        let mut last = f64::INFINITY;
        for e in 2..=16 {
            let c = constants_c1_c2(q, 1.0, 10f64.powi(-e)).unwrap();
            let err = (c.c1.unwrap() - lead).abs().max((c.c2.unwrap() - 1.0).abs());
            if err > last {
                return verdict(false, format!("q={q}: limit error grows at δ=1e-{e}"));
            }
            last = err;
        }
        limit_err = limit_err.max(last);
        let c0 = constants_c1_c2(q, 1.0, 0.0).unwrap();
        if c0.c1 != Some(lead) || c0.c2 != Some(1.0) {
            return verdict(false, format!("q={q}: δ=0 constants differ from the limit"));
        }
    }
    verdict(
        worst <= 1e-12 && limit_err < 1e-6,
        format!("c1_c2(q=1) vs c3_c4 max rel diff {worst:.1e} on 50×50; limit error at δ=1e-16 {limit_err:.1e}; monotone"),
    )
}

// ---------------------------------------------------------------- criterion 9

fn determinism() -> Verdict {
    let dir = std::env::temp_dir().join(format!("dictpr-acceptance-{}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    let cfg = r#"{
      "schema": "dictpr.experiment/1",
      "n": [3], "N": [4, 5], "m": [6], "k": [1, 2], "q": [0.5, 1.0], "t": [1.0], "noise": [0.0, 0.05],
      "trials": 4, "seed": 2024
    }"#;
    fs::write(dir.join("cfg.json"), cfg).unwrap();
    let run = |threads: &str, out: &str| {
        let status = Command::new(env!("CARGO_BIN_EXE_dictpr"))
            .args(["experiment", "bound", "--config", "cfg.json", "--threads", threads, "--out", out])
            .current_dir(&dir)
            .status()
            .unwrap();
        assert!(status.success());
        fs::read(dir.join(out)).unwrap()
    };
    let a = run("1", "one_a.csv");
    let b = run("1", "one_b.csv");
    let c = run("8", "eight.csv");
    let rows = a.iter().filter(|&&ch| ch == b'\n').count() - 1;
    fs::remove_dir_all(&dir).ok();
    verdict(
        a == b && a == c,
        format!("{rows} rows; two 1-thread runs and an 8-thread run are byte-identical: {}", a == b && a == c),
    )
}

fn main() {
    let criteria: [(u32, &str, Duration, fn() -> Verdict); 9] = [
        (1, "frame axioms", Duration::from_secs(5), frame_axioms),
        (2, "lemma suite", Duration::from_secs(30), lemma_suite),
        (3, "D-RIP oracle equivalence", Duration::from_secs(60), drip_oracle),
        (4, "S-DRIP consistency", Duration::from_secs(120), sdrip_consistency),
        (5, "global-oracle exact recovery", Duration::from_secs(600), oracle_recovery),
        (6, "NSP converse construction", Duration::from_secs(600), nsp_converse),
        (7, "bound verification", Duration::from_secs(600), bound_verification),
        (8, "constant formulas", Duration::from_secs(5), constant_formulas),
        (9, "determinism", Duration::from_secs(600), determinism),
    ];
    let mut failed = 0;
    for (id, name, limit, check) in criteria {
        let start = Instant::now();
        let v = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            verdict(false, format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let pass = v.pass && elapsed <= limit;
        failed += usize::from(!pass);
        println!(
            "criterion {id} ({name}): {} [{:.2}s, limit {}s] {}",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            limit.as_secs(),
            v.detail
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
