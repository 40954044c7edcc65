//! Acceptance suite. Each test prints one `criterion N: PASS|FAIL ...` line
//! and asserts the same condition. Run with
//! `cargo test -p robustpr --test acceptance -- --nocapture`.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use robustpr::bench::{
    replication_seed, run_replications, sweep_alpha, with_threads, write_sweep_csv, Algorithm, AlphaHatPolicy,
    SweepTable, TrialOutcome, TrialSpec,
};
use robustpr::cdp::{
    build_masks, cdp_adjoint_weighted, cdp_forward, dense_rows, image_recover, CdpOperator, ImageData, ImageFormat,
    ImageRecoveryConfig,
};
use robustpr::measure::{
    compose_observations, sample_corruption, sample_ensemble, sample_signal, CorruptionSpec, MagnitudeLaw,
};
use robustpr::operator::DenseOperator;
use robustpr::primitives::{hard_threshold, loss, norm2, SparsityBudget};
use robustpr::solver::{grad_x, gradient_step, init_stage, power_iteration, SolverConfig, SolverState};
use robustpr::MeasurementOperator;

const ROOT_SEED: u64 = 20_240_601;
const TRIALS: usize = 20;

// criterion 1
const CLEAN_MIN_SUCCESS: f64 = 0.9;
// criteria 2 and 3
const ROBUST_MIN_SUCCESS: f64 = 0.9;
const RWF_MAX_SUCCESS: f64 = 0.1;
const HIGH_ALPHA_MAX_SUCCESS: f64 = 0.2;
// criterion 4
const INIT_MAX_MEDIAN: f64 = 0.3;
// criterion 5
const MIN_DECADES_PER_50: f64 = 1.0;
const CROSSING: f64 = 1e-8;
const RATE_START: usize = 25;
// criterion 6
const NOISE_RATIO: (f64, f64) = (1.5, 8.0);
// criterion 7
const FD_MAX_REL: f64 = 1e-5;
// criterion 9
const POWER_MAX_ANGLE: f64 = 1e-6;
const POWER_MIN_GAP: f64 = 0.1;
// criterion 10
const UNITARY_TOL: f64 = 1e-12;
const DENSE_TOL: f64 = 1e-10;
const ADJOINT_TOL: f64 = 1e-10;
// criterion 11
const CDP_MAX_REL: f64 = 1e-6;
const CDP_MIN_PASSES: usize = 18;
// criterion 13
const FLIP_TOL: f64 = 1e-12;

fn report(id: u32, pass: bool, detail: String) {
    println!("criterion {id:>2}: {} {detail}", if pass { "PASS" } else { "FAIL" });
}

fn success_rate(outcomes: &[TrialOutcome]) -> f64 {
    outcomes.iter().filter(|o| o.success).count() as f64 / outcomes.len() as f64
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

fn corruption_spec(alpha: f64, algorithm: Algorithm) -> TrialSpec {
    TrialSpec {
        algorithm,
        trial_seed: ROOT_SEED,
        record_trace: true,
        ..TrialSpec::new(100, 1000, alpha)
    }
}

struct CorruptionRuns {
    robust_05: Vec<TrialOutcome>,
    robust_15: Vec<TrialOutcome>,
    rwf_15: Vec<TrialOutcome>,
    robust_35: Vec<TrialOutcome>,
}

fn corruption_runs() -> &'static CorruptionRuns {
    static RUNS: OnceLock<CorruptionRuns> = OnceLock::new();
    RUNS.get_or_init(|| {
        let run = |alpha, algo| run_replications(&corruption_spec(alpha, algo), TRIALS).unwrap();
        CorruptionRuns {
            robust_05: run(0.05, Algorithm::RobustWf),
            robust_15: run(0.15, Algorithm::RobustWf),
            rwf_15: run(0.15, Algorithm::Rwf),
            robust_35: run(0.35, Algorithm::RobustWf),
        }
    })
}

#[test]
fn criterion_01_clean_recovery() {
    let spec = TrialSpec {
        trial_seed: ROOT_SEED,
        ..TrialSpec::new(100, 1000, 0.0)
    };
    let started = std::time::Instant::now();
    let outcomes = run_replications(&spec, TRIALS).unwrap();
    let rate = success_rate(&outcomes);
    let pass = rate >= CLEAN_MIN_SUCCESS;
    report(
        1,
        pass,
        format!(
            "success rate {rate:.2} (>= {CLEAN_MIN_SUCCESS}), {:.1}s",
            started.elapsed().as_secs_f64()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_02_corruption_robustness() {
    let runs = corruption_runs();
    let r05 = success_rate(&runs.robust_05);
    let r15 = success_rate(&runs.robust_15);
    let rwf = success_rate(&runs.rwf_15);
    let pass = r05 >= ROBUST_MIN_SUCCESS && r15 >= ROBUST_MIN_SUCCESS && rwf <= RWF_MAX_SUCCESS;
    report(
        2,
        pass,
        format!(
            "robust alpha=0.05 {r05:.2}, alpha=0.15 {r15:.2} (>= {ROBUST_MIN_SUCCESS}); rwf alpha=0.15 {rwf:.2} (<= {RWF_MAX_SUCCESS})"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_03_high_corruption_degrades() {
    let rate = success_rate(&corruption_runs().robust_35);
    let pass = rate <= HIGH_ALPHA_MAX_SUCCESS;
    report(
        3,
        pass,
        format!("robust alpha=0.35 success rate {rate:.2} (<= {HIGH_ALPHA_MAX_SUCCESS})"),
    );
    assert!(pass);
}

#[test]
fn criterion_04_initialization_quality() {
    let spec = TrialSpec {
        trial_seed: ROOT_SEED,
        ..TrialSpec::new(100, 2000, 0.05)
    };
    let spec = TrialSpec {
        cfg: SolverConfig {
            max_iters: 0,
            ..spec.cfg
        },
        ..spec
    };
    let errors: Vec<f64> = run_replications(&spec, TRIALS)
        .unwrap()
        .iter()
        .map(|o| o.initial_rel_error)
        .collect();
    let med = median(errors);
    let pass = med <= INIT_MAX_MEDIAN;
    report(
        4,
        pass,
        format!("median dist(x0, x*)/||x*|| {med:.4} (<= {INIT_MAX_MEDIAN})"),
    );
    assert!(pass);
}

/// Decades of relative error gained per 50 iterations between
/// `RATE_START` and the first iterate at or below `CROSSING`.
fn decades_per_50(trace: &[f64], norm_scale: f64) -> Option<f64> {
    let threshold = CROSSING / norm_scale;
    let cross = trace.iter().position(|&e| e <= threshold)?;
    if cross <= RATE_START {
        return None;
    }
    let drop = trace[RATE_START].log10() - trace[cross].log10();
    Some(drop * 50.0 / (cross - RATE_START) as f64)
}

#[test]
fn criterion_05_linear_convergence() {
    let runs = corruption_runs();
    let mut rates = Vec::new();
    for (alpha, outcomes) in [(0.05, &runs.robust_05), (0.15, &runs.robust_15)] {
        for (k, o) in outcomes.iter().enumerate().filter(|(_, o)| o.success) {
            // success is measured on the absolute distance; convert to the
            // relative scale of the trace
            let norm = o.final_dist / o.final_rel_error;
            let trace = o.trace.as_ref().unwrap();
            if let Some(rate) = decades_per_50(trace, norm) {
                rates.push((alpha, k, rate));
            }
        }
    }
    let worst = rates.iter().map(|r| r.2).fold(f64::INFINITY, f64::min);
    let pass = !rates.is_empty() && worst >= MIN_DECADES_PER_50;
    report(
        5,
        pass,
        format!(
            "{} successful trials, slowest {worst:.2} decades per 50 iterations (>= {MIN_DECADES_PER_50})",
            rates.len()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_06_noise_floor_scaling() {
    let base = TrialSpec {
        magnitude_scale: 0.2,
        trial_seed: ROOT_SEED,
        ..TrialSpec::new(200, 2000, 0.05)
    };
    let medians: Vec<f64> = [0.5, 1.0, 2.0]
        .iter()
        .map(|&p| {
            let outcomes = run_replications(&TrialSpec { noise_p: p, ..base }, TRIALS).unwrap();
            median(outcomes.iter().map(|o| o.final_rel_error).collect())
        })
        .collect();
    let increasing = medians.windows(2).all(|w| w[0] < w[1]);
    let ratio = medians[2] / medians[0];
    let pass = increasing && (NOISE_RATIO.0..=NOISE_RATIO.1).contains(&ratio);
    report(
        6,
        pass,
        format!(
            "medians p=0.5 {:.4e}, p=1 {:.4e}, p=2 {:.4e}; ratio {ratio:.3} (in [{}, {}])",
            medians[0], medians[1], medians[2], NOISE_RATIO.0, NOISE_RATIO.1
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_07_gradient_oracle() {
    let (n, m) = (20, 120);
    let mut worst: f64 = 0.0;
    for k in 0..100u64 {
        let a = sample_ensemble(n, m, 1000 + k).unwrap();
        let x_star = sample_signal(n, 2000 + k).unwrap();
        let spec = CorruptionSpec {
            fraction: 0.1,
            magnitude_scale: 0.5,
            law: MagnitudeLaw::Fixed,
            seed: 3000 + k,
        };
        let eta = sample_corruption(m, &spec, norm2(&x_star)).unwrap();
        let y = compose_observations(&a, &x_star, &eta, &vec![0.0; m]).unwrap().y;
        // non-degenerate: no inner product within reach of the kink of |.|
        let h = 1e-6;
        let x = (0..)
            .map(|j| sample_signal(n, 4000 + 1000 * j + k).unwrap())
            .find(|x| a.apply(x).unwrap().into_iter().fold(f64::INFINITY, f64::min) > 1e3 * h * norm2(x))
            .unwrap();
        let g = grad_x(&y, &a, &x, &eta).unwrap();
        let fd: Vec<f64> = (0..n)
            .map(|j| {
                let mut plus = x.clone();
                let mut minus = x.clone();
                plus[j] += h;
                minus[j] -= h;
                (loss(&plus, &eta, &y, &a).unwrap() - loss(&minus, &eta, &y, &a).unwrap()) / (2.0 * h)
            })
            .collect();
        let diff: Vec<f64> = g.iter().zip(&fd).map(|(p, q)| p - q).collect();
        worst = worst.max(norm2(&diff) / norm2(&fd));
    }
    let pass = worst <= FD_MAX_REL;
    report(
        7,
        pass,
        format!("worst relative gradient error {worst:.3e} over 100 points (<= {FD_MAX_REL:e})"),
    );
    assert!(pass);
}

/// Sort by (magnitude desc, index asc), keep the first `s`.
fn threshold_oracle(w: &[f64], s: usize) -> Vec<f64> {
    let mut order: Vec<usize> = (0..w.len()).collect();
    order.sort_by(|&i, &j| w[j].abs().total_cmp(&w[i].abs()).then(i.cmp(&j)));
    let mut out = vec![0.0; w.len()];
    for &i in &order[..s] {
        out[i] = w[i];
    }
    out
}

#[test]
fn criterion_08_threshold_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(ROOT_SEED);
    let mut mismatches = 0;
    let mut tied = 0;
    for _ in 0..1000 {
        let len = rng.random_range(1..=64);
        // small integer grid forces many tied magnitudes, including +v/-v
        let w: Vec<f64> = (0..len)
            .map(|_| {
                if rng.random_bool(0.5) {
                    rng.random_range(-4i32..=4) as f64
                } else {
                    rng.sample::<f64, _>(StandardNormal)
                }
            })
            .collect();
        let s = rng.random_range(0..=len);
        let mut mags: Vec<f64> = w.iter().map(|v| v.abs()).collect();
        mags.sort_by(f64::total_cmp);
        if mags.windows(2).any(|p| p[0] == p[1]) {
            tied += 1;
        }
        let got = hard_threshold(&w, SparsityBudget(s)).unwrap();
        let want = threshold_oracle(&w, s);
        if got.iter().zip(&want).any(|(a, b)| a.to_bits() != b.to_bits()) {
            mismatches += 1;
        }
    }
    let pass = mismatches == 0 && tied > 0;
    report(
        8,
        pass,
        format!("{mismatches} mismatches over 1000 vectors ({tied} with ties)"),
    );
    assert!(pass);
}

#[test]
fn criterion_09_power_iteration_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(ROOT_SEED + 9);
    let mut worst: f64 = 0.0;
    let mut accepted = 0;
    let mut seed = 0;
    while accepted < 50 {
        seed += 1;
        let n = rng.random_range(2..=20);
        let b = DMatrix::from_fn(n, n + 3, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut y = &b * b.transpose();
        let eig = SymmetricEigen::new(y.clone());
        let mut vals: Vec<(f64, usize)> = eig.eigenvalues.iter().copied().zip(0..).collect();
        vals.sort_by(|p, q| q.0.total_cmp(&p.0));
        let top = vals[0].0;
        y /= top;
        if 1.0 - vals[1].0 / top < POWER_MIN_GAP {
            continue;
        }
        accepted += 1;
        let lead = eig.eigenvectors.column(vals[0].1).into_owned();
        let op = |v: &[f64]| Ok((&y * DVector::from_column_slice(v)).as_slice().to_vec());
        let got = power_iteration(op, n, 200, seed).unwrap();
        let cos = lead.dot(&DVector::from_column_slice(&got.vector)).abs().min(1.0);
        // sin of the angle is well conditioned near 0, unlike acos
        worst = worst.max((1.0 - cos * cos).max(0.0).sqrt());
    }
    let pass = worst <= POWER_MAX_ANGLE;
    report(
        9,
        pass,
        format!("worst angle {worst:.3e} rad over 50 maps (<= {POWER_MAX_ANGLE:e})"),
    );
    assert!(pass);
}

fn complex_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<Complex64> {
    (0..n)
        .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect()
}

fn cnorm(v: &[Complex64]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

#[test]
fn criterion_10_cdp_operator() {
    let mut rng = ChaCha8Rng::seed_from_u64(ROOT_SEED + 10);
    let (mut unitary, mut dense, mut adjoint): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for n in [1usize, 2, 3, 5, 7, 8, 16, 30, 64, 100, 256] {
        let masks = build_masks(n, 4, rng.random()).unwrap();
        let op = CdpOperator::new(masks.clone());
        let m = op.num_measurements();
        let v = complex_vec(&mut rng, n);
        let mut f = v.clone();
        op.dft_in_place(&mut f);
        unitary = unitary.max((cnorm(&f) - cnorm(&v)).abs() / cnorm(&v));

        if n <= 8 {
            let rows = dense_rows(&masks);
            let lin = op.linear(&v).unwrap();
            for (row, z) in rows.iter().zip(&lin) {
                let want: Complex64 = row.iter().zip(&v).map(|(a, b)| a * b).sum();
                dense = dense.max((want - z).norm());
            }
            let amp = cdp_forward(&v, &masks).unwrap();
            for (a, z) in amp.iter().zip(&lin) {
                dense = dense.max((a - z.norm()).abs());
            }
        }

        // <L x, w> = m <x, adj(w)> with adj(w) = (1/m) L^H w
        let w = complex_vec(&mut rng, m);
        let lx = op.linear(&v).unwrap();
        let lhs: Complex64 = lx.iter().zip(&w).map(|(a, b)| a.conj() * b).sum();
        let adj = cdp_adjoint_weighted(&w, &masks).unwrap();
        let rhs: Complex64 = v.iter().zip(&adj).map(|(a, b)| a.conj() * b).sum::<Complex64>() * m as f64;
        adjoint = adjoint.max((lhs - rhs).norm() / (cnorm(&lx) * cnorm(&w)));
    }
    let pass = unitary <= UNITARY_TOL && dense <= DENSE_TOL && adjoint <= ADJOINT_TOL;
    report(
        10,
        pass,
        format!("unitarity {unitary:.2e} (<= {UNITARY_TOL:e}), dense {dense:.2e} (<= {DENSE_TOL:e}), adjoint {adjoint:.2e} (<= {ADJOINT_TOL:e})"),
    );
    assert!(pass);
}

/// 32x32 gray test card: smooth gradient, a bright disc and a dark bar.
fn synthetic_image() -> ImageData {
    let side = 32;
    let pixels = (0..side * side)
        .map(|idx| {
            let (r, c) = ((idx / side) as f64, (idx % side) as f64);
            let mut v = 0.2 + 0.5 * (r + c) / (2.0 * side as f64);
            if (r - 12.0).powi(2) + (c - 20.0).powi(2) < 36.0 {
                v = 0.95;
            }
            if (22.0..26.0).contains(&r) && (4.0..28.0).contains(&c) {
                v = 0.05;
            }
            v
        })
        .collect();
    ImageData::gray(side, side, pixels, ImageFormat::Png).unwrap()
}

#[test]
fn criterion_11_cdp_recovery() {
    let image = synthetic_image();
    let errors: Vec<f64> = (0..TRIALS)
        .map(|k| {
            let cfg = ImageRecoveryConfig {
                seed: replication_seed(ROOT_SEED, k),
                ..Default::default()
            };
            image_recover(&image, &cfg).unwrap().rel_error
        })
        .collect();
    let passes = errors.iter().filter(|e| **e <= CDP_MAX_REL).count();
    let pass = passes >= CDP_MIN_PASSES;
    report(
        11,
        pass,
        format!(
            "{passes}/{TRIALS} trials with relative error <= {CDP_MAX_REL:e} (need {CDP_MIN_PASSES}); median {:.3e}",
            median(errors)
        ),
    );
    assert!(pass);
}

fn determinism_sweep(threads: usize) -> Vec<u8> {
    let alphas: Vec<f64> = (0..=8).map(|k| k as f64 * 0.05).collect();
    let table = with_threads(Some(threads), || {
        let mut rows = Vec::new();
        for algo in [Algorithm::RobustWf, Algorithm::Rwf] {
            let base = TrialSpec {
                algorithm: algo,
                trial_seed: ROOT_SEED,
                ..TrialSpec::new(100, 1000, 0.0)
            };
            rows.extend(
                sweep_alpha(&alphas, TRIALS, &base, AlphaHatPolicy::TwiceAlpha)
                    .unwrap()
                    .rows,
            );
        }
        SweepTable { rows }
    })
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sweep.csv");
    write_sweep_csv(&path, &table).unwrap();
    std::fs::read(&path).unwrap()
}

#[test]
fn criterion_12_determinism() {
    let one = determinism_sweep(1);
    let eight = determinism_sweep(8);
    let pass = one == eight && !one.is_empty();
    report(
        12,
        pass,
        format!(
            "1-worker and 8-worker CSVs byte-identical: {} ({} bytes)",
            one == eight,
            one.len()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_13_sign_flip() {
    let spec = corruption_spec(0.1, Algorithm::RobustWf);
    let (n, m) = (spec.n, spec.m);
    let a = sample_ensemble(n, m, 77).unwrap();
    let x_star = sample_signal(n, 78).unwrap();
    let cspec = CorruptionSpec {
        fraction: 0.1,
        magnitude_scale: 0.5,
        law: MagnitudeLaw::Fixed,
        seed: 79,
    };
    let eta = sample_corruption(m, &cspec, norm2(&x_star)).unwrap();
    let y = compose_observations(&a, &x_star, &eta, &vec![0.0; m]).unwrap().y;
    let cfg = SolverConfig {
        alpha_hat: 0.2,
        max_iters: 100,
        seed: 80,
        ..Default::default()
    };
    let init = init_stage(&y, &a, &cfg).unwrap();
    let flipped: Vec<f64> = init.x0.iter().map(|v| -v).collect();
    let mut p = SolverState::new(init.x0.clone(), init.eta0.clone(), &y, &a, None).unwrap();
    let mut q = SolverState::new(flipped, init.eta0.clone(), &y, &a, None).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..cfg.max_iters {
        p = gradient_step(p, &y, &a, &cfg, None).unwrap();
        q = gradient_step(q, &y, &a, &cfg, None).unwrap();
        let scale = norm2(&p.x).max(1.0);
        for (u, v) in p.x.iter().zip(&q.x) {
            worst = worst.max((u + v).abs() / scale);
        }
        assert_eq!(p.eta, q.eta);
    }
    let pass = worst <= FLIP_TOL;
    report(
        13,
        pass,
        format!(
            "max |x_t + x'_t| / ||x_t|| over {} steps {worst:.2e} (<= {FLIP_TOL:e})",
            cfg.max_iters
        ),
    );
    assert!(pass);
}

// Operator-level invariant backing criterion 13: the gradient is odd in x.
proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn gradient_is_odd(seed in any::<u64>(), n in 1usize..12, extra in 0usize..30) {
        let m = n + extra + 1;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f64> = (0..m * n).map(|_| rng.sample(StandardNormal)).collect();
        let a = DenseOperator::from_rows(m, n, data).unwrap();
        let x: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let y: Vec<f64> = (0..m).map(|_| rng.sample::<f64, _>(StandardNormal).abs()).collect();
        let eta: Vec<f64> = (0..m).map(|i| if i % 5 == 0 { 0.3 } else { 0.0 }).collect();
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        let g = grad_x(&y, &a, &x, &eta).unwrap();
        let h = grad_x(&y, &a, &neg, &eta).unwrap();
        for (u, v) in g.iter().zip(&h) {
            prop_assert_eq!(u.to_bits(), (-v).to_bits());
        }
    }
}
