use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{CdpMaskSet, CdpOperator};
use crate::error::{check_len, Error, Result};
use crate::primitives::{amplitude_loss, complex_norm2, complex_sign, dist_complex, ensure_finite, hard_threshold};
use crate::rng::stream;
use crate::solver::{estimate_magnitude, IterationRecord, PowerIteration, SolverConfig, SolverResult};

// The unitary DFT gives rows of unit norm, so (1/m) sum a_i a_i^H = I / n.
// The solver runs on rows scaled by sqrt(n) (observations scaled to match),
// which restores (1/m) sum a_i a_i^H = I and lets step sizes and the norm
// estimate carry over unchanged from the Gaussian model.

/// `v -> (1/m) sum_i w_i (a_i^H v) a_i` on the unit-normalized rows.
pub fn cdp_spectral_apply(op: &CdpOperator, weights: &[f64], v: &[Complex64]) -> Result<Vec<Complex64>> {
    check_len("cdp spectral weights", op.num_measurements(), weights.len())?;
    let mut z = op.linear(v)?;
    z.iter_mut().zip(weights).for_each(|(zi, w)| *zi *= w);
    op.adjoint_weighted(&z)
}

/// Power iteration for a Hermitian map from a seeded complex Gaussian start.
pub fn power_iteration_complex<F>(op: F, n: usize, iters: usize, seed: u64) -> Result<PowerIteration<Complex64>>
where
    F: Fn(&[Complex64]) -> Result<Vec<Complex64>>,
{
    if n == 0 {
        return Err(Error::InvalidDimension(
            "power iteration on a zero-dimensional map".into(),
        ));
    }
    if iters == 0 {
        return Err(Error::InvalidConfig(
            "power iteration needs at least one iteration".into(),
        ));
    }
    let start = random_unit_complex(n, seed);
    let mut v = start.clone();
    let mut rayleigh = Vec::with_capacity(iters);
    for _ in 0..iters {
        let w = op(&v)?;
        check_len("power_iteration_complex: map output", n, w.len())?;
        rayleigh.push(v.iter().zip(&w).map(|(a, b)| (a.conj() * b).re).sum());
        let norm = complex_norm2(&w);
        if !(norm > 0.0) || !norm.is_finite() {
            return Ok(PowerIteration {
                vector: start,
                rayleigh,
                degenerate: true,
            });
        }
        v = w.into_iter().map(|c| c / norm).collect();
    }
    Ok(PowerIteration {
        vector: v,
        rayleigh,
        degenerate: false,
    })
}

fn random_unit_complex(n: usize, seed: u64) -> Vec<Complex64> {
    let mut rng = stream(seed);
    loop {
        let v: Vec<Complex64> = (0..n)
            .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        let norm = complex_norm2(&v);
        if norm > 0.0 {
            return v.into_iter().map(|c| c / norm).collect();
        }
    }
}

/// Robust Wirtinger Flow on coded diffraction measurements.
///
/// `y` holds the `n K` amplitudes `|F D^(k) x|` (plus corruption and
/// noise). The corruption estimate is thresholded on the real residual
/// `y - |A x|` and the signal moves along the complex gradient with
/// weights `(|a_i^H x| + eta_i - y_i) sgn(a_i^H x)`. The history records
/// `dist_complex` to the ground truth when one is given.
///
/// `lambda0` in the result is the initial norm estimate of the signal and
/// `eta_hat` is expressed in the units of `y`.
pub fn cdp_solve(
    y: &[f64],
    masks: &CdpMaskSet,
    cfg: &SolverConfig,
    ground_truth: Option<&[Complex64]>,
) -> Result<SolverResult<Complex64>> {
    cfg.validate()?;
    let op = CdpOperator::new(masks.clone());
    let (n, m) = (op.n(), op.num_measurements());
    check_len("cdp_solve: y", m, y.len())?;
    ensure_finite("observations", y)?;
    if let Some(gt) = ground_truth {
        check_len("cdp_solve: ground truth", n, gt.len())?;
    }
    let gain = (n as f64).sqrt();
    let row_energy = n as f64;
    let budget = cfg.budget(m);

    // Stage I
    let y: Vec<f64> = y.iter().map(|v| gain * v).collect();
    let eta0 = hard_threshold(&y, budget)?;
    let y_hat: Vec<f64> = y.iter().zip(&eta0).map(|(a, b)| a - b).collect();
    let lambda0 = estimate_magnitude(&y_hat)?;
    let weights: Vec<f64> = y_hat.iter().map(|v| row_energy * v * v).collect();
    let power = power_iteration_complex(|v| cdp_spectral_apply(&op, &weights, v), n, cfg.power_iters, cfg.seed)?;
    let x0: Vec<Complex64> = power.vector.iter().map(|v| v * lambda0).collect();

    // Stage II
    let mut x = x0.clone();
    let mut eta = eta0;
    let mut inner = scaled_linear(&op, &x, gain)?;
    let mut history = Vec::with_capacity(cfg.max_iters + 1);
    let record = |t: usize, x: &[Complex64], inner: &[Complex64], eta: &[f64]| -> Result<IterationRecord> {
        let amp: Vec<f64> = inner.iter().map(|z| z.norm()).collect();
        Ok(IterationRecord {
            t,
            dist: ground_truth.map(|gt| dist_complex(x, gt)).transpose()?,
            loss: amplitude_loss(&y, &amp, eta) / row_energy,
        })
    };
    history.push(record(0, &x, &inner, &eta)?);
    for t in 1..=cfg.max_iters {
        let amp: Vec<f64> = inner.iter().map(|z| z.norm()).collect();
        eta = if budget.0 == 0 {
            vec![0.0; m]
        } else {
            let residual: Vec<f64> = y.iter().zip(&amp).map(|(a, b)| a - b).collect();
            hard_threshold(&residual, budget)?
        };
        let w: Vec<Complex64> = inner
            .iter()
            .zip(&amp)
            .zip(&eta)
            .zip(&y)
            .map(|(((z, a), e), yi)| complex_sign(*z) * (a + e - yi))
            .collect();
        let grad = op.adjoint_weighted(&w)?;
        let step = cfg.step_size * gain;
        x.iter_mut().zip(&grad).for_each(|(xi, gi)| *xi -= gi * step);
        if x.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::Divergence { iteration: t });
        }
        inner = scaled_linear(&op, &x, gain)?;
        history.push(record(t, &x, &inner, &eta)?);
    }

    let converged = history
        .last()
        .and_then(|r| r.dist)
        .is_some_and(|d| d <= cfg.success_tol);
    Ok(SolverResult {
        x_hat: x,
        eta_hat: eta.into_iter().map(|e| e / gain).collect(),
        iterations_run: cfg.max_iters,
        converged,
        history,
        lambda0,
        x0,
        degenerate_spectrum: power.degenerate,
    })
}

fn scaled_linear(op: &CdpOperator, x: &[Complex64], gain: f64) -> Result<Vec<Complex64>> {
    let mut z = op.linear(x)?;
    z.iter_mut().for_each(|v| *v *= gain);
    Ok(z)
}
