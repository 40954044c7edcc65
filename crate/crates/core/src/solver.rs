//! Robust Wirtinger Flow over a real [`MeasurementOperator`].
//!
//! Stage I removes the `floor(alpha_hat * m)` largest observations, uses
//! the RMS of what remains as the signal norm and the leading eigenvector of
//! `(1/m) sum y_hat_i^2 a_i a_i^T` as its direction. Stage II alternates a
//! hard-thresholded corruption estimate `eta = H(y - |A x|)` with a gradient
//! step on the amplitude loss. With `alpha_hat = 0` the corruption estimate
//! is identically zero and the iteration is the plain reshaped flow.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_len, Error, Result};
use crate::operator::MeasurementOperator;
use crate::primitives::{amplitude_loss, dist, ensure_finite, hard_threshold, norm2, sign, SparsityBudget};
use crate::rng::stream;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SolverConfig {
    /// Gradient step size `mu`.
    pub step_size: f64,
    /// Number of gradient iterations `T`.
    pub max_iters: usize,
    /// Power iterations used for the spectral direction.
    pub power_iters: usize,
    /// Fraction of observations the corruption estimate may occupy.
    pub alpha_hat: f64,
    /// A run counts as converged when the final distance to the ground
    /// truth is at most this value.
    pub success_tol: f64,
    /// Seed for the power-iteration start vector.
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            step_size: 0.8,
            max_iters: 250,
            power_iters: 200,
            alpha_hat: 0.0,
            success_tol: 1e-8,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size >= 0.0 && self.step_size.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "step size must be finite and nonnegative, got {}",
                self.step_size
            )));
        }
        if !(0.0..=1.0).contains(&self.alpha_hat) {
            return Err(Error::InvalidConfig(format!(
                "alpha_hat must lie in [0, 1], got {}",
                self.alpha_hat
            )));
        }
        if !(self.success_tol >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "success tolerance must be nonnegative, got {}",
                self.success_tol
            )));
        }
        if self.power_iters == 0 {
            return Err(Error::InvalidConfig("power_iters must be at least 1".into()));
        }
        Ok(())
    }

    /// `floor(alpha_hat * m)`.
    pub fn budget(&self, m: usize) -> SparsityBudget {
        SparsityBudget::from_fraction(self.alpha_hat, m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct IterationRecord {
    pub t: usize,
    /// Distance to the ground truth, when one was supplied.
    pub dist: Option<f64>,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub x: Vec<f64>,
    pub eta: Vec<f64>,
    pub t: usize,
    pub history: Vec<IterationRecord>,
    // a_i^T x for the current x
    inner: Vec<f64>,
}

impl SolverState {
    /// State at `t = 0`, with the initial history record.
    pub fn new<A: MeasurementOperator + ?Sized>(
        x: Vec<f64>,
        eta: Vec<f64>,
        y: &[f64],
        a: &A,
        ground_truth: Option<&[f64]>,
    ) -> Result<Self> {
        check_len("solver state: y", a.num_rows(), y.len())?;
        check_len("solver state: eta", a.num_rows(), eta.len())?;
        let inner = a.apply_linear(&x)?;
        let mut state = SolverState {
            x,
            eta,
            t: 0,
            history: Vec::new(),
            inner,
        };
        state.record(y, ground_truth)?;
        Ok(state)
    }

    fn record(&mut self, y: &[f64], ground_truth: Option<&[f64]>) -> Result<()> {
        let amp: Vec<f64> = self.inner.iter().map(|v| v.abs()).collect();
        let loss = amplitude_loss(y, &amp, &self.eta);
        let dist = ground_truth.map(|gt| dist(&self.x, gt)).transpose()?;
        self.history.push(IterationRecord { t: self.t, dist, loss });
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverResult<T = f64> {
    pub x_hat: Vec<T>,
    pub eta_hat: Vec<f64>,
    pub iterations_run: usize,
    pub converged: bool,
    pub history: Vec<IterationRecord>,
    pub lambda0: f64,
    pub x0: Vec<T>,
    /// The spectral map annihilated the power-iteration start, so the
    /// initial direction carries no information.
    pub degenerate_spectrum: bool,
}

impl<T> SolverResult<T> {
    pub fn final_dist(&self) -> Option<f64> {
        self.history.last().and_then(|r| r.dist)
    }

    pub fn final_loss(&self) -> f64 {
        self.history.last().map_or(f64::NAN, |r| r.loss)
    }
}

/// `sqrt((1/m) sum y_hat_i^2)`.
pub fn estimate_magnitude(y_hat: &[f64]) -> Result<f64> {
    if y_hat.is_empty() {
        return Err(Error::Empty("estimate_magnitude"));
    }
    let mean_sq = y_hat.iter().map(|v| v * v).sum::<f64>() / y_hat.len() as f64;
    Ok(mean_sq.sqrt())
}

/// Matrix-free `v -> (1/m) sum_i y_hat_i^2 (a_i^T v) a_i`.
pub struct SpectralOperator<'a, A: ?Sized> {
    op: &'a A,
    weights: Vec<f64>,
}

impl<'a, A: MeasurementOperator + ?Sized> SpectralOperator<'a, A> {
    pub fn dim(&self) -> usize {
        self.op.num_cols()
    }

    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.op.quadratic_form_apply(&self.weights, v)
    }
}

pub fn build_spectral_operator<'a, A: MeasurementOperator + ?Sized>(
    a: &'a A,
    y_hat: &[f64],
) -> Result<SpectralOperator<'a, A>> {
    check_len("build_spectral_operator", a.num_rows(), y_hat.len())?;
    Ok(SpectralOperator {
        op: a,
        weights: y_hat.iter().map(|v| v * v).collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerIteration<T = f64> {
    /// Unit-norm estimate of the leading eigenvector.
    pub vector: Vec<T>,
    /// Rayleigh quotient of each iterate, in order.
    pub rayleigh: Vec<f64>,
    /// The map sent an iterate to zero; `vector` is then the normalized
    /// random start.
    pub degenerate: bool,
}

/// Plain power iteration from a seeded Gaussian start, without shifts or
/// deflation.
pub fn power_iteration<F>(op: F, n: usize, iters: usize, seed: u64) -> Result<PowerIteration>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
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
    let start = random_unit_vector(n, seed);
    let mut v = start.clone();
    let mut rayleigh = Vec::with_capacity(iters);
    for _ in 0..iters {
        let w = op(&v)?;
        check_len("power_iteration: map output", n, w.len())?;
        rayleigh.push(v.iter().zip(&w).map(|(a, b)| a * b).sum());
        let norm = norm2(&w);
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

pub(crate) fn random_unit_vector(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = stream(seed);
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let norm = norm2(&v);
        if norm > 0.0 {
            return v.into_iter().map(|c| c / norm).collect();
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Initialization {
    pub x0: Vec<f64>,
    pub lambda0: f64,
    pub eta0: Vec<f64>,
    pub degenerate_spectrum: bool,
}

/// Stage I: `eta0 = H(y)`, `y_hat = y - eta0`, `x0 = lambda0 * v` with
/// `lambda0 = rms(y_hat)` and `v` the leading eigenvector of the spectral map.
pub fn init_stage<A: MeasurementOperator + ?Sized>(y: &[f64], a: &A, cfg: &SolverConfig) -> Result<Initialization> {
    cfg.validate()?;
    let m = a.num_rows();
    check_len("init_stage: y", m, y.len())?;
    ensure_finite("observations", y)?;
    let eta0 = hard_threshold(y, cfg.budget(m))?;
    let y_hat: Vec<f64> = y.iter().zip(&eta0).map(|(a, b)| a - b).collect();
    let lambda0 = estimate_magnitude(&y_hat)?;
    let spectral = build_spectral_operator(a, &y_hat)?;
    let direction = power_iteration(|v| spectral.apply(v), spectral.dim(), cfg.power_iters, cfg.seed)?;
    let x0 = direction.vector.iter().map(|v| lambda0 * v).collect();
    Ok(Initialization {
        x0,
        lambda0,
        eta0,
        degenerate_spectrum: direction.degenerate,
    })
}

/// `H_s(y - |A x|)`.
pub fn eta_update<A: MeasurementOperator + ?Sized>(
    y: &[f64],
    a: &A,
    x: &[f64],
    budget: SparsityBudget,
) -> Result<Vec<f64>> {
    check_len("eta_update: y", a.num_rows(), y.len())?;
    let amp = a.apply(x)?;
    residual_threshold(y, &amp, budget)
}

fn residual_threshold(y: &[f64], amp: &[f64], budget: SparsityBudget) -> Result<Vec<f64>> {
    if budget.0 == 0 {
        return Ok(vec![0.0; y.len()]);
    }
    let residual: Vec<f64> = y.iter().zip(amp).map(|(a, b)| a - b).collect();
    hard_threshold(&residual, budget)
}

/// `(1/m) sum_i (|a_i^T x| + eta_i - y_i) sgn(a_i^T x) a_i`.
pub fn grad_x<A: MeasurementOperator + ?Sized>(y: &[f64], a: &A, x: &[f64], eta: &[f64]) -> Result<Vec<f64>> {
    let m = a.num_rows();
    check_len("grad_x: y", m, y.len())?;
    check_len("grad_x: eta", m, eta.len())?;
    let inner = a.apply_linear(x)?;
    a.adjoint_weighted(&gradient_weights(y, &inner, eta))
}

fn gradient_weights(y: &[f64], inner: &[f64], eta: &[f64]) -> Vec<f64> {
    inner
        .iter()
        .zip(eta)
        .zip(y)
        .map(|((z, e), yi)| (z.abs() + e - yi) * sign(*z))
        .collect()
}

/// One Stage II iteration: refresh `eta` from the current residual, then
/// step `x` along the negative gradient at the refreshed `eta`.
pub fn gradient_step<A: MeasurementOperator + ?Sized>(
    mut state: SolverState,
    y: &[f64],
    a: &A,
    cfg: &SolverConfig,
    ground_truth: Option<&[f64]>,
) -> Result<SolverState> {
    let m = a.num_rows();
    check_len("gradient_step: y", m, y.len())?;
    let budget = cfg.budget(m);
    let amp: Vec<f64> = state.inner.iter().map(|v| v.abs()).collect();
    state.eta = residual_threshold(y, &amp, budget)?;
    debug_assert!(state.eta.iter().filter(|v| **v != 0.0).count() <= budget.0);

    let grad = a.adjoint_weighted(&gradient_weights(y, &state.inner, &state.eta))?;
    let mu = cfg.step_size;
    state.x.iter_mut().zip(&grad).for_each(|(xi, gi)| *xi -= mu * gi);
    state.t += 1;
    if state.x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence { iteration: state.t });
    }
    state.inner = a.apply_linear(&state.x)?;
    state.record(y, ground_truth)?;
    Ok(state)
}

/// Runs Stage I followed by `cfg.max_iters` gradient steps.
pub fn solve<A: MeasurementOperator + ?Sized>(
    y: &[f64],
    a: &A,
    cfg: &SolverConfig,
    ground_truth: Option<&[f64]>,
) -> Result<SolverResult> {
    if let Some(gt) = ground_truth {
        check_len("solve: ground truth", a.num_cols(), gt.len())?;
    }
    let init = init_stage(y, a, cfg)?;
    solve_from(y, a, cfg, init, ground_truth)
}

/// Runs Stage II from a given initialization.
pub fn solve_from<A: MeasurementOperator + ?Sized>(
    y: &[f64],
    a: &A,
    cfg: &SolverConfig,
    init: Initialization,
    ground_truth: Option<&[f64]>,
) -> Result<SolverResult> {
    cfg.validate()?;
    check_len("solve_from: x0", a.num_cols(), init.x0.len())?;
    let mut state = SolverState::new(init.x0.clone(), init.eta0, y, a, ground_truth)?;
    for _ in 0..cfg.max_iters {
        state = gradient_step(state, y, a, cfg, ground_truth)?;
    }
    let converged = state
        .history
        .last()
        .and_then(|r| r.dist)
        .is_some_and(|d| d <= cfg.success_tol);
    Ok(SolverResult {
        x_hat: state.x,
        eta_hat: state.eta,
        iterations_run: state.t,
        converged,
        history: state.history,
        lambda0: init.lambda0,
        x0: init.x0,
        degenerate_spectrum: init.degenerate_spectrum,
    })
}

/// The non-robust baseline: [`solve`] with the corruption budget forced to
/// zero.
pub fn rwf_solve<A: MeasurementOperator + ?Sized>(
    y: &[f64],
    a: &A,
    cfg: &SolverConfig,
    ground_truth: Option<&[f64]>,
) -> Result<SolverResult> {
    let cfg = SolverConfig { alpha_hat: 0.0, ..*cfg };
    solve(y, a, &cfg, ground_truth)
}
