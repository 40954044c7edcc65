//! Monte-Carlo harness: single trials, sweeps over the corruption fraction
//! or the sample size, convergence traces over noise levels, and their CSV
//! files.
//!
//! Every trial draws its ensemble, signal, corruption and noise from
//! streams derived from its own seed. Within a sweep, trial `k` of every
//! cell uses the same seed, so cells and algorithms are compared on paired
//! data. Trials run on the ambient rayon pool and are collected by index;
//! output never depends on the number of workers.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::measure::{
    compose_observations, sample_corruption, sample_ensemble, sample_noise, sample_signal, CorruptionSpec,
    GaussianEnsemble, MagnitudeLaw, NoiseSpec, ObservationSet,
};
use crate::primitives::norm2;
use crate::rng::{derive_seed, Purpose};
use crate::solver::{rwf_solve, solve, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    /// Thresholded corruption estimate with budget `alpha_hat`.
    RobustWf,
    /// The same iteration with no corruption estimate.
    Rwf,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::RobustWf => "robust_wf",
            Algorithm::Rwf => "rwf",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "robust_wf" | "robust-wf" => Ok(Algorithm::RobustWf),
            "rwf" => Ok(Algorithm::Rwf),
            other => Err(Error::Malformed(format!("unknown algorithm {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialSpec {
    pub n: usize,
    pub m: usize,
    pub alpha: f64,
    /// Corruption magnitude in units of `||x*||`.
    pub magnitude_scale: f64,
    pub noise_p: f64,
    pub algorithm: Algorithm,
    /// Solver settings. `cfg.seed` is replaced by a seed derived from
    /// `trial_seed`.
    pub cfg: SolverConfig,
    pub trial_seed: u64,
    pub record_trace: bool,
}

impl TrialSpec {
    /// Synthetic-experiment defaults: corruption at `0.5 ||x*||`, no noise,
    /// `alpha_hat = 2 alpha`.
    pub fn new(n: usize, m: usize, alpha: f64) -> Self {
        TrialSpec {
            n,
            m,
            alpha,
            magnitude_scale: 0.5,
            noise_p: 0.0,
            algorithm: Algorithm::RobustWf,
            cfg: SolverConfig {
                alpha_hat: AlphaHatPolicy::TwiceAlpha.resolve(alpha),
                ..Default::default()
            },
            trial_seed: 0,
            record_trace: false,
        }
    }

    /// The `alpha_hat` actually used by the selected algorithm.
    pub fn effective_alpha_hat(&self) -> f64 {
        match self.algorithm {
            Algorithm::RobustWf => self.cfg.alpha_hat,
            Algorithm::Rwf => 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        let finite = [
            self.alpha,
            self.magnitude_scale,
            self.noise_p,
            self.cfg.alpha_hat,
            self.cfg.step_size,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("trial parameters must be finite".into()));
        }
        self.cfg.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    /// `dist(x_T, x*) / ||x*||`.
    pub final_rel_error: f64,
    pub final_dist: f64,
    /// `dist(x_0, x*) / ||x*||`.
    pub initial_rel_error: f64,
    pub success: bool,
    pub iterations: usize,
    /// Relative error per iteration, starting at the initial point.
    pub trace: Option<Vec<f64>>,
    pub wall_time_ms: f64,
    /// Why the trial did not produce a result.
    pub failure: Option<String>,
}

/// Draws the ensemble, signal, corruption and noise of a trial.
pub fn generate_observations(spec: &TrialSpec) -> Result<(GaussianEnsemble, ObservationSet)> {
    let seed = spec.trial_seed;
    let x_star = sample_signal(spec.n, derive_seed(seed, 0, Purpose::Signal))?;
    let a = sample_ensemble(spec.n, spec.m, derive_seed(seed, 0, Purpose::Ensemble))?;
    let corruption = CorruptionSpec {
        fraction: spec.alpha,
        magnitude_scale: spec.magnitude_scale,
        law: MagnitudeLaw::Fixed,
        seed: derive_seed(seed, 0, Purpose::Corruption),
    };
    let eta = sample_corruption(spec.m, &corruption, norm2(&x_star))?;
    let noise = NoiseSpec {
        level: spec.noise_p,
        seed: derive_seed(seed, 0, Purpose::Noise),
    };
    let eps = sample_noise(spec.m, &noise)?;
    let obs = compose_observations(&a, &x_star, &eta, &eps)?;
    Ok((a, obs))
}

/// Runs one seeded trial. Errors are reported in
/// [`TrialOutcome::failure`], never returned.
pub fn run_trial(spec: &TrialSpec) -> TrialOutcome {
    let started = Instant::now();
    match try_trial(spec) {
        Ok(mut outcome) => {
            outcome.wall_time_ms = started.elapsed().as_secs_f64() * 1e3;
            outcome
        }
        Err(e) => TrialOutcome {
            final_rel_error: f64::NAN,
            final_dist: f64::NAN,
            initial_rel_error: f64::NAN,
            success: false,
            iterations: 0,
            trace: None,
            wall_time_ms: started.elapsed().as_secs_f64() * 1e3,
            failure: Some(e.to_string()),
        },
    }
}

fn try_trial(spec: &TrialSpec) -> Result<TrialOutcome> {
    spec.validate()?;
    let (a, obs) = generate_observations(spec)?;
    let x_star = &obs
        .ground_truth
        .as_ref()
        .expect("generated observations carry ground truth")
        .x_star;
    let cfg = SolverConfig {
        seed: derive_seed(spec.trial_seed, 0, Purpose::PowerStart),
        ..spec.cfg
    };
    let result = match spec.algorithm {
        Algorithm::RobustWf => solve(&obs.y, &a, &cfg, Some(x_star))?,
        Algorithm::Rwf => rwf_solve(&obs.y, &a, &cfg, Some(x_star))?,
    };
    let scale = norm2(x_star);
    let rel = |d: f64| if scale > 0.0 { d / scale } else { d };
    let final_dist = result.final_dist().unwrap_or(f64::NAN);
    let initial = result.history.first().and_then(|r| r.dist).unwrap_or(f64::NAN);
    Ok(TrialOutcome {
        final_rel_error: rel(final_dist),
        final_dist,
        initial_rel_error: rel(initial),
        success: result.converged,
        iterations: result.iterations_run,
        trace: spec
            .record_trace
            .then(|| result.history.iter().map(|r| rel(r.dist.unwrap_or(f64::NAN))).collect()),
        wall_time_ms: 0.0,
        failure: None,
    })
}

/// Seed of replication `k` within a sweep rooted at `root`.
pub fn replication_seed(root: u64, k: usize) -> u64 {
    derive_seed(root, k as u64, Purpose::Trial)
}

/// Runs `reps` paired replications of `base`, in replication order.
pub fn run_replications(base: &TrialSpec, reps: usize) -> Result<Vec<TrialOutcome>> {
    if reps == 0 {
        return Err(Error::InvalidConfig("reps must be at least 1".into()));
    }
    Ok((0..reps)
        .into_par_iter()
        .map(|k| {
            run_trial(&TrialSpec {
                trial_seed: replication_seed(base.trial_seed, k),
                ..*base
            })
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case", tag = "policy", content = "value")]
pub enum AlphaHatPolicy {
    /// `alpha_hat = 2 alpha`, capped at 1.
    TwiceAlpha,
    Fixed(f64),
}

impl AlphaHatPolicy {
    pub fn resolve(self, alpha: f64) -> f64 {
        match self {
            AlphaHatPolicy::TwiceAlpha => (2.0 * alpha).min(1.0),
            AlphaHatPolicy::Fixed(v) => v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SweepAxis {
    Alpha,
    M,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Alpha => "alpha",
            SweepAxis::M => "m",
        }
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "alpha" => Ok(SweepAxis::Alpha),
            "m" => Ok(SweepAxis::M),
            other => Err(Error::Malformed(format!("unknown sweep axis {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub axis: SweepAxis,
    pub axis_value: f64,
    pub algorithm: Algorithm,
    pub n: usize,
    pub m: usize,
    pub alpha: f64,
    pub alpha_hat: f64,
    pub noise_p: f64,
    pub reps: usize,
    pub success_rate: f64,
    pub mean_rel_error: f64,
    pub median_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

/// Aggregates one cell. The median is the lower median for even counts.
fn summarize(outcomes: &[TrialOutcome]) -> (f64, f64, f64) {
    let reps = outcomes.len();
    let successes = outcomes.iter().filter(|o| o.success).count();
    let mut errors: Vec<f64> = outcomes.iter().map(|o| o.final_rel_error).collect();
    let mean = errors.iter().sum::<f64>() / reps as f64;
    errors.sort_by(f64::total_cmp);
    let median = errors[(reps - 1) / 2];
    (successes as f64 / reps as f64, mean, median)
}

fn run_cells(cells: Vec<TrialSpec>, axis: SweepAxis, values: Vec<f64>, reps: usize) -> Result<SweepTable> {
    if reps == 0 {
        return Err(Error::InvalidConfig("reps must be at least 1".into()));
    }
    let jobs: Vec<TrialSpec> = cells
        .iter()
        .flat_map(|cell| {
            (0..reps).map(move |k| TrialSpec {
                trial_seed: replication_seed(cell.trial_seed, k),
                record_trace: false,
                ..*cell
            })
        })
        .collect();
    let outcomes: Vec<TrialOutcome> = jobs.par_iter().map(run_trial).collect();
    let rows = cells
        .iter()
        .zip(values)
        .zip(outcomes.chunks(reps))
        .map(|((cell, value), chunk)| {
            let (success_rate, mean_rel_error, median_rel_error) = summarize(chunk);
            SweepRow {
                axis,
                axis_value: value,
                algorithm: cell.algorithm,
                n: cell.n,
                m: cell.m,
                alpha: cell.alpha,
                alpha_hat: cell.effective_alpha_hat(),
                noise_p: cell.noise_p,
                reps,
                success_rate,
                mean_rel_error,
                median_rel_error,
            }
        })
        .collect();
    Ok(SweepTable { rows })
}

/// One cell per corruption fraction, `reps` paired trials each.
pub fn sweep_alpha(alphas: &[f64], reps: usize, base: &TrialSpec, policy: AlphaHatPolicy) -> Result<SweepTable> {
    let cells = alphas
        .iter()
        .map(|&alpha| TrialSpec {
            alpha,
            cfg: SolverConfig {
                alpha_hat: policy.resolve(alpha),
                ..base.cfg
            },
            ..*base
        })
        .collect();
    run_cells(cells, SweepAxis::Alpha, alphas.to_vec(), reps)
}

/// One cell per sample size, `reps` paired trials each.
pub fn sweep_m(ms: &[usize], reps: usize, base: &TrialSpec, policy: AlphaHatPolicy) -> Result<SweepTable> {
    let cells = ms
        .iter()
        .map(|&m| TrialSpec {
            m,
            cfg: SolverConfig {
                alpha_hat: policy.resolve(base.alpha),
                ..base.cfg
            },
            ..*base
        })
        .collect();
    run_cells(cells, SweepAxis::M, ms.iter().map(|&m| m as f64).collect(), reps)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub algorithm: Algorithm,
    pub noise_p: f64,
    /// Relative error at iterations `0..=T`.
    pub rel_errors: Vec<f64>,
}

/// Relative-error traces of the same trial at each noise level.
pub fn convergence_trace(spec: &TrialSpec, noise_levels: &[f64]) -> Result<Vec<Trace>> {
    noise_levels
        .par_iter()
        .map(|&p| {
            let outcome = run_trial(&TrialSpec {
                noise_p: p,
                record_trace: true,
                ..*spec
            });
            match (outcome.failure, outcome.trace) {
                (None, Some(rel_errors)) => Ok(Trace {
                    algorithm: spec.algorithm,
                    noise_p: p,
                    rel_errors,
                }),
                (Some(reason), _) => Err(Error::InvalidConfig(format!("trace at p={p} failed: {reason}"))),
                (None, None) => unreachable!("trace requested"),
            }
        })
        .collect()
}

/// Runs `f` on a pool of `threads` workers, or on the global pool.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(Error::InvalidConfig("thread count must be at least 1".into())),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// 17 significant digits; parses back to the identical `f64`.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub const SWEEP_CSV_HEADER: [&str; 12] = [
    "axis",
    "axis_value",
    "algorithm",
    "n",
    "m",
    "alpha",
    "alpha_hat",
    "noise_p",
    "reps",
    "success_rate",
    "mean_rel_error",
    "median_rel_error",
];

pub const TRACE_CSV_HEADER: [&str; 4] = ["algorithm", "noise_p", "iter", "rel_error"];

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|source| Error::Csv {
        path: path.to_path_buf(),
        source,
    })
}

fn csv_reader(path: &Path, header: &[&str]) -> Result<csv::Reader<std::fs::File>> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    if r.headers().map_err(csv_err)?.iter().ne(header.iter().copied()) {
        return Err(Error::Malformed(format!("unexpected CSV header in {}", path.display())));
    }
    Ok(r)
}

fn field<T: FromStr>(rec: &csv::StringRecord, i: usize, name: &str, path: &Path) -> Result<T> {
    rec.get(i)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Malformed(format!("bad {name} in {}", path.display())))
}

pub fn write_sweep_csv(path: &Path, table: &SweepTable) -> Result<()> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv_writer(path)?;
    w.write_record(SWEEP_CSV_HEADER).map_err(csv_err)?;
    for r in &table.rows {
        w.write_record([
            r.axis.name().to_string(),
            format_float(r.axis_value),
            r.algorithm.name().to_string(),
            r.n.to_string(),
            r.m.to_string(),
            format_float(r.alpha),
            format_float(r.alpha_hat),
            format_float(r.noise_p),
            r.reps.to_string(),
            format_float(r.success_rate),
            format_float(r.mean_rel_error),
            format_float(r.median_rel_error),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_sweep_csv(path: &Path) -> Result<SweepTable> {
    let mut r = csv_reader(path, &SWEEP_CSV_HEADER)?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        rows.push(SweepRow {
            axis: field(&rec, 0, "axis", path)?,
            axis_value: field(&rec, 1, "axis_value", path)?,
            algorithm: field(&rec, 2, "algorithm", path)?,
            n: field(&rec, 3, "n", path)?,
            m: field(&rec, 4, "m", path)?,
            alpha: field(&rec, 5, "alpha", path)?,
            alpha_hat: field(&rec, 6, "alpha_hat", path)?,
            noise_p: field(&rec, 7, "noise_p", path)?,
            reps: field(&rec, 8, "reps", path)?,
            success_rate: field(&rec, 9, "success_rate", path)?,
            mean_rel_error: field(&rec, 10, "mean_rel_error", path)?,
            median_rel_error: field(&rec, 11, "median_rel_error", path)?,
        });
    }
    Ok(SweepTable { rows })
}

pub fn write_trace_csv(path: &Path, traces: &[Trace]) -> Result<()> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv_writer(path)?;
    w.write_record(TRACE_CSV_HEADER).map_err(csv_err)?;
    for trace in traces {
        for (t, e) in trace.rel_errors.iter().enumerate() {
            w.write_record([
                trace.algorithm.name().to_string(),
                format_float(trace.noise_p),
                t.to_string(),
                format_float(*e),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads traces back, grouping consecutive rows with the same algorithm
/// and noise level.
pub fn read_trace_csv(path: &Path) -> Result<Vec<Trace>> {
    let mut r = csv_reader(path, &TRACE_CSV_HEADER)?;
    let mut traces: Vec<Trace> = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        let algorithm: Algorithm = field(&rec, 0, "algorithm", path)?;
        let noise_p: f64 = field(&rec, 1, "noise_p", path)?;
        let iter: usize = field(&rec, 2, "iter", path)?;
        let value: f64 = field(&rec, 3, "rel_error", path)?;
        match traces.last_mut() {
            Some(t)
                if t.algorithm == algorithm
                    && t.noise_p.to_bits() == noise_p.to_bits()
                    && iter == t.rel_errors.len() =>
            {
                t.rel_errors.push(value)
            }
            _ if iter == 0 => traces.push(Trace {
                algorithm,
                noise_p,
                rel_errors: vec![value],
            }),
            _ => {
                return Err(Error::Malformed(format!(
                    "trace rows out of order at iter {iter} in {}",
                    path.display()
                )))
            }
        }
    }
    Ok(traces)
}

/// A gnuplot script that plots whichever of the given CSV files exist.
pub fn write_plot_script(path: &Path, sweep_csv: Option<&Path>, trace_csv: Option<&Path>) -> Result<()> {
    let mut s = String::from("# gnuplot script\nset datafile separator ','\nset key autotitle columnhead\n");
    if let Some(sweep) = sweep_csv {
        s.push_str(&format!(
            "set terminal pngcairo size 900,600\nset output 'sweep.png'\nset xlabel 'axis value'\nset ylabel 'success rate'\nset yrange [0:1.05]\nplot '{}' using 2:10 with linespoints title 'success rate'\n",
            sweep.display()
        ));
    }
    if let Some(trace) = trace_csv {
        s.push_str(&format!(
            "set terminal pngcairo size 900,600\nset output 'trace.png'\nset xlabel 'iteration'\nset ylabel 'relative error'\nset logscale y\nset autoscale y\nplot '{}' using 3:4 with lines title 'relative error'\n",
            trace.display()
        ));
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}
