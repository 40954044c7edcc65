use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use robustpr::bench::{
    convergence_trace, run_trial, sweep_alpha, sweep_m, with_threads, write_plot_script, write_sweep_csv,
    write_trace_csv, Algorithm, AlphaHatPolicy, Trace, TrialSpec,
};
use robustpr::cdp::{
    image_recover, load_image, save_image, write_cdp_csv, CdpCsvRow, ImageFormat, ImageRecoveryConfig,
};
use robustpr::solver::SolverConfig;

use crate::args::{AxisArg, CdpArgs, Cli, Command, CommonArgs, SolverArgs, SweepArgs, TraceArgs, TrialArgs};
use crate::manifest::RunManifest;
use crate::CliError;

pub fn run(cli: Cli, argv: Vec<String>) -> Result<(), CliError> {
    match cli.command {
        Command::Trial(a) => trial(a, argv),
        Command::Sweep(a) => sweep(a, argv),
        Command::Trace(a) => trace(a, argv),
        Command::Cdp(a) => cdp(a, argv),
    }
}

fn solver_config(s: &SolverArgs, alpha_hat: f64) -> SolverConfig {
    SolverConfig {
        step_size: s.mu,
        max_iters: s.iters,
        power_iters: s.power_iters,
        alpha_hat,
        ..Default::default()
    }
}

fn policy(s: &SolverArgs) -> AlphaHatPolicy {
    s.alpha_hat.map_or(AlphaHatPolicy::TwiceAlpha, AlphaHatPolicy::Fixed)
}

fn resolved<T: Serialize>(args: &T, extra: Value) -> Value {
    let mut v = serde_json::to_value(args).expect("arguments serialize");
    if let (Some(map), Value::Object(extra)) = (v.as_object_mut(), extra) {
        map.extend(extra);
    }
    v
}

fn default_out_dir(command: &str) -> PathBuf {
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%S%.3fZ");
    Path::new("out").join(format!("{stamp}-{command}"))
}

/// Outputs and summary produced by a command body.
struct Produced {
    outputs: Vec<PathBuf>,
    summary: Option<Value>,
}

/// Creates the output directory, writes the manifest, runs `body` on the
/// requested pool and records the outcome in the manifest.
fn execute(
    command: &str,
    argv: Vec<String>,
    common: &CommonArgs,
    mut config: Value,
    body: impl FnOnce(&Path) -> Result<Produced, CliError> + Send,
) -> Result<(), CliError> {
    let dir = common.out.clone().unwrap_or_else(|| default_out_dir(command));
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
    if let Some(map) = config.as_object_mut() {
        map.insert("out".into(), json!(dir));
    }
    let mut manifest = RunManifest::new(command, argv, config, common.seed);
    manifest.write(&dir)?;
    let result = with_threads(common.threads, || body(&dir))
        .map_err(CliError::from)
        .and_then(|r| r);
    let outcome = match result {
        Ok(produced) => {
            manifest.outputs = produced.outputs;
            manifest.summary = produced.summary;
            Ok(())
        }
        Err(e) => Err(e),
    };
    manifest.finish(&outcome);
    manifest.write(&dir)?;
    if outcome.is_ok() {
        println!("wrote {}", dir.display());
    }
    outcome
}

fn trial(a: TrialArgs, argv: Vec<String>) -> Result<(), CliError> {
    let alpha_hat = policy(&a.solver).resolve(a.model.alpha);
    let algorithm = Algorithm::from(a.model.algo);
    let spec = TrialSpec {
        n: a.n,
        m: a.m,
        alpha: a.model.alpha,
        magnitude_scale: a.model.magnitude_scale,
        noise_p: a.model.noise_p,
        algorithm,
        cfg: solver_config(&a.solver, alpha_hat),
        trial_seed: a.common.seed,
        record_trace: true,
    };
    let config = resolved(
        &a,
        json!({ "alpha_hat": alpha_hat, "effective_alpha_hat": spec.effective_alpha_hat() }),
    );
    execute("trial", argv, &a.common, config, |dir| {
        let outcome = run_trial(&spec);
        let path = dir.join("trace.csv");
        let trace = Trace {
            algorithm,
            noise_p: spec.noise_p,
            rel_errors: outcome.trace.clone().unwrap_or_default(),
        };
        write_trace_csv(&path, &[trace])?;
        println!(
            "{algorithm}: final relative error {:.3e}, success {}, {} iterations",
            outcome.final_rel_error, outcome.success, outcome.iterations
        );
        if let Some(reason) = &outcome.failure {
            println!("trial failed: {reason}");
        }
        Ok(Produced {
            outputs: vec![path],
            summary: Some(json!({
                "final_rel_error": finite_or_null(outcome.final_rel_error),
                "initial_rel_error": finite_or_null(outcome.initial_rel_error),
                "success": outcome.success,
                "iterations": outcome.iterations,
                "failure": outcome.failure,
            })),
        })
    })
}

fn finite_or_null(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

/// `from, from + step, ..., <= to`, with values snapped to 12 decimals so
/// that `0.07` is printed as such rather than `0.07000000000000001`.
pub fn axis_values(from: f64, to: f64, step: f64) -> Result<Vec<f64>, CliError> {
    if from > to {
        return Err(CliError::Usage(format!("--from ({from}) must not exceed --to ({to})")));
    }
    let count = ((to - from) / step + 1e-9).floor() as usize + 1;
    Ok((0..count)
        .map(|i| {
            let v = from + i as f64 * step;
            (v * 1e12).round() / 1e12
        })
        .collect())
}

fn sweep(a: SweepArgs, argv: Vec<String>) -> Result<(), CliError> {
    let values = axis_values(a.from, a.to, a.step)?;
    let policy = policy(&a.solver);
    let base = |m: usize| TrialSpec {
        n: a.n,
        m,
        alpha: a.model.alpha,
        magnitude_scale: a.model.magnitude_scale,
        noise_p: a.model.noise_p,
        algorithm: a.model.algo.into(),
        cfg: solver_config(&a.solver, policy.resolve(a.model.alpha)),
        trial_seed: a.common.seed,
        record_trace: false,
    };
    enum Plan {
        Alpha(Vec<f64>, TrialSpec),
        M(Vec<usize>, TrialSpec),
    }
    let plan = match a.axis {
        AxisArg::Alpha => {
            let m =
                a.m.ok_or_else(|| CliError::Usage("--m is required for --axis alpha".into()))?;
            if let Some(bad) = values.iter().find(|v| !(0.0..1.0).contains(*v)) {
                return Err(CliError::Usage(format!(
                    "--axis alpha values must lie in [0, 1), got {bad}"
                )));
            }
            Plan::Alpha(values.clone(), base(m))
        }
        AxisArg::M => {
            if let Some(bad) = values.iter().find(|v| v.fract() != 0.0 || **v < 1.0) {
                return Err(CliError::Usage(format!(
                    "--axis m values must be positive integers, got {bad}"
                )));
            }
            let ms: Vec<usize> = values.iter().map(|v| *v as usize).collect();
            let first = ms[0];
            Plan::M(ms, base(first))
        }
    };
    let alpha_hat = match a.axis {
        AxisArg::Alpha => a.solver.alpha_hat.map_or(json!("2*alpha"), |v| json!(v)),
        AxisArg::M => json!(policy.resolve(a.model.alpha)),
    };
    let config = resolved(&a, json!({ "alpha_hat": alpha_hat, "axis_values": values }));
    let reps = a.reps;
    execute("sweep", argv, &a.common, config, move |dir| {
        let table = match plan {
            Plan::Alpha(alphas, spec) => sweep_alpha(&alphas, reps, &spec, policy)?,
            Plan::M(ms, spec) => sweep_m(&ms, reps, &spec, policy)?,
        };
        let csv = dir.join("sweep.csv");
        write_sweep_csv(&csv, &table)?;
        let plot = dir.join("plot.gp");
        write_plot_script(&plot, Some(Path::new("sweep.csv")), None)?;
        for row in &table.rows {
            println!(
                "{}={:<8} success {:.2}  median rel error {:.3e}",
                row.axis.name(),
                row.axis_value,
                row.success_rate,
                row.median_rel_error
            );
        }
        Ok(Produced {
            outputs: vec![csv, plot],
            summary: Some(json!({ "rows": table.rows.len() })),
        })
    })
}

fn trace(a: TraceArgs, argv: Vec<String>) -> Result<(), CliError> {
    if a.noise_levels.is_empty() {
        return Err(CliError::Usage("--noise-levels needs at least one value".into()));
    }
    let alpha_hat = policy(&a.solver).resolve(a.alpha);
    let spec = TrialSpec {
        n: a.n,
        m: a.m,
        alpha: a.alpha,
        magnitude_scale: a.magnitude_scale,
        noise_p: 0.0,
        algorithm: a.algo.into(),
        cfg: solver_config(&a.solver, alpha_hat),
        trial_seed: a.common.seed,
        record_trace: true,
    };
    let config = resolved(&a, json!({ "alpha_hat": alpha_hat }));
    let levels = a.noise_levels.clone();
    execute("trace", argv, &a.common, config, move |dir| {
        let traces = convergence_trace(&spec, &levels)?;
        let csv = dir.join("trace.csv");
        write_trace_csv(&csv, &traces)?;
        let plot = dir.join("plot.gp");
        write_plot_script(&plot, None, Some(Path::new("trace.csv")))?;
        let finals: Vec<Value> = traces
            .iter()
            .map(|t| {
                let last = t.rel_errors.last().copied().unwrap_or(f64::NAN);
                println!("p={:<6} final relative error {last:.3e}", t.noise_p);
                json!({ "noise_p": t.noise_p, "final_rel_error": finite_or_null(last) })
            })
            .collect();
        Ok(Produced {
            outputs: vec![csv, plot],
            summary: Some(Value::Array(finals)),
        })
    })
}

fn cdp(a: CdpArgs, argv: Vec<String>) -> Result<(), CliError> {
    let image = load_image(&a.image)?;
    let alpha_hat = policy(&a.solver).resolve(a.corrupt_frac);
    let cfg = ImageRecoveryConfig {
        k: a.k,
        solver: solver_config(&a.solver, alpha_hat),
        corrupt_fraction: a.corrupt_frac,
        corrupt_magnitude: a.corrupt_mag,
        seed: a.common.seed,
    };
    let config = resolved(&a, json!({ "alpha_hat": alpha_hat }));
    let name = a
        .image
        .file_name()
        .map_or_else(|| a.image.display().to_string(), |s| s.to_string_lossy().into_owned());
    execute("cdp", argv, &a.common, config, move |dir| {
        let recovery = image_recover(&image, &cfg)?;
        let ext = match (image.format, image.planes.len()) {
            (ImageFormat::Png, _) => "png",
            (ImageFormat::Pnm, 1) => "pgm",
            (ImageFormat::Pnm, _) => "ppm",
        };
        let img_path = dir.join(format!("recovered.{ext}"));
        save_image(&img_path, &recovery.image)?;
        let rows: Vec<CdpCsvRow> = recovery
            .channels
            .iter()
            .map(|c| CdpCsvRow {
                image: name.clone(),
                channel: c.channel.name().to_string(),
                n: c.n,
                k: cfg.k,
                alpha: cfg.corrupt_fraction,
                alpha_hat,
                relative_error: c.rel_error,
                iterations: c.iterations,
                wall_time_ms: c.wall_time_ms,
            })
            .collect();
        let csv = dir.join("cdp.csv");
        write_cdp_csv(&csv, &rows)?;
        for c in &recovery.channels {
            println!("{}: relative error {:.3e}", c.channel.name(), c.rel_error);
        }
        Ok(Produced {
            outputs: vec![img_path, csv],
            summary: Some(json!({ "relative_error": finite_or_null(recovery.rel_error) })),
        })
    })
}
