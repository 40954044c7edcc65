use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use robustpr::bench::{Algorithm, SweepAxis};

#[derive(Debug, Parser)]
#[command(
    name = "robustpr",
    version,
    about = "Phase retrieval from magnitude measurements with sparse corruption"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one seeded synthetic trial and write its convergence trace.
    #[command(args_override_self = true)]
    Trial(TrialArgs),
    /// Success rate and error over a range of corruption fractions or sample sizes.
    #[command(args_override_self = true)]
    Sweep(SweepArgs),
    /// Convergence traces of one trial at several noise levels.
    #[command(args_override_self = true)]
    Trace(TraceArgs),
    /// Recover an image from simulated, corrupted coded diffraction patterns.
    #[command(args_override_self = true)]
    Cdp(CdpArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlgoArg {
    RobustWf,
    Rwf,
}

impl From<AlgoArg> for Algorithm {
    fn from(a: AlgoArg) -> Self {
        match a {
            AlgoArg::RobustWf => Algorithm::RobustWf,
            AlgoArg::Rwf => Algorithm::Rwf,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AxisArg {
    Alpha,
    M,
}

impl From<AxisArg> for SweepAxis {
    fn from(a: AxisArg) -> Self {
        match a {
            AxisArg::Alpha => SweepAxis::Alpha,
            AxisArg::M => SweepAxis::M,
        }
    }
}

fn fraction(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if (0.0..1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is not in [0, 1)"))
    }
}

fn closed_fraction(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is not in [0, 1]"))
    }
}

fn nonneg(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{v} is not a finite nonnegative number"))
    }
}

fn finite(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{v} is not finite"))
    }
}

fn positive(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{v} is not a finite positive number"))
    }
}

fn count(s: &str) -> Result<usize, String> {
    let v: usize = s.parse().map_err(|e| format!("{e}"))?;
    if v >= 1 {
        Ok(v)
    } else {
        Err("must be at least 1".into())
    }
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Args, Serialize)]
pub struct CommonArgs {
    /// Root seed
    #[arg(long, env = "ROBUSTPR_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Output directory [default: ./out/<timestamp>-<command>]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads [default: machine parallelism]
    #[arg(long, value_parser = count)]
    pub threads: Option<usize>,
    /// Flat key=value file supplying any flag; command-line flags win
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SolverArgs {
    /// Step size
    #[arg(long, default_value_t = 0.8, value_parser = nonneg)]
    pub mu: f64,
    /// Gradient iterations T
    #[arg(long, default_value_t = 250)]
    pub iters: usize,
    /// Power iterations for the spectral initialization
    #[arg(long, default_value_t = 200, value_parser = count)]
    pub power_iters: usize,
    /// Corruption budget as a fraction of measurements [default: 2 * corruption fraction]
    #[arg(long, value_parser = closed_fraction)]
    pub alpha_hat: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ModelArgs {
    /// Corruption fraction
    #[arg(long, default_value_t = 0.0, value_parser = fraction)]
    pub alpha: f64,
    /// Corruption magnitude in units of ||x*||
    #[arg(long, default_value_t = 0.5, value_parser = nonneg)]
    pub magnitude_scale: f64,
    /// Uniform noise level p, noise ~ U(0, p)
    #[arg(long, default_value_t = 0.0, value_parser = nonneg)]
    pub noise_p: f64,
    #[arg(long, value_enum, default_value_t = AlgoArg::RobustWf)]
    pub algo: AlgoArg,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrialArgs {
    /// Signal length
    #[arg(long, value_parser = count)]
    pub n: usize,
    /// Number of measurements
    #[arg(long, value_parser = count)]
    pub m: usize,
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SweepArgs {
    #[arg(long, value_enum)]
    pub axis: AxisArg,
    /// First axis value
    #[arg(long, value_parser = finite)]
    pub from: f64,
    /// Last axis value (inclusive)
    #[arg(long, value_parser = finite)]
    pub to: f64,
    /// Axis increment
    #[arg(long, value_parser = positive)]
    pub step: f64,
    /// Replications per cell
    #[arg(long, default_value_t = 20, value_parser = count)]
    pub reps: usize,
    /// Signal length
    #[arg(long, value_parser = count)]
    pub n: usize,
    /// Number of measurements (required for --axis alpha)
    #[arg(long, value_parser = count)]
    pub m: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TraceArgs {
    /// Signal length
    #[arg(long, default_value_t = 200, value_parser = count)]
    pub n: usize,
    /// Number of measurements
    #[arg(long, default_value_t = 2000, value_parser = count)]
    pub m: usize,
    /// Corruption fraction
    #[arg(long, default_value_t = 0.05, value_parser = fraction)]
    pub alpha: f64,
    /// Corruption magnitude in units of ||x*||
    #[arg(long, default_value_t = 0.2, value_parser = nonneg)]
    pub magnitude_scale: f64,
    /// Noise levels, comma separated
    #[arg(long, value_delimiter = ',', default_value = "0,0.5,1,1.5,2", value_parser = nonneg)]
    pub noise_levels: Vec<f64>,
    #[arg(long, value_enum, default_value_t = AlgoArg::RobustWf)]
    pub algo: AlgoArg,
    #[command(flatten)]
    #[serde(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CdpArgs {
    /// PNG or PNM image
    #[arg(long)]
    pub image: PathBuf,
    /// Number of masks
    #[arg(long = "K", default_value_t = 12, value_parser = count)]
    pub k: usize,
    /// Fraction of measurements corrupted
    #[arg(long, default_value_t = 0.05, value_parser = fraction)]
    pub corrupt_frac: f64,
    /// Largest corruption magnitude in units of ||x*||
    #[arg(long, default_value_t = 1.0, value_parser = nonneg)]
    pub corrupt_mag: f64,
    #[command(flatten)]
    #[serde(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: CommonArgs,
}
