//! Command-line front end: argument parsing, file formats and the subcommands.

pub mod commands;
pub mod config;
pub mod fbank;
pub mod io;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::CliError;

/// Process exit codes.
pub mod exit {
    pub const OK: u8 = 0;
    pub const USAGE: u8 = 1;
    pub const NOT_CONVERGED: u8 = 2;
    pub const CONDITION_FAILED: u8 = 3;
}

#[derive(Debug, Parser)]
#[command(name = "fixdecomp", version, about = "Variational image decomposition with spectral filter banks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
#[allow(clippy::large_enum_variant)]
pub enum Command {
    /// Denoise an image corrupted with synthetic correlated noise, over several replications.
    Denoise(DenoiseArgs),
    /// Split an image into cartoon and texture.
    Decompose(DecomposeArgs),
    /// Build, inspect and certify filter banks.
    Filters {
        #[command(subcommand)]
        command: FiltersCommand,
    },
}

/// Model and solver parameters. Values are taken from `--config`, then `--set`, then
/// the individual flags, later sources winning.
#[derive(Debug, Default, Args)]
pub struct ModelArgs {
    /// tvl2, m2, m3, hilbert or lsr
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    /// 1 for the anisotropic, 2 for the isotropic penalty
    #[arg(long)]
    pub kappa: Option<u8>,
    #[arg(long, allow_negative_numbers = true)]
    pub y1: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub y2: Option<f64>,
    #[arg(long)]
    pub r1: Option<f64>,
    #[arg(long)]
    pub r2: Option<f64>,
    /// B-spline order of the LsR bank
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Number of LsR scales J
    #[arg(long)]
    pub scales: Option<u32>,
    /// Riesz order Z of the LsR bank
    #[arg(long)]
    pub riesz: Option<u32>,
    /// Stopping tolerance on the relative change of U
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// File of key=value lines
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Extra key=value setting; repeatable
    #[arg(long = "set", alias = "params", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Args)]
pub struct DenoiseArgs {
    /// Clean input image (PGM, PNG or .f64)
    #[arg(long, required = true)]
    pub image: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Number of noise replications
    #[arg(long)]
    pub reps: Option<usize>,
    /// Seed of the first replication; replication r uses seed + r
    #[arg(long)]
    pub seed: Option<u64>,
    /// Multiplies the noise
    #[arg(long, default_value_t = 1.0)]
    pub noise_scale: f64,
    /// Skip writing the denoised images
    #[arg(long)]
    pub no_images: bool,
    #[arg(long, required = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DecomposeArgs {
    #[arg(long, required = true)]
    pub image: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Also write the per-sweep trace as trace.csv
    #[arg(long)]
    pub trace: bool,
    #[arg(long, required = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
#[allow(clippy::large_enum_variant)]
pub enum FiltersCommand {
    /// Build a model's filters and write A.fbank, B.fbank, Btilde.fbank (and Y.fbank when
    /// the pair factors weakly).
    Build(BuildArgs),
    /// Check factoring and the σ conditions of a (B, B̃) pair.
    Check(CheckArgs),
    /// Write a container's symbols as text, losslessly.
    Export(ExportArgs),
    /// Rebuild a container from the text written by `export`.
    Import(ImportArgs),
    /// Write the σ grid of a (B, B̃) pair as CSV and as a PGM heatmap.
    Spectrum(SpectrumArgs),
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Grid size ROWSxCOLS
    #[arg(long, value_name = "NxM", conflicts_with = "image")]
    pub size: Option<String>,
    /// Take the grid size from an image
    #[arg(long)]
    pub image: Option<PathBuf>,
    #[arg(long, required = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[arg(long, required = true)]
    pub b: Option<PathBuf>,
    #[arg(long, required = true)]
    pub btilde: Option<PathBuf>,
    /// Require weak factoring
    #[arg(long)]
    pub weak: bool,
    /// Require strong factoring
    #[arg(long)]
    pub strong: bool,
    /// Require the non-expansiveness condition (0 ≤ σ ≤ 1)
    #[arg(long)]
    pub nepc: bool,
    /// Require the contraction condition (0 ≤ σ < 1)
    #[arg(long)]
    pub cpc: bool,
    /// Factoring tolerance
    #[arg(long, default_value_t = fixdecomp_core::filters::FACTOR_TOL)]
    pub tol: f64,
    /// Also write the verdict to DIR/verdict.json
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long, required = true)]
    pub input: Option<PathBuf>,
    #[arg(long, required = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ImportArgs {
    #[arg(long, required = true)]
    pub input: Option<PathBuf>,
    #[arg(long, required = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    #[arg(long, required = true)]
    pub b: Option<PathBuf>,
    #[arg(long, required = true)]
    pub btilde: Option<PathBuf>,
    #[arg(long, required = true)]
    pub out: Option<PathBuf>,
}

/// Caps rayon's pool at `FIXDECOMP_THREADS` when set.
fn configure_threads() -> Result<(), CliError> {
    let Some(raw) = std::env::var_os("FIXDECOMP_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .to_str()
        .and_then(|s| s.trim().parse().ok())
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("FIXDECOMP_THREADS must be a positive integer, got {raw:?}")))?;
    // A second call in the same process keeps the first pool.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Parses `args` (including the program name) and runs the command. Returns the exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit::USAGE } else { exit::OK };
        }
    };
    let result = configure_threads().and_then(|_| match cli.command {
        Command::Denoise(a) => commands::denoise(&a),
        Command::Decompose(a) => commands::decompose(&a),
        Command::Filters { command } => commands::filters(&command),
    });
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
