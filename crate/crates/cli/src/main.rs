//! specdet: spectral target detection from the command line.
//!
//! Four subcommands cover the loop of an experiment: `synth` writes a seeded
//! scene to disk, `detect` scores a cube with one detector, `verify` checks
//! the two detector relationships numerically and encodes the result in its
//! exit status, and `compare` runs all three detectors and emits plot-ready
//! tables. Run `specdet <subcommand> --help` for the flags.

mod commands;
mod manifest;
mod util;

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "specdet", version, about = "Spectral target detection and verification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Generate a seeded synthetic scene
    Synth(SynthArgs),
    /// Score a cube with one detector
    Detect(DetectArgs),
    /// Check the detector relationships and exit 0 only if certified
    Verify(VerifyArgs),
    /// Run all three detectors and emit comparison tables
    Compare(CompareArgs),
}

#[derive(Args)]
pub struct SynthArgs {
    /// Scene description as key = value lines; omit for the built-in scene
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override the seed from the config
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory for scene.hdr, scene.img, truth.csv, target.csv
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct DetectArgs {
    /// Cube to score: header path, payload path, or bare stem
    #[arg(long)]
    pub input: PathBuf,
    /// Target signature file, one value per line
    #[arg(long)]
    pub target: PathBuf,
    /// Detector to run
    #[arg(long, value_enum)]
    pub algorithm: Algorithm,
    /// Restrict cem to these 1-based bands, e.g. 1,3
    #[arg(long)]
    pub subset: Option<String>,
    /// Detection map format
    #[arg(long, value_enum, default_value_t = MapFormat::Envi)]
    pub format: MapFormat,
    /// Diagonal loading as a fraction of the mean band power
    #[arg(long)]
    pub ridge: Option<f64>,
    /// Emit the summary as key = value lines
    #[arg(long)]
    pub machine_readable: bool,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct VerifyArgs {
    /// Cube to check: header path, payload path, or bare stem
    #[arg(long)]
    pub input: PathBuf,
    /// Target signature file, one value per line
    #[arg(long)]
    pub target: PathBuf,
    /// Which relationship to check
    #[arg(long, value_enum, default_value_t = Check::Both)]
    pub check: Check,
    /// Relative tolerance for both checks
    #[arg(long, default_value_t = 1e-10)]
    pub tolerance: f64,
    /// Not accepted here: certification runs on unmodified statistics
    #[arg(long)]
    pub ridge: Option<f64>,
    /// Write the report as key = value lines
    #[arg(long)]
    pub machine_readable: bool,
    /// Optional directory for report.txt
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct CompareArgs {
    /// Cube to score: header path, payload path, or bare stem
    #[arg(long)]
    pub input: PathBuf,
    /// Target signature file, one value per line
    #[arg(long)]
    pub target: PathBuf,
    /// Truth mask as row,col,flag lines; enables the AUC table
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Algorithm {
    Cem,
    Mf,
    Acem,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MapFormat {
    Envi,
    Csv,
    Pgm16,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Check {
    Theorem1,
    Theorem2,
    Both,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}
