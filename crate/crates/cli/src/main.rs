//! `sawstack`: layered SAW dispersion, mBVD synthesis and one-port extraction.
//!
//! Exit codes: 0 success, 2 invalid input, 3 solver failure.

mod commands;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::Failure;

#[derive(Debug, Parser)]
#[command(name = "sawstack", version, about = "Thin-film SAW resonator design and extraction toolkit")]
pub struct Cli {
    /// Material constants file (JSON); the bundled set is used when omitted
    #[arg(long, global = true, value_name = "FILE")]
    pub materials: Option<PathBuf>,
    /// Directory for output files and the run manifest
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    pub out_dir: PathBuf,
    /// Reserved; recorded in the manifest, no command is stochastic
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Format of tabular outputs
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn ext(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Guided-mode branches of a layered stack over an h/λ grid
    Dispersion(DispersionArgs),
    /// fs, fp, k_eff² and Bode-Q from a measured .s1p file
    Extract(ExtractArgs),
    /// Synthetic mBVD resonator response (.s1p and admittance table)
    Synth(SynthArgs),
    /// Resonance drift across sweeps taken at several drive powers
    Power(PowerArgs),
    /// Benchmark table of the bundled comparison data
    Bench(BenchArgs),
    /// Material database utilities
    Materials {
        #[command(subcommand)]
        action: MaterialsAction,
    },
}

#[derive(Debug, Args)]
pub struct DispersionArgs {
    /// Stack description (JSON)
    #[arg(long, value_name = "FILE")]
    pub stack: PathBuf,
    /// Piezoelectric film thickness, m
    #[arg(long = "h", value_name = "METRES")]
    pub h: f64,
    /// h/λ values as start:stop:step or a comma-separated list
    #[arg(long, allow_hyphen_values = true)]
    pub grid: String,
    /// Branch table [default: dispersion.<format>]
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Also write the design table (fs = v·(h/λ)/h) here
    #[arg(long, value_name = "FILE")]
    pub design: Option<PathBuf>,
    /// Velocity scan points across the subsonic window
    #[arg(long, default_value_t = 2000)]
    pub scan_points: usize,
    /// Solve the full (u1, u2, u3, φ) problem instead of the sagittal one
    #[arg(long)]
    pub coupled: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Conductance,
    Magnitude,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    Paper,
    Feld,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long, value_name = "FILE")]
    pub s1p: PathBuf,
    #[arg(long, value_enum, default_value_t = VariantArg::Paper)]
    pub variant: VariantArg,
    /// 5-point quadratic smoothing before differentiating
    #[arg(long)]
    pub smooth: bool,
    #[arg(long, value_enum, default_value_t = MethodArg::Conductance)]
    pub method: MethodArg,
    /// Minimum |Y| peak prominence, dB
    #[arg(long, default_value_t = 6.0)]
    pub prominence_db: f64,
    /// Fit an mBVD model around each resonance
    #[arg(long)]
    pub fit: bool,
    /// Report JSON [default: extract.json]
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Q curve [default: q.<format>]
    #[arg(long, value_name = "FILE")]
    pub q_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Series resonance, Hz
    #[arg(long)]
    pub fs: f64,
    /// k_eff²
    #[arg(long)]
    pub k2: f64,
    /// Static capacitance, F
    #[arg(long)]
    pub c0: f64,
    /// Motional quality factor
    #[arg(long)]
    pub q: f64,
    /// Frequencies in Hz as start:stop:step or a comma-separated list
    #[arg(long)]
    pub grid: String,
    /// Series resistance, Ω
    #[arg(long, default_value_t = 0.0)]
    pub rs: f64,
    /// Resistance in series with C0, Ω
    #[arg(long, default_value_t = 0.0)]
    pub r0: f64,
    /// Reference impedance of the .s1p, Ω
    #[arg(long, default_value_t = 50.0)]
    pub z0: f64,
    /// [default: synth.s1p]
    #[arg(long, value_name = "FILE")]
    pub s1p_out: Option<PathBuf>,
    /// Admittance table [default: admittance.<format>]
    #[arg(long, value_name = "FILE")]
    pub y_out: Option<PathBuf>,
    /// [default: model.json]
    #[arg(long, value_name = "FILE")]
    pub model_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PowerArgs {
    /// One file per power level, in measurement order
    #[arg(long, num_args = 1.., required = true, value_name = "FILE")]
    pub s1p: Vec<PathBuf>,
    /// Drive powers in dBm, comma-separated, one per file
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    pub powers: Vec<f64>,
    /// [default: drift.json]
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Also write the table in the selected format
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum MaterialsAction {
    /// Check every entry and print bulk velocities along x
    Validate,
}

fn run(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Dispersion(args) => commands::dispersion(cli, args),
        Command::Extract(args) => commands::extract(cli, args),
        Command::Synth(args) => commands::synth(cli, args),
        Command::Power(args) => commands::power(cli, args),
        Command::Bench(args) => commands::bench(cli, args),
        Command::Materials {
            action: MaterialsAction::Validate,
        } => commands::materials_validate(cli),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("sawstack: {failure}");
            ExitCode::from(failure.code)
        }
    }
}
