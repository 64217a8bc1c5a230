//! `sidelobe`: design and evaluate low-sidelobe pulse-compression filters
//! and waveforms from the command line.
//!
//! Exit codes: 0 success, 2 configuration or input error, 3 numerical
//! failure, 4 I/O error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sidelobe::rls::MainlobeShape;

mod commands;
mod config;
mod error;

use config::{RlsInit, WaveformKind};

#[derive(Parser, Debug)]
#[command(name = "sidelobe", version, about = "Low range-sidelobe pulse compression toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// JSON config (or a manifest.json from an earlier run of the same command)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Random seed (GA population, scene noise)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Fill in the published design parameters: 5 MHz, 20 µs, 12 MHz
    /// sampling, 480 taps, Tukey 0.1, GA population 200
    #[arg(long, global = true)]
    paper_defaults: bool,
}

#[derive(Args, Debug, Clone, Default)]
struct WaveformFlags {
    /// Transmit pulse family
    #[arg(long, value_enum)]
    waveform: Option<WaveformKind>,
    /// Swept bandwidth (Hz)
    #[arg(long)]
    bandwidth: Option<f64>,
    /// Pulse width (s)
    #[arg(long)]
    pulse_width: Option<f64>,
    /// Sample rate (Hz)
    #[arg(long)]
    sample_rate: Option<f64>,
    /// Tukey taper fraction for the LFM amplitude
    #[arg(long)]
    taper_alpha: Option<f64>,
    #[arg(long)]
    barker_length: Option<usize>,
    /// `index,re,im` table used with `--waveform file`
    #[arg(long)]
    waveform_file: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Matched and minimum-ISL mismatched filters with their metrics
    DesignIsl {
        #[command(flatten)]
        waveform: WaveformFlags,
        #[arg(long)]
        filter_length: Option<usize>,
        #[arg(long)]
        mainlobe_width: Option<usize>,
        /// Peak response of the min-ISL filter (defaults to the pulse energy)
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// RLS refinement of a mismatched filter with a per-iteration ISL trace
    OptimizeRls {
        #[command(flatten)]
        waveform: WaveformFlags,
        #[arg(long)]
        filter_length: Option<usize>,
        #[arg(long)]
        mainlobe_width: Option<usize>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        forgetting_factor: Option<f64>,
        #[arg(long)]
        regularization: Option<f64>,
        /// Starting filter
        #[arg(long, value_enum)]
        init: Option<RlsInit>,
        /// Desired mainlobe shape
        #[arg(long, value_parser = parse_shape)]
        shape: Option<MainlobeShape>,
    },
    /// Detect strong scatterers and CLEAN-estimate every range cell
    Clean {
        #[command(flatten)]
        waveform: WaveformFlags,
        /// Scene JSON `{cells: [{index, re, im}], noise_power, seed}`
        #[arg(long)]
        scene: Option<PathBuf>,
        /// Use the bundled two-scatterer scene and its 64-sample LFM
        #[arg(long)]
        demo_scene: bool,
        /// Number of range cells
        #[arg(long)]
        cells: Option<usize>,
        /// Detection threshold; derived from --pfa when omitted
        #[arg(long)]
        eta: Option<f64>,
        /// Per-cell false-alarm probability for the derived threshold
        #[arg(long)]
        pfa: Option<f64>,
    },
    /// Breeder GA search over Bezier NLFM frequency functions
    DesignNlfm {
        #[arg(long)]
        bandwidth: Option<f64>,
        #[arg(long)]
        pulse_width: Option<f64>,
        #[arg(long)]
        sample_rate: Option<f64>,
        #[arg(long)]
        filter_length: Option<usize>,
        #[arg(long)]
        mainlobe_width: Option<usize>,
        #[arg(long)]
        population: Option<usize>,
        #[arg(long)]
        generations: Option<usize>,
        #[arg(long)]
        stall_generations: Option<usize>,
        #[arg(long)]
        truncation: Option<f64>,
        #[arg(long)]
        mutation_rate: Option<f64>,
        /// Do not carry the best individual into the next generation
        #[arg(long)]
        no_elitism: bool,
    },
    /// ISL, PSL and SNR loss of a filter table against a waveform
    Metrics {
        #[command(flatten)]
        waveform: WaveformFlags,
        /// Filter coefficients as an `index,re,im` table
        #[arg(long)]
        filter: Option<PathBuf>,
        #[arg(long)]
        mainlobe_width: Option<usize>,
    },
}

fn parse_shape(s: &str) -> Result<MainlobeShape, String> {
    match s {
        "flat" => Ok(MainlobeShape::Flat),
        "triangular" => Ok(MainlobeShape::Triangular),
        _ => Err(format!("expected `flat` or `triangular`, got `{s}`")),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sidelobe: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
