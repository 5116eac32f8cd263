mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use lightstore::analysis::PeakMeasure;
use lightstore::sequence::format::parse_number;

/// Simulates storage of light pulses in an EIT medium, their Zeeman phase
/// manipulation and interferometric retrieval.
#[derive(Debug, Parser)]
#[command(name = "lightstore", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check an experiment file; exit 0 only if it is free of errors and warnings.
    Validate {
        file: PathBuf,
        /// Print diagnostics as a JSON array on standard error.
        #[arg(long)]
        json: bool,
    },
    /// Simulate one experiment and write its detector and field traces.
    Run {
        file: PathBuf,
        #[command(flatten)]
        out: OutDir,
        /// Also write the space-time field snapshots.
        #[arg(long)]
        snapshots: bool,
        /// Steps between snapshots when the file sets none.
        #[arg(long, default_value_t = 500)]
        snapshot_stride: usize,
        #[arg(long)]
        json: bool,
    },
    /// Repeat an experiment over evenly stepped Zeeman phases and fit the fringe.
    Sweep {
        file: PathBuf,
        #[command(flatten)]
        out: OutDir,
        /// Number of runs.
        #[arg(long, default_value_t = 20)]
        n: usize,
        /// Phase span; run k applies k·span/n. Accepts a `pi` suffix.
        #[arg(long, default_value = "4pi", value_parser = phase_arg)]
        phi_max: f64,
        /// How each run's retrieval peak is read off the detector.
        #[arg(long, value_enum, default_value_t = Measure::FieldPeak)]
        measure: Measure,
        /// Run the sweep on one thread.
        #[arg(long)]
        serial: bool,
        #[arg(long)]
        json: bool,
    },
    /// Tabulate the EIT susceptibility and report the transparency width.
    Spectrum {
        file: PathBuf,
        #[command(flatten)]
        out: OutDir,
        /// Two-photon detuning range `lo:hi` in rad/µs.
        #[arg(long, default_value = "-1:1", value_parser = range_arg, allow_hyphen_values = true)]
        delta_range: (f64, f64),
        #[arg(long, default_value_t = 801)]
        points: usize,
        #[arg(long)]
        json: bool,
    },
    /// Print a built-in scenario as an experiment file.
    Scenario {
        /// fig2a, fig2b, fig3_trace(k), slowlight, opacity, or `list`.
        name: String,
    },
}

#[derive(Debug, Args)]
struct OutDir {
    /// Output directory.
    #[arg(long = "out", env = "LIGHTSTORE_OUT_DIR", default_value = ".")]
    dir: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Measure {
    FieldPeak,
    ChannelMax,
    Energy,
}

impl From<Measure> for PeakMeasure {
    fn from(m: Measure) -> Self {
        match m {
            Measure::FieldPeak => PeakMeasure::FieldPeak,
            Measure::ChannelMax => PeakMeasure::ChannelMax,
            Measure::Energy => PeakMeasure::Energy,
        }
    }
}

fn phase_arg(s: &str) -> Result<f64, String> {
    parse_number(s)
        .filter(|x| x.is_finite())
        .ok_or_else(|| format!("not a number: {s}"))
}

fn range_arg(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(':').ok_or("expected lo:hi")?;
    let lo = phase_arg(lo.trim())?;
    let hi = phase_arg(hi.trim())?;
    if lo < hi {
        Ok((lo, hi))
    } else {
        Err(format!("empty range {s}"))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(commands::EXIT_VALIDATION),
            };
        }
    };
    let (json, result) = match cli.command {
        Command::Validate { file, json } => (json, commands::validate(&file)),
        Command::Run {
            file,
            out,
            snapshots,
            snapshot_stride,
            json,
        } => (json, commands::run(&file, &out.dir, snapshots.then_some(snapshot_stride), json)),
        Command::Sweep {
            file,
            out,
            n,
            phi_max,
            measure,
            serial,
            json,
        } => (json, commands::sweep(&file, &out.dir, n, phi_max, measure.into(), !serial, json)),
        Command::Spectrum {
            file,
            out,
            delta_range,
            points,
            json,
        } => (json, commands::spectrum(&file, &out.dir, delta_range, points, json)),
        Command::Scenario { name } => (false, commands::scenario(&name)),
    };
    match result {
        Ok(report) => {
            print!("{report}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            e.report(json);
            ExitCode::from(e.exit_code())
        }
    }
}
