mod commands;
mod config;

use clap::{Parser, Subcommand};
use config::CommonArgs;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, Parser)]
#[command(
    name = "cardiofem",
    version,
    about = "Wall deformation and strain mapping from ventricle contours"
)]
struct Cli {
    #[command(flatten)]
    common: CommonArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check the solver against the pressurised-ring closed form
    PhantomVerify {
        /// Phantom ring spec (JSON); defaults to a = 1, b = 2, E = 1e4, nu = 0.3
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Internal pressure [default: last spec pressure, else 1]
        #[arg(long)]
        pressure: Option<f64>,
    },
    /// Volume curve, per-frame fields, sector time series and localization
    Analyze {
        /// Study manifest
        #[arg(long)]
        study: Option<PathBuf>,
        /// Manifest of a normal reference subject (repeatable)
        #[arg(long)]
        reference: Vec<PathBuf>,
        /// Frame-to-frame instead of frame-0 reference
        #[arg(long)]
        incremental: bool,
    },
    /// Write a deterministic synthetic study
    Synth {
        /// healthy, mi-wedge or phantom-cycle
        #[arg(long)]
        kind: Option<cardiofem::synth::SynthKind>,
        /// Frames per cycle [default: 20]
        #[arg(long)]
        frames: Option<usize>,
        /// Points per contour [default: 32]
        #[arg(long)]
        points: Option<usize>,
        /// Contraction amplitude scale [default: 1]
        #[arg(long)]
        amplitude: Option<f64>,
    },
    /// Build and check the frame-0 mesh
    Mesh {
        #[command(flatten)]
        input: commands::FieldInput,
    },
    /// Solve for the displacement field of one frame
    Solve {
        #[command(flatten)]
        input: commands::FieldInput,
        /// Also write the constrained system in Matrix Market format
        #[arg(long)]
        dump_system: bool,
    },
    /// Strain map and sector summary of one frame
    Strain {
        #[command(flatten)]
        input: commands::FieldInput,
    },
    /// Ventricle volume curve
    Volume {
        /// Study manifest
        #[arg(long)]
        study: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = config::RunConfig::load(&cli.common)
        .map_err(commands::Failure::Usage)
        .and_then(|mut cfg| match cli.command {
            Command::PhantomVerify { spec, pressure } => {
                cfg.phantom = spec.or(cfg.phantom);
                cfg.pressure = pressure.or(cfg.pressure);
                commands::phantom_verify(&cfg)
            }
            Command::Analyze {
                study,
                reference,
                incremental,
            } => {
                cfg.study = study.or(cfg.study);
                if !reference.is_empty() {
                    cfg.reference = reference;
                }
                if incremental {
                    cfg.reference_mode = cardiofem::cardio::DeformationReference::Incremental;
                }
                commands::analyze(&cfg)
            }
            Command::Synth {
                kind,
                frames,
                points,
                amplitude,
            } => {
                cfg.synth_kind = kind.unwrap_or(cfg.synth_kind);
                cfg.synth.n_frames = frames.unwrap_or(cfg.synth.n_frames);
                cfg.synth.n_points = points.unwrap_or(cfg.synth.n_points);
                cfg.synth.amplitude = amplitude.unwrap_or(cfg.synth.amplitude);
                commands::synth(&cfg)
            }
            Command::Mesh { input } => commands::mesh(&cfg, &input),
            Command::Solve { input, dump_system } => commands::solve(&cfg, &input, dump_system),
            Command::Strain { input } => commands::strain(&cfg, &input),
            Command::Volume { study } => {
                cfg.study = study.or(cfg.study);
                commands::volume(&cfg)
            }
        });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error());
            ExitCode::from(f.code())
        }
    }
}
