mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::Failure;
use crate::config::{AlgorithmKind, RunConfig};

/// Method-of-mappings shape optimization for stationary Navier-Stokes flow.
///
/// Log verbosity is read from MAPSHAPE_LOG (error, warn, info, debug, trace).
#[derive(Parser, Debug)]
#[command(name = "mapshape", version)]
struct Cli {
    /// Run configuration (`key = value` lines, `#` comments).
    #[arg(long, global = true, default_value = "mapshape.conf")]
    config: PathBuf,
    /// Output directory; overrides the `output` key.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Overrides the `algorithm` key.
    #[arg(long, global = true)]
    algorithm: Option<AlgorithmKind>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Load the mesh and print counts and element quality.
    CheckMesh,
    /// Solve the state equation on the reference domain.
    SolveFlow,
    /// Run the continuation optimizer.
    Optimize,
    /// Worst element quality of the optimum for several η_ext.
    QualitySweep {
        #[arg(long, value_delimiter = ',', default_value = "0,0.5,1,1.5,2,3")]
        eta_ext: Vec<f64>,
    },
    /// Determinant-penalty activity of the optimum for decreasing η_det.
    DetSweep {
        #[arg(long, value_delimiter = ',', default_value = "0.5,0.25,0.2,0.1")]
        eta_det: Vec<f64>,
    },
    /// Finite-difference check of every block of the KKT gradient.
    GradCheck,
    /// Apply the displacement stored in a solution file to the mesh.
    Deform {
        /// VTK file with a nodal `w` field; defaults to `<output>/solution.vtk`.
        input: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("MAPSHAPE_LOG", "info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = RunConfig::load(&cli.config)
        .map_err(|e| Failure::Config(e.into()))
        .and_then(|mut cfg| {
            if let Some(o) = cli.output {
                cfg.output = o;
            }
            if let Some(a) = cli.algorithm {
                cfg.algorithm = a;
                cfg.validate().map_err(|m| Failure::Config(anyhow::anyhow!("{}: {m}", cli.config.display())))?;
            }
            commands::dispatch(&cfg, &cli.command)
        });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error());
            ExitCode::from(f.code())
        }
    }
}
