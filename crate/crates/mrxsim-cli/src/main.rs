//! `mrxsim`: forward simulation for magnetorelaxometry imaging from the
//! command line.
//!
//! Every successful run prints exactly one machine-readable line to stdout;
//! progress, timings, and warnings go to stderr. Exit codes: 0 on success,
//! 1 for domain and validation errors, 2 for I/O failures.

mod commands;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "mrxsim", version, about = "MRX imaging forward simulation")]
struct Cli {
    /// Size of the worker thread pool (default: one per core). Results are
    /// identical for any value.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct SetupConfigArgs {
    /// Path to the .mrxsetup document.
    #[arg(long)]
    setup: PathBuf,
    /// Path to the .mrxcfg document.
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args)]
struct PhysicsArgs {
    /// Field prefactor in T m/A (vacuum permeability over 4 pi).
    #[arg(long, default_value_t = 1e-7)]
    theta: f64,
    /// Dimensionless prefactor of the relaxation kernel.
    #[arg(long, default_value_t = 1.0 / 3.0)]
    kappa: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Create the on-disk tree for a named setup, seeded with the 2D starter.
    Scaffold {
        /// Name of the setup (becomes the directory and file stem).
        name: String,
        /// Base directory (default: $MRXSIM_SETUPS, then ./setups).
        #[arg(long)]
        base: Option<PathBuf>,
    },
    /// Check a setup and config pair and report every violation.
    Validate {
        #[command(flatten)]
        sc: SetupConfigArgs,
    },
    /// Assemble the combined system matrix and write it to a directory.
    Simulate {
        #[command(flatten)]
        sc: SetupConfigArgs,
        /// Output directory for system.mrxmat and system.toml.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        phys: PhysicsArgs,
    },
    /// Compute per-coil unit-current blocks and export them with a manifest.
    ExportRaw {
        #[command(flatten)]
        sc: SetupConfigArgs,
        /// Output directory for coil_NNNN.mrxraw files and manifest.toml.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        phys: PhysicsArgs,
        /// Overwrite an existing export.
        #[arg(long)]
        force: bool,
    },
    /// Recombine previously exported raw blocks into a system matrix.
    ImportRaw {
        #[command(flatten)]
        sc: SetupConfigArgs,
        /// Directory holding the raw export.
        #[arg(long)]
        raw: PathBuf,
        /// Output directory for system.mrxmat and system.toml.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        phys: PhysicsArgs,
    },
    /// Write the unit-current excitation field tables per active coil.
    ExportFields {
        #[command(flatten)]
        sc: SetupConfigArgs,
        /// Output directory for fields.coil_NNNN.dat files.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        phys: PhysicsArgs,
    },
    /// Build a named phantom and write it as text and binary tables.
    Phantom {
        /// Phantom name: shepplogan3d, tumor, F_2, P_1, or fwhmdots_<f>.
        #[arg(long)]
        name: String,
        /// Voxel resolution as nx,ny,nz.
        #[arg(long, value_parser = parse_res)]
        res: Res,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate a measurement of a phantom and write a dataset directory.
    Measure {
        #[command(flatten)]
        sc: SetupConfigArgs,
        /// Phantom name, or path to a .phantom.dat/.phantom.bin file.
        #[arg(long)]
        phantom: String,
        /// Particle susceptibility (dimensionless, positive).
        #[arg(long)]
        chi: f64,
        /// Total particle mass in milligram.
        #[arg(long)]
        mass_mg: f64,
        /// Output dataset directory.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        phys: PhysicsArgs,
    },
}

/// Newtype so clap can carry a parsed resolution triple.
#[derive(Clone, Copy)]
struct Res([usize; 3]);

fn parse_res(s: &str) -> Result<Res, String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("expected nx,ny,nz, got '{s}'"));
    }
    let mut res = [0usize; 3];
    for (i, p) in parts.iter().enumerate() {
        res[i] = p
            .trim()
            .parse()
            .map_err(|_| format!("'{p}' is not a voxel count"))?;
    }
    Ok(Res(res))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();

    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }

    match commands::run(cli.command) {
        Ok(line) => {
            println!("{line}");
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
