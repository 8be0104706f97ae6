//! One function per subcommand; each returns the single stdout line.

use crate::{Command, PhysicsArgs, Res, SetupConfigArgs};
use mrxsim::io::{self, dataset, native, raw, IoError};
use mrxsim::model::{validate_pair, Config, PhysicsParams, Setup, ValidationReport};
use mrxsim::phantom::create_phantom;
use mrxsim::relaxation::{apply_current_pattern, create_system_matrix, system_matrix_raw};
use mrxsim::{create_voxel_grid, Phantom};
use std::fmt;
use std::path::Path;
use std::time::Instant;

#[derive(Debug)]
pub enum CliError {
    Io(IoError),
    Invalid(ValidationReport),
    Domain(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Io(e) => write!(f, "{e}"),
            CliError::Invalid(report) => write!(f, "{report}"),
            CliError::Domain(msg) => write!(f, "{msg}"),
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        CliError::Io(e)
    }
}

impl From<mrxsim::relaxation::RelaxError> for CliError {
    fn from(e: mrxsim::relaxation::RelaxError) -> Self {
        CliError::Io(IoError::Relax(e))
    }
}

impl From<mrxsim::phantom::PhantomError> for CliError {
    fn from(e: mrxsim::phantom::PhantomError) -> Self {
        CliError::Io(IoError::Phantom(e))
    }
}

impl From<mrxsim::model::ModelError> for CliError {
    fn from(e: mrxsim::model::ModelError) -> Self {
        CliError::Io(IoError::Model(e))
    }
}

impl From<mrxsim::fields::FieldError> for CliError {
    fn from(e: mrxsim::fields::FieldError) -> Self {
        CliError::Io(IoError::Field(e))
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(e) if e.is_environment() => 2,
            _ => 1,
        }
    }
}

fn load_pair(sc: &SetupConfigArgs) -> Result<(Setup, Config), CliError> {
    let setup = native::load_setup(&sc.setup)?;
    let config = native::load_config(&sc.config)?;
    Ok((setup, config))
}

/// Validates and either logs the warnings or fails with the full report.
fn require_valid(setup: &Setup, config: &Config) -> Result<(), CliError> {
    let report = validate_pair(setup, config);
    for w in &report.warnings {
        log::warn!("{w}");
    }
    if report.is_ok() {
        Ok(())
    } else {
        Err(CliError::Invalid(report))
    }
}

fn physics(phys: &PhysicsArgs) -> Result<PhysicsParams, CliError> {
    Ok(PhysicsParams::new(phys.theta, phys.kappa)?)
}

/// A phantom argument is either a file written by the phantom command or a
/// generator name for the configured resolution.
fn resolve_phantom(arg: &str, res: [usize; 3]) -> Result<Phantom, CliError> {
    let path = Path::new(arg);
    if path.is_file() {
        return Ok(io::read_phantom_file(path, res)?);
    }
    Ok(create_phantom(arg, res)?)
}

pub fn run(command: Command) -> Result<String, CliError> {
    match command {
        Command::Scaffold { name, base } => {
            let base = io::setups_base(base.as_deref());
            let dir = io::scaffold_setup_tree(&base, &name)?;
            Ok(format!("scaffold ok dir={}", dir.display()))
        }

        Command::Validate { sc } => {
            let (setup, config) = load_pair(&sc)?;
            require_valid(&setup, &config)?;
            Ok("setup OK, config OK, compatible".to_string())
        }

        Command::Simulate { sc, out, phys } => {
            let (setup, config) = load_pair(&sc)?;
            require_valid(&setup, &config)?;
            let physics = physics(&phys)?;
            let started = Instant::now();
            let matrix = create_system_matrix(&setup, &config, &physics)?;
            log::info!(
                "assembled {} x {} system matrix in {:.2?}",
                matrix.matrix.nrows(),
                matrix.matrix.ncols(),
                started.elapsed()
            );
            for w in &matrix.warnings {
                log::warn!("{w}");
            }
            raw::write_system_matrix(&matrix, &out, true)?;
            Ok(format!(
                "simulate ok rows={} cols={} out={}",
                matrix.matrix.nrows(),
                matrix.matrix.ncols(),
                out.display()
            ))
        }

        Command::ExportRaw { sc, out, phys, force } => {
            let (setup, config) = load_pair(&sc)?;
            require_valid(&setup, &config)?;
            let physics = physics(&phys)?;
            let started = Instant::now();
            let blocks = system_matrix_raw(&setup, &config, &physics)?;
            log::info!("computed {} raw blocks in {:.2?}", blocks.blocks.len(), started.elapsed());
            for w in &blocks.warnings {
                log::warn!("{w}");
            }
            let n = raw::export_raw(&blocks, &out, force)?;
            let (rows, cols) = blocks.blocks.first().map_or((0, 0), |b| b.dim());
            Ok(format!(
                "export-raw ok coils={n} rows={rows} cols={cols} out={}",
                out.display()
            ))
        }

        Command::ImportRaw { sc, raw: raw_dir, out, phys } => {
            let (setup, config) = load_pair(&sc)?;
            require_valid(&setup, &config)?;
            let physics = physics(&phys)?;
            let blocks = raw::import_raw_checked(&raw_dir, &setup, &config, &physics)?;
            for w in &blocks.warnings {
                log::warn!("{w}");
            }
            let matrix = apply_current_pattern(&blocks, &config.current_pattern)?;
            raw::write_system_matrix(&matrix, &out, true)?;
            Ok(format!(
                "import-raw ok rows={} cols={} out={}",
                matrix.matrix.nrows(),
                matrix.matrix.ncols(),
                out.display()
            ))
        }

        Command::ExportFields { sc, out, phys } => {
            let (setup, config) = load_pair(&sc)?;
            require_valid(&setup, &config)?;
            let physics = physics(&phys)?;
            let grid = create_voxel_grid(&setup.roi, config.res)?;
            let fields = mrxsim::fields::create_excitation_fields(&setup, &config, &grid, &physics)?;
            for w in &fields.warnings {
                log::warn!("{w}");
            }
            let paths = io::write_field_tables(&fields, &out)?;
            Ok(format!("export-fields ok coils={} out={}", paths.len(), out.display()))
        }

        Command::Phantom { name, res: Res(res), out } => {
            let phantom = create_phantom(&name, res)?;
            let nonzero = phantom.values.iter().filter(|&&v| v != 0.0).count();
            io::write_phantom_tables(&phantom, &out)?;
            Ok(format!(
                "phantom ok name={} voxels={} nonzero={nonzero} out={}",
                phantom.name,
                phantom.voxel_count(),
                out.display()
            ))
        }

        Command::Measure { sc, phantom, chi, mass_mg, out, phys } => {
            let (setup, config) = load_pair(&sc)?;
            require_valid(&setup, &config)?;
            let physics = physics(&phys)?;
            let phantom = resolve_phantom(&phantom, config.res)?;

            // Dataset relax rows address exactly one driven coil per group,
            // so the pattern must be diagonal (the sequential preset shape).
            let p = &config.current_pattern;
            let n = config.active_coils.len();
            let diagonal = p.nrows() == n
                && p.ncols() == n
                && p.indexed_iter().all(|((r, c), &v)| (r == c) != (v == 0.0));
            if !diagonal {
                return Err(CliError::Domain(
                    "measure needs a sequential current pattern (one driven coil per row)"
                        .to_string(),
                ));
            }
            let currents: Vec<f64> = (0..n).map(|r| p[[r, r]]).collect();

            let started = Instant::now();
            let y = dataset::simulate_measurement(&setup, &config, &physics, &phantom, chi, mass_mg)?;
            log::info!("simulated {} relax amplitudes in {:.2?}", y.len(), started.elapsed());

            let measured = dataset::restricted_setup(&setup, &config);
            let records = dataset::measurement_records(&measured.sensors, n, &y)?;
            let grid = create_voxel_grid(&setup.roi, config.res)?;
            let data = dataset::Dataset {
                setup: measured,
                sets: vec![dataset::MeasurementSet { index: 1, currents, records }],
                defective_sensors: Vec::new(),
            };
            let warnings = dataset::write_dataset_tables(&data, &grid, &out)?;
            for w in &warnings {
                log::warn!("{w}");
            }
            Ok(format!("measure ok rows={} out={}", y.len(), out.display()))
        }
    }
}
