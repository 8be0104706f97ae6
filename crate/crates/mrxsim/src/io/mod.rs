//! Persistence for every on-disk artifact.
//!
//! - [`native`]: the structured `.mrxsetup` / `.mrxcfg` documents.
//! - [`raw`]: binary per-coil matrix blocks and combined system matrices,
//!   guarded by a content fingerprint.
//! - [`dataset`]: the six whitespace-delimited text tables of a measurement
//!   dataset, plus measurement simulation.
//!
//! Text formats share one convention: whitespace-delimited columns, one row
//! per line, `#`-prefixed comment lines, LF endings, floats at 12 significant
//! digits, integers bare, and 1-based indices. Binary formats are
//! little-endian with fixed magic strings.

pub mod dataset;
pub mod native;
pub mod raw;

use crate::fields::{ExcitationFieldSet, FieldError};
use crate::model::ModelError;
use crate::phantom::{Phantom, PhantomError};
use crate::relaxation::RelaxError;
use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    /// Environment-level failure (missing file, permissions, disk). The CLI
    /// maps this variant to exit code 2; everything else is a domain error.
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error("{path}: {msg}")]
    Malformed { path: PathBuf, msg: String },
    #[error("{path}: unsupported {kind} version {found}, this build reads version {expected}")]
    Version { path: PathBuf, kind: &'static str, found: i64, expected: u32 },
    #[error("{path}: not a {expected} file")]
    WrongFormat { path: PathBuf, expected: &'static str },
    #[error("refusing to overwrite {path} (pass force to allow)")]
    RefusesOverwrite { path: PathBuf },
    #[error("fingerprint mismatch: stored {stored}, requested {requested}")]
    FingerprintMismatch { stored: String, requested: String },
    #[error("no raw block exported for coil {coil}")]
    MissingCoilBlock { coil: usize },
    #[error("sensor {sensor} is not part of the exported raw blocks")]
    SensorNotExported { sensor: usize },
    #[error("{what} selection must be strictly increasing")]
    SelectionNotIncreasing { what: &'static str },
    #[error("measurement vector has {got} entries, expected {want}")]
    MeasurementLengthMismatch { got: usize, want: usize },
    #[error("phantom sums to {0}; a positive total is required for mass normalization")]
    NonpositivePhantomSum(f64),
    #[error("phantom resolution {phantom:?} does not match config resolution {config:?}")]
    PhantomResMismatch { phantom: [usize; 3], config: [usize; 3] },
    #[error("susceptibility must be positive and finite, got {0}")]
    NonpositiveChi(f64),
    #[error("particle mass must be positive and finite, got {0}")]
    NonpositiveMass(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Relax(#[from] RelaxError),
    #[error(transparent)]
    Phantom(#[from] PhantomError),
}

impl IoError {
    /// True for environment failures (exit code 2 territory); false for
    /// domain/validation errors (exit code 1).
    pub fn is_environment(&self) -> bool {
        matches!(self, IoError::Io { .. })
    }
}

/// Non-fatal findings collected while reading or writing files.
#[derive(Debug, Clone, PartialEq)]
pub enum IoWarning {
    /// Forward compatibility: the file carries a key this build does not know.
    UnknownField { path: PathBuf, key: String },
    /// A normal in the file was not unit length and has been normalized.
    NormalizedNormal { path: PathBuf, entity: &'static str, index: usize },
    /// Dataset text tables cannot store coil orientations; import assumes +z.
    CoilNormalAssumedZ { coil: usize },
    /// Sensor listed in sensors.dat but absent from the relax table; dropped.
    OrphanSensorDropped { sensor_id: i64 },
    /// Sensor removed because it was listed as defective.
    DefectiveSensorDropped { sensor_id: i64 },
}

impl fmt::Display for IoWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IoWarning::UnknownField { path, key } => {
                write!(f, "{}: unknown field '{key}' ignored", path.display())
            }
            IoWarning::NormalizedNormal { path, entity, index } => write!(
                f,
                "{}: {entity} {} normal was not unit length, normalized",
                path.display(),
                index + 1
            ),
            IoWarning::CoilNormalAssumedZ { coil } => write!(
                f,
                "coil {}: orientation not representable in coilGrid.dat, +z assumed on re-import",
                coil + 1
            ),
            IoWarning::OrphanSensorDropped { sensor_id } => {
                write!(f, "sensor id {sensor_id} has no relax rows, dropped")
            }
            IoWarning::DefectiveSensorDropped { sensor_id } => {
                write!(f, "sensor id {sensor_id} listed as defective, dropped")
            }
        }
    }
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io { path: path.to_path_buf(), source }
}

/// 12-significant-digit decimal text, the fixed format of every float column.
pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x:.11e}")
}

/// Parses one whitespace-delimited numeric table: `#` lines and blank lines
/// are skipped, every remaining line must have exactly `cols` fields. Each
/// returned row carries its 1-based line number for error reporting.
pub(crate) fn read_table_lines(
    path: &Path,
    cols: usize,
) -> Result<Vec<(usize, Vec<f64>)>, IoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut rows = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != cols {
            return Err(IoError::Parse {
                path: path.to_path_buf(),
                line: ln + 1,
                msg: format!("expected {cols} columns, got {}", fields.len()),
            });
        }
        let mut row = Vec::with_capacity(cols);
        for (ci, field) in fields.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| IoError::Parse {
                path: path.to_path_buf(),
                line: ln + 1,
                msg: format!("column {}: '{field}' is not a number", ci + 1),
            })?;
            row.push(v);
        }
        rows.push((ln + 1, row));
    }
    Ok(rows)
}

pub(crate) fn read_table(path: &Path, cols: usize) -> Result<Vec<Vec<f64>>, IoError> {
    Ok(read_table_lines(path, cols)?.into_iter().map(|(_, row)| row).collect())
}

/// Interprets a table cell as an integer, rejecting fractional values.
pub(crate) fn cell_as_int(
    path: &Path,
    line_hint: usize,
    col: usize,
    v: f64,
) -> Result<i64, IoError> {
    if v.fract() != 0.0 || !v.is_finite() || v.abs() >= 9.0e15 {
        return Err(IoError::Parse {
            path: path.to_path_buf(),
            line: line_hint,
            msg: format!("column {col}: expected an integer, got {v}"),
        });
    }
    Ok(v as i64)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    f.write_all(bytes).map_err(io_err(path))?;
    Ok(())
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    write_atomic(path, text.as_bytes())
}

/// Writes one text table per active coil: `fields.coil_NNNN.dat` with columns
/// x y z Bx By Bz (SI units), rows in voxel grid order. Returns the paths.
/// Existing files are overwritten; the export is deterministic, so a rerun
/// reproduces them byte for byte.
pub fn write_field_tables(
    fields: &ExcitationFieldSet,
    dir: &Path,
) -> Result<Vec<PathBuf>, IoError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut paths = Vec::with_capacity(fields.fields.len());
    for (fi, &coil_idx) in fields.active_coils.iter().enumerate() {
        let path = dir.join(format!("fields.coil_{:04}.dat", coil_idx + 1));
        let mut text = String::new();
        text.push_str(&format!("# unit-current excitation field of coil {}\n", coil_idx + 1));
        text.push_str("# x[m] y[m] z[m] Bx[T/A] By[T/A] Bz[T/A]\n");
        for (w, b) in fields.grid.centers.iter().zip(fields.fields[fi].iter()) {
            text.push_str(&format!(
                "{} {} {} {} {} {}\n",
                fmt_f64(w.x),
                fmt_f64(w.y),
                fmt_f64(w.z),
                fmt_f64(b.x),
                fmt_f64(b.y),
                fmt_f64(b.z),
            ));
        }
        write_text(&path, &text)?;
        paths.push(path);
    }
    Ok(paths)
}

/// Writes a phantom twice: `<name>.phantom.dat` (columns i j k value with
/// 1-based voxel indices) and `<name>.phantom.bin` (flat little-endian f64 in
/// grid order). Returns both paths.
pub fn write_phantom_tables(phantom: &Phantom, dir: &Path) -> Result<(PathBuf, PathBuf), IoError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let dat_path = dir.join(format!("{}.phantom.dat", phantom.name));
    let bin_path = dir.join(format!("{}.phantom.bin", phantom.name));

    let [nx, ny, nz] = phantom.res;
    let mut text = String::new();
    text.push_str(&format!("# phantom '{}' on a [{nx}, {ny}, {nz}] grid\n", phantom.name));
    text.push_str("# i j k value (1-based voxel indices, x fastest)\n");
    let mut idx = 0;
    for k in 1..=nz {
        for j in 1..=ny {
            for i in 1..=nx {
                text.push_str(&format!("{i} {j} {k} {}\n", fmt_f64(phantom.values[idx])));
                idx += 1;
            }
        }
    }
    write_text(&dat_path, &text)?;

    let mut bytes = Vec::with_capacity(phantom.values.len() * 8);
    for v in &phantom.values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    write_atomic(&bin_path, &bytes)?;

    Ok((dat_path, bin_path))
}

/// Reads a phantom back from either format of [`write_phantom_tables`],
/// dispatching on the `.bin` extension. `res` must be supplied; the binary
/// format is a bare value stream and the text format is validated against it.
pub fn read_phantom_file(path: &Path, res: [usize; 3]) -> Result<Phantom, IoError> {
    let n = res[0] * res[1] * res[2];
    let name = path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
        .trim_end_matches(".bin")
        .trim_end_matches(".dat")
        .trim_end_matches(".phantom")
        .to_string();

    if path.extension().is_some_and(|e| e == "bin") {
        let bytes = fs::read(path).map_err(io_err(path))?;
        if bytes.len() != n * 8 {
            return Err(IoError::Malformed {
                path: path.to_path_buf(),
                msg: format!("expected {} bytes for {n} voxels, found {}", n * 8, bytes.len()),
            });
        }
        let values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunks_exact yields 8 bytes")))
            .collect();
        return Ok(Phantom { values, res, name });
    }

    let rows = read_table(path, 4)?;
    if rows.len() != n {
        return Err(IoError::Malformed {
            path: path.to_path_buf(),
            msg: format!("expected {n} voxel rows, found {}", rows.len()),
        });
    }
    let mut values = vec![0.0; n];
    let mut seen = vec![false; n];
    for (ri, row) in rows.iter().enumerate() {
        let i = cell_as_int(path, ri + 1, 1, row[0])?;
        let j = cell_as_int(path, ri + 1, 2, row[1])?;
        let k = cell_as_int(path, ri + 1, 3, row[2])?;
        let in_range = |v: i64, n: usize| v >= 1 && v <= n as i64;
        if !in_range(i, res[0]) || !in_range(j, res[1]) || !in_range(k, res[2]) {
            return Err(IoError::Parse {
                path: path.to_path_buf(),
                line: ri + 1,
                msg: format!("voxel index ({i}, {j}, {k}) outside resolution {res:?}"),
            });
        }
        let idx = (i as usize - 1) + res[0] * ((j as usize - 1) + res[1] * (k as usize - 1));
        if seen[idx] {
            return Err(IoError::Parse {
                path: path.to_path_buf(),
                line: ri + 1,
                msg: format!("duplicate voxel index ({i}, {j}, {k})"),
            });
        }
        seen[idx] = true;
        values[idx] = row[3];
    }
    Ok(Phantom { values, res, name })
}

/// Creates the conventional on-disk tree for a named setup under `base` and
/// seeds it with the 2D starter preset:
///
/// ```text
/// base/<name>/
///   <name>.mrxsetup
///   configs/10.10.1/singleSequential/default.mrxcfg
///   configs/10.10.1/singleSequential/results/
///   raw/
///   scripts/
/// ```
///
/// Existing files are left untouched, so rescaffolding never clobbers edits.
/// Returns the setup directory.
pub fn scaffold_setup_tree(base: &Path, name: &str) -> Result<PathBuf, IoError> {
    let (setup, config) = crate::presets::default_2d();
    let root = base.join(name);
    let res_dir = format!("{}.{}.{}", config.res[0], config.res[1], config.res[2]);
    let config_dir = root.join("configs").join(res_dir).join("singleSequential");

    for dir in [
        root.clone(),
        config_dir.join("results"),
        root.join("raw"),
        root.join("scripts"),
    ] {
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    }

    let setup_path = root.join(format!("{name}.mrxsetup"));
    if !setup_path.exists() {
        native::save_setup(&setup, &setup_path)?;
    }
    let config_path = config_dir.join("default.mrxcfg");
    if !config_path.exists() {
        native::save_config(&config, &config_path)?;
    }
    Ok(root)
}

/// Resolves the setups base directory: an explicit flag wins, then the
/// `MRXSIM_SETUPS` environment variable, then `./setups`.
pub fn setups_base(flag: Option<&Path>) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Some(env) = std::env::var_os("MRXSIM_SETUPS") {
        if !env.is_empty() {
            return PathBuf::from(env);
        }
    }
    PathBuf::from("setups")
}
