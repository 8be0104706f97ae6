//! Binary persistence for per-coil raw blocks and combined system matrices.
//!
//! A raw export directory holds one `coil_NNNN.mrxraw` file per active coil
//! plus `manifest.toml`. Block layout, all integers little-endian:
//!
//! ```text
//! bytes 0..7    magic "MRXRAW1"
//! bytes 7..11   coil number, u32 (1-based setup index)
//! bytes 11..19  rows, u64 (sensors in the block)
//! bytes 19..27  cols, u64 (voxels)
//! bytes 27..59  fingerprint, 32 ASCII hex characters
//! bytes 59..    rows x cols values, f64, row-major
//! ```
//!
//! A combined matrix directory holds `system.mrxmat` plus `system.toml`, with
//! magic "MRXMAT1" and a `patterns` count after rows and cols.
//!
//! The manifest records which setup coils and sensors the blocks cover, so a
//! later import can select any subset without touching the geometry again.
//! The fingerprint ties blocks to the setup, resolution, and physics
//! constants that produced them; combining blocks from different exports is
//! refused up front instead of producing silently inconsistent matrices.

use super::{io_err, native::RoiFile, IoError};
use crate::fields::{create_voxel_grid, FieldWarning};
use crate::relaxation::{Fingerprint, SystemMatrix, SystemMatrixRaw};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

const RAW_MAGIC: &[u8; 7] = b"MRXRAW1";
const MAT_MAGIC: &[u8; 7] = b"MRXMAT1";
const MANIFEST_VERSION: u32 = 1;
const RAW_MANIFEST_FORMAT: &str = "mrxraw-manifest";
const MAT_MANIFEST_FORMAT: &str = "mrxmat-manifest";

#[derive(Serialize, Deserialize)]
struct RawManifestFile {
    format: String,
    version: i64,
    fingerprint: String,
    /// 1-based setup coil numbers, one per block, ascending.
    coils: Vec<i64>,
    /// 1-based setup sensor numbers, the row order of every block.
    sensors: Vec<i64>,
    res: [u64; 3],
    rows: u64,
    cols: u64,
    roi: RoiFile,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    warnings: Vec<WarningFile>,
}

#[derive(Serialize, Deserialize)]
struct MatManifestFile {
    format: String,
    version: i64,
    fingerprint: String,
    patterns: u64,
    coils: Vec<i64>,
    sensors: Vec<i64>,
    res: [u64; 3],
    rows: u64,
    cols: u64,
    roi: RoiFile,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    warnings: Vec<WarningFile>,
}

/// Field warnings are part of a simulation's result, so they travel with the
/// exported blocks and reappear on import.
#[derive(Serialize, Deserialize)]
struct WarningFile {
    kind: String,
    coil: i64,
}

impl WarningFile {
    fn from_warning(w: &FieldWarning) -> WarningFile {
        match *w {
            FieldWarning::SegmentsIgnored2d { coil } => {
                WarningFile { kind: "segments_ignored_2d".to_string(), coil: coil as i64 + 1 }
            }
            FieldWarning::DipoleFallback { coil } => {
                WarningFile { kind: "dipole_fallback".to_string(), coil: coil as i64 + 1 }
            }
        }
    }

    fn to_warning(&self, path: &Path) -> Result<FieldWarning, IoError> {
        if self.coil < 1 {
            return Err(IoError::Malformed {
                path: path.to_path_buf(),
                msg: format!("warning coil numbers are 1-based, got {}", self.coil),
            });
        }
        let coil = self.coil as usize - 1;
        match self.kind.as_str() {
            "segments_ignored_2d" => Ok(FieldWarning::SegmentsIgnored2d { coil }),
            "dipole_fallback" => Ok(FieldWarning::DipoleFallback { coil }),
            other => Err(IoError::Malformed {
                path: path.to_path_buf(),
                msg: format!("unknown warning kind '{other}'"),
            }),
        }
    }
}

fn block_file_name(coil_idx: usize) -> String {
    format!("coil_{:04}.mrxraw", coil_idx + 1)
}

fn check_strictly_increasing(list: &[usize], what: &'static str) -> Result<(), IoError> {
    if list.windows(2).any(|w| w[0] >= w[1]) || list.is_empty() {
        return Err(IoError::SelectionNotIncreasing { what });
    }
    Ok(())
}

fn encode_block(coil_idx: usize, fingerprint: &Fingerprint, block: &Array2<f64>) -> Vec<u8> {
    let (rows, cols) = block.dim();
    let mut bytes = Vec::with_capacity(59 + rows * cols * 8);
    bytes.extend_from_slice(RAW_MAGIC);
    bytes.extend_from_slice(&(coil_idx as u32 + 1).to_le_bytes());
    bytes.extend_from_slice(&(rows as u64).to_le_bytes());
    bytes.extend_from_slice(&(cols as u64).to_le_bytes());
    bytes.extend_from_slice(fingerprint.to_hex().as_bytes());
    for v in block.iter() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    bytes
}

struct BlockHeader {
    coil: usize,
    rows: usize,
    cols: usize,
    fingerprint: Fingerprint,
}

fn decode_block(path: &Path, bytes: &[u8]) -> Result<(BlockHeader, Array2<f64>), IoError> {
    let malformed = |msg: String| IoError::Malformed { path: path.to_path_buf(), msg };
    if bytes.len() < 59 {
        return Err(malformed(format!("file too short ({} bytes)", bytes.len())));
    }
    if &bytes[0..7] != RAW_MAGIC {
        return Err(IoError::WrongFormat { path: path.to_path_buf(), expected: "mrxraw" });
    }
    let coil_num = u32::from_le_bytes(bytes[7..11].try_into().expect("4 bytes")) as usize;
    let rows = u64::from_le_bytes(bytes[11..19].try_into().expect("8 bytes")) as usize;
    let cols = u64::from_le_bytes(bytes[19..27].try_into().expect("8 bytes")) as usize;
    let hex = std::str::from_utf8(&bytes[27..59])
        .map_err(|_| malformed("fingerprint is not ASCII hex".to_string()))?;
    let fingerprint = Fingerprint::from_hex(hex)
        .ok_or_else(|| malformed(format!("bad fingerprint '{hex}'")))?;
    if coil_num == 0 {
        return Err(malformed("coil number 0 (numbers are 1-based)".to_string()));
    }
    let want = 59 + rows * cols * 8;
    if bytes.len() != want {
        return Err(malformed(format!(
            "payload size mismatch: {rows} x {cols} needs {want} bytes, file has {}",
            bytes.len()
        )));
    }
    let values: Vec<f64> = bytes[59..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunks_exact yields 8 bytes")))
        .collect();
    let block = Array2::from_shape_vec((rows, cols), values).expect("sizes checked above");
    Ok((BlockHeader { coil: coil_num - 1, rows, cols, fingerprint }, block))
}

/// Writes every block of `raw` plus `manifest.toml` into `dir`. Refuses to
/// overwrite existing exports unless `force` is set; the check runs before
/// anything is written. Returns the number of blocks written.
pub fn export_raw(raw: &SystemMatrixRaw, dir: &Path, force: bool) -> Result<usize, IoError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let manifest_path = dir.join("manifest.toml");
    let mut paths = vec![manifest_path.clone()];
    for &coil_idx in &raw.active_coils {
        paths.push(dir.join(block_file_name(coil_idx)));
    }
    if !force {
        for p in &paths {
            if p.exists() {
                return Err(IoError::RefusesOverwrite { path: p.clone() });
            }
        }
    }

    let (rows, cols) = raw.blocks.first().map_or((0, 0), |b| b.dim());
    for ((block, &coil_idx), path) in
        raw.blocks.iter().zip(&raw.active_coils).zip(paths[1..].iter())
    {
        let bytes = encode_block(coil_idx, &raw.fingerprint, block);
        fs::write(path, bytes).map_err(io_err(path))?;
    }

    let manifest = RawManifestFile {
        format: RAW_MANIFEST_FORMAT.to_string(),
        version: MANIFEST_VERSION as i64,
        fingerprint: raw.fingerprint.to_hex(),
        coils: raw.active_coils.iter().map(|&i| i as i64 + 1).collect(),
        sensors: raw.active_sensors.iter().map(|&i| i as i64 + 1).collect(),
        res: [raw.grid.res[0] as u64, raw.grid.res[1] as u64, raw.grid.res[2] as u64],
        rows: rows as u64,
        cols: cols as u64,
        roi: RoiFile::from_roi(&raw.grid.roi),
        warnings: raw.warnings.iter().map(WarningFile::from_warning).collect(),
    };
    let text = toml::to_string(&manifest).expect("manifest serializes to TOML");
    super::write_text(&manifest_path, &text)?;
    Ok(raw.blocks.len())
}

fn read_raw_manifest(dir: &Path) -> Result<(RawManifestFile, PathBuf), IoError> {
    let path = dir.join("manifest.toml");
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let manifest: RawManifestFile = toml::from_str(&text)
        .map_err(|e| IoError::Malformed { path: path.clone(), msg: e.to_string() })?;
    if manifest.format != RAW_MANIFEST_FORMAT {
        return Err(IoError::WrongFormat { path, expected: RAW_MANIFEST_FORMAT });
    }
    if manifest.version != MANIFEST_VERSION as i64 {
        return Err(IoError::Version {
            path,
            kind: RAW_MANIFEST_FORMAT,
            found: manifest.version,
            expected: MANIFEST_VERSION,
        });
    }
    Ok((manifest, path))
}

fn manifest_index_list(
    raw: &[i64],
    what: &str,
    path: &Path,
) -> Result<Vec<usize>, IoError> {
    let mut out = Vec::with_capacity(raw.len());
    for &v in raw {
        if v < 1 {
            return Err(IoError::Malformed {
                path: path.to_path_buf(),
                msg: format!("{what} entries are 1-based, got {v}"),
            });
        }
        out.push(v as usize - 1);
    }
    Ok(out)
}

/// Reads blocks for the selected setup coils and selects the given sensor
/// rows, both 0-based and strictly increasing. Every requested coil must have
/// an exported block and every requested sensor must be covered by the
/// export; block fingerprints must agree with the manifest.
pub fn import_raw(
    dir: &Path,
    active_coils: &[usize],
    active_sensors: &[usize],
) -> Result<SystemMatrixRaw, IoError> {
    check_strictly_increasing(active_coils, "coil")?;
    check_strictly_increasing(active_sensors, "sensor")?;
    let (manifest, manifest_path) = read_raw_manifest(dir)?;
    let fingerprint = Fingerprint::from_hex(&manifest.fingerprint).ok_or_else(|| {
        IoError::Malformed {
            path: manifest_path.clone(),
            msg: format!("bad fingerprint '{}'", manifest.fingerprint),
        }
    })?;
    let exported_coils = manifest_index_list(&manifest.coils, "coils", &manifest_path)?;
    let exported_sensors = manifest_index_list(&manifest.sensors, "sensors", &manifest_path)?;

    // Map each requested sensor to its row in the exported blocks.
    let mut row_picks = Vec::with_capacity(active_sensors.len());
    for &s in active_sensors {
        match exported_sensors.iter().position(|&e| e == s) {
            Some(row) => row_picks.push(row),
            None => return Err(IoError::SensorNotExported { sensor: s + 1 }),
        }
    }

    let res = [manifest.res[0] as usize, manifest.res[1] as usize, manifest.res[2] as usize];
    let roi = manifest.roi.to_roi();
    let grid = create_voxel_grid(&roi, res)?;

    let mut blocks = Vec::with_capacity(active_coils.len());
    for &coil_idx in active_coils {
        if !exported_coils.contains(&coil_idx) {
            return Err(IoError::MissingCoilBlock { coil: coil_idx + 1 });
        }
        let path = dir.join(block_file_name(coil_idx));
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        let (header, block) = decode_block(&path, &bytes)?;
        let malformed = |msg: String| IoError::Malformed { path: path.clone(), msg };
        if header.coil != coil_idx {
            return Err(malformed(format!(
                "block is for coil {}, expected coil {}",
                header.coil + 1,
                coil_idx + 1
            )));
        }
        if header.fingerprint != fingerprint {
            return Err(malformed("block fingerprint differs from manifest".to_string()));
        }
        if header.rows != manifest.rows as usize || header.cols != manifest.cols as usize {
            return Err(malformed(format!(
                "block is {} x {}, manifest says {} x {}",
                header.rows, header.cols, manifest.rows, manifest.cols
            )));
        }
        if active_sensors == exported_sensors {
            blocks.push(block);
        } else {
            let mut picked = Array2::zeros((row_picks.len(), header.cols));
            for (out_row, &src_row) in row_picks.iter().enumerate() {
                picked.row_mut(out_row).assign(&block.row(src_row));
            }
            blocks.push(picked);
        }
    }

    // Warnings are per coil; keep those covered by this selection.
    let mut warnings = Vec::new();
    for w in &manifest.warnings {
        let warning = w.to_warning(&manifest_path)?;
        let coil = match warning {
            FieldWarning::SegmentsIgnored2d { coil } | FieldWarning::DipoleFallback { coil } => {
                coil
            }
        };
        if active_coils.contains(&coil) {
            warnings.push(warning);
        }
    }

    Ok(SystemMatrixRaw {
        blocks,
        active_coils: active_coils.to_vec(),
        active_sensors: active_sensors.to_vec(),
        grid,
        fingerprint,
        warnings,
    })
}

/// [`import_raw`] preceded by a fingerprint gate: the blocks must have been
/// produced by exactly this setup, resolution, and physics constants.
pub fn import_raw_checked(
    dir: &Path,
    setup: &crate::model::Setup,
    config: &crate::model::Config,
    physics: &crate::model::PhysicsParams,
) -> Result<SystemMatrixRaw, IoError> {
    let (manifest, manifest_path) = read_raw_manifest(dir)?;
    let stored = Fingerprint::from_hex(&manifest.fingerprint).ok_or_else(|| {
        IoError::Malformed {
            path: manifest_path,
            msg: format!("bad fingerprint '{}'", manifest.fingerprint),
        }
    })?;
    let requested = Fingerprint::compute(setup, config.res, physics);
    if stored != requested {
        return Err(IoError::FingerprintMismatch {
            stored: stored.to_hex(),
            requested: requested.to_hex(),
        });
    }
    import_raw(dir, &config.active_coils, &config.active_sensors)
}

/// Writes `system.mrxmat` plus `system.toml` into `dir`, mirroring the raw
/// export conventions. Refuses to overwrite unless `force` is set.
pub fn write_system_matrix(
    matrix: &SystemMatrix,
    dir: &Path,
    force: bool,
) -> Result<PathBuf, IoError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let bin_path = dir.join("system.mrxmat");
    let manifest_path = dir.join("system.toml");
    if !force {
        for p in [&bin_path, &manifest_path] {
            if p.exists() {
                return Err(IoError::RefusesOverwrite { path: p.clone() });
            }
        }
    }

    let (rows, cols) = matrix.matrix.dim();
    let mut bytes = Vec::with_capacity(63 + rows * cols * 8);
    bytes.extend_from_slice(MAT_MAGIC);
    bytes.extend_from_slice(&(rows as u64).to_le_bytes());
    bytes.extend_from_slice(&(cols as u64).to_le_bytes());
    bytes.extend_from_slice(&(matrix.num_patterns as u64).to_le_bytes());
    bytes.extend_from_slice(matrix.fingerprint.to_hex().as_bytes());
    for v in matrix.matrix.iter() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(&bin_path, bytes).map_err(io_err(&bin_path))?;

    let manifest = MatManifestFile {
        format: MAT_MANIFEST_FORMAT.to_string(),
        version: MANIFEST_VERSION as i64,
        fingerprint: matrix.fingerprint.to_hex(),
        patterns: matrix.num_patterns as u64,
        coils: matrix.active_coils.iter().map(|&i| i as i64 + 1).collect(),
        sensors: matrix.active_sensors.iter().map(|&i| i as i64 + 1).collect(),
        res: [
            matrix.grid.res[0] as u64,
            matrix.grid.res[1] as u64,
            matrix.grid.res[2] as u64,
        ],
        rows: rows as u64,
        cols: cols as u64,
        roi: RoiFile::from_roi(&matrix.grid.roi),
        warnings: matrix.warnings.iter().map(WarningFile::from_warning).collect(),
    };
    let text = toml::to_string(&manifest).expect("manifest serializes to TOML");
    super::write_text(&manifest_path, &text)?;
    Ok(bin_path)
}

pub fn read_system_matrix(dir: &Path) -> Result<SystemMatrix, IoError> {
    let manifest_path = dir.join("system.toml");
    let text = fs::read_to_string(&manifest_path).map_err(io_err(&manifest_path))?;
    let manifest: MatManifestFile = toml::from_str(&text)
        .map_err(|e| IoError::Malformed { path: manifest_path.clone(), msg: e.to_string() })?;
    if manifest.format != MAT_MANIFEST_FORMAT {
        return Err(IoError::WrongFormat { path: manifest_path, expected: MAT_MANIFEST_FORMAT });
    }
    if manifest.version != MANIFEST_VERSION as i64 {
        return Err(IoError::Version {
            path: manifest_path,
            kind: MAT_MANIFEST_FORMAT,
            found: manifest.version,
            expected: MANIFEST_VERSION,
        });
    }
    let fingerprint = Fingerprint::from_hex(&manifest.fingerprint).ok_or_else(|| {
        IoError::Malformed {
            path: manifest_path.clone(),
            msg: format!("bad fingerprint '{}'", manifest.fingerprint),
        }
    })?;

    let bin_path = dir.join("system.mrxmat");
    let bytes = fs::read(&bin_path).map_err(io_err(&bin_path))?;
    let malformed = |msg: String| IoError::Malformed { path: bin_path.clone(), msg };
    if bytes.len() < 63 {
        return Err(malformed(format!("file too short ({} bytes)", bytes.len())));
    }
    if &bytes[0..7] != MAT_MAGIC {
        return Err(IoError::WrongFormat { path: bin_path, expected: "mrxmat" });
    }
    let rows = u64::from_le_bytes(bytes[7..15].try_into().expect("8 bytes")) as usize;
    let cols = u64::from_le_bytes(bytes[15..23].try_into().expect("8 bytes")) as usize;
    let patterns = u64::from_le_bytes(bytes[23..31].try_into().expect("8 bytes")) as usize;
    let hex = std::str::from_utf8(&bytes[31..63])
        .map_err(|_| malformed("fingerprint is not ASCII hex".to_string()))?;
    let bin_fingerprint = Fingerprint::from_hex(hex)
        .ok_or_else(|| malformed(format!("bad fingerprint '{hex}'")))?;
    if bin_fingerprint != fingerprint {
        return Err(malformed("matrix fingerprint differs from manifest".to_string()));
    }
    if rows != manifest.rows as usize || cols != manifest.cols as usize {
        return Err(malformed(format!(
            "matrix is {rows} x {cols}, manifest says {} x {}",
            manifest.rows, manifest.cols
        )));
    }
    if patterns != manifest.patterns as usize {
        return Err(malformed(format!(
            "matrix stores {patterns} patterns, manifest says {}",
            manifest.patterns
        )));
    }
    let want = 63 + rows * cols * 8;
    if bytes.len() != want {
        return Err(malformed(format!(
            "payload size mismatch: {rows} x {cols} needs {want} bytes, file has {}",
            bytes.len()
        )));
    }
    let values: Vec<f64> = bytes[63..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunks_exact yields 8 bytes")))
        .collect();
    let matrix = Array2::from_shape_vec((rows, cols), values).expect("sizes checked above");

    let res = [manifest.res[0] as usize, manifest.res[1] as usize, manifest.res[2] as usize];
    let grid = create_voxel_grid(&manifest.roi.to_roi(), res)?;
    let active_coils = manifest_index_list(&manifest.coils, "coils", &dir.join("system.toml"))?;
    let active_sensors =
        manifest_index_list(&manifest.sensors, "sensors", &dir.join("system.toml"))?;
    let mut warnings = Vec::with_capacity(manifest.warnings.len());
    for w in &manifest.warnings {
        warnings.push(w.to_warning(&dir.join("system.toml"))?);
    }

    Ok(SystemMatrix {
        matrix,
        num_patterns: patterns,
        active_coils,
        active_sensors,
        grid,
        fingerprint,
        warnings,
    })
}
