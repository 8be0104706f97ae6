//! Sensor response kernel and system matrix assembly.
//!
//! The relaxation amplitude a sensor sees from a magnetized voxel is a dipole
//! field projected onto the sensor normal. Assembling that response for every
//! (sensor, voxel) pair per active coil yields the raw per-coil blocks; a
//! current pattern combines them linearly into the final forward operator.
//!
//! Everything here is deterministic by construction: parallel loops only ever
//! split work across independent output elements and the per-element
//! reduction order is fixed, so repeated runs (at any thread count) produce
//! bit-identical matrices.

use crate::fields::{
    create_excitation_fields, create_voxel_grid, FieldError, FieldWarning, VoxelGrid,
};
use crate::math::{dipole_kernel_matrix, Mat3, Vec3};
use crate::model::{validate_pair, Config, PhysicsParams, Sensor, Setup, ValidationReport};
use std::fmt;

use ndarray::{Array2, ArrayView1};
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RelaxError {
    #[error("zero displacement: dipole kernel is singular")]
    ZeroDisplacement,
    #[error("sensor at ({0}, {1}, {2}) coincides with a voxel center")]
    SensorAtVoxel(f64, f64, f64),
    #[error("setup/config validation failed:\n{0}")]
    Invalid(ValidationReport),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("pattern has {pattern} columns but raw holds {blocks} coil blocks")]
    PatternWidthMismatch { pattern: usize, blocks: usize },
    #[error("concentration vector has length {got}, matrix expects {want}")]
    LengthMismatch { got: usize, want: usize },
    #[error("concentration vector contains a non-finite value")]
    NonFiniteConcentration,
    #[error("matrix entry overflowed (coil {coil}, sensor row {sensor}, voxel {voxel})")]
    NonFiniteEntry { coil: usize, sensor: usize, voxel: usize },
}

/// 16-byte content hash identifying a (setup, resolution, physics) triple.
///
/// Raw blocks exported to disk carry it so that recombination can reject
/// blocks computed for different geometry. Active coil/sensor subsets and the
/// current pattern deliberately stay outside the hash: recombining subsets of
/// the same geometry is the point of the raw export.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fingerprint(pub [u8; 16]);

impl Fingerprint {
    pub fn compute(setup: &Setup, res: [usize; 3], physics: &PhysicsParams) -> Fingerprint {
        let mut h = Sha256::new();
        let f = |h: &mut Sha256, x: f64| h.update(x.to_le_bytes());
        let v = |h: &mut Sha256, p: Vec3| {
            h.update(p.x.to_le_bytes());
            h.update(p.y.to_le_bytes());
            h.update(p.z.to_le_bytes());
        };

        h.update(b"MRX-FP-1");
        h.update([setup.dim.as_u8()]);
        for iv in [setup.roi.x, setup.roi.y, setup.roi.z] {
            f(&mut h, iv.lo);
            f(&mut h, iv.hi);
        }
        h.update((setup.coils.len() as u64).to_le_bytes());
        for coil in &setup.coils {
            v(&mut h, coil.position);
            v(&mut h, coil.normal);
            match &coil.segments {
                None => h.update([0u8]),
                Some(points) => {
                    h.update([1u8]);
                    h.update((points.len() as u64).to_le_bytes());
                    for &p in points {
                        v(&mut h, p);
                    }
                }
            }
        }
        h.update((setup.sensors.len() as u64).to_le_bytes());
        for s in &setup.sensors {
            v(&mut h, s.position);
            v(&mut h, s.normal);
            h.update(s.sensor_id.to_le_bytes());
            h.update(s.channel_id.to_le_bytes());
            h.update(s.group_id.to_le_bytes());
        }
        for n in res {
            h.update((n as u64).to_le_bytes());
        }
        f(&mut h, physics.theta);
        f(&mut h, physics.kernel_prefactor);

        let digest = h.finalize();
        let mut out = [0u8; 16];
        out.copy_from_slice(&digest[..16]);
        Fingerprint(out)
    }

    pub fn to_hex(self) -> String {
        self.0.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn from_hex(s: &str) -> Option<Fingerprint> {
        let s = s.trim();
        if s.len() != 32 || !s.is_ascii() {
            return None;
        }
        let mut out = [0u8; 16];
        for (i, chunk) in s.as_bytes().chunks(2).enumerate() {
            let hi = (chunk[0] as char).to_digit(16)?;
            let lo = (chunk[1] as char).to_digit(16)?;
            out[i] = (hi * 16 + lo) as u8;
        }
        Some(Fingerprint(out))
    }
}

impl fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_hex())
    }
}

/// Per-coil unit-current response blocks, each |active sensors| × |voxels|.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemMatrixRaw {
    /// One block per active coil, in `active_coils` order.
    pub blocks: Vec<Array2<f64>>,
    pub active_coils: Vec<usize>,
    pub active_sensors: Vec<usize>,
    pub grid: VoxelGrid,
    pub fingerprint: Fingerprint,
    pub warnings: Vec<FieldWarning>,
}

impl SystemMatrixRaw {
    pub fn sensors_per_block(&self) -> usize {
        self.blocks.first().map_or(0, |b| b.nrows())
    }
}

/// The pattern-combined forward operator.
///
/// Rows are ordered sensor-major within pattern: row `p·S + s` holds pattern
/// p's response on active sensor s.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemMatrix {
    pub matrix: Array2<f64>,
    pub num_patterns: usize,
    pub active_coils: Vec<usize>,
    pub active_sensors: Vec<usize>,
    pub grid: VoxelGrid,
    pub fingerprint: Fingerprint,
    pub warnings: Vec<FieldWarning>,
}

/// Point-dipole response kernel `3 r r^T/|r|^5 - I/|r|^3` with a singularity
/// check.
pub fn dipole_kernel(r: Vec3) -> Result<Mat3, RelaxError> {
    if r == Vec3::ZERO {
        return Err(RelaxError::ZeroDisplacement);
    }
    Ok(dipole_kernel_matrix(r))
}

/// Response of one sensor to the magnetization of one voxel:
/// `kappa · n · (K(x - w) · b_coil)` where `x`, `n` are the sensor position
/// and normal, `w` the voxel center, and `b_coil` the excitation field there.
pub fn sensor_response(
    sensor: &Sensor,
    w: Vec3,
    b_coil: Vec3,
    kernel_prefactor: f64,
) -> Result<f64, RelaxError> {
    let r = sensor.position - w;
    if r == Vec3::ZERO {
        return Err(RelaxError::SensorAtVoxel(w.x, w.y, w.z));
    }
    Ok(sensor.normal.dot(dipole_kernel_matrix(r).mul_vec(b_coil)) * kernel_prefactor)
}

/// Assembles the per-coil unit-current blocks: validates the pair, builds the
/// voxel grid, evaluates the excitation fields, then fills each block with
/// `sensor_response · V_quad` (midpoint quadrature weight).
pub fn system_matrix_raw(
    setup: &Setup,
    config: &Config,
    physics: &PhysicsParams,
) -> Result<SystemMatrixRaw, RelaxError> {
    let report = validate_pair(setup, config);
    if !report.is_ok() {
        return Err(RelaxError::Invalid(report));
    }

    let grid = create_voxel_grid(&setup.roi, config.res)?;
    let fieldset = create_excitation_fields(setup, config, &grid, physics)?;
    let v_quad = grid.quadrature_weight();
    let n_voxels = grid.voxel_count();
    let kappa = physics.kernel_prefactor;

    let sensors: Vec<&Sensor> =
        config.active_sensors.iter().map(|&i| &setup.sensors[i]).collect();

    let mut blocks = Vec::with_capacity(fieldset.fields.len());
    for (bi, field) in fieldset.fields.iter().enumerate() {
        // Rows are independent; the collect keeps sensor order, so the block
        // is identical at any thread count.
        let rows: Result<Vec<Vec<f64>>, RelaxError> = sensors
            .par_iter()
            .enumerate()
            .map(|(si, sensor)| {
                let mut row = Vec::with_capacity(n_voxels);
                for (vi, (&w, &b)) in grid.centers.iter().zip(field.iter()).enumerate() {
                    let val = sensor_response(sensor, w, b, kappa)? * v_quad;
                    if !val.is_finite() {
                        return Err(RelaxError::NonFiniteEntry { coil: bi, sensor: si, voxel: vi });
                    }
                    row.push(val);
                }
                Ok(row)
            })
            .collect();
        let rows = rows?;
        let mut block = Array2::zeros((sensors.len(), n_voxels));
        for (si, row) in rows.into_iter().enumerate() {
            block.row_mut(si).assign(&ArrayView1::from(&row));
        }
        blocks.push(block);
    }

    Ok(SystemMatrixRaw {
        blocks,
        active_coils: fieldset.active_coils,
        active_sensors: config.active_sensors.clone(),
        grid,
        fingerprint: Fingerprint::compute(setup, config.res, physics),
        warnings: fieldset.warnings,
    })
}

/// Combines raw blocks under a current pattern: output rows for pattern p are
/// `sum_c pattern[p][c] · block[c]`, summed in ascending coil order. Zero
/// coefficients are skipped; with the fixed order this keeps the combination
/// deterministic.
pub fn apply_current_pattern(
    raw: &SystemMatrixRaw,
    pattern: &Array2<f64>,
) -> Result<SystemMatrix, RelaxError> {
    if pattern.ncols() != raw.blocks.len() {
        return Err(RelaxError::PatternWidthMismatch {
            pattern: pattern.ncols(),
            blocks: raw.blocks.len(),
        });
    }
    let s = raw.sensors_per_block();
    let n_voxels = raw.grid.voxel_count();
    let p = pattern.nrows();

    let mut matrix = Array2::zeros((p * s, n_voxels));
    for pi in 0..p {
        let mut acc = matrix.slice_mut(ndarray::s![pi * s..(pi + 1) * s, ..]);
        for (ci, block) in raw.blocks.iter().enumerate() {
            let coeff = pattern[[pi, ci]];
            if coeff != 0.0 {
                acc.scaled_add(coeff, block);
            }
        }
    }

    Ok(SystemMatrix {
        matrix,
        num_patterns: p,
        active_coils: raw.active_coils.clone(),
        active_sensors: raw.active_sensors.clone(),
        grid: raw.grid.clone(),
        fingerprint: raw.fingerprint,
        warnings: raw.warnings.clone(),
    })
}

/// The full assembly pipeline: raw blocks, then the config's current pattern.
pub fn create_system_matrix(
    setup: &Setup,
    config: &Config,
    physics: &PhysicsParams,
) -> Result<SystemMatrix, RelaxError> {
    let raw = system_matrix_raw(setup, config, physics)?;
    apply_current_pattern(&raw, &config.current_pattern)
}

/// Applies the forward operator to a concentration vector (one value per
/// voxel, grid order). The result is the stacked sensor readings in tesla,
/// sensor-major within pattern.
pub fn forward_apply(a: &SystemMatrix, c: &[f64]) -> Result<Vec<f64>, RelaxError> {
    if c.len() != a.matrix.ncols() {
        return Err(RelaxError::LengthMismatch { got: c.len(), want: a.matrix.ncols() });
    }
    if c.iter().any(|v| !v.is_finite()) {
        return Err(RelaxError::NonFiniteConcentration);
    }
    Ok(a.matrix.dot(&ArrayView1::from(c)).to_vec())
}
