//! Excitation field computation on the voxel grid.
//!
//! Coils are driven at unit current here; actual currents enter later through
//! the pattern matrix. 3D coils with a segment polyline use the closed-form
//! field of straight conductor segments; coils without segments, and every
//! coil in a 2D setup, use the unit-moment point-dipole approximation.

use crate::math::{dipole_kernel_matrix, Vec3};
use crate::model::{Config, Dim, PhysicsParams, Roi, Setup};
use std::fmt;

use rayon::prelude::*;
use thiserror::Error;

/// Relative point-to-line distance below which a segment contributes zero
/// field. Inside this tube the field diverges physically and the closed-form
/// denominator can vanish; dropped contributions are logged at debug level.
pub const SEGMENT_GUARD: f64 = 1e-12;

/// The region of interest discretized into axis-aligned voxels.
///
/// Centers sit at cell midpoints: per axis `lo + (i - 0.5)·(hi - lo)/n` for
/// `i` in 1..=n. Linearization is x-fastest, then y, then z. Degenerate axes
/// (lo = hi) get voxel size 0 with all centers on the layer.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    pub centers: Vec<Vec3>,
    /// Per-axis edge length (m); 0 on degenerate axes.
    pub voxel_size: Vec3,
    pub res: [usize; 3],
    pub roi: Roi,
}

impl VoxelGrid {
    pub fn voxel_count(&self) -> usize {
        self.res[0] * self.res[1] * self.res[2]
    }

    /// Linear index of voxel (i, j, k), x fastest.
    pub fn linear_index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.res[0] * (j + self.res[1] * k)
    }

    /// Midpoint-rule quadrature weight: the product of nonzero voxel size
    /// components. Degenerate axes contribute factor 1, so 2D grids weight by
    /// area; values on such grids are per-area densities.
    pub fn quadrature_weight(&self) -> f64 {
        let mut w = 1.0;
        for axis in 0..3 {
            let s = self.voxel_size[axis];
            if s > 0.0 {
                w *= s;
            }
        }
        w
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum FieldError {
    #[error("resolution must be >= 1 on the {axis} axis")]
    NonpositiveResolution { axis: char },
    #[error("roi {axis}-interval is inverted or non-finite")]
    InvalidRoi { axis: char },
    #[error("degenerate segment: consecutive points coincide")]
    DegenerateSegment,
    #[error("coil has no segment polyline")]
    MissingSegments,
    #[error("dipole coil position coincides with an evaluation point at ({0}, {1}, {2})")]
    DipoleSingularity(f64, f64, f64),
    #[error("voxel grid was built for resolution {grid:?}, config wants {config:?}")]
    GridMismatch { grid: [usize; 3], config: [usize; 3] },
    #[error("active coil index {0} out of range")]
    CoilIndexOutOfRange(usize),
    #[error("field value overflowed at voxel {voxel} of coil {coil}")]
    NonFiniteField { coil: usize, voxel: usize },
}

/// Non-fatal conditions met while computing fields. Coil indices are 0-based
/// in memory, 1-based in display output.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldWarning {
    /// 2D setups always use the dipole model; the stored segments were unused.
    SegmentsIgnored2d { coil: usize },
    /// A 3D coil without segments fell back to the dipole model.
    DipoleFallback { coil: usize },
}

impl fmt::Display for FieldWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldWarning::SegmentsIgnored2d { coil } => write!(
                f,
                "coil {}: segments ignored, 2D setups use the dipole model",
                coil + 1
            ),
            FieldWarning::DipoleFallback { coil } => write!(
                f,
                "coil {}: no segments present, falling back to the dipole model",
                coil + 1
            ),
        }
    }
}

/// Unit-current fields of the active coils sampled at every voxel center.
#[derive(Debug, Clone, PartialEq)]
pub struct ExcitationFieldSet {
    pub grid: VoxelGrid,
    /// 0-based indices into the setup coil list, ascending.
    pub active_coils: Vec<usize>,
    /// One array per active coil, indexed by voxel (T/A).
    pub fields: Vec<Vec<Vec3>>,
    pub warnings: Vec<FieldWarning>,
}

/// Discretizes a region of interest at the given resolution.
pub fn create_voxel_grid(roi: &Roi, res: [usize; 3]) -> Result<VoxelGrid, FieldError> {
    for (axis, n) in [('x', res[0]), ('y', res[1]), ('z', res[2])] {
        if n == 0 {
            return Err(FieldError::NonpositiveResolution { axis });
        }
    }
    for (axis, iv) in [('x', roi.x), ('y', roi.y), ('z', roi.z)] {
        if !iv.is_finite() || iv.lo > iv.hi {
            return Err(FieldError::InvalidRoi { axis });
        }
    }

    let step = Vec3::new(
        roi.x.len() / res[0] as f64,
        roi.y.len() / res[1] as f64,
        roi.z.len() / res[2] as f64,
    );
    let axis_centers = |lo: f64, s: f64, n: usize| -> Vec<f64> {
        (1..=n).map(|i| lo + (i as f64 - 0.5) * s).collect()
    };
    let xs = axis_centers(roi.x.lo, step.x, res[0]);
    let ys = axis_centers(roi.y.lo, step.y, res[1]);
    let zs = axis_centers(roi.z.lo, step.z, res[2]);

    let mut centers = Vec::with_capacity(res[0] * res[1] * res[2]);
    for &z in &zs {
        for &y in &ys {
            for &x in &xs {
                centers.push(Vec3::new(x, y, z));
            }
        }
    }
    Ok(VoxelGrid { centers, voxel_size: step, res, roi: *roi })
}

/// Field of a straight conductor segment from `a` to `b` at unit current,
/// evaluated at `w` (T/A):
///
/// `theta · (|u| + |v|) / (|u||v|) · (u × v) / (|u||v| + u·v)` with
/// `u = a - w`, `v = b - w`.
///
/// Observation points within [`SEGMENT_GUARD`]·|b−a| of the supporting line
/// yield a zero vector (the contribution is dropped and logged). `theta`
/// multiplies last, so scaling it scales the result exactly.
pub fn segment_field(a: Vec3, b: Vec3, w: Vec3, theta: f64) -> Result<Vec3, FieldError> {
    if a == b {
        return Err(FieldError::DegenerateSegment);
    }
    let u = a - w;
    let v = b - w;
    let cross = u.cross(v);
    let seg_len = (b - a).norm();
    // |u x v| = |b-a| * (point-to-line distance).
    if cross.norm() <= SEGMENT_GUARD * seg_len * seg_len {
        log::debug!(
            "segment contribution dropped: point ({}, {}, {}) on the supporting line",
            w.x,
            w.y,
            w.z
        );
        return Ok(Vec3::ZERO);
    }
    let nu = u.norm();
    let nv = v.norm();
    let denom = nu * nv + u.dot(v);
    let scale = (nu + nv) / (nu * nv * denom);
    Ok(cross * scale * theta)
}

/// Field of a segmented coil at unit current: the sum of [`segment_field`]
/// over consecutive polyline points, in listed order. The fixed order makes
/// results independent of any outer parallelism.
pub fn coil_field(coil: &crate::model::Coil, w: Vec3, theta: f64) -> Result<Vec3, FieldError> {
    let points = coil.segments.as_ref().ok_or(FieldError::MissingSegments)?;
    if points.len() < 2 {
        return Err(FieldError::MissingSegments);
    }
    let mut total = Vec3::ZERO;
    for pair in points.windows(2) {
        total = total + segment_field(pair[0], pair[1], w, theta)?;
    }
    Ok(total)
}

/// Unit-moment point-dipole approximation of a coil: `theta · K(r) · n̂` with
/// `r = w - position` and `K` the dipole kernel. Errors when `w` coincides
/// with the coil position; that is a misconfigured geometry, never a value.
pub fn dipole_coil_field(
    coil: &crate::model::Coil,
    w: Vec3,
    theta: f64,
) -> Result<Vec3, FieldError> {
    let r = w - coil.position;
    if r == Vec3::ZERO {
        return Err(FieldError::DipoleSingularity(w.x, w.y, w.z));
    }
    Ok(dipole_kernel_matrix(r).mul_vec(coil.normal) * theta)
}

/// Evaluates the unit-current field of every active coil at every voxel
/// center of `grid`.
///
/// Model choice per coil: 2D setups always use the dipole model (segments are
/// ignored with a warning); 3D coils use the segment sum when a polyline is
/// present and fall back to the dipole model (with a warning) otherwise.
///
/// Voxels are evaluated in parallel; per-coil segment summation order is
/// fixed, so the output is bit-identical regardless of thread count.
pub fn create_excitation_fields(
    setup: &Setup,
    config: &Config,
    grid: &VoxelGrid,
    physics: &PhysicsParams,
) -> Result<ExcitationFieldSet, FieldError> {
    if grid.res != config.res {
        return Err(FieldError::GridMismatch { grid: grid.res, config: config.res });
    }

    let mut warnings = Vec::new();
    let mut fields = Vec::with_capacity(config.active_coils.len());
    for &ci in &config.active_coils {
        let coil = setup.coils.get(ci).ok_or(FieldError::CoilIndexOutOfRange(ci))?;
        let as_dipole = match setup.dim {
            Dim::Two => {
                if coil.segments.is_some() {
                    let w = FieldWarning::SegmentsIgnored2d { coil: ci };
                    log::warn!("{w}");
                    warnings.push(w);
                }
                true
            }
            Dim::Three => {
                if coil.segments.is_none() {
                    let w = FieldWarning::DipoleFallback { coil: ci };
                    log::warn!("{w}");
                    warnings.push(w);
                }
                coil.segments.is_none()
            }
        };
        let field: Result<Vec<Vec3>, FieldError> = grid
            .centers
            .par_iter()
            .map(|&w| {
                if as_dipole {
                    dipole_coil_field(coil, w, physics.theta)
                } else {
                    coil_field(coil, w, physics.theta)
                }
            })
            .collect();
        fields.push(field?);
    }

    Ok(ExcitationFieldSet {
        grid: grid.clone(),
        active_coils: config.active_coils.clone(),
        fields,
        warnings,
    })
}
