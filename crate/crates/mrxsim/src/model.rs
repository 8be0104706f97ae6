//! Domain types for measurement setups and experiment configs, geometric
//! construction helpers, and validation.
//!
//! A [`Setup`] describes the hardware side of an experiment: the region of
//! interest, the excitation coils, and the sensors. A [`Config`] describes how
//! that hardware is driven: voxel resolution, the current pattern matrix, and
//! which coils/sensors take part. Both are plain data; all behavior lives in
//! free functions so values stay trivially serializable and comparable.
//!
//! Indices are 0-based everywhere in memory. File formats and human-facing
//! reports use 1-based indices; the conversion happens at the boundary.

use crate::math::{rotation_from_z, Vec3};
use std::fmt;

use ndarray::Array2;
use thiserror::Error;

/// Unit-normal tolerance: |len - 1| must stay below this for validation.
pub const NORMAL_TOL: f64 = 1e-9;
/// Absolute z-coherence tolerance for 2D setups (meters).
pub const Z_TOL: f64 = 1e-9;

/// Spatial dimensionality of a setup.
///
/// 2D setups live on a single z-layer: the roi z-interval is degenerate, every
/// entity sits on that layer, and coils act as point dipoles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dim {
    Two,
    Three,
}

impl Dim {
    pub fn as_u8(self) -> u8 {
        match self {
            Dim::Two => 2,
            Dim::Three => 3,
        }
    }

    pub fn from_u8(v: u8) -> Option<Dim> {
        match v {
            2 => Some(Dim::Two),
            3 => Some(Dim::Three),
            _ => None,
        }
    }
}

/// A closed interval [lo, hi] in meters. Degenerate (lo = hi) is legal and is
/// how 2D setups collapse the z axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn is_degenerate(&self) -> bool {
        self.lo == self.hi
    }

    pub fn is_finite(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }
}

/// Axis-aligned region of interest.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Roi {
    pub x: Interval,
    pub y: Interval,
    pub z: Interval,
}

impl Roi {
    pub const fn new(x: Interval, y: Interval, z: Interval) -> Self {
        Roi { x, y, z }
    }

    pub fn axis(&self, i: usize) -> Interval {
        match i {
            0 => self.x,
            1 => self.y,
            2 => self.z,
            _ => panic!("roi axis {i} out of range"),
        }
    }
}

/// An excitation coil.
///
/// `segments`, when present, is an ordered polyline in absolute coordinates;
/// consecutive points form the conductor segments. Coils without segments are
/// treated as unit-moment point dipoles along `normal`.
#[derive(Debug, Clone, PartialEq)]
pub struct Coil {
    /// Coil center (m).
    pub position: Vec3,
    /// Unit normal of the coil plane.
    pub normal: Vec3,
    /// Conductor polyline (m); `None` selects the dipole model.
    pub segments: Option<Vec<Vec3>>,
}

/// An oriented point magnetometer.
#[derive(Debug, Clone, PartialEq)]
pub struct Sensor {
    /// Sensor location (m).
    pub position: Vec3,
    /// Unit measurement direction: the sensor reads the field projection onto it.
    pub normal: Vec3,
    /// Unique id within a setup.
    pub sensor_id: i64,
    /// Readout channel tag; carried through untouched, never used for physics.
    pub channel_id: i64,
    /// Sensor group tag; carried through untouched, never used for physics.
    pub group_id: i64,
}

/// Hardware description: region of interest plus coil and sensor lists.
#[derive(Debug, Clone, PartialEq)]
pub struct Setup {
    pub dim: Dim,
    pub roi: Roi,
    pub coils: Vec<Coil>,
    pub sensors: Vec<Sensor>,
}

/// Experiment configuration paired with a [`Setup`].
///
/// `current_pattern` has one row per applied pattern and one column per active
/// coil (amperes). `active_coils`/`active_sensors` hold 0-based indices into
/// the setup lists, strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub res: [usize; 3],
    pub current_pattern: Array2<f64>,
    pub active_coils: Vec<usize>,
    pub active_sensors: Vec<usize>,
}

impl Config {
    pub fn num_patterns(&self) -> usize {
        self.current_pattern.nrows()
    }
}

/// Physical constants of the forward model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicsParams {
    /// Biot-Savart prefactor theta (T·m/A); mu0/(4·pi) for vacuum.
    pub theta: f64,
    /// Dimensionless kernel prefactor kappa applied to the sensor response.
    pub kernel_prefactor: f64,
}

impl Default for PhysicsParams {
    fn default() -> Self {
        PhysicsParams { theta: 1e-7, kernel_prefactor: 1.0 / 3.0 }
    }
}

impl PhysicsParams {
    pub fn new(theta: f64, kernel_prefactor: f64) -> Result<Self, ModelError> {
        if !(theta.is_finite() && theta > 0.0) {
            return Err(ModelError::NonpositiveTheta(theta));
        }
        if !kernel_prefactor.is_finite() {
            return Err(ModelError::NonFinitePrefactor(kernel_prefactor));
        }
        Ok(PhysicsParams { theta, kernel_prefactor })
    }
}

/// Position/orientation pair produced by [`create_entity_array`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Placement {
    pub position: Vec3,
    pub normal: Vec3,
}

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("start and end point coincide")]
    CoincidentEndpoints,
    #[error("normal vector has zero length")]
    ZeroNormal,
    #[error("need at least {min} points, got {got}")]
    TooFewPoints { min: usize, got: usize },
    #[error("coil radius must be positive, got {0}")]
    NonpositiveRadius(f64),
    #[error("coil loop needs at least 3 segments, got {0}")]
    TooFewSegments(usize),
    #[error("coil template is empty")]
    EmptyTemplate,
    #[error("voxel center list is empty")]
    NoVoxelCenters,
    #[error("voxel size components must be >= 0, got {0}")]
    NegativeVoxelSize(f64),
    #[error("unknown current pattern preset '{0}'")]
    UnknownPreset(String),
    #[error("preset '{preset}' needs at least {min} coils, got {got}")]
    TooFewCoils { preset: &'static str, min: usize, got: usize },
    #[error("current amplitude must be nonzero and finite, got {0}")]
    BadAmplitude(f64),
    #[error("theta must be positive and finite, got {0}")]
    NonpositiveTheta(f64),
    #[error("kernel prefactor must be finite, got {0}")]
    NonFinitePrefactor(f64),
}

/// Which entity list a validation finding refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntityKind {
    Coil,
    Sensor,
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EntityKind::Coil => write!(f, "coil"),
            EntityKind::Sensor => write!(f, "sensor"),
        }
    }
}

/// A hard inconsistency; any violation makes the checked value unusable.
/// Indices are stored 0-based and displayed 1-based.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    RoiInverted { axis: char, lo: f64, hi: f64 },
    RoiNotFinite { axis: char },
    RoiNotDegenerate2d { lo: f64, hi: f64 },
    NoCoils,
    NoSensors,
    NonFinitePosition { entity: EntityKind, index: usize },
    NonUnitNormal { entity: EntityKind, index: usize, norm: f64 },
    ZCoherence2d { entity: EntityKind, index: usize, z: f64, expected: f64 },
    TooFewSegmentPoints { coil: usize, points: usize },
    RepeatedSegmentPoint { coil: usize, point: usize },
    NonFiniteSegmentPoint { coil: usize, point: usize },
    DuplicateSensorId { id: i64 },
    NonpositiveResolution { axis: char },
    EmptyPattern,
    NonFinitePattern { row: usize, col: usize },
    PatternWidthMismatch { columns: usize, active_coils: usize },
    ActiveNotIncreasing { entity: EntityKind },
    NoActive { entity: EntityKind },
    ActiveIndexOutOfRange { entity: EntityKind, index: usize, available: usize },
    Res2dNzNot1 { nz: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Violation::*;
        match self {
            RoiInverted { axis, lo, hi } => {
                write!(f, "roi {axis}-interval inverted: [{lo}, {hi}]")
            }
            RoiNotFinite { axis } => write!(f, "roi {axis}-interval has non-finite bounds"),
            RoiNotDegenerate2d { lo, hi } => {
                write!(f, "2D setup requires a degenerate roi z-interval, got [{lo}, {hi}]")
            }
            NoCoils => write!(f, "setup has no coils"),
            NoSensors => write!(f, "setup has no sensors"),
            NonFinitePosition { entity, index } => {
                write!(f, "non-finite position, {entity} {}", index + 1)
            }
            NonUnitNormal { entity, index, norm } => {
                write!(f, "non-unit normal, {entity} {} (length {norm})", index + 1)
            }
            ZCoherence2d { entity, index, z, expected } => write!(
                f,
                "2D z-coherence: {entity} {} at z = {z}, layer at z = {expected}",
                index + 1
            ),
            TooFewSegmentPoints { coil, points } => {
                write!(f, "coil {} has {points} segment point(s), need >= 2", coil + 1)
            }
            RepeatedSegmentPoint { coil, point } => write!(
                f,
                "coil {} repeats segment point {} (zero-length segment)",
                coil + 1,
                point + 1
            ),
            NonFiniteSegmentPoint { coil, point } => {
                write!(f, "coil {} segment point {} is non-finite", coil + 1, point + 1)
            }
            DuplicateSensorId { id } => write!(f, "duplicate sensor id {id}"),
            NonpositiveResolution { axis } => write!(f, "nonpositive resolution on {axis} axis"),
            EmptyPattern => write!(f, "current pattern is empty"),
            NonFinitePattern { row, col } => {
                write!(f, "non-finite current pattern entry at row {}, column {}", row + 1, col + 1)
            }
            PatternWidthMismatch { columns, active_coils } => write!(
                f,
                "pattern/coil mismatch: {columns} pattern column(s) for {active_coils} active coil(s)"
            ),
            ActiveNotIncreasing { entity } => {
                write!(f, "active {entity} indices not strictly increasing")
            }
            NoActive { entity } => write!(f, "no active {entity}s"),
            ActiveIndexOutOfRange { entity, index, available } => write!(
                f,
                "{entity} index out of range: {} of {available}",
                index + 1
            ),
            Res2dNzNot1 { nz } => write!(f, "2D requires nz=1, got nz={nz}"),
        }
    }
}

/// A condition that is tolerated but worth surfacing.
#[derive(Debug, Clone, PartialEq)]
pub enum ValidationWarning {
    /// 2D setups drive coils as dipoles; stored segments never enter the field
    /// computation.
    SegmentsIgnored2d { coil: usize },
}

impl fmt::Display for ValidationWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidationWarning::SegmentsIgnored2d { coil } => write!(
                f,
                "coil {}: segments are ignored in 2D setups (dipole model applies)",
                coil + 1
            ),
        }
    }
}

/// Outcome of a validation pass. Checks never abort; they collect findings.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub warnings: Vec<ValidationWarning>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn merge(&mut self, other: ValidationReport) {
        self.violations.extend(other.violations);
        self.warnings.extend(other.warnings);
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() && self.warnings.is_empty() {
            return write!(f, "ok");
        }
        let mut first = true;
        for v in &self.violations {
            if !first {
                writeln!(f)?;
            }
            write!(f, "violation: {v}")?;
            first = false;
        }
        for w in &self.warnings {
            if !first {
                writeln!(f)?;
            }
            write!(f, "warning: {w}")?;
            first = false;
        }
        Ok(())
    }
}

/// Places `n_points` entities evenly on the segment from `p_start` to
/// `p_end`, endpoints included, all carrying the normalized `normal`.
pub fn create_entity_array(
    p_start: Vec3,
    p_end: Vec3,
    normal: Vec3,
    n_points: usize,
) -> Result<Vec<Placement>, ModelError> {
    if p_start == p_end {
        return Err(ModelError::CoincidentEndpoints);
    }
    if n_points < 2 {
        return Err(ModelError::TooFewPoints { min: 2, got: n_points });
    }
    let normal = normal.normalized().ok_or(ModelError::ZeroNormal)?;
    let step = (p_end - p_start) / (n_points - 1) as f64;
    Ok((0..n_points)
        .map(|i| Placement { position: p_start + step * i as f64, normal })
        .collect())
}

/// Regular-polygon approximation of a circular coil: `n_segments`+1 points on
/// a circle of `radius` in the z = 0 plane, centered at the origin, ordered
/// counterclockwise seen from +z, starting at (radius, 0, 0). The first point
/// is repeated as the last so consecutive pairs close the loop.
pub fn create_coil_loop(radius: f64, n_segments: usize) -> Result<Vec<Vec3>, ModelError> {
    if !(radius.is_finite() && radius > 0.0) {
        return Err(ModelError::NonpositiveRadius(radius));
    }
    if n_segments < 3 {
        return Err(ModelError::TooFewSegments(n_segments));
    }
    let mut points = Vec::with_capacity(n_segments + 1);
    for i in 0..n_segments {
        let phi = 2.0 * std::f64::consts::PI * i as f64 / n_segments as f64;
        let (s, c) = phi.sin_cos();
        points.push(Vec3::new(radius * c, radius * s, 0.0));
    }
    points.push(points[0]);
    Ok(points)
}

/// Moves a template built around the origin with +z orientation into place:
/// every point becomes `R p + position` where `R` is the minimal rotation
/// taking +z onto the normalized `normal` (see [`rotation_from_z`]).
pub fn relocate_structure(
    points: &[Vec3],
    position: Vec3,
    normal: Vec3,
) -> Result<Vec<Vec3>, ModelError> {
    let n = normal.normalized().ok_or(ModelError::ZeroNormal)?;
    let r = rotation_from_z(n);
    Ok(points.iter().map(|&p| r.mul_vec(p) + position).collect())
}

/// Instantiates the segment polyline of every coil from a shared template via
/// [`relocate_structure`]. Positions and normals pass through unchanged;
/// existing segments are replaced.
pub fn parse_coils(coils: &[Coil], template: &[Vec3]) -> Result<Vec<Coil>, ModelError> {
    if template.is_empty() {
        return Err(ModelError::EmptyTemplate);
    }
    coils
        .iter()
        .map(|c| {
            Ok(Coil {
                position: c.position,
                normal: c.normal,
                segments: Some(relocate_structure(template, c.position, c.normal)?),
            })
        })
        .collect()
}

/// Reconstructs the region of interest covered by a list of voxel centers:
/// per axis `[min(center) - size/2, max(center) + size/2]`. Inverts
/// [`crate::fields::create_voxel_grid`] exactly for grids it produced.
pub fn get_roi(voxel_centers: &[Vec3], voxel_size: Vec3) -> Result<Roi, ModelError> {
    if voxel_centers.is_empty() {
        return Err(ModelError::NoVoxelCenters);
    }
    for axis in 0..3 {
        if voxel_size[axis] < 0.0 {
            return Err(ModelError::NegativeVoxelSize(voxel_size[axis]));
        }
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for c in voxel_centers {
        for axis in 0..3 {
            lo[axis] = lo[axis].min(c[axis]);
            hi[axis] = hi[axis].max(c[axis]);
        }
    }
    let iv = |axis: usize| {
        Interval::new(lo[axis] - voxel_size[axis] / 2.0, hi[axis] + voxel_size[axis] / 2.0)
    };
    Ok(Roi::new(iv(0), iv(1), iv(2)))
}

/// Builds one of the named current pattern presets (amperes):
///
/// - `"sequential"`: identity scaled by `amplitude`, one coil per pattern;
/// - `"uniform"`: a single pattern driving every coil at `amplitude`;
/// - `"pairwise"`: `n_coils - 1` patterns, pattern i drives coil i at
///   `+amplitude` and coil i+1 at `-amplitude`.
pub fn create_current_pattern(
    preset: &str,
    n_coils: usize,
    amplitude: f64,
) -> Result<Array2<f64>, ModelError> {
    if !(amplitude.is_finite() && amplitude != 0.0) {
        return Err(ModelError::BadAmplitude(amplitude));
    }
    match preset {
        "sequential" => {
            if n_coils < 1 {
                return Err(ModelError::TooFewCoils { preset: "sequential", min: 1, got: n_coils });
            }
            let mut m = Array2::zeros((n_coils, n_coils));
            for i in 0..n_coils {
                m[[i, i]] = amplitude;
            }
            Ok(m)
        }
        "uniform" => {
            if n_coils < 1 {
                return Err(ModelError::TooFewCoils { preset: "uniform", min: 1, got: n_coils });
            }
            Ok(Array2::from_elem((1, n_coils), amplitude))
        }
        "pairwise" => {
            if n_coils < 2 {
                return Err(ModelError::TooFewCoils { preset: "pairwise", min: 2, got: n_coils });
            }
            let mut m = Array2::zeros((n_coils - 1, n_coils));
            for i in 0..n_coils - 1 {
                m[[i, i]] = amplitude;
                m[[i, i + 1]] = -amplitude;
            }
            Ok(m)
        }
        other => Err(ModelError::UnknownPreset(other.to_string())),
    }
}

fn check_normal(
    report: &mut ValidationReport,
    entity: EntityKind,
    index: usize,
    normal: Vec3,
) {
    if !normal.is_finite() {
        report.violations.push(Violation::NonFinitePosition { entity, index });
        return;
    }
    let norm = normal.norm();
    if (norm - 1.0).abs() > NORMAL_TOL {
        report.violations.push(Violation::NonUnitNormal { entity, index, norm });
    }
}

/// Consistency check of a setup in isolation. Collects every finding instead
/// of stopping at the first; never errors.
pub fn validate_setup(setup: &Setup) -> ValidationReport {
    let mut report = ValidationReport::default();

    for (axis, iv) in [('x', setup.roi.x), ('y', setup.roi.y), ('z', setup.roi.z)] {
        if !iv.is_finite() {
            report.violations.push(Violation::RoiNotFinite { axis });
        } else if iv.lo > iv.hi {
            report.violations.push(Violation::RoiInverted { axis, lo: iv.lo, hi: iv.hi });
        }
    }

    let two_d = setup.dim == Dim::Two;
    if two_d && !setup.roi.z.is_degenerate() {
        report
            .violations
            .push(Violation::RoiNotDegenerate2d { lo: setup.roi.z.lo, hi: setup.roi.z.hi });
    }
    let z_layer = setup.roi.z.lo;

    if setup.coils.is_empty() {
        report.violations.push(Violation::NoCoils);
    }
    if setup.sensors.is_empty() {
        report.violations.push(Violation::NoSensors);
    }

    for (i, coil) in setup.coils.iter().enumerate() {
        if !coil.position.is_finite() {
            report.violations.push(Violation::NonFinitePosition { entity: EntityKind::Coil, index: i });
        }
        check_normal(&mut report, EntityKind::Coil, i, coil.normal);
        if two_d && (coil.position.z - z_layer).abs() > Z_TOL {
            report.violations.push(Violation::ZCoherence2d {
                entity: EntityKind::Coil,
                index: i,
                z: coil.position.z,
                expected: z_layer,
            });
        }
        if let Some(points) = &coil.segments {
            if points.len() < 2 {
                report
                    .violations
                    .push(Violation::TooFewSegmentPoints { coil: i, points: points.len() });
            }
            for (p, pair) in points.windows(2).enumerate() {
                if pair[0] == pair[1] {
                    report.violations.push(Violation::RepeatedSegmentPoint { coil: i, point: p });
                }
            }
            for (p, point) in points.iter().enumerate() {
                if !point.is_finite() {
                    report.violations.push(Violation::NonFiniteSegmentPoint { coil: i, point: p });
                }
            }
        }
    }

    let mut seen_ids: Vec<i64> = Vec::with_capacity(setup.sensors.len());
    for (i, sensor) in setup.sensors.iter().enumerate() {
        if !sensor.position.is_finite() {
            report
                .violations
                .push(Violation::NonFinitePosition { entity: EntityKind::Sensor, index: i });
        }
        check_normal(&mut report, EntityKind::Sensor, i, sensor.normal);
        if two_d && (sensor.position.z - z_layer).abs() > Z_TOL {
            report.violations.push(Violation::ZCoherence2d {
                entity: EntityKind::Sensor,
                index: i,
                z: sensor.position.z,
                expected: z_layer,
            });
        }
        if seen_ids.contains(&sensor.sensor_id) {
            report.violations.push(Violation::DuplicateSensorId { id: sensor.sensor_id });
        } else {
            seen_ids.push(sensor.sensor_id);
        }
    }

    report
}

/// Consistency check of a config in isolation.
pub fn validate_config(config: &Config) -> ValidationReport {
    let mut report = ValidationReport::default();

    for (axis, n) in [('x', config.res[0]), ('y', config.res[1]), ('z', config.res[2])] {
        if n == 0 {
            report.violations.push(Violation::NonpositiveResolution { axis });
        }
    }

    let (rows, cols) = config.current_pattern.dim();
    if rows == 0 || cols == 0 {
        report.violations.push(Violation::EmptyPattern);
    }
    for ((r, c), v) in config.current_pattern.indexed_iter() {
        if !v.is_finite() {
            report.violations.push(Violation::NonFinitePattern { row: r, col: c });
        }
    }
    if cols != config.active_coils.len() {
        report.violations.push(Violation::PatternWidthMismatch {
            columns: cols,
            active_coils: config.active_coils.len(),
        });
    }

    for (entity, list) in [
        (EntityKind::Coil, &config.active_coils),
        (EntityKind::Sensor, &config.active_sensors),
    ] {
        if list.is_empty() {
            report.violations.push(Violation::NoActive { entity });
        }
        if list.windows(2).any(|w| w[0] >= w[1]) {
            report.violations.push(Violation::ActiveNotIncreasing { entity });
        }
    }

    report
}

/// Checks that a config can drive a setup: index ranges and the 2D
/// conventions. Inputs are assumed individually valid.
pub fn check_compatibility(setup: &Setup, config: &Config) -> ValidationReport {
    let mut report = ValidationReport::default();

    for (entity, list, available) in [
        (EntityKind::Coil, &config.active_coils, setup.coils.len()),
        (EntityKind::Sensor, &config.active_sensors, setup.sensors.len()),
    ] {
        for &idx in list.iter() {
            if idx >= available {
                report
                    .violations
                    .push(Violation::ActiveIndexOutOfRange { entity, index: idx, available });
            }
        }
    }

    if setup.dim == Dim::Two {
        if config.res[2] != 1 {
            report.violations.push(Violation::Res2dNzNot1 { nz: config.res[2] });
        }
        for &idx in &config.active_coils {
            if let Some(coil) = setup.coils.get(idx) {
                if coil.segments.is_some() {
                    report.warnings.push(ValidationWarning::SegmentsIgnored2d { coil: idx });
                }
            }
        }
    }

    report
}

/// Full validation of a setup/config pair: both individual checks plus
/// compatibility, merged into one report.
pub fn validate_pair(setup: &Setup, config: &Config) -> ValidationReport {
    let mut report = validate_setup(setup);
    report.merge(validate_config(config));
    if report.is_ok() {
        report.merge(check_compatibility(setup, config));
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: Vec3, b: Vec3, eps: f64) -> bool {
        (a - b).norm() <= eps
    }

    fn minimal_2d_setup() -> Setup {
        Setup {
            dim: Dim::Two,
            roi: Roi::new(
                Interval::new(0.0, 0.1),
                Interval::new(0.0, 0.1),
                Interval::new(0.0, 0.0),
            ),
            coils: vec![Coil {
                position: Vec3::new(-0.01, 0.05, 0.0),
                normal: Vec3::X,
                segments: None,
            }],
            sensors: vec![Sensor {
                position: Vec3::new(0.11, 0.05, 0.0),
                normal: -Vec3::X,
                sensor_id: 1,
                channel_id: 1,
                group_id: 1,
            }],
        }
    }

    #[test]
    fn entity_array_interpolates_linearly() {
        let got = create_entity_array(
            Vec3::ZERO,
            Vec3::new(0.0, 0.1, 0.0),
            Vec3::X,
            3,
        )
        .unwrap();
        assert_eq!(got.len(), 3);
        assert!(close(got[0].position, Vec3::ZERO, 0.0));
        assert!(close(got[1].position, Vec3::new(0.0, 0.05, 0.0), 1e-18));
        assert!(close(got[2].position, Vec3::new(0.0, 0.1, 0.0), 0.0));
        for p in &got {
            assert_eq!(p.normal, Vec3::X);
        }
    }

    #[test]
    fn entity_array_normalizes_and_handles_two_points() {
        let got = create_entity_array(Vec3::ZERO, Vec3::X, Vec3::new(0.0, 0.0, 2.0), 2).unwrap();
        assert_eq!(got.len(), 2);
        assert_eq!(got[0].position, Vec3::ZERO);
        assert_eq!(got[1].position, Vec3::X);
        assert_eq!(got[0].normal, Vec3::Z);
    }

    #[test]
    fn entity_array_spacing_matches_segment_division() {
        let a = Vec3::ZERO;
        let b = Vec3::new(0.0, 0.0, 0.09);
        let got = create_entity_array(a, b, Vec3::Y, 10).unwrap();
        assert_eq!(got.len(), 10);
        let expected = (b - a).norm() / 9.0;
        for pair in got.windows(2) {
            let d = (pair[1].position - pair[0].position).norm();
            assert!((d - expected).abs() <= 1e-12 * expected, "spacing {d} vs {expected}");
        }
    }

    #[test]
    fn entity_array_rejects_bad_input() {
        assert_eq!(
            create_entity_array(Vec3::X, Vec3::X, Vec3::Z, 3),
            Err(ModelError::CoincidentEndpoints)
        );
        assert_eq!(
            create_entity_array(Vec3::ZERO, Vec3::X, Vec3::ZERO, 3),
            Err(ModelError::ZeroNormal)
        );
        assert_eq!(
            create_entity_array(Vec3::ZERO, Vec3::X, Vec3::Z, 1),
            Err(ModelError::TooFewPoints { min: 2, got: 1 })
        );
    }

    #[test]
    fn coil_loop_square() {
        let got = create_coil_loop(1.0, 4).unwrap();
        let want = [Vec3::X, Vec3::Y, -Vec3::X, -Vec3::Y, Vec3::X];
        assert_eq!(got.len(), 5);
        for (g, w) in got.iter().zip(want.iter()) {
            assert!(close(*g, *w, 1e-15), "{g:?} vs {w:?}");
        }
        assert_eq!(got[0], got[4]);
    }

    #[test]
    fn coil_loop_triangle_circumradius() {
        let got = create_coil_loop(0.05, 3).unwrap();
        assert_eq!(got.len(), 4);
        for p in &got[..3] {
            assert!((p.norm() - 0.05).abs() <= 1e-15);
        }
        assert_eq!(got[0], got[3]);
    }

    #[test]
    fn coil_loop_chord_length() {
        let got = create_coil_loop(2.0, 360).unwrap();
        assert_eq!(got.len(), 361);
        let expected = 2.0 * 2.0 * (std::f64::consts::PI / 360.0).sin();
        for pair in got.windows(2) {
            let chord = (pair[1] - pair[0]).norm();
            assert!((chord - expected).abs() <= 1e-12 * expected);
        }
    }

    #[test]
    fn coil_loop_rejects_degenerate() {
        assert!(matches!(create_coil_loop(0.0, 8), Err(ModelError::NonpositiveRadius(_))));
        assert!(matches!(create_coil_loop(1.0, 2), Err(ModelError::TooFewSegments(2))));
    }

    #[test]
    fn relocate_identity_and_translation() {
        let pts = [Vec3::X];
        assert_eq!(relocate_structure(&pts, Vec3::ZERO, Vec3::Z).unwrap(), vec![Vec3::X]);
        assert_eq!(
            relocate_structure(&pts, Vec3::new(5.0, 5.0, 5.0), Vec3::Z).unwrap(),
            vec![Vec3::new(6.0, 5.0, 5.0)]
        );
    }

    #[test]
    fn relocate_rotates_z_to_target() {
        let pts = [Vec3::X, Vec3::Y, Vec3::Z];
        let got = relocate_structure(&pts, Vec3::ZERO, Vec3::X).unwrap();
        // +z maps onto the requested normal.
        assert!(close(got[2], Vec3::X, 1e-15));
        // Isometry: pairwise distances preserved.
        for i in 0..3 {
            for j in 0..3 {
                let before = (pts[i] - pts[j]).norm();
                let after = (got[i] - got[j]).norm();
                assert!((before - after).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn parse_coils_at_origin_keeps_template() {
        let template = create_coil_loop(1.0, 4).unwrap();
        let coils = vec![Coil { position: Vec3::ZERO, normal: Vec3::Z, segments: None }];
        let parsed = parse_coils(&coils, &template).unwrap();
        assert_eq!(parsed[0].segments.as_ref().unwrap(), &template);
    }

    #[test]
    fn parse_coils_translation_equivariance() {
        let template = create_coil_loop(0.5, 6).unwrap();
        let t = Vec3::new(0.1, -0.2, 0.3);
        let coils = vec![
            Coil { position: Vec3::ZERO, normal: Vec3::Z, segments: None },
            Coil { position: t, normal: Vec3::Z, segments: None },
        ];
        let parsed = parse_coils(&coils, &template).unwrap();
        let a = parsed[0].segments.as_ref().unwrap();
        let b = parsed[1].segments.as_ref().unwrap();
        for (pa, pb) in a.iter().zip(b.iter()) {
            assert_eq!(*pb, *pa + t);
        }
    }

    #[test]
    fn parse_coils_segments_lie_in_coil_plane() {
        let template = create_coil_loop(1.0, 12).unwrap();
        let position = Vec3::new(1.0, 2.0, 3.0);
        let normal = Vec3::Y;
        let coils = vec![Coil { position, normal, segments: None }];
        let parsed = parse_coils(&coils, &template).unwrap();
        for p in parsed[0].segments.as_ref().unwrap() {
            assert!((*p - position).dot(normal).abs() <= 1e-12);
        }
    }

    #[test]
    fn parse_coils_rejects_empty_template() {
        let coils = vec![Coil { position: Vec3::ZERO, normal: Vec3::Z, segments: None }];
        assert_eq!(parse_coils(&coils, &[]), Err(ModelError::EmptyTemplate));
    }

    #[test]
    fn roi_from_single_voxel() {
        let roi = get_roi(&[Vec3::new(0.005, 0.005, 0.0)], Vec3::new(0.01, 0.01, 0.0)).unwrap();
        assert_eq!(roi.x, Interval::new(0.0, 0.01));
        assert_eq!(roi.y, Interval::new(0.0, 0.01));
        assert_eq!(roi.z, Interval::new(0.0, 0.0));
    }

    #[test]
    fn roi_from_unit_grid() {
        let mut centers = Vec::new();
        for k in 0..2 {
            for j in 0..2 {
                for i in 0..2 {
                    centers.push(Vec3::new(i as f64, j as f64, k as f64));
                }
            }
        }
        let roi = get_roi(&centers, Vec3::new(1.0, 1.0, 1.0)).unwrap();
        for iv in [roi.x, roi.y, roi.z] {
            assert_eq!(iv, Interval::new(-0.5, 1.5));
        }
    }

    #[test]
    fn pattern_presets() {
        let seq = create_current_pattern("sequential", 3, 1.0).unwrap();
        assert_eq!(seq, ndarray::arr2(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]));

        let uni = create_current_pattern("uniform", 4, 0.5).unwrap();
        assert_eq!(uni, ndarray::arr2(&[[0.5, 0.5, 0.5, 0.5]]));

        let pair = create_current_pattern("pairwise", 3, 2.0).unwrap();
        assert_eq!(pair, ndarray::arr2(&[[2.0, -2.0, 0.0], [0.0, 2.0, -2.0]]));
    }

    #[test]
    fn pattern_rejects_bad_presets() {
        assert!(matches!(
            create_current_pattern("nosuch", 3, 1.0),
            Err(ModelError::UnknownPreset(_))
        ));
        assert!(matches!(
            create_current_pattern("pairwise", 1, 1.0),
            Err(ModelError::TooFewCoils { min: 2, .. })
        ));
        assert!(matches!(
            create_current_pattern("sequential", 3, 0.0),
            Err(ModelError::BadAmplitude(_))
        ));
    }

    #[test]
    fn validate_accepts_wellformed_2d_setup() {
        let report = validate_setup(&minimal_2d_setup());
        assert!(report.is_ok(), "unexpected violations: {report}");
    }

    #[test]
    fn validate_flags_non_unit_normal() {
        let mut setup = minimal_2d_setup();
        setup.coils[0].normal = Vec3::new(2.0, 0.0, 0.0);
        let report = validate_setup(&setup);
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::NonUnitNormal { entity: EntityKind::Coil, index: 0, .. })));
    }

    #[test]
    fn validate_flags_2d_z_coherence() {
        let mut setup = minimal_2d_setup();
        setup.sensors[0].position.z = 0.01;
        let report = validate_setup(&setup);
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::ZCoherence2d { entity: EntityKind::Sensor, .. })));
    }

    #[test]
    fn validate_flags_duplicate_sensor_ids() {
        let mut setup = minimal_2d_setup();
        let mut extra = setup.sensors[0].clone();
        extra.position.y += 0.01;
        setup.sensors.push(extra);
        let report = validate_setup(&setup);
        assert!(report.violations.contains(&Violation::DuplicateSensorId { id: 1 }));
    }

    #[test]
    fn validate_config_flags_mismatches() {
        let config = Config {
            res: [0, 10, 1],
            current_pattern: Array2::from_elem((1, 5), 1.0),
            active_coils: vec![0, 1, 2, 3],
            active_sensors: vec![0],
        };
        let report = validate_config(&config);
        assert!(report.violations.contains(&Violation::NonpositiveResolution { axis: 'x' }));
        assert!(report
            .violations
            .contains(&Violation::PatternWidthMismatch { columns: 5, active_coils: 4 }));
    }

    #[test]
    fn compatibility_checks_ranges_and_2d_rules() {
        let setup = minimal_2d_setup();
        let config = Config {
            res: [10, 10, 3],
            current_pattern: Array2::from_elem((1, 1), 1.0),
            active_coils: vec![0],
            active_sensors: vec![9],
        };
        let report = check_compatibility(&setup, &config);
        assert!(report.violations.contains(&Violation::Res2dNzNot1 { nz: 3 }));
        assert!(report.violations.contains(&Violation::ActiveIndexOutOfRange {
            entity: EntityKind::Sensor,
            index: 9,
            available: 1,
        }));
    }

    #[test]
    fn compatibility_warns_on_2d_segments() {
        let mut setup = minimal_2d_setup();
        setup.coils[0].segments =
            Some(vec![Vec3::new(-0.01, 0.04, 0.0), Vec3::new(-0.01, 0.06, 0.0)]);
        let config = Config {
            res: [10, 10, 1],
            current_pattern: Array2::from_elem((1, 1), 1.0),
            active_coils: vec![0],
            active_sensors: vec![0],
        };
        let report = check_compatibility(&setup, &config);
        assert!(report.is_ok());
        assert_eq!(report.warnings, vec![ValidationWarning::SegmentsIgnored2d { coil: 0 }]);
    }

    fn vec3_strategy(range: f64) -> impl Strategy<Value = Vec3> {
        (-range..range, -range..range, -range..range).prop_map(|(x, y, z)| Vec3::new(x, y, z))
    }

    proptest! {
        #[test]
        fn entity_array_is_equidistant(
            a in vec3_strategy(1.0),
            b in vec3_strategy(1.0),
            n in 2usize..25,
        ) {
            prop_assume!((a - b).norm() > 1e-6);
            let got = create_entity_array(a, b, Vec3::Z, n).unwrap();
            let expected = (b - a).norm() / (n - 1) as f64;
            for pair in got.windows(2) {
                let d = (pair[1].position - pair[0].position).norm();
                prop_assert!((d - expected).abs() <= 1e-12 * expected.max(1e-300));
            }
        }

        #[test]
        fn relocate_is_isometry(
            pts in proptest::collection::vec(vec3_strategy(2.0), 2..10),
            pos in vec3_strategy(5.0),
            normal in vec3_strategy(1.0),
        ) {
            prop_assume!(normal.norm() > 1e-3);
            let moved = relocate_structure(&pts, pos, normal).unwrap();
            for i in 0..pts.len() {
                for j in i + 1..pts.len() {
                    let before = (pts[i] - pts[j]).norm();
                    let after = (moved[i] - moved[j]).norm();
                    prop_assert!((before - after).abs() <= 1e-12 * (1.0 + before));
                }
            }
        }

        #[test]
        fn parse_coils_round_trips_template(
            pos in vec3_strategy(5.0),
            normal in vec3_strategy(1.0),
        ) {
            prop_assume!(normal.norm() > 1e-3);
            let normal = normal.normalized().unwrap();
            let template = create_coil_loop(0.3, 8).unwrap();
            let coils = vec![Coil { position: pos, normal, segments: None }];
            let parsed = parse_coils(&coils, &template).unwrap();
            // Undo the placement: R^T (p - pos) recovers the template.
            let r = crate::math::rotation_from_z(normal).transpose();
            for (moved, original) in
                parsed[0].segments.as_ref().unwrap().iter().zip(template.iter())
            {
                let back = r.mul_vec(*moved - pos);
                prop_assert!((back - *original).norm() <= 1e-12 * (1.0 + pos.norm()));
            }
        }

        #[test]
        fn validation_is_pure(seed in 0u64..1000) {
            let mut setup = minimal_2d_setup();
            if seed % 2 == 0 {
                setup.coils[0].normal = Vec3::new(2.0, 0.0, 0.0);
            }
            if seed % 3 == 0 {
                setup.sensors[0].position.z = 0.02;
            }
            let r1 = validate_setup(&setup);
            let r2 = validate_setup(&setup);
            prop_assert_eq!(r1, r2);
        }
    }
}
