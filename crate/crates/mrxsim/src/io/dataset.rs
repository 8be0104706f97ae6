//! The six text tables of a measurement dataset directory.
//!
//! ```text
//! sensors.dat               x y z nx ny nz SensorID ChannelID GroupID
//! coilGrid.dat              x y z          (one coil position per row)
//! coilTemplate.dat          x y z          (winding points; empty for dipoles)
//! voxelGrid.dat             x y z          (voxel centers, x fastest)
//! dataset.NN.currents.dat   I              (one drive amplitude per coil)
//! dataset.NN.relax.dat      dB SensorID ChannelID GroupID CoilNo
//! ```
//!
//! Relax rows are grouped by coil: all sensors of coil 1 first, then coil 2,
//! and so on, with the same sensor order inside every group. Amplitudes are
//! in amperes, relaxation amplitudes in femtotesla, coordinates in meters.
//!
//! The text form is deliberately narrow. Coil orientations have no column,
//! so re-imported coils point along +z (the writer warns when that loses
//! information), every coil shares one winding template, and a grid axis
//! with a single voxel layer reads back as degenerate because its extent
//! cannot be told from one center. The structured `.mrxsetup` format carries
//! all of that; these tables exist for interchange with plotting scripts and
//! measurement rigs.

use super::{cell_as_int, fmt_f64, io_err, read_table, read_table_lines, IoError, IoWarning};
use crate::fields::VoxelGrid;
use crate::math::{rotation_from_z, Vec3};
use crate::model::{parse_coils, Coil, Config, Dim, PhysicsParams, Sensor, Setup};
use crate::phantom::Phantom;
use crate::relaxation::{create_system_matrix, forward_apply, SystemMatrix};
use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

/// One relax table row: the measured amplitude and its addressing.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementRecord {
    pub delta_b_ft: f64,
    pub sensor_id: i64,
    pub channel_id: i64,
    pub group_id: i64,
    /// 1-based position of the driven coil in the dataset's coil list.
    pub coil_no: usize,
}

/// One `dataset.NN.currents.dat` / `dataset.NN.relax.dat` pair.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    pub index: u32,
    /// Drive amplitude per coil, in coil order.
    pub currents: Vec<f64>,
    /// Relax rows in file order: coil groups ascending, sensors in a fixed
    /// order inside each group.
    pub records: Vec<MeasurementRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub setup: Setup,
    pub sets: Vec<MeasurementSet>,
    /// Sensor ids removed during loading because they were listed defective.
    pub defective_sensors: Vec<i64>,
}

/// Reduces a setup to the coils and sensors a config activates, in
/// activation order. Datasets store the measured configuration only.
pub fn restricted_setup(setup: &Setup, config: &Config) -> Setup {
    Setup {
        dim: setup.dim,
        roi: setup.roi,
        coils: config.active_coils.iter().map(|&i| setup.coils[i].clone()).collect(),
        sensors: config.active_sensors.iter().map(|&i| setup.sensors[i].clone()).collect(),
    }
}

/// Arranges a measurement vector (sensor-major per coil group, the layout
/// [`forward_apply`] produces for a sequential pattern) into relax rows.
pub fn measurement_records(
    sensors: &[Sensor],
    n_coils: usize,
    y_ft: &[f64],
) -> Result<Vec<MeasurementRecord>, IoError> {
    let want = n_coils * sensors.len();
    if y_ft.len() != want {
        return Err(IoError::MeasurementLengthMismatch { got: y_ft.len(), want });
    }
    let mut records = Vec::with_capacity(want);
    for g in 0..n_coils {
        for (si, s) in sensors.iter().enumerate() {
            records.push(MeasurementRecord {
                delta_b_ft: y_ft[g * sensors.len() + si],
                sensor_id: s.sensor_id,
                channel_id: s.channel_id,
                group_id: s.group_id,
                coil_no: g + 1,
            });
        }
    }
    Ok(records)
}

/// Recovers the shared winding template from the first wound coil by undoing
/// its placement; dipole-only setups yield an empty template.
fn template_points(coils: &[Coil]) -> Vec<Vec3> {
    for c in coils {
        if let Some(segments) = &c.segments {
            let r_t = rotation_from_z(c.normal).transpose();
            return segments.iter().map(|&p| r_t.mul_vec(p - c.position)).collect();
        }
    }
    Vec::new()
}

/// Writes all tables of `dataset` into `dir`. Files are overwritten; the
/// content is a pure function of the inputs, so rewriting is byte-identical.
/// Returns warnings about information the text form cannot hold.
pub fn write_dataset_tables(
    dataset: &Dataset,
    grid: &VoxelGrid,
    dir: &Path,
) -> Result<Vec<IoWarning>, IoError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut warnings = Vec::new();
    let setup = &dataset.setup;

    let mut text = String::from("# x[m] y[m] z[m] nx ny nz SensorID ChannelID GroupID\n");
    for s in &setup.sensors {
        text.push_str(&format!(
            "{} {} {} {} {} {} {} {} {}\n",
            fmt_f64(s.position.x),
            fmt_f64(s.position.y),
            fmt_f64(s.position.z),
            fmt_f64(s.normal.x),
            fmt_f64(s.normal.y),
            fmt_f64(s.normal.z),
            s.sensor_id,
            s.channel_id,
            s.group_id,
        ));
    }
    super::write_text(&dir.join("sensors.dat"), &text)?;

    let mut text = String::from("# coil positions, x[m] y[m] z[m]\n");
    for (ci, c) in setup.coils.iter().enumerate() {
        if (c.normal - Vec3::Z).norm() > crate::model::NORMAL_TOL {
            warnings.push(IoWarning::CoilNormalAssumedZ { coil: ci });
        }
        text.push_str(&format!(
            "{} {} {}\n",
            fmt_f64(c.position.x),
            fmt_f64(c.position.y),
            fmt_f64(c.position.z),
        ));
    }
    super::write_text(&dir.join("coilGrid.dat"), &text)?;

    let mut text = String::from("# winding template points, x[m] y[m] z[m]\n");
    for p in template_points(&setup.coils) {
        text.push_str(&format!("{} {} {}\n", fmt_f64(p.x), fmt_f64(p.y), fmt_f64(p.z)));
    }
    super::write_text(&dir.join("coilTemplate.dat"), &text)?;

    let mut text = String::from("# voxel centers, x[m] y[m] z[m], x fastest\n");
    for w in &grid.centers {
        text.push_str(&format!("{} {} {}\n", fmt_f64(w.x), fmt_f64(w.y), fmt_f64(w.z)));
    }
    super::write_text(&dir.join("voxelGrid.dat"), &text)?;

    for set in &dataset.sets {
        let mut text = String::from("# drive amplitude per coil, I[A]\n");
        for &i in &set.currents {
            text.push_str(&format!("{}\n", fmt_f64(i)));
        }
        super::write_text(&dir.join(format!("dataset.{:02}.currents.dat", set.index)), &text)?;

        let mut text = String::from("# dB[fT] SensorID ChannelID GroupID CoilNo\n");
        for r in &set.records {
            text.push_str(&format!(
                "{} {} {} {} {}\n",
                fmt_f64(r.delta_b_ft),
                r.sensor_id,
                r.channel_id,
                r.group_id,
                r.coil_no,
            ));
        }
        super::write_text(&dir.join(format!("dataset.{:02}.relax.dat", set.index)), &text)?;
    }
    Ok(warnings)
}

/// Smallest gap between distinct sorted axis values; 0 when the axis has a
/// single layer (its extent is not recoverable from centers alone).
fn infer_axis_size(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    values.dedup();
    if values.len() < 2 {
        return 0.0;
    }
    values.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
}

fn read_sensors(path: &Path) -> Result<(Vec<Sensor>, Vec<IoWarning>), IoError> {
    let rows = read_table_lines(path, 9)?;
    let mut sensors = Vec::with_capacity(rows.len());
    let mut warnings = Vec::new();
    let mut seen_ids = BTreeMap::new();
    for (si, (ln, row)) in rows.iter().enumerate() {
        let normal = Vec3::new(row[3], row[4], row[5]);
        let unit = normal.normalized().ok_or_else(|| IoError::Parse {
            path: path.to_path_buf(),
            line: *ln,
            msg: "sensor normal must be a nonzero finite vector".to_string(),
        })?;
        if (normal.norm() - 1.0).abs() > crate::model::NORMAL_TOL {
            warnings.push(IoWarning::NormalizedNormal {
                path: path.to_path_buf(),
                entity: "sensor",
                index: si,
            });
        }
        let sensor_id = cell_as_int(path, *ln, 7, row[6])?;
        if let Some(prev) = seen_ids.insert(sensor_id, *ln) {
            return Err(IoError::Parse {
                path: path.to_path_buf(),
                line: *ln,
                msg: format!("duplicate SensorID {sensor_id} (first seen on line {prev})"),
            });
        }
        sensors.push(Sensor {
            position: Vec3::new(row[0], row[1], row[2]),
            normal: unit,
            sensor_id,
            channel_id: cell_as_int(path, *ln, 8, row[7])?,
            group_id: cell_as_int(path, *ln, 9, row[8])?,
        });
    }
    Ok((sensors, warnings))
}

fn read_relax(
    path: &Path,
    n_coils: usize,
    sensors: &[Sensor],
) -> Result<Vec<MeasurementRecord>, IoError> {
    let by_id: BTreeMap<i64, &Sensor> = sensors.iter().map(|s| (s.sensor_id, s)).collect();
    let rows = read_table_lines(path, 5)?;
    let mut records = Vec::with_capacity(rows.len());
    for (ln, row) in &rows {
        let sensor_id = cell_as_int(path, *ln, 2, row[1])?;
        let channel_id = cell_as_int(path, *ln, 3, row[2])?;
        let group_id = cell_as_int(path, *ln, 4, row[3])?;
        let coil_no = cell_as_int(path, *ln, 5, row[4])?;
        let sensor = by_id.get(&sensor_id).ok_or_else(|| IoError::Parse {
            path: path.to_path_buf(),
            line: *ln,
            msg: format!("SensorID {sensor_id} is not listed in sensors.dat"),
        })?;
        if sensor.channel_id != channel_id || sensor.group_id != group_id {
            return Err(IoError::Parse {
                path: path.to_path_buf(),
                line: *ln,
                msg: format!(
                    "sensor {sensor_id} is channel {} group {} in sensors.dat, \
                     relax row says channel {channel_id} group {group_id}",
                    sensor.channel_id, sensor.group_id
                ),
            });
        }
        if coil_no < 1 || coil_no > n_coils as i64 {
            return Err(IoError::Parse {
                path: path.to_path_buf(),
                line: *ln,
                msg: format!("CoilNo {coil_no} outside 1..={n_coils}"),
            });
        }
        records.push(MeasurementRecord {
            delta_b_ft: row[0],
            sensor_id,
            channel_id,
            group_id,
            coil_no: coil_no as usize,
        });
    }

    // Shape checks: equal coil groups in ascending order, one row per
    // measured sensor per group, identical sensor sequence everywhere.
    let mut sequence = Vec::new();
    for r in &records {
        if !sequence.contains(&r.sensor_id) {
            sequence.push(r.sensor_id);
        }
    }
    let malformed = |msg: String| IoError::Malformed { path: path.to_path_buf(), msg };
    let n_rel = sequence.len();
    if n_rel == 0 {
        if n_coils == 0 {
            return Ok(records);
        }
        return Err(malformed(format!("relax table is empty, expected {n_coils} coil groups")));
    }
    if records.len() % n_rel != 0 {
        return Err(malformed(format!(
            "row count {} not divisible by sensor count {n_rel}",
            records.len()
        )));
    }
    let n_groups = records.len() / n_rel;
    if n_groups != n_coils {
        return Err(malformed(format!(
            "relax table covers {n_groups} coil groups, coil grid has {n_coils}"
        )));
    }
    for (g, group) in records.chunks_exact(n_rel).enumerate() {
        for (ri, r) in group.iter().enumerate() {
            if r.coil_no != g + 1 {
                return Err(malformed(format!(
                    "row {}: expected coil group {}, found CoilNo {}",
                    g * n_rel + ri + 1,
                    g + 1,
                    r.coil_no
                )));
            }
            if r.sensor_id != sequence[ri] {
                return Err(malformed(format!(
                    "row {}: sensor order differs between coil groups",
                    g * n_rel + ri + 1
                )));
            }
        }
    }
    Ok(records)
}

/// Finds `dataset.NN.currents.dat` / `dataset.NN.relax.dat` pairs, ascending
/// by index. Either file without its partner is an error.
fn find_set_indices(dir: &Path) -> Result<Vec<u32>, IoError> {
    let mut currents = Vec::new();
    let mut relax = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let entry = entry.map_err(io_err(dir))?;
        let name = entry.file_name();
        let Some(name) = name.to_str() else { continue };
        let Some(middle) = name.strip_prefix("dataset.") else { continue };
        if let Some(digits) = middle.strip_suffix(".currents.dat") {
            if let Ok(idx) = digits.parse::<u32>() {
                currents.push(idx);
            }
        } else if let Some(digits) = middle.strip_suffix(".relax.dat") {
            if let Ok(idx) = digits.parse::<u32>() {
                relax.push(idx);
            }
        }
    }
    currents.sort_unstable();
    relax.sort_unstable();
    for idx in &currents {
        if !relax.contains(idx) {
            return Err(IoError::Malformed {
                path: dir.join(format!("dataset.{idx:02}.relax.dat")),
                msg: "missing relax table for this currents table".to_string(),
            });
        }
    }
    for idx in &relax {
        if !currents.contains(idx) {
            return Err(IoError::Malformed {
                path: dir.join(format!("dataset.{idx:02}.currents.dat")),
                msg: "missing currents table for this relax table".to_string(),
            });
        }
    }
    Ok(currents)
}

pub fn read_dataset_tables_with_warnings(
    dir: &Path,
) -> Result<(Dataset, Vec<IoWarning>), IoError> {
    let (sensors, warnings) = read_sensors(&dir.join("sensors.dat"))?;

    let grid_path = dir.join("coilGrid.dat");
    let coil_rows = read_table(&grid_path, 3)?;
    let mut coils: Vec<Coil> = coil_rows
        .iter()
        .map(|row| Coil {
            position: Vec3::new(row[0], row[1], row[2]),
            normal: Vec3::Z,
            segments: None,
        })
        .collect();

    let template_path = dir.join("coilTemplate.dat");
    let template: Vec<Vec3> = read_table(&template_path, 3)?
        .iter()
        .map(|row| Vec3::new(row[0], row[1], row[2]))
        .collect();
    if !template.is_empty() {
        coils = parse_coils(&coils, &template)?;
    }

    let voxel_path = dir.join("voxelGrid.dat");
    let center_rows = read_table(&voxel_path, 3)?;
    if center_rows.is_empty() {
        return Err(IoError::Malformed {
            path: voxel_path,
            msg: "voxel grid is empty".to_string(),
        });
    }
    let centers: Vec<Vec3> =
        center_rows.iter().map(|row| Vec3::new(row[0], row[1], row[2])).collect();
    let voxel_size = Vec3::new(
        infer_axis_size(centers.iter().map(|w| w.x).collect()),
        infer_axis_size(centers.iter().map(|w| w.y).collect()),
        infer_axis_size(centers.iter().map(|w| w.z).collect()),
    );
    let roi = crate::model::get_roi(&centers, voxel_size)?;
    let dim = if roi.z.is_degenerate() { Dim::Two } else { Dim::Three };

    let mut sets = Vec::new();
    for index in find_set_indices(dir)? {
        let currents_path = dir.join(format!("dataset.{index:02}.currents.dat"));
        let currents: Vec<f64> =
            read_table(&currents_path, 1)?.iter().map(|row| row[0]).collect();
        if currents.len() != coils.len() {
            return Err(IoError::Malformed {
                path: currents_path,
                msg: format!(
                    "currents table has {} rows, coil grid has {}",
                    currents.len(),
                    coils.len()
                ),
            });
        }
        let relax_path = dir.join(format!("dataset.{index:02}.relax.dat"));
        let records = read_relax(&relax_path, coils.len(), &sensors)?;
        sets.push(MeasurementSet { index, currents, records });
    }

    let setup = Setup { dim, roi, coils, sensors };
    Ok((Dataset { setup, sets, defective_sensors: Vec::new() }, warnings))
}

pub fn read_dataset_tables(dir: &Path) -> Result<Dataset, IoError> {
    let (dataset, warnings) = read_dataset_tables_with_warnings(dir)?;
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(dataset)
}

/// Reads a dataset and removes unusable sensors: those listed in
/// `defective_ids` and those without any relax rows. Remaining order is
/// preserved; every removal is reported as a warning.
pub fn load_dataset_with_warnings(
    dir: &Path,
    defective_ids: &[i64],
) -> Result<(Dataset, Vec<IoWarning>), IoError> {
    let (mut dataset, mut warnings) = read_dataset_tables_with_warnings(dir)?;

    let mut measured = Vec::new();
    for set in &dataset.sets {
        for r in &set.records {
            if !measured.contains(&r.sensor_id) {
                measured.push(r.sensor_id);
            }
        }
    }

    let mut dropped_defective = Vec::new();
    dataset.setup.sensors.retain(|s| {
        if defective_ids.contains(&s.sensor_id) {
            warnings.push(IoWarning::DefectiveSensorDropped { sensor_id: s.sensor_id });
            dropped_defective.push(s.sensor_id);
            false
        } else if !measured.contains(&s.sensor_id) {
            warnings.push(IoWarning::OrphanSensorDropped { sensor_id: s.sensor_id });
            false
        } else {
            true
        }
    });
    for set in &mut dataset.sets {
        set.records.retain(|r| !defective_ids.contains(&r.sensor_id));
    }
    dataset.defective_sensors = dropped_defective;
    Ok((dataset, warnings))
}

pub fn load_dataset(dir: &Path, defective_ids: &[i64]) -> Result<Dataset, IoError> {
    let (dataset, warnings) = load_dataset_with_warnings(dir, defective_ids)?;
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(dataset)
}

/// Turns a combined system matrix and a phantom into relaxation amplitudes
/// in femtotesla. The phantom is scaled so the voxel concentrations describe
/// `mass_mg` milligrams of particles with susceptibility `chi` distributed
/// proportionally to the phantom values.
pub fn measurement_from_matrix(
    matrix: &SystemMatrix,
    phantom: &Phantom,
    chi: f64,
    mass_mg: f64,
) -> Result<Vec<f64>, IoError> {
    if phantom.res != matrix.grid.res {
        return Err(IoError::PhantomResMismatch {
            phantom: phantom.res,
            config: matrix.grid.res,
        });
    }
    if !(chi.is_finite() && chi > 0.0) {
        return Err(IoError::NonpositiveChi(chi));
    }
    if !(mass_mg.is_finite() && mass_mg > 0.0) {
        return Err(IoError::NonpositiveMass(mass_mg));
    }
    let total: f64 = phantom.values.iter().sum();
    if !(total.is_finite() && total > 0.0) {
        return Err(IoError::NonpositivePhantomSum(total));
    }
    // One shared factor keeps scaling exact: doubling chi, mass, or the
    // drive currents doubles every output bit for bit.
    let scale = chi * (mass_mg * 1e-6) / (total * matrix.grid.quadrature_weight());
    let c: Vec<f64> = phantom.values.iter().map(|&p| p * scale).collect();
    let y = forward_apply(matrix, &c)?;
    Ok(y.iter().map(|&v| v * 1e15).collect())
}

/// Full forward simulation of a measurement: system matrix assembly followed
/// by [`measurement_from_matrix`].
pub fn simulate_measurement(
    setup: &Setup,
    config: &Config,
    physics: &PhysicsParams,
    phantom: &Phantom,
    chi: f64,
    mass_mg: f64,
) -> Result<Vec<f64>, IoError> {
    let matrix = create_system_matrix(setup, config, physics)?;
    measurement_from_matrix(&matrix, phantom, chi, mass_mg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::create_voxel_grid;
    use crate::phantom::create_phantom;
    use crate::presets;

    fn simulated_dataset() -> (Setup, Config, VoxelGrid, Dataset) {
        let (setup, config) = presets::realistic_3d();
        let physics = PhysicsParams::default();
        let phantom = create_phantom("tumor", config.res).unwrap();
        let y = simulate_measurement(&setup, &config, &physics, &phantom, 0.9, 5.0).unwrap();
        let restricted = restricted_setup(&setup, &config);
        let records =
            measurement_records(&restricted.sensors, restricted.coils.len(), &y).unwrap();
        let currents = vec![1.0; restricted.coils.len()];
        let grid = create_voxel_grid(&setup.roi, config.res).unwrap();
        let dataset = Dataset {
            setup: restricted,
            sets: vec![MeasurementSet { index: 1, currents, records }],
            defective_sensors: Vec::new(),
        };
        (setup, config, grid, dataset)
    }

    fn assert_close(a: f64, b: f64, tol: f64, what: &str) {
        assert!((a - b).abs() <= tol, "{what}: {a} vs {b}");
    }

    #[test]
    fn dataset_round_trips_through_text() {
        let dir = tempfile::tempdir().unwrap();
        let (_, _, grid, dataset) = simulated_dataset();
        let warnings = write_dataset_tables(&dataset, &grid, dir.path()).unwrap();
        assert!(warnings.is_empty(), "+z coils should write cleanly: {warnings:?}");

        let (back, warnings) = read_dataset_tables_with_warnings(dir.path()).unwrap();
        assert!(warnings.is_empty(), "{warnings:?}");

        assert_eq!(back.setup.dim, dataset.setup.dim);
        for axis in 0..3 {
            assert_close(
                back.setup.roi.axis(axis).lo,
                dataset.setup.roi.axis(axis).lo,
                1e-9,
                "roi lo",
            );
            assert_close(
                back.setup.roi.axis(axis).hi,
                dataset.setup.roi.axis(axis).hi,
                1e-9,
                "roi hi",
            );
        }

        assert_eq!(back.setup.sensors.len(), dataset.setup.sensors.len());
        for (sa, sb) in back.setup.sensors.iter().zip(&dataset.setup.sensors) {
            for axis in 0..3 {
                assert_close(sa.position[axis], sb.position[axis], 5e-12, "sensor position");
                assert_close(sa.normal[axis], sb.normal[axis], 5e-12, "sensor normal");
            }
            assert_eq!(sa.sensor_id, sb.sensor_id);
            assert_eq!(sa.channel_id, sb.channel_id);
            assert_eq!(sa.group_id, sb.group_id);
        }
        assert_eq!(back.setup.coils.len(), dataset.setup.coils.len());
        for (ca, cb) in back.setup.coils.iter().zip(&dataset.setup.coils) {
            for axis in 0..3 {
                assert_close(ca.position[axis], cb.position[axis], 5e-12, "coil position");
            }
            assert_eq!(ca.normal, cb.normal);
            let (sa, sb) = (ca.segments.as_ref().unwrap(), cb.segments.as_ref().unwrap());
            assert_eq!(sa.len(), sb.len());
            for (pa, pb) in sa.iter().zip(sb) {
                for axis in 0..3 {
                    assert_close(pa[axis], pb[axis], 5e-12, "segment point");
                }
            }
        }

        assert_eq!(back.sets.len(), 1);
        assert_eq!(back.sets[0].index, 1);
        assert_eq!(back.sets[0].currents, dataset.sets[0].currents);
        for (ra, rb) in back.sets[0].records.iter().zip(&dataset.sets[0].records) {
            assert_eq!(ra.sensor_id, rb.sensor_id);
            assert_eq!(ra.channel_id, rb.channel_id);
            assert_eq!(ra.group_id, rb.group_id);
            assert_eq!(ra.coil_no, rb.coil_no);
            assert_close(
                ra.delta_b_ft,
                rb.delta_b_ft,
                5e-12 * rb.delta_b_ft.abs(),
                "relax amplitude",
            );
        }
    }

    #[test]
    fn relax_rows_are_grouped_by_coil_ascending() {
        let dir = tempfile::tempdir().unwrap();
        let (_, _, grid, dataset) = simulated_dataset();
        write_dataset_tables(&dataset, &grid, dir.path()).unwrap();

        let rows = read_table(&dir.path().join("dataset.01.relax.dat"), 5).unwrap();
        let n_s = dataset.setup.sensors.len();
        let n_c = dataset.setup.coils.len();
        assert_eq!(rows.len(), n_s * n_c);
        for (ri, row) in rows.iter().enumerate() {
            let expect_coil = ri / n_s + 1;
            let expect_sensor = dataset.setup.sensors[ri % n_s].sensor_id;
            assert_eq!(row[4] as usize, expect_coil, "row {ri} coil group");
            assert_eq!(row[1] as i64, expect_sensor, "row {ri} sensor order");
        }
    }

    #[test]
    fn rewriting_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let (_, _, grid, dataset) = simulated_dataset();
        write_dataset_tables(&dataset, &grid, dir.path()).unwrap();
        let first = std::fs::read(dir.path().join("dataset.01.relax.dat")).unwrap();
        write_dataset_tables(&dataset, &grid, dir.path()).unwrap();
        let second = std::fs::read(dir.path().join("dataset.01.relax.dat")).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn column_count_errors_cite_file_and_line() {
        let dir = tempfile::tempdir().unwrap();
        let (_, _, grid, dataset) = simulated_dataset();
        write_dataset_tables(&dataset, &grid, dir.path()).unwrap();
        let path = dir.path().join("sensors.dat");
        let mut text = std::fs::read_to_string(&path).unwrap();
        text.push_str("1.0 2.0 3.0\n");
        let lines = text.lines().count();
        std::fs::write(&path, text).unwrap();
        match read_dataset_tables_with_warnings(dir.path()) {
            Err(IoError::Parse { path, line, msg }) => {
                assert!(path.ends_with("sensors.dat"));
                assert_eq!(line, lines);
                assert!(msg.contains("9 columns"), "{msg}");
            }
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn unknown_sensor_id_in_relax_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let (_, _, grid, dataset) = simulated_dataset();
        write_dataset_tables(&dataset, &grid, dir.path()).unwrap();
        let path = dir.path().join("dataset.01.relax.dat");
        let text = std::fs::read_to_string(&path).unwrap();
        // Sensor ids 1..6 exist; 99 does not.
        let patched = text.replacen(" 1 1 1 1\n", " 99 1 1 1\n", 1);
        assert_ne!(patched, text);
        std::fs::write(&path, patched).unwrap();
        match read_dataset_tables_with_warnings(dir.path()) {
            Err(IoError::Parse { msg, .. }) => {
                assert!(msg.contains("SensorID 99"), "{msg}")
            }
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn row_count_must_divide_by_sensor_count() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("sensors.dat"),
            "0 0 0 0 0 1 1 1 1\n0.01 0 0 0 0 1 2 2 1\n",
        )
        .unwrap();
        std::fs::write(dir.path().join("coilGrid.dat"), "0 0 -0.01\n").unwrap();
        std::fs::write(dir.path().join("coilTemplate.dat"), "# dipoles\n").unwrap();
        std::fs::write(
            dir.path().join("voxelGrid.dat"),
            "0.0 0.0 0.0\n0.01 0.0 0.0\n0.0 0.01 0.0\n0.01 0.01 0.0\n",
        )
        .unwrap();
        std::fs::write(dir.path().join("dataset.01.currents.dat"), "1.0\n").unwrap();
        std::fs::write(
            dir.path().join("dataset.01.relax.dat"),
            "5.0 1 1 1 1\n6.0 2 2 1 1\n7.0 1 1 1 1\n",
        )
        .unwrap();
        match read_dataset_tables_with_warnings(dir.path()) {
            Err(IoError::Malformed { msg, .. }) => {
                assert!(msg.contains("3 not divisible by sensor count 2"), "{msg}")
            }
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn coil_groups_must_be_ascending_and_consistent() {
        let dir = tempfile::tempdir().unwrap();
        let (_, _, grid, dataset) = simulated_dataset();
        write_dataset_tables(&dataset, &grid, dir.path()).unwrap();
        let path = dir.path().join("dataset.01.relax.dat");
        let text = std::fs::read_to_string(&path).unwrap();

        // Swap the sensor order inside the second coil group only.
        let mut lines: Vec<&str> = text.lines().collect();
        let n_s = dataset.setup.sensors.len();
        lines.swap(1 + n_s, 2 + n_s);
        std::fs::write(&path, lines.join("\n")).unwrap();
        match read_dataset_tables_with_warnings(dir.path()) {
            Err(IoError::Malformed { msg, .. }) => {
                assert!(msg.contains("sensor order"), "{msg}")
            }
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn orphan_currents_or_relax_files_are_errors() {
        let dir = tempfile::tempdir().unwrap();
        let (_, _, grid, dataset) = simulated_dataset();
        write_dataset_tables(&dataset, &grid, dir.path()).unwrap();
        std::fs::remove_file(dir.path().join("dataset.01.relax.dat")).unwrap();
        match read_dataset_tables_with_warnings(dir.path()) {
            Err(IoError::Malformed { msg, .. }) => {
                assert!(msg.contains("missing relax"), "{msg}")
            }
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn any_set_index_is_accepted() {
        let dir = tempfile::tempdir().unwrap();
        let (_, _, grid, mut dataset) = simulated_dataset();
        dataset.sets[0].index = 7;
        write_dataset_tables(&dataset, &grid, dir.path()).unwrap();
        assert!(dir.path().join("dataset.07.currents.dat").is_file());
        let (back, _) = read_dataset_tables_with_warnings(dir.path()).unwrap();
        assert_eq!(back.sets.len(), 1);
        assert_eq!(back.sets[0].index, 7);
    }

    #[test]
    fn load_dataset_drops_defective_and_orphan_sensors() {
        let dir = tempfile::tempdir().unwrap();
        let (_, _, grid, mut dataset) = simulated_dataset();
        // Make sensor 4 an orphan by removing its rows, keep others measured.
        for set in &mut dataset.sets {
            set.records.retain(|r| r.sensor_id != 4);
        }
        write_dataset_tables(&dataset, &grid, dir.path()).unwrap();

        let (loaded, warnings) = load_dataset_with_warnings(dir.path(), &[2]).unwrap();
        let ids: Vec<i64> = loaded.setup.sensors.iter().map(|s| s.sensor_id).collect();
        assert_eq!(ids, vec![1, 3, 5, 6]);
        assert_eq!(loaded.defective_sensors, vec![2]);
        assert!(loaded.sets[0].records.iter().all(|r| r.sensor_id != 2 && r.sensor_id != 4));
        assert!(warnings
            .iter()
            .any(|w| matches!(w, IoWarning::DefectiveSensorDropped { sensor_id: 2 })));
        assert!(warnings
            .iter()
            .any(|w| matches!(w, IoWarning::OrphanSensorDropped { sensor_id: 4 })));

        let n_c = loaded.setup.coils.len();
        assert_eq!(loaded.sets[0].records.len(), 4 * n_c);
    }

    #[test]
    fn measurement_scaling_doubles_exactly() {
        let (setup, config) = presets::default_2d();
        let physics = PhysicsParams::default();
        let phantom = create_phantom("fwhmdots_0.25", config.res).unwrap();

        let y1 = simulate_measurement(&setup, &config, &physics, &phantom, 0.5, 2.0).unwrap();
        let y2 = simulate_measurement(&setup, &config, &physics, &phantom, 1.0, 2.0).unwrap();
        let y3 = simulate_measurement(&setup, &config, &physics, &phantom, 0.5, 4.0).unwrap();
        let mut doubled_config = config.clone();
        doubled_config.current_pattern = &config.current_pattern * 2.0;
        let y4 =
            simulate_measurement(&setup, &doubled_config, &physics, &phantom, 0.5, 2.0).unwrap();

        assert!(y1.iter().any(|&v| v != 0.0));
        for i in 0..y1.len() {
            assert_eq!(y2[i], 2.0 * y1[i], "chi doubling, entry {i}");
            assert_eq!(y3[i], 2.0 * y1[i], "mass doubling, entry {i}");
            assert_eq!(y4[i], 2.0 * y1[i], "current doubling, entry {i}");
        }
    }

    #[test]
    fn measurement_rejects_bad_inputs() {
        let (setup, config) = presets::default_2d();
        let physics = PhysicsParams::default();
        let phantom = create_phantom("tumor", config.res).unwrap();

        let wrong_res = create_phantom("tumor", [4, 4, 1]).unwrap();
        match simulate_measurement(&setup, &config, &physics, &wrong_res, 1.0, 1.0) {
            Err(IoError::PhantomResMismatch { .. }) => {}
            other => panic!("unexpected: {other:?}"),
        }
        match simulate_measurement(&setup, &config, &physics, &phantom, 0.0, 1.0) {
            Err(IoError::NonpositiveChi(_)) => {}
            other => panic!("unexpected: {other:?}"),
        }
        match simulate_measurement(&setup, &config, &physics, &phantom, 1.0, -1.0) {
            Err(IoError::NonpositiveMass(_)) => {}
            other => panic!("unexpected: {other:?}"),
        }
        let zero = Phantom {
            values: vec![0.0; 100],
            res: config.res,
            name: "zero".to_string(),
        };
        match simulate_measurement(&setup, &config, &physics, &zero, 1.0, 1.0) {
            Err(IoError::NonpositivePhantomSum(_)) => {}
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn measurement_matches_manual_composition() {
        let (setup, config) = presets::default_2d();
        let physics = PhysicsParams::default();
        let phantom = create_phantom("tumor", config.res).unwrap();
        let chi = 0.73;
        let mass = 3.1;

        let y = simulate_measurement(&setup, &config, &physics, &phantom, chi, mass).unwrap();

        let matrix = create_system_matrix(&setup, &config, &physics).unwrap();
        let total: f64 = phantom.values.iter().sum();
        let scale = chi * (mass * 1e-6) / (total * matrix.grid.quadrature_weight());
        let c: Vec<f64> = phantom.values.iter().map(|&p| p * scale).collect();
        let manual: Vec<f64> =
            forward_apply(&matrix, &c).unwrap().iter().map(|&v| v * 1e15).collect();
        assert_eq!(y, manual);
    }
}
