//! The structured setup and config documents.
//!
//! Both are TOML with a `format` tag and an integer schema `version`. Files
//! written by a newer minor revision may carry extra keys; readers keep
//! working and report each unknown key as a warning. Indices stored in files
//! (active coil and sensor lists) are 1-based; in memory they are 0-based.

use super::{io_err, IoError, IoWarning};
use crate::math::Vec3;
use crate::model::{Coil, Config, Dim, Interval, Roi, Sensor, Setup};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

const SETUP_FORMAT: &str = "mrxsetup";
const CONFIG_FORMAT: &str = "mrxcfg";
const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct SetupFile {
    format: String,
    version: i64,
    dim: u8,
    roi: RoiFile,
    #[serde(default)]
    coils: Vec<CoilFile>,
    #[serde(default)]
    sensors: Vec<SensorFile>,
}

#[derive(Serialize, Deserialize)]
pub(crate) struct RoiFile {
    pub(crate) x: [f64; 2],
    pub(crate) y: [f64; 2],
    pub(crate) z: [f64; 2],
}

impl RoiFile {
    pub(crate) fn from_roi(roi: &Roi) -> Self {
        RoiFile {
            x: [roi.x.lo, roi.x.hi],
            y: [roi.y.lo, roi.y.hi],
            z: [roi.z.lo, roi.z.hi],
        }
    }

    pub(crate) fn to_roi(&self) -> Roi {
        Roi::new(
            Interval::new(self.x[0], self.x[1]),
            Interval::new(self.y[0], self.y[1]),
            Interval::new(self.z[0], self.z[1]),
        )
    }
}

#[derive(Serialize, Deserialize)]
struct CoilFile {
    position: [f64; 3],
    normal: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    segments: Option<Vec<[f64; 3]>>,
}

#[derive(Serialize, Deserialize)]
struct SensorFile {
    position: [f64; 3],
    normal: [f64; 3],
    sensor_id: i64,
    channel_id: i64,
    group_id: i64,
}

#[derive(Serialize, Deserialize)]
struct ConfigFile {
    format: String,
    version: i64,
    res: [u64; 3],
    active_coils: Vec<i64>,
    active_sensors: Vec<i64>,
    current_pattern: Vec<Vec<f64>>,
}

/// Keys this build understands, per document section. Anything else in the
/// file is assumed to come from a newer revision and is reported, not fatal.
const SETUP_KEYS: &[&str] = &["format", "version", "dim", "roi", "coils", "sensors"];
const ROI_KEYS: &[&str] = &["x", "y", "z"];
const COIL_KEYS: &[&str] = &["position", "normal", "segments"];
const SENSOR_KEYS: &[&str] = &["position", "normal", "sensor_id", "channel_id", "group_id"];
const CONFIG_KEYS: &[&str] =
    &["format", "version", "res", "active_coils", "active_sensors", "current_pattern"];

fn collect_unknown_keys(
    value: &toml::Value,
    known: &[&str],
    prefix: &str,
    path: &Path,
    warnings: &mut Vec<IoWarning>,
) {
    if let Some(table) = value.as_table() {
        for key in table.keys() {
            if !known.contains(&key.as_str()) {
                warnings.push(IoWarning::UnknownField {
                    path: path.to_path_buf(),
                    key: if prefix.is_empty() { key.clone() } else { format!("{prefix}.{key}") },
                });
            }
        }
    }
}

fn scan_setup_keys(value: &toml::Value, path: &Path, warnings: &mut Vec<IoWarning>) {
    collect_unknown_keys(value, SETUP_KEYS, "", path, warnings);
    if let Some(roi) = value.get("roi") {
        collect_unknown_keys(roi, ROI_KEYS, "roi", path, warnings);
    }
    for (section, keys) in [("coils", COIL_KEYS), ("sensors", SENSOR_KEYS)] {
        if let Some(arr) = value.get(section).and_then(|v| v.as_array()) {
            for (i, item) in arr.iter().enumerate() {
                collect_unknown_keys(item, keys, &format!("{section}[{}]", i + 1), path, warnings);
            }
        }
    }
}

fn parse_toml(path: &Path) -> Result<toml::Value, IoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| IoError::Malformed {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    Ok(toml::Value::Table(table))
}

fn check_header(
    value: &toml::Value,
    path: &Path,
    expected_format: &'static str,
) -> Result<(), IoError> {
    let format = value.get("format").and_then(|v| v.as_str()).unwrap_or("");
    if format != expected_format {
        return Err(IoError::WrongFormat { path: path.to_path_buf(), expected: expected_format });
    }
    let version = value.get("version").and_then(|v| v.as_integer()).unwrap_or(-1);
    if version != SCHEMA_VERSION as i64 {
        return Err(IoError::Version {
            path: path.to_path_buf(),
            kind: expected_format,
            found: version,
            expected: SCHEMA_VERSION,
        });
    }
    Ok(())
}

fn deserialize_section<T: serde::de::DeserializeOwned>(
    value: toml::Value,
    path: &Path,
) -> Result<T, IoError> {
    value
        .try_into()
        .map_err(|e: toml::de::Error| IoError::Malformed {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })
}

/// Normalizes a stored normal, warning when its length is off and rejecting
/// zero or non-finite vectors outright.
fn read_normal(
    raw: [f64; 3],
    entity: &'static str,
    index: usize,
    path: &Path,
    warnings: &mut Vec<IoWarning>,
) -> Result<Vec3, IoError> {
    let v = Vec3::from_array(raw);
    match v.normalized() {
        Some(unit) => {
            if (v.norm() - 1.0).abs() > crate::model::NORMAL_TOL {
                warnings.push(IoWarning::NormalizedNormal {
                    path: path.to_path_buf(),
                    entity,
                    index,
                });
                Ok(unit)
            } else {
                Ok(v)
            }
        }
        None => Err(IoError::Malformed {
            path: path.to_path_buf(),
            msg: format!("{entity} {}: normal must be a nonzero finite vector", index + 1),
        }),
    }
}

pub fn save_setup(setup: &Setup, path: &Path) -> Result<(), IoError> {
    let file = SetupFile {
        format: SETUP_FORMAT.to_string(),
        version: SCHEMA_VERSION as i64,
        dim: setup.dim.as_u8(),
        roi: RoiFile::from_roi(&setup.roi),
        coils: setup
            .coils
            .iter()
            .map(|c| CoilFile {
                position: c.position.to_array(),
                normal: c.normal.to_array(),
                segments: c
                    .segments
                    .as_ref()
                    .map(|pts| pts.iter().map(|p| p.to_array()).collect()),
            })
            .collect(),
        sensors: setup
            .sensors
            .iter()
            .map(|s| SensorFile {
                position: s.position.to_array(),
                normal: s.normal.to_array(),
                sensor_id: s.sensor_id,
                channel_id: s.channel_id,
                group_id: s.group_id,
            })
            .collect(),
    };
    let text = toml::to_string(&file).expect("setup serializes to TOML");
    super::write_text(path, &text)
}

pub fn load_setup_with_warnings(path: &Path) -> Result<(Setup, Vec<IoWarning>), IoError> {
    let value = parse_toml(path)?;
    check_header(&value, path, SETUP_FORMAT)?;
    let mut warnings = Vec::new();
    scan_setup_keys(&value, path, &mut warnings);
    let file: SetupFile = deserialize_section(value, path)?;

    let dim = Dim::from_u8(file.dim).ok_or_else(|| IoError::Malformed {
        path: path.to_path_buf(),
        msg: format!("dim must be 2 or 3, got {}", file.dim),
    })?;
    let roi = file.roi.to_roi();
    let mut coils = Vec::with_capacity(file.coils.len());
    for (i, c) in file.coils.iter().enumerate() {
        coils.push(Coil {
            position: Vec3::from_array(c.position),
            normal: read_normal(c.normal, "coil", i, path, &mut warnings)?,
            segments: c
                .segments
                .as_ref()
                .map(|pts| pts.iter().map(|p| Vec3::from_array(*p)).collect()),
        });
    }
    let mut sensors = Vec::with_capacity(file.sensors.len());
    for (i, s) in file.sensors.iter().enumerate() {
        sensors.push(Sensor {
            position: Vec3::from_array(s.position),
            normal: read_normal(s.normal, "sensor", i, path, &mut warnings)?,
            sensor_id: s.sensor_id,
            channel_id: s.channel_id,
            group_id: s.group_id,
        });
    }
    Ok((Setup { dim, roi, coils, sensors }, warnings))
}

pub fn load_setup(path: &Path) -> Result<Setup, IoError> {
    let (setup, warnings) = load_setup_with_warnings(path)?;
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(setup)
}

pub fn save_config(config: &Config, path: &Path) -> Result<(), IoError> {
    let file = ConfigFile {
        format: CONFIG_FORMAT.to_string(),
        version: SCHEMA_VERSION as i64,
        res: [config.res[0] as u64, config.res[1] as u64, config.res[2] as u64],
        active_coils: config.active_coils.iter().map(|&i| i as i64 + 1).collect(),
        active_sensors: config.active_sensors.iter().map(|&i| i as i64 + 1).collect(),
        current_pattern: config
            .current_pattern
            .rows()
            .into_iter()
            .map(|row| row.to_vec())
            .collect(),
    };
    let text = toml::to_string(&file).expect("config serializes to TOML");
    super::write_text(path, &text)
}

fn read_active_list(raw: &[i64], what: &str, path: &Path) -> Result<Vec<usize>, IoError> {
    let mut out = Vec::with_capacity(raw.len());
    for &v in raw {
        if v < 1 {
            return Err(IoError::Malformed {
                path: path.to_path_buf(),
                msg: format!("{what} indices are 1-based, got {v}"),
            });
        }
        out.push(v as usize - 1);
    }
    Ok(out)
}

pub fn load_config_with_warnings(path: &Path) -> Result<(Config, Vec<IoWarning>), IoError> {
    let value = parse_toml(path)?;
    check_header(&value, path, CONFIG_FORMAT)?;
    let mut warnings = Vec::new();
    collect_unknown_keys(&value, CONFIG_KEYS, "", path, &mut warnings);
    let file: ConfigFile = deserialize_section(value, path)?;

    let rows = file.current_pattern.len();
    let cols = file.current_pattern.first().map_or(0, |r| r.len());
    for (i, row) in file.current_pattern.iter().enumerate() {
        if row.len() != cols {
            return Err(IoError::Malformed {
                path: path.to_path_buf(),
                msg: format!(
                    "current_pattern row {} has {} entries, row 1 has {cols}",
                    i + 1,
                    row.len()
                ),
            });
        }
    }
    let flat: Vec<f64> = file.current_pattern.into_iter().flatten().collect();
    let current_pattern =
        Array2::from_shape_vec((rows, cols), flat).expect("rectangular rows checked above");

    Ok((
        Config {
            res: [file.res[0] as usize, file.res[1] as usize, file.res[2] as usize],
            current_pattern,
            active_coils: read_active_list(&file.active_coils, "active_coils", path)?,
            active_sensors: read_active_list(&file.active_sensors, "active_sensors", path)?,
        },
        warnings,
    ))
}

pub fn load_config(path: &Path) -> Result<Config, IoError> {
    let (config, warnings) = load_config_with_warnings(path)?;
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    fn setups_equal(a: &Setup, b: &Setup) {
        assert_eq!(a.dim, b.dim);
        for axis in 0..3 {
            assert_eq!(a.roi.axis(axis).lo, b.roi.axis(axis).lo);
            assert_eq!(a.roi.axis(axis).hi, b.roi.axis(axis).hi);
        }
        assert_eq!(a.coils.len(), b.coils.len());
        for (ca, cb) in a.coils.iter().zip(&b.coils) {
            assert_eq!(ca.position, cb.position);
            assert_eq!(ca.normal, cb.normal);
            assert_eq!(ca.segments, cb.segments);
        }
        assert_eq!(a.sensors, b.sensors);
    }

    #[test]
    fn setup_round_trips_exactly() {
        let dir = tempfile::tempdir().unwrap();
        for (setup, _) in
            [presets::default_2d(), presets::default_3d(), presets::realistic_3d()]
        {
            let path = dir.path().join("t.mrxsetup");
            save_setup(&setup, &path).unwrap();
            let (loaded, warnings) = load_setup_with_warnings(&path).unwrap();
            assert!(warnings.is_empty(), "unexpected warnings: {warnings:?}");
            setups_equal(&setup, &loaded);
        }
    }

    #[test]
    fn config_round_trips_exactly() {
        let dir = tempfile::tempdir().unwrap();
        for (_, config) in
            [presets::default_2d(), presets::default_3d(), presets::realistic_3d()]
        {
            let path = dir.path().join("t.mrxcfg");
            save_config(&config, &path).unwrap();
            let (loaded, warnings) = load_config_with_warnings(&path).unwrap();
            assert!(warnings.is_empty());
            assert_eq!(config.res, loaded.res);
            assert_eq!(config.active_coils, loaded.active_coils);
            assert_eq!(config.active_sensors, loaded.active_sensors);
            assert_eq!(config.current_pattern, loaded.current_pattern);
        }
    }

    #[test]
    fn awkward_floats_survive_the_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let (mut setup, _) = presets::default_2d();
        setup.coils[0].position = Vec3::new(0.1 + 0.2, 1.0 / 3.0, f64::MIN_POSITIVE);
        setup.roi.x.hi = std::f64::consts::PI * 1e-2;
        let path = dir.path().join("t.mrxsetup");
        save_setup(&setup, &path).unwrap();
        let (loaded, _) = load_setup_with_warnings(&path).unwrap();
        assert_eq!(loaded.coils[0].position, setup.coils[0].position);
        assert_eq!(loaded.roi.x.hi, setup.roi.x.hi);
    }

    #[test]
    fn unknown_keys_warn_but_load() {
        let dir = tempfile::tempdir().unwrap();
        let (setup, config) = presets::default_2d();
        let spath = dir.path().join("t.mrxsetup");
        save_setup(&setup, &spath).unwrap();
        let text = std::fs::read_to_string(&spath).unwrap();
        // Splice additions into the right table contexts: one top-level key
        // after the version line, one inside the roi section.
        let text = text.replacen("version = 1\n", "version = 1\nfuture_knob = true\n", 1);
        let text = text.replacen("[roi]\n", "[roi]\nunits = \"m\"\n", 1);
        std::fs::write(&spath, text).unwrap();
        let (loaded, warnings) = load_setup_with_warnings(&spath).unwrap();
        setups_equal(&setup, &loaded);
        let keys: Vec<String> = warnings
            .iter()
            .map(|w| match w {
                IoWarning::UnknownField { key, .. } => key.clone(),
                other => panic!("unexpected warning {other:?}"),
            })
            .collect();
        assert!(keys.contains(&"future_knob".to_string()), "{keys:?}");
        assert!(keys.contains(&"roi.units".to_string()), "{keys:?}");

        let cpath = dir.path().join("t.mrxcfg");
        save_config(&config, &cpath).unwrap();
        let mut text = std::fs::read_to_string(&cpath).unwrap();
        text.push_str("solver = \"direct\"\n");
        std::fs::write(&cpath, text).unwrap();
        let (_, warnings) = load_config_with_warnings(&cpath).unwrap();
        assert_eq!(warnings.len(), 1);
    }

    #[test]
    fn version_and_format_are_enforced() {
        let dir = tempfile::tempdir().unwrap();
        let (setup, _) = presets::default_2d();
        let path = dir.path().join("t.mrxsetup");
        save_setup(&setup, &path).unwrap();

        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::write(&path, text.replace("version = 1", "version = 99")).unwrap();
        match load_setup_with_warnings(&path) {
            Err(IoError::Version { found: 99, expected: 1, .. }) => {}
            other => panic!("unexpected: {other:?}"),
        }

        std::fs::write(&path, "format = \"mrxcfg\"\nversion = 1\n").unwrap();
        match load_setup_with_warnings(&path) {
            Err(IoError::WrongFormat { expected: "mrxsetup", .. }) => {}
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn truncated_document_names_the_missing_field() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.mrxsetup");
        std::fs::write(&path, "format = \"mrxsetup\"\nversion = 1\ndim = 2\n").unwrap();
        match load_setup_with_warnings(&path) {
            Err(IoError::Malformed { msg, .. }) => assert!(msg.contains("roi"), "{msg}"),
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn non_unit_normals_are_normalized_with_warning() {
        let dir = tempfile::tempdir().unwrap();
        let (setup, _) = presets::default_2d();
        let path = dir.path().join("t.mrxsetup");
        save_setup(&setup, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        // The 2D starter stores +x coil normals; scale the first one.
        let patched = text.replacen("normal = [1.0, 0.0, 0.0]", "normal = [2.0, 0.0, 0.0]", 1);
        assert_ne!(patched, text);
        std::fs::write(&path, patched).unwrap();
        let (loaded, warnings) = load_setup_with_warnings(&path).unwrap();
        assert_eq!(loaded.coils[0].normal, Vec3::new(1.0, 0.0, 0.0));
        assert!(warnings
            .iter()
            .any(|w| matches!(w, IoWarning::NormalizedNormal { entity: "coil", index: 0, .. })));
    }

    #[test]
    fn one_based_active_lists_in_files() {
        let dir = tempfile::tempdir().unwrap();
        let (_, config) = presets::default_2d();
        let path = dir.path().join("t.mrxcfg");
        save_config(&config, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("active_coils = [1, 2, 3, 4, 5, 6, 7, 8, 9]"), "{text}");

        std::fs::write(&path, text.replace("active_coils = [1", "active_coils = [0")).unwrap();
        match load_config_with_warnings(&path) {
            Err(IoError::Malformed { msg, .. }) => assert!(msg.contains("1-based")),
            other => panic!("unexpected: {other:?}"),
        }
    }
}
