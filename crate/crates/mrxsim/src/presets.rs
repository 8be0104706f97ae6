//! Ready-made demonstration setups.
//!
//! Each preset returns a matched `(Setup, Config)` pair that passes
//! validation as-is. They are small enough for tests and quick CLI runs and
//! double as documentation of how setups are assembled programmatically.

use crate::math::Vec3;
use crate::model::{
    create_coil_loop, create_current_pattern, create_entity_array, parse_coils, Coil, Config,
    Dim, Interval, Roi, Sensor, Setup,
};

fn sensors_from_line(start: Vec3, end: Vec3, normal: Vec3, n: usize, group_rule: impl Fn(usize) -> i64) -> Vec<Sensor> {
    create_entity_array(start, end, normal, n)
        .expect("preset sensor line is well-formed")
        .into_iter()
        .enumerate()
        .map(|(i, p)| Sensor {
            position: p.position,
            normal: p.normal,
            sensor_id: i as i64 + 1,
            channel_id: i as i64 + 1,
            group_id: group_rule(i),
        })
        .collect()
}

/// Positions of an n×n grid spanning [0, extent]² on a fixed z-layer.
fn grid_positions(n: usize, extent: f64, z: f64) -> Vec<Vec3> {
    let step = extent / (n - 1) as f64;
    let mut out = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            out.push(Vec3::new(i as f64 * step, j as f64 * step, z));
        }
    }
    out
}

/// 2D single-layer setup: 9 dipole coils on the left edge of a 10 cm square
/// region, 9 sensors mirrored on the right edge, sequential 1 A pattern at
/// resolution [10, 10, 1].
pub fn default_2d() -> (Setup, Config) {
    let n = 9;
    let coils = create_entity_array(
        Vec3::new(-0.01, 0.0, 0.0),
        Vec3::new(-0.01, 0.1, 0.0),
        Vec3::X,
        n,
    )
    .expect("preset coil line is well-formed")
    .into_iter()
    .map(|p| Coil { position: p.position, normal: p.normal, segments: None })
    .collect();

    let sensors = sensors_from_line(
        Vec3::new(0.11, 0.0, 0.0),
        Vec3::new(0.11, 0.1, 0.0),
        -Vec3::X,
        n,
        |_| 1,
    );

    let setup = Setup {
        dim: Dim::Two,
        roi: Roi::new(
            Interval::new(0.0, 0.1),
            Interval::new(0.0, 0.1),
            Interval::new(0.0, 0.0),
        ),
        coils,
        sensors,
    };
    let config = Config {
        res: [10, 10, 1],
        current_pattern: create_current_pattern("sequential", n, 1.0).unwrap(),
        active_coils: (0..n).collect(),
        active_sensors: (0..n).collect(),
    };
    (setup, config)
}

/// 3D setup with a 5×5 plane of dipole coils 2 cm below the region and a 5×5
/// sensor plane 2 cm above it; sequential 1 A pattern at [10, 10, 5].
///
/// The coils carry no segment polyline on purpose: simulation takes the
/// dipole path (and records the fallback warning). See [`realistic_3d`] for a
/// segmented variant.
pub fn default_3d() -> (Setup, Config) {
    let n_side = 5;
    let coils: Vec<Coil> = grid_positions(n_side, 0.1, -0.02)
        .into_iter()
        .map(|p| Coil { position: p, normal: Vec3::Z, segments: None })
        .collect();

    let sensors: Vec<Sensor> = grid_positions(n_side, 0.1, 0.07)
        .into_iter()
        .enumerate()
        .map(|(i, p)| Sensor {
            position: p,
            normal: Vec3::Z,
            sensor_id: i as i64 + 1,
            channel_id: i as i64 + 1,
            group_id: (i / n_side) as i64 + 1,
        })
        .collect();

    let n = coils.len();
    let setup = Setup {
        dim: Dim::Three,
        roi: Roi::new(
            Interval::new(0.0, 0.1),
            Interval::new(0.0, 0.1),
            Interval::new(0.0, 0.05),
        ),
        coils,
        sensors,
    };
    let config = Config {
        res: [10, 10, 5],
        current_pattern: create_current_pattern("sequential", n, 1.0).unwrap(),
        active_coils: (0..n).collect(),
        active_sensors: (0..setup.sensors.len()).collect(),
    };
    (setup, config)
}

/// Small 3D setup with segmented coils: 2×2 octagonal loops of radius 1 cm
/// below an 8×8×4 cm region, 6 sensors in two groups above it, sequential
/// 1 A pattern at [4, 4, 2].
pub fn realistic_3d() -> (Setup, Config) {
    let template = create_coil_loop(0.01, 8).expect("preset loop is well-formed");
    let bare: Vec<Coil> = grid_positions(2, 0.08, -0.02)
        .into_iter()
        .map(|p| Coil { position: p, normal: Vec3::Z, segments: None })
        .collect();
    let coils = parse_coils(&bare, &template).expect("preset template is nonempty");

    let mut sensors = Vec::with_capacity(6);
    for j in 0..2 {
        for i in 0..3 {
            let idx = j * 3 + i;
            sensors.push(Sensor {
                position: Vec3::new(0.02 + i as f64 * 0.02, 0.025 + j as f64 * 0.03, 0.06),
                normal: Vec3::Z,
                sensor_id: idx as i64 + 1,
                channel_id: idx as i64 + 1,
                group_id: j as i64 + 1,
            });
        }
    }

    let setup = Setup {
        dim: Dim::Three,
        roi: Roi::new(
            Interval::new(0.0, 0.08),
            Interval::new(0.0, 0.08),
            Interval::new(0.0, 0.04),
        ),
        coils,
        sensors,
    };
    let config = Config {
        res: [4, 4, 2],
        current_pattern: create_current_pattern("sequential", 4, 1.0).unwrap(),
        active_coils: (0..4).collect(),
        active_sensors: (0..6).collect(),
    };
    (setup, config)
}
