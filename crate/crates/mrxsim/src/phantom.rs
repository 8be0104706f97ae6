//! Voxelized test phantoms.
//!
//! Phantoms are dimensionless shape weights on the voxel grid; physical
//! scaling to a particle concentration happens in the measurement simulation.
//! The engine composes additive ellipsoids in normalized [-1, 1]³
//! coordinates; named presets cover the common test cases.

use thiserror::Error;

/// One additive ellipsoid in normalized coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipsoidSpec {
    /// Added to every voxel whose center lies inside.
    pub intensity: f64,
    /// Semi-axis lengths (a, b, c) in normalized units.
    pub semi_axes: [f64; 3],
    /// Ellipsoid center in normalized units.
    pub center: [f64; 3],
    /// Rotation about the z axis (radians), applied to the ellipsoid.
    pub rotation_z: f64,
}

/// A voxel field in grid order (x fastest, then y, then z).
#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    pub values: Vec<f64>,
    pub res: [usize; 3],
    pub name: String,
}

impl Phantom {
    pub fn voxel_count(&self) -> usize {
        self.res[0] * self.res[1] * self.res[2]
    }

    pub fn value_at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[i + self.res[0] * (j + self.res[1] * k)]
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum PhantomError {
    #[error("unknown phantom '{0}'")]
    UnknownPhantom(String),
    #[error("resolution must be >= 1 on the {axis} axis")]
    NonpositiveResolution { axis: char },
    #[error("ellipsoid semi-axes must be positive, got {0}")]
    NonpositiveSemiAxis(f64),
    #[error("bad dot fraction in '{0}': expected fwhmdots_<f> with 0 < f <= 1")]
    BadDotFraction(String),
}

fn check_res(res: [usize; 3]) -> Result<(), PhantomError> {
    for (axis, n) in [('x', res[0]), ('y', res[1]), ('z', res[2])] {
        if n == 0 {
            return Err(PhantomError::NonpositiveResolution { axis });
        }
    }
    Ok(())
}

/// Normalized coordinate of 0-based voxel index `idx` on an axis of `n`
/// voxels: cell midpoints of [-1, 1], so `-1 + (2·idx + 1)/n`.
fn normalized_coord(idx: usize, n: usize) -> f64 {
    -1.0 + (2.0 * idx as f64 + 1.0) / n as f64
}

/// Rasterizes a sum of ellipsoids: each voxel accumulates the intensity of
/// every ellipsoid containing its normalized center. Boundary ties (quadratic
/// form exactly 1) count as inside; there is no partial-volume antialiasing.
pub fn ellipsoid_phantom(
    specs: &[EllipsoidSpec],
    res: [usize; 3],
) -> Result<Phantom, PhantomError> {
    check_res(res)?;
    for spec in specs {
        for a in spec.semi_axes {
            if !(a.is_finite() && a > 0.0) {
                return Err(PhantomError::NonpositiveSemiAxis(a));
            }
        }
    }

    // Precompute per-spec trig so rotation handling is uniform.
    let rotations: Vec<(f64, f64)> =
        specs.iter().map(|s| (s.rotation_z.cos(), s.rotation_z.sin())).collect();

    let [nx, ny, nz] = res;
    let mut values = vec![0.0; nx * ny * nz];
    let mut idx = 0;
    for k in 0..nz {
        let uz = normalized_coord(k, nz);
        for j in 0..ny {
            let uy = normalized_coord(j, ny);
            for i in 0..nx {
                let ux = normalized_coord(i, nx);
                let mut v = 0.0;
                for (spec, &(c, s)) in specs.iter().zip(rotations.iter()) {
                    let dx = ux - spec.center[0];
                    let dy = uy - spec.center[1];
                    let dz = uz - spec.center[2];
                    // Rotate the point into the ellipsoid frame (inverse of
                    // the ellipsoid's own +phi rotation).
                    let rx = c * dx + s * dy;
                    let ry = -s * dx + c * dy;
                    let q = (rx / spec.semi_axes[0]).powi(2)
                        + (ry / spec.semi_axes[1]).powi(2)
                        + (dz / spec.semi_axes[2]).powi(2);
                    if q <= 1.0 {
                        v += spec.intensity;
                    }
                }
                values[idx] = v;
                idx += 1;
            }
        }
    }

    Ok(Phantom { values, res, name: "custom".to_string() })
}

/// The classic ten-ellipsoid head phantom, extended to 3D: geometry after the
/// widely used 3D adaptation of the head phantom tables, with the outer shell
/// normalized to intensity 1. Coordinates and semi-axes are in normalized
/// [-1, 1] units; the two big lenses are rotated about z by ±18 degrees.
pub fn shepp_logan_ellipsoids() -> Vec<EllipsoidSpec> {
    let deg = std::f64::consts::PI / 180.0;
    let e = |intensity: f64, a: f64, b: f64, c: f64, x0: f64, y0: f64, z0: f64, phi_deg: f64| {
        EllipsoidSpec {
            intensity,
            semi_axes: [a, b, c],
            center: [x0, y0, z0],
            rotation_z: phi_deg * deg,
        }
    };
    vec![
        e(1.0, 0.69, 0.92, 0.81, 0.0, 0.0, 0.0, 0.0),
        e(-0.98, 0.6624, 0.874, 0.78, 0.0, -0.0184, 0.0, 0.0),
        e(-0.02, 0.11, 0.31, 0.22, 0.22, 0.0, 0.0, -18.0),
        e(-0.02, 0.16, 0.41, 0.28, -0.22, 0.0, 0.0, 18.0),
        e(0.01, 0.21, 0.25, 0.41, 0.0, 0.35, -0.15, 0.0),
        e(0.01, 0.046, 0.046, 0.05, 0.0, 0.1, 0.25, 0.0),
        e(0.01, 0.046, 0.046, 0.05, 0.0, -0.1, 0.25, 0.0),
        e(0.01, 0.046, 0.023, 0.05, -0.08, -0.605, 0.0, 0.0),
        e(0.01, 0.023, 0.023, 0.02, 0.0, -0.606, 0.0, 0.0),
        e(0.01, 0.023, 0.046, 0.02, 0.06, -0.605, 0.0, 0.0),
    ]
}

/// 5×7 block-letter bitmaps, rows top to bottom.
fn letter_bitmap(letter: char) -> Option<[&'static str; 7]> {
    match letter {
        'F' => Some(["#####", "#....", "#....", "####.", "#....", "#....", "#...."]),
        'P' => Some(["####.", "#...#", "#...#", "####.", "#....", "#....", "#...."]),
        _ => None,
    }
}

/// Extrudes a 5×7 letter bitmap over the middle third of the z layers.
fn letter_phantom(letter: char, res: [usize; 3]) -> Phantom {
    let bitmap = letter_bitmap(letter).expect("caller passes a known letter");
    let [nx, ny, nz] = res;
    // Middle third, at least one layer thick.
    let z_lo = nz / 3;
    let z_hi = (2 * nz + 2) / 3;
    let z_hi = z_hi.max(z_lo + 1);

    let mut values = vec![0.0; nx * ny * nz];
    for k in z_lo..z_hi.min(nz) {
        for j in 0..ny {
            // Top bitmap row maps to the highest y indices.
            let row = ((ny - 1 - j) * 7) / ny;
            for i in 0..nx {
                let col = (i * 5) / nx;
                if bitmap[row].as_bytes()[col] == b'#' {
                    values[i + nx * (j + ny * k)] = 1.0;
                }
            }
        }
    }
    Phantom { values, res, name: format!("{letter}_letter"), }
}

/// Isolated unit dots for resolution tests: per axis, spacing
/// `s = max(1, round(f·n))` with dots at indices `idx ≡ s/2 (mod s)`.
fn dots_phantom(fraction: f64, res: [usize; 3]) -> Phantom {
    let [nx, ny, nz] = res;
    let spacing = |n: usize| -> usize { ((fraction * n as f64).round() as usize).max(1) };
    let hit = |idx: usize, n: usize| -> bool {
        let s = spacing(n);
        idx % s == s / 2
    };
    let mut values = vec![0.0; nx * ny * nz];
    for k in 0..nz {
        if !hit(k, nz) {
            continue;
        }
        for j in 0..ny {
            if !hit(j, ny) {
                continue;
            }
            for i in 0..nx {
                if hit(i, nx) {
                    values[i + nx * (j + ny * k)] = 1.0;
                }
            }
        }
    }
    Phantom { values, res, name: format!("fwhmdots_{fraction}") }
}

/// Builds one of the named presets:
///
/// - `"shepplogan3d"`: the [`shepp_logan_ellipsoids`] composition;
/// - `"fwhmdots_<f>"`: isolated unit dots spaced at fraction `f` of the grid;
/// - `"F_2"` / `"P_1"`: a block letter extruded over the middle z third;
/// - `"tumor"`: a large faint ellipsoid with a small bright inclusion.
pub fn create_phantom(name: &str, res: [usize; 3]) -> Result<Phantom, PhantomError> {
    check_res(res)?;
    if let Some(raw) = name.strip_prefix("fwhmdots_") {
        let fraction: f64 =
            raw.parse().map_err(|_| PhantomError::BadDotFraction(name.to_string()))?;
        if !(fraction.is_finite() && fraction > 0.0 && fraction <= 1.0) {
            return Err(PhantomError::BadDotFraction(name.to_string()));
        }
        return Ok(Phantom { name: name.to_string(), ..dots_phantom(fraction, res) });
    }
    match name {
        "shepplogan3d" => {
            let mut p = ellipsoid_phantom(&shepp_logan_ellipsoids(), res)?;
            p.name = name.to_string();
            Ok(p)
        }
        "F_2" => Ok(Phantom { name: name.to_string(), ..letter_phantom('F', res) }),
        "P_1" => Ok(Phantom { name: name.to_string(), ..letter_phantom('P', res) }),
        "tumor" => {
            let specs = [
                EllipsoidSpec {
                    intensity: 0.2,
                    semi_axes: [0.75, 0.85, 0.8],
                    center: [0.0, 0.0, 0.0],
                    rotation_z: 0.0,
                },
                EllipsoidSpec {
                    intensity: 1.0,
                    semi_axes: [0.15, 0.15, 0.15],
                    center: [0.3, 0.25, 0.2],
                    rotation_z: 0.0,
                },
            ];
            let mut p = ellipsoid_phantom(&specs, res)?;
            p.name = name.to_string();
            Ok(p)
        }
        other => Err(PhantomError::UnknownPhantom(other.to_string())),
    }
}
