//! Small fixed-size vector and matrix helpers.
//!
//! Everything here is plain `f64` value math on 3-component quantities. The
//! simulation only ever needs 3x3 operations, so the types are hand-rolled
//! `Copy` structs rather than a linear-algebra dependency.

use std::ops::{Add, Div, Index, Mul, Neg, Sub};

/// A point or direction in 3-space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };
    pub const X: Vec3 = Vec3 { x: 1.0, y: 0.0, z: 0.0 };
    pub const Y: Vec3 = Vec3 { x: 0.0, y: 1.0, z: 0.0 };
    pub const Z: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 1.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn dot(self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(self, other: Vec3) -> Vec3 {
        Vec3 {
            x: self.y * other.z - self.z * other.y,
            y: self.z * other.x - self.x * other.z,
            z: self.x * other.y - self.y * other.x,
        }
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Unit vector in the same direction, or `None` for the zero vector.
    pub fn normalized(self) -> Option<Vec3> {
        let n = self.norm();
        if n == 0.0 {
            None
        } else {
            Some(self / n)
        }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub const fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub const fn from_array(a: [f64; 3]) -> Self {
        Vec3 { x: a[0], y: a[1], z: a[2] }
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Mul<Vec3> for f64 {
    type Output = Vec3;
    fn mul(self, v: Vec3) -> Vec3 {
        v * self
    }
}

impl Div<f64> for Vec3 {
    type Output = Vec3;
    fn div(self, s: f64) -> Vec3 {
        Vec3::new(self.x / s, self.y / s, self.z / s)
    }
}

impl Index<usize> for Vec3 {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        match i {
            0 => &self.x,
            1 => &self.y,
            2 => &self.z,
            _ => panic!("Vec3 index {i} out of range"),
        }
    }
}

/// A 3x3 matrix, row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat3 {
    pub rows: [[f64; 3]; 3],
}

impl Mat3 {
    pub const fn new(rows: [[f64; 3]; 3]) -> Self {
        Mat3 { rows }
    }

    pub const fn identity() -> Self {
        Mat3::new([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    }

    pub const fn zero() -> Self {
        Mat3::new([[0.0; 3]; 3])
    }

    /// Outer product `a b^T`.
    pub fn outer(a: Vec3, b: Vec3) -> Self {
        let a = a.to_array();
        let b = b.to_array();
        let mut rows = [[0.0; 3]; 3];
        for (i, row) in rows.iter_mut().enumerate() {
            for (j, e) in row.iter_mut().enumerate() {
                *e = a[i] * b[j];
            }
        }
        Mat3 { rows }
    }

    pub fn mul_vec(self, v: Vec3) -> Vec3 {
        Vec3::new(
            self.rows[0][0] * v.x + self.rows[0][1] * v.y + self.rows[0][2] * v.z,
            self.rows[1][0] * v.x + self.rows[1][1] * v.y + self.rows[1][2] * v.z,
            self.rows[2][0] * v.x + self.rows[2][1] * v.y + self.rows[2][2] * v.z,
        )
    }

    pub fn trace(self) -> f64 {
        self.rows[0][0] + self.rows[1][1] + self.rows[2][2]
    }

    pub fn transpose(self) -> Mat3 {
        let r = self.rows;
        Mat3::new([
            [r[0][0], r[1][0], r[2][0]],
            [r[0][1], r[1][1], r[2][1]],
            [r[0][2], r[1][2], r[2][2]],
        ])
    }

    pub fn scale(self, s: f64) -> Mat3 {
        let mut rows = self.rows;
        for row in &mut rows {
            for e in row {
                *e *= s;
            }
        }
        Mat3 { rows }
    }

    pub fn add(self, other: Mat3) -> Mat3 {
        let mut rows = self.rows;
        for (row, orow) in rows.iter_mut().zip(other.rows.iter()) {
            for (e, oe) in row.iter_mut().zip(orow.iter()) {
                *e += oe;
            }
        }
        Mat3 { rows }
    }

    pub fn sub(self, other: Mat3) -> Mat3 {
        self.add(other.scale(-1.0))
    }
}

/// Point-dipole field kernel `3 r r^T / |r|^5 - I / |r|^3` (1/m^3).
///
/// Symmetric and trace-free. The caller guarantees `r != 0`; the zero check
/// with a proper error lives at the call sites.
pub fn dipole_kernel_matrix(r: Vec3) -> Mat3 {
    let n2 = r.norm_sq();
    let n = n2.sqrt();
    let inv3 = 1.0 / (n2 * n);
    let inv5 = inv3 / n2;
    Mat3::outer(r, r).scale(3.0 * inv5).sub(Mat3::identity().scale(inv3))
}

/// Rotation taking the +z axis onto the unit vector `n`.
///
/// Built with the Rodrigues formula around `z x n`. The two degenerate cases
/// are handled exactly: `n = +z` yields the identity and `n = -z` yields a
/// half turn about the x axis. `n` must already be unit length; callers
/// normalize (and validate) before calling.
pub fn rotation_from_z(n: Vec3) -> Mat3 {
    let axis = Vec3::Z.cross(n);
    let s = axis.norm();
    let c = Vec3::Z.dot(n);
    if s == 0.0 {
        if c > 0.0 {
            return Mat3::identity();
        }
        return Mat3::new([[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]]);
    }
    let k = axis / s;
    let kx = Mat3::new([[0.0, -k.z, k.y], [k.z, 0.0, -k.x], [-k.y, k.x, 0.0]]);
    Mat3::identity()
        .scale(c)
        .add(kx.scale(s))
        .add(Mat3::outer(k, k).scale(1.0 - c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn assert_vec_close(a: Vec3, b: Vec3, eps: f64) {
        assert!(
            (a - b).norm() <= eps,
            "vectors differ: {a:?} vs {b:?} (|d| = {})",
            (a - b).norm()
        );
    }

    #[test]
    fn cross_follows_right_hand_rule() {
        assert_eq!(Vec3::X.cross(Vec3::Y), Vec3::Z);
        assert_eq!(Vec3::Y.cross(Vec3::Z), Vec3::X);
        assert_eq!(Vec3::Z.cross(Vec3::X), Vec3::Y);
    }

    #[test]
    fn normalized_rejects_zero() {
        assert_eq!(Vec3::ZERO.normalized(), None);
        let v = Vec3::new(3.0, 0.0, 4.0).normalized().unwrap();
        assert_relative_eq!(v.norm(), 1.0, max_relative = 1e-15);
    }

    #[test]
    fn outer_product_layout() {
        let m = Mat3::outer(Vec3::new(1.0, 2.0, 3.0), Vec3::new(4.0, 5.0, 6.0));
        assert_eq!(m.rows[0], [4.0, 5.0, 6.0]);
        assert_eq!(m.rows[2][1], 15.0);
        assert_eq!(m.trace(), 4.0 + 10.0 + 18.0);
    }

    #[test]
    fn rotation_from_z_axis_aligned_cases_are_exact() {
        let id = rotation_from_z(Vec3::Z);
        assert_eq!(id, Mat3::identity());
        let flip = rotation_from_z(-Vec3::Z);
        assert_eq!(flip.mul_vec(Vec3::Z), -Vec3::Z);
        assert_eq!(flip.mul_vec(Vec3::X), Vec3::X);
        assert_eq!(flip.mul_vec(Vec3::Y), -Vec3::Y);
    }

    #[test]
    fn rotation_from_z_maps_z_to_target() {
        let n = Vec3::new(1.0, -2.0, 0.5).normalized().unwrap();
        let r = rotation_from_z(n);
        assert_vec_close(r.mul_vec(Vec3::Z), n, 1e-15);
    }

    proptest! {
        #[test]
        fn rotation_preserves_lengths_and_orientation(
            nx in -1.0f64..1.0, ny in -1.0f64..1.0, nz in -1.0f64..1.0,
            vx in -10.0f64..10.0, vy in -10.0f64..10.0, vz in -10.0f64..10.0,
        ) {
            let n = Vec3::new(nx, ny, nz);
            prop_assume!(n.norm() > 1e-3);
            let n = n.normalized().unwrap();
            let r = rotation_from_z(n);
            let v = Vec3::new(vx, vy, vz);
            let rv = r.mul_vec(v);
            prop_assert!((rv.norm() - v.norm()).abs() <= 1e-12 * (1.0 + v.norm()));
            // +z lands on n.
            prop_assert!((r.mul_vec(Vec3::Z) - n).norm() <= 1e-12);
            // Proper rotation: R^T R = I on the basis vectors.
            let rt = r.transpose();
            for b in [Vec3::X, Vec3::Y, Vec3::Z] {
                prop_assert!((rt.mul_vec(r.mul_vec(b)) - b).norm() <= 1e-12);
            }
        }

        #[test]
        fn cross_is_antisymmetric_and_orthogonal(
            ax in -5.0f64..5.0, ay in -5.0f64..5.0, az in -5.0f64..5.0,
            bx in -5.0f64..5.0, by in -5.0f64..5.0, bz in -5.0f64..5.0,
        ) {
            let a = Vec3::new(ax, ay, az);
            let b = Vec3::new(bx, by, bz);
            let c = a.cross(b);
            prop_assert_eq!(c, -(b.cross(a)));
            prop_assert!(c.dot(a).abs() <= 1e-10 * (1.0 + a.norm_sq() * b.norm_sq()));
        }
    }
}
