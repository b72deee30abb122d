//! Small fixed-size linear algebra shared by all modules.

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};

pub type Vec2 = Vector2<f64>;
pub type Vec3 = Vector3<f64>;
pub type Mat2 = Matrix2<f64>;
pub type Mat3 = Matrix3<f64>;

/// Matrix with the given columns.
pub fn from_columns(c0: &Vec3, c1: &Vec3, c2: &Vec3) -> Mat3 {
    Mat3::from_columns(&[*c0, *c1, *c2])
}

/// ‖AᵀA − I‖ (Frobenius).
pub fn orthogonality_defect(a: &Mat3) -> f64 {
    (a.transpose() * a - Mat3::identity()).norm()
}

pub fn is_finite3(v: &Vec3) -> bool {
    v.iter().all(|c| c.is_finite())
}

pub fn arr3(v: &Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

/// Rotation by `angle` about the unit `axis` (Rodrigues).
pub fn axis_angle(axis: &Vec3, angle: f64) -> Mat3 {
    let k = axis.normalize();
    let kx = Mat3::new(0.0, -k.z, k.y, k.z, 0.0, -k.x, -k.y, k.x, 0.0);
    Mat3::identity() + kx * angle.sin() + kx * kx * (1.0 - angle.cos())
}
