//! Plain `f64` rotation conversions (no graph).

use nalgebra::{Matrix3, Rotation3};

use crate::autodiff::{axis_angle_matrix, rot6d_forward, ROT6D_MIN_NORM};
use crate::error::{Error, Result};

pub type Mat3 = [[f64; 3]; 3];

pub const IDENTITY: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

/// The 6D encoding of the identity rotation.
pub const IDENTITY_6D: [f64; 6] = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0];

/// Rodrigues' formula; exact identity at zero.
pub fn axis_angle_to_matrix(aa: [f64; 3]) -> Mat3 {
    axis_angle_matrix(aa)
}

/// Gram-Schmidt of the two stacked 3-vectors; the result's columns are
/// `b1, b2, b1 x b2`.
pub fn rot6d_to_matrix(r6: &[f64; 6]) -> Result<Mat3> {
    let (b1, b2, b3, _, _) = rot6d_forward(r6).ok_or_else(|| {
        Error::Degenerate(format!("6D rotation {:?} has a column with norm < {:e}", r6, ROT6D_MIN_NORM))
    })?;
    let mut m = [[0.0; 3]; 3];
    for r in 0..3 {
        m[r] = [b1[r], b2[r], b3[r]];
    }
    Ok(m)
}

/// First two columns, stacked.
pub fn matrix_to_rot6d(m: &Mat3) -> [f64; 6] {
    [m[0][0], m[1][0], m[2][0], m[0][1], m[1][1], m[2][1]]
}

pub fn matrix_to_axis_angle(m: &Mat3) -> [f64; 3] {
    let r = Rotation3::from_matrix(&to_na(m));
    let v = r.scaled_axis();
    [v.x, v.y, v.z]
}

pub fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut o = [[0.0; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            o[r][c] = (0..3).map(|k| a[r][k] * b[k][c]).sum();
        }
    }
    o
}

pub fn mat_vec(a: &Mat3, v: [f64; 3]) -> [f64; 3] {
    [
        a[0][0] * v[0] + a[0][1] * v[1] + a[0][2] * v[2],
        a[1][0] * v[0] + a[1][1] * v[1] + a[1][2] * v[2],
        a[2][0] * v[0] + a[2][1] * v[1] + a[2][2] * v[2],
    ]
}

pub fn transpose(a: &Mat3) -> Mat3 {
    let mut o = [[0.0; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            o[r][c] = a[c][r];
        }
    }
    o
}

/// Largest deviation of `RᵀR` from identity.
pub fn orthonormality_error(m: &Mat3) -> f64 {
    let p = mat_mul(&transpose(m), m);
    let mut e: f64 = 0.0;
    for r in 0..3 {
        for c in 0..3 {
            e = e.max((p[r][c] - IDENTITY[r][c]).abs());
        }
    }
    e
}

pub fn determinant(m: &Mat3) -> f64 {
    to_na(m).determinant()
}

fn to_na(m: &Mat3) -> Matrix3<f64> {
    Matrix3::new(
        m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2],
    )
}

/// Flattens row-major.
pub fn flatten(m: &Mat3) -> [f64; 9] {
    let mut o = [0.0; 9];
    for r in 0..3 {
        o[r * 3..r * 3 + 3].copy_from_slice(&m[r]);
    }
    o
}

pub fn unflatten(d: &[f64]) -> Mat3 {
    [[d[0], d[1], d[2]], [d[3], d[4], d[5]], [d[6], d[7], d[8]]]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    fn random_aa(rng: &mut ChaCha8Rng) -> [f64; 3] {
        [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)]
    }

    #[test]
    fn axis_angle_examples() {
        assert_eq!(axis_angle_to_matrix([0.0; 3]), IDENTITY);
        let m = axis_angle_to_matrix([0.0, 0.0, FRAC_PI_2]);
        let v = mat_vec(&m, [1.0, 0.0, 0.0]);
        assert!((v[0]).abs() < 1e-12 && (v[1] - 1.0).abs() < 1e-12 && v[2].abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            let m = axis_angle_to_matrix(random_aa(&mut rng));
            assert!(orthonormality_error(&m) < 1e-6);
            assert!((determinant(&m) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn rot6d_examples() {
        assert_eq!(rot6d_to_matrix(&IDENTITY_6D).unwrap(), IDENTITY);
        assert_eq!(rot6d_to_matrix(&[2.0, 0.0, 0.0, 0.0, 3.0, 0.0]).unwrap(), IDENTITY);
        assert!(rot6d_to_matrix(&[0.0, 0.0, 1e-9, 0.0, 1.0, 0.0]).is_err());
    }

    #[test]
    fn rot6d_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let m = axis_angle_to_matrix(random_aa(&mut rng));
            let back = rot6d_to_matrix(&matrix_to_rot6d(&m)).unwrap();
            for r in 0..3 {
                for c in 0..3 {
                    assert!((back[r][c] - m[r][c]).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn axis_angle_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let aa = random_aa(&mut rng);
            if aa.iter().map(|x| x * x).sum::<f64>().sqrt() > 3.0 {
                continue;
            }
            let back = matrix_to_axis_angle(&axis_angle_to_matrix(aa));
            for k in 0..3 {
                assert!((back[k] - aa[k]).abs() < 1e-9, "{aa:?} {back:?}");
            }
        }
    }
}
