//! Real spherical-harmonics basis up to degree 3 for view-dependent color.
//!
//! Band ordering: `Y_0^0; Y_1^{-1}, Y_1^0, Y_1^1; Y_2^{-2} .. Y_2^2; Y_3^{-3} .. Y_3^3`.

use crate::geom::{UnitDir, Vec3};

pub const MAX_DEGREE: usize = 3;

pub const C0: f64 = 0.282_094_791_773_878_14;
const C1: f64 = 0.488_602_511_902_919_9;
const C2: [f64; 5] = [
    1.092_548_430_592_079_2,
    -1.092_548_430_592_079_2,
    0.315_391_565_252_520_05,
    -1.092_548_430_592_079_2,
    0.546_274_215_296_039_6,
];
const C3: [f64; 7] = [
    -0.590_043_589_926_643_5,
    2.890_611_442_640_554,
    -0.457_045_799_464_465_8,
    0.373_176_332_590_115_4,
    -0.457_045_799_464_465_8,
    1.445_305_721_320_277,
    -0.590_043_589_926_643_5,
];

/// Number of basis functions for degree `l`.
pub const fn basis_count(degree: usize) -> usize {
    (degree + 1) * (degree + 1)
}

/// Evaluates the first `basis_count(degree)` basis functions at `dir`
/// into `out`.
pub fn eval_basis(degree: usize, dir: UnitDir, out: &mut [f64]) {
    let Vec3 { x, y, z } = dir.get();
    let n = basis_count(degree);
    debug_assert!(degree <= MAX_DEGREE && out.len() >= n);
    out[0] = C0;
    if degree == 0 {
        return;
    }
    out[1] = -C1 * y;
    out[2] = C1 * z;
    out[3] = -C1 * x;
    if degree == 1 {
        return;
    }
    let (xx, yy, zz) = (x * x, y * y, z * z);
    let (xy, yz, xz) = (x * y, y * z, x * z);
    out[4] = C2[0] * xy;
    out[5] = C2[1] * yz;
    out[6] = C2[2] * (2.0 * zz - xx - yy);
    out[7] = C2[3] * xz;
    out[8] = C2[4] * (xx - yy);
    if degree == 2 {
        return;
    }
    out[9] = C3[0] * y * (3.0 * xx - yy);
    out[10] = C3[1] * xy * z;
    out[11] = C3[2] * y * (4.0 * zz - xx - yy);
    out[12] = C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
    out[13] = C3[4] * x * (4.0 * zz - xx - yy);
    out[14] = C3[5] * z * (xx - yy);
    out[15] = C3[6] * x * (xx - 3.0 * yy);
}

/// Decodes RGB from channel-major coefficients (`coeffs[c * B + b]`) with a
/// precomputed basis. No clamping.
#[inline]
pub fn decode(coeffs: &[f64], basis: &[f64]) -> Vec3 {
    let b = basis.len();
    let ch = |c: usize| -> f64 {
        coeffs[c * b..(c + 1) * b].iter().zip(basis).map(|(k, y)| k * y).sum()
    };
    Vec3::new(ch(0), ch(1), ch(2))
}

/// Constant-band coefficient that decodes to `value` in every direction.
pub fn dc_from_value(value: f64) -> f64 {
    value / C0
}

/// Degree-1 coefficients (one channel) that decode to `a . v`.
pub fn band1_from_linear(a: Vec3) -> [f64; 3] {
    [-a.y / C1, a.z / C1, -a.x / C1]
}

/// Degree-2 coefficient (one channel, basis index 6) that decodes to
/// `3 v_z^2 - 1`.
pub fn band2_zonal() -> f64 {
    1.0 / C2[2]
}
