//! Small fixed-size linear algebra: 3-vectors, 3x3 rotations, unit
//! quaternions, Kabsch rotation estimation and weighted rotation blending.

use std::ops::{Add, AddAssign, Div, Index, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Distances at or below this count as an exact hit in inverse-distance
/// weighting (scene units).
pub const EPS_ZERO: f64 = 1e-9;

/// Relative singular-value threshold under which a cluster cross-covariance
/// counts as rank deficient.
const RANK_TOL: f64 = 1e-9;

const JACOBI_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("cluster cross-covariance has rank < 2")]
    DegenerateCluster,
    #[error("matrix is not a proper rotation (orthogonality error {0:.3e})")]
    NotARotation(f64),
    #[error("empty input")]
    EmptyInput,
    #[error("weighted quaternion sum has vanishing norm")]
    DegenerateBlend,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl From<[f64; 3]> for Vec3 {
    fn from(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }
}

impl From<Vec3> for [f64; 3] {
    fn from(v: Vec3) -> Self {
        [v.x, v.y, v.z]
    }
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };
    pub const X: Vec3 = Vec3 { x: 1.0, y: 0.0, z: 0.0 };
    pub const Y: Vec3 = Vec3 { x: 0.0, y: 1.0, z: 0.0 };
    pub const Z: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 1.0 };

    #[inline]
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    #[inline]
    pub const fn splat(v: f64) -> Self {
        Vec3 { x: v, y: v, z: v }
    }

    #[inline]
    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    #[inline]
    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    #[inline]
    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.norm_squared().sqrt()
    }

    #[inline]
    pub fn distance_squared(self, o: Vec3) -> f64 {
        (self - o).norm_squared()
    }

    #[inline]
    pub fn distance(self, o: Vec3) -> f64 {
        self.distance_squared(o).sqrt()
    }

    pub fn normalized(self) -> Option<Vec3> {
        let n = self.norm();
        (n > 0.0 && n.is_finite()).then(|| self / n)
    }

    #[inline]
    pub fn component_min(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x.min(o.x), self.y.min(o.y), self.z.min(o.z))
    }

    #[inline]
    pub fn component_max(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x.max(o.x), self.y.max(o.y), self.z.max(o.z))
    }

    #[inline]
    pub fn mul_elem(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x * o.x, self.y * o.y, self.z * o.z)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn max_abs(self) -> f64 {
        self.x.abs().max(self.y.abs()).max(self.z.abs())
    }

    pub fn clamp01(self) -> Vec3 {
        Vec3::new(
            self.x.clamp(0.0, 1.0),
            self.y.clamp(0.0, 1.0),
            self.z.clamp(0.0, 1.0),
        )
    }
}

impl Index<usize> for Vec3 {
    type Output = f64;
    #[inline]
    fn index(&self, i: usize) -> &f64 {
        match i {
            0 => &self.x,
            1 => &self.y,
            2 => &self.z,
            _ => panic!("Vec3 index {i} out of range"),
        }
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    #[inline]
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    #[inline]
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    #[inline]
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl SubAssign for Vec3 {
    #[inline]
    fn sub_assign(&mut self, o: Vec3) {
        *self = *self - o;
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    #[inline]
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Mul<Vec3> for f64 {
    type Output = Vec3;
    #[inline]
    fn mul(self, v: Vec3) -> Vec3 {
        v * self
    }
}

impl Div<f64> for Vec3 {
    type Output = Vec3;
    #[inline]
    fn div(self, s: f64) -> Vec3 {
        Vec3::new(self.x / s, self.y / s, self.z / s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    #[inline]
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// A direction of unit length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitDir(Vec3);

impl UnitDir {
    /// Normalizes `v`; `None` for zero or non-finite input.
    pub fn new(v: Vec3) -> Option<UnitDir> {
        v.normalized().map(UnitDir)
    }

    /// Wraps a vector that is already unit length. Checked in debug builds.
    #[inline]
    pub fn new_unchecked(v: Vec3) -> UnitDir {
        debug_assert!((v.norm() - 1.0).abs() < 1e-9, "not unit: {v:?}");
        UnitDir(v)
    }

    #[inline]
    pub fn get(self) -> Vec3 {
        self.0
    }
}

/// Dense 3x3 matrix, row major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat3(pub [[f64; 3]; 3]);

impl Mat3 {
    pub const IDENTITY: Mat3 = Mat3([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
    pub const ZERO: Mat3 = Mat3([[0.0; 3]; 3]);

    pub fn from_rows(r0: Vec3, r1: Vec3, r2: Vec3) -> Mat3 {
        Mat3([r0.to_array(), r1.to_array(), r2.to_array()])
    }

    pub fn from_cols(c0: Vec3, c1: Vec3, c2: Vec3) -> Mat3 {
        Mat3::from_rows(c0, c1, c2).transpose()
    }

    /// Outer product `a bᵀ`.
    pub fn outer(a: Vec3, b: Vec3) -> Mat3 {
        let (a, b) = (a.to_array(), b.to_array());
        let mut m = [[0.0; 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = a[i] * b[j];
            }
        }
        Mat3(m)
    }

    pub fn col(&self, j: usize) -> Vec3 {
        Vec3::new(self.0[0][j], self.0[1][j], self.0[2][j])
    }

    pub fn row(&self, i: usize) -> Vec3 {
        Vec3::from(self.0[i])
    }

    pub fn transpose(&self) -> Mat3 {
        let m = &self.0;
        Mat3([
            [m[0][0], m[1][0], m[2][0]],
            [m[0][1], m[1][1], m[2][1]],
            [m[0][2], m[1][2], m[2][2]],
        ])
    }

    pub fn det(&self) -> f64 {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    #[inline]
    pub fn mul_vec(&self, v: Vec3) -> Vec3 {
        let m = &self.0;
        Vec3::new(
            m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z,
        )
    }

    pub fn mul_mat(&self, o: &Mat3) -> Mat3 {
        let mut r = [[0.0; 3]; 3];
        for (i, row) in r.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (0..3).map(|k| self.0[i][k] * o.0[k][j]).sum();
            }
        }
        Mat3(r)
    }

    pub fn add(&self, o: &Mat3) -> Mat3 {
        let mut r = self.0;
        for (i, row) in r.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v += o.0[i][j];
            }
        }
        Mat3(r)
    }

    pub fn frobenius_distance(&self, o: &Mat3) -> f64 {
        let mut s = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let d = self.0[i][j] - o.0[i][j];
                s += d * d;
            }
        }
        s.sqrt()
    }

    /// Largest absolute entry of `M Mᵀ - I`.
    pub fn orthogonality_error(&self) -> f64 {
        let p = self.mul_mat(&self.transpose());
        let mut e: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let target = if i == j { 1.0 } else { 0.0 };
                e = e.max((p.0[i][j] - target).abs());
            }
        }
        e
    }
}

/// A proper rotation matrix (orthogonal, determinant +1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMat(Mat3);

impl RotationMat {
    pub const IDENTITY: RotationMat = RotationMat(Mat3::IDENTITY);

    /// Validates orthogonality and orientation within `tol`.
    pub fn try_new(m: Mat3, tol: f64) -> Result<RotationMat, GeomError> {
        let err = m.orthogonality_error().max((m.det() - 1.0).abs());
        if err.is_finite() && err <= tol {
            Ok(RotationMat(m))
        } else {
            Err(GeomError::NotARotation(err))
        }
    }

    /// Right-handed rotation by `angle` radians about `axis`.
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> RotationMat {
        quat_to_rot(UnitQuat::from_axis_angle(axis, angle))
    }

    #[inline]
    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    #[inline]
    pub fn apply(&self, v: Vec3) -> Vec3 {
        self.0.mul_vec(v)
    }

    pub fn transpose(&self) -> RotationMat {
        RotationMat(self.0.transpose())
    }

    pub fn compose(&self, o: &RotationMat) -> RotationMat {
        RotationMat(self.0.mul_mat(&o.0))
    }

    /// Geodesic angle between two rotations, radians.
    pub fn angle_to(&self, o: &RotationMat) -> f64 {
        let rel = self.0.transpose().mul_mat(&o.0);
        // trace-based acos is poorly conditioned near 0; use the
        // skew part as well.
        let m = &rel.0;
        let s = Vec3::new(m[2][1] - m[1][2], m[0][2] - m[2][0], m[1][0] - m[0][1]).norm() * 0.5;
        let c = (m[0][0] + m[1][1] + m[2][2] - 1.0) * 0.5;
        s.atan2(c)
    }
}

/// Unit quaternion `w + xi + yj + zk`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct UnitQuat {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl From<[f64; 4]> for UnitQuat {
    fn from(a: [f64; 4]) -> Self {
        UnitQuat { w: a[0], x: a[1], y: a[2], z: a[3] }
    }
}

impl From<UnitQuat> for [f64; 4] {
    fn from(q: UnitQuat) -> Self {
        [q.w, q.x, q.y, q.z]
    }
}

impl UnitQuat {
    pub const IDENTITY: UnitQuat = UnitQuat { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    /// Normalizes and moves into the `w >= 0` hemisphere.
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Option<UnitQuat> {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        if !(n > 0.0 && n.is_finite()) {
            return None;
        }
        Some(UnitQuat { w: w / n, x: x / n, y: y / n, z: z / n }.canonical())
    }

    pub fn from_axis_angle(axis: Vec3, angle: f64) -> UnitQuat {
        let a = axis.normalized().unwrap_or(Vec3::Z);
        let (s, c) = (angle * 0.5).sin_cos();
        UnitQuat { w: c, x: a.x * s, y: a.y * s, z: a.z * s }.canonical()
    }

    /// Representative in the `w >= 0` hemisphere; for `w == 0` the first
    /// nonzero vector component is made positive.
    pub fn canonical(self) -> UnitQuat {
        let flip = if self.w != 0.0 {
            self.w < 0.0
        } else if self.x != 0.0 {
            self.x < 0.0
        } else if self.y != 0.0 {
            self.y < 0.0
        } else {
            self.z < 0.0
        };
        if flip {
            -self
        } else {
            self
        }
    }

    #[inline]
    pub fn dot(self, o: UnitQuat) -> f64 {
        self.w * o.w + self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Rotation angle between the rotations represented by `self` and `o`.
    pub fn angle_to(self, o: UnitQuat) -> f64 {
        let d = self.dot(o).abs().min(1.0);
        // 2 acos(d) loses precision near d = 1; half-chord form is stable.
        let diff = if self.dot(o) >= 0.0 { self - o } else { self + o };
        let chord = diff.norm();
        let a = 4.0 * (chord * 0.5).asin();
        if a.is_finite() {
            a
        } else {
            2.0 * d.acos()
        }
    }

    // raw component arithmetic used by blending; results are not unit.
    fn scale(self, s: f64) -> UnitQuat {
        UnitQuat { w: self.w * s, x: self.x * s, y: self.y * s, z: self.z * s }
    }
}

impl Neg for UnitQuat {
    type Output = UnitQuat;
    fn neg(self) -> UnitQuat {
        self.scale(-1.0)
    }
}

impl Add for UnitQuat {
    type Output = UnitQuat;
    fn add(self, o: UnitQuat) -> UnitQuat {
        UnitQuat { w: self.w + o.w, x: self.x + o.x, y: self.y + o.y, z: self.z + o.z }
    }
}

impl Sub for UnitQuat {
    type Output = UnitQuat;
    fn sub(self, o: UnitQuat) -> UnitQuat {
        self + (-o)
    }
}

/// Singular value decomposition `A = U diag(s) Vᵀ` of a 3x3 matrix by
/// one-sided Jacobi rotations. Singular values are sorted descending;
/// `U` is completed to a right-handed orthonormal basis when `A` is rank 2.
///
/// Returns `None` when `A` has rank < 2.
pub(crate) fn svd3(a: &Mat3) -> Option<(Mat3, [f64; 3], Mat3)> {
    // Columns of `w` are orthogonalized in place; `v` accumulates the rotations.
    let mut w = a.0;
    let mut v = Mat3::IDENTITY.0;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for (p, q) in [(0usize, 1usize), (0, 2), (1, 2)] {
            let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
            for row in &w {
                alpha += row[p] * row[p];
                beta += row[q] * row[q];
                gamma += row[p] * row[q];
            }
            if gamma == 0.0 || gamma.abs() <= JACOBI_TOL * (alpha * beta).sqrt() {
                continue;
            }
            rotated = true;
            let zeta = (beta - alpha) / (2.0 * gamma);
            let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
            let c = 1.0 / (1.0 + t * t).sqrt();
            let s = c * t;
            for m in [&mut w, &mut v] {
                for row in m.iter_mut() {
                    let (xp, xq) = (row[p], row[q]);
                    row[p] = c * xp - s * xq;
                    row[q] = s * xp + c * xq;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let w = Mat3(w);
    let v = Mat3(v);
    let mut order = [0usize, 1, 2];
    let norms = [w.col(0).norm(), w.col(1).norm(), w.col(2).norm()];
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
    let s = [norms[order[0]], norms[order[1]], norms[order[2]]];
    if !(s[0] > 0.0 && s[0].is_finite()) || s[1] <= RANK_TOL * s[0] {
        return None;
    }

    let u0 = w.col(order[0]) / s[0];
    let w1 = w.col(order[1]);
    let u1 = (w1 - u0 * u0.dot(w1)).normalized()?;
    let mut u2 = u0.cross(u1);
    if s[2] > RANK_TOL * s[0] && u2.dot(w.col(order[2])) < 0.0 {
        u2 = -u2;
    }
    let u = Mat3::from_cols(u0, u1, u2);
    let v_sorted = Mat3::from_cols(v.col(order[0]), v.col(order[1]), v.col(order[2]));
    Some((u, s, v_sorted))
}

/// Least-squares rotation `R` with `R (d_j - c_d) ≈ (c_j - c_c)` for
/// corresponding canonical/deformed neighbors, i.e. `R` maps deformed-space
/// offsets to canonical-space offsets.
///
/// Both neighbor sets are centered on the supplied center points (not on
/// their centroids). Reflections are corrected so `det(R) = +1`.
pub fn kabsch_rotation(
    canonical_center: Vec3,
    canonical: &[Vec3],
    deformed_center: Vec3,
    deformed: &[Vec3],
) -> Result<RotationMat, GeomError> {
    if canonical.len() != deformed.len() {
        return Err(GeomError::LengthMismatch(canonical.len(), deformed.len()));
    }
    if canonical.is_empty() {
        return Err(GeomError::EmptyInput);
    }
    let mut h = Mat3::ZERO;
    for (&c, &d) in canonical.iter().zip(deformed) {
        h = h.add(&Mat3::outer(c - canonical_center, d - deformed_center));
    }
    let (mut u, _s, v) = svd3(&h).ok_or(GeomError::DegenerateCluster)?;
    let vt = v.transpose();
    let mut r = u.mul_mat(&vt);
    if r.det() < 0.0 {
        for row in u.0.iter_mut() {
            row[2] = -row[2];
        }
        r = u.mul_mat(&vt);
    }
    Ok(RotationMat(r))
}

/// Rotation matrix to quaternion (Shepperd's method), canonicalized to
/// `w >= 0`. Fails with [`GeomError::NotARotation`] when the input deviates
/// from orthogonality by more than 1e-6.
pub fn rot_to_quat(r: &RotationMat) -> Result<UnitQuat, GeomError> {
    let m = &r.0 .0;
    let err = r.0.orthogonality_error().max((r.0.det() - 1.0).abs());
    if !(err <= 1e-6) {
        return Err(GeomError::NotARotation(err));
    }
    let trace = m[0][0] + m[1][1] + m[2][2];
    let (w, x, y, z);
    if trace >= m[0][0] && trace >= m[1][1] && trace >= m[2][2] {
        let s = (1.0 + trace).sqrt() * 2.0;
        w = 0.25 * s;
        x = (m[2][1] - m[1][2]) / s;
        y = (m[0][2] - m[2][0]) / s;
        z = (m[1][0] - m[0][1]) / s;
    } else if m[0][0] >= m[1][1] && m[0][0] >= m[2][2] {
        let s = (1.0 + m[0][0] - m[1][1] - m[2][2]).sqrt() * 2.0;
        w = (m[2][1] - m[1][2]) / s;
        x = 0.25 * s;
        y = (m[0][1] + m[1][0]) / s;
        z = (m[0][2] + m[2][0]) / s;
    } else if m[1][1] >= m[2][2] {
        let s = (1.0 + m[1][1] - m[0][0] - m[2][2]).sqrt() * 2.0;
        w = (m[0][2] - m[2][0]) / s;
        x = (m[0][1] + m[1][0]) / s;
        y = 0.25 * s;
        z = (m[1][2] + m[2][1]) / s;
    } else {
        let s = (1.0 + m[2][2] - m[0][0] - m[1][1]).sqrt() * 2.0;
        w = (m[1][0] - m[0][1]) / s;
        x = (m[0][2] + m[2][0]) / s;
        y = (m[1][2] + m[2][1]) / s;
        z = 0.25 * s;
    }
    UnitQuat::new(w, x, y, z).ok_or(GeomError::NotARotation(err))
}

pub fn quat_to_rot(q: UnitQuat) -> RotationMat {
    let UnitQuat { w, x, y, z } = q;
    let (xx, yy, zz) = (x * x, y * y, z * z);
    let (xy, xz, yz) = (x * y, x * z, y * z);
    let (wx, wy, wz) = (w * x, w * y, w * z);
    RotationMat(Mat3([
        [1.0 - 2.0 * (yy + zz), 2.0 * (xy - wz), 2.0 * (xz + wy)],
        [2.0 * (xy + wz), 1.0 - 2.0 * (xx + zz), 2.0 * (yz - wx)],
        [2.0 * (xz - wy), 2.0 * (yz + wx), 1.0 - 2.0 * (xx + yy)],
    ]))
}

/// Normalized inverse-distance weights. A distance at or below
/// [`EPS_ZERO`] takes the whole weight (first such entry wins).
pub fn inverse_distance_weights(distances: &[f64]) -> Result<Vec<f64>, GeomError> {
    if distances.is_empty() {
        return Err(GeomError::EmptyInput);
    }
    if let Some(hit) = distances.iter().position(|&d| d <= EPS_ZERO) {
        let mut w = vec![0.0; distances.len()];
        w[hit] = 1.0;
        return Ok(w);
    }
    let inv: Vec<f64> = distances.iter().map(|d| 1.0 / d).collect();
    let total: f64 = inv.iter().sum();
    Ok(inv.into_iter().map(|v| v / total).collect())
}

/// Normalized weighted quaternion sum after aligning every input to the
/// hemisphere of the largest-weight quaternion.
pub fn nlerp_rotations(quats: &[UnitQuat], weights: &[f64]) -> Result<UnitQuat, GeomError> {
    if quats.len() != weights.len() {
        return Err(GeomError::LengthMismatch(quats.len(), weights.len()));
    }
    let pivot = weights
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
        .map(|(i, _)| i)
        .ok_or(GeomError::EmptyInput)?;
    let reference = quats[pivot];
    let mut acc = UnitQuat { w: 0.0, x: 0.0, y: 0.0, z: 0.0 };
    for (&q, &w) in quats.iter().zip(weights) {
        let aligned = if q.dot(reference) < 0.0 { -q } else { q };
        acc = acc + aligned.scale(w);
    }
    if acc.norm() < 1e-9 {
        return Err(GeomError::DegenerateBlend);
    }
    UnitQuat::new(acc.w, acc.x, acc.y, acc.z).ok_or(GeomError::DegenerateBlend)
}
