//! Bending deformed-space view directions back into the canonical frame.

use crate::deform::{DeformError, RotationField};
use crate::geom::{inverse_distance_weights, nlerp_rotations, quat_to_rot, GeomError, UnitDir, UnitQuat, Vec3};
use crate::points::{eval_radiance_with, NeuralPointCloud, RadianceSample};
use crate::render::RadianceScene;
use crate::spatial::{KdTree, Neighbor};

/// Interpolated rotation at `x`, or `None` with no stored point within the
/// field's support radius.
pub fn interpolate_rotation(field: &RotationField, x: Vec3, scratch: &mut Vec<Neighbor>) -> Option<UnitQuat> {
    field.index.knn_within(x, field.k_rot, field.support_radius, scratch);
    if scratch.is_empty() {
        return None;
    }
    let mut dist = [0.0; 32];
    let mut quats = [UnitQuat::IDENTITY; 32];
    let k = scratch.len().min(32);
    for (j, n) in scratch.iter().take(k).enumerate() {
        dist[j] = n.distance;
        quats[j] = field.quats[n.index];
    }
    let w = inverse_distance_weights(&dist[..k]).ok()?;
    match nlerp_rotations(&quats[..k], &w) {
        Ok(q) => Some(q),
        Err(GeomError::DegenerateBlend) => {
            let best = (0..k).fold(0, |b, j| if w[j] > w[b] { j } else { b });
            Some(quats[best])
        }
        Err(_) => None,
    }
}

pub fn bend_direction(field: &RotationField, x: Vec3, v_hat: UnitDir) -> UnitDir {
    let mut scratch = Vec::with_capacity(field.k_rot);
    bend_direction_with(field, x, v_hat, &mut scratch)
}

pub(crate) fn bend_direction_with(
    field: &RotationField,
    x: Vec3,
    v_hat: UnitDir,
    scratch: &mut Vec<Neighbor>,
) -> UnitDir {
    match interpolate_rotation(field, x, scratch) {
        Some(q) => {
            let v = quat_to_rot(q).apply(v_hat.get());
            UnitDir::new(v).unwrap_or(v_hat)
        }
        None => v_hat,
    }
}

/// Radiance of the deformed scene at `x_hat` seen along `v_hat`. Neighbors
/// and distances come from the deformed geometry (`index_deformed`), the
/// radiance attributes from the canonical cloud by index.
pub fn eval_radiance_deformed(
    canonical: &NeuralPointCloud,
    deformed: &NeuralPointCloud,
    field: &RotationField,
    index_deformed: &KdTree,
    x_hat: Vec3,
    v_hat: UnitDir,
    bending: bool,
) -> Result<RadianceSample, DeformError> {
    check_aligned(canonical, deformed, field, index_deformed)?;
    let mut scratch = Vec::with_capacity(canonical.k_agg.max(field.k_rot));
    Ok(deformed_query(canonical, field, index_deformed, x_hat, v_hat, bending, &mut scratch))
}

fn check_aligned(
    canonical: &NeuralPointCloud,
    deformed: &NeuralPointCloud,
    field: &RotationField,
    index_deformed: &KdTree,
) -> Result<(), DeformError> {
    let n = canonical.len();
    for m in [deformed.len(), field.len(), index_deformed.len()] {
        if m != n {
            return Err(DeformError::IndexMismatch(n, m));
        }
    }
    Ok(())
}

fn deformed_query(
    canonical: &NeuralPointCloud,
    field: &RotationField,
    index_deformed: &KdTree,
    x_hat: Vec3,
    v_hat: UnitDir,
    bending: bool,
    scratch: &mut Vec<Neighbor>,
) -> RadianceSample {
    if !index_deformed.any_within(x_hat, canonical.r_agg) {
        return RadianceSample::EMPTY;
    }
    let v = if bending {
        bend_direction_with(field, x_hat, v_hat, scratch)
    } else {
        v_hat
    };
    eval_radiance_with(canonical, index_deformed, x_hat, v, scratch)
}

/// A canonical cloud rendered in a deformed configuration.
pub struct DeformedScene<'a> {
    canonical: &'a NeuralPointCloud,
    field: &'a RotationField,
    index: &'a KdTree,
    pub bending: bool,
}

impl<'a> DeformedScene<'a> {
    /// `index` is built over the deformed positions, index aligned with
    /// `canonical`. The rotation field's own index usually serves.
    pub fn new(
        canonical: &'a NeuralPointCloud,
        field: &'a RotationField,
        index: &'a KdTree,
        bending: bool,
    ) -> Result<DeformedScene<'a>, DeformError> {
        if field.len() != canonical.len() {
            return Err(DeformError::IndexMismatch(canonical.len(), field.len()));
        }
        if index.len() != canonical.len() {
            return Err(DeformError::IndexMismatch(canonical.len(), index.len()));
        }
        Ok(DeformedScene { canonical, field, index, bending })
    }
}

impl RadianceScene for DeformedScene<'_> {
    fn support(&self) -> &KdTree {
        self.index
    }

    fn support_radius(&self) -> f64 {
        self.canonical.r_agg
    }

    fn radiance(&self, x: Vec3, v: UnitDir, scratch: &mut Vec<Neighbor>) -> RadianceSample {
        deformed_query(self.canonical, self.field, self.index, x, v, self.bending, scratch)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deform::estimate_rotation_field;
    use crate::geom::RotationMat;
    use crate::points::{eval_radiance, Group, NeuralPoint};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn shell(n: usize, degree: usize, seed: u64) -> NeuralPointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = crate::sh::basis_count(degree);
        let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
        NeuralPointCloud::from_points(
            degree,
            (0..n).map(|i| {
                let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
                let r = (1.0 - z * z).sqrt();
                let phi = golden * i as f64;
                NeuralPoint {
                    position: Vec3::new(r * phi.cos(), r * phi.sin(), z),
                    sh: (0..3 * b).map(|_| rng.random_range(-0.4..0.4) + 0.3).collect(),
                    density: 20.0,
                    confidence: rng.random_range(0.5..1.0),
                    group: Group::Character,
                }
            }),
        )
        .unwrap()
    }

    fn rotated(cloud: &NeuralPointCloud, q: &RotationMat, t: Vec3) -> NeuralPointCloud {
        let mut d = cloud.clone();
        d.positions = cloud.positions.iter().map(|p| q.apply(*p) + t).collect();
        d
    }

    fn dir(rng: &mut ChaCha8Rng) -> UnitDir {
        UnitDir::new(Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .unwrap()
    }

    #[test]
    fn identity_field_passes_directions() {
        let c = shell(500, 2, 1);
        let f = estimate_rotation_field(&c, &c, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for &p in c.positions.iter().step_by(37) {
            let v = dir(&mut rng);
            let b = bend_direction(&f, p * 1.01, v);
            assert!((b.get() - v.get()).norm() < 1e-12);
        }
    }

    #[test]
    fn rigid_field_bends_by_inverse() {
        let c = shell(800, 2, 3);
        let q = RotationMat::from_axis_angle(Vec3::new(0.3, -1.0, 0.4), 1.9);
        let d = rotated(&c, &q, Vec3::new(0.5, 0.0, -1.0));
        let f = estimate_rotation_field(&c, &d, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for &p in d.positions.iter().step_by(13) {
            let v = dir(&mut rng);
            let b = bend_direction(&f, p + Vec3::splat(0.01), v);
            assert!((b.get() - q.transpose().apply(v.get())).norm() < 1e-6);
            assert!((b.get().norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn exact_hit_uses_that_rotation() {
        let c = shell(200, 1, 5);
        let mut f = estimate_rotation_field(&c, &c, 8).unwrap();
        let q = UnitQuat::from_axis_angle(Vec3::Z, 0.7);
        f.quats[17] = q;
        let mut scratch = Vec::new();
        let got = interpolate_rotation(&f, c.positions[17], &mut scratch).unwrap();
        assert!(got.angle_to(q) < 1e-12);
    }

    #[test]
    fn outside_support_passes_through() {
        let c = shell(200, 2, 6);
        let q = RotationMat::from_axis_angle(Vec3::X, 1.0);
        let d = rotated(&c, &q, Vec3::ZERO);
        let f = estimate_rotation_field(&c, &d, 8).unwrap();
        let v = UnitDir::new(Vec3::new(0.0, 0.6, 0.8)).unwrap();
        assert_eq!(bend_direction(&f, Vec3::splat(10.0), v), v);
        for bending in [true, false] {
            let s = eval_radiance_deformed(&c, &d, &f, &f.index, Vec3::splat(10.0), v, bending).unwrap();
            assert_eq!(s, RadianceSample::EMPTY);
        }
    }

    #[test]
    fn rigid_consistency_of_queries() {
        let c = shell(1500, 2, 7);
        let ci = c.build_index().unwrap();
        let q = RotationMat::from_axis_angle(Vec3::new(1.0, 1.0, 0.0), 2.5);
        let t = Vec3::new(0.2, -0.3, 0.1);
        let d = rotated(&c, &q, t);
        let f = estimate_rotation_field(&c, &d, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for i in 0..300 {
            let x = c.positions[(i * 7) % c.len()] * rng.random_range(0.97..1.03);
            let v = dir(&mut rng);
            let want = eval_radiance(&c, &ci, x, v);
            let xh = q.apply(x) + t;
            let vh = UnitDir::new(q.apply(v.get())).unwrap();
            let got = eval_radiance_deformed(&c, &d, &f, &f.index, xh, vh, true).unwrap();
            assert!((got.sigma - want.sigma).abs() < 1e-6 * (1.0 + want.sigma));
            assert!((got.rgb - want.rgb).max_abs() < 1e-6, "{:?} vs {:?}", got.rgb, want.rgb);
        }
    }

    #[test]
    fn degree_zero_ignores_bending() {
        let c = shell(600, 0, 9);
        let q = RotationMat::from_axis_angle(Vec3::Y, std::f64::consts::PI);
        let d = rotated(&c, &q, Vec3::ZERO);
        let f = estimate_rotation_field(&c, &d, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for i in 0..100 {
            let x = d.positions[i * 5] * 1.01;
            let v = dir(&mut rng);
            let on = eval_radiance_deformed(&c, &d, &f, &f.index, x, v, true).unwrap();
            let off = eval_radiance_deformed(&c, &d, &f, &f.index, x, v, false).unwrap();
            assert_eq!(on, off);
        }
    }

    #[test]
    fn mismatched_inputs_rejected() {
        let c = shell(100, 1, 11);
        let small = shell(50, 1, 11);
        let f = estimate_rotation_field(&c, &c, 8).unwrap();
        let v = UnitDir::new(Vec3::Z).unwrap();
        assert!(matches!(
            eval_radiance_deformed(&c, &small, &f, &f.index, Vec3::ZERO, v, true),
            Err(DeformError::IndexMismatch(100, 50))
        ));
        let fs = estimate_rotation_field(&small, &small, 8).unwrap();
        assert!(DeformedScene::new(&c, &fs, &fs.index, true).is_err());
    }
}
