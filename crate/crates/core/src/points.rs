//! Neural point clouds: positions with per-point spherical-harmonics
//! radiance, density, confidence and group label, plus the k-nearest
//! neighbor aggregation that turns them into a continuous radiance field.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{UnitDir, Vec3, EPS_ZERO};
use crate::sh;
use crate::spatial::{IndexError, KdTree, Neighbor, DEFAULT_LEAF_SIZE};

pub const DEFAULT_SH_DEGREE: usize = 2;
pub const DEFAULT_K_AGG: usize = 8;
pub const DEFAULT_R_AGG_FACTOR: f64 = 2.5;

#[derive(Debug, Error)]
pub enum PointsError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("format error at {location}: {message}")]
    Format { location: String, message: String },
    #[error("no points carry the {0:?} label")]
    EmptyGroup(Group),
    #[error("invalid point cloud: {0}")]
    Invalid(String),
    #[error("fit diverged at iteration {0} (non-finite loss)")]
    DivergedFit(usize),
    #[error(transparent)]
    Index(#[from] IndexError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    Character,
    Background,
}

impl Group {
    pub fn as_u8(self) -> u8 {
        match self {
            Group::Character => 0,
            Group::Background => 1,
        }
    }

    pub fn from_u8(v: u8) -> Option<Group> {
        match v {
            0 => Some(Group::Character),
            1 => Some(Group::Background),
            _ => None,
        }
    }
}

/// One point, used when assembling clouds. Clouds store these fields in
/// parallel arrays.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuralPoint {
    pub position: Vec3,
    /// Channel-major RGB coefficients, length `3 * basis_count(degree)`.
    pub sh: Vec<f64>,
    pub density: f64,
    pub confidence: f64,
    pub group: Group,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadianceSample {
    pub sigma: f64,
    pub rgb: Vec3,
}

impl RadianceSample {
    pub const EMPTY: RadianceSample = RadianceSample { sigma: 0.0, rgb: Vec3::ZERO };
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeuralPointCloud {
    sh_degree: usize,
    pub positions: Vec<Vec3>,
    pub sh: Vec<f64>,
    pub density: Vec<f64>,
    pub confidence: Vec<f64>,
    pub groups: Vec<Group>,
    pub r_agg: f64,
    pub k_agg: usize,
}

/// Neighbor weights of one aggregated query. `weights` sum to one.
#[derive(Debug, Clone, Default)]
pub struct Aggregate {
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
    /// Gaussian falloff on the nearest-neighbor distance.
    pub falloff: f64,
}

impl NeuralPointCloud {
    pub fn empty(sh_degree: usize) -> NeuralPointCloud {
        NeuralPointCloud {
            sh_degree,
            positions: Vec::new(),
            sh: Vec::new(),
            density: Vec::new(),
            confidence: Vec::new(),
            groups: Vec::new(),
            r_agg: 1.0,
            k_agg: DEFAULT_K_AGG,
        }
    }

    /// Builds a cloud and derives `r_agg` from the point spacing.
    pub fn from_points(
        sh_degree: usize,
        points: impl IntoIterator<Item = NeuralPoint>,
    ) -> Result<NeuralPointCloud, PointsError> {
        let mut cloud = NeuralPointCloud::empty(sh_degree);
        for p in points {
            cloud.push(p)?;
        }
        cloud.r_agg = cloud.default_r_agg(DEFAULT_R_AGG_FACTOR);
        cloud.validate()?;
        Ok(cloud)
    }

    pub fn push(&mut self, p: NeuralPoint) -> Result<(), PointsError> {
        if p.sh.len() != self.coeffs_per_point() {
            return Err(PointsError::Invalid(format!(
                "point has {} SH coefficients, expected {}",
                p.sh.len(),
                self.coeffs_per_point()
            )));
        }
        self.positions.push(p.position);
        self.sh.extend_from_slice(&p.sh);
        self.density.push(p.density);
        self.confidence.push(p.confidence);
        self.groups.push(p.group);
        Ok(())
    }

    pub fn point(&self, i: usize) -> NeuralPoint {
        NeuralPoint {
            position: self.positions[i],
            sh: self.sh_of(i).to_vec(),
            density: self.density[i],
            confidence: self.confidence[i],
            group: self.groups[i],
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn sh_degree(&self) -> usize {
        self.sh_degree
    }

    pub fn basis_count(&self) -> usize {
        sh::basis_count(self.sh_degree)
    }

    pub fn coeffs_per_point(&self) -> usize {
        3 * self.basis_count()
    }

    #[inline]
    pub fn sh_of(&self, i: usize) -> &[f64] {
        let n = self.coeffs_per_point();
        &self.sh[i * n..(i + 1) * n]
    }

    #[inline]
    pub fn sh_of_mut(&mut self, i: usize) -> &mut [f64] {
        let n = self.coeffs_per_point();
        &mut self.sh[i * n..(i + 1) * n]
    }

    pub fn validate(&self) -> Result<(), PointsError> {
        let n = self.len();
        let bad = |m: String| Err(PointsError::Invalid(m));
        if self.sh_degree > sh::MAX_DEGREE {
            return bad(format!("SH degree {} exceeds {}", self.sh_degree, sh::MAX_DEGREE));
        }
        if self.sh.len() != n * self.coeffs_per_point()
            || self.density.len() != n
            || self.confidence.len() != n
            || self.groups.len() != n
        {
            return bad("attribute arrays have inconsistent lengths".into());
        }
        if !(self.r_agg > 0.0 && self.r_agg.is_finite()) {
            return bad(format!("aggregation radius {} must be positive", self.r_agg));
        }
        if self.k_agg == 0 {
            return bad("aggregation neighbor count must be >= 1".into());
        }
        if let Some(i) = self.positions.iter().position(|p| !p.is_finite()) {
            return bad(format!("point {i} has a non-finite position"));
        }
        if let Some(i) = self.density.iter().position(|d| !(*d >= 0.0 && d.is_finite())) {
            return bad(format!("point {i} has invalid density {}", self.density[i]));
        }
        if let Some(i) = self.confidence.iter().position(|c| !(0.0..=1.0).contains(c)) {
            return bad(format!("point {i} has confidence {} outside [0, 1]", self.confidence[i]));
        }
        if self.sh.iter().any(|c| !c.is_finite()) {
            return bad("non-finite SH coefficient".into());
        }
        Ok(())
    }

    /// `factor` times the median nearest-neighbor spacing; 1.0 for clouds
    /// with fewer than two distinct points.
    pub fn default_r_agg(&self, factor: f64) -> f64 {
        median_spacing(&self.positions).map_or(1.0, |s| factor * s)
    }

    pub fn build_index(&self) -> Result<KdTree, PointsError> {
        Ok(KdTree::build(self.positions.clone(), DEFAULT_LEAF_SIZE)?)
    }

    /// Gathers up to `k_agg` neighbors of `x` within `r_agg` from `index`
    /// and computes confidence-scaled inverse-distance weights. `None` when
    /// nothing of positive confidence is in range.
    ///
    /// `index` may be built over a different (deformed) copy of the
    /// positions, provided it is index aligned with `self`.
    pub fn aggregate(&self, index: &KdTree, x: Vec3, scratch: &mut Vec<Neighbor>) -> Option<Aggregate> {
        index.knn_within(x, self.k_agg, self.r_agg, scratch);
        let nearest = scratch.first()?;
        let falloff = (-(nearest.distance / self.r_agg).powi(2)).exp();
        let mut agg = Aggregate {
            indices: Vec::with_capacity(scratch.len()),
            weights: Vec::with_capacity(scratch.len()),
            falloff,
        };
        if let Some(hit) = scratch.iter().find(|n| n.distance <= EPS_ZERO) {
            if self.confidence[hit.index] > 0.0 {
                agg.indices.push(hit.index);
                agg.weights.push(1.0);
                return Some(agg);
            }
        }
        let mut total = 0.0;
        for n in scratch.iter() {
            let g = self.confidence[n.index];
            if g <= 0.0 || n.distance <= EPS_ZERO {
                continue;
            }
            let w = g / n.distance;
            agg.indices.push(n.index);
            agg.weights.push(w);
            total += w;
        }
        if !(total > 0.0) {
            return None;
        }
        agg.weights.iter_mut().for_each(|w| *w /= total);
        Some(agg)
    }

    /// Density and raw (unclamped) color of an aggregate seen along `basis`.
    pub fn shade(&self, agg: &Aggregate, basis: &[f64]) -> (f64, Vec3) {
        let mut sigma = 0.0;
        let mut rgb = Vec3::ZERO;
        for (&i, &w) in agg.indices.iter().zip(&agg.weights) {
            sigma += w * self.density[i];
            rgb += sh::decode(self.sh_of(i), basis) * w;
        }
        (sigma * agg.falloff, rgb)
    }
}

/// Radiance at `x` seen along `v`. `index` must be index aligned with
/// `cloud` (built over its positions or over a deformed copy of them).
pub fn eval_radiance(cloud: &NeuralPointCloud, index: &KdTree, x: Vec3, v: UnitDir) -> RadianceSample {
    let mut scratch = Vec::with_capacity(cloud.k_agg);
    eval_radiance_with(cloud, index, x, v, &mut scratch)
}

pub(crate) fn eval_radiance_with(
    cloud: &NeuralPointCloud,
    index: &KdTree,
    x: Vec3,
    v: UnitDir,
    scratch: &mut Vec<Neighbor>,
) -> RadianceSample {
    let Some(agg) = cloud.aggregate(index, x, scratch) else {
        return RadianceSample::EMPTY;
    };
    let mut basis = [0.0; 16];
    let b = cloud.basis_count();
    sh::eval_basis(cloud.sh_degree, v, &mut basis[..b]);
    let (sigma, rgb) = cloud.shade(&agg, &basis[..b]);
    RadianceSample { sigma, rgb: rgb.clamp01() }
}

/// Union of a character cloud and a background cloud. Labels are kept
/// as stored; the aggregation settings of the character cloud are used.
/// A lower-degree cloud is zero padded to the higher SH degree.
pub fn composite(character: &NeuralPointCloud, background: &NeuralPointCloud) -> NeuralPointCloud {
    let degree = character.sh_degree.max(background.sh_degree);
    if character.sh_degree == degree && background.is_empty() {
        return character.clone();
    }
    let base = if character.is_empty() { background } else { character };
    let mut out = NeuralPointCloud {
        r_agg: base.r_agg,
        k_agg: base.k_agg,
        ..NeuralPointCloud::empty(degree)
    };
    for cloud in [character, background] {
        let src_b = cloud.basis_count();
        let dst_b = sh::basis_count(degree);
        for i in 0..cloud.len() {
            let src = cloud.sh_of(i);
            for c in 0..3 {
                out.sh.extend_from_slice(&src[c * src_b..(c + 1) * src_b]);
                out.sh.extend(std::iter::repeat(0.0).take(dst_b - src_b));
            }
        }
        out.positions.extend_from_slice(&cloud.positions);
        out.density.extend_from_slice(&cloud.density);
        out.confidence.extend_from_slice(&cloud.confidence);
        out.groups.extend_from_slice(&cloud.groups);
    }
    out
}

/// Axis-aligned bounds of the points carrying `group`.
pub fn bounding_box(cloud: &NeuralPointCloud, group: Group) -> Result<(Vec3, Vec3), PointsError> {
    let mut it = cloud
        .positions
        .iter()
        .zip(&cloud.groups)
        .filter(|(_, g)| **g == group)
        .map(|(p, _)| *p);
    let first = it.next().ok_or(PointsError::EmptyGroup(group))?;
    Ok(it.fold((first, first), |(lo, hi), p| (lo.component_min(p), hi.component_max(p))))
}

/// Median distance from each point to its nearest distinct neighbor.
pub fn median_spacing(points: &[Vec3]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let tree = KdTree::build(points.to_vec(), DEFAULT_LEAF_SIZE).ok()?;
    let mut d: Vec<f64> = points
        .iter()
        .filter_map(|&p| tree.knn(p, 2).ok().map(|n| n[1].distance))
        .filter(|&d| d > 0.0)
        .collect();
    if d.is_empty() {
        return None;
    }
    d.sort_by(f64::total_cmp);
    Some(d[d.len() / 2])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn red_point(position: Vec3, degree: usize, density: f64) -> NeuralPoint {
        let b = sh::basis_count(degree);
        let mut coeffs = vec![0.0; 3 * b];
        coeffs[0] = sh::dc_from_value(1.0);
        NeuralPoint { position, sh: coeffs, density, confidence: 1.0, group: Group::Character }
    }

    fn dir(x: f64, y: f64, z: f64) -> UnitDir {
        UnitDir::new(Vec3::new(x, y, z)).unwrap()
    }

    #[test]
    fn far_query_is_empty() {
        let mut cloud = NeuralPointCloud::from_points(2, [red_point(Vec3::ZERO, 2, 3.0)]).unwrap();
        cloud.r_agg = 0.5;
        let idx = cloud.build_index().unwrap();
        let s = eval_radiance(&cloud, &idx, Vec3::new(2.0, 0.0, 0.0), dir(1.0, 0.0, 0.0));
        assert_eq!(s, RadianceSample::EMPTY);
    }

    #[test]
    fn exact_position_single_point() {
        let mut cloud = NeuralPointCloud::from_points(2, [red_point(Vec3::new(0.1, 0.2, 0.3), 2, 3.5)]).unwrap();
        cloud.r_agg = 0.5;
        let idx = cloud.build_index().unwrap();
        for v in [dir(1.0, 0.0, 0.0), dir(-0.3, 0.5, 0.9)] {
            let s = eval_radiance(&cloud, &idx, Vec3::new(0.1, 0.2, 0.3), v);
            assert_eq!(s.sigma, 3.5);
            assert!((s.rgb - Vec3::new(1.0, 0.0, 0.0)).max_abs() < 1e-15);
        }
    }

    #[test]
    fn midpoint_of_two_points() {
        // Point A: view-dependent red channel through Y_1^0 (z); point B constant green.
        let b = 9;
        let mut a = red_point(Vec3::new(-0.1, 0.0, 0.0), 2, 4.0);
        a.sh[0] = sh::dc_from_value(0.5);
        a.sh[2] = 0.4;
        let mut g = vec![0.0; 3 * b];
        g[b] = sh::dc_from_value(0.8);
        let bp = NeuralPoint { position: Vec3::new(0.1, 0.0, 0.0), sh: g, density: 4.0, confidence: 1.0, group: Group::Character };
        let mut cloud = NeuralPointCloud::from_points(2, [a, bp]).unwrap();
        cloud.r_agg = 0.5;
        let idx = cloud.build_index().unwrap();
        let v = dir(0.0, 0.6, 0.8);
        let s = eval_radiance(&cloud, &idx, Vec3::ZERO, v);
        // weights 0.5 / 0.5; falloff exp(-(0.1/0.5)^2)
        let falloff = (-0.04f64).exp();
        assert!((s.sigma - 4.0 * falloff).abs() < 1e-12);
        let y10 = 0.488_602_511_902_919_9 * 0.8;
        let red = 0.5 * (0.5 + 0.4 * y10);
        assert!((s.rgb.x - red).abs() < 1e-12);
        assert!((s.rgb.y - 0.4).abs() < 1e-12);
        assert_eq!(s.rgb.z, 0.0);
    }

    #[test]
    fn confidence_scales_weights() {
        let mut a = red_point(Vec3::new(-0.1, 0.0, 0.0), 0, 1.0);
        a.confidence = 0.25;
        let mut b = red_point(Vec3::new(0.1, 0.0, 0.0), 0, 5.0);
        b.confidence = 0.75;
        let mut cloud = NeuralPointCloud::from_points(0, [a, b]).unwrap();
        cloud.r_agg = 1.0;
        let idx = cloud.build_index().unwrap();
        let s = eval_radiance(&cloud, &idx, Vec3::ZERO, dir(0.0, 0.0, 1.0));
        let falloff = (-0.01f64).exp();
        assert!((s.sigma - (0.25 * 1.0 + 0.75 * 5.0) * falloff).abs() < 1e-12);
    }

    #[test]
    fn view_independent_cloud_ignores_direction() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<NeuralPoint> = (0..200)
            .map(|_| {
                let mut p = red_point(Vec3::new(rng.random(), rng.random(), rng.random()), 2, rng.random());
                p.sh[0] = rng.random();
                p.sh[9] = rng.random();
                p.sh[18] = rng.random();
                p
            })
            .collect();
        let cloud = NeuralPointCloud::from_points(2, pts).unwrap();
        let idx = cloud.build_index().unwrap();
        for _ in 0..100 {
            let x = Vec3::new(rng.random(), rng.random(), rng.random());
            let a = eval_radiance(&cloud, &idx, x, dir(rng.random(), rng.random(), 0.3));
            let b = eval_radiance(&cloud, &idx, x, dir(-0.2, rng.random(), -1.0));
            assert_eq!(a, b);
        }
    }

    #[test]
    fn composite_and_bbox() {
        let ch = NeuralPointCloud::from_points(2, [red_point(Vec3::ZERO, 2, 1.0), red_point(Vec3::X, 2, 1.0)]).unwrap();
        let empty = NeuralPointCloud::empty(2);
        assert_eq!(composite(&ch, &empty), ch);

        let mut bgp = red_point(Vec3::new(5.0, 5.0, 5.0), 0, 2.0);
        bgp.group = Group::Background;
        let bg = NeuralPointCloud::from_points(0, [bgp]).unwrap();
        let all = composite(&ch, &bg);
        assert_eq!(all.len(), 3);
        assert_eq!(all.sh_degree(), 2);
        assert_eq!(all.groups[2], Group::Background);
        assert_eq!(all.sh_of(2)[0], sh::dc_from_value(1.0));
        assert!(all.sh_of(2)[1..].iter().all(|&c| c == 0.0));
        assert_eq!(all.r_agg, ch.r_agg);

        assert_eq!(bounding_box(&all, Group::Character).unwrap(), (Vec3::ZERO, Vec3::X));
        let (lo, hi) = bounding_box(&all, Group::Background).unwrap();
        assert_eq!((lo, hi), (Vec3::splat(5.0), Vec3::splat(5.0)));
        assert!(matches!(bounding_box(&ch, Group::Background), Err(PointsError::EmptyGroup(_))));
    }

    #[test]
    fn bbox_unit_cube_and_random() {
        let corners: Vec<NeuralPoint> = (0..8)
            .map(|i| red_point(Vec3::new((i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64), 0, 1.0))
            .collect();
        let c = NeuralPointCloud::from_points(0, corners).unwrap();
        assert_eq!(bounding_box(&c, Group::Character).unwrap(), (Vec3::ZERO, Vec3::splat(1.0)));

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pts: Vec<NeuralPoint> = (0..500)
            .map(|_| red_point(Vec3::new(rng.random::<f64>() - 0.5, rng.random(), 3.0 * rng.random::<f64>()), 0, 1.0))
            .collect();
        let c = NeuralPointCloud::from_points(0, pts).unwrap();
        let mut lo = Vec3::splat(f64::MAX);
        let mut hi = Vec3::splat(f64::MIN);
        for p in &c.positions {
            lo = lo.component_min(*p);
            hi = hi.component_max(*p);
        }
        assert_eq!(bounding_box(&c, Group::Character).unwrap(), (lo, hi));
    }

    #[test]
    fn validation_rejects_bad_attributes() {
        let mut p = red_point(Vec3::ZERO, 0, 1.0);
        p.confidence = 1.5;
        assert!(NeuralPointCloud::from_points(0, [p]).is_err());
        let p = red_point(Vec3::ZERO, 0, -1.0);
        assert!(NeuralPointCloud::from_points(0, [p]).is_err());
        let p = red_point(Vec3::ZERO, 1, 1.0);
        assert!(NeuralPointCloud::from_points(0, [p]).is_err());
    }

    #[test]
    fn spacing_default() {
        let pts: Vec<Vec3> = (0..10).map(|i| Vec3::new(i as f64 * 0.2, 0.0, 0.0)).collect();
        assert!((median_spacing(&pts).unwrap() - 0.2).abs() < 1e-12);
        assert_eq!(median_spacing(&pts[..1]), None);
    }
}
