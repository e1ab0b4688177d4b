//! Pinhole cameras, ray generation, occupancy-aware stratified sampling and
//! emission-absorption compositing over point radiance fields.
//!
//! Camera frame convention: +x right, +y down, +z forward (looking
//! direction). Pixel `(u, v)` covers `[u, u+1) x [v, v+1)` and its ray goes
//! through the pixel center.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{GeomError, Mat3, RotationMat, UnitDir, Vec3};
use crate::image::{Image, Mask};
use crate::points::{eval_radiance_with, NeuralPointCloud, RadianceSample};
use crate::spatial::{KdTree, Neighbor};

pub const DEFAULT_SAMPLES: usize = 128;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RenderError {
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("samples are not sorted by t (index {0})")]
    UnsortedSamples(usize),
    #[error("bounding box lies entirely behind the near plane")]
    BoxBehindCamera,
    #[error(transparent)]
    Geom(#[from] GeomError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CameraJson", into = "CameraJson")]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    /// Camera-to-world rotation; columns are the camera axes in world space.
    pub rotation: RotationMat,
    /// Camera center in world space.
    pub position: Vec3,
    pub near: f64,
    pub far: f64,
}

/// On-disk camera: `c2w` is a row-major 4x4 camera-to-world matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraJson {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    w: usize,
    h: usize,
    c2w: Vec<f64>,
    near: f64,
    far: f64,
}

impl TryFrom<CameraJson> for Camera {
    type Error = RenderError;
    fn try_from(j: CameraJson) -> Result<Camera, RenderError> {
        if j.c2w.len() != 16 {
            return Err(RenderError::InvalidCamera(format!("c2w has {} entries, expected 16", j.c2w.len())));
        }
        let m = &j.c2w;
        if m[12] != 0.0 || m[13] != 0.0 || m[14] != 0.0 || m[15] != 1.0 {
            return Err(RenderError::InvalidCamera("c2w bottom row must be 0 0 0 1".into()));
        }
        let rot = Mat3([[m[0], m[1], m[2]], [m[4], m[5], m[6]], [m[8], m[9], m[10]]]);
        let rotation = RotationMat::try_new(rot, 1e-6)
            .map_err(|e| RenderError::InvalidCamera(format!("c2w rotation: {e}")))?;
        let cam = Camera {
            fx: j.fx,
            fy: j.fy,
            cx: j.cx,
            cy: j.cy,
            width: j.w,
            height: j.h,
            rotation,
            position: Vec3::new(m[3], m[7], m[11]),
            near: j.near,
            far: j.far,
        };
        cam.validate()?;
        Ok(cam)
    }
}

impl From<Camera> for CameraJson {
    fn from(c: Camera) -> CameraJson {
        let r = c.rotation.matrix().0;
        let p = c.position;
        CameraJson {
            fx: c.fx,
            fy: c.fy,
            cx: c.cx,
            cy: c.cy,
            w: c.width,
            h: c.height,
            c2w: vec![
                r[0][0], r[0][1], r[0][2], p.x, r[1][0], r[1][1], r[1][2], p.y, r[2][0], r[2][1], r[2][2], p.z,
                0.0, 0.0, 0.0, 1.0,
            ],
            near: c.near,
            far: c.far,
        }
    }
}

impl Camera {
    pub fn validate(&self) -> Result<(), RenderError> {
        let bad = |m: &str| Err(RenderError::InvalidCamera(m.to_string()));
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return bad("focal lengths must be positive");
        }
        if self.width == 0 || self.height == 0 {
            return bad("image size must be nonzero");
        }
        if !(self.near >= 0.0 && self.near < self.far && self.far.is_finite()) {
            return bad("need 0 <= near < far");
        }
        if !self.position.is_finite() {
            return bad("non-finite position");
        }
        Ok(())
    }

    /// Camera at `eye` looking at `target`, world up `+z` (falls back to `+y`
    /// when looking along z). Square image, horizontal field of view `fov_x`.
    pub fn look_at(eye: Vec3, target: Vec3, size: (usize, usize), fov_x: f64, near: f64, far: f64) -> Camera {
        let forward = (target - eye).normalized().unwrap_or(Vec3::Z);
        let up = if forward.cross(Vec3::Z).norm() < 1e-6 { Vec3::Y } else { Vec3::Z };
        let right = forward.cross(up).normalized().expect("non-parallel");
        let down = forward.cross(right);
        let (w, h) = size;
        let f = 0.5 * w as f64 / (0.5 * fov_x).tan();
        Camera {
            fx: f,
            fy: f,
            cx: 0.5 * w as f64,
            cy: 0.5 * h as f64,
            width: w,
            height: h,
            rotation: RotationMat::try_new(Mat3::from_cols(right, down, forward), 1e-9).expect("orthonormal frame"),
            position: eye,
            near,
            far,
        }
    }

    pub fn forward(&self) -> Vec3 {
        self.rotation.matrix().col(2)
    }

    /// World point to camera coordinates.
    pub fn to_camera(&self, p: Vec3) -> Vec3 {
        self.rotation.transpose().apply(p - self.position)
    }

    /// Continuous pixel coordinates of a camera-space point with `z > 0`.
    pub fn project_camera(&self, pc: Vec3) -> (f64, f64) {
        (self.fx * pc.x / pc.z + self.cx, self.fy * pc.y / pc.z + self.cy)
    }

    pub fn project(&self, p: Vec3) -> Option<(f64, f64)> {
        let pc = self.to_camera(p);
        (pc.z > 0.0).then(|| self.project_camera(pc))
    }

    /// Ray through the center of pixel `(u, v)`.
    pub fn pixel_ray(&self, u: usize, v: usize) -> Ray {
        let d = Vec3::new(
            (u as f64 + 0.5 - self.cx) / self.fx,
            (v as f64 + 0.5 - self.cy) / self.fy,
            1.0,
        );
        let dir = UnitDir::new(self.rotation.apply(d)).expect("finite direction");
        Ray { origin: self.position, dir, t_near: self.near, t_far: self.far }
    }

    /// The same physical camera after applying the rigid motion
    /// `x -> rotation * x + translation` to the world.
    pub fn transformed(&self, rotation: &RotationMat, translation: Vec3) -> Camera {
        Camera {
            rotation: rotation.compose(&self.rotation),
            position: rotation.apply(self.position) + translation,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub dir: UnitDir,
    pub t_near: f64,
    pub t_far: f64,
}

impl Ray {
    #[inline]
    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.dir.get() * t
    }

    /// Parameter interval inside the box `[lo, hi]`, clipped to the ray bounds.
    pub fn clip_to_box(&self, lo: Vec3, hi: Vec3) -> Option<(f64, f64)> {
        let (mut t0, mut t1) = (self.t_near, self.t_far);
        let d = self.dir.get();
        for a in 0..3 {
            if d[a] == 0.0 {
                if self.origin[a] < lo[a] || self.origin[a] > hi[a] {
                    return None;
                }
                continue;
            }
            let inv = 1.0 / d[a];
            let (mut ta, mut tb) = ((lo[a] - self.origin[a]) * inv, (hi[a] - self.origin[a]) * inv);
            if ta > tb {
                std::mem::swap(&mut ta, &mut tb);
            }
            t0 = t0.max(ta);
            t1 = t1.min(tb);
        }
        (t0 <= t1).then_some((t0, t1))
    }
}

/// Row-major rays, one per pixel.
pub fn generate_rays(cam: &Camera) -> Vec<Ray> {
    let mut rays = Vec::with_capacity(cam.width * cam.height);
    for v in 0..cam.height {
        for u in 0..cam.width {
            rays.push(cam.pixel_ray(u, v));
        }
    }
    rays
}

/// A retained sample: distance along the ray, its interval length in the
/// full stratified sequence, and position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RaySample {
    pub t: f64,
    pub delta: f64,
    pub pos: Vec3,
}

/// Deterministic per-ray seed.
pub fn ray_seed(seed: u64, ray_id: u64) -> u64 {
    let mut z = seed ^ ray_id.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stratified samples over `[t_near, t_far]`, dropping those with no stored
/// point within `r_agg`. Interval lengths are taken from the full sequence
/// (`t_{i+1} - t_i`, last one `t_far - t_N`), so dropped empty space
/// contributes no opacity.
pub fn sample_ray(ray: &Ray, index: &KdTree, r_agg: f64, n_samples: usize, seed: u64) -> Vec<RaySample> {
    let n = n_samples.max(2);
    let (lo, hi) = index.bounds();
    let pad = Vec3::splat(r_agg * (1.0 + 1e-9) + 1e-12);
    let Some((c0, c1)) = ray.clip_to_box(lo - pad, hi + pad) else {
        return Vec::new();
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let step = (ray.t_far - ray.t_near) / n as f64;
    let ts: Vec<f64> = (0..n)
        .map(|i| ray.t_near + (i as f64 + rng.random::<f64>()) * step)
        .collect();
    let mut out = Vec::new();
    for (i, &t) in ts.iter().enumerate() {
        if t < c0 || t > c1 {
            continue;
        }
        let pos = ray.at(t);
        if !index.any_within(pos, r_agg) {
            continue;
        }
        let next = ts.get(i + 1).copied().unwrap_or(ray.t_far);
        out.push(RaySample { t, delta: next - t, pos });
    }
    out
}

/// Result of compositing one ray.
#[derive(Debug, Clone, PartialEq)]
pub struct Composite {
    pub rgb: Vec3,
    /// Per-sample `T_i (1 - exp(-sigma_i delta_i))`.
    pub weights: Vec<f64>,
    /// Transmittance after the last sample.
    pub transmittance: f64,
}

/// Emission-absorption compositing of samples given as `(delta, sample)`.
pub fn composite_intervals(samples: &[(f64, RadianceSample)], background: Vec3) -> Composite {
    let mut weights = Vec::with_capacity(samples.len());
    let mut rgb = Vec3::ZERO;
    let mut optical = 0.0;
    let mut trans = 1.0;
    for &(delta, s) in samples {
        let tau = s.sigma * delta;
        let next_optical = optical + tau;
        let next_trans = (-next_optical).exp();
        // T_i (1 - e^{-tau}) written as a transmittance difference so the
        // weights and the final transmittance sum to one exactly.
        let w = trans - next_trans;
        weights.push(w);
        rgb += s.rgb * w;
        optical = next_optical;
        trans = next_trans;
    }
    rgb += background * trans;
    Composite { rgb: rgb.clamp01(), weights, transmittance: trans }
}

/// Compositing of samples `(t, sample)` sorted by `t`: interval lengths are
/// `t_{i+1} - t_i`, the last one `t_far - t_N`.
pub fn composite_volume(
    samples: &[(f64, RadianceSample)],
    t_far: f64,
    background: Vec3,
) -> Result<Composite, RenderError> {
    if let Some(i) = samples.windows(2).position(|w| !(w[0].0 <= w[1].0)) {
        return Err(RenderError::UnsortedSamples(i + 1));
    }
    if let Some(last) = samples.last() {
        if !(last.0 <= t_far) {
            return Err(RenderError::UnsortedSamples(samples.len()));
        }
    }
    let intervals: Vec<(f64, RadianceSample)> = samples
        .iter()
        .enumerate()
        .map(|(i, &(t, s))| (samples.get(i + 1).map_or(t_far, |n| n.0) - t, s))
        .collect();
    Ok(composite_intervals(&intervals, background))
}

/// Anything that answers radiance queries over a point-supported volume.
pub trait RadianceScene: Sync {
    /// Index used for occupancy tests (points that carry density).
    fn support(&self) -> &KdTree;
    fn support_radius(&self) -> f64;
    fn radiance(&self, x: Vec3, v: UnitDir, scratch: &mut Vec<Neighbor>) -> RadianceSample;
}

/// A cloud queried in its own frame.
pub struct CanonicalScene<'a> {
    pub cloud: &'a NeuralPointCloud,
    pub index: &'a KdTree,
}

impl<'a> CanonicalScene<'a> {
    pub fn new(cloud: &'a NeuralPointCloud, index: &'a KdTree) -> Self {
        CanonicalScene { cloud, index }
    }
}

impl RadianceScene for CanonicalScene<'_> {
    fn support(&self) -> &KdTree {
        self.index
    }

    fn support_radius(&self) -> f64 {
        self.cloud.r_agg
    }

    fn radiance(&self, x: Vec3, v: UnitDir, scratch: &mut Vec<Neighbor>) -> RadianceSample {
        eval_radiance_with(self.cloud, self.index, x, v, scratch)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderOptions {
    pub n_samples: usize,
    pub seed: u64,
    pub background: Vec3,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions { n_samples: DEFAULT_SAMPLES, seed: 0, background: Vec3::ZERO }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedFrame {
    pub image: Image,
    /// Accumulated opacity per pixel, `1 - T_final`.
    pub alpha: Vec<f64>,
    pub mask: Option<Mask>,
    pub camera: Camera,
    pub frame_index: usize,
}

impl RenderedFrame {
    pub fn from_image(image: Image, camera: Camera, frame_index: usize) -> RenderedFrame {
        let n = image.width * image.height;
        RenderedFrame { image, alpha: vec![1.0; n], mask: None, camera, frame_index }
    }
}

/// Color and opacity of a single ray.
pub fn render_ray(scene: &dyn RadianceScene, ray: &Ray, opts: &RenderOptions, ray_id: u64) -> Composite {
    let samples = sample_ray(ray, scene.support(), scene.support_radius(), opts.n_samples, ray_seed(opts.seed, ray_id));
    let mut scratch = Vec::with_capacity(16);
    let shaded: Vec<(f64, RadianceSample)> = samples
        .iter()
        .map(|s| (s.delta, scene.radiance(s.pos, ray.dir, &mut scratch)))
        .collect();
    composite_intervals(&shaded, opts.background)
}

/// Renders every pixel of `cam`. Pixels are independent and may be
/// processed in parallel; output is identical for a fixed seed.
pub fn render(scene: &dyn RadianceScene, cam: &Camera, opts: &RenderOptions, frame_index: usize) -> RenderedFrame {
    let (w, h) = (cam.width, cam.height);
    let pixels: Vec<Composite> = (0..w * h)
        .into_par_iter()
        .map(|p| render_ray(scene, &cam.pixel_ray(p % w, p / w), opts, p as u64))
        .collect();
    let mut image = Image::new(w, h);
    let mut alpha = Vec::with_capacity(w * h);
    for (p, c) in pixels.iter().enumerate() {
        image.set_pixel(p % w, p / w, c.rgb.to_array());
        alpha.push(1.0 - c.transmittance);
    }
    RenderedFrame { image, alpha, mask: None, camera: cam.clone(), frame_index }
}

/// Rasterized convex hull of the box corners projected into `cam`, clipped
/// at the near plane. Pixels whose center lies in the hull are set, as is
/// every pixel containing a projected vertex.
pub fn project_bbox_mask(cam: &Camera, bbox: (Vec3, Vec3)) -> Result<Mask, RenderError> {
    let (lo, hi) = bbox;
    let corners: Vec<Vec3> = (0..8)
        .map(|i| {
            let pick = |bit: usize, a: f64, b: f64| if i & bit == 0 { a } else { b };
            cam.to_camera(Vec3::new(pick(1, lo.x, hi.x), pick(2, lo.y, hi.y), pick(4, lo.z, hi.z)))
        })
        .collect();
    let near = cam.near.max(1e-9);
    let mut pts: Vec<(f64, f64)> = corners.iter().filter(|c| c.z >= near).map(|&c| cam.project_camera(c)).collect();
    for i in 0..8usize {
        for bit in [1usize, 2, 4] {
            let j = i | bit;
            if j == i {
                continue;
            }
            let (a, b) = (corners[i], corners[j]);
            if (a.z < near) != (b.z < near) {
                let s = (near - a.z) / (b.z - a.z);
                pts.push(cam.project_camera(a + (b - a) * s));
            }
        }
    }
    if pts.is_empty() {
        return Err(RenderError::BoxBehindCamera);
    }
    let hull = convex_hull(pts.clone());
    let mut mask = Mask::new(cam.width, cam.height);
    let (mut u0, mut u1, mut v0, mut v1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(u, v) in &hull {
        u0 = u0.min(u);
        u1 = u1.max(u);
        v0 = v0.min(v);
        v1 = v1.max(v);
    }
    let clamp_px = |x: f64, n: usize| x.floor().clamp(0.0, n as f64 - 1.0) as usize;
    if hull.len() >= 3 && u1 >= 0.0 && v1 >= 0.0 && u0 < cam.width as f64 && v0 < cam.height as f64 {
        for y in clamp_px(v0, cam.height)..=clamp_px(v1, cam.height) {
            for x in clamp_px(u0, cam.width)..=clamp_px(u1, cam.width) {
                if point_in_convex(&hull, (x as f64 + 0.5, y as f64 + 0.5)) {
                    mask.set(x, y, true);
                }
            }
        }
    }
    for (u, v) in pts {
        if u >= 0.0 && v >= 0.0 && u < cam.width as f64 && v < cam.height as f64 {
            mask.set(u as usize, v as usize, true);
        }
    }
    Ok(mask)
}

fn cross2(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Andrew's monotone chain; counter-clockwise, no collinear points.
fn convex_hull(mut pts: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &(f64, f64)>> =
            if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for &p in iter {
            while hull.len() >= start + 2 && cross2(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

fn point_in_convex(hull: &[(f64, f64)], p: (f64, f64)) -> bool {
    (0..hull.len()).all(|i| cross2(hull[i], hull[(i + 1) % hull.len()], p) >= 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::points::{Group, NeuralPoint};
    use crate::sh;

    fn cam(w: usize, h: usize) -> Camera {
        Camera::look_at(Vec3::new(4.0, 0.0, 0.0), Vec3::ZERO, (w, h), 0.8, 0.5, 8.0)
    }

    #[test]
    fn look_at_frame() {
        let c = cam(5, 5);
        assert!((c.forward() - Vec3::new(-1.0, 0.0, 0.0)).norm() < 1e-12);
        let r = c.pixel_ray(2, 2);
        assert!((r.dir.get() - c.forward()).norm() < 1e-12);
        let (u, v) = c.project(Vec3::ZERO).unwrap();
        assert!((u - 2.5).abs() < 1e-12 && (v - 2.5).abs() < 1e-12);
        // image up is world +z
        let (_, v_up) = c.project(Vec3::new(0.0, 0.0, 0.5)).unwrap();
        assert!(v_up < 2.5);
    }

    #[test]
    fn corner_ray_unprojection() {
        let c = Camera { fx: 10.0, fy: 20.0, cx: 2.0, cy: 1.5, ..cam(4, 3) };
        let r = c.pixel_ray(0, 0);
        let local = Vec3::new((0.5 - 2.0) / 10.0, (0.5 - 1.5) / 20.0, 1.0);
        let expected = c.rotation.apply(local).normalized().unwrap();
        assert!((r.dir.get() - expected).norm() < 1e-15);
        for ray in generate_rays(&c) {
            assert!((ray.dir.get().norm() - 1.0).abs() < 1e-12);
        }
        assert_eq!(generate_rays(&c).len(), 12);
    }

    #[test]
    fn camera_json_roundtrip_and_validation() {
        let c = cam(8, 6);
        let s = serde_json::to_string(&c).unwrap();
        assert!(s.contains("\"c2w\"") && s.contains("\"w\":8"));
        let back: Camera = serde_json::from_str(&s).unwrap();
        assert_eq!(back, c);
        let bad = s.replace("\"near\":0.5", "\"near\":9.0");
        assert!(serde_json::from_str::<Camera>(&bad).is_err());
        let extra = s.replacen('{', "{\"bogus\":1,", 1);
        assert!(serde_json::from_str::<Camera>(&extra).is_err());
    }

    fn s(sigma: f64, rgb: Vec3) -> RadianceSample {
        RadianceSample { sigma, rgb }
    }

    #[test]
    fn composite_examples() {
        let bg = Vec3::new(0.1, 0.2, 0.3);
        let c = composite_volume(&[], 1.0, bg).unwrap();
        assert_eq!(c.rgb, bg);
        assert_eq!(c.transmittance, 1.0);

        let red = Vec3::new(1.0, 0.0, 0.0);
        let c = composite_volume(&[(0.0, s(20.0, red))], 1.0, Vec3::ZERO).unwrap();
        assert!((c.rgb - red).max_abs() < 1e-8);

        let ln2 = std::f64::consts::LN_2;
        let c = composite_volume(&[(0.0, s(ln2, Vec3::splat(1.0))), (1.0, s(1e6, Vec3::ZERO))], 2.0, Vec3::splat(1.0))
            .unwrap();
        assert!((c.rgb - Vec3::splat(0.5)).max_abs() < 1e-12);

        assert_eq!(
            composite_volume(&[(1.0, s(1.0, red)), (0.5, s(1.0, red))], 2.0, Vec3::ZERO),
            Err(RenderError::UnsortedSamples(1))
        );
    }

    fn single_point_scene() -> NeuralPointCloud {
        let mut coeffs = vec![0.0; 27];
        coeffs[0] = sh::dc_from_value(1.0);
        let p = NeuralPoint { position: Vec3::ZERO, sh: coeffs, density: 30.0, confidence: 1.0, group: Group::Character };
        let mut c = NeuralPointCloud::from_points(2, [p]).unwrap();
        c.r_agg = 0.3;
        c
    }

    #[test]
    fn sampling_keeps_only_occupied() {
        let cloud = single_point_scene();
        let idx = cloud.build_index().unwrap();
        let c = cam(9, 9);
        let hit = sample_ray(&c.pixel_ray(4, 4), &idx, cloud.r_agg, 64, 3);
        assert!(!hit.is_empty());
        assert!(hit.iter().all(|s| s.pos.norm() <= cloud.r_agg));
        // brute-force recount over the same stratification
        let ray = c.pixel_ray(4, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let step = (ray.t_far - ray.t_near) / 64.0;
        let count = (0..64)
            .filter(|&i| ray.at(ray.t_near + (i as f64 + rng.random::<f64>()) * step).norm() <= cloud.r_agg)
            .count();
        assert_eq!(hit.len(), count);
        assert!(sample_ray(&c.pixel_ray(0, 0), &idx, cloud.r_agg, 64, 3).is_empty());
        assert_eq!(sample_ray(&ray, &idx, cloud.r_agg, 64, 3), hit);
    }

    #[test]
    fn empty_view_renders_background() {
        let cloud = single_point_scene();
        let idx = cloud.build_index().unwrap();
        let away = Camera::look_at(Vec3::new(4.0, 0.0, 0.0), Vec3::new(8.0, 0.0, 0.0), (6, 6), 0.5, 0.1, 5.0);
        let bg = Vec3::new(0.2, 0.4, 0.6);
        let f = render(&CanonicalScene::new(&cloud, &idx), &away, &RenderOptions { background: bg, ..Default::default() }, 0);
        for y in 0..6 {
            for x in 0..6 {
                assert_eq!(f.image.pixel(x, y), bg.to_array());
            }
        }
        assert!(f.alpha.iter().all(|&a| a == 0.0));
    }

    #[test]
    fn bbox_mask_cases() {
        let c = cam(33, 33);
        let m = project_bbox_mask(&c, (Vec3::splat(-0.3), Vec3::splat(0.3))).unwrap();
        assert!(m.get(16, 16));
        assert!(!m.get(0, 0));
        for y in 0..33 {
            for x in 0..33 {
                assert_eq!(m.get(x, y), m.get(32 - x, y), "horizontal symmetry at {x},{y}");
                assert_eq!(m.get(x, y), m.get(x, 32 - y), "vertical symmetry at {x},{y}");
            }
        }
        let behind = (Vec3::new(5.0, -0.1, -0.1), Vec3::new(6.0, 0.1, 0.1));
        assert_eq!(project_bbox_mask(&c, behind), Err(RenderError::BoxBehindCamera));

        let p = Vec3::new(0.0, 0.2, -0.1);
        let m = project_bbox_mask(&c, (p, p)).unwrap();
        assert_eq!(m.count(), 1);
        let (u, v) = c.project(p).unwrap();
        assert!(m.get(u as usize, v as usize));
    }

    #[test]
    fn bbox_mask_straddling_near_plane() {
        let c = cam(21, 21);
        // box reaches behind the camera; clipped hull still covers the center
        let m = project_bbox_mask(&c, (Vec3::new(-1.0, -0.5, -0.5), Vec3::new(6.0, 0.5, 0.5))).unwrap();
        assert!(m.get(10, 10));
        assert!(m.count() > 100);
    }
}
