//! Procedural synthetic scenes with analytic motion, and camera paths.
//!
//! All randomness comes from `ChaCha8Rng::seed_from_u64(seed)` (rand_chacha),
//! so a fixed seed reproduces a scene bit for bit.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::deform::{DeformError, KeypointFrame, MotionSequence, RotationField};
use crate::geom::{nlerp_rotations, rot_to_quat, RotationMat, UnitQuat, Vec3};
use crate::points::{Group, NeuralPoint, NeuralPointCloud, PointsError};
use crate::render::Camera;
use crate::sh;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("bad scene parameters: {0}")]
    BadParams(String),
    #[error(transparent)]
    Points(#[from] PointsError),
    #[error(transparent)]
    Deform(#[from] DeformError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneKind {
    Sphere,
    TexturedSphere,
    TwoSegmentLimb,
    ArticulatedBiped,
    BoxRoomBackground,
}

impl SceneKind {
    pub const ALL: [SceneKind; 5] = [
        SceneKind::Sphere,
        SceneKind::TexturedSphere,
        SceneKind::TwoSegmentLimb,
        SceneKind::ArticulatedBiped,
        SceneKind::BoxRoomBackground,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SceneKind::Sphere => "sphere",
            SceneKind::TexturedSphere => "textured_sphere",
            SceneKind::TwoSegmentLimb => "two_segment_limb",
            SceneKind::ArticulatedBiped => "articulated_biped",
            SceneKind::BoxRoomBackground => "box_room_background",
        }
    }

    fn default_degree(self) -> usize {
        match self {
            SceneKind::TexturedSphere => 2,
            _ => 0,
        }
    }
}

impl fmt::Display for SceneKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SceneKind {
    type Err = SceneError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SceneKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| SceneError::BadParams(format!("unknown scene kind '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneParams {
    /// Character points.
    pub n_points: usize,
    /// SH degree of the ground truth; `None` picks the kind's default.
    pub sh_degree: Option<usize>,
    /// Checker cells per half turn (spheres) or stripes per unit length.
    pub texture_freq: f64,
    /// Amplitude of the view-dependent color terms (degree >= 1).
    pub view_strength: f64,
    /// Motion per frame, in degrees: rotation angle for spheres, joint bend
    /// for the limb, pose amplitude for the biped.
    pub angles_deg: Vec<f64>,
    /// Length over which a child segment blends from its parent's motion.
    pub joint_band: f64,
    pub density: f64,
    pub image_size: usize,
    pub n_train_views: usize,
    pub n_test_views: usize,
    pub fov_deg: f64,
}

impl Default for SceneParams {
    fn default() -> Self {
        SceneParams {
            n_points: 4000,
            sh_degree: None,
            texture_freq: 3.0,
            view_strength: 0.25,
            angles_deg: vec![45.0],
            joint_band: 0.2,
            density: 50.0,
            image_size: 64,
            n_train_views: 8,
            n_test_views: 4,
            fov_deg: 40.0,
        }
    }
}

impl SceneParams {
    pub fn validate(&self) -> Result<(), SceneError> {
        let bad = |m: &str| Err(SceneError::BadParams(m.to_string()));
        if self.n_points < 16 {
            return bad("n_points must be at least 16");
        }
        if self.sh_degree.is_some_and(|d| d > sh::MAX_DEGREE) {
            return bad("sh_degree must be at most 3");
        }
        if !(self.texture_freq > 0.0 && self.texture_freq.is_finite()) {
            return bad("texture_freq must be positive");
        }
        if !(self.view_strength >= 0.0 && self.view_strength <= 1.0) {
            return bad("view_strength must be in [0, 1]");
        }
        if self.angles_deg.iter().any(|a| !a.is_finite()) {
            return bad("angles must be finite");
        }
        if !(self.joint_band > 0.0) {
            return bad("joint_band must be positive");
        }
        if !(self.density > 0.0 && self.density.is_finite()) {
            return bad("density must be positive");
        }
        if self.image_size == 0 || self.n_train_views == 0 || self.n_test_views == 0 {
            return bad("image size and view counts must be positive");
        }
        if !(self.fov_deg > 1.0 && self.fov_deg < 170.0) {
            return bad("fov_deg must be in (1, 170)");
        }
        Ok(())
    }
}

/// Ground-truth configuration of every point in one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneFrame {
    pub t: usize,
    pub positions: Vec<Vec3>,
    /// Rotation taking deformed-space directions back to canonical space.
    pub rotations: Vec<UnitQuat>,
}

#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub kind: SceneKind,
    pub params: SceneParams,
    pub seed: u64,
    /// Canonical ground-truth cloud (character and background points).
    pub cloud: NeuralPointCloud,
    pub frames: Vec<SceneFrame>,
    pub train_cameras: Vec<Camera>,
    pub test_cameras: Vec<Camera>,
    /// Diagonal of the canonical character bounding box.
    pub diag: f64,
}

impl SyntheticScene {
    pub fn character_indices(&self) -> Vec<usize> {
        (0..self.cloud.len()).filter(|&i| self.cloud.groups[i] == Group::Character).collect()
    }

    /// Uniform random subset of character points, sorted by index. Asking
    /// for at least as many as exist returns all of them.
    pub fn keypoint_indices(&self, n_kp: usize, seed: u64) -> Vec<usize> {
        let chars = self.character_indices();
        if n_kp >= chars.len() {
            return chars;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pick: Vec<usize> = sample(&mut rng, chars.len(), n_kp).into_iter().map(|j| chars[j]).collect();
        pick.sort_unstable();
        pick
    }

    pub fn keypoint_frame(&self, frame: usize, keypoints: &[usize]) -> KeypointFrame {
        let f = &self.frames[frame];
        KeypointFrame {
            t: f.t,
            canonical: keypoints.iter().map(|&i| self.cloud.positions[i]).collect(),
            target: keypoints.iter().map(|&i| f.positions[i]).collect(),
        }
    }

    pub fn motion(&self, keypoints: &[usize]) -> MotionSequence {
        MotionSequence { frames: (0..self.frames.len()).map(|f| self.keypoint_frame(f, keypoints)).collect() }
    }

    /// Ground-truth deformed cloud of a frame.
    pub fn frame_cloud(&self, frame: usize) -> NeuralPointCloud {
        let mut c = self.cloud.clone();
        c.positions = self.frames[frame].positions.clone();
        c
    }

    pub fn frame_rotation_field(&self, frame: usize, k_rot: usize) -> Result<RotationField, SceneError> {
        let f = &self.frames[frame];
        Ok(RotationField::from_parts(f.positions.clone(), f.rotations.clone(), k_rot, self.cloud.r_agg)?)
    }

    /// Rest configuration as a frame (identity motion).
    pub fn rest_frame(&self) -> SceneFrame {
        SceneFrame {
            t: 0,
            positions: self.cloud.positions.clone(),
            rotations: vec![UnitQuat::IDENTITY; self.cloud.len()],
        }
    }
}

/// Image size, field of view, and optional azimuth range for camera paths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraRig {
    pub size: (usize, usize),
    pub fov_x: f64,
    pub near: f64,
    pub far: f64,
    /// Azimuth interval (radians) the cameras are spread over.
    pub azimuth: (f64, f64),
}

impl CameraRig {
    pub fn new(size: usize, fov_deg: f64, near: f64, far: f64) -> CameraRig {
        CameraRig { size: (size, size), fov_x: fov_deg.to_radians(), near, far, azimuth: (0.0, 2.0 * PI) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathKind {
    SphereOrbit,
    HorizontalCircle,
}

/// Cameras at distance `radius` from `target`, all looking at it.
/// `SphereOrbit` spreads elevations uniformly in `sin(elevation)` with a
/// golden-ratio azimuth sequence; `HorizontalCircle` keeps elevation zero
/// and starts on the `+x` side of the target.
pub fn camera_path(kind: PathKind, n_views: usize, radius: f64, target: Vec3, rig: &CameraRig) -> Vec<Camera> {
    let (a0, a1) = rig.azimuth;
    let golden = (5f64.sqrt() - 1.0) / 2.0;
    (0..n_views)
        .map(|i| {
            let (z, phi) = match kind {
                PathKind::SphereOrbit => {
                    let z = 1.0 - (2.0 * i as f64 + 1.0) / n_views as f64;
                    (z, a0 + (i as f64 * golden).fract() * (a1 - a0))
                }
                PathKind::HorizontalCircle => (0.0, a0 + (a1 - a0) * i as f64 / n_views as f64),
            };
            let r = (1.0 - z * z).sqrt();
            let eye = target + Vec3::new(r * phi.cos(), r * phi.sin(), z) * radius;
            Camera::look_at(eye, target, rig.size, rig.fov_x, rig.near, rig.far)
        })
        .collect()
}

/// Colors as (value, normal) -> base color plus view-dependent terms.
struct Palette {
    degree: usize,
    strength: f64,
}

impl Palette {
    /// SH coefficients for a point with base color `base` and outward
    /// normal `n`: `base + s (n . v) tint1 + s v_z tint2 + (s/2) (3 v_z^2 - 1) tint3`
    /// truncated to the degree.
    fn coeffs(&self, base: Vec3, n: Vec3) -> Vec<f64> {
        let b = sh::basis_count(self.degree);
        let mut out = vec![0.0; 3 * b];
        let s = self.strength;
        let tint1 = Vec3::new(1.0, 0.6, 0.2);
        let tint2 = Vec3::new(0.2, 0.4, 1.0);
        let tint3 = Vec3::new(0.6, 0.1, 0.5);
        for c in 0..3 {
            out[c * b] = sh::dc_from_value(base[c]);
            if self.degree >= 1 {
                let lin = n * (s * tint1[c]) + Vec3::Z * (s * tint2[c]);
                out[c * b + 1..c * b + 4].copy_from_slice(&sh::band1_from_linear(lin));
            }
            if self.degree >= 2 {
                out[c * b + 6] = 0.5 * s * tint3[c] * sh::band2_zonal();
            }
        }
        out
    }
}

const COLOR_A: Vec3 = Vec3::new(0.85, 0.3, 0.2);
const COLOR_B: Vec3 = Vec3::new(0.2, 0.4, 0.85);

fn checker(p: Vec3, freq: f64) -> Vec3 {
    let theta = p.z.clamp(-1.0, 1.0).acos();
    let phi = p.y.atan2(p.x) + PI;
    let cell = (freq * theta / PI).floor() as i64 + (freq * phi / PI).floor() as i64;
    if cell.rem_euclid(2) == 0 {
        COLOR_A
    } else {
        COLOR_B
    }
}

fn fibonacci_sphere(n: usize) -> Vec<Vec3> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden * i as f64;
            Vec3::new(r * phi.cos(), r * phi.sin(), z)
        })
        .collect()
}

/// Unit vectors completing `axis` to an orthonormal frame.
fn frame_of(axis: Vec3) -> (Vec3, Vec3) {
    let helper = if axis.x.abs() < 0.9 { Vec3::X } else { Vec3::Y };
    let u = axis.cross(helper).normalized().expect("nonzero");
    (u, axis.cross(u))
}

/// Jittered stratified samples on the side of the cylinder `a -> b` and,
/// optionally, its end caps. Returns (position, outward normal, axial
/// distance from `a`).
fn cylinder(n: usize, a: Vec3, b: Vec3, radius: f64, caps: bool, rng: &mut ChaCha8Rng) -> Vec<(Vec3, Vec3, f64)> {
    let axis_v = b - a;
    let len = axis_v.norm();
    let axis = axis_v / len;
    let (u, w) = frame_of(axis);
    let side = 2.0 * PI * radius * len;
    let cap = if caps { PI * radius * radius } else { 0.0 };
    let n_cap = ((n as f64) * cap / (side + 2.0 * cap)).round() as usize;
    let n_side = n - 2 * n_cap;
    let around = ((n_side as f64 * 2.0 * PI * radius / len).sqrt().round() as usize).max(3);
    let along = n_side.div_ceil(around);
    let mut out = Vec::with_capacity(n);
    for k in 0..n_side {
        let (i, j) = (k % around, k / around);
        let ang = 2.0 * PI * (i as f64 + rng.random::<f64>()) / around as f64;
        let s = len * (j as f64 + rng.random::<f64>()) / along as f64;
        let nrm = u * ang.cos() + w * ang.sin();
        out.push((a + axis * s + nrm * radius, nrm, s));
    }
    for (end, sign, s) in [(a, -1.0, 0.0), (b, 1.0, len)] {
        for _ in 0..n_cap {
            // uniform on the disc
            let r = radius * rng.random::<f64>().sqrt();
            let ang = 2.0 * PI * rng.random::<f64>();
            out.push((end + (u * ang.cos() + w * ang.sin()) * r, axis * sign, s));
        }
    }
    out
}

/// Rigid transform `p -> rot * p + trans`.
#[derive(Debug, Clone, Copy)]
struct Rigid {
    rot: RotationMat,
    trans: Vec3,
}

impl Rigid {
    const IDENTITY: Rigid = Rigid { rot: RotationMat::IDENTITY, trans: Vec3::ZERO };

    fn apply(&self, p: Vec3) -> Vec3 {
        self.rot.apply(p) + self.trans
    }

    /// `self` after a local rotation about `joint` (given in rest coordinates).
    fn then_local(&self, joint: Vec3, local: &RotationMat) -> Rigid {
        let rot = self.rot.compose(local);
        let trans = self.rot.apply(joint - local.apply(joint)) + self.trans;
        Rigid { rot, trans }
    }
}

/// One rigid part of an articulated character.
struct Segment {
    parent: Option<usize>,
    joint: Vec3,
    /// Local joint rotation axis and its angle per degree of pose amplitude.
    axis: Vec3,
    gain: f64,
}

/// Per point: owning segment and blend weight toward that segment's motion
/// (the remainder follows the parent).
struct Skinning {
    segment: Vec<usize>,
    weight: Vec<f64>,
}

fn pose_frames(
    segments: &[Segment],
    skin: &Skinning,
    rest: &[Vec3],
    n_total: usize,
    angles_deg: &[f64],
) -> Result<Vec<SceneFrame>, SceneError> {
    let mut frames = Vec::with_capacity(angles_deg.len());
    for (t, &ang) in angles_deg.iter().enumerate() {
        let mut global: Vec<Rigid> = Vec::with_capacity(segments.len());
        for seg in segments {
            let parent = seg.parent.map_or(Rigid::IDENTITY, |p| global[p]);
            let local = RotationMat::from_axis_angle(seg.axis, (seg.gain * ang).to_radians());
            global.push(parent.then_local(seg.joint, &local));
        }
        let inv_quats: Vec<UnitQuat> = global
            .iter()
            .map(|g| rot_to_quat(&g.rot.transpose()))
            .collect::<Result<_, _>>()
            .map_err(|e| SceneError::BadParams(e.to_string()))?;
        let mut positions = rest.to_vec();
        let mut rotations = vec![UnitQuat::IDENTITY; n_total];
        for (i, p) in rest.iter().enumerate() {
            let s = skin.segment[i];
            let w = skin.weight[i];
            let own = global[s];
            match segments[s].parent {
                Some(par) if w < 1.0 => {
                    let pg = global[par];
                    let (a, b) = (pg.apply(*p), own.apply(*p));
                    positions[i] = a + (b - a) * w;
                    rotations[i] = nlerp_rotations(&[inv_quats[par], inv_quats[s]], &[1.0 - w, w])
                        .unwrap_or(inv_quats[s]);
                }
                _ => {
                    positions[i] = own.apply(*p);
                    rotations[i] = inv_quats[s];
                }
            }
        }
        frames.push(SceneFrame { t: t + 1, positions, rotations });
    }
    Ok(frames)
}

struct Built {
    points: Vec<NeuralPoint>,
    segments: Vec<Segment>,
    skin: Skinning,
}

fn limb(params: &SceneParams, palette: &Palette, rng: &mut ChaCha8Rng) -> Built {
    let radius = 0.2;
    let surf = cylinder(params.n_points, Vec3::ZERO, Vec3::new(2.0, 0.0, 0.0), radius, true, rng);
    let mut points = Vec::with_capacity(surf.len());
    let mut skin = Skinning { segment: Vec::new(), weight: Vec::new() };
    for (p, n, s) in surf {
        let stripe = (params.texture_freq * s).floor() as i64 % 2 == 0;
        let base = if stripe { COLOR_A } else { COLOR_B };
        points.push(NeuralPoint {
            position: p,
            sh: palette.coeffs(base, n),
            density: params.density,
            confidence: 1.0,
            group: Group::Character,
        });
        let past = s - 1.0;
        let (seg, w) = if past < 0.0 { (0, 1.0) } else { (1, (past / params.joint_band).min(1.0)) };
        skin.segment.push(seg);
        skin.weight.push(w);
    }
    let segments = vec![
        Segment { parent: None, joint: Vec3::ZERO, axis: Vec3::Z, gain: 0.0 },
        Segment { parent: Some(0), joint: Vec3::new(1.0, 0.0, 0.0), axis: Vec3::Z, gain: 1.0 },
    ];
    Built { points, segments, skin }
}

fn biped(params: &SceneParams, palette: &Palette, rng: &mut ChaCha8Rng) -> Built {
    // (parent, joint, a, b, radius, axis, gain); a == b marks a sphere
    // centered at `a`.
    let v = Vec3::new;
    let parts: [(Option<usize>, Vec3, Vec3, Vec3, f64, Vec3, f64); 10] = [
        (None, v(0.0, 0.0, 0.0), v(0.0, 0.0, 0.0), v(0.0, 0.0, 0.6), 0.13, Vec3::Y, 0.2),
        (Some(0), v(0.0, 0.0, 0.62), v(0.0, 0.0, 0.8), v(0.0, 0.0, 0.8), 0.12, Vec3::Z, 0.5),
        (Some(0), v(0.16, 0.0, 0.55), v(0.16, 0.0, 0.55), v(0.5, 0.0, 0.55), 0.05, Vec3::Y, -1.0),
        (Some(2), v(0.5, 0.0, 0.55), v(0.5, 0.0, 0.55), v(0.82, 0.0, 0.55), 0.045, Vec3::Z, 1.2),
        (Some(0), v(-0.16, 0.0, 0.55), v(-0.16, 0.0, 0.55), v(-0.5, 0.0, 0.55), 0.05, Vec3::Y, 1.0),
        (Some(4), v(-0.5, 0.0, 0.55), v(-0.5, 0.0, 0.55), v(-0.82, 0.0, 0.55), 0.045, Vec3::Z, -1.2),
        (Some(0), v(0.09, 0.0, -0.02), v(0.09, 0.0, -0.02), v(0.09, 0.0, -0.47), 0.06, Vec3::X, 0.7),
        (Some(6), v(0.09, 0.0, -0.47), v(0.09, 0.0, -0.47), v(0.09, 0.0, -0.92), 0.05, Vec3::X, -0.9),
        (Some(0), v(-0.09, 0.0, -0.02), v(-0.09, 0.0, -0.02), v(-0.09, 0.0, -0.47), 0.06, Vec3::X, -0.7),
        (Some(8), v(-0.09, 0.0, -0.47), v(-0.09, 0.0, -0.47), v(-0.09, 0.0, -0.92), 0.05, Vec3::X, -0.9),
    ];
    let area = |&(_, _, a, b, r, _, _): &(Option<usize>, Vec3, Vec3, Vec3, f64, Vec3, f64)| {
        if a == b {
            4.0 * PI * r * r
        } else {
            2.0 * PI * r * (b - a).norm()
        }
    };
    let total: f64 = parts.iter().map(area).sum();
    let mut counts: Vec<usize> =
        parts.iter().map(|p| ((params.n_points as f64) * area(p) / total).floor() as usize).collect();
    counts[0] += params.n_points - counts.iter().sum::<usize>();

    let mut points = Vec::with_capacity(params.n_points);
    let mut skin = Skinning { segment: Vec::new(), weight: Vec::new() };
    let mut segments = Vec::new();
    for (si, (part, &count)) in parts.iter().zip(&counts).enumerate() {
        let &(parent, joint, a, b, r, axis, gain) = part;
        segments.push(Segment { parent, joint, axis, gain });
        let surf: Vec<(Vec3, Vec3, f64)> = if a == b {
            let dir_j = (a - joint).normalized().unwrap_or(Vec3::Z);
            fibonacci_sphere(count)
                .into_iter()
                .map(|n| {
                    let p = a + n * r;
                    (p, n, (p - joint).dot(dir_j))
                })
                .collect()
        } else {
            let off = (a - joint).norm();
            cylinder(count, a, b, r, false, rng).into_iter().map(|(p, n, s)| (p, n, s + off)).collect()
        };
        let color = if si % 2 == 0 { COLOR_A } else { COLOR_B };
        for (p, n, s) in surf {
            points.push(NeuralPoint {
                position: p,
                sh: palette.coeffs(color * (0.8 + 0.2 * (params.texture_freq * s).cos()), n),
                density: params.density,
                confidence: 1.0,
                group: Group::Character,
            });
            skin.segment.push(si);
            skin.weight.push(if parent.is_some() { (s / params.joint_band).clamp(0.0, 1.0) } else { 1.0 });
        }
    }
    Built { points, segments, skin }
}

/// Floor, back wall, and two side walls around the limb, open toward `-y`,
/// sampled on a grid with spacing below the aggregation radius.
fn room(spacing: f64, degree: usize) -> Vec<NeuralPoint> {
    let palette = Palette { degree, strength: 0.0 };
    let (x0, x1, y0, y1, z0, z1) = (-2.0, 4.0, -1.5, 2.5, -0.6, 2.0);
    let mut out = Vec::new();
    let steps = |a: f64, b: f64| ((b - a) / spacing).round() as usize;
    let mut plane = |origin: Vec3, du: Vec3, dv: Vec3, nu: usize, nv: usize, normal: Vec3, tint: Vec3| {
        for i in 0..=nu {
            for j in 0..=nv {
                let p = origin + du * (i as f64 * spacing) + dv * (j as f64 * spacing);
                let check = ((p.x + p.y + p.z) * 2.0).floor() as i64 % 2 == 0;
                let base = if check { tint } else { tint * 0.7 };
                out.push(NeuralPoint {
                    position: p,
                    sh: palette.coeffs(base, normal),
                    density: 50.0,
                    confidence: 1.0,
                    group: Group::Background,
                });
            }
        }
    };
    // floor
    plane(Vec3::new(x0, y0, z0), Vec3::X, Vec3::Y, steps(x0, x1), steps(y0, y1), Vec3::Z, Vec3::new(0.6, 0.6, 0.55));
    // back wall
    plane(Vec3::new(x0, y1, z0 + spacing), Vec3::X, Vec3::Z, steps(x0, x1), steps(z0, z1) - 1, -Vec3::Y, Vec3::new(0.3, 0.6, 0.35));
    // side walls
    for x in [x0, x1] {
        plane(Vec3::new(x, y0, z0 + spacing), Vec3::Y, Vec3::Z, steps(y0, y1) - 1, steps(z0, z1) - 1, Vec3::X, Vec3::new(0.7, 0.55, 0.3));
    }
    out
}

fn bbox(points: &[Vec3]) -> (Vec3, Vec3) {
    points.iter().fold((points[0], points[0]), |(lo, hi), p| (lo.component_min(*p), hi.component_max(*p)))
}

/// Builds one of the procedural scenes. Deterministic for a fixed seed.
pub fn generate_scene(kind: SceneKind, params: &SceneParams, seed: u64) -> Result<SyntheticScene, SceneError> {
    params.validate()?;
    let degree = params.sh_degree.unwrap_or(kind.default_degree());
    let palette = Palette { degree, strength: params.view_strength };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let (points, motion): (Vec<NeuralPoint>, Option<(Vec<Segment>, Skinning)>) = match kind {
        SceneKind::Sphere | SceneKind::TexturedSphere => {
            let pts = fibonacci_sphere(params.n_points)
                .into_iter()
                .map(|n| NeuralPoint {
                    position: n,
                    sh: palette.coeffs(checker(n, params.texture_freq), n),
                    density: params.density,
                    confidence: 1.0,
                    group: Group::Character,
                })
                .collect();
            (pts, None)
        }
        SceneKind::TwoSegmentLimb | SceneKind::BoxRoomBackground => {
            let b = limb(params, &palette, &mut rng);
            (b.points, Some((b.segments, b.skin)))
        }
        SceneKind::ArticulatedBiped => {
            let b = biped(params, &palette, &mut rng);
            (b.points, Some((b.segments, b.skin)))
        }
    };
    let mut cloud = NeuralPointCloud::from_points(degree, points)?;
    let n_char = cloud.len();
    let char_pos = cloud.positions.clone();

    if kind == SceneKind::BoxRoomBackground {
        let bg = NeuralPointCloud::from_points(degree, room(0.75 * cloud.r_agg, degree))?;
        cloud = crate::points::composite(&cloud, &bg);
    }

    let frames = match motion {
        None => params
            .angles_deg
            .iter()
            .enumerate()
            .map(|(t, &a)| {
                let q = RotationMat::from_axis_angle(Vec3::X, a.to_radians());
                let inv = rot_to_quat(&q.transpose()).map_err(|e| SceneError::BadParams(e.to_string()))?;
                Ok(SceneFrame {
                    t: t + 1,
                    positions: cloud.positions.iter().map(|p| q.apply(*p)).collect(),
                    rotations: vec![inv; cloud.len()],
                })
            })
            .collect::<Result<Vec<_>, SceneError>>()?,
        Some((segments, skin)) => {
            let mut frames = pose_frames(&segments, &skin, &char_pos, n_char, &params.angles_deg)?;
            for f in &mut frames {
                f.positions.extend_from_slice(&cloud.positions[n_char..]);
                f.rotations.resize(cloud.len(), UnitQuat::IDENTITY);
            }
            frames
        }
    };

    let (lo, hi) = bbox(&char_pos);
    let diag = (hi - lo).norm();
    let center = (lo + hi) * 0.5;
    // the character may swing out of its rest box while moving
    let reach = frames
        .iter()
        .flat_map(|f| f.positions[..n_char].iter())
        .chain(&char_pos)
        .map(|p| p.distance(center))
        .fold(0.0, f64::max);
    let cam_radius = reach / ((0.45 * params.fov_deg).to_radians().sin());
    let mut rig = CameraRig::new(params.image_size, params.fov_deg, (cam_radius - 1.5 * reach).max(1e-2), cam_radius + 1.5 * reach);
    let (train_cameras, test_cameras) = if kind == SceneKind::BoxRoomBackground {
        // look into the room through its open side
        rig.far = cam_radius + 8.0;
        rig.azimuth = (-0.5 * PI - 0.9, -0.5 * PI + 0.9);
        let mut train = camera_path(PathKind::SphereOrbit, 2 * params.n_train_views, cam_radius, center, &rig);
        train.retain(|c| c.position.z > center.z - 0.2);
        train.truncate(params.n_train_views);
        (train, camera_path(PathKind::HorizontalCircle, params.n_test_views, cam_radius, center, &rig))
    } else {
        (
            camera_path(PathKind::SphereOrbit, params.n_train_views, cam_radius, center, &rig),
            camera_path(PathKind::HorizontalCircle, params.n_test_views, cam_radius, center, &rig),
        )
    };

    Ok(SyntheticScene { kind, params: params.clone(), seed, cloud, frames, train_cameras, test_cameras, diag })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::points::eval_radiance;
    use crate::geom::UnitDir;

    fn params(n: usize, angles: Vec<f64>) -> SceneParams {
        SceneParams { n_points: n, angles_deg: angles, ..Default::default() }
    }

    #[test]
    fn sphere_points_on_unit_sphere() {
        let s = generate_scene(SceneKind::Sphere, &params(10_000, vec![30.0]), 1).unwrap();
        assert_eq!(s.cloud.len(), 10_000);
        assert_eq!(s.cloud.sh_degree(), 0);
        assert!(s.cloud.positions.iter().all(|p| (p.norm() - 1.0).abs() < 1e-9));
        assert!((s.diag - 12f64.sqrt()).abs() < 1e-2);
    }

    #[test]
    fn limb_rest_and_bend() {
        let s = generate_scene(SceneKind::TwoSegmentLimb, &params(2000, vec![0.0, 45.0]), 2).unwrap();
        assert_eq!(s.frames[0].positions, s.cloud.positions);
        let q = RotationMat::from_axis_angle(Vec3::Z, 45f64.to_radians());
        let joint = Vec3::new(1.0, 0.0, 0.0);
        let mut checked = 0;
        for (i, p) in s.cloud.positions.iter().enumerate() {
            let got = s.frames[1].positions[i];
            if p.x < 1.0 {
                assert!((got - *p).norm() < 1e-12);
            } else if p.x > 1.0 + s.params.joint_band {
                let want = q.apply(*p - joint) + joint;
                assert!((got - want).norm() < 1e-12);
                let r = RotationMat::from_axis_angle(Vec3::Z, -45f64.to_radians());
                assert!(s.frames[1].rotations[i].angle_to(rot_to_quat(&r).unwrap()) < 1e-9);
                checked += 1;
            }
        }
        assert!(checked > 500);
    }

    #[test]
    fn determinism() {
        let p = params(1500, vec![20.0, 40.0]);
        for kind in SceneKind::ALL {
            let a = generate_scene(kind, &p, 7).unwrap();
            let b = generate_scene(kind, &p, 7).unwrap();
            assert_eq!(a.cloud, b.cloud, "{kind}");
            assert_eq!(a.frames, b.frames);
            assert_eq!(a.test_cameras, b.test_cameras);
            assert_eq!(a.frames.len(), 2);
            assert_eq!(a.frames[0].positions.len(), a.cloud.len());
        }
        let c = generate_scene(SceneKind::TwoSegmentLimb, &p, 8).unwrap();
        assert_ne!(c.cloud.positions, generate_scene(SceneKind::TwoSegmentLimb, &p, 7).unwrap().cloud.positions);
    }

    #[test]
    fn room_background_is_static() {
        let s = generate_scene(SceneKind::BoxRoomBackground, &params(1500, vec![30.0, 60.0]), 3).unwrap();
        let bg: Vec<usize> = (0..s.cloud.len()).filter(|&i| s.cloud.groups[i] == Group::Background).collect();
        assert!(bg.len() > 1000);
        for f in &s.frames {
            for &i in &bg {
                assert_eq!(f.positions[i], s.cloud.positions[i]);
            }
        }
        assert_eq!(s.character_indices().len(), 1500);
    }

    #[test]
    fn biped_frames_move_limbs_only_as_skinned() {
        let s = generate_scene(SceneKind::ArticulatedBiped, &params(3000, vec![0.0, 40.0]), 4).unwrap();
        assert_eq!(s.cloud.len(), 3000);
        for (p, q) in s.cloud.positions.iter().zip(&s.frames[0].positions) {
            assert!((*p - *q).norm() < 1e-12);
        }
        let moved = s.cloud.positions.iter().zip(&s.frames[1].positions).filter(|(p, q)| (**p - **q).norm() > 0.05).count();
        assert!(moved > 500, "{moved}");
        assert!(s.frames[1].rotations.iter().all(|q| (q.norm() - 1.0).abs() < 1e-9));
    }

    #[test]
    fn keypoints_subset() {
        let s = generate_scene(SceneKind::TwoSegmentLimb, &params(1000, vec![10.0]), 5).unwrap();
        let k = s.keypoint_indices(300, 9);
        assert_eq!(k.len(), 300);
        assert!(k.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(k, s.keypoint_indices(300, 9));
        assert_eq!(s.keypoint_indices(5000, 9).len(), 1000);
        let f = s.keypoint_frame(0, &k);
        assert_eq!(f.canonical[3], s.cloud.positions[k[3]]);
    }

    #[test]
    fn textured_sphere_is_view_dependent() {
        let s = generate_scene(SceneKind::TexturedSphere, &params(2000, vec![180.0]), 6).unwrap();
        assert_eq!(s.cloud.sh_degree(), 2);
        let idx = s.cloud.build_index().unwrap();
        let x = s.cloud.positions[100];
        let a = eval_radiance(&s.cloud, &idx, x, UnitDir::new(-x).unwrap());
        let b = eval_radiance(&s.cloud, &idx, x, UnitDir::new(x).unwrap());
        assert!((a.rgb - b.rgb).max_abs() > 0.1);
    }

    #[test]
    fn circle_cameras() {
        let rig = CameraRig::new(32, 40.0, 0.1, 10.0);
        let one = camera_path(PathKind::HorizontalCircle, 1, 3.0, Vec3::ZERO, &rig);
        assert!((one[0].position - Vec3::new(3.0, 0.0, 0.0)).norm() < 1e-12);
        assert!((one[0].forward() - Vec3::new(-1.0, 0.0, 0.0)).norm() < 1e-12);
        let target = Vec3::new(0.5, -1.0, 0.2);
        for kind in [PathKind::SphereOrbit, PathKind::HorizontalCircle] {
            for cam in camera_path(kind, 12, 2.5, target, &rig) {
                assert!((cam.position.distance(target) - 2.5).abs() < 1e-9);
                let (u, v) = cam.project(target).unwrap();
                assert!((u - cam.cx).abs() < 1e-9 && (v - cam.cy).abs() < 1e-9);
                if kind == PathKind::HorizontalCircle {
                    assert!((cam.position.z - target.z).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn bad_params() {
        let mut p = SceneParams::default();
        p.n_points = 3;
        assert!(matches!(generate_scene(SceneKind::Sphere, &p, 0), Err(SceneError::BadParams(_))));
        let p = SceneParams { joint_band: 0.0, ..Default::default() };
        assert!(generate_scene(SceneKind::TwoSegmentLimb, &p, 0).is_err());
        assert!("cube".parse::<SceneKind>().is_err());
        assert_eq!("articulated_biped".parse::<SceneKind>().unwrap(), SceneKind::ArticulatedBiped);
    }
}
