//! Keypoint-supervised deformation fields and per-point rotation fields.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{kabsch_rotation, rot_to_quat, GeomError, UnitQuat, Vec3};
use crate::mlp::{Mlp, MlpAdam};
use crate::optim::AdamConfig;
use crate::points::{Group, NeuralPointCloud, PointsError};
use crate::spatial::{KdTree, DEFAULT_LEAF_SIZE};

pub const DEFAULT_OCTAVES: usize = 6;
pub const DEFAULT_K_ROT: usize = 8;
pub const DEFAULT_DEFORM_ITERS: usize = 2000;

#[derive(Debug, Error)]
pub enum DeformError {
    #[error("need at least 4 keypoints, got {0}")]
    TooFewKeypoints(usize),
    #[error("keypoint lists differ in length: {0} canonical vs {1} target")]
    LengthMismatch(usize, usize),
    #[error("fit diverged at iteration {0} (non-finite loss)")]
    DivergedFit(usize),
    #[error("point counts differ: {0} vs {1}")]
    IndexMismatch(usize, usize),
    #[error("k_rot must be at least 3, got {0}")]
    BadK(usize),
    #[error("invalid deformation config: {0}")]
    BadConfig(String),
    #[error("malformed {kind}: {message}")]
    Format { kind: &'static str, message: String },
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Points(#[from] PointsError),
}

/// Corresponding keypoints in the canonical and one target configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeypointFrame {
    pub t: usize,
    pub canonical: Vec<Vec3>,
    pub target: Vec<Vec3>,
}

impl KeypointFrame {
    pub fn validate(&self) -> Result<(), DeformError> {
        if self.canonical.len() != self.target.len() {
            return Err(DeformError::LengthMismatch(self.canonical.len(), self.target.len()));
        }
        if self.canonical.len() < 4 {
            return Err(DeformError::TooFewKeypoints(self.canonical.len()));
        }
        if self.canonical.iter().chain(&self.target).any(|p| !p.is_finite()) {
            return Err(DeformError::Format { kind: "keypoints", message: "non-finite coordinate".into() });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotionSequence {
    pub frames: Vec<KeypointFrame>,
}

impl MotionSequence {
    pub fn save(&self, path: &Path) -> Result<(), DeformError> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<MotionSequence, DeformError> {
        let seq: MotionSequence = read_json(path, "keypoint file")?;
        for f in &seq.frames {
            f.validate()?;
        }
        Ok(seq)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeformationConfig {
    pub octaves: usize,
    pub hidden: Vec<usize>,
    pub lr: f64,
    /// Learning rate reached at the last iteration by cosine decay from `lr`.
    pub lr_final: f64,
    pub iters: usize,
    /// Weight of the optional finite-difference smoothness penalty; 0 disables it.
    pub smoothness: f64,
    pub smoothness_pairs: usize,
    /// Pair offset in normalized coordinates.
    pub smoothness_step: f64,
    /// Iterations over which the encoding octaves are faded in, coarse
    /// to fine; 0 enables all octaves from the start.
    pub anneal_iters: usize,
    pub seed: u64,
}

impl Default for DeformationConfig {
    fn default() -> Self {
        DeformationConfig {
            octaves: DEFAULT_OCTAVES,
            hidden: vec![128; 4],
            lr: 1e-3,
            lr_final: 1e-5,
            iters: DEFAULT_DEFORM_ITERS,
            smoothness: 0.0,
            smoothness_pairs: 64,
            smoothness_step: 0.02,
            anneal_iters: 0,
            seed: 0,
        }
    }
}

impl DeformationConfig {
    pub fn validate(&self) -> Result<(), DeformError> {
        let bad = |m: &str| Err(DeformError::BadConfig(m.to_string()));
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden layers must be nonempty with positive widths");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if !(self.lr_final > 0.0 && self.lr_final <= self.lr) {
            return bad("lr_final must be in (0, lr]");
        }
        if !(self.smoothness >= 0.0) || !(self.smoothness_step > 0.0) {
            return bad("smoothness weight must be >= 0 and step > 0");
        }
        if self.octaves > 20 {
            return bad("at most 20 octaves");
        }
        Ok(())
    }
}

/// Residual coordinate network: `x -> x + scale * mlp(PE((x - center) / scale))`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeformationField {
    pub octaves: usize,
    pub center: Vec3,
    pub scale: f64,
    pub mlp: Mlp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    /// Mean squared keypoint residual (scene units squared) before each update.
    pub losses: Vec<f64>,
    /// RMS keypoint residual of the returned field.
    pub keypoint_rms: f64,
}

pub fn encoded_dim(octaves: usize) -> usize {
    3 + 6 * octaves
}

/// `[u, sin(2^k pi u), cos(2^k pi u)]` for k in `0..octaves`.
fn encode_into(u: Vec3, octaves: usize, out: &mut [f64]) {
    out[..3].copy_from_slice(&u.to_array());
    let mut freq = std::f64::consts::PI;
    for k in 0..octaves {
        let base = 3 + 6 * k;
        for a in 0..3 {
            let (s, c) = (freq * u[a]).sin_cos();
            out[base + a] = s;
            out[base + 3 + a] = c;
        }
        freq *= 2.0;
    }
}

impl DeformationField {
    pub fn identity(config: &DeformationConfig, center: Vec3, scale: f64) -> DeformationField {
        let mut sizes = vec![encoded_dim(config.octaves)];
        sizes.extend(&config.hidden);
        sizes.push(3);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        DeformationField { octaves: config.octaves, center, scale, mlp: Mlp::new(&sizes, &mut rng) }
    }

    fn encode(&self, points: &[Vec3]) -> Array2<f64> {
        let dim = encoded_dim(self.octaves);
        let mut x = Array2::zeros((points.len(), dim));
        for (row, p) in x.outer_iter_mut().zip(points) {
            let u = (*p - self.center) / self.scale;
            encode_into(u, self.octaves, row.into_slice().expect("row is contiguous"));
        }
        x
    }

    /// Displacements `g(x)` for each point.
    pub fn displacements(&self, points: &[Vec3]) -> Vec<Vec3> {
        points
            .par_chunks(4096)
            .flat_map_iter(|chunk| {
                let out = self.mlp.forward(self.encode(chunk).view());
                out.outer_iter()
                    .map(|r| Vec3::new(r[0], r[1], r[2]) * self.scale)
                    .collect::<Vec<_>>()
            })
            .collect()
    }

    pub fn apply(&self, points: &[Vec3]) -> Vec<Vec3> {
        points.iter().zip(self.displacements(points)).map(|(p, d)| *p + d).collect()
    }

    pub fn save(&self, path: &Path) -> Result<(), DeformError> {
        write_json(path, &self.to_json())
    }

    pub fn load(path: &Path) -> Result<DeformationField, DeformError> {
        DeformationField::from_json(read_json(path, "deformation field")?)
    }

    pub fn to_json(&self) -> FieldJson {
        FieldJson {
            architecture: Architecture { octaves: self.octaves, sizes: self.mlp.sizes(), activation: "relu".into() },
            center: self.center,
            scale: self.scale,
            params: self.mlp.to_flat(),
        }
    }

    pub fn from_json(j: FieldJson) -> Result<DeformationField, DeformError> {
        let err = |m: String| DeformError::Format { kind: "deformation field", message: m };
        let a = &j.architecture;
        if a.activation != "relu" {
            return Err(err(format!("unsupported activation '{}'", a.activation)));
        }
        if a.sizes.len() < 2 || a.sizes[0] != encoded_dim(a.octaves) || a.sizes[a.sizes.len() - 1] != 3 {
            return Err(err(format!("layer sizes {:?} do not fit {} octaves and 3 outputs", a.sizes, a.octaves)));
        }
        if !(j.scale > 0.0) {
            return Err(err("scale must be positive".into()));
        }
        let mlp = Mlp::from_flat(&a.sizes, &j.params)
            .ok_or_else(|| err(format!("{} parameters do not match layer sizes {:?}", j.params.len(), a.sizes)))?;
        Ok(DeformationField { octaves: a.octaves, center: j.center, scale: j.scale, mlp })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub octaves: usize,
    pub sizes: Vec<usize>,
    pub activation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldJson {
    pub architecture: Architecture,
    pub center: Vec3,
    pub scale: f64,
    pub params: Vec<f64>,
}

/// Center and half-extent of the cube spanned by `points`.
fn normalization(points: &[Vec3]) -> (Vec3, f64) {
    let (lo, hi) = points
        .iter()
        .fold((points[0], points[0]), |(lo, hi), p| (lo.component_min(*p), hi.component_max(*p)));
    let half = (hi - lo).max_abs() * 0.5;
    ((lo + hi) * 0.5, if half > 0.0 { half } else { 1.0 })
}

/// Fits a deformation field to one keypoint frame. With `init` the fit
/// starts from that field's weights and normalization.
pub fn fit_deformation(
    frame: &KeypointFrame,
    config: &DeformationConfig,
    init: Option<&DeformationField>,
) -> Result<(DeformationField, FitReport), DeformError> {
    frame.validate()?;
    config.validate()?;
    let mut field = match init {
        Some(f) => f.clone(),
        None => {
            let (center, scale) = normalization(&frame.canonical);
            DeformationField::identity(config, center, scale)
        }
    };
    let n = frame.canonical.len();
    let scale = field.scale;
    let targets: Vec<Vec3> = frame.target.iter().zip(&frame.canonical).map(|(t, c)| *t - *c).collect();
    let x_kp = field.encode(&frame.canonical);
    let mut opt = MlpAdam::new(&field.mlp, AdamConfig::with_lr(config.lr));
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5EED_0F_D1F7);
    let (lo, hi) = frame
        .canonical
        .iter()
        .fold((frame.canonical[0], frame.canonical[0]), |(lo, hi), p| (lo.component_min(*p), hi.component_max(*p)));
    let m = if config.smoothness > 0.0 { config.smoothness_pairs } else { 0 };
    let mut losses = Vec::with_capacity(config.iters);

    for it in 0..config.iters {
        let window = octave_window(field.octaves, it, config.anneal_iters);
        let input = if m == 0 {
            x_kp.clone()
        } else {
            let mut pts = Vec::with_capacity(2 * m);
            let step = config.smoothness_step * scale;
            for _ in 0..m {
                let a = Vec3::new(
                    rng.random_range(lo.x..=hi.x),
                    rng.random_range(lo.y..=hi.y),
                    rng.random_range(lo.z..=hi.z),
                );
                let d = random_unit(&mut rng);
                pts.push(a);
                pts.push(a + d * step);
            }
            let extra = field.encode(&pts);
            ndarray::concatenate(ndarray::Axis(0), &[x_kp.view(), extra.view()]).expect("same width")
        };
        let input = match &window {
            Some(w) => apply_window(input, w),
            None => input,
        };
        let smooth_w = config.smoothness;
        let (loss, grads) = field.mlp.loss_and_grads(input.view(), |out: &Array2<f64>| {
            keypoint_loss(out.view(), &targets, scale, n, m, smooth_w, config.smoothness_step)
        });
        if !loss.is_finite() {
            return Err(DeformError::DivergedFit(it));
        }
        losses.push(loss);
        let progress = it as f64 / config.iters.max(2).saturating_sub(1) as f64;
        let lr = config.lr_final + 0.5 * (config.lr - config.lr_final) * (1.0 + (std::f64::consts::PI * progress).cos());
        opt.step(&mut field.mlp, &grads, lr);
    }

    let disp = field.displacements(&frame.canonical);
    let sq: f64 = disp.iter().zip(&targets).map(|(d, t)| (*d - *t).norm_squared()).sum();
    let keypoint_rms = (sq / n as f64).sqrt();
    if !keypoint_rms.is_finite() {
        return Err(DeformError::DivergedFit(config.iters));
    }
    Ok((field, FitReport { losses, keypoint_rms }))
}

/// Per-octave encoding weights at iteration `it`, `None` once all are
/// fully on: `(1 - cos(pi * clamp(alpha - k, 0, 1))) / 2` with `alpha`
/// rising linearly from 0 to `octaves` over `anneal` iterations.
fn octave_window(octaves: usize, it: usize, anneal: usize) -> Option<Vec<f64>> {
    if anneal == 0 || it >= anneal {
        return None;
    }
    let alpha = octaves as f64 * it as f64 / anneal as f64;
    Some(
        (0..octaves)
            .map(|k| (1.0 - (std::f64::consts::PI * (alpha - k as f64).clamp(0.0, 1.0)).cos()) * 0.5)
            .collect(),
    )
}

fn apply_window(mut x: Array2<f64>, window: &[f64]) -> Array2<f64> {
    for mut row in x.outer_iter_mut() {
        for (k, w) in window.iter().enumerate() {
            row.slice_mut(ndarray::s![3 + 6 * k..9 + 6 * k]).mapv_inplace(|v| v * w);
        }
    }
    x
}

/// Loss and output gradient. Rows `0..n` are keypoints; then `m` pairs of
/// smoothness samples. The reported loss is the keypoint term only.
fn keypoint_loss(
    out: ArrayView2<f64>,
    targets: &[Vec3],
    scale: f64,
    n: usize,
    m: usize,
    smooth_w: f64,
    step: f64,
) -> (f64, Array2<f64>) {
    let mut grad = Array2::zeros(out.raw_dim());
    let mut loss = 0.0;
    let inv_n = 1.0 / n as f64;
    for (i, t) in targets.iter().enumerate() {
        for a in 0..3 {
            let r = scale * out[[i, a]] - t[a];
            loss += r * r * inv_n;
            grad[[i, a]] = 2.0 * r * scale * inv_n;
        }
    }
    if m > 0 {
        // penalty on the normalized-space difference quotient
        let coef = 2.0 * smooth_w / (m as f64 * step * step);
        for j in 0..m {
            let (ra, rb) = (n + 2 * j, n + 2 * j + 1);
            for a in 0..3 {
                let d = out[[ra, a]] - out[[rb, a]];
                grad[[ra, a]] += coef * d;
                grad[[rb, a]] -= coef * d;
            }
        }
    }
    (loss, grad)
}

fn random_unit(rng: &mut impl Rng) -> Vec3 {
    loop {
        let v = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let n2 = v.norm_squared();
        if n2 > 1e-6 && n2 <= 1.0 {
            return v / n2.sqrt();
        }
    }
}

/// Moves character-labeled points by the field and leaves everything else,
/// including all radiance attributes, untouched.
pub fn apply_deformation(field: &DeformationField, cloud: &NeuralPointCloud) -> NeuralPointCloud {
    let idx: Vec<usize> = (0..cloud.len()).filter(|&i| cloud.groups[i] == Group::Character).collect();
    let mut out = cloud.clone();
    if idx.is_empty() {
        return out;
    }
    let pts: Vec<Vec3> = idx.iter().map(|&i| cloud.positions[i]).collect();
    for (&i, d) in idx.iter().zip(field.displacements(&pts)) {
        out.positions[i] = cloud.positions[i] + d;
    }
    out
}

/// One rotation per deformed point (mapping deformed-space directions to
/// canonical space) and an index over the deformed positions.
#[derive(Debug, Clone)]
pub struct RotationField {
    pub quats: Vec<UnitQuat>,
    pub index: KdTree,
    pub k_rot: usize,
    /// Queries with no deformed point within this distance are left alone.
    pub support_radius: f64,
    /// Points whose neighborhood was degenerate and fell back to identity.
    pub degenerate: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RotationFieldJson {
    k_rot: usize,
    support_radius: f64,
    degenerate: usize,
    positions: Vec<Vec3>,
    quats: Vec<UnitQuat>,
}

impl RotationField {
    pub fn from_parts(
        positions: Vec<Vec3>,
        quats: Vec<UnitQuat>,
        k_rot: usize,
        support_radius: f64,
    ) -> Result<RotationField, DeformError> {
        if positions.len() != quats.len() {
            return Err(DeformError::IndexMismatch(positions.len(), quats.len()));
        }
        if k_rot < 1 {
            return Err(DeformError::BadK(k_rot));
        }
        let index = KdTree::build(positions, DEFAULT_LEAF_SIZE).map_err(PointsError::from)?;
        Ok(RotationField { quats, index, k_rot, support_radius, degenerate: 0 })
    }

    pub fn len(&self) -> usize {
        self.quats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.quats.is_empty()
    }

    pub fn save(&self, path: &Path) -> Result<(), DeformError> {
        write_json(
            path,
            &RotationFieldJson {
                k_rot: self.k_rot,
                support_radius: self.support_radius,
                degenerate: self.degenerate,
                positions: self.index.points().to_vec(),
                quats: self.quats.clone(),
            },
        )
    }

    pub fn load(path: &Path) -> Result<RotationField, DeformError> {
        let j: RotationFieldJson = read_json(path, "rotation field")?;
        let mut f = RotationField::from_parts(j.positions, j.quats, j.k_rot, j.support_radius)?;
        f.degenerate = j.degenerate;
        Ok(f)
    }
}

/// Per-point Kabsch rotations between index-aligned clouds. Neighborhoods
/// are found in the deformed cloud and carried to the canonical one by
/// index.
pub fn estimate_rotation_field(
    canonical: &NeuralPointCloud,
    deformed: &NeuralPointCloud,
    k_rot: usize,
) -> Result<RotationField, DeformError> {
    if canonical.len() != deformed.len() {
        return Err(DeformError::IndexMismatch(canonical.len(), deformed.len()));
    }
    if k_rot < 3 {
        return Err(DeformError::BadK(k_rot));
    }
    let index = deformed.build_index()?;
    let k = k_rot.min(deformed.len());
    let (can, def) = (&canonical.positions, &deformed.positions);
    let results: Vec<Option<UnitQuat>> = (0..def.len())
        .into_par_iter()
        .map(|i| {
            let nbrs = index.knn(def[i], k).ok()?;
            let xs: Vec<Vec3> = nbrs.iter().map(|n| can[n.index]).collect();
            let xh: Vec<Vec3> = nbrs.iter().map(|n| def[n.index]).collect();
            match kabsch_rotation(can[i], &xs, def[i], &xh) {
                Ok(r) => rot_to_quat(&r).ok(),
                Err(GeomError::DegenerateCluster) => None,
                Err(_) => None,
            }
        })
        .collect();
    let degenerate = results.iter().filter(|r| r.is_none()).count();
    let quats = results.into_iter().map(|q| q.unwrap_or(UnitQuat::IDENTITY)).collect();
    Ok(RotationField { quats, index, k_rot, support_radius: deformed.r_agg, degenerate })
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), DeformError> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut w, value).map_err(|e| DeformError::Io(e.into()))?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path, kind: &'static str) -> Result<T, DeformError> {
    let r = BufReader::new(File::open(path)?);
    serde_json::from_reader(r).map_err(|e| {
        if e.is_io() {
            DeformError::Io(e.into())
        } else {
            DeformError::Format { kind, message: e.to_string() }
        }
    })
}
