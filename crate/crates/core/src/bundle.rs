//! Scene bundles on disk.
//!
//! ```text
//! <dir>/manifest.json         seed, kind, params, diagonal, keypoints, render settings
//! <dir>/cloud.ply             canonical ground-truth cloud
//! <dir>/keypoints.json        keypoint motion, one entry per frame
//! <dir>/cameras.json          {"train": [...], "test": [...]}
//! <dir>/train/view_NNN.ppm    rest-pose renders from the training cameras
//! <dir>/gt/frame_TTT_view_NNN.ppm   deformed ground truth from the test cameras
//! <dir>/gt/frame_TTT_view_NNN.pgm   character bounding-box mask
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bending::DeformedScene;
use crate::deform::{read_json, write_json, MotionSequence};
use crate::eval::{character_masks, EvalError};
use crate::image::{Image, Mask};
use crate::points::NeuralPointCloud;
use crate::ply::{load_cloud, save_cloud};
use crate::render::{render, Camera, CanonicalScene, RenderOptions};
use crate::scene::{SceneKind, SceneParams, SyntheticScene};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub kind: SceneKind,
    pub seed: u64,
    pub params: SceneParams,
    pub diag: f64,
    pub keypoint_seed: u64,
    pub keypoints: Vec<usize>,
    /// Frame times, in order.
    pub frames: Vec<usize>,
    pub k_rot: usize,
    pub n_samples: usize,
    pub render_seed: u64,
    pub background: [f64; 3],
}

impl Manifest {
    pub fn render_options(&self) -> RenderOptions {
        RenderOptions { n_samples: self.n_samples, seed: self.render_seed, background: self.background.into() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraSet {
    pub train: Vec<Camera>,
    pub test: Vec<Camera>,
}

impl CameraSet {
    pub fn save(&self, path: &Path) -> Result<(), EvalError> {
        write_json(path, self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<CameraSet, EvalError> {
        Ok(read_json(path, "camera set")?)
    }
}

pub fn manifest_path(dir: &Path) -> PathBuf {
    dir.join("manifest.json")
}

pub fn cloud_path(dir: &Path) -> PathBuf {
    dir.join("cloud.ply")
}

pub fn keypoints_path(dir: &Path) -> PathBuf {
    dir.join("keypoints.json")
}

pub fn cameras_path(dir: &Path) -> PathBuf {
    dir.join("cameras.json")
}

pub fn train_view_path(dir: &Path, view: usize) -> PathBuf {
    dir.join("train").join(format!("view_{view:03}.ppm"))
}

pub fn gt_view_path(dir: &Path, t: usize, view: usize) -> PathBuf {
    dir.join("gt").join(format!("frame_{t:03}_view_{view:03}.ppm"))
}

pub fn gt_mask_path(dir: &Path, t: usize, view: usize) -> PathBuf {
    dir.join("gt").join(format!("frame_{t:03}_view_{view:03}.pgm"))
}

/// Writes `scene` as a bundle. Ground-truth frames are rendered from the
/// analytic deformation with analytic rotations and bending on.
pub fn write_bundle(
    scene: &SyntheticScene,
    dir: &Path,
    n_kp: usize,
    keypoint_seed: u64,
    k_rot: usize,
    opts: &RenderOptions,
) -> Result<Manifest, EvalError> {
    fs::create_dir_all(dir.join("train"))?;
    fs::create_dir_all(dir.join("gt"))?;
    let keypoints = scene.keypoint_indices(n_kp, keypoint_seed);
    let manifest = Manifest {
        kind: scene.kind,
        seed: scene.seed,
        params: scene.params.clone(),
        diag: scene.diag,
        keypoint_seed,
        keypoints: keypoints.clone(),
        frames: scene.frames.iter().map(|f| f.t).collect(),
        k_rot,
        n_samples: opts.n_samples,
        render_seed: opts.seed,
        background: opts.background.to_array(),
    };
    write_json(&manifest_path(dir), &manifest)?;
    save_cloud(&scene.cloud, &cloud_path(dir))?;
    scene.motion(&keypoints).save(&keypoints_path(dir))?;
    CameraSet { train: scene.train_cameras.clone(), test: scene.test_cameras.clone() }.save(&cameras_path(dir))?;

    let index = scene.cloud.build_index()?;
    let rest = CanonicalScene::new(&scene.cloud, &index);
    for (i, cam) in scene.train_cameras.iter().enumerate() {
        render(&rest, cam, opts, i).image.save_ppm(&train_view_path(dir, i))?;
    }
    for (f, frame) in scene.frames.iter().enumerate() {
        let field = scene.frame_rotation_field(f, k_rot)?;
        let gt = DeformedScene::new(&scene.cloud, &field, &field.index, true)?;
        let masks = character_masks(&scene.frame_cloud(f), &scene.test_cameras)?;
        for (i, (cam, mask)) in scene.test_cameras.iter().zip(&masks).enumerate() {
            render(&gt, cam, opts, i).image.save_ppm(&gt_view_path(dir, frame.t, i))?;
            mask.save_pgm(&gt_mask_path(dir, frame.t, i))?;
        }
    }
    Ok(manifest)
}

/// A bundle's metadata and small files, loaded eagerly. Images are read
/// on demand.
#[derive(Debug, Clone)]
pub struct Bundle {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub cloud: NeuralPointCloud,
    pub motion: MotionSequence,
    pub cameras: CameraSet,
}

impl Bundle {
    pub fn load(dir: &Path) -> Result<Bundle, EvalError> {
        let manifest: Manifest = read_json(&manifest_path(dir), "manifest")?;
        let cloud = load_cloud(&cloud_path(dir))?;
        let motion = MotionSequence::load(&keypoints_path(dir))?;
        let cameras = CameraSet::load(&cameras_path(dir))?;
        if motion.frames.len() != manifest.frames.len() {
            return Err(EvalError::Format {
                kind: "bundle",
                message: format!("{} keypoint frames, manifest lists {}", motion.frames.len(), manifest.frames.len()),
            });
        }
        Ok(Bundle { dir: dir.to_path_buf(), manifest, cloud, motion, cameras })
    }

    pub fn train_views(&self) -> Result<Vec<(Camera, Image)>, EvalError> {
        self.cameras
            .train
            .iter()
            .enumerate()
            .map(|(i, c)| Ok((c.clone(), Image::load_ppm(&train_view_path(&self.dir, i))?)))
            .collect()
    }

    /// Ground-truth images and masks of frame time `t`, one per test camera.
    pub fn gt_views(&self, t: usize) -> Result<(Vec<Image>, Vec<Mask>), EvalError> {
        let mut images = Vec::new();
        let mut masks = Vec::new();
        for i in 0..self.cameras.test.len() {
            images.push(Image::load_ppm(&gt_view_path(&self.dir, t, i))?);
            masks.push(Mask::load_pgm(&gt_mask_path(&self.dir, t, i))?);
        }
        Ok((images, masks))
    }
}
