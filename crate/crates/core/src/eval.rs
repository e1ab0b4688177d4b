//! Masked PSNR scoring and the bending / keypoint-count ablation.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::bending::DeformedScene;
use crate::deform::{apply_deformation, estimate_rotation_field, fit_deformation, DeformError, DeformationConfig};
use crate::image::{Image, ImageError, Mask};
use crate::points::{bounding_box, Group, PointsError};
use crate::render::{project_bbox_mask, render, Camera, RenderError, RenderOptions};
use crate::scene::{SceneError, SyntheticScene};

/// Reported in place of infinite PSNR (identical images) and of anything
/// above it.
pub const PSNR_CAP_DB: f64 = 99.0;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("mask selects no pixels")]
    EmptyMask,
    #[error("dimensions {0}x{1} do not match {2}x{3}")]
    DimMismatch(usize, usize, usize, usize),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed {kind}: {message}")]
    Format { kind: &'static str, message: String },
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Deform(#[from] DeformError),
    #[error(transparent)]
    Points(#[from] PointsError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Image(#[from] ImageError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Psnr {
    pub db: f64,
    /// True when the error was zero or the value exceeded the cap.
    pub capped: bool,
    pub masked_pixels: usize,
}

impl Psnr {
    /// PSNR with peak 1 from a sum of squared errors over `pixels` RGB pixels.
    pub fn from_sse(sse: f64, pixels: usize) -> Result<Psnr, EvalError> {
        if pixels == 0 {
            return Err(EvalError::EmptyMask);
        }
        let mse = sse / (3 * pixels) as f64;
        let db = -10.0 * mse.log10();
        Ok(if db.is_finite() && db <= PSNR_CAP_DB {
            Psnr { db, capped: false, masked_pixels: pixels }
        } else {
            Psnr { db: PSNR_CAP_DB, capped: true, masked_pixels: pixels }
        })
    }
}

/// Sum of squared channel errors over masked pixels, and the pixel count.
pub fn masked_sse(a: &Image, b: &Image, mask: &Mask) -> Result<(f64, usize), EvalError> {
    for (w, h) in [(b.width, b.height), (mask.width, mask.height)] {
        if (w, h) != (a.width, a.height) {
            return Err(EvalError::DimMismatch(a.width, a.height, w, h));
        }
    }
    let mut sse = 0.0;
    let mut n = 0;
    for (p, &m) in mask.data.iter().enumerate() {
        if m {
            n += 1;
            for c in 0..3 {
                let d = a.data[3 * p + c] - b.data[3 * p + c];
                sse += d * d;
            }
        }
    }
    Ok((sse, n))
}

pub fn masked_psnr(rendered: &Image, truth: &Image, mask: &Mask) -> Result<Psnr, EvalError> {
    let (sse, n) = masked_sse(rendered, truth, mask)?;
    Psnr::from_sse(sse, n)
}

/// PSNR pooled over several views: squared errors and pixel counts are
/// summed before taking the ratio.
pub fn pooled_psnr(rendered: &[Image], truth: &[Image], masks: &[Mask]) -> Result<Psnr, EvalError> {
    if rendered.len() != truth.len() || truth.len() != masks.len() {
        return Err(EvalError::Format {
            kind: "view set",
            message: format!("{} renders, {} references, {} masks", rendered.len(), truth.len(), masks.len()),
        });
    }
    let mut sse = 0.0;
    let mut n = 0;
    for ((a, b), m) in rendered.iter().zip(truth).zip(masks) {
        let (s, k) = masked_sse(a, b, m)?;
        sse += s;
        n += k;
    }
    Psnr::from_sse(sse, n)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub frame: usize,
    pub variant: String,
    pub n_kp: usize,
    pub bending: bool,
    pub psnr: Psnr,
}

pub fn variant_label(n_kp: usize, bending: bool) -> String {
    format!("kp{n_kp}_{}", if bending { "bend" } else { "nobend" })
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    pub fn push(&mut self, frame: usize, n_kp: usize, bending: bool, psnr: Psnr) {
        self.rows.push(EvalRow { frame, variant: variant_label(n_kp, bending), n_kp, bending, psnr });
    }

    /// Distinct `(n_kp, bending)` pairs in first-seen order.
    pub fn variants(&self) -> Vec<(usize, bool)> {
        let mut out: Vec<(usize, bool)> = Vec::new();
        for r in &self.rows {
            if !out.contains(&(r.n_kp, r.bending)) {
                out.push((r.n_kp, r.bending));
            }
        }
        out
    }

    /// Mean PSNR over frames of one variant, with the total masked pixels.
    pub fn mean(&self, n_kp: usize, bending: bool) -> Option<(f64, usize)> {
        let rows: Vec<&EvalRow> = self.rows.iter().filter(|r| r.n_kp == n_kp && r.bending == bending).collect();
        if rows.is_empty() {
            return None;
        }
        let db = rows.iter().map(|r| r.psnr.db).sum::<f64>() / rows.len() as f64;
        Some((db, rows.iter().map(|r| r.psnr.masked_pixels).sum()))
    }

    /// Per-frame rows followed by one `mean` row per variant.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("frame,variant,n_kp,bending,psnr_db,masked_pixels\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{},{},{:.4},{}", r.frame, r.variant, r.n_kp, r.bending, r.psnr.db, r.psnr.masked_pixels);
        }
        for (n_kp, bending) in self.variants() {
            let (db, px) = self.mean(n_kp, bending).expect("variant has rows");
            let _ = writeln!(s, "mean,{},{n_kp},{bending},{db:.4},{px}", variant_label(n_kp, bending));
        }
        s
    }

    pub fn save_csv(&self, path: &Path) -> Result<(), EvalError> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn table(&self) -> String {
        let mut s = format!("{:>6}  {:<16} {:>6} {:>8} {:>10} {:>8}\n", "frame", "variant", "n_kp", "bending", "psnr_db", "pixels");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:>6}  {:<16} {:>6} {:>8} {:>10.3}{} {:>7}",
                r.frame,
                r.variant,
                r.n_kp,
                if r.bending { "on" } else { "off" },
                r.psnr.db,
                if r.psnr.capped { "*" } else { " " },
                r.psnr.masked_pixels
            );
        }
        for (n_kp, bending) in self.variants() {
            let (db, px) = self.mean(n_kp, bending).expect("variant has rows");
            let _ = writeln!(
                s,
                "{:>6}  {:<16} {:>6} {:>8} {:>10.3}  {:>7}",
                "mean",
                variant_label(n_kp, bending),
                n_kp,
                if bending { "on" } else { "off" },
                db,
                px
            );
        }
        if self.rows.iter().any(|r| r.psnr.capped) {
            let _ = writeln!(s, "* capped at {PSNR_CAP_DB} dB");
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationConfig {
    pub n_kp: Vec<usize>,
    pub bending: Vec<bool>,
    pub deform: DeformationConfig,
    pub k_rot: usize,
    pub render: RenderOptions,
    pub keypoint_seed: u64,
    /// Frame indices to evaluate; all frames when `None`.
    pub frames: Option<Vec<usize>>,
}

impl Default for AblationConfig {
    fn default() -> Self {
        AblationConfig {
            n_kp: vec![20, 200, 2000],
            bending: vec![true, false],
            deform: DeformationConfig::default(),
            k_rot: crate::deform::DEFAULT_K_ROT,
            render: RenderOptions::default(),
            keypoint_seed: 0,
            frames: None,
        }
    }
}

/// Character bounding-box masks of a deformed configuration.
pub fn character_masks(
    cloud: &crate::points::NeuralPointCloud,
    cameras: &[Camera],
) -> Result<Vec<Mask>, EvalError> {
    let bbox = bounding_box(cloud, Group::Character)?;
    cameras.iter().map(|c| Ok(project_bbox_mask(c, bbox)?)).collect()
}

fn render_views(scene: &DeformedScene, cameras: &[Camera], opts: &RenderOptions) -> Vec<Image> {
    cameras.iter().enumerate().map(|(i, c)| render(scene, c, opts, i).image).collect()
}

/// Scores every `(n_kp, bending)` variant on every selected frame against
/// the ground truth rendered from the analytic deformation and rotations.
/// Views are the scene's test cameras; one row per variant per frame.
pub fn run_ablation(scene: &SyntheticScene, config: &AblationConfig) -> Result<EvalReport, EvalError> {
    let canonical = &scene.cloud;
    let cameras = &scene.test_cameras;
    let frames: Vec<usize> = config.frames.clone().unwrap_or_else(|| (0..scene.frames.len()).collect());
    let mut report = EvalReport::default();
    for &f in &frames {
        if f >= scene.frames.len() {
            return Err(SceneError::BadParams(format!("frame {f} out of range ({} frames)", scene.frames.len())).into());
        }
        let gt_field = scene.frame_rotation_field(f, config.k_rot)?;
        let gt_scene = DeformedScene::new(canonical, &gt_field, &gt_field.index, true)?;
        let truth = render_views(&gt_scene, cameras, &config.render);
        let masks = character_masks(&scene.frame_cloud(f), cameras)?;
        for &n_kp in &config.n_kp {
            let kp = scene.keypoint_indices(n_kp, config.keypoint_seed);
            let (field, _) = fit_deformation(&scene.keypoint_frame(f, &kp), &config.deform, None)?;
            let deformed = apply_deformation(&field, canonical);
            let rotations = estimate_rotation_field(canonical, &deformed, config.k_rot)?;
            for &bending in &config.bending {
                let pred = DeformedScene::new(canonical, &rotations, &rotations.index, bending)?;
                let images = render_views(&pred, cameras, &config.render);
                report.push(scene.frames[f].t, n_kp, bending, pooled_psnr(&images, &truth, &masks)?);
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{generate_scene, SceneKind, SceneParams};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noisy(img: &Image, amp: f64, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = img.clone();
        out.data.iter_mut().for_each(|v| *v += amp * rng.random_range(-1.0..1.0));
        out
    }

    fn gray(w: usize, h: usize, v: f64) -> Image {
        Image { width: w, height: h, data: vec![v; w * h * 3] }
    }

    #[test]
    fn identical_is_capped() {
        let a = gray(4, 3, 0.3);
        let p = masked_psnr(&a, &a, &Mask::full(4, 3)).unwrap();
        assert!(p.capped);
        assert_eq!(p.db, PSNR_CAP_DB);
        assert_eq!(p.masked_pixels, 12);
    }

    #[test]
    fn uniform_error_gives_twenty_db() {
        let p = masked_psnr(&gray(5, 5, 0.5), &gray(5, 5, 0.6), &Mask::full(5, 5)).unwrap();
        assert!((p.db - 20.0).abs() < 1e-9, "{}", p.db);
        assert!(!p.capped);
    }

    #[test]
    fn mask_hides_outside_error() {
        let a = gray(4, 4, 0.2);
        let mut b = a.clone();
        b.set_pixel(3, 3, [1.0, 0.0, 0.0]);
        let mut m = Mask::full(4, 4);
        m.set(3, 3, false);
        assert!(masked_psnr(&a, &b, &m).unwrap().capped);
        assert!(!masked_psnr(&a, &b, &Mask::full(4, 4)).unwrap().capped);
    }

    #[test]
    fn errors() {
        let a = gray(4, 4, 0.2);
        assert!(matches!(masked_psnr(&a, &a, &Mask::new(4, 4)), Err(EvalError::EmptyMask)));
        assert!(matches!(masked_psnr(&a, &gray(4, 3, 0.2), &Mask::full(4, 4)), Err(EvalError::DimMismatch(4, 4, 4, 3))));
        assert!(matches!(masked_psnr(&a, &a, &Mask::full(3, 4)), Err(EvalError::DimMismatch(..))));
    }

    #[test]
    fn symmetric_and_monotone_in_noise() {
        let base = gray(16, 16, 0.5);
        let m = Mask::full(16, 16);
        let mut last = f64::INFINITY;
        for (i, amp) in [0.01, 0.02, 0.05, 0.1, 0.2].into_iter().enumerate() {
            let n = noisy(&base, amp, 3);
            let ab = masked_psnr(&base, &n, &m).unwrap();
            let ba = masked_psnr(&n, &base, &m).unwrap();
            assert_eq!(ab, ba);
            assert!(ab.db < last, "step {i}");
            last = ab.db;
        }
    }

    #[test]
    fn pooled_matches_single_view() {
        let a = gray(3, 3, 0.1);
        let b = noisy(&a, 0.05, 1);
        let m = Mask::full(3, 3);
        let one = masked_psnr(&a, &b, &m).unwrap();
        let two = pooled_psnr(&[a.clone(), a.clone()], &[b.clone(), b.clone()], &[m.clone(), m.clone()]).unwrap();
        assert!((one.db - two.db).abs() < 1e-12);
        assert_eq!(two.masked_pixels, 18);
    }

    #[test]
    fn report_csv_layout() {
        let mut r = EvalReport::default();
        let p = Psnr { db: 30.0, capped: false, masked_pixels: 10 };
        r.push(1, 20, true, p);
        r.push(2, 20, true, Psnr { db: 32.0, ..p });
        r.push(1, 20, false, Psnr { db: 25.0, ..p });
        let csv = r.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "frame,variant,n_kp,bending,psnr_db,masked_pixels");
        assert_eq!(lines[1], "1,kp20_bend,20,true,30.0000,10");
        assert_eq!(lines[4], "mean,kp20_bend,20,true,31.0000,20");
        assert_eq!(lines.len(), 6);
        assert!(r.table().contains("kp20_nobend"));
    }

    #[test]
    fn identity_motion_is_capped() {
        let params = SceneParams {
            n_points: 600,
            angles_deg: vec![0.0],
            image_size: 24,
            n_test_views: 2,
            ..Default::default()
        };
        let scene = generate_scene(SceneKind::TwoSegmentLimb, &params, 4).unwrap();
        let cfg = AblationConfig {
            n_kp: vec![50],
            deform: DeformationConfig { hidden: vec![32, 32], iters: 20, ..Default::default() },
            render: RenderOptions { n_samples: 32, ..Default::default() },
            ..Default::default()
        };
        let report = run_ablation(&scene, &cfg).unwrap();
        assert_eq!(report.rows.len(), 2);
        assert!(report.rows.iter().all(|r| r.psnr.capped), "{}", report.table());
    }
}
