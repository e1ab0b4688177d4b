use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use pointmorph::bending::DeformedScene;
use pointmorph::bundle::{write_bundle, Bundle};
use pointmorph::deform::{apply_deformation, estimate_rotation_field, fit_deformation, RotationField};
use pointmorph::eval::{pooled_psnr, variant_label, EvalReport};
use pointmorph::fit::fit_radiance;
use pointmorph::image::Image;
use pointmorph::ply::{load_cloud, save_cloud};
use pointmorph::points::{median_spacing, Group, NeuralPointCloud};
use pointmorph::render::render;
use pointmorph::scene::generate_scene;
use pointmorph::sh;

use crate::config::Config;
use crate::error::CliError;

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn frame_dir(out: &Path, t: usize) -> PathBuf {
    out.join("frames").join(format!("frame_{t:03}"))
}

pub fn render_path(out: &Path, variant: &str, t: usize, view: usize) -> PathBuf {
    out.join("renders").join(variant).join(format!("frame_{t:03}_view_{view:03}.ppm"))
}

fn loss_csv(losses: &[f64]) -> String {
    let mut s = String::from("iter,loss\n");
    for (i, l) in losses.iter().enumerate() {
        let _ = writeln!(s, "{i},{l:e}");
    }
    s
}

pub fn generate(cfg: &Config) -> Result<(), CliError> {
    let scene = generate_scene(cfg.kind, &cfg.scene_params(), cfg.seed)?;
    let manifest = write_bundle(&scene, &cfg.bundle, cfg.n_kp, cfg.seed, cfg.k_rot, &cfg.render_options())?;
    cfg.save(&cfg.bundle.join("generate.config.json"))?;
    println!(
        "{}: {} points, {} frames, {} keypoints, diagonal {:.4} -> {}",
        scene.kind,
        scene.cloud.len(),
        manifest.frames.len(),
        manifest.keypoints.len(),
        scene.diag,
        cfg.bundle.display()
    );
    Ok(())
}

/// Positions and labels of `cloud` with neutral gray radiance and uniform
/// density, ready for fitting.
fn initial_cloud(cloud: &NeuralPointCloud, cfg: &Config) -> Result<NeuralPointCloud, CliError> {
    let mut init = cloud.clone();
    let b = init.basis_count();
    for (k, c) in init.sh.iter_mut().enumerate() {
        *c = if k % b == 0 { sh::dc_from_value(0.5) } else { 0.0 };
    }
    init.density.iter_mut().for_each(|d| *d = cfg.init_density);
    init.confidence.iter_mut().for_each(|g| *g = 1.0);
    let character: Vec<_> = (0..init.len()).filter(|&i| init.groups[i] == Group::Character).map(|i| init.positions[i]).collect();
    let spacing = median_spacing(&character)
        .or_else(|| median_spacing(&init.positions))
        .ok_or_else(|| CliError::Config("cloud needs at least two distinct points".into()))?;
    init.k_agg = cfg.k_agg;
    init.r_agg = cfg.r_agg_factor * spacing;
    Ok(init)
}

pub fn fit(cfg: &Config) -> Result<(), CliError> {
    let bundle = Bundle::load(&cfg.bundle).map_err(|e| CliError::from(e).at(&cfg.bundle))?;
    let init = initial_cloud(&bundle.cloud, cfg)?;
    let views = bundle.train_views()?;
    let (fitted, report) = fit_radiance(&init, &views, &cfg.radiance_fit())?;
    create_dir(&cfg.out)?;
    save_cloud(&fitted, &cfg.cloud_path())?;
    write_text(&cfg.out.join("fit_losses.csv"), &loss_csv(&report.losses))?;
    cfg.save(&cfg.out.join("fit-radiance.config.json"))?;
    let last = report.losses.last().copied().unwrap_or(f64::NAN);
    println!("fitted {} points on {} rays, final loss {last:.3e} -> {}", fitted.len(), report.rays, cfg.cloud_path().display());
    Ok(())
}

pub fn deform(cfg: &Config) -> Result<(), CliError> {
    let bundle = Bundle::load(&cfg.bundle).map_err(|e| CliError::from(e).at(&cfg.bundle))?;
    let cloud = load_cloud(&cfg.cloud_path()).map_err(|e| CliError::from(e).at(&cfg.cloud_path()))?;
    let deform_cfg = cfg.deformation();
    for frame in &bundle.motion.frames {
        let (field, report) = fit_deformation(frame, &deform_cfg, None)?;
        let deformed = apply_deformation(&field, &cloud);
        let rotations = estimate_rotation_field(&cloud, &deformed, cfg.k_rot)?;
        let dir = frame_dir(&cfg.out, frame.t);
        create_dir(&dir)?;
        field.save(&dir.join("field.json"))?;
        save_cloud(&deformed, &dir.join("deformed.ply"))?;
        rotations.save(&dir.join("rotations.json"))?;
        write_text(&dir.join("losses.csv"), &loss_csv(&report.losses))?;
        println!(
            "frame {}: keypoint rms {:.3e} ({:.3e} of diagonal), {} degenerate neighborhoods",
            frame.t,
            report.keypoint_rms,
            report.keypoint_rms / bundle.manifest.diag,
            rotations.degenerate
        );
    }
    cfg.save(&cfg.out.join("deform.config.json"))?;
    Ok(())
}

pub fn render_frames(cfg: &Config) -> Result<(), CliError> {
    let bundle = Bundle::load(&cfg.bundle).map_err(|e| CliError::from(e).at(&cfg.bundle))?;
    let cloud = load_cloud(&cfg.cloud_path()).map_err(|e| CliError::from(e).at(&cfg.cloud_path()))?;
    let variant = variant_label(bundle.manifest.keypoints.len(), cfg.bending);
    create_dir(&cfg.out.join("renders").join(&variant))?;
    let opts = cfg.render_options();
    for &t in &bundle.manifest.frames {
        let path = frame_dir(&cfg.out, t).join("rotations.json");
        let rotations = RotationField::load(&path).map_err(|e| CliError::from(e).at(&path))?;
        let scene = DeformedScene::new(&cloud, &rotations, &rotations.index, cfg.bending)?;
        for (i, cam) in bundle.cameras.test.iter().enumerate() {
            let path = render_path(&cfg.out, &variant, t, i);
            render(&scene, cam, &opts, i).image.save_ppm(&path)?;
        }
    }
    cfg.save(&cfg.out.join(format!("render-{variant}.config.json")))?;
    println!(
        "rendered {} frames x {} views -> {}",
        bundle.manifest.frames.len(),
        bundle.cameras.test.len(),
        cfg.out.join("renders").join(&variant).display()
    );
    Ok(())
}

pub fn evaluate(cfg: &Config) -> Result<(), CliError> {
    let bundle = Bundle::load(&cfg.bundle).map_err(|e| CliError::from(e).at(&cfg.bundle))?;
    let n_kp = bundle.manifest.keypoints.len();
    let mut report = EvalReport::default();
    let variants: Vec<bool> = [true, false]
        .into_iter()
        .filter(|&b| cfg.out.join("renders").join(variant_label(n_kp, b)).is_dir())
        .collect();
    if variants.is_empty() {
        return Err(CliError::Io(format!("no renders under {}", cfg.out.join("renders").display())));
    }
    for &t in &bundle.manifest.frames {
        let (truth, masks) = bundle.gt_views(t)?;
        for &bending in &variants {
            let label = variant_label(n_kp, bending);
            let images = (0..truth.len())
                .map(|i| {
                    let p = render_path(&cfg.out, &label, t, i);
                    Image::load_ppm(&p).map_err(|e| CliError::io(&p, e))
                })
                .collect::<Result<Vec<_>, _>>()?;
            report.push(t, n_kp, bending, pooled_psnr(&images, &truth, &masks)?);
        }
    }
    create_dir(&cfg.out)?;
    let csv = cfg.out.join("report.csv");
    report.save_csv(&csv)?;
    cfg.save(&cfg.out.join("evaluate.config.json"))?;
    print!("{}", report.table());
    println!("-> {}", csv.display());
    Ok(())
}
