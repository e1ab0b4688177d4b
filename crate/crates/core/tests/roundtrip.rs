use pointmorph::bending::DeformedScene;
use pointmorph::bundle::{write_bundle, Bundle};
use pointmorph::deform::{
    apply_deformation, estimate_rotation_field, fit_deformation, DeformationConfig, DeformationField, RotationField,
};
use pointmorph::ply::{load_cloud, save_cloud};
use pointmorph::render::{render, RenderOptions};
use pointmorph::scene::{generate_scene, SceneKind, SceneParams};

fn small(kind: SceneKind) -> pointmorph::scene::SyntheticScene {
    let params = SceneParams {
        n_points: 600,
        angles_deg: vec![30.0],
        image_size: 16,
        n_train_views: 3,
        n_test_views: 2,
        ..Default::default()
    };
    generate_scene(kind, &params, 11).unwrap()
}

#[test]
fn saved_artifacts_render_identically() {
    let dir = tempfile::tempdir().unwrap();
    let scene = small(SceneKind::TwoSegmentLimb);
    let opts = RenderOptions { n_samples: 32, seed: 11, ..Default::default() };
    write_bundle(&scene, &dir.path().join("b"), 80, 11, 8, &opts).unwrap();
    let bundle = Bundle::load(&dir.path().join("b")).unwrap();
    assert_eq!(bundle.cloud.positions, scene.cloud.positions);

    let cfg = DeformationConfig { hidden: vec![16, 16], iters: 60, seed: 11, ..Default::default() };
    let (field, _) = fit_deformation(&bundle.motion.frames[0], &cfg, None).unwrap();
    let deformed = apply_deformation(&field, &bundle.cloud);
    let rot = estimate_rotation_field(&bundle.cloud, &deformed, 8).unwrap();

    field.save(&dir.path().join("field.json")).unwrap();
    rot.save(&dir.path().join("rot.json")).unwrap();
    save_cloud(&bundle.cloud, &dir.path().join("c.ply")).unwrap();
    let field2 = DeformationField::load(&dir.path().join("field.json")).unwrap();
    let rot2 = RotationField::load(&dir.path().join("rot.json")).unwrap();
    let cloud2 = load_cloud(&dir.path().join("c.ply")).unwrap();

    assert_eq!(field.apply(&cloud2.positions), field2.apply(&cloud2.positions));
    let cam = &bundle.cameras.test[0];
    let a = render(&DeformedScene::new(&bundle.cloud, &rot, &rot.index, true).unwrap(), cam, &opts, 0);
    let b = render(&DeformedScene::new(&cloud2, &rot2, &rot2.index, true).unwrap(), cam, &opts, 0);
    assert_eq!(a.image, b.image);
}

#[test]
fn ground_truth_views_match_scene() {
    let dir = tempfile::tempdir().unwrap();
    let scene = small(SceneKind::ArticulatedBiped);
    let opts = RenderOptions { n_samples: 32, seed: 3, ..Default::default() };
    let manifest = write_bundle(&scene, dir.path(), 50, 3, 8, &opts).unwrap();
    let bundle = Bundle::load(dir.path()).unwrap();
    let (images, masks) = bundle.gt_views(manifest.frames[0]).unwrap();
    assert_eq!(images.len(), 2);
    assert!(masks.iter().all(|m| m.count() > 0));
    let field = scene.frame_rotation_field(0, 8).unwrap();
    let ds = DeformedScene::new(&scene.cloud, &field, &field.index, true).unwrap();
    let direct = render(&ds, &scene.test_cameras[1], &opts, 1).image;
    // PPM quantises to 8 bits
    assert!(direct.max_abs_diff(&images[1]).unwrap() <= 0.5 / 255.0 + 1e-12);
}
