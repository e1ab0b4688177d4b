use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_pointmorph"));
    c.env_remove("CI").env_remove("POINTMORPH_THREADS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

const SCENE: &[&str] = &[
    "--kind",
    "two_segment_limb",
    "--n_points",
    "500",
    "--image_size",
    "16",
    "--n_train_views",
    "3",
    "--n_test_views",
    "2",
    "--angles_deg",
    "20,40",
    "--n_kp",
    "60",
    "--n_samples",
    "24",
    "--fit_iters",
    "30",
    "--fit_batch",
    "128",
    "--deform_iters",
    "40",
    "--hidden",
    "16,16",
];

fn pipeline(root: &Path) -> PathBuf {
    let bundle = root.join("bundle");
    let out = root.join("out");
    let paths = ["--bundle", bundle.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "5"];
    for cmd in [&["generate"][..], &["fit-radiance"], &["deform"], &["render"], &["render", "--bending", "false"], &["evaluate"]] {
        let mut args: Vec<&str> = cmd.to_vec();
        args.extend_from_slice(&paths);
        args.extend_from_slice(SCENE);
        let o = run(&args);
        assert_eq!(code(&o), 0, "{cmd:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    root.to_path_buf()
}

fn files(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

#[test]
fn help_lists_flags() {
    let o = run(&["--help"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    for sub in ["generate", "fit-radiance", "deform", "render", "evaluate"] {
        assert!(text.contains(sub), "{sub}");
    }
    let o = run(&["deform", "--help"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("--deform_iters") && text.contains("--k_rot") && text.contains("--config"));
}

#[test]
fn missing_input_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["deform", "--bundle", dir.path().join("nope").to_str().unwrap(), "--seed", "1"]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("error[io]"));
}

#[test]
fn bad_config_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"not_a_key": 1}"#).unwrap();
    let o = run(&["generate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("not_a_key"));
    let o = run(&["generate", "--n_points", "3", "--bundle", dir.path().join("b").to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    let o = run(&["generate", "--n_points", "many"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn seed_required_in_ci() {
    let dir = tempfile::tempdir().unwrap();
    let b = dir.path().join("b");
    let o = bin().args(["generate", "--bundle", b.to_str().unwrap()]).env("CI", "true").output().unwrap();
    assert_eq!(code(&o), 2);
    let o = bin()
        .args(["generate", "--bundle", b.to_str().unwrap(), "--seed", "1", "--n_points", "100", "--image_size", "8"])
        .env("CI", "true")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn bad_thread_env_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin()
        .args(["generate", "--bundle", dir.path().join("b").to_str().unwrap(), "--n_points", "100"])
        .env("POINTMORPH_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn divergence_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let b = dir.path().join("b");
    let o = dir.path().join("o");
    let common = ["--bundle", b.to_str().unwrap(), "--out", o.to_str().unwrap(), "--seed", "2"];
    let mut gen = vec!["generate", "--n_points", "200", "--image_size", "8", "--n_train_views", "2"];
    gen.extend_from_slice(&common);
    assert_eq!(code(&run(&gen)), 0);
    let mut fit = vec!["fit-radiance", "--fit_lr", "1e300", "--fit_iters", "5", "--fit_batch", "64", "--n_samples", "16"];
    fit.extend_from_slice(&common);
    let o = run(&fit);
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn pipeline_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    pipeline(a.path());
    pipeline(b.path());
    let fa = files(a.path());
    assert_eq!(fa, files(b.path()));
    for f in ["bundle/cloud.ply", "out/fitted.ply", "out/report.csv", "out/renders/kp60_bend/frame_002_view_001.ppm"] {
        assert!(fa.contains(&PathBuf::from(f)), "{f} missing");
    }
    for f in &fa {
        let (x, y) = (fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap());
        if f.extension().is_some_and(|e| e == "json") && f.to_string_lossy().contains("config") {
            // resolved configs record the run's own paths
            continue;
        }
        assert!(x == y, "{} differs", f.display());
    }
    let csv = fs::read_to_string(a.path().join("out/report.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "frame,variant,n_kp,bending,psnr_db,masked_pixels");
    assert_eq!(lines.len(), 1 + 4 + 2);
}

#[test]
fn resolved_config_reproduces_run() {
    let dir = tempfile::tempdir().unwrap();
    let b1 = dir.path().join("b1");
    let mut args = vec!["generate", "--bundle", b1.to_str().unwrap(), "--seed", "8"];
    args.extend_from_slice(&SCENE[..10]);
    assert_eq!(code(&run(&args)), 0);
    let cfg = b1.join("generate.config.json");
    let b2 = dir.path().join("b2");
    let o = run(&["generate", "--config", cfg.to_str().unwrap(), "--bundle", b2.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    for f in ["cloud.ply", "keypoints.json", "cameras.json", "train/view_002.ppm", "gt/frame_001_view_000.ppm"] {
        assert_eq!(fs::read(b1.join(f)).unwrap(), fs::read(b2.join(f)).unwrap(), "{f}");
    }
}
