//! Run configuration: defaults, then a JSON file, then command-line flags.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use pointmorph::deform::DeformationConfig;
use pointmorph::fit::RadianceFitConfig;
use pointmorph::render::RenderOptions;
use pointmorph::scene::{SceneKind, SceneParams};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub seed: u64,
    pub threads: Option<usize>,

    /// Scene bundle directory, written by `generate`.
    pub bundle: PathBuf,
    /// Output directory of the other subcommands.
    pub out: PathBuf,
    /// Canonical cloud for `deform` and `render`; `<out>/fitted.ply` when unset.
    pub cloud: Option<PathBuf>,

    pub kind: SceneKind,
    pub n_points: usize,
    pub sh_degree: Option<usize>,
    pub texture_freq: f64,
    pub view_strength: f64,
    pub angles_deg: Vec<f64>,
    pub joint_band: f64,
    pub density: f64,
    pub image_size: usize,
    pub n_train_views: usize,
    pub n_test_views: usize,
    pub fov_deg: f64,
    pub n_kp: usize,

    pub k_agg: usize,
    pub r_agg_factor: f64,

    pub fit_iters: usize,
    pub fit_lr: f64,
    pub fit_batch: usize,
    /// Starting density of every point before radiance fitting.
    pub init_density: f64,

    pub k_rot: usize,
    pub octaves: usize,
    pub hidden: Vec<usize>,
    pub deform_iters: usize,
    pub deform_lr: f64,
    pub deform_lr_final: f64,
    pub smoothness: f64,

    pub n_samples: usize,
    pub bending: bool,
    pub background: [f64; 3],
}

impl Default for Config {
    fn default() -> Self {
        let scene = SceneParams::default();
        let deform = DeformationConfig::default();
        let fit = RadianceFitConfig::default();
        Config {
            seed: 0,
            threads: None,
            bundle: PathBuf::from("bundle"),
            out: PathBuf::from("out"),
            cloud: None,
            kind: SceneKind::TexturedSphere,
            n_points: scene.n_points,
            sh_degree: scene.sh_degree,
            texture_freq: scene.texture_freq,
            view_strength: scene.view_strength,
            angles_deg: scene.angles_deg,
            joint_band: scene.joint_band,
            density: scene.density,
            image_size: scene.image_size,
            n_train_views: scene.n_train_views,
            n_test_views: scene.n_test_views,
            fov_deg: scene.fov_deg,
            n_kp: 300,
            k_agg: pointmorph::points::DEFAULT_K_AGG,
            r_agg_factor: pointmorph::points::DEFAULT_R_AGG_FACTOR,
            fit_iters: fit.iters,
            fit_lr: fit.lr,
            fit_batch: fit.batch,
            init_density: 10.0,
            k_rot: pointmorph::deform::DEFAULT_K_ROT,
            octaves: deform.octaves,
            hidden: deform.hidden,
            deform_iters: deform.iters,
            deform_lr: deform.lr,
            deform_lr_final: deform.lr_final,
            smoothness: deform.smoothness,
            n_samples: pointmorph::render::DEFAULT_SAMPLES,
            bending: true,
            background: [0.0; 3],
        }
    }
}

impl Config {
    pub fn scene_params(&self) -> SceneParams {
        SceneParams {
            n_points: self.n_points,
            sh_degree: self.sh_degree,
            texture_freq: self.texture_freq,
            view_strength: self.view_strength,
            angles_deg: self.angles_deg.clone(),
            joint_band: self.joint_band,
            density: self.density,
            image_size: self.image_size,
            n_train_views: self.n_train_views,
            n_test_views: self.n_test_views,
            fov_deg: self.fov_deg,
        }
    }

    pub fn deformation(&self) -> DeformationConfig {
        DeformationConfig {
            octaves: self.octaves,
            hidden: self.hidden.clone(),
            lr: self.deform_lr,
            lr_final: self.deform_lr_final,
            iters: self.deform_iters,
            smoothness: self.smoothness,
            seed: self.seed,
            ..Default::default()
        }
    }

    pub fn radiance_fit(&self) -> RadianceFitConfig {
        RadianceFitConfig {
            iters: self.fit_iters,
            lr: self.fit_lr,
            batch: self.fit_batch,
            n_samples: self.n_samples,
            seed: self.seed,
            background: self.background.into(),
        }
    }

    pub fn render_options(&self) -> RenderOptions {
        RenderOptions { n_samples: self.n_samples, seed: self.seed, background: self.background.into() }
    }

    pub fn cloud_path(&self) -> PathBuf {
        self.cloud.clone().unwrap_or_else(|| self.out.join("fitted.ply"))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::Config(m.to_string()));
        self.scene_params().validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.deformation().validate().map_err(|e| CliError::Config(e.to_string()))?;
        if self.threads == Some(0) {
            return bad("threads must be positive");
        }
        if self.n_kp < 4 {
            return bad("n_kp must be at least 4");
        }
        if self.k_agg == 0 || !(self.r_agg_factor > 0.0) {
            return bad("k_agg and r_agg_factor must be positive");
        }
        if self.k_rot < 3 {
            return bad("k_rot must be at least 3");
        }
        if !(self.fit_lr > 0.0) || self.fit_batch == 0 || !(self.init_density > 0.0) {
            return bad("fit_lr, fit_batch and init_density must be positive");
        }
        if self.n_samples < 2 {
            return bad("n_samples must be at least 2");
        }
        if self.background.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return bad("background components must be in [0, 1]");
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).expect("config serializes");
        std::fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
    }
}

/// Command-line overrides. Each flag has the name of its config key.
#[derive(Debug, Clone, Default, Args, Serialize)]
#[command(rename_all = "snake_case")]
pub struct Overrides {
    /// JSON config file; flags given here take precedence over it
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,

    /// Seeds scene generation, sampling jitter and every fit
    #[arg(long, help_heading = "Run")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Worker threads (falls back to POINTMORPH_THREADS)
    #[arg(long, help_heading = "Run")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    /// Scene bundle directory
    #[arg(long, help_heading = "Paths")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bundle: Option<PathBuf>,
    /// Output directory
    #[arg(long, help_heading = "Paths")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Fitted canonical cloud [default: <out>/fitted.ply]
    #[arg(long, help_heading = "Paths")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cloud: Option<PathBuf>,

    /// sphere | textured_sphere | two_segment_limb | articulated_biped | box_room_background
    #[arg(long, help_heading = "Scene")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<SceneKind>,
    #[arg(long, help_heading = "Scene")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_points: Option<usize>,
    #[arg(long, help_heading = "Scene")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sh_degree: Option<usize>,
    #[arg(long, help_heading = "Scene")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub texture_freq: Option<f64>,
    #[arg(long, help_heading = "Scene")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub view_strength: Option<f64>,
    /// Comma separated, one entry per frame
    #[arg(long, help_heading = "Scene", value_delimiter = ',', allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub angles_deg: Option<Vec<f64>>,
    #[arg(long, help_heading = "Scene")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub joint_band: Option<f64>,
    #[arg(long, help_heading = "Scene")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub density: Option<f64>,
    #[arg(long, help_heading = "Scene")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub image_size: Option<usize>,
    #[arg(long, help_heading = "Scene")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_train_views: Option<usize>,
    #[arg(long, help_heading = "Scene")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_test_views: Option<usize>,
    #[arg(long, help_heading = "Scene")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fov_deg: Option<f64>,
    /// Keypoints sampled from the character
    #[arg(long, help_heading = "Scene")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_kp: Option<usize>,

    #[arg(long, help_heading = "Radiance")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_agg: Option<usize>,
    /// Aggregation radius in multiples of the median point spacing
    #[arg(long, help_heading = "Radiance")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_agg_factor: Option<f64>,
    #[arg(long, help_heading = "Radiance")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit_iters: Option<usize>,
    #[arg(long, help_heading = "Radiance")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit_lr: Option<f64>,
    #[arg(long, help_heading = "Radiance")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit_batch: Option<usize>,
    #[arg(long, help_heading = "Radiance")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub init_density: Option<f64>,

    #[arg(long, help_heading = "Deformation")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_rot: Option<usize>,
    #[arg(long, help_heading = "Deformation")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub octaves: Option<usize>,
    /// Comma separated hidden layer widths
    #[arg(long, help_heading = "Deformation", value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hidden: Option<Vec<usize>>,
    #[arg(long, help_heading = "Deformation")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub deform_iters: Option<usize>,
    #[arg(long, help_heading = "Deformation")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub deform_lr: Option<f64>,
    #[arg(long, help_heading = "Deformation")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub deform_lr_final: Option<f64>,
    #[arg(long, help_heading = "Deformation")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub smoothness: Option<f64>,

    #[arg(long, help_heading = "Rendering")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_samples: Option<usize>,
    /// Rotate view directions into the canonical frame
    #[arg(long, help_heading = "Rendering")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bending: Option<bool>,
    /// Comma separated RGB in [0, 1]
    #[arg(long, help_heading = "Rendering", value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub background: Option<Vec<f64>>,
}

fn merge(into: &mut Map<String, Value>, from: Map<String, Value>) {
    for (k, v) in from {
        into.insert(k, v);
    }
}

/// Resolves the configuration with precedence flags > file > defaults.
/// `require_seed` demands that the seed come from the file or a flag.
pub fn resolve(overrides: &Overrides, require_seed: bool) -> Result<Config, CliError> {
    let Value::Object(mut map) = serde_json::to_value(Config::default()).expect("config serializes") else {
        unreachable!("config is a struct");
    };
    let mut seed_given = overrides.seed.is_some();
    if let Some(path) = &overrides.config {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let file: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let Value::Object(file) = file else {
            return Err(CliError::Config(format!("{}: expected a JSON object", path.display())));
        };
        for key in file.keys() {
            if !map.contains_key(key) {
                return Err(CliError::Config(format!("{}: unknown key `{key}`", path.display())));
            }
        }
        seed_given |= file.contains_key("seed");
        merge(&mut map, file);
    }
    let Value::Object(flags) = serde_json::to_value(overrides).expect("overrides serialize") else {
        unreachable!("overrides is a struct");
    };
    merge(&mut map, flags);
    if require_seed && !seed_given {
        return Err(CliError::Config("--seed is required when CI is set".into()));
    }
    let config: Config = serde_json::from_value(Value::Object(map)).map_err(|e| CliError::Config(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        Config::default().validate().unwrap();
        let c = resolve(&Overrides::default(), false).unwrap();
        assert_eq!(c, Config::default());
    }

    #[test]
    fn precedence_file_then_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"n_points": 1000, "image_size": 32, "angles_deg": [10, 20]}"#).unwrap();
        let o = Overrides { config: Some(path), n_points: Some(500), ..Default::default() };
        let c = resolve(&o, false).unwrap();
        assert_eq!(c.n_points, 500);
        assert_eq!(c.image_size, 32);
        assert_eq!(c.angles_deg, vec![10.0, 20.0]);
        assert_eq!(c.fov_deg, Config::default().fov_deg);
    }

    #[test]
    fn unknown_key_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"n_pointz": 3}"#).unwrap();
        let o = Overrides { config: Some(path), ..Default::default() };
        assert!(matches!(resolve(&o, false), Err(CliError::Config(_))));
    }

    #[test]
    fn invalid_values_rejected() {
        let o = Overrides { n_points: Some(2), ..Default::default() };
        assert!(matches!(resolve(&o, false), Err(CliError::Config(_))));
        let o = Overrides { background: Some(vec![0.1, 0.2]), ..Default::default() };
        assert!(matches!(resolve(&o, false), Err(CliError::Config(_))));
    }

    #[test]
    fn seed_requirement() {
        assert!(resolve(&Overrides::default(), true).is_err());
        assert!(resolve(&Overrides { seed: Some(3), ..Default::default() }, true).is_ok());
    }

    #[test]
    fn saved_config_reproduces() {
        let dir = tempfile::tempdir().unwrap();
        let c = resolve(&Overrides { seed: Some(9), kind: Some(SceneKind::Sphere), ..Default::default() }, false).unwrap();
        let path = dir.path().join("resolved.json");
        c.save(&path).unwrap();
        let back = resolve(&Overrides { config: Some(path), ..Default::default() }, true).unwrap();
        assert_eq!(back, c);
    }
}
