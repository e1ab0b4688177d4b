use std::path::Path;

use thiserror::Error;

use pointmorph::deform::DeformError;
use pointmorph::eval::EvalError;
use pointmorph::image::ImageError;
use pointmorph::points::PointsError;
use pointmorph::render::RenderError;
use pointmorph::scene::SceneError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Diverged(String),
}

impl CliError {
    pub fn io(path: &Path, e: impl std::fmt::Display) -> CliError {
        CliError::Io(format!("{}: {e}", path.display()))
    }

    /// Prefixes the message with the path it concerns.
    pub fn at(self, path: &Path) -> CliError {
        let p = path.display();
        match self {
            CliError::Config(m) => CliError::Config(format!("{p}: {m}")),
            CliError::Io(m) => CliError::Io(format!("{p}: {m}")),
            CliError::Diverged(m) => CliError::Diverged(format!("{p}: {m}")),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Diverged(_) => 4,
        }
    }

    pub fn category(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Io(_) => "io",
            CliError::Diverged(_) => "divergence",
        }
    }
}

// Malformed input files count as I/O failures; bad parameters as config.

impl From<PointsError> for CliError {
    fn from(e: PointsError) -> CliError {
        match e {
            PointsError::DivergedFit(_) => CliError::Diverged(e.to_string()),
            PointsError::Invalid(_) | PointsError::EmptyGroup(_) => CliError::Config(e.to_string()),
            _ => CliError::Io(e.to_string()),
        }
    }
}

impl From<DeformError> for CliError {
    fn from(e: DeformError) -> CliError {
        match e {
            DeformError::DivergedFit(_) => CliError::Diverged(e.to_string()),
            DeformError::Io(_) | DeformError::Format { .. } => CliError::Io(e.to_string()),
            DeformError::Points(p) => p.into(),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<SceneError> for CliError {
    fn from(e: SceneError) -> CliError {
        match e {
            SceneError::BadParams(m) => CliError::Config(m),
            SceneError::Points(p) => p.into(),
            SceneError::Deform(d) => d.into(),
        }
    }
}

impl From<RenderError> for CliError {
    fn from(e: RenderError) -> CliError {
        CliError::Config(e.to_string())
    }
}

impl From<ImageError> for CliError {
    fn from(e: ImageError) -> CliError {
        match e {
            ImageError::DimMismatch(..) => CliError::Config(e.to_string()),
            _ => CliError::Io(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> CliError {
        match e {
            EvalError::Io(_) | EvalError::Format { .. } => CliError::Io(e.to_string()),
            EvalError::Scene(s) => s.into(),
            EvalError::Deform(d) => d.into(),
            EvalError::Points(p) => p.into(),
            EvalError::Render(r) => r.into(),
            EvalError::Image(i) => i.into(),
            EvalError::EmptyMask | EvalError::DimMismatch(..) => CliError::Config(e.to_string()),
        }
    }
}
