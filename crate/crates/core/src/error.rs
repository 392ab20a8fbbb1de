use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = HapError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum HapError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("point is behind the camera (camera-frame z = {z})")]
    BehindCamera { z: f64 },

    #[error("no body-model face is visible from the camera")]
    DegenerateVisibility,

    #[error("optimization diverged at iteration {iteration}: loss = {loss}")]
    Divergence { iteration: usize, loss: f64 },

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error("external tool `{tool}` failed: {message}\n{stderr}")]
    ExternalTool {
        tool: String,
        message: String,
        stderr: String,
    },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<HapError>,
    },

    #[error("missing file {0}")]
    MissingFile(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl HapError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        HapError::InvalidArgument(msg.into())
    }

    pub fn stage(stage: impl Into<String>, source: HapError) -> Self {
        HapError::Stage {
            stage: stage.into(),
            source: Box::new(source),
        }
    }

    pub fn parse(context: impl Into<String>, message: impl Into<String>) -> Self {
        HapError::Parse {
            context: context.into(),
            message: message.into(),
        }
    }

    /// Process exit code used by the `hap` binary.
    pub fn exit_code(&self) -> i32 {
        match self {
            HapError::Stage { source, .. } => match source.as_ref() {
                HapError::ExternalTool { .. } => 4,
                HapError::Parse { .. } | HapError::InvalidArgument(_) | HapError::MissingFile(_) => 2,
                _ => 3,
            },
            HapError::ExternalTool { .. } => 4,
            HapError::Divergence { .. } | HapError::DegenerateVisibility => 3,
            _ => 2,
        }
    }
}
