use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::design_space::{NarrativeOrder, ValidationReport};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("schema mismatch: schema_version {found} is not supported (expected {supported})")]
    SchemaVersion { found: u32, supported: u32 },

    #[error("invalid registry: {}", .0.violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Registry(ValidationReport),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("non-contiguous frame_index: expected {expected}, found {found}")]
    NonContiguous { expected: usize, found: usize },

    #[error("malformed geometry at frame {frame}: {detail}")]
    Geometry { frame: usize, detail: String },

    #[error("ball track undefined: {0}")]
    BallTrackUndefined(String),

    #[error("unknown keypoint {0:?}")]
    UnknownKeypoint(String),

    #[error("unknown player {0:?}")]
    UnknownPlayer(String),

    #[error("missing reception position for {0}")]
    MissingReception(String),

    #[error("empty placement support for {0}")]
    EmptySupport(String),

    #[error("rule expression: {0}")]
    Expr(#[from] crate::expr::ExprError),

    #[error("no visual available for {0:?}")]
    NoVisual(String),

    #[error("unsupported order: {0} cannot be scheduled")]
    UnsupportedOrder(NarrativeOrder),

    #[error("invalid script: {0}")]
    Script(String),

    #[error("schedule graph contains a cycle")]
    Cycle,

    #[error("data missing: {attribute} unavailable at frame {frame}")]
    DataMissing { attribute: String, frame: usize },

    #[error("missing source image {}", .0.display())]
    MissingSourceImage(PathBuf),

    #[error("dimension mismatch: source image is {found_w}x{found_h}, canvas is {canvas_w}x{canvas_h}")]
    DimensionMismatch { found_w: u32, found_h: u32, canvas_w: u32, canvas_h: u32 },

    #[error("image encoding: {0}")]
    Image(String),

    #[error("{0}")]
    Invalid(String),
}

/// Coarse classification used to pick process exit codes and HTTP statuses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Internal,
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => ErrorKind::Validation,
            Error::Io { .. } | Error::Image(_) | Error::Cycle => ErrorKind::Internal,
            _ => ErrorKind::Validation,
        }
    }
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|source| Error::Io { path: parent.to_path_buf(), source })?;
    }
    std::fs::write(path, bytes).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}
