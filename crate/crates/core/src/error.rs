use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::raster::Violation;

pub type Result<T, E = SdError> = std::result::Result<T, E>;

/// Pipeline stage names, used to tag failures and timings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    /// Per-input config checks, e.g. too many sub-apertures for the azimuth length.
    Config,
    Read,
    Calibrate,
    Fft,
    Compensate,
    Window,
    Ifft,
    Multilook,
    Write,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Config => "config",
            Stage::Read => "read",
            Stage::Calibrate => "calibrate",
            Stage::Fft => "fft",
            Stage::Compensate => "compensate",
            Stage::Window => "window",
            Stage::Ifft => "ifft",
            Stage::Multilook => "multilook",
            Stage::Write => "write",
        };
        f.write_str(s)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SdError {
    #[error("validation failed: {}", join_violations(.0))]
    Validation(Vec<Violation>),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("incidence angle {angle}° outside reference table range [{min}°, {max}°]")]
    OutOfRange { angle: f64, min: f64, max: f64 },

    #[error("calibration failed at range column {column}: {source}")]
    Calibration {
        column: usize,
        #[source]
        source: Box<SdError>,
    },

    #[error("spectrum state error: {0}")]
    State(String),

    #[error("internal consistency error: {0}")]
    Consistency(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("payload size mismatch for {path}: expected {expected} bytes, found {actual}")]
    SizeMismatch {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },

    #[error("unsupported sidecar schema_version {0}")]
    UnsupportedVersion(u32),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("measurement error: {0}")]
    Measurement(String),

    #[error("{stage} stage: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<SdError>,
    },
}

impl SdError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SdError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn at(self, stage: Stage) -> Self {
        SdError::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Stage tag of the outermost stage wrapper, if any.
    pub fn stage(&self) -> Option<Stage> {
        match self {
            SdError::Stage { stage, .. } => Some(*stage),
            _ => None,
        }
    }
}

fn join_violations(v: &[Violation]) -> String {
    v.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: Stage) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: Stage) -> Result<T> {
        self.map_err(|e| e.at(stage))
    }
}
