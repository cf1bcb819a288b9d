use std::fmt::Display;

use serde::Serialize;
use thiserror::Error;

use symden::datagen::DatagenError;
use symden::decompose::DecomposeError;
use symden::density::DensityError;
use symden::expr::ExprError;
use symden::grid::GridError;
use symden::samples::SampleError;
use symden::sr::SrError;
use symden::support::SupportError;
use symden::validate::ValidateError;

/// Failure class, which determines the exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Config,
    Data,
    Numerical,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Config => 2,
            ErrorKind::Data => 3,
            ErrorKind::Numerical => 4,
        }
    }
}

/// An error tagged with the pipeline stage that raised it.
#[derive(Debug, Clone, PartialEq, Serialize, Error)]
#[error("{stage}: {message}")]
pub struct StageError {
    pub stage: String,
    pub kind: ErrorKind,
    pub message: String,
}

impl StageError {
    pub fn new(stage: &str, kind: ErrorKind, message: impl Display) -> Self {
        StageError {
            stage: stage.to_string(),
            kind,
            message: message.to_string(),
        }
    }

    pub fn config(stage: &str, message: impl Display) -> Self {
        Self::new(stage, ErrorKind::Config, message)
    }

    pub fn data(stage: &str, message: impl Display) -> Self {
        Self::new(stage, ErrorKind::Data, message)
    }

    pub fn numerical(stage: &str, message: impl Display) -> Self {
        Self::new(stage, ErrorKind::Numerical, message)
    }

    pub fn exit_code(&self) -> i32 {
        self.kind.exit_code()
    }

    /// The machine-readable error record.
    pub fn to_json(&self) -> String {
        let record = serde_json::json!({
            "error": {
                "stage": self.stage,
                "kind": self.kind,
                "exit_code": self.exit_code(),
                "message": self.message,
            }
        });
        serde_json::to_string_pretty(&record).expect("plain JSON value")
    }
}

/// Maps a library error to a failure class.
pub trait Classify: Display {
    fn kind(&self) -> ErrorKind;
}

impl Classify for SampleError {
    fn kind(&self) -> ErrorKind {
        ErrorKind::Data
    }
}

impl Classify for std::io::Error {
    fn kind(&self) -> ErrorKind {
        ErrorKind::Data
    }
}

impl Classify for serde_json::Error {
    fn kind(&self) -> ErrorKind {
        ErrorKind::Data
    }
}

impl Classify for ExprError {
    fn kind(&self) -> ErrorKind {
        ErrorKind::Data
    }
}

impl Classify for DatagenError {
    fn kind(&self) -> ErrorKind {
        match self {
            DatagenError::UnknownDataset(_)
            | DatagenError::InvalidParameter(_)
            | DatagenError::EmptyRequest => ErrorKind::Config,
            DatagenError::DimensionMismatch { .. } => ErrorKind::Data,
            _ => ErrorKind::Numerical,
        }
    }
}

impl Classify for DensityError {
    fn kind(&self) -> ErrorKind {
        match self {
            DensityError::NonFinite { .. }
            | DensityError::NoSamples
            | DensityError::DimensionMismatch { .. }
            | DensityError::TooFewSamples { .. } => ErrorKind::Data,
            DensityError::NonPositiveBandwidth(_)
            | DensityError::EmptyCandidates
            | DensityError::TooFewFolds(_) => ErrorKind::Config,
            DensityError::GridTooCoarse { .. } | DensityError::Grid(_) => ErrorKind::Numerical,
        }
    }
}

impl Classify for DecomposeError {
    fn kind(&self) -> ErrorKind {
        match self {
            DecomposeError::InvalidEps(_)
            | DecomposeError::InvalidMinPts
            | DecomposeError::InvalidAlpha(_) => ErrorKind::Config,
            DecomposeError::TooFewSamples { .. } | DecomposeError::TooFewVariables(_) => {
                ErrorKind::Data
            }
            _ => ErrorKind::Numerical,
        }
    }
}

impl Classify for SupportError {
    fn kind(&self) -> ErrorKind {
        match self {
            SupportError::InvalidFactor(_) | SupportError::InvalidResolution => ErrorKind::Config,
            SupportError::ShapeMismatch { .. } => ErrorKind::Data,
            _ => ErrorKind::Numerical,
        }
    }
}

impl Classify for SrError {
    fn kind(&self) -> ErrorKind {
        match self {
            SrError::InvalidConfig(_) => ErrorKind::Config,
            SrError::Support(e) => e.kind(),
            SrError::InvalidTrainingSet(_) => ErrorKind::Numerical,
        }
    }
}

impl Classify for ValidateError {
    fn kind(&self) -> ErrorKind {
        match self {
            ValidateError::InvalidResolution | ValidateError::InvalidClip(_) => ErrorKind::Config,
            ValidateError::InvalidRegion
            | ValidateError::EmptySampleSet
            | ValidateError::DimensionMismatch { .. } => ErrorKind::Data,
            ValidateError::NonPositiveVolume(_) => ErrorKind::Numerical,
        }
    }
}

impl Classify for GridError {
    fn kind(&self) -> ErrorKind {
        ErrorKind::Numerical
    }
}

/// Attaches a stage name to library errors.
pub trait AtStage<T> {
    fn at_stage(self, stage: &str) -> Result<T, StageError>;
}

impl<T, E: Classify> AtStage<T> for Result<T, E> {
    fn at_stage(self, stage: &str) -> Result<T, StageError> {
        self.map_err(|e| StageError::new(stage, e.kind(), &e))
    }
}
