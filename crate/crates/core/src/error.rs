use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {}", .0.display())]
    FileNotFound(PathBuf),

    #[error("failed to decode image {}: {reason}", path.display())]
    Decode { path: PathBuf, reason: String },

    #[error("image has a zero dimension ({width}x{height})")]
    ZeroDimension { width: usize, height: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("operation requires an RGB image, got {0} channels")]
    NotRgb(usize),

    #[error("landmark set is empty")]
    EmptyLandmarks,

    #[error("invalid landmark file {}: {reason}", path.display())]
    LandmarkFormat { path: PathBuf, reason: String },

    #[error("invalid network config: {0}")]
    InvalidConfig(String),

    #[error("label {label} out of range for {classes} classes")]
    InvalidLabel { label: usize, classes: usize },

    #[error("target probability {0} outside [0, 1]")]
    InvalidTarget(f64),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("no training data")]
    EmptyData,

    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),

    #[error("Fleiss' kappa needs at least 2 raters per subject, got {0}")]
    TooFewRaters(usize),

    #[error("kappa {0} outside [-1, 1]")]
    KappaOutOfRange(f64),

    #[error("invalid rating matrix: {0}")]
    InvalidRatings(String),

    #[error("invalid input data: {0}")]
    InvalidData(String),

    #[error("class '{class}' of trait '{trait_name}' has no samples")]
    EmptyClass { trait_name: String, class: String },

    #[error("image '{image_id}' has no landmark file")]
    MissingLandmarks { image_id: String },

    #[error("test set is empty")]
    EmptyTestSet,

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures caused by the numbers themselves (diverged training)
    /// rather than by the input files or configuration.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NonFinite(_))
    }
}
