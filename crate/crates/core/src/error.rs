use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("partition would leave the {0} side empty")]
    EmptyPartition(&'static str),

    #[error("too few point correspondences: need at least 4, got {0}")]
    TooFewPoints(usize),

    #[error("degenerate point configuration: {0}")]
    DegenerateConfiguration(String),

    #[error("point maps to infinity (homogeneous scale {0:e})")]
    PointAtInfinity(f64),

    #[error("insufficient track: {0}")]
    InsufficientTrack(String),

    #[error("event {0} has zero dwell time")]
    ZeroDwell(u64),

    #[error("resampling ratio {from} Hz -> {to} Hz is not a rational with denominator <= 1000")]
    IrrationalRatio { from: f64, to: f64 },

    #[error("cutoff {cutoff} Hz must lie strictly inside (0, {nyquist}) Hz")]
    InvalidCutoff { cutoff: f64, nyquist: f64 },

    #[error("normalization scale must be positive, got {0}")]
    NonPositiveScale(f64),

    #[error("channels are misaligned: {0}")]
    MisalignedChannels(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("graph has {graph} nodes but features have {features}")]
    GraphNodeMismatch { graph: usize, features: usize },

    #[error("unknown model variant {0:?}")]
    UnknownVariant(String),

    #[error("training diverged at epoch {epoch}: non-finite loss")]
    Divergence { epoch: usize },

    #[error("no ground truth available for calibration: {0}")]
    NoGroundTruth(String),

    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("negative value {0} where a non-negative series is required")]
    NegativeInput(f64),

    #[error("invalid configuration at `{key}`: {reason}")]
    ConfigInvalid { key: String, reason: String },

    #[error("file missing: {}", .0.display())]
    FileMissing(PathBuf),

    #[error("schema mismatch in {}: {detail}", .path.display())]
    SchemaMismatch { path: PathBuf, detail: String },

    #[error("invalid value: {0}")]
    Invalid(String),

    #[error(transparent)]
    Tensor(#[from] bridgeflow_tensor::TensorError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::ConfigInvalid {
            key: key.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn schema(path: impl Into<PathBuf>, detail: impl Into<String>) -> Self {
        Error::SchemaMismatch {
            path: path.into(),
            detail: detail.into(),
        }
    }

    /// Short machine-readable tag for the error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::EmptyPartition(_) => "EmptyPartition",
            Error::TooFewPoints(_) => "TooFewPoints",
            Error::DegenerateConfiguration(_) => "DegenerateConfiguration",
            Error::PointAtInfinity(_) => "PointAtInfinity",
            Error::InsufficientTrack(_) => "InsufficientTrack",
            Error::ZeroDwell(_) => "ZeroDwell",
            Error::IrrationalRatio { .. } => "IrrationalRatio",
            Error::InvalidCutoff { .. } => "InvalidCutoff",
            Error::NonPositiveScale(_) => "NonPositiveScale",
            Error::MisalignedChannels(_) => "MisalignedChannels",
            Error::NonFinite(_) => "NonFinite",
            Error::ShapeMismatch(_) => "ShapeMismatch",
            Error::GraphNodeMismatch { .. } => "GraphNodeMismatch",
            Error::UnknownVariant(_) => "UnknownVariant",
            Error::Divergence { .. } => "Divergence",
            Error::NoGroundTruth(_) => "NoGroundTruth",
            Error::LengthMismatch(..) => "LengthMismatch",
            Error::NegativeInput(_) => "NegativeInput",
            Error::ConfigInvalid { .. } => "ConfigInvalid",
            Error::FileMissing(_) => "FileMissing",
            Error::SchemaMismatch { .. } => "SchemaMismatch",
            Error::Invalid(_) => "Invalid",
            Error::Tensor(_) => "Tensor",
            Error::Io(_) => "Io",
            Error::Json(_) => "Json",
            Error::Csv(_) => "Csv",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
