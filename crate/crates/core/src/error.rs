use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("kernel larger than image")]
    KernelTooLarge,
    #[error("box outside image")]
    BoxOutsideImage,
    #[error("invalid feature geometry: {0}")]
    InvalidFeatureGeometry(String),
    #[error("empty cascade")]
    EmptyCascade,
    #[error("window too small")]
    WindowTooSmall,
    #[error("model/descriptor mismatch: model has {model} weights, descriptor has {descriptor}")]
    ModelMismatch { model: usize, descriptor: usize },
    #[error("inseparable degenerate data")]
    DegenerateTrainingData,
    #[error("degenerate eye geometry")]
    DegenerateEyes,
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("scheme mismatch: expected {expected}, found {found}")]
    SchemeMismatch { expected: String, found: String },
    #[error("degenerate face geometry: {0}")]
    DegenerateFace(String),
    #[error("degenerate triangle: {0}")]
    DegenerateTriangle(String),
    #[error("not a polygon: {0} points")]
    NotAPolygon(usize),
    #[error("zero variance")]
    ZeroVariance,
    #[error("insufficient sample: need at least 2 observations, got {0}")]
    InsufficientSample(usize),
    #[error("cohort too small: {label} has {count} usable inputs")]
    CohortTooSmall { label: String, count: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Decode {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag, used for manifest failure records.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidImage(_) => "invalid_image",
            Error::KernelTooLarge => "kernel_too_large",
            Error::BoxOutsideImage => "box_outside_image",
            Error::InvalidFeatureGeometry(_) => "invalid_feature_geometry",
            Error::EmptyCascade => "empty_cascade",
            Error::WindowTooSmall => "window_too_small",
            Error::ModelMismatch { .. } => "model_mismatch",
            Error::DegenerateTrainingData => "degenerate_training_data",
            Error::DegenerateEyes => "degenerate_eye_geometry",
            Error::InsufficientData(_) => "insufficient_data",
            Error::SchemeMismatch { .. } => "scheme_mismatch",
            Error::DegenerateFace(_) => "degenerate_face_geometry",
            Error::DegenerateTriangle(_) => "degenerate_triangle",
            Error::NotAPolygon(_) => "not_a_polygon",
            Error::ZeroVariance => "zero_variance",
            Error::InsufficientSample(_) => "insufficient_sample",
            Error::CohortTooSmall { .. } => "cohort_too_small",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Io { .. } => "io",
            Error::Json { .. } => "json",
            Error::Decode { .. } => "decode",
        }
    }
}
