use std::path::PathBuf;

use thiserror::Error;

use crate::corruption::CorruptionKind;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("severity {level} is not valid for {kind} (valid: 1..={max})")]
    InvalidSeverity { kind: CorruptionKind, level: u32, max: u32 },

    #[error("unknown corruption `{0}`; valid names: {names}", names = CorruptionKind::valid_names())]
    UnknownCorruption(String),

    #[error("unknown parameter `{name}` for {kind}")]
    UnknownParameter { kind: CorruptionKind, name: String },

    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("invalid raster: {0}")]
    InvalidRaster(String),

    #[error("failed to decode {path}: {message}")]
    Decode { path: PathBuf, message: String },

    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),

    #[error("jpeg encoding failed: {0}")]
    Encode(String),

    #[error("invalid kernel size {0}: gaussian kernels must be odd and >= 1")]
    InvalidKernel(i64),

    #[error("{count} stripes of width {width} cannot fit without overlap in width {image_width}")]
    GapOverflow {
        count: usize,
        width: usize,
        image_width: usize,
    },

    #[error("unsupported annotation: {0}")]
    UnsupportedAnnotation(String),

    #[error("invalid corruption chain: {0}")]
    InvalidChain(String),

    #[error("layout error in {path}: {message}")]
    Layout { path: PathBuf, message: String },

    #[error("annotation parse error in {path}{line}: {message}", line = fmt_line(*.line))]
    AnnotationParse {
        path: PathBuf,
        line: Option<usize>,
        message: String,
    },

    #[error("invalid manifest: {0}")]
    Manifest(String),

    #[error("prediction/ground-truth id mismatch: {0}")]
    IdMismatch(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("class index {class} out of range for {num_classes} classes")]
    ClassOutOfRange { class: u32, num_classes: usize },

    #[error("degenerate polygon (area {0:e})")]
    DegeneratePolygon(f64),

    #[error("polygon is not convex")]
    NonConvexPolygon,

    #[error("clean score must be positive, got {0}")]
    ZeroCleanScore(f64),

    #[error("invalid prevalence weights: {0}")]
    InvalidWeights(String),

    #[error("no severity cells to aggregate")]
    EmptyCellSet,

    #[error("no clean score for model `{0}`")]
    MissingClean(String),

    #[error("report column mismatch: {0}")]
    ColumnMismatch(String),

    #[error("too few samples for covariance: {0} (need >= 2)")]
    TooFewSamples(usize),

    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("symmetric eigendecomposition did not converge")]
    NonConvergentEigen,

    #[error("invalid embedding file {path}: {message}")]
    EmbeddingFormat { path: PathBuf, message: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn fmt_line(line: Option<usize>) -> String {
    line.map(|l| format!(":{l}")).unwrap_or_default()
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
