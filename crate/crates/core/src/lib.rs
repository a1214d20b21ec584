//! Graded, reproducible image corruptions for remote-sensing benchmarks,
//! with annotation-aware geometric transforms, task metrics, robustness
//! aggregation and embedding-distribution fidelity checks.

pub mod annotation;
pub mod cli;
pub mod corruption;
pub mod error;
pub mod fidelity;
pub mod geometric;
pub mod metrics;
pub mod photometric;
pub mod pipeline;
pub mod raster;
pub mod rng;
pub mod spatial;

pub use annotation::{
    AnnotationFormat, AnnotationSet, HorizontalBox, OrientedBox, ReferringRecord, RegionBox, SegMask,
};
pub use corruption::{severity_params, Category, CorruptionKind, CorruptionParams, CorruptionSpec, Severity};
pub use error::{Error, Result};
pub use raster::{load_image, save_image, ImageRaster, RasterFormat};
pub use rng::{derive_stream, RngStream};
