//! Dataset manifests and ingestion, corruption chains, and benchmark-tree
//! generation over the corruption grid.

mod chain;
mod generate;
mod ingest;
mod manifest;

pub use chain::{apply_chain, apply_params, apply_spec, AppliedStep, CorruptionChain};
pub use generate::{generate, Failure, GenerationPlan, GenerationReport, Provenance, ProvenanceEntry};
pub use ingest::{ingest, LayoutKind};
pub use manifest::{AnnotationRef, CorruptionGrid, DatasetManifest, ImageEntry, DEFAULT_SEED};
