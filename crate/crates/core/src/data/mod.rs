//! Clips, annotations, ingestion and synthetic data.

mod format;
mod patch;
mod synth;
mod types;
mod validate;

pub use format::{parse_clip_file, serialize_dataset};
pub use patch::{extract_patch, Frame};
pub use synth::{generate_synthetic_dataset, majority_label, SynthConfig};
pub use types::{box_center, ActorInstance, BoundingBox, ClipSample, Dataset};
pub use validate::{validate_dataset, ValidationReport, Violation};
