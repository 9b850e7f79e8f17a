//! Group activity recognition over actor relation graphs.
//!
//! Actors in a clip are connected by a relation graph built from appearance
//! similarity (embedded dot-product, normalized cross-correlation or sum of
//! absolute differences) and a distance mask on box centers. Graph
//! convolution over that graph refines actor features, which feed a
//! per-actor action classifier and a max-pooled group activity classifier.

pub mod data;
pub mod cli;
pub mod config;
pub mod error;
pub mod model;
pub mod numeric;
pub mod relation;
pub mod train;

pub use error::{Error, Result};
