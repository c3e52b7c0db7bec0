//! Attribute-aware image quality assessment pipeline.
//!
//! The crate covers the full training stack for a no-reference IQA model
//! supervised by a vision-language embedding provider:
//!
//! - [`core`]: domain types, dataset manifests, deterministic splits, run config
//! - [`metrics`]: rank/linear correlation statistics and protocol aggregates
//! - [`distortion`]: parameterized distortion bank with ordered intensity schedules
//! - [`vlm`]: embedding-provider interface, antonym-pair scoring, pseudo-label stores
//! - [`promptsel`]: candidate ingestion and proxy-task prompt-pair selection
//! - [`model`]: shared backbone + five attribute heads + MOS regressor, checkpoints
//! - [`training`]: ranking/L2 pretraining losses and the pretrain/fine-tune loops
//! - [`evaluation`]: five-crop inference, split protocols, pairwise agreement
//! - [`synthetic`]: procedural image corpora used by tests and desk-scale runs

pub mod core;
pub mod distortion;
pub mod evaluation;
pub mod metrics;
pub mod model;
pub mod promptsel;
pub mod synthetic;
pub mod training;
mod util;
pub mod vlm;

pub use crate::core::{Attribute, DatasetManifest, ImageRaster, PerAttribute, RunConfig};
