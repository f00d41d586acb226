//! Label-wise and overall global explanations for aligned image modalities,
//! validated with progressive erasing and restoration (PEPPR).
//!
//! The crate ships a synthetic aligned modality, a small convolutional
//! multi-label classifier trained from scratch, GradCAM explanations, the
//! aggregation into global maps, the PEPPR protocol and reporting helpers.

pub mod aggregate;
pub mod cli;
pub mod error;
pub mod gradcam;
pub mod image;
pub mod metrics;
pub mod model;
pub mod peppr;
pub mod report;
pub mod rng;
pub mod synthdata;

pub use error::{Error, Result};
pub use image::Image;
