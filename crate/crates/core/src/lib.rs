//! Arbitrary style transfer in feature space.
//!
//! Content and style features are matched channel-wise ([`align::moment_match`])
//! and the style point cloud is then rigidly aligned onto the content point
//! cloud with a closed-form orthogonal Procrustes solve
//! ([`align::rigid_align`]). A deterministic, exactly invertible multi-level
//! [`codec`] stands in for a pretrained encoder/decoder pair so the whole
//! cascade in [`pipeline`] runs end-to-end. [`metrics`] carries the
//! Gram-based content and style losses and a small timing harness.

pub mod align;
pub mod codec;
pub mod error;
pub mod feature;
pub mod image;
mod linalg;
pub mod metrics;
pub mod pipeline;
pub mod synth;

pub use align::{AlignOptions, AlignmentResult, Mask, ScaleVariant, ThinRotation};
pub use codec::Codec;
pub use error::{Error, Result};
pub use feature::{AxisConfig, ChannelStats, FeatureMap, PointCloud};
pub use image::ImageBuffer;
pub use pipeline::{DeepestOp, PipelineConfig, StyleEntry, StyleSpec, StylizeOutput};
