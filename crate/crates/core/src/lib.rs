//! Multi-scale sliding-window spotting of brief facial events in video.
//!
//! The pipeline rescales a grayscale volume in time ([`temporal_scale`]),
//! slides a fixed-length window over every level ([`sampling`]), describes
//! each window with a spatio-temporal histogram ([`descriptors`]), scores it
//! with a linear SVM ([`classifier`]) and merges the surviving windows with
//! temporal non-maximum suppression ([`spotting`]). [`evaluation`] implements
//! the benchmark protocols and DET-curve measurements.

pub mod classifier;
pub mod descriptors;
pub mod evaluation;
pub mod interval;
pub mod manifest;
pub mod sampling;
pub mod spotting;
pub mod temporal_scale;
pub mod volume;

pub use interval::Interval;
pub use manifest::{load_manifest, DatasetManifest, VideoRecord};
pub use volume::{load_volume, VideoVolume};
