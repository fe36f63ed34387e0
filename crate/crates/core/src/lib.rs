//! Signed-distance-field guidance for volumetric drilling.
//!
//! Labelmaps are turned into one exact signed distance field per anatomy at
//! start-up ([`sdf::build_atlas`]). At runtime a tool-tip position is resolved
//! against all fields ([`query::nearest_anatomy`]) and converted into visual,
//! audio and haptic guidance ([`feedback::compose_frame`]). [`drillsim`]
//! replays recorded tool paths to score guidance offline.

pub mod checksum;
pub mod config;
pub mod drillsim;
pub mod error;
pub mod feedback;
pub mod grid;
pub mod phantom;
pub mod query;
pub mod sdf;
pub mod throughput;
pub mod volume;

pub use error::{Error, Result};
pub use feedback::{FeedbackConfig, FeedbackFrame, VisualCue};
pub use grid::{Grid3, Mask};
pub use query::{ProximityResult, QueryOptions, SampleMode};
pub use sdf::{SdfAtlas, SdfVolume};
pub use volume::{LabelVolume, Mat3, Vec3, VoxelGeometry};
