//! Volumetric augmentation, 2D-to-3D kernel inflation and evaluation tools
//! for imbalanced binary video classification.
//!
//! Volumes are `(frames, height, width, channels)` in C order; see
//! [`volume`]. Every random draw flows through a [`rng::RandomStream`], so
//! results depend only on the seed and sample index.

pub mod heatmap;
pub mod inflate;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod reliability;
pub mod rng;
pub mod roi;
pub mod sampler;
pub mod tensor;
pub mod transforms;
pub mod volume;

pub use pipeline::{Pipeline, Step};
pub use rng::RandomStream;
pub use tensor::{Tensor, TensorDType, TensorMap};
pub use transforms::Transform;
pub use volume::{Axis, Cuboid, DType, Shape, Volume, VolumeData};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
