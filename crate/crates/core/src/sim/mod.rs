//! Synthetic billiard worlds rendered as boundary images.

mod raster;
mod sample;
mod world;

pub use raster::{midpoint_circle, rasterize, strip_border};
pub use sample::{sample_sequence, sample_world, simulate, Sequence, SimConfig, PLACEMENT_BUDGET};
pub use world::{Ball, BilliardWorld, StepEvents};
