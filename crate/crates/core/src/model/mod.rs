//! Multi-scale context model: configuration, parameters and forward pass.

mod cmsc;
mod config;

pub use cmsc::{
    downsample_pyramid, parameter_count, supervision_targets, training_loss, BBox, Cmsc, Footprint, ForwardOutput,
    ForwardVars,
};
pub use config::{CmscConfig, LevelSpec};
