pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod image;
pub mod io;
pub mod model;
pub mod ops;
pub mod optim;
pub mod params;
pub mod pipeline;
pub mod rng;
pub mod scalar;
pub mod sim;
pub mod tape;
pub mod tensor;

pub use error::{DecodeError, Error, Result};
pub use image::BoundaryImage;
pub use optim::{AdamConfig, AdamState};
pub use params::{ParamStore, Parameter};
pub use rng::SeededRng;
pub use scalar::Scalar;
pub use tape::{Tape, Var};
pub use tensor::Tensor;

pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;
pub type Tape32 = Tape<f32>;
pub type Tape64 = Tape<f64>;
