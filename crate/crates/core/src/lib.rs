pub mod config;
pub mod encoders;
pub mod error;
pub mod eval;
pub mod expressivity;
pub mod generators;
pub mod graph;
pub mod heuristics;
pub mod models;
pub mod nn;
pub mod paths;
pub mod rng;
pub mod scalar;
pub mod symmetry;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use graph::{Graph, Path};
pub use scalar::Scalar;

pub type Tensor64 = tensor::Tensor<f64>;
pub type Tensor32 = tensor::Tensor<f32>;
pub type Tape64 = tensor::Tape<f64>;
pub type Tape32 = tensor::Tape<f32>;
pub type ParamSet64 = tensor::ParamSet<f64>;
pub type ParamSet32 = tensor::ParamSet<f32>;
pub type LinkModel64 = models::LinkModel<f64>;
pub type LinkModel32 = models::LinkModel<f32>;
