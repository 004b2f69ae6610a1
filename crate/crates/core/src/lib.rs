//! Desk-scale benchmark for feature attribution methods on image classifiers.

pub mod attribution;
pub mod autodiff;
pub mod data;
pub mod error;
pub mod harness;
pub mod masking;
pub mod metrics;
pub mod seed;
pub mod segmentation;
pub mod stats;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
