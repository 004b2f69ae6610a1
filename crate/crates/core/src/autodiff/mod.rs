//! Tensor layers and a reverse-mode differentiation engine with swappable ReLU rules.

pub mod container;
mod layer;
mod model;

pub use layer::{Layer, LayerKind};
pub use model::{BackpropRule, CnnWidths, Model, ParamGrads, Tape, TapeNode};
