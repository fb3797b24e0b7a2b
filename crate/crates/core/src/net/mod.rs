//! The recurrent reconstruction network: three recurrent units at different
//! scales, the refine module and the unrolled forward pass.

mod config;
mod model;

pub use config::{ConvLayer, ModelConfig, UnitPlan};
pub use model::{count_params, init_params, ForwardOutput, ReconFormer, RecurrentState, UnitState};
