//! Minimal reverse-mode automatic differentiation over dense tensors.

mod adam;
mod conv;
mod gradcheck;
mod graph;
mod ops;
mod params;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use conv::{ConvOptions, Padding};
pub use gradcheck::{finite_diff_gradcheck, gradcheck_coords, gradcheck_params, GradCheck};
pub use graph::{Graph, Var};
pub use params::{init_truncated_normal, BoundParams, Init, Param, ParamSpec, ParamStore};
