//! Windowed attention with recurrent correlation state.
//!
//! Attention variants implement [`AttentionKernel`] and are looked up by
//! name in an [`AttentionRegistry`]; the transformer layer and block in
//! [`layer`] are generic over the selected kernel.

mod config;
mod kernel;
mod layer;
mod mhsa;
mod rsa;
mod window;

pub use config::RsaConfig;
pub use kernel::{AttentionKernel, AttentionRegistry, CorrelationState};
pub use layer::{rfb_forward, rfb_param_specs, rptl_forward, rptl_param_specs, RptlOutput};
pub use mhsa::MultiHeadSelfAttention;
pub use rsa::RecurrentScaleAttention;
pub use window::{scale_aggregate, window_merge, window_partition, WindowGeometry, WindowGrid};
