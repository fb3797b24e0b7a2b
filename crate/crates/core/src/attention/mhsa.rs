use crate::autodiff::{BoundParams, Graph, ParamSpec, Var};
use crate::error::{Error, Result};
use crate::scalar::Real;

use super::config::RsaConfig;
use super::kernel::{AttentionKernel, CorrelationState};
use super::rsa::{output_projection, projection_specs};
use super::window::WindowGrid;

/// Standard windowed multi-head self-attention: every head works at scale
/// ×1 and no correlation is carried between iterations.
#[derive(Clone, Copy, Debug, Default)]
pub struct MultiHeadSelfAttention;

impl<T: Real> AttentionKernel<T> for MultiHeadSelfAttention {
    fn name(&self) -> &'static str {
        "mhsa"
    }

    fn param_specs(&self, cfg: &RsaConfig, prefix: &str) -> Vec<ParamSpec> {
        projection_specs(cfg, prefix)
    }

    fn forward(
        &self,
        g: &mut Graph<T>,
        cfg: &RsaConfig,
        grid: &WindowGrid,
        state: &CorrelationState,
        params: &BoundParams,
        prefix: &str,
    ) -> Result<(Var, CorrelationState)> {
        let geo = grid.geometry;
        if geo.window != cfg.window_size || geo.channels != cfg.embed_dim {
            return Err(Error::shape("mhsa", format!("grid {geo:?} does not match config")));
        }
        let scale = T::one() / T::lit(cfg.head_dim() as f64).sqrt();
        let mut outs = Vec::with_capacity(cfg.num_heads());
        for h in 0..cfg.num_heads() {
            let pq = params.get(&format!("{prefix}.head{h}.q"))?;
            let pk = params.get(&format!("{prefix}.head{h}.k"))?;
            let pv = params.get(&format!("{prefix}.head{h}.v"))?;
            let q = g.matmul(grid.windows, pq)?;
            let key = g.matmul(grid.windows, pk)?;
            let val = g.matmul(grid.windows, pv)?;
            let scores = g.matmul_ex(q, key, true)?;
            let scores = g.scale(scores, scale)?;
            let attn = g.softmax(scores)?;
            outs.push(g.matmul(attn, val)?);
        }
        let out = output_projection(g, &outs, params, prefix)?;
        Ok((out, CorrelationState::stateless(state.iteration() + 1)))
    }
}
