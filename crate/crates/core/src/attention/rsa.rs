use crate::autodiff::{BoundParams, Graph, Init, ParamSpec, Var};
use crate::error::{Error, Result};
use crate::scalar::Real;

use super::config::RsaConfig;
use super::kernel::{AttentionKernel, CorrelationState};
use super::window::{scale_aggregate, WindowGrid};

/// Recurrent scale-wise attention.
///
/// Each head projects queries from the raw window and keys/values from the
/// window pooled at the head's scale, then blends its fresh correlation with
/// the previous iteration's:
///
/// `c' = λ · Q Kᵀ / √d + (1 − λ) · c`, `out = softmax(c') V`.
///
/// `λ` is one unconstrained learnable scalar per head, shared by all windows.
#[derive(Clone, Copy, Debug, Default)]
pub struct RecurrentScaleAttention;

pub(crate) fn projection_specs(cfg: &RsaConfig, prefix: &str) -> Vec<ParamSpec> {
    let (c, d) = (cfg.embed_dim, cfg.head_dim());
    let mut specs = Vec::new();
    for h in 0..cfg.num_heads() {
        for p in ["q", "k", "v"] {
            specs.push(ParamSpec::new(format!("{prefix}.head{h}.{p}"), vec![c, d], Init::FanIn(c)));
        }
    }
    specs.push(ParamSpec::new(format!("{prefix}.proj.weight"), vec![c, c], Init::FanIn(c)));
    specs.push(ParamSpec::new(format!("{prefix}.proj.bias"), vec![c], Init::Zeros));
    specs
}

pub(crate) fn output_projection<T: Real>(
    g: &mut Graph<T>,
    heads: &[Var],
    params: &BoundParams,
    prefix: &str,
) -> Result<Var> {
    let joined = g.concat(heads)?;
    let w = params.get(&format!("{prefix}.proj.weight"))?;
    let b = params.get(&format!("{prefix}.proj.bias"))?;
    g.linear(joined, w, Some(b))
}

impl<T: Real> AttentionKernel<T> for RecurrentScaleAttention {
    fn name(&self) -> &'static str {
        "rsa"
    }

    fn param_specs(&self, cfg: &RsaConfig, prefix: &str) -> Vec<ParamSpec> {
        let mut specs = projection_specs(cfg, prefix);
        specs.push(ParamSpec::new(format!("{prefix}.lambda"), vec![cfg.num_heads()], Init::Constant(cfg.lambda_init)));
        specs
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
        let k = geo.window;
        if k != cfg.window_size || geo.channels != cfg.embed_dim {
            return Err(Error::shape("rsa", format!("grid {geo:?} does not match config")));
        }
        let n_heads = cfg.num_heads();
        let corr_shape = [geo.num_windows(), geo.tokens(), geo.tokens()];
        if let Some(heads) = state.heads() {
            if heads.len() != n_heads || heads.iter().any(|&c| g.shape(c) != corr_shape) {
                return Err(Error::shape("rsa", format!("correlation state does not match {n_heads} heads of {corr_shape:?}")));
            }
        }
        let lambda = params.get(&format!("{prefix}.lambda"))?;
        let scale = T::one() / T::lit(cfg.head_dim() as f64).sqrt();
        let mut pooled: Vec<(usize, Var)> = Vec::new();
        let mut outs = Vec::with_capacity(n_heads);
        let mut next = Vec::with_capacity(n_heads);
        for (h, s) in cfg.head_scales().into_iter().enumerate() {
            let src = match pooled.iter().find(|p| p.0 == s) {
                Some(&(_, v)) => v,
                None => {
                    let v = scale_aggregate(g, grid.windows, k, s)?;
                    pooled.push((s, v));
                    v
                }
            };
            let pq = params.get(&format!("{prefix}.head{h}.q"))?;
            let pk = params.get(&format!("{prefix}.head{h}.k"))?;
            let pv = params.get(&format!("{prefix}.head{h}.v"))?;
            let q = g.matmul(grid.windows, pq)?;
            let key = g.matmul(src, pk)?;
            let val = g.matmul(src, pv)?;
            let scores = g.matmul_ex(q, key, true)?;
            let corr = g.blend(scores, state.head(h), lambda, h, scale)?;
            let attn = g.softmax(corr)?;
            outs.push(g.matmul(attn, val)?);
            next.push(corr);
        }
        let out = output_projection(g, &outs, params, prefix)?;
        Ok((out, CorrelationState::from_heads(next, state.iteration() + 1)))
    }
}
