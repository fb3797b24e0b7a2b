use crate::autodiff::{BoundParams, Graph, Init, ParamSpec, Var};
use crate::error::{Error, Result};
use crate::scalar::Real;

use super::config::RsaConfig;
use super::kernel::{AttentionKernel, CorrelationState};
use super::window::{window_merge, window_partition, WindowGrid};

/// Output of one transformer layer.
#[derive(Clone, Debug)]
pub struct RptlOutput {
    pub feature: Var,
    pub state: CorrelationState,
    /// Cyclic window shift used by this layer.
    pub shift: usize,
}

pub fn rptl_param_specs<T: Real>(kernel: &dyn AttentionKernel<T>, cfg: &RsaConfig, prefix: &str) -> Vec<ParamSpec> {
    let (c, hidden) = (cfg.embed_dim, cfg.mlp_hidden());
    let norm = |name: &str| {
        [
            ParamSpec::new(format!("{prefix}.{name}.gamma"), vec![c], Init::Constant(1.0)),
            ParamSpec::new(format!("{prefix}.{name}.beta"), vec![c], Init::Zeros),
        ]
    };
    let mut specs = norm("norm1").to_vec();
    specs.extend(kernel.param_specs(cfg, &format!("{prefix}.attn")));
    specs.extend(norm("norm2"));
    specs.extend([
        ParamSpec::new(format!("{prefix}.mlp.fc1.weight"), vec![c, hidden], Init::FanIn(c)),
        ParamSpec::new(format!("{prefix}.mlp.fc1.bias"), vec![hidden], Init::Zeros),
        ParamSpec::new(format!("{prefix}.mlp.fc2.weight"), vec![hidden, c], Init::FanIn(hidden)),
        ParamSpec::new(format!("{prefix}.mlp.fc2.bias"), vec![c], Init::Zeros),
    ]);
    specs
}

pub fn rfb_param_specs<T: Real>(
    kernel: &dyn AttentionKernel<T>,
    cfg: &RsaConfig,
    depth: usize,
    prefix: &str,
) -> Vec<ParamSpec> {
    (0..depth).flat_map(|l| rptl_param_specs(kernel, cfg, &format!("{prefix}.layer{l}"))).collect()
}

/// Pre-norm transformer layer on a `[B, H, W, C]` feature:
/// `h' = h + merge(attn(partition(LN(h))))`, `out = h' + MLP(LN(h'))`.
///
/// Odd layers shift the window grid by `K / 2`.
#[allow(clippy::too_many_arguments)]
pub fn rptl_forward<T: Real>(
    g: &mut Graph<T>,
    kernel: &dyn AttentionKernel<T>,
    cfg: &RsaConfig,
    h: Var,
    state: &CorrelationState,
    params: &BoundParams,
    prefix: &str,
    layer_index: usize,
) -> Result<RptlOutput> {
    let shift = if layer_index % 2 == 1 { cfg.window_size / 2 } else { 0 };
    let p = |name: &str| params.get(&format!("{prefix}.{name}"));
    let n1 = g.layer_norm(h, p("norm1.gamma")?, p("norm1.beta")?, cfg.layer_norm_eps)?;
    let grid = window_partition(g, n1, cfg.window_size, shift)?;
    let (attended, next) = kernel.forward(g, cfg, &grid, state, params, &format!("{prefix}.attn"))?;
    let merged = window_merge(g, &WindowGrid { windows: attended, geometry: grid.geometry })?;
    let h1 = g.add(h, merged)?;
    let n2 = g.layer_norm(h1, p("norm2.gamma")?, p("norm2.beta")?, cfg.layer_norm_eps)?;
    let m = g.linear(n2, p("mlp.fc1.weight")?, Some(p("mlp.fc1.bias")?))?;
    let m = g.gelu(m)?;
    let m = g.linear(m, p("mlp.fc2.weight")?, Some(p("mlp.fc2.bias")?))?;
    let feature = g.add(h1, m)?;
    Ok(RptlOutput { feature, state: next, shift })
}

/// A stack of `states.len()` layers with alternating shifts; layer `l` reads
/// and replaces `states[l]`.
pub fn rfb_forward<T: Real>(
    g: &mut Graph<T>,
    kernel: &dyn AttentionKernel<T>,
    cfg: &RsaConfig,
    h: Var,
    states: &[CorrelationState],
    params: &BoundParams,
    prefix: &str,
) -> Result<(Var, Vec<CorrelationState>)> {
    if states.is_empty() {
        return Err(Error::config("transformer block needs at least one layer"));
    }
    let mut feature = h;
    let mut next = Vec::with_capacity(states.len());
    for (l, state) in states.iter().enumerate() {
        let out = rptl_forward(g, kernel, cfg, feature, state, params, &format!("{prefix}.layer{l}"), l)?;
        feature = out.feature;
        next.push(out.state);
    }
    Ok((feature, next))
}
