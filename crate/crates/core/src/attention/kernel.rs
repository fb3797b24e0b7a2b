use std::collections::BTreeMap;
use std::sync::Arc;

use crate::autodiff::{BoundParams, Graph, ParamSpec, Var};
use crate::error::{Error, Result};
use crate::scalar::Real;

use super::config::RsaConfig;
use super::mhsa::MultiHeadSelfAttention;
use super::rsa::RecurrentScaleAttention;
use super::window::WindowGrid;

/// Per-head correlation matrices `[num_windows, K², K²]` carried between
/// unrolled iterations. The initial state is all zeros and stores nothing.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CorrelationState {
    heads: Option<Vec<Var>>,
    iteration: usize,
}

impl CorrelationState {
    pub fn zeros() -> Self {
        Self::default()
    }

    pub fn from_heads(heads: Vec<Var>, iteration: usize) -> Self {
        Self { heads: Some(heads), iteration }
    }

    pub fn heads(&self) -> Option<&[Var]> {
        self.heads.as_deref()
    }

    pub fn is_zero(&self) -> bool {
        self.heads.is_none()
    }

    /// Number of updates applied since the zero state.
    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub(crate) fn stateless(iteration: usize) -> Self {
        Self { heads: None, iteration }
    }

    pub(crate) fn head(&self, h: usize) -> Option<Var> {
        self.heads.as_ref().map(|v| v[h])
    }
}

/// One attention variant operating on a window grid.
pub trait AttentionKernel<T: Real>: Send + Sync {
    fn name(&self) -> &'static str;

    /// Parameters under `prefix` (e.g. `ru1.rfb.layer0.attn`).
    fn param_specs(&self, cfg: &RsaConfig, prefix: &str) -> Vec<ParamSpec>;

    /// Attends within every window. Returns `[num_windows, K², C]` and the
    /// correlation state for the next iteration.
    fn forward(
        &self,
        g: &mut Graph<T>,
        cfg: &RsaConfig,
        grid: &WindowGrid,
        state: &CorrelationState,
        params: &BoundParams,
        prefix: &str,
    ) -> Result<(Var, CorrelationState)>;
}

/// Attention kernels selectable by name.
pub struct AttentionRegistry<T: Real> {
    kernels: BTreeMap<&'static str, Arc<dyn AttentionKernel<T>>>,
}

impl<T: Real> Default for AttentionRegistry<T> {
    fn default() -> Self {
        let mut r = Self::empty();
        r.register(Arc::new(RecurrentScaleAttention));
        r.register(Arc::new(MultiHeadSelfAttention));
        r
    }
}

impl<T: Real> AttentionRegistry<T> {
    pub fn empty() -> Self {
        Self { kernels: BTreeMap::new() }
    }

    pub fn register(&mut self, kernel: Arc<dyn AttentionKernel<T>>) {
        self.kernels.insert(kernel.name(), kernel);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn AttentionKernel<T>>> {
        self.kernels.get(name).cloned().ok_or_else(|| {
            Error::config(format!("unknown attention kernel {name:?}; available: {}", self.names().join(", ")))
        })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.kernels.keys().copied().collect()
    }
}
