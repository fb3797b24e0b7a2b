use crate::error::{Error, Result};

/// Attention hyper-parameters of one transformer block.
#[derive(Clone, Debug, PartialEq)]
pub struct RsaConfig {
    pub embed_dim: usize,
    pub window_size: usize,
    /// Pooling extent of each scale head group, odd and at most `window_size`.
    pub scales: Vec<usize>,
    pub heads_per_scale: usize,
    pub mlp_ratio: f64,
    pub lambda_init: f64,
    pub layer_norm_eps: f64,
}

impl Default for RsaConfig {
    fn default() -> Self {
        Self {
            embed_dim: 24,
            window_size: 4,
            scales: vec![1, 3],
            heads_per_scale: 1,
            mlp_ratio: 2.0,
            lambda_init: 0.9,
            layer_norm_eps: 1e-5,
        }
    }
}

impl RsaConfig {
    pub fn num_heads(&self) -> usize {
        self.scales.len() * self.heads_per_scale
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.num_heads().max(1)
    }

    pub fn mlp_hidden(&self) -> usize {
        ((self.embed_dim as f64) * self.mlp_ratio).round().max(1.0) as usize
    }

    /// Scale of every head, in head order.
    pub fn head_scales(&self) -> Vec<usize> {
        self.scales.iter().flat_map(|&s| std::iter::repeat(s).take(self.heads_per_scale)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.scales.is_empty() || self.heads_per_scale == 0 {
            return Err(Error::config("attention needs at least one head"));
        }
        if self.embed_dim == 0 || self.embed_dim % self.num_heads() != 0 {
            return Err(Error::config(format!(
                "embed_dim {} is not divisible by {} heads",
                self.embed_dim,
                self.num_heads()
            )));
        }
        if self.window_size == 0 {
            return Err(Error::config("window size must be positive"));
        }
        for &s in &self.scales {
            if s % 2 == 0 || s > self.window_size {
                return Err(Error::config(format!(
                    "scale {s} must be odd and at most the window size {}",
                    self.window_size
                )));
            }
        }
        if !(self.mlp_ratio > 0.0) {
            return Err(Error::config("mlp_ratio must be positive"));
        }
        Ok(())
    }
}
