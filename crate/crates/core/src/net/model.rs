use std::sync::Arc;

use crate::attention::{rfb_forward, rfb_param_specs, AttentionKernel, AttentionRegistry, CorrelationState};
use crate::autodiff::{BoundParams, ConvOptions, Graph, Init, ParamSpec, ParamStore, Var};
use crate::error::{Error, Result};
use crate::kspace::{zero_fill, ComplexImage, KSpace, SamplingMask};
use crate::scalar::Real;
use crate::tensor::Tensor;

use super::config::{ConvLayer, ModelConfig, UnitPlan};

/// Hidden feature and per-layer correlation of one unit. `hidden = None`
/// stands for the all-zero feature of the first iteration.
#[derive(Clone, Debug, Default)]
pub struct UnitState {
    pub hidden: Option<Var>,
    pub correlation: Vec<CorrelationState>,
}

/// Recurrent state of every active unit, in unit order.
#[derive(Clone, Debug, Default)]
pub struct RecurrentState {
    pub units: Vec<UnitState>,
}

/// Graph handles produced by an unrolled forward pass.
#[derive(Clone, Debug)]
pub struct ForwardOutput {
    pub zero_filled: Var,
    /// `ȳ^(t+1)` for `t = 1..=T`.
    pub iterates: Vec<Var>,
    /// Data-consistent output of each active unit, per iteration.
    pub unit_outputs: Vec<Vec<Var>>,
}

impl ForwardOutput {
    pub fn final_output(&self) -> Var {
        *self.iterates.last().expect("at least one iteration")
    }
}

/// The unrolled network for one configuration and attention kernel.
pub struct ReconFormer<T: Real> {
    config: ModelConfig,
    kernel: Arc<dyn AttentionKernel<T>>,
    units: Vec<UnitPlan>,
}

impl<T: Real> ReconFormer<T> {
    pub fn new(config: ModelConfig) -> Result<Self> {
        Self::with_registry(config, &AttentionRegistry::default())
    }

    pub fn with_registry(config: ModelConfig, registry: &AttentionRegistry<T>) -> Result<Self> {
        config.validate()?;
        let kernel = registry.get(&config.attention)?;
        let units = config.active_units().into_iter().map(|u| config.unit_plan(u)).collect::<Result<_>>()?;
        Ok(Self { config, kernel, units })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn units(&self) -> &[UnitPlan] {
        &self.units
    }

    fn unit(&self, index: usize) -> Result<&UnitPlan> {
        self.units
            .iter()
            .find(|u| u.index == index)
            .ok_or_else(|| Error::config(format!("unit ru{index} is not active")))
    }

    pub fn param_specs(&self) -> Vec<ParamSpec> {
        let conv_specs = |prefix: String, layers: &[ConvLayer]| {
            layers
                .iter()
                .enumerate()
                .flat_map(|(j, l)| {
                    [
                        ParamSpec::new(format!("{prefix}.conv{j}.weight"), l.weight_shape(), Init::FanIn(9 * l.cin)),
                        ParamSpec::new(format!("{prefix}.conv{j}.bias"), vec![l.cout], Init::Zeros),
                    ]
                })
                .collect::<Vec<_>>()
        };
        let mut specs = Vec::new();
        for u in &self.units {
            let p = u.prefix();
            specs.extend(conv_specs(format!("{p}.enc"), &u.encoder));
            specs.extend(rfb_param_specs(self.kernel.as_ref(), &u.rsa, self.config.rfb_depth, &format!("{p}.rfb")));
            specs.extend(conv_specs(format!("{p}.dec"), &u.decoder));
        }
        if self.config.use_rm {
            specs.extend(conv_specs("rm".to_string(), &self.refine_layers()));
        }
        specs
    }

    fn refine_layers(&self) -> [ConvLayer; 2] {
        let c = self.config.channels;
        [
            ConvLayer { stride: 1, transposed: false, cin: 2 * self.units.len(), cout: c, relu: true },
            ConvLayer { stride: 1, transposed: false, cin: c, cout: 2, relu: false },
        ]
    }

    pub fn init_params(&self, seed: u64) -> Result<ParamStore<T>> {
        ParamStore::from_specs(&self.param_specs(), seed)
    }

    fn conv_stack(&self, g: &mut Graph<T>, x: Var, layers: &[ConvLayer], params: &BoundParams, prefix: &str) -> Result<Var> {
        let mut h = x;
        for (j, l) in layers.iter().enumerate() {
            let w = params.get(&format!("{prefix}.conv{j}.weight"))?;
            let b = params.get(&format!("{prefix}.conv{j}.bias"))?;
            let opts = if l.transposed { ConvOptions::transposed(l.stride) } else { ConvOptions::same(l.stride) };
            h = g.conv2d(h, w, Some(b), opts)?;
            if l.relu {
                h = g.relu(h)?;
            }
        }
        Ok(h)
    }

    /// `[B, H, W, 2]` → `[B, H/S, W/S, C]`.
    pub fn encoder_forward(&self, g: &mut Graph<T>, unit: usize, y: Var, params: &BoundParams) -> Result<Var> {
        let u = self.unit(unit)?;
        let s = g.shape(y);
        if s.len() != 4 || s[1] != self.config.height || s[2] != self.config.width || s[3] != 2 {
            return Err(Error::shape("encoder_forward", format!("ru{unit} expects [B, {}, {}, 2], got {s:?}", self.config.height, self.config.width)));
        }
        self.conv_stack(g, y, &u.encoder, params, &format!("{}.enc", u.prefix()))
    }

    /// `[B, H/S, W/S, C]` → `[B, H, W, 2]`.
    pub fn decoder_forward(&self, g: &mut Graph<T>, unit: usize, feat: Var, params: &BoundParams) -> Result<Var> {
        let u = self.unit(unit)?;
        let s = g.shape(feat);
        if s.len() != 4 || s[1] != u.feature_h || s[2] != u.feature_w || s[3] != self.config.channels {
            return Err(Error::shape(
                "decoder_forward",
                format!("ru{unit} expects [B, {}, {}, {}], got {s:?}", u.feature_h, u.feature_w, self.config.channels),
            ));
        }
        self.conv_stack(g, feat, &u.decoder, params, &format!("{}.dec", u.prefix()))
    }

    pub fn initial_state(&self) -> RecurrentState {
        RecurrentState {
            units: self
                .units
                .iter()
                .map(|_| UnitState { hidden: None, correlation: vec![CorrelationState::zeros(); self.config.rfb_depth] })
                .collect(),
        }
    }

    /// One recurrent unit: `feat = RFB(h, c) + Enc(y_in)`, then decode and
    /// enforce data consistency. Updates `state` with `feat` and the new
    /// correlations.
    #[allow(clippy::too_many_arguments)]
    pub fn ru_forward(
        &self,
        g: &mut Graph<T>,
        unit: usize,
        y_in: Var,
        state: &mut UnitState,
        kspace: &[KSpace<T>],
        masks: &[SamplingMask],
        params: &BoundParams,
    ) -> Result<Var> {
        let u = self.unit(unit)?;
        let enc = self.encoder_forward(g, unit, y_in, params)?;
        let hidden = match state.hidden {
            Some(h) => h,
            None => g.constant(Tensor::zeros(g.shape(enc))),
        };
        if g.shape(hidden) != g.shape(enc) {
            return Err(Error::shape("ru_forward", format!("hidden state {:?} vs encoder {:?}", g.shape(hidden), g.shape(enc))));
        }
        let (rfb, corr) = rfb_forward(
            g,
            self.kernel.as_ref(),
            &u.rsa,
            hidden,
            &state.correlation,
            params,
            &format!("{}.rfb", u.prefix()),
        )?;
        let feat = g.add(rfb, enc)?;
        state.hidden = Some(feat);
        state.correlation = corr;
        let dec = self.decoder_forward(g, unit, feat, params)?;
        g.data_consistency(dec, kspace, masks)
    }

    /// Fuses the unit outputs: `DC(conv(relu(conv(concat ys))) + ys.last)`.
    pub fn refine_module(
        &self,
        g: &mut Graph<T>,
        ys: &[Var],
        kspace: &[KSpace<T>],
        masks: &[SamplingMask],
        params: &BoundParams,
    ) -> Result<Var> {
        if ys.len() != self.units.len() {
            return Err(Error::shape("refine_module", format!("expected {} unit outputs, got {}", self.units.len(), ys.len())));
        }
        let joined = g.concat(ys)?;
        let r = self.conv_stack(g, joined, &self.refine_layers(), params, "rm")?;
        let r = g.add(r, *ys.last().unwrap())?;
        g.data_consistency(r, kspace, masks)
    }

    /// One full iteration: every active unit in order, then the refine
    /// module (or the last unit's output when it is disabled).
    pub fn iteration(
        &self,
        g: &mut Graph<T>,
        y: Var,
        state: &mut RecurrentState,
        kspace: &[KSpace<T>],
        masks: &[SamplingMask],
        params: &BoundParams,
    ) -> Result<(Var, Vec<Var>)> {
        let mut outs = Vec::with_capacity(self.units.len());
        let mut cur = y;
        for (u, st) in self.units.iter().zip(state.units.iter_mut()) {
            cur = self.ru_forward(g, u.index, cur, st, kspace, masks, params)?;
            outs.push(cur);
        }
        let next = if self.config.use_rm { self.refine_module(g, &outs, kspace, masks, params)? } else { cur };
        Ok((next, outs))
    }

    /// Zero-filled images of a batch as a `[B, H, W, 2]` constant.
    pub fn zero_filled_input(&self, g: &mut Graph<T>, kspace: &[KSpace<T>], masks: &[SamplingMask]) -> Result<Var> {
        let (h, w) = (self.config.height, self.config.width);
        if kspace.is_empty() || kspace.len() != masks.len() {
            return Err(Error::shape("model_forward", format!("{} spectra with {} masks", kspace.len(), masks.len())));
        }
        let mut data = Vec::with_capacity(kspace.len() * h * w * 2);
        for (k, m) in kspace.iter().zip(masks) {
            if k.height() != h || k.width() != w {
                return Err(Error::shape(
                    "model_forward",
                    format!("spectrum {}x{} does not match model geometry {h}x{w}", k.height(), k.width()),
                ));
            }
            data.extend_from_slice(zero_fill(k, m)?.data());
        }
        Ok(g.constant(Tensor::new(vec![kspace.len(), h, w, 2], data)?))
    }

    /// Unrolls `unroll` iterations from the zero-filled reconstruction with
    /// fresh (zero) recurrent state.
    pub fn forward(
        &self,
        g: &mut Graph<T>,
        params: &BoundParams,
        kspace: &[KSpace<T>],
        masks: &[SamplingMask],
        unroll: usize,
    ) -> Result<ForwardOutput> {
        if unroll == 0 {
            return Err(Error::config("unroll length must be at least 1"));
        }
        let zero_filled = self.zero_filled_input(g, kspace, masks)?;
        let mut state = self.initial_state();
        let mut y = zero_filled;
        let mut iterates = Vec::with_capacity(unroll);
        let mut unit_outputs = Vec::with_capacity(unroll);
        for _ in 0..unroll {
            let (next, outs) = self.iteration(g, y, &mut state, kspace, masks, params)?;
            iterates.push(next);
            unit_outputs.push(outs);
            y = next;
        }
        Ok(ForwardOutput { zero_filled, iterates, unit_outputs })
    }

    /// Inference without gradients; returns one image per sample.
    pub fn reconstruct(
        &self,
        store: &ParamStore<T>,
        kspace: &[KSpace<T>],
        masks: &[SamplingMask],
        unroll: usize,
    ) -> Result<Vec<ComplexImage<T>>> {
        let mut g = Graph::new();
        let params = store.bind_frozen(&mut g);
        let out = self.forward(&mut g, &params, kspace, masks, unroll)?;
        split_batch(&g, out.final_output(), self.config.height, self.config.width)
    }
}

/// Splits a `[B, H, W, 2]` graph value into per-sample images.
pub(crate) fn split_batch<T: Real>(g: &Graph<T>, v: Var, h: usize, w: usize) -> Result<Vec<ComplexImage<T>>> {
    g.data(v)?.chunks_exact(h * w * 2).map(|c| ComplexImage::new(h, w, c.to_vec())).collect()
}

/// Deterministic parameter initialization for `config`.
pub fn init_params<T: Real>(config: &ModelConfig, seed: u64) -> Result<ParamStore<T>> {
    ReconFormer::<T>::new(config.clone())?.init_params(seed)
}

pub fn count_params<T: Real>(params: &ParamStore<T>) -> usize {
    params.count_params()
}
