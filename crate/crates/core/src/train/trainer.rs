use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;

use crate::autodiff::{adam_step, AdamConfig, AdamState, Graph, ParamStore};
use crate::data::{load_dataset, save_checkpoint, Sample};
use crate::error::{Error, Result};
use crate::net::ReconFormer;
use crate::rng::{stream, SHUFFLE_STREAM};
use crate::scalar::Real;
use crate::tensor::Tensor;

use super::config::TrainConfig;

/// One line of the loss log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossRecord {
    pub step: usize,
    pub loss: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<T: Real> {
    pub params: ParamStore<T>,
    pub optimizer: AdamState<T>,
    pub log: Vec<LossRecord>,
    pub seconds: f64,
}

impl<T: Real> TrainOutcome<T> {
    /// The loss log as `step,loss,seconds` CSV.
    pub fn log_csv(&self) -> String {
        let mut out = String::from("step,loss,seconds\n");
        for r in &self.log {
            let _ = writeln!(out, "{},{:e},{:.3}", r.step, r.loss, r.seconds);
        }
        out
    }
}

/// Deterministic minibatch order: each epoch is a fresh permutation drawn
/// from the shuffle stream of `seed`.
struct Batches {
    order: Vec<usize>,
    cursor: usize,
    rng: rand_chacha::ChaCha8Rng,
}

impl Batches {
    fn new(n: usize, seed: u64) -> Self {
        Self { order: (0..n).collect(), cursor: n, rng: stream(seed, SHUFFLE_STREAM) }
    }

    fn next(&mut self, size: usize) -> Vec<usize> {
        let mut batch = Vec::with_capacity(size);
        while batch.len() < size {
            if self.cursor == self.order.len() {
                self.order.shuffle(&mut self.rng);
                self.cursor = 0;
            }
            batch.push(self.order[self.cursor]);
            self.cursor += 1;
        }
        batch
    }
}

/// Minimizes the mean ℓ1 error between the final iterate and the ground
/// truth (both as two-channel images) over minibatches of `samples`.
pub fn train_samples<T: Real>(cfg: &TrainConfig, samples: &[Sample<T>]) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::config("training set is empty"));
    }
    let (h, w) = (cfg.model.height, cfg.model.width);
    if let Some(s) = samples.iter().find(|s| s.ground_truth.height() != h || s.ground_truth.width() != w) {
        return Err(Error::shape(
            "train",
            format!(
                "sample {} is {}x{}, model expects {h}x{w}",
                s.id,
                s.ground_truth.height(),
                s.ground_truth.width()
            ),
        ));
    }
    let model = ReconFormer::<T>::new(cfg.model.clone())?;
    let mut params = model.init_params(cfg.seed)?;
    let mut optimizer = AdamState::new(AdamConfig { lr: cfg.lr, ..AdamConfig::default() });
    let batch_size = cfg.batch_size.min(samples.len());
    let total = cfg.total_steps(samples.len());
    let mut batches = Batches::new(samples.len(), cfg.seed);
    let mut log = Vec::with_capacity(total);
    let start = Instant::now();
    for step in 1..=total {
        let idx = batches.next(batch_size);
        let kspace: Vec<_> = idx.iter().map(|&i| samples[i].kspace.clone()).collect();
        let masks: Vec<_> = idx.iter().map(|&i| samples[i].mask.clone()).collect();
        let mut target = Vec::with_capacity(batch_size * h * w * 2);
        idx.iter().for_each(|&i| target.extend_from_slice(samples[i].ground_truth.data()));

        let at_step = |e: Error| match e {
            Error::NonFinite(op) => Error::domain("train", format!("non-finite value from {op} at step {step}")),
            other => other,
        };
        let mut g = Graph::new();
        let bound = params.bind(&mut g);
        let out = model.forward(&mut g, &bound, &kspace, &masks, cfg.model.unroll).map_err(at_step)?;
        let tgt = g.constant(Tensor::new(vec![batch_size, h, w, 2], target)?);
        let loss = g.l1_loss(out.final_output(), tgt).map_err(at_step)?;
        let loss_value = g.data(loss)?[0].as_f64();
        g.backward(loss)?;
        params.collect_grads(&g, &bound);
        let norm = params.clip_grad_norm(cfg.grad_clip);
        if !norm.is_finite() {
            return Err(Error::domain("train", format!("non-finite gradient norm at step {step}")));
        }
        adam_step(&mut params, &mut optimizer)?;
        let record = LossRecord { step, loss: loss_value, seconds: start.elapsed().as_secs_f64() };
        if cfg.log_every > 0 && (step % cfg.log_every == 0 || step == total) {
            eprintln!("step {step}/{total} loss {:.6} ({:.1}s)", record.loss, record.seconds);
        }
        log.push(record);
    }
    Ok(TrainOutcome { params, optimizer, log, seconds: start.elapsed().as_secs_f64() })
}

/// Trains on the dataset at `cfg.dataset` in `f32` and writes the
/// checkpoint and loss log when their paths are set.
pub fn train(cfg: &TrainConfig) -> Result<TrainOutcome<f32>> {
    let data = load_dataset::<f32>(&cfg.dataset)?;
    let outcome = train_samples(cfg, &data.samples)?;
    if let Some(path) = &cfg.checkpoint {
        save_checkpoint(path, &outcome.params, Some(&outcome.optimizer))?;
    }
    if let Some(path) = &cfg.log {
        std::fs::write(path, outcome.log_csv()).map_err(|e| Error::io(path, e))?;
    }
    Ok(outcome)
}
