use std::fmt::Write as _;
use std::time::Instant;

use crate::data::Sample;
use crate::error::{Error, Result};
use crate::net::{ModelConfig, ReconFormer};
use crate::scalar::Real;

use super::config::TrainConfig;
use super::eval::evaluate;
use super::trainer::train_samples;

/// Which optional components the ablation builds up to. RU₁ is always on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AblationToggles {
    pub ru2: bool,
    pub ru3: bool,
    pub rm: bool,
    pub rptl: bool,
}

impl Default for AblationToggles {
    fn default() -> Self {
        Self { ru2: true, ru3: true, rm: true, rptl: true }
    }
}

/// Cumulative rows: RU₁ only, then each enabled toggle added in the order
/// RU₂, RU₃, RM, RPTL. Rows before RPTL use plain multi-head attention. With
/// every toggle on, the last row is `base` unchanged.
pub fn ablation_variants(base: &ModelConfig, toggles: AblationToggles) -> Vec<(String, ModelConfig)> {
    let mut cfg = base.clone();
    cfg.use_ru2 = false;
    cfg.use_ru3 = false;
    cfg.use_rm = false;
    cfg.attention = "mhsa".to_string();
    let mut rows = vec![("ru1".to_string(), cfg.clone())];
    let mut label = String::from("ru1");
    let steps: [(bool, &str, fn(&mut ModelConfig, &ModelConfig)); 4] = [
        (toggles.ru2, "ru2", |c, _| c.use_ru2 = true),
        (toggles.ru3, "ru3", |c, _| c.use_ru3 = true),
        (toggles.rm, "rm", |c, _| c.use_rm = true),
        (toggles.rptl, "rptl", |c, b| c.attention = b.attention.clone()),
    ];
    for (on, name, apply) in steps {
        if on {
            apply(&mut cfg, base);
            label.push('+');
            label.push_str(name);
            rows.push((label.clone(), cfg.clone()));
        }
    }
    rows
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub label: String,
    pub model: ModelConfig,
    pub params: usize,
    pub seeds: Vec<u64>,
    pub psnr: Vec<f64>,
    pub ssim: Vec<f64>,
    pub seconds: f64,
}

impl AblationRow {
    pub fn median_psnr(&self) -> f64 {
        median(&self.psnr)
    }

    pub fn median_ssim(&self) -> f64 {
        median(&self.ssim)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("variant,params,seeds,median_psnr,median_ssim\n");
        for r in &self.rows {
            let seeds: Vec<String> = r.seeds.iter().map(u64::to_string).collect();
            let _ = writeln!(
                out,
                "{},{},{},{:.4},{:.6}",
                r.label,
                r.params,
                seeds.join(";"),
                r.median_psnr(),
                r.median_ssim()
            );
        }
        out
    }
}

pub(crate) fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn finite_mean_psnr(report: &super::eval::MetricsReport) -> Result<f64> {
    report
        .psnr()
        .mean
        .ok_or_else(|| Error::domain("ablation_run", "every reconstruction is identical to its reference"))
}

/// Trains each variant from scratch with the same budget and seeds and
/// scores it on `samples`.
pub fn ablation_run<T: Real>(
    base: &TrainConfig,
    toggles: AblationToggles,
    seeds: &[u64],
    samples: &[Sample<T>],
) -> Result<AblationReport> {
    if seeds.is_empty() {
        return Err(Error::config("ablation needs at least one seed"));
    }
    let mut rows = Vec::new();
    for (label, model) in ablation_variants(&base.model, toggles) {
        let start = Instant::now();
        let net = ReconFormer::<T>::new(model.clone())?;
        let params = net.param_specs().iter().map(|s| s.numel()).sum();
        let (mut psnr, mut ssim) = (Vec::new(), Vec::new());
        for &seed in seeds {
            let cfg = TrainConfig { model: model.clone(), seed, checkpoint: None, log: None, ..base.clone() };
            let outcome = train_samples(&cfg, samples)?;
            let report = evaluate(&net, &outcome.params, samples, model.unroll)?;
            psnr.push(finite_mean_psnr(&report)?);
            ssim.push(report.ssim().mean.unwrap_or(f64::NAN));
        }
        rows.push(AblationRow {
            label,
            model,
            params,
            seeds: seeds.to_vec(),
            psnr,
            ssim,
            seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok(AblationReport { rows })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepRow {
    pub unroll: usize,
    pub psnr: f64,
    pub ssim: f64,
    /// Training plus evaluation wall time.
    pub seconds: f64,
}

impl SweepRow {
    pub fn csv(rows: &[SweepRow]) -> String {
        let mut out = String::from("unroll,psnr,ssim,seconds\n");
        for r in rows {
            let _ = writeln!(out, "{},{:.4},{:.6},{:.3}", r.unroll, r.psnr, r.ssim, r.seconds);
        }
        out
    }
}

/// Trains a fresh model for each unroll length with the same step budget.
pub fn unroll_sweep<T: Real>(base: &TrainConfig, unrolls: &[usize], samples: &[Sample<T>]) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::with_capacity(unrolls.len());
    for &t in unrolls {
        if t == 0 {
            return Err(Error::config("unroll lengths must be positive"));
        }
        let start = Instant::now();
        let mut cfg = TrainConfig { checkpoint: None, log: None, ..base.clone() };
        cfg.model.unroll = t;
        let outcome = train_samples(&cfg, samples)?;
        let net = ReconFormer::<T>::new(cfg.model.clone())?;
        let report = evaluate(&net, &outcome.params, samples, t)?;
        rows.push(SweepRow {
            unroll: t,
            psnr: finite_mean_psnr(&report)?,
            ssim: report.ssim().mean.unwrap_or(f64::NAN),
            seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok(rows)
}
