use std::fmt::Write as _;
use std::time::Instant;

use crate::autodiff::ParamStore;
use crate::data::Sample;
use crate::error::{Error, Result};
use crate::kspace::{band_split, fft2c, ifft2c, zero_fill, ComplexImage};
use crate::net::ReconFormer;
use crate::scalar::Real;

use super::metrics::{psnr, ssim, Psnr};

/// Quality of one reconstruction next to its zero-filled baseline.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleMetrics {
    pub id: usize,
    pub psnr: Psnr,
    pub ssim: f64,
    pub low_psnr: Psnr,
    pub high_psnr: Psnr,
    pub zf_psnr: Psnr,
    pub zf_ssim: f64,
}

/// Mean and population standard deviation over the finite entries.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Summary {
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub finite: usize,
    pub identical: usize,
}

impl Summary {
    pub fn of(values: impl IntoIterator<Item = Psnr>) -> Self {
        let mut finite = Vec::new();
        let mut identical = 0;
        for v in values {
            match v {
                Psnr::Finite(x) => finite.push(x),
                Psnr::Identical => identical += 1,
            }
        }
        if finite.is_empty() {
            return Self { mean: None, std: None, finite: 0, identical };
        }
        let n = finite.len() as f64;
        let mean = finite.iter().sum::<f64>() / n;
        let var = finite.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        Self { mean: Some(mean), std: Some(var.sqrt()), finite: finite.len(), identical }
    }

    pub fn of_values(values: impl IntoIterator<Item = f64>) -> Self {
        Self::of(values.into_iter().map(Psnr::Finite))
    }

    fn show(&self) -> String {
        match (self.mean, self.std) {
            (Some(m), Some(s)) if self.identical == 0 => format!("{m:.4} ± {s:.4}"),
            (Some(m), Some(s)) => format!("{m:.4} ± {s:.4} ({} identical)", self.identical),
            _ => "identical".to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub rows: Vec<SampleMetrics>,
    pub config: Vec<(String, String)>,
    pub seconds: f64,
}

impl MetricsReport {
    pub fn psnr(&self) -> Summary {
        Summary::of(self.rows.iter().map(|r| r.psnr))
    }

    pub fn ssim(&self) -> Summary {
        Summary::of_values(self.rows.iter().map(|r| r.ssim))
    }

    pub fn low_psnr(&self) -> Summary {
        Summary::of(self.rows.iter().map(|r| r.low_psnr))
    }

    pub fn high_psnr(&self) -> Summary {
        Summary::of(self.rows.iter().map(|r| r.high_psnr))
    }

    pub fn zf_psnr(&self) -> Summary {
        Summary::of(self.rows.iter().map(|r| r.zf_psnr))
    }

    pub fn zf_ssim(&self) -> Summary {
        Summary::of_values(self.rows.iter().map(|r| r.zf_ssim))
    }

    /// Per-sample rows as CSV.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,psnr,ssim,low_psnr,high_psnr,zf_psnr,zf_ssim\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{:.6},{},{},{},{:.6}",
                r.id, r.psnr, r.ssim, r.low_psnr, r.high_psnr, r.zf_psnr, r.zf_ssim
            );
        }
        out
    }

    pub fn summary_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "samples = {}", self.rows.len());
        let _ = writeln!(out, "psnr = {}", self.psnr().show());
        let _ = writeln!(out, "ssim = {}", self.ssim().show());
        let _ = writeln!(out, "low_band_psnr = {}", self.low_psnr().show());
        let _ = writeln!(out, "high_band_psnr = {}", self.high_psnr().show());
        let _ = writeln!(out, "zero_filled_psnr = {}", self.zf_psnr().show());
        let _ = writeln!(out, "zero_filled_ssim = {}", self.zf_ssim().show());
        if let (Some(a), Some(b)) = (self.psnr().mean, self.zf_psnr().mean) {
            let _ = writeln!(out, "psnr_gain_over_zero_filled = {:.4}", a - b);
        }
        let _ = writeln!(out, "seconds = {:.3}", self.seconds);
        for (k, v) in &self.config {
            let _ = writeln!(out, "config.{k} = {v}");
        }
        out
    }
}

/// Per-sample data range: the ground-truth magnitude maximum.
fn data_range(gt_mag: &[f64]) -> Result<f64> {
    let max = gt_mag.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return Err(Error::domain("evaluate", "ground truth is identically zero"));
    }
    Ok(max)
}

/// Scores reconstructions and zero-filled baselines against ground truth
/// on magnitude images.
pub fn evaluate_images(
    ids: &[usize],
    recons: &[ComplexImage<f64>],
    zero_filled: &[ComplexImage<f64>],
    gts: &[ComplexImage<f64>],
) -> Result<MetricsReport> {
    if recons.len() != gts.len() || zero_filled.len() != gts.len() || ids.len() != gts.len() {
        return Err(Error::shape("evaluate", "reconstruction, baseline and ground-truth lists differ in length"));
    }
    let mut rows = Vec::with_capacity(gts.len());
    for (((&id, r), z), g) in ids.iter().zip(recons).zip(zero_filled).zip(gts) {
        let (h, w) = (g.height(), g.width());
        let gm = g.magnitude();
        let l = data_range(&gm)?;
        let band = kspace_band_report(std::slice::from_ref(r), std::slice::from_ref(g), 1.0 / 3.0)?;
        rows.push(SampleMetrics {
            id,
            psnr: psnr(&r.magnitude(), &gm, l)?,
            ssim: ssim(&r.magnitude(), &gm, h, w, l)?,
            low_psnr: band.rows[0].low,
            high_psnr: band.rows[0].high,
            zf_psnr: psnr(&z.magnitude(), &gm, l)?,
            zf_ssim: ssim(&z.magnitude(), &gm, h, w, l)?,
        });
    }
    rows.sort_by_key(|r| r.id);
    Ok(MetricsReport { rows, config: Vec::new(), seconds: 0.0 })
}

/// Reconstructs every sample (one per worker thread at a time) and scores it.
pub fn evaluate<T: Real>(
    model: &ReconFormer<T>,
    params: &ParamStore<T>,
    samples: &[Sample<T>],
    unroll: usize,
) -> Result<MetricsReport> {
    let start = Instant::now();
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(samples.len().max(1));
    let chunk = samples.len().div_ceil(workers).max(1);
    let recons: Vec<Result<Vec<ComplexImage<f64>>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = samples
            .chunks(chunk)
            .map(|part| {
                scope.spawn(move || {
                    part.iter()
                        .map(|s| {
                            let out = model.reconstruct(params, std::slice::from_ref(&s.kspace), std::slice::from_ref(&s.mask), unroll)?;
                            Ok(out[0].cast::<f64>())
                        })
                        .collect::<Result<Vec<_>>>()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("evaluation worker panicked")).collect()
    });
    let mut all = Vec::with_capacity(samples.len());
    for r in recons {
        all.extend(r?);
    }
    let zf = samples.iter().map(|s| zero_fill(&s.kspace, &s.mask).map(|z| z.cast())).collect::<Result<Vec<_>>>()?;
    let gts: Vec<ComplexImage<f64>> = samples.iter().map(|s| s.ground_truth.cast()).collect();
    let ids: Vec<usize> = samples.iter().map(|s| s.id).collect();
    let mut report = evaluate_images(&ids, &all, &zf, &gts)?;
    let mut config = crate::config::Configurable::entries(model.config());
    config.push(("eval_unroll".to_string(), unroll.to_string()));
    report.config = config;
    report.seconds = start.elapsed().as_secs_f64();
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BandRow {
    pub low: Psnr,
    pub high: Psnr,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BandReport {
    pub low_fraction: f64,
    pub rows: Vec<BandRow>,
}

impl BandReport {
    pub fn low(&self) -> Summary {
        Summary::of(self.rows.iter().map(|r| r.low))
    }

    pub fn high(&self) -> Summary {
        Summary::of(self.rows.iter().map(|r| r.high))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,low_psnr,high_psnr\n");
        for (i, r) in self.rows.iter().enumerate() {
            let _ = writeln!(out, "{i},{},{}", r.low, r.high);
        }
        let _ = writeln!(out, "mean,{},{}", self.low().show(), self.high().show());
        out
    }
}

fn band_images(img: &ComplexImage<f64>, low_fraction: f64) -> Result<(ComplexImage<f64>, ComplexImage<f64>)> {
    let (lo, hi) = band_split(&fft2c(img)?, low_fraction)?;
    Ok((ifft2c(&lo)?, ifft2c(&hi)?))
}

/// PSNR of the band-limited magnitude images for the central (`low`) and
/// peripheral (`high`) parts of the spectrum. The data range is the full
/// ground-truth magnitude maximum.
pub fn kspace_band_report(recons: &[ComplexImage<f64>], gts: &[ComplexImage<f64>], low_fraction: f64) -> Result<BandReport> {
    if recons.len() != gts.len() {
        return Err(Error::shape("kspace_band_report", format!("{} reconstructions for {} references", recons.len(), gts.len())));
    }
    let mut rows = Vec::with_capacity(gts.len());
    for (r, g) in recons.iter().zip(gts) {
        let l = data_range(&g.magnitude())?;
        let (rl, rh) = band_images(r, low_fraction)?;
        let (gl, gh) = band_images(g, low_fraction)?;
        rows.push(BandRow {
            low: psnr(&rl.magnitude(), &gl.magnitude(), l)?,
            high: psnr(&rh.magnitude(), &gh.magnitude(), l)?,
        });
    }
    Ok(BandReport { low_fraction, rows })
}

/// `(low, high, total)` mean squared error of the complex difference; the
/// first two add up to the third because the bands have disjoint supports.
pub fn band_mse_decomposition(recon: &ComplexImage<f64>, gt: &ComplexImage<f64>, low_fraction: f64) -> Result<(f64, f64, f64)> {
    if recon.height() != gt.height() || recon.width() != gt.width() {
        return Err(Error::shape("band_mse_decomposition", "image sizes differ"));
    }
    let n = (gt.height() * gt.width()) as f64;
    let mse = |a: &ComplexImage<f64>, b: &ComplexImage<f64>| {
        a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n
    };
    let (rl, rh) = band_images(recon, low_fraction)?;
    let (gl, gh) = band_images(gt, low_fraction)?;
    Ok((mse(&rl, &gl), mse(&rh, &gh), mse(recon, gt)))
}
