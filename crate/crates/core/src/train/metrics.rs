use crate::error::{Error, Result};
use crate::kspace::ComplexImage;
use crate::scalar::Real;

/// Side of the uniform SSIM window.
pub const SSIM_WINDOW: usize = 7;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

/// PSNR in dB, or the sentinel for a zero-error comparison.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Psnr {
    Finite(f64),
    Identical,
}

impl Psnr {
    pub fn value(self) -> Option<f64> {
        match self {
            Psnr::Finite(v) => Some(v),
            Psnr::Identical => None,
        }
    }

    pub fn is_identical(self) -> bool {
        self == Psnr::Identical
    }
}

impl std::fmt::Display for Psnr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Psnr::Finite(v) => write!(f, "{v:.4}"),
            Psnr::Identical => f.write_str("identical"),
        }
    }
}

pub fn magnitude<T: Real>(img: &ComplexImage<T>) -> Vec<f64> {
    img.magnitude()
}

fn check_pair(op: &'static str, a: &[f64], b: &[f64], data_range: f64) -> Result<()> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::shape(op, format!("images of {} and {} pixels", a.len(), b.len())));
    }
    if !(data_range > 0.0 && data_range.is_finite()) {
        return Err(Error::domain(op, format!("data range must be positive, got {data_range}")));
    }
    Ok(())
}

/// `10 log10(L² / MSE)`.
pub fn psnr(recon: &[f64], gt: &[f64], data_range: f64) -> Result<Psnr> {
    check_pair("psnr", recon, gt, data_range)?;
    let mse = recon.iter().zip(gt).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / recon.len() as f64;
    if mse == 0.0 {
        return Ok(Psnr::Identical);
    }
    Ok(Psnr::Finite(10.0 * (data_range * data_range / mse).log10()))
}

/// Inclusive-exclusive 2D prefix sums with a zero border.
fn integral(v: &[f64], h: usize, w: usize) -> Vec<f64> {
    let mut s = vec![0.0; (h + 1) * (w + 1)];
    for y in 0..h {
        let mut row = 0.0;
        for x in 0..w {
            row += v[y * w + x];
            s[(y + 1) * (w + 1) + x + 1] = s[y * (w + 1) + x + 1] + row;
        }
    }
    s
}

/// Mean local SSIM over every fully contained 7×7 window, with unbiased
/// (sample) local variances and `C1 = (0.01 L)²`, `C2 = (0.03 L)²`.
pub fn ssim(recon: &[f64], gt: &[f64], height: usize, width: usize, data_range: f64) -> Result<f64> {
    check_pair("ssim", recon, gt, data_range)?;
    if recon.len() != height * width {
        return Err(Error::shape("ssim", format!("{} pixels for a {height}x{width} image", recon.len())));
    }
    let k = SSIM_WINDOW;
    if height < k || width < k {
        return Err(Error::domain("ssim", format!("image {height}x{width} is smaller than the {k}x{k} window")));
    }
    let prod = |f: &dyn Fn(f64, f64) -> f64| recon.iter().zip(gt).map(|(&a, &b)| f(a, b)).collect::<Vec<f64>>();
    let sx = integral(recon, height, width);
    let sy = integral(gt, height, width);
    let sxx = integral(&prod(&|a, _| a * a), height, width);
    let syy = integral(&prod(&|_, b| b * b), height, width);
    let sxy = integral(&prod(&|a, b| a * b), height, width);
    let box_sum = |s: &[f64], y: usize, x: usize| {
        let w1 = width + 1;
        s[(y + k) * w1 + x + k] - s[y * w1 + x + k] - s[(y + k) * w1 + x] + s[y * w1 + x]
    };
    let n = (k * k) as f64;
    let cov_norm = n / (n - 1.0);
    let c1 = (K1 * data_range).powi(2);
    let c2 = (K2 * data_range).powi(2);
    let mut total = 0.0;
    for y in 0..=height - k {
        for x in 0..=width - k {
            let ux = box_sum(&sx, y, x) / n;
            let uy = box_sum(&sy, y, x) / n;
            let vx = cov_norm * (box_sum(&sxx, y, x) / n - ux * ux);
            let vy = cov_norm * (box_sum(&syy, y, x) / n - uy * uy);
            let vxy = cov_norm * (box_sum(&sxy, y, x) / n - ux * uy);
            total += ((2.0 * ux * uy + c1) * (2.0 * vxy + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
        }
    }
    Ok(total / ((height - k + 1) * (width - k + 1)) as f64)
}
