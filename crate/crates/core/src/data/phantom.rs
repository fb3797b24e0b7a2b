use rand::Rng;

use crate::error::{Error, Result};
use crate::kspace::ComplexImage;
use crate::rng::{stream, PHANTOM_STREAM};

/// Random ellipse phantom with a smooth phase field.
#[derive(Clone, Debug, PartialEq)]
pub struct PhantomSpec {
    pub height: usize,
    pub width: usize,
    /// Inclusive range of the ellipse count.
    pub n_ellipses: (usize, usize),
    /// Range of per-ellipse intensities.
    pub intensity: (f64, f64),
    pub seed: u64,
}

impl PhantomSpec {
    pub fn new(height: usize, width: usize, seed: u64) -> Self {
        Self { height, width, n_ellipses: (6, 12), intensity: (0.2, 1.0), seed }
    }
}

pub const MAX_MAGNITUDE: f64 = 1.5;

struct Ellipse {
    cx: f64,
    cy: f64,
    a: f64,
    b: f64,
    cos: f64,
    sin: f64,
    value: f64,
}

impl Ellipse {
    fn contains(&self, u: f64, v: f64) -> bool {
        let (du, dv) = (u - self.cx, v - self.cy);
        let p = du * self.cos + dv * self.sin;
        let q = -du * self.sin + dv * self.cos;
        (p / self.a).powi(2) + (q / self.b).powi(2) <= 1.0
    }
}

/// Overlapping rotated ellipses (magnitudes add, clipped at 1.5) times
/// `exp(i φ)`, where `φ` is a random quadratic polynomial in normalized
/// coordinates clamped to `[−π, π]`.
pub fn gen_phantom(spec: &PhantomSpec) -> Result<ComplexImage<f64>> {
    let (h, w) = (spec.height, spec.width);
    if h < 16 || w < 16 {
        return Err(Error::config(format!("phantom needs at least 16x16 pixels, got {h}x{w}")));
    }
    let (lo, hi) = spec.n_ellipses;
    if lo == 0 || lo > hi {
        return Err(Error::config(format!("invalid ellipse count range {lo}..={hi}")));
    }
    let (imin, imax) = spec.intensity;
    if !(imin >= 0.0 && imin <= imax && imax.is_finite()) {
        return Err(Error::config(format!("invalid intensity range {imin}..{imax}")));
    }
    let mut rng = stream(spec.seed, PHANTOM_STREAM);
    let n = rng.gen_range(lo..=hi);
    let ellipses: Vec<Ellipse> = (0..n)
        .map(|_| {
            let theta = rng.gen_range(0.0..std::f64::consts::PI);
            Ellipse {
                cx: rng.gen_range(-0.6..0.6),
                cy: rng.gen_range(-0.6..0.6),
                a: rng.gen_range(0.1..0.6),
                b: rng.gen_range(0.1..0.6),
                cos: theta.cos(),
                sin: theta.sin(),
                value: if imin == imax { imin } else { rng.gen_range(imin..imax) },
            }
        })
        .collect();
    let coeffs: [f64; 6] = std::array::from_fn(|_| rng.gen_range(-0.5..0.5));
    let pi = std::f64::consts::PI;
    Ok(ComplexImage::from_fn(h, w, |y, x| {
        let u = (2 * x + 1) as f64 / w as f64 - 1.0;
        let v = (2 * y + 1) as f64 / h as f64 - 1.0;
        let mag: f64 = ellipses.iter().filter(|e| e.contains(u, v)).map(|e| e.value).sum();
        let mag = mag.min(MAX_MAGNITUDE);
        let [c0, c1, c2, c3, c4, c5] = coeffs;
        let phase = (c0 + c1 * u + c2 * v + c3 * u * u + c4 * u * v + c5 * v * v).clamp(-pi, pi);
        (mag * phase.cos(), mag * phase.sin())
    }))
}
