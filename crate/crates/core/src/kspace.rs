//! Complex images, centered orthonormal 2D Fourier transforms, Cartesian
//! sampling masks and the data-consistency projection.
//!
//! Complex fields are stored interleaved as `H × W × 2` (real, imaginary).
//! The zero frequency of a spectrum sits at `(H / 2, W / 2)`.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::Real;

macro_rules! complex_field {
    ($name:ident, $what:literal) => {
        #[doc = concat!("Complex ", $what, " stored as `height × width × 2` real values.")]
        #[derive(Clone, Debug, PartialEq)]
        pub struct $name<T> {
            height: usize,
            width: usize,
            data: Vec<T>,
        }

        impl<T: Real> $name<T> {
            pub fn new(height: usize, width: usize, data: Vec<T>) -> Result<Self> {
                if height == 0 || width == 0 {
                    return Err(Error::shape(stringify!($name), "empty grid"));
                }
                if data.len() != height * width * 2 {
                    return Err(Error::shape(
                        stringify!($name),
                        format!("{height}x{width}x2 needs {} values, got {}", height * width * 2, data.len()),
                    ));
                }
                if data.iter().any(|v| !v.is_finite()) {
                    return Err(Error::domain(stringify!($name), "non-finite entry"));
                }
                Ok(Self { height, width, data })
            }

            pub fn zeros(height: usize, width: usize) -> Self {
                Self { height, width, data: vec![T::zero(); height * width * 2] }
            }

            pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> (T, T)) -> Self {
                let mut data = Vec::with_capacity(height * width * 2);
                for y in 0..height {
                    for x in 0..width {
                        let (re, im) = f(y, x);
                        data.push(re);
                        data.push(im);
                    }
                }
                Self { height, width, data }
            }

            pub fn height(&self) -> usize {
                self.height
            }

            pub fn width(&self) -> usize {
                self.width
            }

            pub fn data(&self) -> &[T] {
                &self.data
            }

            pub fn data_mut(&mut self) -> &mut [T] {
                &mut self.data
            }

            pub fn into_data(self) -> Vec<T> {
                self.data
            }

            pub fn at(&self, y: usize, x: usize) -> (T, T) {
                let i = 2 * (y * self.width + x);
                (self.data[i], self.data[i + 1])
            }

            /// Sum of squared moduli.
            pub fn energy(&self) -> f64 {
                self.data.iter().map(|v| v.as_f64() * v.as_f64()).sum()
            }

            pub fn magnitude(&self) -> Vec<f64> {
                self.data
                    .chunks_exact(2)
                    .map(|c| c[0].as_f64().hypot(c[1].as_f64()))
                    .collect()
            }

            pub fn cast<U: Real>(&self) -> $name<U> {
                $name {
                    height: self.height,
                    width: self.width,
                    data: self.data.iter().map(|v| U::lit(v.as_f64())).collect(),
                }
            }

            #[allow(dead_code)]
            fn same_shape<U>(&self, other: &impl GridShape<U>, op: &'static str) -> Result<()> {
                if (self.height, self.width) != other.dims() {
                    return Err(Error::shape(
                        op,
                        format!("{}x{} vs {}x{}", self.height, self.width, other.dims().0, other.dims().1),
                    ));
                }
                Ok(())
            }
        }

        impl<T> GridShape<T> for $name<T> {
            fn dims(&self) -> (usize, usize) {
                (self.height, self.width)
            }
        }
    };
}

trait GridShape<T> {
    fn dims(&self) -> (usize, usize);
}

complex_field!(ComplexImage, "image");
complex_field!(KSpace, "spectrum");

/// Binary column mask `U`, replicated over every row.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplingMask {
    columns: Vec<bool>,
    acceleration_factor: f64,
    center_fraction: f64,
    seed: u64,
}

impl SamplingMask {
    /// A mask sampling every column (acceleration 1).
    pub fn full(width: usize) -> Self {
        Self { columns: vec![true; width], acceleration_factor: 1.0, center_fraction: 1.0, seed: 0 }
    }

    /// Builds a mask from explicit column flags.
    pub fn from_columns(columns: Vec<bool>) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::config("mask needs at least one column"));
        }
        let sampled = columns.iter().filter(|&&c| c).count().max(1);
        let acceleration_factor = columns.len() as f64 / sampled as f64;
        Ok(Self { columns, acceleration_factor, center_fraction: 0.0, seed: 0 })
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[bool] {
        &self.columns
    }

    pub fn is_sampled(&self, column: usize) -> bool {
        self.columns[column]
    }

    pub fn num_sampled(&self) -> usize {
        self.columns.iter().filter(|&&c| c).count()
    }

    pub fn acceleration_factor(&self) -> f64 {
        self.acceleration_factor
    }

    pub fn center_fraction(&self) -> f64 {
        self.center_fraction
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// The mask as an `H × W` 0/1 matrix.
    pub fn expand(&self, height: usize) -> Vec<u8> {
        let row: Vec<u8> = self.columns.iter().map(|&c| c as u8).collect();
        row.iter().copied().cycle().take(height * row.len()).collect()
    }
}

/// Number of always-sampled centre columns, `⌊fraction · W⌋` but at least one.
pub fn center_block_width(width: usize, center_fraction: f64) -> usize {
    ((center_fraction * width as f64).floor() as usize).clamp(1, width)
}

/// Random Cartesian column mask in the style of the fastMRI challenge.
///
/// A contiguous block of `⌊center_fraction · W⌋` columns around the zero
/// frequency is always acquired. One uniform draw per column (in column
/// order, including the centre block) decides the remaining columns, each
/// kept with probability `(W/af − cf·W) / (W − cf·W)`.
pub fn make_cartesian_mask(
    width: usize,
    acceleration_factor: f64,
    center_fraction: f64,
    seed: u64,
) -> Result<SamplingMask> {
    if width == 0 {
        return Err(Error::config("mask width must be positive"));
    }
    if !(acceleration_factor > 1.0) || !acceleration_factor.is_finite() {
        return Err(Error::config(format!("acceleration factor must exceed 1, got {acceleration_factor}")));
    }
    if !(center_fraction > 0.0 && center_fraction <= 1.0) {
        return Err(Error::config(format!("center fraction must lie in (0, 1], got {center_fraction}")));
    }
    if (center_fraction * width as f64).floor() < 1.0 {
        return Err(Error::config(format!(
            "center fraction {center_fraction} leaves no centre column at width {width}"
        )));
    }
    let block = center_block_width(width, center_fraction);
    let mut columns = vec![false; width];
    if block < width {
        if acceleration_factor * center_fraction >= 1.0 {
            return Err(Error::config(format!(
                "acceleration {acceleration_factor} with centre fraction {center_fraction} leaves no random columns"
            )));
        }
        let w = width as f64;
        let prob = (w / acceleration_factor - center_fraction * w) / (w - center_fraction * w);
        let mut rng = rng::stream(seed, rng::MASK_STREAM);
        for c in columns.iter_mut() {
            *c = rng.gen::<f64>() < prob;
        }
    }
    let pad = (width - block + 1) / 2;
    columns[pad..pad + block].iter_mut().for_each(|c| *c = true);
    Ok(SamplingMask { columns, acceleration_factor, center_fraction, seed })
}

/// Planned centered orthonormal 2D transform for one grid size.
pub struct Fft2<T: Real> {
    height: usize,
    width: usize,
    rows: [Arc<dyn Fft<T>>; 2],
    cols: [Arc<dyn Fft<T>>; 2],
    scale: T,
}

impl<T: Real> Fft2<T> {
    pub fn new(height: usize, width: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            height,
            width,
            rows: [planner.plan_fft_forward(width), planner.plan_fft_inverse(width)],
            cols: [planner.plan_fft_forward(height), planner.plan_fft_inverse(height)],
            scale: T::one() / T::lit((height * width) as f64).sqrt(),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    /// Centered unitary forward transform of an interleaved `H × W × 2` buffer.
    pub fn forward(&self, input: &[T], output: &mut [T]) {
        let buf = self.transform(input, 0);
        self.unpack(&buf, output);
    }

    pub fn inverse(&self, input: &[T], output: &mut [T]) {
        let buf = self.transform(input, 1);
        self.unpack(&buf, output);
    }

    /// Replaces the spectrum of `img` by `kspace` on sampled columns.
    pub fn project_measured(&self, img: &mut [T], kspace: &[T], mask: &[bool]) {
        let mut spec = self.transform(img, 0);
        let w = self.width;
        for (i, v) in spec.iter_mut().enumerate() {
            if mask[i % w] {
                *v = Complex::new(kspace[2 * i], kspace[2 * i + 1]);
            }
        }
        let packed: Vec<T> = spec.iter().flat_map(|c| [c.re, c.im]).collect();
        let back = self.transform(&packed, 1);
        self.unpack(&back, img);
    }

    /// Zeroes the spectrum of `img` on sampled columns (the adjoint of
    /// [`Self::project_measured`] with respect to the image).
    pub fn project_unsampled(&self, img: &mut [T], mask: &[bool]) {
        let mut spec = self.transform(img, 0);
        let w = self.width;
        for (i, v) in spec.iter_mut().enumerate() {
            if mask[i % w] {
                *v = Complex::new(T::zero(), T::zero());
            }
        }
        let packed: Vec<T> = spec.iter().flat_map(|c| [c.re, c.im]).collect();
        let back = self.transform(&packed, 1);
        self.unpack(&back, img);
    }

    fn unpack(&self, buf: &[Complex<T>], output: &mut [T]) {
        for (o, c) in output.chunks_exact_mut(2).zip(buf) {
            o[0] = c.re;
            o[1] = c.im;
        }
    }

    // Shift so the centre sample lands at index 0, transform rows and
    // columns, shift back and scale by 1/sqrt(HW).
    fn transform(&self, input: &[T], dir: usize) -> Vec<Complex<T>> {
        let (h, w) = (self.height, self.width);
        let (cy, cx) = (h / 2, w / 2);
        let zero = Complex::new(T::zero(), T::zero());
        let mut buf = vec![zero; h * w];
        for y in 0..h {
            let dy = (y + h - cy) % h;
            for x in 0..w {
                let dx = (x + w - cx) % w;
                let i = 2 * (y * w + x);
                buf[dy * w + dx] = Complex::new(input[i], input[i + 1]);
            }
        }
        self.rows[dir].process(&mut buf);
        let mut cols = vec![zero; h * w];
        for y in 0..h {
            for x in 0..w {
                cols[x * h + y] = buf[y * w + x];
            }
        }
        self.cols[dir].process(&mut cols);
        for u in 0..h {
            let oy = (u + cy) % h;
            for v in 0..w {
                let ox = (v + cx) % w;
                buf[oy * w + ox] = cols[v * h + u] * self.scale;
            }
        }
        buf
    }
}

fn check_finite<T: Real>(data: &[T], op: &'static str) -> Result<()> {
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain(op, "non-finite input"));
    }
    Ok(())
}

pub fn fft2c<T: Real>(img: &ComplexImage<T>) -> Result<KSpace<T>> {
    check_finite(&img.data, "fft2c")?;
    let plan = Fft2::new(img.height, img.width);
    let mut out = vec![T::zero(); img.data.len()];
    plan.forward(&img.data, &mut out);
    KSpace::new(img.height, img.width, out)
}

pub fn ifft2c<T: Real>(k: &KSpace<T>) -> Result<ComplexImage<T>> {
    check_finite(&k.data, "ifft2c")?;
    let plan = Fft2::new(k.height, k.width);
    let mut out = vec![T::zero(); k.data.len()];
    plan.inverse(&k.data, &mut out);
    ComplexImage::new(k.height, k.width, out)
}

fn check_mask(width: usize, mask: &SamplingMask, op: &'static str) -> Result<()> {
    if mask.width() != width {
        return Err(Error::shape(op, format!("mask width {} vs grid width {width}", mask.width())));
    }
    Ok(())
}

fn apply_mask<T: Real>(data: &mut [T], width: usize, mask: &SamplingMask) {
    for (i, px) in data.chunks_exact_mut(2).enumerate() {
        if !mask.columns[i % width] {
            px[0] = T::zero();
            px[1] = T::zero();
        }
    }
}

/// Acquisition model `x = U ⊙ (F y + ε)`.
///
/// Noise is drawn for every spectrum entry in row-major order, real part
/// then imaginary part, each `σ · N(0, 1)` from the noise stream of `seed`,
/// and is zeroed together with the unsampled columns.
pub fn forward_model<T: Real>(
    y: &ComplexImage<T>,
    mask: &SamplingMask,
    noise_sigma: f64,
    seed: u64,
) -> Result<KSpace<T>> {
    if !(noise_sigma >= 0.0) || !noise_sigma.is_finite() {
        return Err(Error::config(format!("noise sigma must be a finite value >= 0, got {noise_sigma}")));
    }
    check_mask(y.width, mask, "forward_model")?;
    let mut k = fft2c(y)?;
    if noise_sigma > 0.0 {
        let mut rng = rng::stream(seed, rng::NOISE_STREAM);
        for v in k.data.iter_mut() {
            let e: f64 = rng.sample(StandardNormal);
            *v += T::lit(noise_sigma * e);
        }
    }
    apply_mask(&mut k.data, y.width, mask);
    Ok(k)
}

/// Zero-filled reconstruction `ifft2c(U ⊙ x)`.
pub fn zero_fill<T: Real>(x: &KSpace<T>, mask: &SamplingMask) -> Result<ComplexImage<T>> {
    check_mask(x.width, mask, "zero_fill")?;
    let mut masked = x.clone();
    apply_mask(&mut masked.data, x.width, mask);
    ifft2c(&masked)
}

/// Hard data-consistency projection `F⁻¹[U x + (1 − U) F img]`.
pub fn data_consistency<T: Real>(
    img: &ComplexImage<T>,
    x: &KSpace<T>,
    mask: &SamplingMask,
) -> Result<ComplexImage<T>> {
    img.same_shape(x, "data_consistency")?;
    check_mask(img.width, mask, "data_consistency")?;
    check_finite(&img.data, "data_consistency")?;
    let plan = Fft2::new(img.height, img.width);
    let mut out = img.data.clone();
    plan.project_measured(&mut out, &x.data, &mask.columns);
    ComplexImage::new(img.height, img.width, out)
}

/// Index range `[start, start + side)` of the centred low band along one axis.
pub fn low_band_range(extent: usize, low_fraction: f64) -> std::ops::Range<usize> {
    let side = ((low_fraction * extent as f64).floor() as usize).min(extent);
    let start = extent / 2 - side / 2;
    start..start + side
}

/// Splits a spectrum into the centred `⌊f·H⌋ × ⌊f·W⌋` rectangle and its complement.
pub fn band_split<T: Real>(k: &KSpace<T>, low_fraction: f64) -> Result<(KSpace<T>, KSpace<T>)> {
    if !(low_fraction > 0.0 && low_fraction <= 1.0) {
        return Err(Error::config(format!("low fraction must lie in (0, 1], got {low_fraction}")));
    }
    let rows = low_band_range(k.height, low_fraction);
    let cols = low_band_range(k.width, low_fraction);
    let mut low = KSpace::zeros(k.height, k.width);
    let mut high = KSpace::zeros(k.height, k.width);
    for y in 0..k.height {
        for x in 0..k.width {
            let i = 2 * (y * k.width + x);
            let dst = if rows.contains(&y) && cols.contains(&x) { &mut low } else { &mut high };
            dst.data[i] = k.data[i];
            dst.data[i + 1] = k.data[i + 1];
        }
    }
    Ok((low, high))
}
