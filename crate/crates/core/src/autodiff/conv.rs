//! im2col / col2im kernels shared by strided and transposed convolutions.
//!
//! A convolution is described by the geometry of its *forward* (strided)
//! direction: patches are taken from the `big` grid and produce one row per
//! pixel of the `small` grid. A transposed convolution is the adjoint of the
//! same map and uses the same `[k, k, big_c, small_c]` weight layout.

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Padding {
    Same,
    Valid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvOptions {
    pub stride: usize,
    pub padding: Padding,
    pub transposed: bool,
}

impl ConvOptions {
    pub fn same(stride: usize) -> Self {
        Self { stride, padding: Padding::Same, transposed: false }
    }

    pub fn transposed(stride: usize) -> Self {
        Self { stride, padding: Padding::Same, transposed: true }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub batch: usize,
    pub big_h: usize,
    pub big_w: usize,
    pub big_c: usize,
    pub small_h: usize,
    pub small_w: usize,
    pub small_c: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeom {
    /// Resolves the geometry for an NHWC input and a `[k, k, a, b]` weight.
    pub fn resolve(input: &[usize], weight: &[usize], opts: ConvOptions) -> Result<Self> {
        if input.len() != 4 || weight.len() != 4 {
            return Err(Error::shape("conv2d", format!("input {input:?} / weight {weight:?} must be rank 4")));
        }
        let k = weight[0];
        if weight[1] != k || k % 2 == 0 || k > 5 {
            return Err(Error::shape("conv2d", format!("kernel must be square 1, 3 or 5, got {weight:?}")));
        }
        if !(opts.stride == 1 || opts.stride == 2) {
            return Err(Error::shape("conv2d", format!("stride must be 1 or 2, got {}", opts.stride)));
        }
        let pad = match opts.padding {
            Padding::Same => k / 2,
            Padding::Valid => 0,
        };
        let [batch, h, w, c] = [input[0], input[1], input[2], input[3]];
        if opts.transposed {
            if opts.padding != Padding::Same {
                return Err(Error::shape("conv2d", "transposed convolution supports same padding only"));
            }
            if weight[3] != c {
                return Err(Error::shape("conv2d", format!("weight {weight:?} expects {} input channels, got {c}", weight[3])));
            }
            Ok(Self {
                batch,
                big_h: h * opts.stride,
                big_w: w * opts.stride,
                big_c: weight[2],
                small_h: h,
                small_w: w,
                small_c: c,
                k,
                stride: opts.stride,
                pad,
            })
        } else {
            if weight[2] != c {
                return Err(Error::shape("conv2d", format!("weight {weight:?} expects {} input channels, got {c}", weight[2])));
            }
            if h + 2 * pad < k || w + 2 * pad < k {
                return Err(Error::shape("conv2d", format!("input {h}x{w} smaller than kernel {k}")));
            }
            Ok(Self {
                batch,
                big_h: h,
                big_w: w,
                big_c: c,
                small_h: (h + 2 * pad - k) / opts.stride + 1,
                small_w: (w + 2 * pad - k) / opts.stride + 1,
                small_c: weight[3],
                k,
                stride: opts.stride,
                pad,
            })
        }
    }

    pub fn rows(&self) -> usize {
        self.batch * self.small_h * self.small_w
    }

    pub fn patch(&self) -> usize {
        self.k * self.k * self.big_c
    }

    pub fn big_shape(&self) -> Vec<usize> {
        vec![self.batch, self.big_h, self.big_w, self.big_c]
    }

    pub fn small_shape(&self) -> Vec<usize> {
        vec![self.batch, self.small_h, self.small_w, self.small_c]
    }

    fn for_each_tap(&self, mut f: impl FnMut(usize, usize, usize)) {
        let (k, c) = (self.k, self.big_c);
        let mut row = 0;
        for b in 0..self.batch {
            for oy in 0..self.small_h {
                for ox in 0..self.small_w {
                    for ky in 0..k {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        if iy < 0 || iy >= self.big_h as isize {
                            continue;
                        }
                        for kx in 0..k {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            if ix < 0 || ix >= self.big_w as isize {
                                continue;
                            }
                            let src = ((b * self.big_h + iy as usize) * self.big_w + ix as usize) * c;
                            let dst = row * self.patch() + (ky * k + kx) * c;
                            f(src, dst, c);
                        }
                    }
                    row += 1;
                }
            }
        }
    }

    pub fn im2col<T: Real>(&self, big: &[T]) -> Vec<T> {
        let mut cols = vec![T::zero(); self.rows() * self.patch()];
        self.for_each_tap(|src, dst, c| cols[dst..dst + c].copy_from_slice(&big[src..src + c]));
        cols
    }

    pub fn col2im<T: Real>(&self, cols: &[T], big: &mut [T]) {
        self.for_each_tap(|src, dst, c| {
            for (o, &v) in big[src..src + c].iter_mut().zip(&cols[dst..dst + c]) {
                *o += v;
            }
        });
    }
}
