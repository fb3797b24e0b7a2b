use std::sync::Arc;

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Where a window tensor came from, enough to invert the partition.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WindowGeometry {
    pub batch: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub window: usize,
    pub shift: usize,
}

impl WindowGeometry {
    pub fn windows_per_sample(&self) -> usize {
        (self.height / self.window) * (self.width / self.window)
    }

    pub fn num_windows(&self) -> usize {
        self.batch * self.windows_per_sample()
    }

    pub fn tokens(&self) -> usize {
        self.window * self.window
    }

    /// Source pixel (flat `b, y, x`) of every window token, in window order.
    fn token_sources(&self) -> Vec<usize> {
        let (h, w, k, s) = (self.height, self.width, self.window, self.shift);
        let mut index = Vec::with_capacity(self.batch * h * w);
        for b in 0..self.batch {
            for wy in 0..h / k {
                for wx in 0..w / k {
                    for ty in 0..k {
                        for tx in 0..k {
                            let y = (wy * k + ty + s) % h;
                            let x = (wx * k + tx + s) % w;
                            index.push((b * h + y) * w + x);
                        }
                    }
                }
            }
        }
        index
    }
}

/// Windows `[num_windows, K², C]` plus their origin geometry.
#[derive(Clone, Copy, Debug)]
pub struct WindowGrid {
    pub windows: Var,
    pub geometry: WindowGeometry,
}

/// Cyclically rolls a `[B, H, W, C]` feature by `(−shift, −shift)` and tiles it
/// into non-overlapping `K × K` windows in row-major window order.
pub fn window_partition<T: Real>(g: &mut Graph<T>, feat: Var, window: usize, shift: usize) -> Result<WindowGrid> {
    let s = g.shape(feat).to_vec();
    if s.len() != 4 {
        return Err(Error::shape("window_partition", format!("expected [B, H, W, C], got {s:?}")));
    }
    if window == 0 || s[1] % window != 0 || s[2] % window != 0 {
        return Err(Error::shape("window_partition", format!("window {window} does not tile {}x{}", s[1], s[2])));
    }
    let geometry = WindowGeometry { batch: s[0], height: s[1], width: s[2], channels: s[3], window, shift };
    let index = Arc::new(geometry.token_sources());
    let shape = vec![geometry.num_windows(), geometry.tokens(), geometry.channels];
    let windows = g.gather(feat, index, geometry.channels, shape)?;
    Ok(WindowGrid { windows, geometry })
}

/// Inverse of [`window_partition`], including the shift un-roll.
pub fn window_merge<T: Real>(g: &mut Graph<T>, grid: &WindowGrid) -> Result<Var> {
    let geo = grid.geometry;
    if g.shape(grid.windows) != [geo.num_windows(), geo.tokens(), geo.channels] {
        return Err(Error::shape(
            "window_merge",
            format!("windows {:?} do not match geometry {geo:?}", g.shape(grid.windows)),
        ));
    }
    let sources = geo.token_sources();
    let mut inverse = vec![0; sources.len()];
    for (token, &pixel) in sources.iter().enumerate() {
        inverse[pixel] = token;
    }
    let shape = vec![geo.batch, geo.height, geo.width, geo.channels];
    g.gather(grid.windows, Arc::new(inverse), geo.channels, shape)
}

/// Boundary-aware `s × s` mean over each window's `K × K` token grid
/// (stride 1, same extent); `s = 1` is the identity.
pub fn scale_aggregate<T: Real>(g: &mut Graph<T>, windows: Var, window: usize, s: usize) -> Result<Var> {
    if s % 2 == 0 || s > window {
        return Err(Error::config(format!("scale {s} must be odd and at most the window size {window}")));
    }
    if s == 1 {
        return Ok(windows);
    }
    g.avg_pool_tokens(windows, window, s)
}
