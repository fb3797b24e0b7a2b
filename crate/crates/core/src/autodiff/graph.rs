use std::sync::Arc;

use crate::error::{Error, Result};
use crate::kspace::Fft2;
use crate::scalar::{matmul, Real};
use crate::tensor::Tensor;

use super::conv::ConvGeom;

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

/// Per-sample measurements and masks for the in-graph data-consistency op.
pub(crate) struct DcSpec<T: Real> {
    pub plan: Fft2<T>,
    pub kspace: Vec<Vec<T>>,
    pub masks: Vec<Vec<bool>>,
}

pub(crate) enum Op<T: Real> {
    Leaf,
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    AddBias(Var, Var),
    Relu(Var),
    Gelu(Var),
    MatMul { a: Var, b: Var, batch: usize, m: usize, k: usize, n: usize, trans_b: bool },
    Conv { x: Var, w: Var, b: Option<Var>, geom: ConvGeom, transposed: bool },
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<T>, rstd: Vec<T> },
    Softmax(Var),
    Concat { parts: Vec<(Var, usize)> },
    Gather { x: Var, index: Arc<Vec<usize>>, block: usize },
    Reshape(Var),
    AvgPool { x: Var, grid: usize, size: usize },
    Blend { scores: Var, prior: Option<Var>, lambda: Var, head: usize, scale: T },
    Dc { x: Var, spec: Arc<DcSpec<T>> },
    L1 { pred: Var, target: Var },
    Sum(Var),
}

impl<T: Real> Op<T> {
    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::Add(a, b) | Op::Mul(a, b) | Op::AddBias(a, b) => vec![*a, *b],
            Op::Scale(a, _) | Op::Relu(a) | Op::Gelu(a) | Op::Softmax(a) | Op::Reshape(a) | Op::Sum(a) => vec![*a],
            Op::MatMul { a, b, .. } => vec![*a, *b],
            Op::Conv { x, w, b, .. } => {
                let mut v = vec![*x, *w];
                v.extend(b);
                v
            }
            Op::LayerNorm { x, gamma, beta, .. } => vec![*x, *gamma, *beta],
            Op::Concat { parts } => parts.iter().map(|p| p.0).collect(),
            Op::Gather { x, .. } | Op::AvgPool { x, .. } | Op::Dc { x, .. } => vec![*x],
            Op::Blend { scores, prior, lambda, .. } => {
                let mut v = vec![*scores, *lambda];
                v.extend(prior);
                v
            }
            Op::L1 { pred, target } => vec![*pred, *target],
        }
    }
}

struct Node<T: Real> {
    shape: Vec<usize>,
    value: Vec<T>,
    op: Op<T>,
    requires_grad: bool,
    leaf: bool,
}

/// Reverse-mode tape.
///
/// Every op appends a node holding its output value; inputs always precede
/// their consumers, so node order is a topological order. [`Graph::backward`]
/// walks the tape once in reverse and afterwards releases all recorded ops
/// and intermediate values, keeping only leaf gradients.
pub struct Graph<T: Real> {
    nodes: Vec<Node<T>>,
    leaf_grads: Vec<Option<Vec<T>>>,
    freed: bool,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), leaf_grads: Vec::new(), freed: false }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Non-differentiable input.
    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.leaf(t, false)
    }

    /// Differentiable input.
    pub fn param(&mut self, t: Tensor<T>) -> Var {
        self.leaf(t, true)
    }

    pub fn leaf(&mut self, t: Tensor<T>, requires_grad: bool) -> Var {
        let shape = t.shape().to_vec();
        self.nodes.push(Node { shape, value: t.into_data(), op: Op::Leaf, requires_grad, leaf: true });
        Var(self.nodes.len() - 1)
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Borrowed view of a recorded value.
    pub fn data(&self, v: Var) -> Result<&[T]> {
        let node = &self.nodes[v.0];
        if self.freed && !node.leaf {
            return Err(Error::Usage("value released by backward".into()));
        }
        Ok(&node.value)
    }

    pub fn value(&self, v: Var) -> Result<Tensor<T>> {
        Tensor::new(self.nodes[v.0].shape.clone(), self.data(v)?.to_vec())
    }

    /// Gradient of the last backward pass with respect to a leaf.
    pub fn grad(&self, v: Var) -> Option<Tensor<T>> {
        let g = self.leaf_grads.get(v.0)?.as_ref()?;
        Tensor::new(self.nodes[v.0].shape.clone(), g.clone()).ok()
    }

    pub(crate) fn val(&self, v: Var) -> &[T] {
        &self.nodes[v.0].value
    }

    pub(crate) fn push(&mut self, op: Op<T>, shape: Vec<usize>, value: Vec<T>, name: &'static str) -> Result<Var> {
        if self.freed {
            return Err(Error::Usage(format!("{name} recorded on a graph already consumed by backward")));
        }
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        if value.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(name));
        }
        let requires_grad = op.inputs().iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node { shape, value, op, requires_grad, leaf: false });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Backpropagates from a scalar loss.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.freed {
            return Err(Error::Usage("backward called twice on the same graph".into()));
        }
        if self.nodes[loss.0].value.len() != 1 {
            return Err(Error::Usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.nodes[loss.0].shape
            )));
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<T>>> = (0..n).map(|_| None).collect();
        self.leaf_grads = (0..n).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            if self.nodes[i].leaf {
                self.leaf_grads[i] = Some(g);
                continue;
            }
            self.propagate(i, &g, &mut grads);
        }
        self.freed = true;
        for node in self.nodes.iter_mut() {
            if !node.leaf {
                node.op = Op::Leaf;
                node.value = Vec::new();
            }
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[i];
        let nodes = &self.nodes;
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [T])| {
            if !nodes[v.0].requires_grad {
                return;
            }
            let buf = grads[v.0].get_or_insert_with(|| vec![T::zero(); nodes[v.0].value.len()]);
            f(buf);
        };
        let add_into = |dst: &mut [T], src: &[T]| dst.iter_mut().zip(src).for_each(|(d, &s)| *d += s);

        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                acc(*a, &mut |d| add_into(d, g));
                acc(*b, &mut |d| add_into(d, g));
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.val(*a), self.val(*b));
                acc(*a, &mut |d| d.iter_mut().zip(g.iter().zip(vb)).for_each(|(d, (&g, &y))| *d += g * y));
                acc(*b, &mut |d| d.iter_mut().zip(g.iter().zip(va)).for_each(|(d, (&g, &x))| *d += g * x));
            }
            Op::Scale(a, s) => acc(*a, &mut |d| d.iter_mut().zip(g).for_each(|(d, &g)| *d += g * *s)),
            Op::AddBias(a, b) => {
                acc(*a, &mut |d| add_into(d, g));
                let c = self.nodes[b.0].value.len();
                acc(*b, &mut |d| {
                    for row in g.chunks_exact(c) {
                        add_into(d, row);
                    }
                });
            }
            Op::Relu(a) => {
                let x = self.val(*a);
                acc(*a, &mut |d| {
                    for ((d, &g), &x) in d.iter_mut().zip(g).zip(x) {
                        if x > T::zero() {
                            *d += g;
                        }
                    }
                });
            }
            Op::Gelu(a) => {
                let x = self.val(*a);
                acc(*a, &mut |d| d.iter_mut().zip(g.iter().zip(x)).for_each(|(d, (&g, &x))| *d += g * gelu_grad(x)));
            }
            Op::MatMul { a, b, batch, m, k, n, trans_b } => {
                let (m, k, n, batch, trans_b) = (*m, *k, *n, *batch, *trans_b);
                let (va, vb) = (self.val(*a), self.val(*b));
                acc(*a, &mut |d| {
                    for i in 0..batch {
                        let gi = &g[i * m * n..(i + 1) * m * n];
                        let bi = &vb[i * k * n..(i + 1) * k * n];
                        let di = &mut d[i * m * k..(i + 1) * m * k];
                        // dA = dC · op(B)ᵀ
                        matmul(m, n, k, gi, false, bi, !trans_b, di, true);
                    }
                });
                acc(*b, &mut |d| {
                    for i in 0..batch {
                        let gi = &g[i * m * n..(i + 1) * m * n];
                        let ai = &va[i * m * k..(i + 1) * m * k];
                        let di = &mut d[i * k * n..(i + 1) * k * n];
                        if trans_b {
                            matmul(n, m, k, gi, true, ai, false, di, true);
                        } else {
                            matmul(k, m, n, ai, true, gi, false, di, true);
                        }
                    }
                });
            }
            Op::Conv { x, w, b, geom, transposed } => {
                let (rows, patch, sc) = (geom.rows(), geom.patch(), geom.small_c);
                let (vx, vw) = (self.val(*x), self.val(*w));
                if *transposed {
                    let dcols = geom.im2col(g);
                    acc(*x, &mut |d| matmul(rows, patch, sc, &dcols, false, vw, false, d, true));
                    acc(*w, &mut |d| matmul(patch, rows, sc, &dcols, true, vx, false, d, true));
                    if let Some(b) = b {
                        acc(*b, &mut |d| g.chunks_exact(geom.big_c).for_each(|r| add_into(d, r)));
                    }
                } else {
                    if self.nodes[w.0].requires_grad {
                        let cols = geom.im2col(vx);
                        acc(*w, &mut |d| matmul(patch, rows, sc, &cols, true, g, false, d, true));
                    }
                    acc(*x, &mut |d| {
                        let mut dcols = vec![T::zero(); rows * patch];
                        matmul(rows, sc, patch, g, false, vw, true, &mut dcols, false);
                        geom.col2im(&dcols, d);
                    });
                    if let Some(b) = b {
                        acc(*b, &mut |d| g.chunks_exact(sc).for_each(|r| add_into(d, r)));
                    }
                }
            }
            Op::LayerNorm { x, gamma, beta, xhat, rstd } => {
                let gam = self.val(*gamma);
                let c = gam.len();
                acc(*gamma, &mut |d| {
                    for (gr, xr) in g.chunks_exact(c).zip(xhat.chunks_exact(c)) {
                        d.iter_mut().zip(gr.iter().zip(xr)).for_each(|(d, (&g, &x))| *d += g * x);
                    }
                });
                acc(*beta, &mut |d| g.chunks_exact(c).for_each(|r| add_into(d, r)));
                acc(*x, &mut |d| {
                    let inv_c = T::one() / T::lit(c as f64);
                    for (((dr, gr), xr), &rs) in
                        d.chunks_exact_mut(c).zip(g.chunks_exact(c)).zip(xhat.chunks_exact(c)).zip(rstd)
                    {
                        let mut mean_dx = T::zero();
                        let mut mean_dxx = T::zero();
                        for j in 0..c {
                            let dxh = gr[j] * gam[j];
                            mean_dx += dxh;
                            mean_dxx += dxh * xr[j];
                        }
                        mean_dx *= inv_c;
                        mean_dxx *= inv_c;
                        for j in 0..c {
                            dr[j] += rs * (gr[j] * gam[j] - mean_dx - xr[j] * mean_dxx);
                        }
                    }
                });
            }
            Op::Softmax(a) => {
                let y = &node.value;
                let c = *node.shape.last().unwrap();
                acc(*a, &mut |d| {
                    for ((dr, gr), yr) in d.chunks_exact_mut(c).zip(g.chunks_exact(c)).zip(y.chunks_exact(c)) {
                        let dot: T = gr.iter().zip(yr).map(|(&g, &y)| g * y).sum();
                        dr.iter_mut().zip(gr.iter().zip(yr)).for_each(|(d, (&g, &y))| *d += y * (g - dot));
                    }
                });
            }
            Op::Concat { parts } => {
                let total: usize = parts.iter().map(|p| p.1).sum();
                let mut offset = 0;
                for &(v, width) in parts {
                    acc(v, &mut |d| {
                        for (dr, gr) in d.chunks_exact_mut(width).zip(g.chunks_exact(total)) {
                            add_into(dr, &gr[offset..offset + width]);
                        }
                    });
                    offset += width;
                }
            }
            Op::Gather { x, index, block } => {
                let block = *block;
                acc(*x, &mut |d| {
                    for (o, &src) in index.iter().enumerate() {
                        add_into(&mut d[src * block..(src + 1) * block], &g[o * block..(o + 1) * block]);
                    }
                });
            }
            Op::Reshape(a) => acc(*a, &mut |d| add_into(d, g)),
            Op::AvgPool { x, grid, size } => {
                let c = *node.shape.last().unwrap();
                acc(*x, &mut |d| avg_pool_adjoint(g, d, *grid, *size, c));
            }
            Op::Blend { scores, prior, lambda, head, scale } => {
                let lam = self.val(*lambda)[*head];
                let s = self.val(*scores);
                acc(*scores, &mut |d| d.iter_mut().zip(g).for_each(|(d, &g)| *d += g * lam * *scale));
                let mut dlam: T = g.iter().zip(s).map(|(&g, &s)| g * s * *scale).sum();
                if let Some(p) = prior {
                    let pv = self.val(*p);
                    dlam -= g.iter().zip(pv).map(|(&g, &c)| g * c).sum::<T>();
                    acc(*p, &mut |d| d.iter_mut().zip(g).for_each(|(d, &g)| *d += g * (T::one() - lam)));
                }
                acc(*lambda, &mut |d| d[*head] += dlam);
            }
            Op::Dc { x, spec } => {
                let per = spec.plan.dims().0 * spec.plan.dims().1 * 2;
                acc(*x, &mut |d| {
                    for (s, (dr, gr)) in d.chunks_exact_mut(per).zip(g.chunks_exact(per)).enumerate() {
                        let mut buf = gr.to_vec();
                        spec.plan.project_unsampled(&mut buf, &spec.masks[s]);
                        add_into(dr, &buf);
                    }
                });
            }
            Op::L1 { pred, target } => {
                let (p, t) = (self.val(*pred), self.val(*target));
                let scale = g[0] / T::lit(p.len() as f64);
                let sign = |a: T, b: T| {
                    if a > b {
                        scale
                    } else if a < b {
                        -scale
                    } else {
                        T::zero()
                    }
                };
                acc(*pred, &mut |d| d.iter_mut().zip(p.iter().zip(t)).for_each(|(d, (&a, &b))| *d += sign(a, b)));
                acc(*target, &mut |d| d.iter_mut().zip(p.iter().zip(t)).for_each(|(d, (&a, &b))| *d -= sign(a, b)));
            }
            Op::Sum(a) => acc(*a, &mut |d| d.iter_mut().for_each(|d| *d += g[0])),
        }
    }
}

pub(crate) const GELU_COEFF: f64 = 0.7978845608;
const GELU_CUBIC: f64 = 0.044715;

/// `0.5 (1 + tanh(u)) = sigmoid(2u)`, which avoids a libm `tanh` call.
fn gelu_gate<T: Real>(x: T) -> (T, T) {
    let c = T::lit(GELU_COEFF);
    let a = T::lit(GELU_CUBIC);
    let u = c * (x + a * x * x * x);
    let s = T::one() / (T::one() + (-(u + u)).exp());
    (s, c * (T::one() + T::lit(3.0) * a * x * x))
}

pub(crate) fn gelu<T: Real>(x: T) -> T {
    x * gelu_gate(x).0
}

pub(crate) fn gelu_grad<T: Real>(x: T) -> T {
    let (s, du) = gelu_gate(x);
    s + (x + x) * s * (T::one() - s) * du
}

/// Boundary-aware `size × size` box filter over each `grid × grid` token map.
pub(crate) fn avg_pool<T: Real>(x: &[T], out: &mut [T], grid: usize, size: usize, c: usize) {
    let r = size / 2;
    let per = grid * grid * c;
    for (xw, ow) in x.chunks_exact(per).zip(out.chunks_exact_mut(per)) {
        for py in 0..grid {
            for px in 0..grid {
                let (y0, y1) = (py.saturating_sub(r), (py + r).min(grid - 1));
                let (x0, x1) = (px.saturating_sub(r), (px + r).min(grid - 1));
                let inv = T::one() / T::lit(((y1 - y0 + 1) * (x1 - x0 + 1)) as f64);
                let o = &mut ow[(py * grid + px) * c..(py * grid + px + 1) * c];
                o.iter_mut().for_each(|v| *v = T::zero());
                for qy in y0..=y1 {
                    for qx in x0..=x1 {
                        let src = &xw[(qy * grid + qx) * c..(qy * grid + qx + 1) * c];
                        o.iter_mut().zip(src).for_each(|(o, &s)| *o += s);
                    }
                }
                o.iter_mut().for_each(|v| *v *= inv);
            }
        }
    }
}

fn avg_pool_adjoint<T: Real>(g: &[T], d: &mut [T], grid: usize, size: usize, c: usize) {
    let r = size / 2;
    let per = grid * grid * c;
    for (gw, dw) in g.chunks_exact(per).zip(d.chunks_exact_mut(per)) {
        for py in 0..grid {
            for px in 0..grid {
                let (y0, y1) = (py.saturating_sub(r), (py + r).min(grid - 1));
                let (x0, x1) = (px.saturating_sub(r), (px + r).min(grid - 1));
                let inv = T::one() / T::lit(((y1 - y0 + 1) * (x1 - x0 + 1)) as f64);
                let src = &gw[(py * grid + px) * c..(py * grid + px + 1) * c];
                for qy in y0..=y1 {
                    for qx in x0..=x1 {
                        let dst = &mut dw[(qy * grid + qx) * c..(qy * grid + qx + 1) * c];
                        dst.iter_mut().zip(src).for_each(|(d, &s)| *d += s * inv);
                    }
                }
            }
        }
    }
}
