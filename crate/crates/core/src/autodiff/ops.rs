use std::sync::Arc;

use crate::error::{Error, Result};
use crate::kspace::{Fft2, KSpace, SamplingMask};
use crate::scalar::{matmul, Real};
use crate::tensor::Tensor;

use super::conv::{ConvGeom, ConvOptions};
use super::graph::{avg_pool, gelu, DcSpec, Graph, Op, Var};

impl<T: Real> Graph<T> {
    fn same_shape(&self, a: Var, b: Var, op: &'static str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(op, format!("{:?} vs {:?}", self.shape(a), self.shape(b))));
        }
        Ok(())
    }

    fn zip_map(&self, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Vec<T> {
        self.val(a).iter().zip(self.val(b)).map(|(&x, &y)| f(x, y)).collect()
    }

    fn map(&self, a: Var, f: impl Fn(T) -> T) -> Vec<T> {
        self.val(a).iter().map(|&x| f(x)).collect()
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let v = self.zip_map(a, b, |x, y| x + y);
        self.push(Op::Add(a, b), self.shape(a).to_vec(), v, "add")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let v = self.zip_map(a, b, |x, y| x * y);
        self.push(Op::Mul(a, b), self.shape(a).to_vec(), v, "mul")
    }

    pub fn scale(&mut self, a: Var, s: T) -> Result<Var> {
        let v = self.map(a, |x| x * s);
        self.push(Op::Scale(a, s), self.shape(a).to_vec(), v, "scale")
    }

    /// Adds a bias vector along the last axis.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let c = *self.shape(a).last().unwrap();
        if self.shape(bias) != [c] {
            return Err(Error::shape("add_bias", format!("bias {:?} for last axis {c}", self.shape(bias))));
        }
        let b = self.val(bias);
        let v = self.val(a).chunks_exact(c).flat_map(|r| r.iter().zip(b).map(|(&x, &y)| x + y)).collect();
        self.push(Op::AddBias(a, bias), self.shape(a).to_vec(), v, "add_bias")
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let v = self.map(a, |x| x.max(T::zero()));
        self.push(Op::Relu(a), self.shape(a).to_vec(), v, "relu")
    }

    /// Tanh-approximated GELU, `0.5 x (1 + tanh(0.7978845608 (x + 0.044715 x³)))`.
    pub fn gelu(&mut self, a: Var) -> Result<Var> {
        let v = self.map(a, gelu);
        self.push(Op::Gelu(a), self.shape(a).to_vec(), v, "gelu")
    }

    /// Batched product over the last two axes.
    ///
    /// `b` may be a single rank-2 matrix shared by every leading index of
    /// `a`; otherwise the leading axes of both operands must agree. With
    /// `trans_b` the last two axes of `b` are read as `[n, k]`.
    pub fn matmul_ex(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() < 2 || sb.len() < 2 {
            return Err(Error::shape("matmul", format!("{sa:?} x {sb:?}: operands need rank >= 2")));
        }
        let (m, k) = (sa[sa.len() - 2], sa[sa.len() - 1]);
        let (kb, n) = if trans_b {
            (sb[sb.len() - 1], sb[sb.len() - 2])
        } else {
            (sb[sb.len() - 2], sb[sb.len() - 1])
        };
        if k != kb {
            return Err(Error::shape("matmul", format!("inner extents differ: {sa:?} x {sb:?}")));
        }
        let lead_a = &sa[..sa.len() - 2];
        let lead_b = &sb[..sb.len() - 2];
        let (batch, m_eff) = if lead_b.is_empty() {
            (1, m * lead_a.iter().product::<usize>())
        } else if lead_a == lead_b {
            (lead_a.iter().product(), m)
        } else {
            return Err(Error::shape("matmul", format!("leading axes differ: {sa:?} x {sb:?}")));
        };
        let mut out = vec![T::zero(); batch * m_eff * n];
        {
            let (va, vb) = (self.val(a), self.val(b));
            for i in 0..batch {
                matmul(
                    m_eff,
                    k,
                    n,
                    &va[i * m_eff * k..(i + 1) * m_eff * k],
                    false,
                    &vb[i * k * n..(i + 1) * k * n],
                    trans_b,
                    &mut out[i * m_eff * n..(i + 1) * m_eff * n],
                    false,
                );
            }
        }
        let mut shape = lead_a.to_vec();
        shape.extend([m, n]);
        self.push(Op::MatMul { a, b, batch, m: m_eff, k, n, trans_b }, shape, out, "matmul")
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_ex(a, b, false)
    }

    /// `x · w + b` over the last axis with `w: [in, out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let y = self.matmul(x, w)?;
        match b {
            Some(b) => self.add_bias(y, b),
            None => Ok(y),
        }
    }

    /// 2D convolution on NHWC tensors (cross-correlation semantics).
    ///
    /// Weights are `[k, k, cin, cout]`; for `opts.transposed` they are
    /// `[k, k, cout, cin]`, i.e. the layout of the strided convolution whose
    /// adjoint is being applied.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, opts: ConvOptions) -> Result<Var> {
        let geom = ConvGeom::resolve(self.shape(x), self.shape(w), opts)?;
        let out_c = if opts.transposed { geom.big_c } else { geom.small_c };
        if let Some(b) = b {
            if self.shape(b) != [out_c] {
                return Err(Error::shape("conv2d", format!("bias {:?} for {out_c} channels", self.shape(b))));
            }
        }
        let (rows, patch, sc) = (geom.rows(), geom.patch(), geom.small_c);
        let (mut out, shape) = if opts.transposed {
            let mut cols = vec![T::zero(); rows * patch];
            matmul(rows, sc, patch, self.val(x), false, self.val(w), true, &mut cols, false);
            let mut big = vec![T::zero(); geom.big_shape().iter().product()];
            geom.col2im(&cols, &mut big);
            (big, geom.big_shape())
        } else {
            let cols = geom.im2col(self.val(x));
            let mut small = vec![T::zero(); rows * sc];
            matmul(rows, patch, sc, &cols, false, self.val(w), false, &mut small, false);
            (small, geom.small_shape())
        };
        if let Some(b) = b {
            let bias = self.val(b);
            out.chunks_exact_mut(out_c).for_each(|r| r.iter_mut().zip(bias).for_each(|(o, &b)| *o += b));
        }
        self.push(Op::Conv { x, w, b, geom, transposed: opts.transposed }, shape, out, "conv2d")
    }

    /// Normalizes over the last axis with population variance, then applies
    /// `gamma`, `beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let c = *self.shape(x).last().unwrap();
        if self.shape(gamma) != [c] || self.shape(beta) != [c] {
            return Err(Error::shape("layer_norm", format!("affine params must be [{c}]")));
        }
        let eps = T::lit(eps);
        let inv_c = T::one() / T::lit(c as f64);
        let vx = self.val(x);
        let rows = vx.len() / c;
        let mut xhat = Vec::with_capacity(vx.len());
        let mut rstd = Vec::with_capacity(rows);
        for r in vx.chunks_exact(c) {
            let mean = r.iter().copied().sum::<T>() * inv_c;
            let var = r.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() * inv_c;
            let rs = T::one() / (var + eps).sqrt();
            xhat.extend(r.iter().map(|&v| (v - mean) * rs));
            rstd.push(rs);
        }
        let (g, b) = (self.val(gamma), self.val(beta));
        let out = xhat
            .chunks_exact(c)
            .flat_map(|r| r.iter().zip(g.iter().zip(b)).map(|(&v, (&g, &b))| v * g + b))
            .collect();
        let shape = self.shape(x).to_vec();
        self.push(Op::LayerNorm { x, gamma, beta, xhat, rstd }, shape, out, "layer_norm")
    }

    /// Max-stabilized softmax over the last axis.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let c = *self.shape(x).last().unwrap();
        let mut out = self.val(x).to_vec();
        for r in out.chunks_exact_mut(c) {
            let max = r.iter().copied().fold(T::neg_infinity(), T::max);
            let mut sum = T::zero();
            for v in r.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            r.iter_mut().for_each(|v| *v /= sum);
        }
        let shape = self.shape(x).to_vec();
        self.push(Op::Softmax(x), shape, out, "softmax")
    }

    /// Concatenates along the last (channel) axis.
    pub fn concat(&mut self, xs: &[Var]) -> Result<Var> {
        let first = *xs.first().ok_or_else(|| Error::shape("concat", "no inputs"))?;
        let lead = self.shape(first)[..self.shape(first).len() - 1].to_vec();
        let mut parts = Vec::with_capacity(xs.len());
        for &v in xs {
            let s = self.shape(v);
            if s[..s.len() - 1] != lead[..] {
                return Err(Error::shape("concat", format!("{:?} vs {:?}", self.shape(first), s)));
            }
            parts.push((v, *s.last().unwrap()));
        }
        let total: usize = parts.iter().map(|p| p.1).sum();
        let rows: usize = lead.iter().product();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &(v, w) in &parts {
                out.extend_from_slice(&self.val(v)[r * w..(r + 1) * w]);
            }
        }
        let mut shape = lead;
        shape.push(total);
        self.push(Op::Concat { parts }, shape, out, "concat")
    }

    /// `out[i] = x[index[i]]` where each entry moves a contiguous block of
    /// `block` values.
    pub fn gather(&mut self, x: Var, index: Arc<Vec<usize>>, block: usize, shape: Vec<usize>) -> Result<Var> {
        let numel = self.val(x).len();
        if shape.iter().product::<usize>() != index.len() * block || index.iter().any(|&i| (i + 1) * block > numel) {
            return Err(Error::shape("gather", format!("index does not fit input of {numel} values")));
        }
        let vx = self.val(x);
        let mut out = Vec::with_capacity(index.len() * block);
        for &i in index.iter() {
            out.extend_from_slice(&vx[i * block..(i + 1) * block]);
        }
        self.push(Op::Gather { x, index, block }, shape, out, "gather")
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        if shape.iter().product::<usize>() != self.val(x).len() {
            return Err(Error::shape("reshape", format!("{:?} -> {shape:?}", self.shape(x))));
        }
        let v = self.val(x).to_vec();
        self.push(Op::Reshape(x), shape, v, "reshape")
    }

    /// Box filter over `[.., grid², c]` token maps laid out as `grid × grid`.
    pub fn avg_pool_tokens(&mut self, x: Var, grid: usize, size: usize) -> Result<Var> {
        let s = self.shape(x);
        if s.len() < 2 || s[s.len() - 2] != grid * grid {
            return Err(Error::shape("avg_pool", format!("{s:?} is not a {grid}x{grid} token map")));
        }
        if size % 2 == 0 || size > grid {
            return Err(Error::config(format!("pool size {size} must be odd and <= {grid}")));
        }
        let c = *s.last().unwrap();
        let shape = s.to_vec();
        let mut out = vec![T::zero(); self.val(x).len()];
        avg_pool(self.val(x), &mut out, grid, size, c);
        self.push(Op::AvgPool { x, grid, size }, shape, out, "avg_pool")
    }

    /// `λ[head] · scale · scores + (1 − λ[head]) · prior`; an absent prior is zero.
    pub fn blend(&mut self, scores: Var, prior: Option<Var>, lambda: Var, head: usize, scale: T) -> Result<Var> {
        if let Some(p) = prior {
            self.same_shape(scores, p, "blend")?;
        }
        if head >= self.val(lambda).len() {
            return Err(Error::shape("blend", format!("head {head} outside lambda {:?}", self.shape(lambda))));
        }
        let lam = self.val(lambda)[head];
        let keep = T::one() - lam;
        let out = match prior {
            Some(p) => self.zip_map(scores, p, |s, c| lam * scale * s + keep * c),
            None => self.map(scores, |s| lam * scale * s),
        };
        let shape = self.shape(scores).to_vec();
        self.push(Op::Blend { scores, prior, lambda, head, scale }, shape, out, "blend")
    }

    /// Batched hard data consistency on `[B, H, W, 2]` images.
    pub fn data_consistency(&mut self, x: Var, kspace: &[KSpace<T>], masks: &[SamplingMask]) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 4 || s[3] != 2 || s[0] != kspace.len() || s[0] != masks.len() {
            return Err(Error::shape("data_consistency", format!("{s:?} with {} measurements", kspace.len())));
        }
        let (h, w) = (s[1], s[2]);
        for (k, m) in kspace.iter().zip(masks) {
            if k.height() != h || k.width() != w || m.width() != w {
                return Err(Error::shape("data_consistency", "measurement geometry differs from image"));
            }
        }
        let spec = Arc::new(DcSpec {
            plan: Fft2::new(h, w),
            kspace: kspace.iter().map(|k| k.data().to_vec()).collect(),
            masks: masks.iter().map(|m| m.columns().to_vec()).collect(),
        });
        let per = h * w * 2;
        let mut out = self.val(x).to_vec();
        for (i, img) in out.chunks_exact_mut(per).enumerate() {
            spec.plan.project_measured(img, &spec.kspace[i], &spec.masks[i]);
        }
        self.push(Op::Dc { x, spec }, s, out, "data_consistency")
    }

    /// Mean absolute error.
    pub fn l1_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        self.same_shape(pred, target, "l1_loss")?;
        let n = T::lit(self.val(pred).len() as f64);
        let total: T = self.val(pred).iter().zip(self.val(target)).map(|(&a, &b)| (a - b).abs()).sum();
        self.push(Op::L1 { pred, target }, vec![1], vec![total / n], "l1_loss")
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let total = self.val(x).iter().copied().sum();
        self.push(Op::Sum(x), vec![1], vec![total], "sum")
    }

    /// Sum of `weights ⊙ x` with constant weights.
    pub fn weighted_sum(&mut self, x: Var, weights: &Tensor<T>) -> Result<Var> {
        let w = self.constant(weights.clone());
        let p = self.mul(x, w)?;
        self.sum(p)
    }
}
