//! Reverse-mode tape over [`Tensor`] values.
//!
//! Every op appends a node holding its forward value. [`Graph::backward`]
//! walks the tape in reverse and returns per-node gradients.

use super::kernels::{col2im, gemm, im2col, ConvGeom};
use super::store::{TensorId, TensorStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Argmax positions recorded by a 2×2 max-pool, reused for unpooling.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolIndices {
    argmax: Vec<usize>,
    input_shape: [usize; 4],
}

/// Batch statistics measured by a training-mode batch norm.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    /// Unbiased variance, as used for running estimates.
    pub var: Vec<f64>,
}

pub const BN_EPS: f64 = 1e-5;

#[derive(Debug)]
enum Op {
    Leaf,
    Param(TensorId),
    Conv {
        x: Var,
        w: Var,
        b: Option<Var>,
        g: ConvGeom,
    },
    ConvTranspose {
        x: Var,
        w: Var,
        b: Option<Var>,
        g: ConvGeom,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        batch_stats: bool,
    },
    Relu(Var),
    LeakyRelu(Var, f64),
    Sigmoid(Var),
    MaxPool {
        x: Var,
        argmax: Vec<usize>,
    },
    Unpool {
        x: Var,
        argmax: Vec<usize>,
    },
    Upsample2(Var),
    Concat(Vec<Var>),
    Add(Var, Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Linear interpolation taps for a ×2 half-pixel-centred upsample.
fn upsample_taps(n: usize) -> Vec<(usize, usize, f64)> {
    (0..2 * n)
        .map(|o| {
            let src = ((o as f64 + 0.5) / 2.0 - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(n - 1);
            let i1 = (i0 + 1).min(n - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}

/// Sigmoid outputs are kept this far from 0 and 1.
pub const SIGMOID_MARGIN: f64 = 1e-12;

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn input(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn param(&mut self, store: &TensorStore, id: TensorId) -> Var {
        self.push(store.get(id).clone(), Op::Param(id), true)
    }

    /// Cross-correlation with weight `[Co, Ci, k, k]` and optional bias `[Co,1,1,1]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, g: ConvGeom) -> Result<Var> {
        let xs = self.value(x).shape();
        let ws = self.value(w).shape();
        if ws[1] != xs[1] || ws[2] != g.kernel || ws[3] != g.kernel {
            return Err(Error::shape(format!(
                "conv2d: input {xs:?} vs weight {ws:?}"
            )));
        }
        let [n, ci, h, wd] = xs;
        let co = ws[0];
        let (oh, ow) = (g.conv_out(h)?, g.conv_out(wd)?);
        let k = ci * g.kernel * g.kernel;
        let p = oh * ow;
        let mut out = Tensor::zeros([n, co, oh, ow]);
        let mut cols = vec![0.0; k * p];
        {
            let xv = &self.nodes[x.0].value;
            let wv = self.nodes[w.0].value.data();
            for s in 0..n {
                im2col(xv.sample(s), ci, h, wd, g, oh, ow, &mut cols);
                gemm(co, k, p, wv, false, &cols, false, out.sample_mut(s), false);
            }
        }
        if let Some(b) = b {
            let bv = self.value(b).data().to_vec();
            for s in 0..n {
                for (c, chunk) in out.sample_mut(s).chunks_mut(p).enumerate() {
                    chunk.iter_mut().for_each(|v| *v += bv[c]);
                }
            }
        }
        let needs = self.needs(x) || self.needs(w) || b.is_some_and(|b| self.needs(b));
        Ok(self.push(out, Op::Conv { x, w, b, g }, needs))
    }

    /// Transposed convolution with weight `[Ci, Co, k, k]`.
    pub fn conv_transpose2d(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        g: ConvGeom,
    ) -> Result<Var> {
        let xs = self.value(x).shape();
        let ws = self.value(w).shape();
        if ws[0] != xs[1] || ws[2] != g.kernel || ws[3] != g.kernel {
            return Err(Error::shape(format!(
                "conv_transpose2d: input {xs:?} vs weight {ws:?}"
            )));
        }
        let [n, ci, h, wd] = xs;
        let co = ws[1];
        let (oh, ow) = (g.transposed_out(h)?, g.transposed_out(wd)?);
        let kk = co * g.kernel * g.kernel;
        let p = h * wd;
        let mut out = Tensor::zeros([n, co, oh, ow]);
        let mut cols = vec![0.0; kk * p];
        {
            let xv = &self.nodes[x.0].value;
            let wv = self.nodes[w.0].value.data();
            for s in 0..n {
                gemm(kk, ci, p, wv, true, xv.sample(s), false, &mut cols, false);
                col2im(&cols, co, oh, ow, g, h, wd, out.sample_mut(s));
            }
        }
        if let Some(b) = b {
            let bv = self.value(b).data().to_vec();
            let plane = oh * ow;
            for s in 0..n {
                for (c, chunk) in out.sample_mut(s).chunks_mut(plane).enumerate() {
                    chunk.iter_mut().for_each(|v| *v += bv[c]);
                }
            }
        }
        let needs = self.needs(x) || self.needs(w) || b.is_some_and(|b| self.needs(b));
        Ok(self.push(out, Op::ConvTranspose { x, w, b, g }, needs))
    }

    /// Batch norm over `N·H·W` per channel using the batch's own statistics.
    pub fn batch_norm_train(&mut self, x: Var, gamma: Var, beta: Var) -> (Var, BatchStats) {
        let xv = self.value(x);
        let [n, c, _, _] = xv.shape();
        let plane = xv.plane();
        let m = (n * plane) as f64;
        let mut mean = vec![0.0; c];
        let mut var = vec![0.0; c];
        for s in 0..n {
            for (ch, chunk) in xv.sample(s).chunks(plane).enumerate() {
                mean[ch] += chunk.iter().sum::<f64>();
            }
        }
        mean.iter_mut().for_each(|v| *v /= m);
        for s in 0..n {
            for (ch, chunk) in xv.sample(s).chunks(plane).enumerate() {
                var[ch] += chunk.iter().map(|v| (v - mean[ch]).powi(2)).sum::<f64>();
            }
        }
        let biased: Vec<f64> = var.iter().map(|v| v / m).collect();
        let unbiased: Vec<f64> = var
            .iter()
            .map(|v| if m > 1.0 { v / (m - 1.0) } else { 0.0 })
            .collect();
        let inv_std: Vec<f64> = biased.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let out = self.normalize(x, gamma, beta, &mean, inv_std, true);
        (
            out,
            BatchStats {
                mean,
                var: unbiased,
            },
        )
    }

    /// Batch norm with fixed (running) statistics.
    pub fn batch_norm_eval(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        mean: &[f64],
        var: &[f64],
    ) -> Var {
        let inv_std = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        self.normalize(x, gamma, beta, mean, inv_std, false)
    }

    fn normalize(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        mean: &[f64],
        inv_std: Vec<f64>,
        batch_stats: bool,
    ) -> Var {
        let xv = self.value(x);
        let shape = xv.shape();
        let plane = xv.plane();
        let gv = self.value(gamma).data();
        let bv = self.value(beta).data();
        let mut xhat = Tensor::zeros(shape);
        let mut out = Tensor::zeros(shape);
        for s in 0..shape[0] {
            let src = xv.sample(s);
            let xh = xhat.sample_mut(s);
            for ch in 0..shape[1] {
                for i in ch * plane..(ch + 1) * plane {
                    xh[i] = (src[i] - mean[ch]) * inv_std[ch];
                }
            }
            let dst = out.sample_mut(s);
            for ch in 0..shape[1] {
                for i in ch * plane..(ch + 1) * plane {
                    dst[i] = gv[ch] * xh[i] + bv[ch];
                }
            }
        }
        let needs = self.needs(x) || self.needs(gamma) || self.needs(beta);
        self.push(
            out,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat: xhat.into_vec(),
                inv_std,
                batch_stats,
            },
            needs,
        )
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let mut out = self.value(x).clone();
        out.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
        let needs = self.needs(x);
        self.push(out, Op::Relu(x), needs)
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let mut out = self.value(x).clone();
        out.data_mut()
            .iter_mut()
            .for_each(|v| *v = if *v > 0.0 { *v } else { slope * *v });
        let needs = self.needs(x);
        self.push(out, Op::LeakyRelu(x, slope), needs)
    }

    /// Logistic function, clamped to `[SIGMOID_MARGIN, 1 − SIGMOID_MARGIN]`.
    pub fn sigmoid(&mut self, x: Var) -> Var {
        let mut out = self.value(x).clone();
        out.data_mut().iter_mut().for_each(|v| {
            *v = (1.0 / (1.0 + (-*v).exp())).clamp(SIGMOID_MARGIN, 1.0 - SIGMOID_MARGIN)
        });
        let needs = self.needs(x);
        self.push(out, Op::Sigmoid(x), needs)
    }

    /// 2×2 stride-2 max pool; ties resolve to the first position in scan order.
    pub fn max_pool2(&mut self, x: Var) -> Result<(Var, PoolIndices)> {
        let xv = self.value(x);
        let [n, c, h, w] = xv.shape();
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::shape(format!("max_pool2 needs even extents, got {h}x{w}")));
        }
        let (oh, ow) = (h / 2, w / 2);
        let mut out = Tensor::zeros([n, c, oh, ow]);
        let mut argmax = Vec::with_capacity(out.len());
        let src = xv.data();
        let dst = out.data_mut();
        for nc in 0..n * c {
            let base = nc * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = base + 2 * oy * w + 2 * ox;
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let j = base + (2 * oy + dy) * w + 2 * ox + dx;
                        if src[j] > src[best] {
                            best = j;
                        }
                    }
                    dst[(nc * oh + oy) * ow + ox] = src[best];
                    argmax.push(best);
                }
            }
        }
        let idx = PoolIndices {
            argmax: argmax.clone(),
            input_shape: [n, c, h, w],
        };
        let needs = self.needs(x);
        Ok((self.push(out, Op::MaxPool { x, argmax }, needs), idx))
    }

    /// Places each value back at the position its max-pool argmax came from.
    pub fn max_unpool2(&mut self, x: Var, indices: &PoolIndices) -> Result<Var> {
        let xv = self.value(x);
        let [n, c, h, w] = indices.input_shape;
        if xv.shape() != [n, c, h / 2, w / 2] {
            return Err(Error::shape(format!(
                "unpool input {:?} does not match pooled shape of {:?}",
                xv.shape(),
                indices.input_shape
            )));
        }
        let mut out = Tensor::zeros(indices.input_shape);
        let dst = out.data_mut();
        for (v, &j) in xv.data().iter().zip(&indices.argmax) {
            dst[j] += v;
        }
        let needs = self.needs(x);
        Ok(self.push(
            out,
            Op::Unpool {
                x,
                argmax: indices.argmax.clone(),
            },
            needs,
        ))
    }

    /// ×2 bilinear upsample with half-pixel centres and edge clamping.
    pub fn upsample2(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let [n, c, h, w] = xv.shape();
        let (ty, tx) = (upsample_taps(h), upsample_taps(w));
        let mut out = Tensor::zeros([n, c, 2 * h, 2 * w]);
        let src = xv.data();
        let dst = out.data_mut();
        for nc in 0..n * c {
            let s = &src[nc * h * w..(nc + 1) * h * w];
            let d = &mut dst[nc * 4 * h * w..(nc + 1) * 4 * h * w];
            for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
                for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                    let top = s[y0 * w + x0] * (1.0 - fx) + s[y0 * w + x1] * fx;
                    let bot = s[y1 * w + x0] * (1.0 - fx) + s[y1 * w + x1] * fx;
                    d[oy * 2 * w + ox] = top * (1.0 - fy) + bot * fy;
                }
            }
        }
        let needs = self.needs(x);
        self.push(out, Op::Upsample2(x), needs)
    }

    /// Concatenates along the channel axis.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = self.value(parts[0]).shape();
        let mut channels = 0;
        for &p in parts {
            let s = self.value(p).shape();
            if s[0] != first[0] || s[2] != first[2] || s[3] != first[3] {
                return Err(Error::shape(format!("concat: {s:?} vs {first:?}")));
            }
            channels += s[1];
        }
        let [n, _, h, w] = first;
        let mut out = Tensor::zeros([n, channels, h, w]);
        for s in 0..n {
            let dst = out.sample_mut(s);
            let mut off = 0;
            for &p in parts {
                let src = self.nodes[p.0].value.sample(s);
                dst[off..off + src.len()].copy_from_slice(src);
                off += src.len();
            }
        }
        let needs = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(out, Op::Concat(parts.to_vec()), needs))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::shape(format!(
                "add: {:?} vs {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Add(a, b), needs))
    }

    /// Back-propagates the seeded output gradients through the tape.
    pub fn backward(&self, seeds: &[(Var, Tensor)]) -> Gradients {
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        for (v, g) in seeds {
            debug_assert_eq!(g.shape(), self.value(*v).shape());
            accumulate(&mut grads, *v, g.clone());
        }
        for idx in (0..self.nodes.len()).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(gout) = grads[idx].take() else {
                continue;
            };
            self.backward_node(node, &gout, &mut grads);
            grads[idx] = Some(gout);
        }
        Gradients { grads }
    }

    fn backward_node(&self, node: &Node, gout: &Tensor, grads: &mut [Option<Tensor>]) {
        match &node.op {
            Op::Leaf | Op::Param(_) => {}
            Op::Conv { x, w, b, g } => {
                let xv = self.value(*x);
                let wv = self.value(*w);
                let [n, ci, h, wd] = xv.shape();
                let [_, co, oh, ow] = gout.shape();
                let k = ci * g.kernel * g.kernel;
                let p = oh * ow;
                let mut cols = vec![0.0; k * p];
                let mut dw = Tensor::zeros(wv.shape());
                let mut dx = self.needs(*x).then(|| Tensor::zeros(xv.shape()));
                for s in 0..n {
                    let go = gout.sample(s);
                    if self.needs(*w) {
                        im2col(xv.sample(s), ci, h, wd, *g, oh, ow, &mut cols);
                        gemm(co, p, k, go, false, &cols, true, dw.data_mut(), true);
                    }
                    if let Some(dx) = dx.as_mut() {
                        gemm(k, co, p, wv.data(), true, go, false, &mut cols, false);
                        col2im(&cols, ci, h, wd, *g, oh, ow, dx.sample_mut(s));
                    }
                }
                if self.needs(*w) {
                    accumulate(grads, *w, dw);
                }
                if let Some(dx) = dx {
                    accumulate(grads, *x, dx);
                }
                if let Some(b) = b {
                    accumulate(grads, *b, channel_sums(gout));
                }
            }
            Op::ConvTranspose { x, w, b, g } => {
                let xv = self.value(*x);
                let wv = self.value(*w);
                let [n, ci, h, wd] = xv.shape();
                let [_, co, oh, ow] = gout.shape();
                let kk = co * g.kernel * g.kernel;
                let p = h * wd;
                let mut cols = vec![0.0; kk * p];
                let mut dw = Tensor::zeros(wv.shape());
                let mut dx = self.needs(*x).then(|| Tensor::zeros(xv.shape()));
                for s in 0..n {
                    im2col(gout.sample(s), co, oh, ow, *g, h, wd, &mut cols);
                    if self.needs(*w) {
                        gemm(ci, p, kk, xv.sample(s), false, &cols, true, dw.data_mut(), true);
                    }
                    if let Some(dx) = dx.as_mut() {
                        gemm(ci, kk, p, wv.data(), false, &cols, false, dx.sample_mut(s), false);
                    }
                }
                if self.needs(*w) {
                    accumulate(grads, *w, dw);
                }
                if let Some(dx) = dx {
                    accumulate(grads, *x, dx);
                }
                if let Some(b) = b {
                    accumulate(grads, *b, channel_sums(gout));
                }
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats,
            } => {
                let shape = gout.shape();
                let [n, c, _, _] = shape;
                let plane = gout.plane();
                let gv = self.value(*gamma).data();
                let mut dgamma = vec![0.0; c];
                let mut dbeta = vec![0.0; c];
                for s in 0..n {
                    let go = gout.sample(s);
                    let off = s * c * plane;
                    for ch in 0..c {
                        for i in ch * plane..(ch + 1) * plane {
                            dgamma[ch] += go[i] * xhat[off + i];
                            dbeta[ch] += go[i];
                        }
                    }
                }
                if self.needs(*x) {
                    let mut dx = Tensor::zeros(shape);
                    let m = (n * plane) as f64;
                    for s in 0..n {
                        let go = gout.sample(s);
                        let off = s * c * plane;
                        let d = dx.sample_mut(s);
                        for ch in 0..c {
                            for i in ch * plane..(ch + 1) * plane {
                                d[i] = if *batch_stats {
                                    // dxhat = go·γ; Σdxhat = γ·dβ; Σdxhat·xhat = γ·dγ
                                    gv[ch] * inv_std[ch] / m
                                        * (m * go[i] - dbeta[ch] - xhat[off + i] * dgamma[ch])
                                } else {
                                    gv[ch] * inv_std[ch] * go[i]
                                };
                            }
                        }
                    }
                    accumulate(grads, *x, dx);
                }
                let pshape = self.value(*gamma).shape();
                accumulate(grads, *gamma, Tensor::from_vec(pshape, dgamma).expect("shape"));
                accumulate(grads, *beta, Tensor::from_vec(pshape, dbeta).expect("shape"));
            }
            Op::Relu(x) => {
                let mut dx = gout.clone();
                for (d, v) in dx.data_mut().iter_mut().zip(node.value.data()) {
                    if *v <= 0.0 {
                        *d = 0.0;
                    }
                }
                accumulate(grads, *x, dx);
            }
            Op::LeakyRelu(x, slope) => {
                let mut dx = gout.clone();
                for (d, v) in dx.data_mut().iter_mut().zip(self.value(*x).data()) {
                    if *v <= 0.0 {
                        *d *= slope;
                    }
                }
                accumulate(grads, *x, dx);
            }
            Op::Sigmoid(x) => {
                let mut dx = gout.clone();
                for (d, s) in dx.data_mut().iter_mut().zip(node.value.data()) {
                    *d *= s * (1.0 - s);
                }
                accumulate(grads, *x, dx);
            }
            Op::MaxPool { x, argmax } => {
                let mut dx = Tensor::zeros(self.value(*x).shape());
                let d = dx.data_mut();
                for (g, &j) in gout.data().iter().zip(argmax) {
                    d[j] += g;
                }
                accumulate(grads, *x, dx);
            }
            Op::Unpool { x, argmax } => {
                let src = gout.data();
                let data = argmax.iter().map(|&j| src[j]).collect();
                let dx = Tensor::from_vec(self.value(*x).shape(), data).expect("shape");
                accumulate(grads, *x, dx);
            }
            Op::Upsample2(x) => {
                let [n, c, h, w] = self.value(*x).shape();
                let (ty, tx) = (upsample_taps(h), upsample_taps(w));
                let mut dx = Tensor::zeros([n, c, h, w]);
                let src = gout.data();
                let dst = dx.data_mut();
                for nc in 0..n * c {
                    let g = &src[nc * 4 * h * w..(nc + 1) * 4 * h * w];
                    let d = &mut dst[nc * h * w..(nc + 1) * h * w];
                    for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
                        for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                            let v = g[oy * 2 * w + ox];
                            d[y0 * w + x0] += v * (1.0 - fy) * (1.0 - fx);
                            d[y0 * w + x1] += v * (1.0 - fy) * fx;
                            d[y1 * w + x0] += v * fy * (1.0 - fx);
                            d[y1 * w + x1] += v * fy * fx;
                        }
                    }
                }
                accumulate(grads, *x, dx);
            }
            Op::Concat(parts) => {
                let n = gout.batch();
                let mut off = 0;
                for &p in parts {
                    let shape = self.value(p).shape();
                    let len = shape[1] * shape[2] * shape[3];
                    if self.needs(p) {
                        let mut dp = Tensor::zeros(shape);
                        for s in 0..n {
                            dp.sample_mut(s)
                                .copy_from_slice(&gout.sample(s)[off..off + len]);
                        }
                        accumulate(grads, p, dp);
                    }
                    off += len;
                }
            }
            Op::Add(a, b) => {
                if self.needs(*a) {
                    accumulate(grads, *a, gout.clone());
                }
                if self.needs(*b) {
                    accumulate(grads, *b, gout.clone());
                }
            }
        }
    }
}

fn channel_sums(t: &Tensor) -> Tensor {
    let [n, c, _, _] = t.shape();
    let plane = t.plane();
    let mut sums = vec![0.0; c];
    for s in 0..n {
        for (ch, chunk) in t.sample(s).chunks(plane).enumerate() {
            sums[ch] += chunk.iter().sum::<f64>();
        }
    }
    Tensor::from_vec([c, 1, 1, 1], sums).expect("shape")
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

/// Output of [`Graph::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }

    /// Gradients of every parameter node, keyed by store id.
    pub fn params<'a>(&'a self, graph: &'a Graph) -> impl Iterator<Item = (TensorId, &'a Tensor)> {
        graph.nodes.iter().enumerate().filter_map(move |(i, n)| match n.op {
            Op::Param(id) => self.grads[i].as_ref().map(|g| (id, g)),
            _ => None,
        })
    }

    /// Accumulates parameter gradients into `store` (shaped like the parameter store).
    pub fn accumulate_into(&self, graph: &Graph, store: &mut TensorStore) {
        for (id, g) in self.params(graph) {
            store.get_mut(id).add_assign(g);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: [usize; 4], rng: &mut ChaCha8Rng) -> Tensor {
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Checks d<probe, f(x)>/dx against central differences for one input leaf.
    fn check_input_grad(
        shape: [usize; 4],
        seed: u64,
        build: impl Fn(&mut Graph, Var) -> Var,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x0 = random(shape, &mut rng);
        let mut g = Graph::new();
        let x = g.input(x0.clone(), true);
        let y = build(&mut g, x);
        let probe = random(g.value(y).shape(), &mut rng);
        let grads = g.backward(&[(y, probe.clone())]);
        let analytic = grads.get(x).unwrap().clone();
        let eval = |t: Tensor| {
            let mut g = Graph::new();
            let x = g.input(t, false);
            let y = build(&mut g, x);
            g.value(y)
                .data()
                .iter()
                .zip(probe.data())
                .map(|(a, b)| a * b)
                .sum::<f64>()
        };
        let h = 1e-6;
        for i in 0..x0.len() {
            let mut plus = x0.clone();
            plus.data_mut()[i] += h;
            let mut minus = x0.clone();
            minus.data_mut()[i] -= h;
            let numeric = (eval(plus) - eval(minus)) / (2.0 * h);
            let a = analytic.data()[i];
            assert!(
                (a - numeric).abs() <= 1e-6 * (1.0 + a.abs().max(numeric.abs())),
                "index {i}: analytic {a} numeric {numeric}"
            );
        }
    }

    #[test]
    fn conv_input_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = random([3, 2, 3, 3], &mut rng);
        let b = random([3, 1, 1, 1], &mut rng);
        check_input_grad([2, 2, 7, 6], 2, |g, x| {
            let w = g.input(w.clone(), true);
            let b = g.input(b.clone(), true);
            g.conv2d(x, w, Some(b), ConvGeom::new(3, 2, 2, 2)).unwrap()
        });
    }

    #[test]
    fn conv_weight_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random([2, 2, 6, 6], &mut rng);
        check_input_grad([3, 2, 3, 3], 4, |g, w| {
            let x = g.input(x.clone(), false);
            g.conv2d(x, w, None, ConvGeom::new(3, 1, 1, 1)).unwrap()
        });
    }

    #[test]
    fn conv_transpose_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w = random([2, 3, 4, 4], &mut rng);
        check_input_grad([1, 2, 4, 5], 6, |g, x| {
            let w = g.input(w.clone(), true);
            g.conv_transpose2d(x, w, None, ConvGeom::new(4, 2, 1, 1)).unwrap()
        });
        let x = random([2, 2, 3, 3], &mut rng);
        check_input_grad([2, 3, 4, 4], 7, |g, w| {
            let x = g.input(x.clone(), false);
            g.conv_transpose2d(x, w, None, ConvGeom::new(4, 2, 1, 1)).unwrap()
        });
    }

    #[test]
    fn batch_norm_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let gamma = random([3, 1, 1, 1], &mut rng);
        let beta = random([3, 1, 1, 1], &mut rng);
        check_input_grad([2, 3, 4, 3], 9, |g, x| {
            let ga = g.input(gamma.clone(), true);
            let be = g.input(beta.clone(), true);
            g.batch_norm_train(x, ga, be).0
        });
        check_input_grad([2, 3, 4, 3], 10, |g, x| {
            let ga = g.input(gamma.clone(), true);
            let be = g.input(beta.clone(), true);
            g.batch_norm_eval(x, ga, be, &[0.1, -0.2, 0.3], &[0.5, 1.5, 2.0])
        });
    }

    #[test]
    fn pointwise_and_resampling_gradients() {
        check_input_grad([1, 2, 4, 6], 11, |g, x| g.sigmoid(x));
        check_input_grad([1, 2, 4, 6], 12, |g, x| g.leaky_relu(x, 0.2));
        check_input_grad([1, 2, 4, 6], 13, |g, x| g.relu(x));
        check_input_grad([2, 2, 3, 5], 14, |g, x| g.upsample2(x));
        check_input_grad([1, 2, 4, 6], 15, |g, x| {
            let (p, idx) = g.max_pool2(x).unwrap();
            let s = g.sigmoid(p);
            g.max_unpool2(s, &idx).unwrap()
        });
        check_input_grad([2, 2, 3, 3], 16, |g, x| {
            let s = g.sigmoid(x);
            let c = g.concat(&[x, s]).unwrap();
            let r = g.relu(x);
            let a = g.add(x, r).unwrap();
            g.concat(&[c, a]).unwrap()
        });
    }

    #[test]
    fn upsample_of_constant_is_constant() {
        let mut g = Graph::new();
        let x = g.input(Tensor::full([1, 1, 3, 4], 0.7), false);
        let y = g.upsample2(x);
        assert_eq!(g.value(y).shape(), [1, 1, 6, 8]);
        assert!(g.value(y).data().iter().all(|&v| (v - 0.7).abs() < 1e-15));
    }

    #[test]
    fn pool_unpool_round_trip_keeps_maxima() {
        let mut g = Graph::new();
        let data = vec![1.0, 5.0, 2.0, 0.0, 3.0, 4.0, 8.0, 7.0];
        let x = g.input(Tensor::from_vec([1, 1, 2, 4], data).unwrap(), false);
        let (p, idx) = g.max_pool2(x).unwrap();
        assert_eq!(g.value(p).data(), &[5.0, 8.0]);
        let u = g.max_unpool2(p, &idx).unwrap();
        assert_eq!(g.value(u).data(), &[0.0, 5.0, 0.0, 0.0, 0.0, 0.0, 8.0, 0.0]);
    }
}
