//! SAD, MSE, GRAD and CONN matting errors.
//!
//! SAD, GRAD and CONN are reported in thousands; MSE is a region mean.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagecore::{AlphaMatte, Dims, Trimap, TrimapLabel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalRegion {
    #[default]
    UnknownOnly,
    AllPixels,
}

impl fmt::Display for EvalRegion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EvalRegion::UnknownOnly => "unknown-only",
            EvalRegion::AllPixels => "all-pixels",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricParams {
    pub region: EvalRegion,
    pub grad_sigma: f64,
    pub conn_step: f64,
    pub conn_theta: f64,
}

impl Default for MetricParams {
    fn default() -> Self {
        Self {
            region: EvalRegion::UnknownOnly,
            grad_sigma: 1.4,
            conn_step: 0.1,
            conn_theta: 0.15,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub sad: f64,
    pub mse: f64,
    pub grad: f64,
    pub conn: f64,
    pub eval_region: EvalRegion,
}

impl MetricReport {
    pub fn values(&self) -> [f64; 4] {
        [self.sad, self.mse, self.grad, self.conn]
    }
}

pub const METRIC_NAMES: [&str; 4] = ["SAD", "MSE", "GRAD", "CONN"];

const GRAD_EPSILON: f64 = 1e-2;

fn region_mask(trimap: &Trimap, region: EvalRegion) -> Vec<bool> {
    match region {
        EvalRegion::AllPixels => vec![true; trimap.dims().len()],
        EvalRegion::UnknownOnly => trimap.labels().iter().map(|&l| l == TrimapLabel::Unknown).collect(),
    }
}

fn check(pred: &AlphaMatte, gt: &AlphaMatte, trimap: &Trimap) -> Result<()> {
    pred.dims().ensure_same(gt.dims(), "metric ground truth")?;
    pred.dims().ensure_same(trimap.dims(), "metric trimap")
}

pub fn sad(pred: &AlphaMatte, gt: &AlphaMatte, trimap: &Trimap, region: EvalRegion) -> Result<f64> {
    check(pred, gt, trimap)?;
    let mask = region_mask(trimap, region);
    let sum: f64 = (pred.as_slice().iter().zip(gt.as_slice()))
        .zip(&mask)
        .filter(|(_, &m)| m)
        .map(|((p, g), _)| (p - g).abs())
        .sum();
    Ok(sum / 1000.0)
}

pub fn mse(pred: &AlphaMatte, gt: &AlphaMatte, trimap: &Trimap, region: EvalRegion) -> Result<f64> {
    check(pred, gt, trimap)?;
    let mask = region_mask(trimap, region);
    let count = mask.iter().filter(|&&m| m).count();
    if count == 0 {
        return Err(Error::Degenerate("MSE over an empty evaluation region".into()));
    }
    let sum: f64 = (pred.as_slice().iter().zip(gt.as_slice()))
        .zip(&mask)
        .filter(|(_, &m)| m)
        .map(|((p, g), _)| (p - g) * (p - g))
        .sum();
    Ok(sum / count as f64)
}

/// Half-width of the Gaussian-derivative support at `sigma`.
pub fn grad_halfsize(sigma: f64) -> usize {
    let t = (2.0 * std::f64::consts::PI).sqrt() * sigma * GRAD_EPSILON;
    (sigma * (-2.0 * t.ln()).sqrt()).ceil() as usize
}

fn gauss(x: f64, sigma: f64) -> f64 {
    (-x * x / (2.0 * sigma * sigma)).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
}

fn dgauss(x: f64, sigma: f64) -> f64 {
    -x * gauss(x, sigma) / (sigma * sigma)
}

/// 1-D factors of the normalized derivative filter `h[i][j] = g[i]·d[j]`.
fn grad_factors(sigma: f64) -> (Vec<f64>, Vec<f64>) {
    let hs = grad_halfsize(sigma) as isize;
    let g: Vec<f64> = (-hs..=hs).map(|u| gauss(u as f64, sigma)).collect();
    let d: Vec<f64> = (-hs..=hs).map(|u| dgauss(u as f64, sigma)).collect();
    let norm = (g.iter().map(|v| v * v).sum::<f64>() * d.iter().map(|v| v * v).sum::<f64>()).sqrt();
    let d = d.into_iter().map(|v| v / norm).collect();
    (g, d)
}

/// True convolution with a 1-D kernel along one axis, replicate borders.
fn convolve_axis(src: &[f64], dims: Dims, kernel: &[f64], along_x: bool) -> Vec<f64> {
    let hs = (kernel.len() / 2) as isize;
    let (h, w) = (dims.height as isize, dims.width as isize);
    let mut out = vec![0.0; src.len()];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, kv) in kernel.iter().enumerate() {
                let off = k as isize - hs;
                let (sy, sx) = if along_x { (y, x - off) } else { (y - off, x) };
                let (sy, sx) = (sy.clamp(0, h - 1), sx.clamp(0, w - 1));
                acc += kv * src[(sy * w + sx) as usize];
            }
            out[(y * w + x) as usize] = acc;
        }
    }
    out
}

fn gradient_magnitude(alpha: &[f64], dims: Dims, g: &[f64], d: &[f64]) -> Vec<f64> {
    // x-derivative: smooth along y, differentiate along x; y is the transpose.
    let gx = convolve_axis(&convolve_axis(alpha, dims, g, false), dims, d, true);
    let gy = convolve_axis(&convolve_axis(alpha, dims, d, false), dims, g, true);
    gx.iter().zip(&gy).map(|(a, b)| a.hypot(*b)).collect()
}

pub fn grad_error(
    pred: &AlphaMatte,
    gt: &AlphaMatte,
    trimap: &Trimap,
    region: EvalRegion,
    sigma: f64,
) -> Result<f64> {
    check(pred, gt, trimap)?;
    if !(sigma > 0.0) {
        return Err(Error::Parameter(format!("GRAD sigma must be positive, got {sigma}")));
    }
    let dims = pred.dims();
    let support = 2 * grad_halfsize(sigma) + 1;
    if dims.height < support || dims.width < support {
        return Err(Error::shape(format!(
            "GRAD needs at least {support}x{support} pixels, got {dims}"
        )));
    }
    let (g, d) = grad_factors(sigma);
    let mp = gradient_magnitude(pred.as_slice(), dims, &g, &d);
    let mg = gradient_magnitude(gt.as_slice(), dims, &g, &d);
    let mask = region_mask(trimap, region);
    let sum: f64 = (mp.iter().zip(&mg))
        .zip(&mask)
        .filter(|(_, &m)| m)
        .map(|((p, g), _)| (p - g) * (p - g))
        .sum();
    Ok(sum / 1000.0)
}

/// Largest 4-connected component of `mask`; ties go to the one met first in row-major order.
fn largest_component(mask: &[bool], dims: Dims) -> Vec<bool> {
    let (h, w) = (dims.height, dims.width);
    let mut label = vec![usize::MAX; mask.len()];
    let mut best: Option<(usize, usize)> = None; // (label, size)
    let mut stack = Vec::new();
    let mut next = 0;
    for start in 0..mask.len() {
        if !mask[start] || label[start] != usize::MAX {
            continue;
        }
        label[start] = next;
        stack.push(start);
        let mut size = 0;
        while let Some(i) = stack.pop() {
            size += 1;
            let (y, x) = (i / w, i % w);
            let mut visit = |j: usize| {
                if mask[j] && label[j] == usize::MAX {
                    label[j] = next;
                    stack.push(j);
                }
            };
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
        }
        if best.is_none_or(|(_, s)| size > s) {
            best = Some((next, size));
        }
        next += 1;
    }
    match best {
        Some((l, _)) => label.iter().map(|&v| v == l).collect(),
        None => vec![false; mask.len()],
    }
}

pub fn conn_error(
    pred: &AlphaMatte,
    gt: &AlphaMatte,
    trimap: &Trimap,
    region: EvalRegion,
    step: f64,
    theta: f64,
) -> Result<f64> {
    check(pred, gt, trimap)?;
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::Parameter(format!("CONN step must lie in (0, 1], got {step}")));
    }
    let mask = region_mask(trimap, region);
    if !mask.iter().any(|&m| m) {
        return Err(Error::Degenerate("CONN over an empty evaluation region".into()));
    }
    let dims = pred.dims();
    let (p, g) = (pred.as_slice(), gt.as_slice());
    let levels = (1.0 / step).round() as usize;
    let threshold = |i: usize| i as f64 / levels as f64;
    let mut round_down: Vec<Option<f64>> = vec![None; p.len()];
    for i in 1..=levels {
        let t = threshold(i);
        let both: Vec<bool> = p.iter().zip(g).map(|(a, b)| *a >= t && *b >= t).collect();
        let omega = largest_component(&both, dims);
        for (r, &inside) in round_down.iter_mut().zip(&omega) {
            if r.is_none() && !inside {
                *r = Some(threshold(i - 1));
            }
        }
    }
    let phi = |a: f64, l: f64| {
        let d = a - l;
        if d >= theta {
            1.0 - d
        } else {
            1.0
        }
    };
    let mut sum = 0.0;
    for k in 0..p.len() {
        if mask[k] {
            let l = round_down[k].unwrap_or(1.0);
            sum += (phi(p[k], l) - phi(g[k], l)).abs();
        }
    }
    Ok(sum / 1000.0)
}

pub fn evaluate_pair(pred: &AlphaMatte, gt: &AlphaMatte, trimap: &Trimap) -> Result<MetricReport> {
    evaluate_pair_with(pred, gt, trimap, &MetricParams::default())
}

pub fn evaluate_pair_with(
    pred: &AlphaMatte,
    gt: &AlphaMatte,
    trimap: &Trimap,
    params: &MetricParams,
) -> Result<MetricReport> {
    let r = params.region;
    Ok(MetricReport {
        sad: sad(pred, gt, trimap, r)?,
        mse: mse(pred, gt, trimap, r)?,
        grad: grad_error(pred, gt, trimap, r, params.grad_sigma)?,
        conn: conn_error(pred, gt, trimap, r, params.conn_step, params.conn_theta)?,
        eval_region: r,
    })
}
