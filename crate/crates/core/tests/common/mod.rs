#![allow(dead_code, clippy::needless_range_loop)]

use bgmatte::imagecore::{AlphaMatte, Trimap, TrimapLabel};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn in_region(trimap: &Trimap, unknown_only: bool, y: usize, x: usize) -> bool {
    !unknown_only || trimap.get(y, x) == TrimapLabel::Unknown
}

pub fn naive_sad(p: &AlphaMatte, g: &AlphaMatte, t: &Trimap, unknown_only: bool) -> f64 {
    let mut s = 0.0;
    for y in 0..p.height() {
        for x in 0..p.width() {
            if in_region(t, unknown_only, y, x) {
                s += (p.get(y, x) - g.get(y, x)).abs();
            }
        }
    }
    s / 1000.0
}

pub fn naive_mse(p: &AlphaMatte, g: &AlphaMatte, t: &Trimap, unknown_only: bool) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for y in 0..p.height() {
        for x in 0..p.width() {
            if in_region(t, unknown_only, y, x) {
                let d = p.get(y, x) - g.get(y, x);
                s += d * d;
                n += 1;
            }
        }
    }
    s / n as f64
}

fn dense_kernels(sigma: f64) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let eps = 1e-2;
    let hs = (sigma * (-2.0 * ((2.0 * std::f64::consts::PI).sqrt() * sigma * eps).ln()).sqrt()).ceil() as i64;
    let size = (2 * hs + 1) as usize;
    let gauss = |x: f64| (-x * x / (2.0 * sigma * sigma)).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt());
    let dgauss = |x: f64| -x * gauss(x) / (sigma * sigma);
    let mut hx = vec![vec![0.0; size]; size];
    for i in 0..size {
        for j in 0..size {
            hx[i][j] = gauss(i as f64 - hs as f64) * dgauss(j as f64 - hs as f64);
        }
    }
    let norm: f64 = hx.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
    for row in hx.iter_mut() {
        for v in row.iter_mut() {
            *v /= norm;
        }
    }
    let mut hy = vec![vec![0.0; size]; size];
    for i in 0..size {
        for j in 0..size {
            hy[i][j] = hx[j][i];
        }
    }
    (hx, hy)
}

fn dense_conv(a: &AlphaMatte, k: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let (h, w) = (a.height() as i64, a.width() as i64);
    let hs = (k.len() / 2) as i64;
    let mut out = vec![vec![0.0; w as usize]; h as usize];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, row) in k.iter().enumerate() {
                for (j, kv) in row.iter().enumerate() {
                    let sy = (y - (i as i64 - hs)).clamp(0, h - 1);
                    let sx = (x - (j as i64 - hs)).clamp(0, w - 1);
                    acc += kv * a.get(sy as usize, sx as usize);
                }
            }
            out[y as usize][x as usize] = acc;
        }
    }
    out
}

pub fn naive_grad(p: &AlphaMatte, g: &AlphaMatte, t: &Trimap, unknown_only: bool, sigma: f64) -> f64 {
    let (hx, hy) = dense_kernels(sigma);
    let (px, py, gx, gy) = (dense_conv(p, &hx), dense_conv(p, &hy), dense_conv(g, &hx), dense_conv(g, &hy));
    let mut s = 0.0;
    for y in 0..p.height() {
        for x in 0..p.width() {
            if in_region(t, unknown_only, y, x) {
                let mp = (px[y][x] * px[y][x] + py[y][x] * py[y][x]).sqrt();
                let mg = (gx[y][x] * gx[y][x] + gy[y][x] * gy[y][x]).sqrt();
                s += (mp - mg) * (mp - mg);
            }
        }
    }
    s / 1000.0
}

fn find(parent: &mut [usize], i: usize) -> usize {
    let mut r = i;
    while parent[r] != r {
        r = parent[r];
    }
    parent[i] = r;
    r
}

/// Component membership of the largest 4-connected set, via union-find.
fn largest_set(mask: &[bool], h: usize, w: usize) -> Vec<bool> {
    let mut parent: Vec<usize> = (0..mask.len()).collect();
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !mask[i] {
                continue;
            }
            for j in [(x + 1 < w).then(|| i + 1), (y + 1 < h).then(|| i + w)].into_iter().flatten() {
                if mask[j] {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                    if a != b {
                        parent[a.max(b)] = a.min(b);
                    }
                }
            }
        }
    }
    let roots: Vec<Option<usize>> = (0..mask.len()).map(|i| mask[i].then(|| find(&mut parent, i))).collect();
    let mut best: Option<(usize, usize)> = None;
    // roots are the smallest index of each set, so scanning roots in order breaks ties by first pixel
    for r in 0..mask.len() {
        if roots[r] == Some(r) {
            let size = roots.iter().filter(|&&q| q == Some(r)).count();
            if best.is_none_or(|(_, s)| size > s) {
                best = Some((r, size));
            }
        }
    }
    roots.iter().map(|&q| best.is_some_and(|(r, _)| q == Some(r))).collect()
}

pub fn naive_conn(p: &AlphaMatte, g: &AlphaMatte, t: &Trimap, unknown_only: bool) -> f64 {
    let (h, w) = (p.height(), p.width());
    let levels: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
    let omegas: Vec<Vec<bool>> = (1..=10)
        .map(|i| {
            let mask: Vec<bool> = (0..h * w)
                .map(|k| p.get(k / w, k % w) >= levels[i] && g.get(k / w, k % w) >= levels[i])
                .collect();
            largest_set(&mask, h, w)
        })
        .collect();
    let mut s = 0.0;
    for y in 0..h {
        for x in 0..w {
            if !in_region(t, unknown_only, y, x) {
                continue;
            }
            let k = y * w + x;
            let first_out = (0..10).find(|&i| !omegas[i][k]);
            let l = first_out.map_or(1.0, |i| levels[i]);
            let phi = |a: f64| if a - l >= 0.15 { 1.0 - (a - l) } else { 1.0 };
            s += (phi(p.get(y, x)) - phi(g.get(y, x))).abs();
        }
    }
    s / 1000.0
}

/// Random matte with smooth blobs, saturated regions and noise.
pub fn random_matte(rng: &mut ChaCha8Rng, h: usize, w: usize) -> AlphaMatte {
    let (cy, cx, r) = (rng.gen_range(0.0..h as f64), rng.gen_range(0.0..w as f64), rng.gen_range(2.0..10.0));
    let noise = rng.gen_range(0.0..0.3);
    let mut vals = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let d = ((y as f64 - cy).powi(2) + (x as f64 - cx).powi(2)).sqrt();
            let base = (1.5 - d / r).clamp(0.0, 1.0);
            vals.push((base + rng.gen_range(-noise..=noise)).clamp(0.0, 1.0));
        }
    }
    AlphaMatte::new(h, w, vals).unwrap()
}

pub fn random_trimap(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Trimap {
    let mut labels: Vec<TrimapLabel> =
        (0..h * w).map(|_| TrimapLabel::from_index(rng.gen_range(0..3u8)).unwrap()).collect();
    labels[0] = TrimapLabel::Unknown;
    Trimap::new(h, w, labels).unwrap()
}
