//! Procedural stand-in assets: soft-edged foregrounds and textured backgrounds.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagecore::{save_alpha, save_image, AlphaMatte, BitDepth, Image};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ForegroundKind {
    /// Anti-aliased disk.
    Disk,
    /// Disk body with thin hair-like strokes radiating from it.
    Filaments,
}

fn smooth_colour(rng: &mut impl Rng, h: usize, w: usize) -> Image {
    let a: [f64; 3] = [rng.gen(), rng.gen(), rng.gen()];
    let b: [f64; 3] = [rng.gen(), rng.gen(), rng.gen()];
    let theta: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let (c, s) = (theta.cos(), theta.sin());
    let span = (h + w) as f64;
    Image::from_fn(h, w, |y, x| {
        let t = ((x as f64 * c + y as f64 * s) / span + 0.5).clamp(0.0, 1.0);
        [0, 1, 2].map(|k| a[k] * (1.0 - t) + b[k] * t)
    })
    .expect("finite colours")
}

/// Coverage of a pixel by a shape whose signed distance (negative inside) is `d`.
fn coverage(d: f64) -> f64 {
    (0.5 - d).clamp(0.0, 1.0)
}

fn distance_to_segment(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (vx, vy) = (b.0 - a.0, b.1 - a.1);
    let len2 = vx * vx + vy * vy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * vx + (p.1 - a.1) * vy) / len2).clamp(0.0, 1.0)
    };
    ((p.0 - a.0 - t * vx).powi(2) + (p.1 - a.1 - t * vy).powi(2)).sqrt()
}

/// Foreground colours and alpha of side `size`.
pub fn synth_foreground(rng: &mut impl Rng, size: usize, kind: ForegroundKind) -> Result<(Image, AlphaMatte)> {
    if size < 8 {
        return Err(Error::Parameter(format!("foreground size {size} below 8")));
    }
    let fg = smooth_colour(rng, size, size);
    let s = size as f64;
    let (cy, cx) = (s * rng.gen_range(0.4..0.6), s * rng.gen_range(0.4..0.6));
    let r = s * rng.gen_range(0.18..0.3);
    let mut alpha: Vec<f64> = (0..size * size)
        .map(|i| {
            let (y, x) = ((i / size) as f64, (i % size) as f64);
            coverage(((y - cy).powi(2) + (x - cx).powi(2)).sqrt() - r)
        })
        .collect();
    if kind == ForegroundKind::Filaments {
        let strands = rng.gen_range(6..14);
        for _ in 0..strands {
            let ang: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let len = r * rng.gen_range(0.5..1.2);
            let half_width = rng.gen_range(0.3..0.9);
            let opacity = rng.gen_range(0.5..1.0);
            // a polyline with a slight random bend
            let bend: f64 = rng.gen_range(-0.4..0.4);
            let pts: Vec<(f64, f64)> = (0..=4)
                .map(|k| {
                    let t = k as f64 / 4.0;
                    let a = ang + bend * t;
                    let d = r * 0.8 + len * t;
                    (cy + d * a.sin(), cx + d * a.cos())
                })
                .collect();
            for (i, a) in alpha.iter_mut().enumerate() {
                let p = ((i / size) as f64, (i % size) as f64);
                let d = pts
                    .windows(2)
                    .map(|w| distance_to_segment(p, w[0], w[1]))
                    .fold(f64::INFINITY, f64::min);
                let c = opacity * coverage(d - half_width);
                *a = 1.0 - (1.0 - *a) * (1.0 - c);
            }
        }
    }
    Ok((fg, AlphaMatte::new(size, size, alpha)?))
}

/// Smooth colour field with superimposed sinusoidal texture.
pub fn synth_background(rng: &mut impl Rng, height: usize, width: usize) -> Result<Image> {
    let base = smooth_colour(rng, height, width);
    let waves: Vec<(f64, f64, f64, [f64; 3])> = (0..4)
        .map(|_| {
            let f = rng.gen_range(0.05..0.6);
            let th: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let amp: [f64; 3] = [rng.gen_range(0.0..0.12), rng.gen_range(0.0..0.12), rng.gen_range(0.0..0.12)];
            (f * th.cos(), f * th.sin(), rng.gen_range(0.0..std::f64::consts::TAU), amp)
        })
        .collect();
    Image::from_fn(height, width, |y, x| {
        let mut px = base.pixel(y, x);
        for (fx, fy, ph, amp) in &waves {
            let v = (fx * x as f64 + fy * y as f64 + ph).sin();
            for k in 0..3 {
                px[k] += amp[k] * v;
            }
        }
        px.map(|v| v.clamp(0.0, 1.0))
    })
}

/// A foreground with its matte on disk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForegroundItem {
    pub foreground: PathBuf,
    pub alpha: PathBuf,
}

/// Source pools for dataset assembly; paths relative to the pool file's directory.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AssetPool {
    pub foregrounds: Vec<ForegroundItem>,
    pub backgrounds: Vec<PathBuf>,
}

pub const POOL_FILE: &str = "pool.json";

impl AssetPool {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub foregrounds: usize,
    pub backgrounds: usize,
    pub size: usize,
    /// Backgrounds are drawn this much larger so compositing exercises resizing.
    pub background_size: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            foregrounds: 6,
            backgrounds: 4,
            size: 64,
            background_size: 80,
            seed: 0,
        }
    }
}

/// Writes `fg/`, `alpha/`, `bg/` PNGs and `pool.json` under `dir`.
pub fn write_synth_pool(dir: &Path, cfg: &SynthConfig) -> Result<AssetPool> {
    if cfg.foregrounds == 0 || cfg.backgrounds == 0 {
        return Err(Error::Config("synthetic pools must be nonempty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut pool = AssetPool::default();
    for i in 0..cfg.foregrounds {
        let kind = if i % 2 == 0 { ForegroundKind::Disk } else { ForegroundKind::Filaments };
        let (fg, alpha) = synth_foreground(&mut rng, cfg.size, kind)?;
        let item = ForegroundItem {
            foreground: PathBuf::from(format!("fg/{i:04}.png")),
            alpha: PathBuf::from(format!("alpha/{i:04}.png")),
        };
        save_image(&fg, dir.join(&item.foreground), BitDepth::Eight)?;
        save_alpha(&alpha, dir.join(&item.alpha), BitDepth::Eight)?;
        pool.foregrounds.push(item);
    }
    for j in 0..cfg.backgrounds {
        let bg = synth_background(&mut rng, cfg.background_size, cfg.background_size)?;
        let path = PathBuf::from(format!("bg/{j:04}.png"));
        save_image(&bg, dir.join(&path), BitDepth::Eight)?;
        pool.backgrounds.push(path);
    }
    pool.save(&dir.join(POOL_FILE))?;
    Ok(pool)
}
