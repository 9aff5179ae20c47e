//! Still-image and video evaluation sweeps.

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::{load_sample, resolve, DatasetManifest, Split};
use crate::distort::DistortionMode;
use crate::error::{Error, Result};
use crate::imagecore::{load_alpha, load_image, load_trimap, AlphaMatte, CompositeSample, Image, Trimap};
use crate::metrics::{evaluate_pair_with, MetricParams, MetricReport};
use crate::netgen::{Generator, InputVolume, TOTAL_STRIDE};

/// Source of predicted mattes.
#[derive(Debug, Clone)]
pub enum Predictor {
    Model(Box<Generator>),
    /// Ground truth passed through.
    Oracle,
    Constant(f64),
    /// Ground truth plus clipped zero-mean Gaussian noise, seeded per sample.
    NoisyGt { sigma: f64, seed: u64 },
}

fn pad_edge<T: Copy>(img: &[T], h: usize, w: usize, ch: usize, ph: usize, pw: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(ph * pw * ch);
    for y in 0..ph {
        let sy = y.min(h - 1);
        for x in 0..pw {
            let sx = x.min(w - 1);
            out.extend_from_slice(&img[(sy * w + sx) * ch..(sy * w + sx + 1) * ch]);
        }
    }
    out
}

/// Generator inference on arbitrary sizes: edge-pad to a multiple of the
/// network stride, predict, crop back.
pub fn predict_padded(g: &Generator, composite: &Image, background: &Image, trimap: &Trimap) -> Result<AlphaMatte> {
    let d = composite.dims();
    let up = |n: usize| n.div_ceil(TOTAL_STRIDE).max(2) * TOTAL_STRIDE;
    let (ph, pw) = (up(d.height), up(d.width));
    if (ph, pw) == (d.height, d.width) {
        return g.predict(&InputVolume::from_parts(composite, background, trimap)?);
    }
    let c = Image::new(ph, pw, pad_edge(composite.as_slice(), d.height, d.width, 3, ph, pw))?;
    let b = Image::new(ph, pw, pad_edge(background.as_slice(), d.height, d.width, 3, ph, pw))?;
    let t = Trimap::new(ph, pw, pad_edge(trimap.labels(), d.height, d.width, 1, ph, pw))?;
    g.predict(&InputVolume::from_parts(&c, &b, &t)?)?.crop(0, 0, d.height, d.width)
}

impl Predictor {
    pub fn label(&self) -> String {
        match self {
            Predictor::Model(_) => "model".into(),
            Predictor::Oracle => "oracle".into(),
            Predictor::Constant(v) => format!("constant-{v}"),
            Predictor::NoisyGt { sigma, .. } => format!("noisy-gt-{sigma}"),
        }
    }

    /// Prediction for one frame; `key` seeds stochastic predictors.
    pub fn predict(&self, composite: &Image, background: &Image, trimap: &Trimap, gt: &AlphaMatte, key: u64) -> Result<AlphaMatte> {
        match self {
            Predictor::Model(g) => predict_padded(g, composite, background, trimap),
            Predictor::Oracle => Ok(gt.clone()),
            Predictor::Constant(v) => AlphaMatte::filled(gt.height(), gt.width(), *v),
            Predictor::NoisyGt { sigma, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(key));
                let noise = Normal::new(0.0, *sigma).map_err(|e| Error::Parameter(e.to_string()))?;
                let v = gt
                    .as_slice()
                    .iter()
                    .map(|a| (a + noise.sample(&mut rng)).clamp(0.0, 1.0))
                    .collect();
                AlphaMatte::new(gt.height(), gt.width(), v)
            }
        }
    }

    pub fn predict_sample(&self, s: &CompositeSample, key: u64) -> Result<AlphaMatte> {
        self.predict(&s.composite, &s.background_distorted, &s.trimap, &s.alpha_gt, key)
    }
}

/// One evaluated item; `report` is absent when the item failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub id: String,
    pub report: Option<MetricReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StillReport {
    pub rows: Vec<EvalRow>,
    /// Per-metric mean over the successful rows.
    pub mean: Option<[f64; 4]>,
}

impl StillReport {
    pub fn successes(&self) -> impl Iterator<Item = (&str, &MetricReport)> {
        self.rows.iter().filter_map(|r| r.report.as_ref().map(|m| (r.id.as_str(), m)))
    }

    pub fn failures(&self) -> impl Iterator<Item = (&str, &str)> {
        self.rows
            .iter()
            .filter_map(|r| r.error.as_deref().map(|e| (r.id.as_str(), e)))
    }
}

pub fn mean_of<'a>(reports: impl IntoIterator<Item = &'a MetricReport>) -> Option<[f64; 4]> {
    let mut sum = [0.0; 4];
    let mut n = 0usize;
    for r in reports {
        for (s, v) in sum.iter_mut().zip(r.values()) {
            *s += v;
        }
        n += 1;
    }
    (n > 0).then(|| sum.map(|s| s / n as f64))
}

/// Predicts and scores every record of `split`; per-record failures are kept as rows.
pub fn evaluate_still(
    predictor: &Predictor,
    manifest: &DatasetManifest,
    root: &Path,
    split: Split,
    mode: DistortionMode,
    params: &MetricParams,
) -> Result<StillReport> {
    let items: Vec<_> = manifest.split(split).collect();
    if items.is_empty() {
        return Err(Error::Config(format!("manifest has no {split:?} records")));
    }
    let distortion = &manifest.provenance.config.distortion;
    let rows: Vec<EvalRow> = items
        .par_iter()
        .map(|&(i, r)| {
            let outcome = load_sample(root, r, mode, i, distortion).and_then(|s| {
                let pred = predictor.predict_sample(&s, i as u64)?;
                evaluate_pair_with(&pred, &s.alpha_gt, &s.trimap, params)
            });
            match outcome {
                Ok(rep) => EvalRow {
                    id: r.id.clone(),
                    report: Some(rep),
                    error: None,
                },
                Err(e) => EvalRow {
                    id: r.id.clone(),
                    report: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    let mean = mean_of(rows.iter().filter_map(|r| r.report.as_ref()));
    Ok(StillReport { rows, mean })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub composite: PathBuf,
    pub alpha: PathBuf,
    pub trimap: PathBuf,
    pub background: PathBuf,
}

/// One sequence under one background source.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoEvalSpec {
    pub sequence: String,
    /// Label of the background source (a reconstruction method or the simulator).
    pub method: String,
    pub frames: Vec<FrameRecord>,
}

fn sorted_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    files.sort();
    Ok(files)
}

impl VideoEvalSpec {
    /// Pairs frames by sorted file order from `seq_dir/{composite,alpha,trimap}` and `background_dir`.
    pub fn from_dirs(sequence: &str, method: &str, seq_dir: &Path, background_dir: &Path) -> Result<Self> {
        let comp = sorted_files(&seq_dir.join("composite"))?;
        let alpha = sorted_files(&seq_dir.join("alpha"))?;
        let trimap = sorted_files(&seq_dir.join("trimap"))?;
        let bg = sorted_files(background_dir)?;
        if comp.is_empty() || [alpha.len(), trimap.len(), bg.len()].iter().any(|&n| n != comp.len()) {
            return Err(Error::Config(format!(
                "sequence {sequence}: frame counts differ or are zero (composite {}, alpha {}, trimap {}, background {})",
                comp.len(),
                alpha.len(),
                trimap.len(),
                bg.len()
            )));
        }
        let frames = (0..comp.len())
            .map(|k| FrameRecord {
                composite: comp[k].clone(),
                alpha: alpha[k].clone(),
                trimap: trimap[k].clone(),
                background: bg[k].clone(),
            })
            .collect();
        Ok(Self {
            sequence: sequence.to_string(),
            method: method.to_string(),
            frames,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames.is_empty() {
            return Err(Error::Config(format!("sequence {} has no frames", self.sequence)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoRow {
    pub model: String,
    pub sequence: String,
    pub method: String,
    pub frames: usize,
    pub failed_frames: Vec<(usize, String)>,
    /// Mean over successful frames.
    pub mean: Option<[f64; 4]>,
}

impl VideoRow {
    pub fn partial(&self) -> bool {
        !self.failed_frames.is_empty()
    }
}

fn evaluate_frame(predictor: &Predictor, root: &Path, f: &FrameRecord, key: u64, params: &MetricParams, first: Option<(usize, usize)>) -> Result<MetricReport> {
    let composite = load_image(resolve(root, &f.composite))?;
    let gt = load_alpha(resolve(root, &f.alpha))?;
    let trimap = load_trimap(resolve(root, &f.trimap))?;
    let background = load_image(resolve(root, &f.background))?;
    if let Some((h, w)) = first {
        if (composite.height(), composite.width()) != (h, w) {
            return Err(Error::shape(format!(
                "frame is {} but the sequence started at {h}x{w}",
                composite.dims()
            )));
        }
    }
    let pred = predictor.predict(&composite, &background, &trimap, &gt, key)?;
    evaluate_pair_with(&pred, &gt, &trimap, params)
}

/// One row per (model, sequence/background source) pair, averaged over frames.
pub fn evaluate_video(
    models: &[(String, Predictor)],
    specs: &[VideoEvalSpec],
    root: &Path,
    params: &MetricParams,
) -> Result<Vec<VideoRow>> {
    let mut rows = Vec::new();
    for spec in specs {
        spec.validate()?;
        let f0 = load_image(resolve(root, &spec.frames[0].composite))?;
        let first = Some((f0.height(), f0.width()));
        for (label, predictor) in models {
            let results: Vec<Result<MetricReport>> = spec
                .frames
                .par_iter()
                .enumerate()
                .map(|(k, f)| evaluate_frame(predictor, root, f, k as u64, params, first))
                .collect();
            let mut failed = Vec::new();
            let mut ok = Vec::new();
            for (k, r) in results.into_iter().enumerate() {
                match r {
                    Ok(m) => ok.push(m),
                    Err(e) => failed.push((k, e.to_string())),
                }
            }
            rows.push(VideoRow {
                model: label.clone(),
                sequence: spec.sequence.clone(),
                method: spec.method.clone(),
                frames: spec.frames.len(),
                failed_frames: failed,
                mean: mean_of(&ok),
            });
        }
    }
    Ok(rows)
}
