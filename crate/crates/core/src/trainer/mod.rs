//! Adversarial training of the generator against the patch discriminator.

mod checkpoint;

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::mpsc::sync_channel;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagecore::{AlphaMatte, CompositeSample, TrimapLabel};
use crate::losses::{
    alpha_l1, comp_l1, gan_loss_d_grad, gan_loss_g_grad, weighted_total_loss, LossWeights, RegionMode,
};
use crate::netdisc::{build_discriminator, make_fake_volume, make_real_volume, Discriminator, DiscriminatorConfig};
use crate::netgen::{assemble_input, build_generator, Generator, GeneratorConfig, TOTAL_STRIDE};
use crate::nn::{Adam, AdamConfig, Mode, Tensor, TensorStore};

pub use checkpoint::{load_checkpoint, load_generator, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};

/// Learning-rate policy. Only a constant rate is implemented.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LrSchedule {
    #[default]
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub lr_schedule: LrSchedule,
    pub epochs: usize,
    pub batch_size: usize,
    /// Side of the square training crop; a multiple of 8.
    pub crop_size: usize,
    pub seed: u64,
    /// Write a checkpoint every this many steps (0: final checkpoint only).
    pub checkpoint_every: u64,
    pub d_steps_per_g: usize,
    /// Batches prepared ahead of the optimizer.
    pub prefetch: usize,
    pub alpha_region: RegionMode,
    pub loss_weights: LossWeights,
    pub generator: GeneratorConfig,
    pub discriminator: DiscriminatorConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 2e-4,
            adam_beta1: 0.5,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            lr_schedule: LrSchedule::Constant,
            epochs: 1,
            batch_size: 2,
            crop_size: 64,
            seed: 0,
            checkpoint_every: 0,
            d_steps_per_g: 1,
            prefetch: 4,
            alpha_region: RegionMode::AllPixels,
            loss_weights: LossWeights::default(),
            generator: GeneratorConfig::default(),
            discriminator: DiscriminatorConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be >= 0, got {}", self.learning_rate));
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&b) {
                return bad(format!("{name} must lie in [0, 1), got {b}"));
            }
        }
        if !(self.adam_eps > 0.0) {
            return bad("adam_eps must be positive".into());
        }
        if self.epochs == 0 || self.batch_size == 0 || self.d_steps_per_g == 0 || self.prefetch == 0 {
            return bad("epochs, batch_size, d_steps_per_g and prefetch must be >= 1".into());
        }
        if self.crop_size == 0 || !self.crop_size.is_multiple_of(TOTAL_STRIDE) {
            return bad(format!("crop_size must be a positive multiple of {TOTAL_STRIDE}, got {}", self.crop_size));
        }
        self.generator.validate()?;
        self.discriminator.validate()?;
        let crop = crate::imagecore::Dims::new(self.crop_size, self.crop_size);
        self.discriminator.score_dims(crop).map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }

    pub fn steps_per_epoch(&self, samples: usize) -> u64 {
        samples.div_ceil(self.batch_size) as u64
    }
}

/// Losses of one step, as logged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLosses {
    pub step: u64,
    pub l_alpha: f64,
    pub l_comp: f64,
    pub l_gan_g: f64,
    pub l_gan_d: f64,
    pub l_total: f64,
}

impl StepLosses {
    fn all_finite(&self) -> bool {
        [self.l_alpha, self.l_comp, self.l_gan_g, self.l_gan_d, self.l_total]
            .iter()
            .all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone)]
pub struct TrainState {
    /// Completed optimizer steps.
    pub step: u64,
    /// Epoch containing the next step.
    pub epoch: u64,
    pub seed: u64,
    pub generator: Generator,
    pub discriminator: Discriminator,
    pub opt_g: Adam,
    pub opt_d: Adam,
    pub history: Vec<StepLosses>,
}

impl TrainState {
    pub fn new(cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let generator = build_generator(&cfg.generator)?;
        let discriminator = build_discriminator(&cfg.discriminator)?;
        let opt_g = Adam::new(cfg.adam(), &generator.params);
        let opt_d = Adam::new(cfg.adam(), &discriminator.params);
        Ok(Self {
            step: 0,
            epoch: 0,
            seed: cfg.seed,
            generator,
            discriminator,
            opt_g,
            opt_d,
            history: Vec::new(),
        })
    }
}

/// Cropped samples with their stacked network inputs.
#[derive(Debug, Clone)]
pub struct Batch {
    pub samples: Vec<CompositeSample>,
    /// `N×7×H×W` generator input.
    pub input: Tensor,
    /// `N×7×H×W` real discriminator volumes.
    pub real: Tensor,
}

impl Batch {
    pub fn new(samples: Vec<CompositeSample>) -> Result<Self> {
        let inputs = samples
            .iter()
            .map(|s| assemble_input(s).map(|v| v.into_tensor()))
            .collect::<Result<Vec<_>>>()?;
        let reals = samples
            .iter()
            .map(|s| make_real_volume(s).map(|v| v.into_tensor()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            input: Tensor::stack(&inputs)?,
            real: Tensor::stack(&reals)?,
            samples,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

const SHUFFLE_STREAM: u64 = 0x5348_5546;
const CROP_STREAM: u64 = 0x4352_4f50;

fn derived_rng(seed: u64, stream: u64, counter: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ stream);
    rng.set_stream(counter);
    rng
}

/// Sample order of one epoch.
pub fn epoch_order(seed: u64, epoch: u64, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut derived_rng(seed, SHUFFLE_STREAM, epoch));
    order
}

/// Square crop of side `size` centred (where possible) on a random unknown pixel.
pub fn random_crop(sample: &CompositeSample, size: usize, rng: &mut impl Rng) -> Result<CompositeSample> {
    let d = sample.dims();
    if d.height < size || d.width < size {
        return Err(Error::Config(format!("sample {d} smaller than crop_size {size}")));
    }
    let unknown: Vec<usize> = (0..d.len())
        .filter(|&i| sample.trimap.labels()[i] == TrimapLabel::Unknown)
        .collect();
    let centre = if unknown.is_empty() {
        rng.gen_range(0..d.len())
    } else {
        unknown[rng.gen_range(0..unknown.len())]
    };
    let (cy, cx) = (centre / d.width, centre % d.width);
    let y0 = cy.saturating_sub(size / 2).min(d.height - size);
    let x0 = cx.saturating_sub(size / 2).min(d.width - size);
    sample.crop(y0, x0, size, size)
}

/// The batch consumed at global step `step`; a pure function of its arguments.
pub fn batch_for_step(cfg: &TrainConfig, data: &[CompositeSample], step: u64) -> Result<Batch> {
    let per_epoch = cfg.steps_per_epoch(data.len());
    let epoch = step / per_epoch;
    let k = (step % per_epoch) as usize;
    let order = epoch_order(cfg.seed, epoch, data.len());
    let picked = &order[k * cfg.batch_size..((k + 1) * cfg.batch_size).min(data.len())];
    let mut rng = derived_rng(cfg.seed, CROP_STREAM, step);
    let crops = picked
        .iter()
        .map(|&i| random_crop(&data[i], cfg.crop_size, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    Batch::new(crops)
}

fn alphas_from(t: &Tensor) -> Result<Vec<AlphaMatte>> {
    (0..t.batch())
        .map(|n| AlphaMatte::new(t.height(), t.width(), t.sample(n).to_vec()))
        .collect()
}

fn fake_volumes(batch: &Batch, alphas: &[AlphaMatte]) -> Result<Tensor> {
    let vols = batch
        .samples
        .iter()
        .zip(alphas)
        .map(|(s, a)| make_fake_volume(s, a).map(|v| v.into_tensor()))
        .collect::<Result<Vec<_>>>()?;
    Tensor::stack(&vols)
}

fn divergence(step: u64, what: &str) -> Error {
    Error::Divergence {
        step,
        detail: format!("non-finite {what}"),
    }
}

/// One discriminator update on real volumes and detached fakes. Returns the D loss.
pub fn update_discriminator(state: &mut TrainState, batch: &Batch, fake: &Tensor) -> Result<f64> {
    let n = batch.len();
    let both = Tensor::stack(&[batch.real.clone(), fake.clone()])?;
    let pass = state.discriminator.forward(&both, Mode::Train, false)?;
    let scores = pass.graph.value(pass.scores);
    let half = n * scores.plane();
    let (real, fake_s) = scores.data().split_at(half);
    let (loss, g_real, g_fake) = gan_loss_d_grad(real, fake_s);
    if !loss.is_finite() {
        return Err(divergence(state.step + 1, "discriminator loss"));
    }
    let mut seed = g_real;
    seed.extend(g_fake);
    let seed = Tensor::from_vec(scores.shape(), seed)?;
    let grads = pass.graph.backward(&[(pass.scores, seed)]);
    let mut store = state.discriminator.params.zeros_like();
    grads.accumulate_into(&pass.graph, &mut store);
    ensure_finite(&store, state.step + 1, "discriminator gradient")?;
    state.opt_d.update(&mut state.discriminator.params, &store);
    pass.running_stats.apply(&mut state.discriminator.buffers);
    Ok(loss)
}

fn ensure_finite(store: &TensorStore, step: u64, what: &str) -> Result<()> {
    if store.iter().all(|(_, t)| t.is_finite()) {
        Ok(())
    } else {
        Err(divergence(step, what))
    }
}

/// One step: a discriminator update followed by a generator update.
pub fn train_step(state: &mut TrainState, batch: &Batch, cfg: &TrainConfig) -> Result<StepLosses> {
    let step = state.step + 1;
    let gpass = state.generator.forward(&batch.input, Mode::Train)?;
    let pred = gpass.graph.value(gpass.output).clone();
    if !pred.is_finite() {
        return Err(divergence(step, "generator output"));
    }
    let alphas = alphas_from(&pred)?;
    let fake = fake_volumes(batch, &alphas)?;

    let mut l_gan_d = 0.0;
    for _ in 0..cfg.d_steps_per_g {
        l_gan_d = update_discriminator(state, batch, &fake)?;
    }

    // Generator side. Discriminator statistics from this pass are discarded.
    let dpass = state.discriminator.forward(&fake, Mode::Train, true)?;
    let (l_gan_g, g_scores) = gan_loss_g_grad(dpass.graph.value(dpass.scores).data());
    let scores_shape = dpass.graph.value(dpass.scores).shape();
    let dgrads = dpass.graph.backward(&[(dpass.scores, Tensor::from_vec(scores_shape, g_scores)?)]);
    let d_volume = dgrads
        .get(dpass.input)
        .ok_or_else(|| Error::shape("missing discriminator input gradient"))?;

    let gt: Vec<f64> = batch.samples.iter().flat_map(|s| s.alpha_gt.as_slice().iter().copied()).collect();
    let fg: Vec<f64> = batch.samples.iter().flat_map(|s| s.foreground.as_slice().iter().copied()).collect();
    let bg: Vec<f64> = batch
        .samples
        .iter()
        .flat_map(|s| s.background_clean.as_slice().iter().copied())
        .collect();
    let mask: Option<Vec<bool>> = match cfg.alpha_region {
        RegionMode::AllPixels => None,
        RegionMode::UnknownOnly => Some(
            batch
                .samples
                .iter()
                .flat_map(|s| s.trimap.labels().iter().map(|&l| l == TrimapLabel::Unknown))
                .collect(),
        ),
    };
    let (l_alpha, g_alpha) = alpha_l1(pred.data(), &gt, mask.as_deref())?;
    let (l_comp, g_comp) = comp_l1(pred.data(), &gt, &fg, &bg)?;

    let w = cfg.loss_weights;
    let plane = pred.plane();
    let mut seed = vec![0.0; pred.len()];
    for (i, s) in seed.iter_mut().enumerate() {
        let (n, p) = (i / plane, i % plane);
        let vol = d_volume.sample(n);
        // composite channels depend on alpha through (fg − bg_clean)
        let gan: f64 = (0..3).map(|c| vol[c * plane + p] * (fg[3 * i + c] - bg[3 * i + c])).sum();
        *s = w.alpha * g_alpha[i] + w.comp * g_comp[i] + w.gan * gan;
    }
    let ggrads = gpass.graph.backward(&[(gpass.output, Tensor::from_vec(pred.shape(), seed)?)]);
    let mut store = state.generator.params.zeros_like();
    ggrads.accumulate_into(&gpass.graph, &mut store);
    ensure_finite(&store, step, "generator gradient")?;

    let total = weighted_total_loss(l_alpha, l_comp, l_gan_g, &w);
    let losses = StepLosses {
        step,
        l_alpha,
        l_comp,
        l_gan_g,
        l_gan_d,
        l_total: total.l_total,
    };
    if !losses.all_finite() {
        return Err(Error::Divergence {
            step,
            detail: format!("non-finite loss {losses:?}"),
        });
    }
    state.opt_g.update(&mut state.generator.params, &store);
    gpass.running_stats.apply(&mut state.generator.buffers);
    state.step = step;
    state.history.push(losses);
    Ok(losses)
}

pub const LOSS_CSV: &str = "losses.csv";
pub const FINAL_CHECKPOINT: &str = "final.ckpt";

pub fn checkpoint_path(out_dir: &Path, step: u64) -> PathBuf {
    out_dir.join(format!("step_{step:08}.ckpt"))
}

pub fn write_loss_csv(history: &[StepLosses], path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut w = csv::Writer::from_path(path)?;
    for row in history {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Where a run writes, and the raw configuration text echoed into checkpoints.
#[derive(Debug, Clone)]
pub struct RunOutput<'a> {
    pub out_dir: &'a Path,
    pub config_text: &'a str,
}

/// Runs (or resumes) training until `epochs · ⌈N/batch⌉` steps have completed.
pub fn train(
    cfg: &TrainConfig,
    data: &[CompositeSample],
    out: &RunOutput,
    resume: Option<TrainState>,
) -> Result<TrainState> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    let mut state = match resume {
        Some(s) => s,
        None => TrainState::new(cfg)?,
    };
    let per_epoch = cfg.steps_per_epoch(data.len());
    let total = cfg.epochs as u64 * per_epoch;
    fs::create_dir_all(out.out_dir).map_err(|e| Error::io(out.out_dir, e))?;

    let first = state.step;
    let result = std::thread::scope(|scope| -> Result<()> {
        let (tx, rx) = sync_channel(cfg.prefetch);
        scope.spawn(move || {
            for step in first..total {
                if tx.send(batch_for_step(cfg, data, step)).is_err() {
                    break;
                }
            }
        });
        for batch in rx {
            let batch = batch?;
            let losses = match train_step(&mut state, &batch, cfg) {
                Ok(l) => l,
                Err(e) => {
                    dump_divergence(out.out_dir, &state, &e);
                    return Err(e);
                }
            };
            state.epoch = state.step / per_epoch;
            log::debug!(
                "step {} epoch {} l_alpha {:.5} l_comp {:.5} l_gan_g {:.5} l_gan_d {:.5}",
                losses.step,
                state.epoch,
                losses.l_alpha,
                losses.l_comp,
                losses.l_gan_g,
                losses.l_gan_d
            );
            if cfg.checkpoint_every > 0 && state.step % cfg.checkpoint_every == 0 {
                save_checkpoint(&state, cfg, out.config_text, &checkpoint_path(out.out_dir, state.step))?;
            }
        }
        Ok(())
    });
    result?;
    write_loss_csv(&state.history, &out.out_dir.join(LOSS_CSV))?;
    save_checkpoint(&state, cfg, out.config_text, &out.out_dir.join(FINAL_CHECKPOINT))?;
    Ok(state)
}

fn dump_divergence(dir: &Path, state: &TrainState, err: &Error) {
    let body = serde_json::json!({
        "error": err.to_string(),
        "completed_steps": state.step,
        "recent_losses": state.history.iter().rev().take(10).collect::<Vec<_>>(),
    });
    let path = dir.join("divergence.json");
    if let Err(e) = fs::write(&path, body.to_string()) {
        log::warn!("could not write {}: {e}", path.display());
    }
}

#[cfg(test)]
mod tests;
