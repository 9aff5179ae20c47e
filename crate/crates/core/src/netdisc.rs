//! Patch discriminator over 7-channel volumes.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagecore::{compose, AlphaMatte, CompositeSample, Dims};
use crate::netgen::{InputVolume, INPUT_CHANNELS};
use crate::nn::{BatchNorm, Conv, ConvGeom, Ctx, Graph, Mode, RunningStatUpdate, Tensor, TensorStore, Var};

const LEAKY_SLOPE: f64 = 0.2;
const KERNEL: usize = 4;
const MAX_WIDTH_MULT: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscriminatorConfig {
    pub base_width: usize,
    /// Number of stride-2 layers; 1 gives a 16×16 patch, 3 gives 70×70.
    pub n_layers: usize,
    pub init_seed: u64,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self {
            base_width: 8,
            n_layers: 1,
            init_seed: 1,
        }
    }
}

/// One convolution of the stack: `(stride, pad)`; all kernels are 4×4.
fn layer_geoms(n_layers: usize) -> Vec<ConvGeom> {
    let mut geoms: Vec<ConvGeom> = (0..n_layers).map(|_| ConvGeom::new(KERNEL, 2, 1, 1)).collect();
    geoms.push(ConvGeom::new(KERNEL, 1, 1, 1));
    geoms.push(ConvGeom::new(KERNEL, 1, 1, 1));
    geoms
}

impl DiscriminatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.base_width == 0 {
            return Err(Error::Config("discriminator base_width must be positive".into()));
        }
        if self.n_layers == 0 {
            return Err(Error::Config("discriminator n_layers must be >= 1".into()));
        }
        Ok(())
    }

    /// Side of the input patch seen by one output score.
    pub fn patch_receptive_field(&self) -> usize {
        layer_geoms(self.n_layers)
            .iter()
            .rev()
            .fold(1, |rf, g| (rf - 1) * g.stride + g.kernel)
    }

    /// Distance in input pixels between neighbouring scores.
    pub fn total_stride(&self) -> usize {
        1 << self.n_layers
    }

    /// Score-map size from conv arithmetic.
    pub fn score_dims(&self, input: Dims) -> Result<Dims> {
        let mut d = input;
        for g in layer_geoms(self.n_layers) {
            d = Dims::new(g.conv_out(d.height)?, g.conv_out(d.width)?);
            if d.is_empty() {
                return Err(Error::shape(format!("input {input} too small for discriminator")));
            }
        }
        Ok(d)
    }
}

#[derive(Debug, Clone)]
pub struct Discriminator {
    config: DiscriminatorConfig,
    pub params: TensorStore,
    pub buffers: TensorStore,
    convs: Vec<Conv>,
    norms: Vec<Option<BatchNorm>>,
}

pub struct DiscriminatorPass {
    pub graph: Graph,
    pub input: Var,
    /// Raw logits, `N×1×h×w`.
    pub scores: Var,
    pub running_stats: RunningStatUpdate,
}

pub fn build_discriminator(cfg: &DiscriminatorConfig) -> Result<Discriminator> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.init_seed);
    let mut params = TensorStore::new();
    let mut buffers = TensorStore::new();
    let geoms = layer_geoms(cfg.n_layers);
    let last = geoms.len() - 1;
    let mut convs = Vec::new();
    let mut norms = Vec::new();
    let mut cin = INPUT_CHANNELS;
    for (i, g) in geoms.into_iter().enumerate() {
        let cout = if i == last {
            1
        } else {
            cfg.base_width * (1 << i.min(cfg.n_layers)).min(MAX_WIDTH_MULT)
        };
        let name = format!("disc.layer{i}");
        // First and last layers carry a bias and no normalization.
        let normed = i != 0 && i != last;
        let gain = if i == last { 0.1 } else { 1.0 };
        convs.push(Conv::new(&mut params, &mut rng, &format!("{name}.conv"), cin, cout, g, !normed, gain));
        norms.push(normed.then(|| BatchNorm::new(&mut params, &mut buffers, &format!("{name}.bn"), cout)));
        cin = cout;
    }
    Ok(Discriminator {
        config: cfg.clone(),
        params,
        buffers,
        convs,
        norms,
    })
}

impl Discriminator {
    pub fn config(&self) -> &DiscriminatorConfig {
        &self.config
    }

    /// Records a pass; `input_requires_grad` exposes d(scores)/d(volume).
    pub fn forward(&self, input: &Tensor, mode: Mode, input_requires_grad: bool) -> Result<DiscriminatorPass> {
        if input.channels() != INPUT_CHANNELS {
            return Err(Error::shape(format!(
                "discriminator expects {INPUT_CHANNELS} channels, got {}",
                input.channels()
            )));
        }
        self.config.score_dims(Dims::new(input.height(), input.width()))?;
        let mut ctx = Ctx::new(&self.params, &self.buffers, mode);
        let x = ctx.graph.input(input.clone(), input_requires_grad);
        let mut y = x;
        let last = self.convs.len() - 1;
        for (i, (conv, norm)) in self.convs.iter().zip(&self.norms).enumerate() {
            y = conv.forward(&mut ctx, y)?;
            if let Some(bn) = norm {
                y = bn.forward(&mut ctx, y);
            }
            if i != last {
                y = ctx.graph.leaky_relu(y, LEAKY_SLOPE);
            }
        }
        let (graph, running_stats) = ctx.finish();
        Ok(DiscriminatorPass {
            graph,
            input: x,
            scores: y,
            running_stats,
        })
    }

    /// Patch logits for a single volume with frozen statistics.
    pub fn score(&self, volume: &InputVolume) -> Result<Tensor> {
        let pass = self.forward(volume.tensor(), Mode::Eval, false)?;
        Ok(pass.graph.value(pass.scores).clone())
    }
}

/// Real volume: composite from GT alpha over the clean background, distorted background, trimap.
pub fn make_real_volume(sample: &CompositeSample) -> Result<InputVolume> {
    make_fake_volume(sample, &sample.alpha_gt)
}

/// Fake volume: as [`make_real_volume`] but composited with `alpha_pred`.
pub fn make_fake_volume(sample: &CompositeSample, alpha_pred: &AlphaMatte) -> Result<InputVolume> {
    sample.dims().ensure_same(alpha_pred.dims(), "predicted alpha")?;
    let composite = compose(&sample.foreground, &sample.background_clean, alpha_pred)?;
    InputVolume::from_parts(&composite, &sample.background_distorted, &sample.trimap)
}
