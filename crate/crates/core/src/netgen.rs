//! Generator: residual encoder with dilated late stages and ASPP, decoder with
//! index unpooling and skip connections, sigmoid alpha head.
//!
//! Spatial trace for an `H×W` input (total encoder stride 8):
//!
//! ```text
//! stem 7×7/2         H/2   ──────────────┐ (skip)
//! max-pool 2×2/2     H/4   (indices) ─┐  │
//! stage 1            H/4   ───────┐   │  │
//! stage 2 (/2)       H/8          │   │  │
//! stage 3 (dil r3)   H/8          │   │  │
//! stage 4 (dil r4)   H/8          │   │  │
//! ASPP               H/8          │   │  │
//! bilinear ×2        H/4 ⊕ 1×1(stage 1)  │
//! 3×3 convs          H/4              │  │
//! unpool             H/2 ⊕ stem ──────┘──┘
//! transposed conv    H   ⊕ RGB input
//! 3×3 convs, sigmoid H
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagecore::{render_trimap_channel, AlphaMatte, CompositeSample, Dims, Image, Trimap};
use crate::nn::{
    BatchNorm, Conv, ConvBnRelu, ConvGeom, ConvTranspose, Ctx, Graph, Mode, RunningStatUpdate, Tensor,
    TensorStore, Var,
};

pub const INPUT_CHANNELS: usize = 7;
/// Product of the encoder strides (stem, pool, stage 2).
pub const TOTAL_STRIDE: usize = 8;
const BOTTLENECK_EXPANSION: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    /// Bottleneck width of encoder stage 1; later stages double it.
    pub base_width: usize,
    pub stage_depths: [usize; 4],
    /// Dilation of the 3×3 convolutions in stages 3 and 4.
    pub dilation_rates: (usize, usize),
    pub aspp_rates: Vec<usize>,
    pub input_channels: usize,
    /// Initialize from external weights (first-layer RGB kernel copied, extra channels zeroed).
    pub pretrained_init: bool,
    pub init_seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            base_width: 8,
            stage_depths: [1, 1, 1, 1],
            dilation_rates: (2, 4),
            aspp_rates: vec![1, 2, 4],
            input_channels: INPUT_CHANNELS,
            pretrained_init: false,
            init_seed: 0,
        }
    }
}

impl GeneratorConfig {
    /// ResNet-50 stage depths.
    pub fn full_scale() -> Self {
        Self {
            base_width: 64,
            stage_depths: [3, 4, 6, 3],
            aspp_rates: vec![1, 6, 12, 18],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_channels != INPUT_CHANNELS {
            return Err(Error::Config(format!(
                "generator input_channels must be {INPUT_CHANNELS}, got {}",
                self.input_channels
            )));
        }
        if self.base_width == 0 {
            return Err(Error::Config("base_width must be positive".into()));
        }
        if self.stage_depths.contains(&0) {
            return Err(Error::Config("every encoder stage needs at least one block".into()));
        }
        if self.dilation_rates.0 == 0 || self.dilation_rates.1 == 0 {
            return Err(Error::Config("dilation rates must be >= 1".into()));
        }
        if self.aspp_rates.is_empty() || self.aspp_rates.contains(&0) {
            return Err(Error::Config("aspp_rates must be nonempty and >= 1".into()));
        }
        Ok(())
    }
}

/// Planar `1×7×H×W` network input: composite RGB, background RGB, trimap.
#[derive(Debug, Clone, PartialEq)]
pub struct InputVolume {
    tensor: Tensor,
}

/// Writes an interleaved RGB image as three planes.
fn push_planes(img: &Image, out: &mut Vec<f64>) {
    let px = img.as_slice();
    for c in 0..3 {
        out.extend(px.iter().skip(c).step_by(3));
    }
}

impl InputVolume {
    pub fn from_parts(composite: &Image, background: &Image, trimap: &Trimap) -> Result<Self> {
        let dims = composite.dims();
        dims.ensure_same(background.dims(), "input background")?;
        dims.ensure_same(trimap.dims(), "input trimap")?;
        let mut data = Vec::with_capacity(INPUT_CHANNELS * dims.len());
        push_planes(composite, &mut data);
        push_planes(background, &mut data);
        data.extend(render_trimap_channel(trimap));
        let tensor = Tensor::from_vec([1, INPUT_CHANNELS, dims.height, dims.width], data)?;
        Ok(Self { tensor })
    }

    pub fn dims(&self) -> Dims {
        Dims::new(self.tensor.height(), self.tensor.width())
    }

    /// Plane `k` (0-based) in row-major order.
    pub fn channel(&self, k: usize) -> &[f64] {
        let plane = self.tensor.plane();
        &self.tensor.data()[k * plane..(k + 1) * plane]
    }

    pub fn tensor(&self) -> &Tensor {
        &self.tensor
    }

    pub fn into_tensor(self) -> Tensor {
        self.tensor
    }
}

/// Generator input for a sample: composite, distorted background, trimap.
pub fn assemble_input(sample: &CompositeSample) -> Result<InputVolume> {
    InputVolume::from_parts(
        &sample.composite,
        &sample.background_distorted,
        &sample.trimap,
    )
}

/// Spatial sizes at each encoder boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncoderTrace {
    pub input: Dims,
    pub stem: Dims,
    pub pooled: Dims,
    pub stages: [Dims; 4],
    pub aspp: Dims,
}

/// Closed-form encoder trace; errors when the input is not divisible by [`TOTAL_STRIDE`].
pub fn encoder_dims(input: Dims) -> Result<EncoderTrace> {
    if !input.height.is_multiple_of(TOTAL_STRIDE) || !input.width.is_multiple_of(TOTAL_STRIDE) || input.is_empty() {
        return Err(Error::shape(format!(
            "generator input {input} must be a positive multiple of {TOTAL_STRIDE}"
        )));
    }
    let div = |d: usize| Dims::new(input.height / d, input.width / d);
    Ok(EncoderTrace {
        input,
        stem: div(2),
        pooled: div(4),
        stages: [div(4), div(8), div(8), div(8)],
        aspp: div(8),
    })
}

#[derive(Debug, Clone)]
struct Bottleneck {
    reduce: ConvBnRelu,
    spatial: ConvBnRelu,
    expand: Conv,
    expand_bn: BatchNorm,
    shortcut: Option<(Conv, BatchNorm)>,
}

impl Bottleneck {
    #[allow(clippy::too_many_arguments)]
    fn new(
        params: &mut TensorStore,
        buffers: &mut TensorStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        cin: usize,
        mid: usize,
        stride: usize,
        dilation: usize,
    ) -> Self {
        let cout = mid * BOTTLENECK_EXPANSION;
        let reduce = ConvBnRelu::new(params, buffers, rng, &format!("{name}.reduce"), cin, mid, ConvGeom::new(1, 1, 0, 1));
        let spatial = ConvBnRelu::new(
            params,
            buffers,
            rng,
            &format!("{name}.spatial"),
            mid,
            mid,
            ConvGeom::new(3, stride, dilation, dilation),
        );
        let expand = Conv::new(params, rng, &format!("{name}.expand.conv"), mid, cout, ConvGeom::new(1, 1, 0, 1), false, 1.0);
        let expand_bn = BatchNorm::new(params, buffers, &format!("{name}.expand.bn"), cout);
        let shortcut = (stride != 1 || cin != cout).then(|| {
            (
                Conv::new(params, rng, &format!("{name}.shortcut.conv"), cin, cout, ConvGeom::new(1, stride, 0, 1), false, 1.0),
                BatchNorm::new(params, buffers, &format!("{name}.shortcut.bn"), cout),
            )
        });
        Self {
            reduce,
            spatial,
            expand,
            expand_bn,
            shortcut,
        }
    }

    fn forward(&self, ctx: &mut Ctx, x: Var) -> Result<Var> {
        let y = self.reduce.forward(ctx, x)?;
        let y = self.spatial.forward(ctx, y)?;
        let y = self.expand.forward(ctx, y)?;
        let y = self.expand_bn.forward(ctx, y);
        let skip = match &self.shortcut {
            Some((conv, bn)) => {
                let s = conv.forward(ctx, x)?;
                bn.forward(ctx, s)
            }
            None => x,
        };
        let sum = ctx.graph.add(y, skip)?;
        Ok(ctx.graph.relu(sum))
    }
}

#[derive(Debug, Clone)]
struct Aspp {
    branches: Vec<ConvBnRelu>,
    project: ConvBnRelu,
}

#[derive(Debug, Clone)]
struct Decoder {
    skip_reduce: ConvBnRelu,
    refine1: ConvBnRelu,
    refine2: ConvBnRelu,
    fuse_stem: ConvBnRelu,
    upsample: ConvTranspose,
    upsample_bn: BatchNorm,
    head1: ConvBnRelu,
    head_out: Conv,
}

/// The matting generator: parameters, running statistics and layer layout.
#[derive(Debug, Clone)]
pub struct Generator {
    config: GeneratorConfig,
    pub params: TensorStore,
    pub buffers: TensorStore,
    stem: ConvBnRelu,
    stages: Vec<Vec<Bottleneck>>,
    aspp: Aspp,
    decoder: Decoder,
}

/// Result of one recorded forward pass.
pub struct GeneratorPass {
    pub graph: Graph,
    pub input: Var,
    pub output: Var,
    pub trace: EncoderTrace,
    pub running_stats: RunningStatUpdate,
}

pub fn build_generator(cfg: &GeneratorConfig) -> Result<Generator> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.init_seed);
    let mut params = TensorStore::new();
    let mut buffers = TensorStore::new();
    let w = cfg.base_width;
    let (p, b, r) = (&mut params, &mut buffers, &mut rng);

    let stem = ConvBnRelu::new(p, b, r, "enc.stem", INPUT_CHANNELS, w, ConvGeom::new(7, 2, 3, 1));

    let stage_specs = [
        (w, 1, 1),
        (2 * w, 2, 1),
        (4 * w, 1, cfg.dilation_rates.0),
        (8 * w, 1, cfg.dilation_rates.1),
    ];
    let mut cin = w;
    let mut stages = Vec::new();
    for (s, (&(mid, stride, dilation), &depth)) in stage_specs.iter().zip(&cfg.stage_depths).enumerate() {
        let mut blocks = Vec::new();
        for i in 0..depth {
            let block_stride = if i == 0 { stride } else { 1 };
            let name = format!("enc.stage{}.block{}", s + 1, i);
            blocks.push(Bottleneck::new(p, b, r, &name, cin, mid, block_stride, dilation));
            cin = mid * BOTTLENECK_EXPANSION;
        }
        stages.push(blocks);
    }

    let aspp_ch = 4 * w;
    let branches = cfg
        .aspp_rates
        .iter()
        .map(|&rate| {
            let geom = if rate == 1 {
                ConvGeom::new(1, 1, 0, 1)
            } else {
                ConvGeom::new(3, 1, rate, rate)
            };
            ConvBnRelu::new(p, b, r, &format!("aspp.rate{rate}"), cin, aspp_ch, geom)
        })
        .collect::<Vec<_>>();
    let project = ConvBnRelu::new(
        p,
        b,
        r,
        "aspp.project",
        aspp_ch * branches.len(),
        aspp_ch,
        ConvGeom::new(1, 1, 0, 1),
    );
    let aspp = Aspp { branches, project };

    let stage1_ch = w * BOTTLENECK_EXPANSION;
    let k3 = ConvGeom::new(3, 1, 1, 1);
    let decoder = Decoder {
        skip_reduce: ConvBnRelu::new(p, b, r, "dec.skip_reduce", stage1_ch, w, ConvGeom::new(1, 1, 0, 1)),
        refine1: ConvBnRelu::new(p, b, r, "dec.refine1", aspp_ch + w, 2 * w, k3),
        refine2: ConvBnRelu::new(p, b, r, "dec.refine2", 2 * w, w, k3),
        fuse_stem: ConvBnRelu::new(p, b, r, "dec.fuse_stem", 2 * w, w, k3),
        upsample: ConvTranspose::new(p, r, "dec.upsample", w, w, ConvGeom::new(4, 2, 1, 1), false),
        upsample_bn: BatchNorm::new(p, b, "dec.upsample.bn", w),
        head1: ConvBnRelu::new(p, b, r, "dec.head1", w + 3, w, k3),
        head_out: Conv::new(p, r, "dec.head_out", w, 1, k3, true, 0.1),
    };

    Ok(Generator {
        config: cfg.clone(),
        params,
        buffers,
        stem,
        stages,
        aspp,
        decoder,
    })
}

impl Generator {
    pub fn config(&self) -> &GeneratorConfig {
        &self.config
    }

    /// Records a forward pass over a `N×7×H×W` batch.
    pub fn forward(&self, input: &Tensor, mode: Mode) -> Result<GeneratorPass> {
        let [_, c, h, w] = input.shape();
        if c != INPUT_CHANNELS {
            return Err(Error::shape(format!("generator expects {INPUT_CHANNELS} channels, got {c}")));
        }
        let expected = encoder_dims(Dims::new(h, w))?;
        let mut ctx = Ctx::new(&self.params, &self.buffers, mode);
        let x = ctx.graph.input(input.clone(), false);
        let dims_of = |ctx: &Ctx, v: Var| {
            let t = ctx.graph.value(v);
            Dims::new(t.height(), t.width())
        };

        let stem = self.stem.forward(&mut ctx, x)?;
        let (pooled, indices) = ctx.graph.max_pool2(stem)?;
        let mut feat = pooled;
        let mut stage_out = Vec::with_capacity(4);
        for blocks in &self.stages {
            for block in blocks {
                feat = block.forward(&mut ctx, feat)?;
            }
            stage_out.push(feat);
        }

        let branch_out = self
            .aspp
            .branches
            .iter()
            .map(|b| b.forward(&mut ctx, feat))
            .collect::<Result<Vec<_>>>()?;
        let cat = ctx.graph.concat(&branch_out)?;
        let aspp = self.aspp.project.forward(&mut ctx, cat)?;

        let trace = EncoderTrace {
            input: Dims::new(h, w),
            stem: dims_of(&ctx, stem),
            pooled: dims_of(&ctx, pooled),
            stages: [0, 1, 2, 3].map(|i| dims_of(&ctx, stage_out[i])),
            aspp: dims_of(&ctx, aspp),
        };
        debug_assert_eq!(trace, expected);

        let d = &self.decoder;
        let up = ctx.graph.upsample2(aspp);
        let skip = d.skip_reduce.forward(&mut ctx, stage_out[0])?;
        let y = ctx.graph.concat(&[up, skip])?;
        let y = d.refine1.forward(&mut ctx, y)?;
        let y = d.refine2.forward(&mut ctx, y)?;
        let y = ctx.graph.max_unpool2(y, &indices)?;
        let y = ctx.graph.concat(&[y, stem])?;
        let y = d.fuse_stem.forward(&mut ctx, y)?;
        let y = d.upsample.forward(&mut ctx, y)?;
        let y = d.upsample_bn.forward(&mut ctx, y);
        let y = ctx.graph.relu(y);
        let rgb = {
            let t = input;
            let plane = t.plane();
            let mut data = Vec::with_capacity(t.batch() * 3 * plane);
            for s in 0..t.batch() {
                data.extend_from_slice(&t.sample(s)[..3 * plane]);
            }
            ctx.graph.input(Tensor::from_vec([t.batch(), 3, h, w], data)?, false)
        };
        let y = ctx.graph.concat(&[y, rgb])?;
        let y = d.head1.forward(&mut ctx, y)?;
        let logits = d.head_out.forward(&mut ctx, y)?;
        let output = ctx.graph.sigmoid(logits);

        let (graph, running_stats) = ctx.finish();
        Ok(GeneratorPass {
            graph,
            input: x,
            output,
            trace,
            running_stats,
        })
    }

    /// Inference with frozen statistics.
    pub fn predict(&self, volume: &InputVolume) -> Result<AlphaMatte> {
        let pass = self.forward(volume.tensor(), Mode::Eval)?;
        let out = pass.graph.value(pass.output);
        AlphaMatte::new(out.height(), out.width(), out.data().to_vec())
    }

    /// Copies same-named, same-shaped tensors from `pretrained`. A 3-channel
    /// stem kernel fills input channels 1–3 and the remaining four are zeroed.
    /// Returns the number of tensors adopted.
    pub fn adopt_pretrained(&mut self, pretrained: &TensorStore) -> Result<usize> {
        let mut adopted = 0;
        for id in self.params.ids().collect::<Vec<_>>() {
            let name = self.params.name(id).to_string();
            let Some(src) = pretrained.find(&name).map(|s| pretrained.get(s)) else {
                continue;
            };
            let dst = self.params.get_mut(id);
            let [co, ci, kh, kw] = dst.shape();
            if src.shape() == dst.shape() {
                *dst = src.clone();
                adopted += 1;
            } else if name == "enc.stem.conv.weight" && src.shape() == [co, 3, kh, kw] {
                let plane = kh * kw;
                let data = dst.data_mut();
                data.fill(0.0);
                for o in 0..co {
                    let from = &src.data()[o * 3 * plane..(o + 1) * 3 * plane];
                    data[o * ci * plane..o * ci * plane + 3 * plane].copy_from_slice(from);
                }
                adopted += 1;
            } else {
                return Err(Error::Format(format!(
                    "pretrained tensor {name} has shape {:?}, expected {:?}",
                    src.shape(),
                    dst.shape()
                )));
            }
        }
        Ok(adopted)
    }
}
