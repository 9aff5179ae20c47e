//! Parameterized building blocks recorded onto a [`Graph`].

use rand::Rng;

use super::graph::{BatchStats, Graph, Var};
use super::kernels::ConvGeom;
use super::store::{TensorId, TensorStore};
use super::tensor::Tensor;
use crate::error::Result;

/// Running-statistics momentum for batch norm.
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics; running estimates are collected for update.
    Train,
    /// Frozen running statistics.
    Eval,
}

/// State threaded through one forward pass.
pub struct Ctx<'a> {
    pub graph: Graph,
    pub params: &'a TensorStore,
    pub buffers: &'a TensorStore,
    pub mode: Mode,
    stat_updates: Vec<(TensorId, TensorId, BatchStats)>,
}

impl<'a> Ctx<'a> {
    pub fn new(params: &'a TensorStore, buffers: &'a TensorStore, mode: Mode) -> Self {
        Self {
            graph: Graph::new(),
            params,
            buffers,
            mode,
            stat_updates: Vec::new(),
        }
    }

    pub fn param(&mut self, id: TensorId) -> Var {
        self.graph.param(self.params, id)
    }

    /// Splits into the recorded graph and the pending running-stat updates.
    pub fn finish(self) -> (Graph, RunningStatUpdate) {
        (self.graph, RunningStatUpdate(self.stat_updates))
    }
}

/// Running mean/variance updates gathered during a training forward pass.
#[derive(Debug, Default)]
pub struct RunningStatUpdate(Vec<(TensorId, TensorId, BatchStats)>);

impl RunningStatUpdate {
    pub fn apply(self, buffers: &mut TensorStore) {
        for (mean_id, var_id, stats) in self.0 {
            for (r, b) in buffers.get_mut(mean_id).data_mut().iter_mut().zip(&stats.mean) {
                *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * b;
            }
            for (r, b) in buffers.get_mut(var_id).data_mut().iter_mut().zip(&stats.var) {
                *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * b;
            }
        }
    }
}

/// He-uniform initialization: `U(−√(6/fan_in), √(6/fan_in))`, scaled by `gain`.
fn he_uniform(shape: [usize; 4], fan_in: usize, gain: f64, rng: &mut impl Rng) -> Tensor {
    let bound = gain * (6.0 / fan_in as f64).sqrt();
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-bound..bound)).collect())
        .expect("shape")
}

#[derive(Debug, Clone)]
pub struct Conv {
    pub weight: TensorId,
    pub bias: Option<TensorId>,
    pub geom: ConvGeom,
}

impl Conv {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        params: &mut TensorStore,
        rng: &mut impl Rng,
        name: &str,
        cin: usize,
        cout: usize,
        geom: ConvGeom,
        bias: bool,
        gain: f64,
    ) -> Self {
        let k = geom.kernel;
        let weight = params.insert(
            format!("{name}.weight"),
            he_uniform([cout, cin, k, k], cin * k * k, gain, rng),
        );
        let bias = bias.then(|| params.insert(format!("{name}.bias"), Tensor::zeros([cout, 1, 1, 1])));
        Self { weight, bias, geom }
    }

    pub fn forward(&self, ctx: &mut Ctx, x: Var) -> Result<Var> {
        let w = ctx.param(self.weight);
        let b = self.bias.map(|b| ctx.param(b));
        ctx.graph.conv2d(x, w, b, self.geom)
    }
}

#[derive(Debug, Clone)]
pub struct ConvTranspose {
    pub weight: TensorId,
    pub bias: Option<TensorId>,
    pub geom: ConvGeom,
}

impl ConvTranspose {
    pub fn new(
        params: &mut TensorStore,
        rng: &mut impl Rng,
        name: &str,
        cin: usize,
        cout: usize,
        geom: ConvGeom,
        bias: bool,
    ) -> Self {
        let k = geom.kernel;
        // Each output sees about cin·k²/stride² taps.
        let fan_in = (cin * k * k / (geom.stride * geom.stride)).max(1);
        let weight = params.insert(
            format!("{name}.weight"),
            he_uniform([cin, cout, k, k], fan_in, 1.0, rng),
        );
        let bias = bias.then(|| params.insert(format!("{name}.bias"), Tensor::zeros([cout, 1, 1, 1])));
        Self { weight, bias, geom }
    }

    pub fn forward(&self, ctx: &mut Ctx, x: Var) -> Result<Var> {
        let w = ctx.param(self.weight);
        let b = self.bias.map(|b| ctx.param(b));
        ctx.graph.conv_transpose2d(x, w, b, self.geom)
    }
}

#[derive(Debug, Clone)]
pub struct BatchNorm {
    pub gamma: TensorId,
    pub beta: TensorId,
    pub running_mean: TensorId,
    pub running_var: TensorId,
}

impl BatchNorm {
    pub fn new(params: &mut TensorStore, buffers: &mut TensorStore, name: &str, c: usize) -> Self {
        Self {
            gamma: params.insert(format!("{name}.gamma"), Tensor::full([c, 1, 1, 1], 1.0)),
            beta: params.insert(format!("{name}.beta"), Tensor::zeros([c, 1, 1, 1])),
            running_mean: buffers.insert(format!("{name}.running_mean"), Tensor::zeros([c, 1, 1, 1])),
            running_var: buffers.insert(format!("{name}.running_var"), Tensor::full([c, 1, 1, 1], 1.0)),
        }
    }

    pub fn forward(&self, ctx: &mut Ctx, x: Var) -> Var {
        let gamma = ctx.param(self.gamma);
        let beta = ctx.param(self.beta);
        match ctx.mode {
            Mode::Train => {
                let (y, stats) = ctx.graph.batch_norm_train(x, gamma, beta);
                ctx.stat_updates
                    .push((self.running_mean, self.running_var, stats));
                y
            }
            Mode::Eval => {
                let mean = ctx.buffers.get(self.running_mean).data();
                let var = ctx.buffers.get(self.running_var).data();
                ctx.graph.batch_norm_eval(x, gamma, beta, mean, var)
            }
        }
    }
}

/// Convolution → batch norm → ReLU.
#[derive(Debug, Clone)]
pub struct ConvBnRelu {
    pub conv: Conv,
    pub bn: BatchNorm,
}

impl ConvBnRelu {
    pub fn new(
        params: &mut TensorStore,
        buffers: &mut TensorStore,
        rng: &mut impl Rng,
        name: &str,
        cin: usize,
        cout: usize,
        geom: ConvGeom,
    ) -> Self {
        Self {
            conv: Conv::new(params, rng, &format!("{name}.conv"), cin, cout, geom, false, 1.0),
            bn: BatchNorm::new(params, buffers, &format!("{name}.bn"), cout),
        }
    }

    pub fn forward(&self, ctx: &mut Ctx, x: Var) -> Result<Var> {
        let y = self.conv.forward(ctx, x)?;
        let y = self.bn.forward(ctx, y);
        Ok(ctx.graph.relu(y))
    }
}
