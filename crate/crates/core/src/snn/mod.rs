//! Iterative LIF spiking networks.
//!
//! Each layer computes a synaptic input `x = W·o_prev`, integrates it into a
//! membrane potential `u = u_prev·tau·(1 - o_prev_self) + x + b` and fires
//! `o = [u >= v_th]`. Pooling layers use fixed uniform weights and, by
//! default, are spiking layers as well.

mod forward;
pub(crate) mod io;
pub mod ops;
mod predict;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{sub_rng, Stream};

pub use forward::{
    forward, forward_sequence, lif_step, run_frame, FrameOutcome, LayerTrace, NeuronState,
    Simulator, StateRecord,
};
pub use io::{load_network, save_network, weights_path, NETWORK_FORMAT, NETWORK_VERSION};
pub use predict::{decide_class, predict_frame, predict_stream};

#[derive(Debug, Error)]
pub enum SnnError {
    #[error("shape mismatch: expected {expected} values, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("invalid network: {0}")]
    InvalidNetwork(String),
    #[error("invalid LIF parameters: {0}")]
    InvalidParams(String),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
    #[error("model file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LifParams {
    pub v_th: f64,
    /// Per-timestep membrane decay factor.
    pub tau: f64,
    /// Width of the rectangular surrogate window.
    pub a1: f64,
    pub reset_value: f64,
}

impl Default for LifParams {
    fn default() -> Self {
        LifParams {
            v_th: 0.4,
            tau: 0.2,
            a1: 0.8,
            reset_value: 0.0,
        }
    }
}

impl LifParams {
    /// Surrogate half-width equal to the threshold.
    pub fn with_threshold(v_th: f64, tau: f64) -> Self {
        LifParams {
            v_th,
            tau,
            a1: 2.0 * v_th,
            reset_value: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), SnnError> {
        let bad = |m: &str| Err(SnnError::InvalidParams(m.into()));
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return bad("tau must lie in (0, 1)");
        }
        if self.v_th.is_nan() || self.v_th <= 0.0 {
            return bad("v_th must be > 0");
        }
        if self.a1.is_nan() || self.a1 <= 0.0 {
            return bad("a1 must be > 0");
        }
        if self.reset_value != 0.0 {
            return bad("reset_value must be 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub fn new(channels: usize, height: usize, width: usize) -> Self {
        Shape {
            channels,
            height,
            width,
        }
    }

    pub fn flat(n: usize) -> Self {
        Shape::new(n, 1, 1)
    }

    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.channels, self.height, self.width)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    AvgPool,
    Conv2d,
    Dense,
}

impl LayerKind {
    pub fn name(self) -> &'static str {
        match self {
            LayerKind::AvgPool => "avg_pool",
            LayerKind::Conv2d => "conv2d",
            LayerKind::Dense => "dense",
        }
    }
}

/// How pooling layers behave during simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolingMode {
    /// Pooling layers are LIF compartments driven by uniform weights.
    #[default]
    Spiking,
    /// Pooling layers pass the averaged real values straight through.
    Linear,
}

impl std::str::FromStr for PoolingMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "spiking" => Ok(PoolingMode::Spiking),
            "linear" => Ok(PoolingMode::Linear),
            other => Err(format!("unknown pooling mode `{other}` (spiking | linear)")),
        }
    }
}

/// One layer. Conv weights are `[out][in][ky][kx]`, dense weights `[out][in]`,
/// pooling layers hold their single fixed weight and no bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub padding: usize,
    pub stride: usize,
    pub in_shape: Shape,
    pub out_shape: Shape,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LayerSpec {
    pub fn is_learnable(&self) -> bool {
        self.kind != LayerKind::AvgPool
    }

    pub fn num_neurons(&self) -> usize {
        self.out_shape.len()
    }

    pub fn fan_in(&self) -> usize {
        match self.kind {
            LayerKind::AvgPool => self.kernel * self.kernel,
            LayerKind::Conv2d => self.in_channels * self.kernel * self.kernel,
            LayerKind::Dense => self.in_shape.len(),
        }
    }

    pub fn expected_weights(&self) -> usize {
        match self.kind {
            LayerKind::AvgPool => 1,
            LayerKind::Conv2d => self.out_channels * self.in_channels * self.kernel * self.kernel,
            LayerKind::Dense => self.out_shape.len() * self.in_shape.len(),
        }
    }

    pub fn expected_bias(&self) -> usize {
        match self.kind {
            LayerKind::AvgPool => 0,
            LayerKind::Conv2d => self.out_channels,
            LayerKind::Dense => self.out_shape.len(),
        }
    }

    /// Bias of neuron `i` (conv biases are shared per output channel).
    pub fn bias_of(&self, neuron: usize) -> f64 {
        match self.kind {
            LayerKind::AvgPool => 0.0,
            LayerKind::Conv2d => self.bias[neuron / (self.out_shape.height * self.out_shape.width)],
            LayerKind::Dense => self.bias[neuron],
        }
    }

    fn check(&self) -> Result<(), String> {
        if self.weights.len() != self.expected_weights() {
            return Err(format!(
                "{:?} expects {} weights, has {}",
                self.kind,
                self.expected_weights(),
                self.weights.len()
            ));
        }
        if self.bias.len() != self.expected_bias() {
            return Err(format!(
                "{:?} expects {} biases, has {}",
                self.kind,
                self.expected_bias(),
                self.bias.len()
            ));
        }
        let (i, o) = (self.in_shape, self.out_shape);
        let ok = match self.kind {
            LayerKind::AvgPool => {
                self.kernel > 0
                    && i.channels == o.channels
                    && o.height == i.height.div_ceil(self.kernel)
                    && o.width == i.width.div_ceil(self.kernel)
            }
            LayerKind::Conv2d => {
                self.kernel > 0
                    && self.stride > 0
                    && i.channels == self.in_channels
                    && o.channels == self.out_channels
                    && i.height + 2 * self.padding >= self.kernel
                    && i.width + 2 * self.padding >= self.kernel
                    && o.height == (i.height + 2 * self.padding - self.kernel) / self.stride + 1
                    && o.width == (i.width + 2 * self.padding - self.kernel) / self.stride + 1
            }
            LayerKind::Dense => o.height == 1 && o.width == 1,
        };
        if ok {
            Ok(())
        } else {
            Err(format!(
                "{:?} layer shapes {} -> {} are inconsistent",
                self.kind, i, o
            ))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input: Shape,
    pub layers: Vec<LayerSpec>,
    pub lif: LifParams,
    #[serde(default)]
    pub pooling: PoolingMode,
}

impl NetworkSpec {
    pub fn validate(&self) -> Result<(), SnnError> {
        self.lif.validate()?;
        if self.layers.is_empty() {
            return Err(SnnError::InvalidNetwork("no layers".into()));
        }
        let mut shape = self.input;
        for (n, layer) in self.layers.iter().enumerate() {
            if layer.in_shape != shape {
                return Err(SnnError::InvalidNetwork(format!(
                    "layer {n} expects input {} but receives {}",
                    layer.in_shape, shape
                )));
            }
            layer
                .check()
                .map_err(|m| SnnError::InvalidNetwork(format!("layer {n}: {m}")))?;
            shape = layer.out_shape;
        }
        Ok(())
    }

    /// Classifier networks end in exactly two output neurons.
    pub fn validate_classifier(&self) -> Result<(), SnnError> {
        self.validate()?;
        match self.output_size() {
            2 => Ok(()),
            n => Err(SnnError::InvalidNetwork(format!(
                "classifier needs 2 output neurons, has {n}"
            ))),
        }
    }

    pub fn output_size(&self) -> usize {
        self.layers.last().map_or(0, LayerSpec::num_neurons)
    }

    /// Input sizes of the dense layers, in order.
    pub fn dense_input_sizes(&self) -> Vec<usize> {
        self.layers
            .iter()
            .filter(|l| l.kind == LayerKind::Dense)
            .map(|l| l.in_shape.len())
            .collect()
    }

    pub fn num_parameters(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| l.is_learnable())
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn is_spiking(&self, layer: usize) -> bool {
        self.layers[layer].kind != LayerKind::AvgPool || self.pooling == PoolingMode::Spiking
    }
}

/// Incremental layer-stack builder with shape inference.
#[derive(Debug, Clone)]
pub struct NetworkBuilder {
    input: Shape,
    current: Shape,
    layers: Vec<LayerSpec>,
}

impl NetworkBuilder {
    pub fn new(input: Shape) -> Self {
        NetworkBuilder {
            input,
            current: input,
            layers: Vec::new(),
        }
    }

    /// Average pooling with stride = kernel and ceiling output size; partial
    /// windows at the edge are zero-padded and still divide by `kernel²`.
    pub fn avg_pool(mut self, kernel: usize) -> Self {
        let i = self.current;
        let out = Shape::new(
            i.channels,
            i.height.div_ceil(kernel),
            i.width.div_ceil(kernel),
        );
        self.push(LayerKind::AvgPool, i.channels, kernel, 0, kernel, out);
        self
    }

    pub fn conv2d(
        mut self,
        out_channels: usize,
        kernel: usize,
        padding: usize,
        stride: usize,
    ) -> Self {
        let i = self.current;
        let oh = (i.height + 2 * padding).saturating_sub(kernel) / stride + 1;
        let ow = (i.width + 2 * padding).saturating_sub(kernel) / stride + 1;
        self.push(
            LayerKind::Conv2d,
            out_channels,
            kernel,
            padding,
            stride,
            Shape::new(out_channels, oh, ow),
        );
        self
    }

    pub fn dense(mut self, out: usize) -> Self {
        self.push(LayerKind::Dense, out, 0, 0, 1, Shape::flat(out));
        self
    }

    fn push(
        &mut self,
        kind: LayerKind,
        out_channels: usize,
        kernel: usize,
        padding: usize,
        stride: usize,
        out: Shape,
    ) {
        let in_channels = match kind {
            LayerKind::Dense => self.current.len(),
            _ => self.current.channels,
        };
        let mut layer = LayerSpec {
            kind,
            in_channels,
            out_channels,
            kernel,
            padding,
            stride,
            in_shape: self.current,
            out_shape: out,
            weights: Vec::new(),
            bias: Vec::new(),
        };
        layer.weights = match kind {
            LayerKind::AvgPool => vec![1.0 / (kernel * kernel) as f64],
            _ => vec![0.0; layer.expected_weights()],
        };
        layer.bias = vec![0.0; layer.expected_bias()];
        self.current = out;
        self.layers.push(layer);
    }

    /// Finishes the stack with zero weights and biases.
    pub fn build_zeroed(self, lif: LifParams) -> NetworkSpec {
        NetworkSpec {
            input: self.input,
            layers: self.layers,
            lif,
            pooling: PoolingMode::Spiking,
        }
    }

    /// Finishes the stack with weights uniform in `±1/sqrt(fan_in)` and zero biases.
    pub fn build<R: Rng + ?Sized>(self, lif: LifParams, rng: &mut R) -> NetworkSpec {
        self.build_with_gain(lif, rng, 1.0)
    }

    /// Like [`build`](Self::build) with the init bound scaled by `gain`.
    pub fn build_with_gain<R: Rng + ?Sized>(
        self,
        lif: LifParams,
        rng: &mut R,
        gain: f64,
    ) -> NetworkSpec {
        let mut net = self.build_zeroed(lif);
        for layer in net.layers.iter_mut().filter(|l| l.is_learnable()) {
            let bound = gain / (layer.fan_in() as f64).sqrt();
            for w in &mut layer.weights {
                *w = rng.random_range(-bound..bound);
            }
        }
        net
    }
}

/// The three reference architectures, named by input size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Full128,
    Win100,
    Win50,
}

impl Variant {
    pub fn input_size(self) -> usize {
        match self {
            Variant::Full128 => 128,
            Variant::Win100 => 100,
            Variant::Win50 => 50,
        }
    }

    pub fn hidden_size(self) -> usize {
        match self {
            Variant::Full128 => 1024,
            Variant::Win100 => 512,
            Variant::Win50 => 144,
        }
    }

    pub fn builder(self) -> NetworkBuilder {
        let s = self.input_size();
        NetworkBuilder::new(Shape::new(2, s, s))
            .avg_pool(4)
            .conv2d(32, 3, 1, 1)
            .avg_pool(2)
            .conv2d(32, 3, 1, 1)
            .avg_pool(2)
            .dense(self.hidden_size())
            .dense(2)
    }
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full128" => Ok(Variant::Full128),
            "win100" => Ok(Variant::Win100),
            "win50" => Ok(Variant::Win50),
            other => Err(format!(
                "unknown variant `{other}` (full128 | win100 | win50)"
            )),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::Full128 => "full128",
            Variant::Win100 => "win100",
            Variant::Win50 => "win50",
        })
    }
}

/// Builds a reference architecture with seeded initial weights.
pub fn build_network(variant: Variant, lif: LifParams, seed: u64) -> NetworkSpec {
    build_network_with_gain(variant, lif, seed, 1.0)
}

/// [`build_network`] with the init bound scaled by `gain`. Deep stacks of
/// spiking pooling layers can stay silent on sparse frames at gain 1.
pub fn build_network_with_gain(
    variant: Variant,
    lif: LifParams,
    seed: u64,
    gain: f64,
) -> NetworkSpec {
    variant
        .builder()
        .build_with_gain(lif, &mut sub_rng(seed, Stream::Init), gain)
}
