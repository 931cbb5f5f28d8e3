//! Spatio-temporal back-propagation through the unrolled LIF dynamics.
//!
//! The spike nonlinearity is differentiated with a rectangular surrogate
//! `h(u) = 1/a1` on `|u - v_th| < a1/2`. Errors flow backwards in space through
//! the transposed connections and backwards in time through the decay path
//! `u^{t+1} <- tau·(1 - o^t)·u^t`.

mod adam;
mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::snn::ops::{accumulate_bias_grad, accumulate_weight_grad, synaptic_adjoint};
use crate::snn::{LifParams, NetworkSpec, SnnError, StateRecord};

pub use adam::{adam_step, AdamConfig, AdamState};
pub use train::{
    adam_path, evaluate, evaluation_clip, load_checkpoint, lr_schedule, save_checkpoint, train,
    train_resume, EpochMetrics, EvalResult, Metrics, TrainConfig, TrainState,
};

#[derive(Debug, Error)]
pub enum StbpError {
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("record does not match the network: {0}")]
    MissingRecord(String),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("empty dataset split: {0}")]
    EmptyDataset(&'static str),
    #[error(transparent)]
    Snn(#[from] SnnError),
    #[error(transparent)]
    Preprocess(#[from] crate::preprocess::PreprocessError),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
    #[error("checkpoint: {0}")]
    Format(String),
}

/// How the reset gate `(1 - o^t)` of the decay path is differentiated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResetGradient {
    /// The gate is a constant: only the enumerated spatial and temporal paths carry error.
    #[default]
    Detached,
    /// Also propagate through the gate, adding `-tau·u^t·dL/du^{t+1}` to `dL/do^t`.
    ProductRule,
}

impl std::str::FromStr for ResetGradient {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "detached" => Ok(ResetGradient::Detached),
            "product-rule" | "product_rule" => Ok(ResetGradient::ProductRule),
            other => Err(format!(
                "unknown reset gradient `{other}` (detached | product-rule)"
            )),
        }
    }
}

/// Rectangular surrogate derivative of the spike function.
#[inline]
pub fn surrogate_grad(u: f64, params: &LifParams) -> f64 {
    if (u - params.v_th).abs() < params.a1 / 2.0 {
        1.0 / params.a1
    } else {
        0.0
    }
}

/// Mean output spike rate of every output neuron.
pub fn output_rates(record: &StateRecord) -> Vec<f64> {
    let last = record.layers.last().expect("record has layers");
    let t = record.timesteps.max(1);
    let n = last.o.len() / t;
    let mut rates = vec![0.0; n];
    for row in last.o.chunks_exact(n.max(1)) {
        rates.iter_mut().zip(row).for_each(|(r, &o)| *r += o);
    }
    rates.iter_mut().for_each(|r| *r /= t as f64);
    rates
}

pub fn one_hot(label: usize, classes: usize) -> Vec<f64> {
    (0..classes)
        .map(|i| if i == label { 1.0 } else { 0.0 })
        .collect()
}

/// `½·‖y - mean_t o^t‖²` for one sample.
pub fn mse_loss(record: &StateRecord, target: &[f64]) -> Result<f64, StbpError> {
    let rates = output_rates(record);
    if rates.len() != target.len() {
        return Err(StbpError::ShapeMismatch {
            expected: rates.len(),
            got: target.len(),
        });
    }
    Ok(0.5
        * rates
            .iter()
            .zip(target)
            .map(|(o, y)| (y - o).powi(2))
            .sum::<f64>())
}

/// Batch loss: the mean of the per-sample losses.
pub fn batch_loss(records: &[StateRecord], targets: &[Vec<f64>]) -> Result<f64, StbpError> {
    if records.len() != targets.len() {
        return Err(StbpError::ShapeMismatch {
            expected: records.len(),
            got: targets.len(),
        });
    }
    if records.is_empty() {
        return Ok(0.0);
    }
    let sum = records
        .iter()
        .zip(targets)
        .map(|(r, y)| mse_loss(r, y))
        .sum::<Result<f64, _>>()?;
    Ok(sum / records.len() as f64)
}

/// Gradient of one layer, shaped like its weights and bias (empty for pooling).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerGrad {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientSet {
    pub layers: Vec<LayerGrad>,
}

impl GradientSet {
    pub fn zeros(net: &NetworkSpec) -> Self {
        let layers = net
            .layers
            .iter()
            .map(|l| {
                if l.is_learnable() {
                    LayerGrad {
                        weights: vec![0.0; l.weights.len()],
                        bias: vec![0.0; l.bias.len()],
                    }
                } else {
                    LayerGrad {
                        weights: Vec::new(),
                        bias: Vec::new(),
                    }
                }
            })
            .collect();
        GradientSet { layers }
    }

    pub fn add_assign(&mut self, other: &GradientSet) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights
                .iter_mut()
                .zip(&b.weights)
                .for_each(|(x, y)| *x += y);
            a.bias.iter_mut().zip(&b.bias).for_each(|(x, y)| *x += y);
        }
    }

    pub fn scale(&mut self, k: f64) {
        for l in &mut self.layers {
            l.weights
                .iter_mut()
                .chain(l.bias.iter_mut())
                .for_each(|x| *x *= k);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|&x| x == 0.0))
    }

    pub fn max_abs(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias))
            .fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// Per-layer adjoints, each `timesteps x neurons` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerAdjoint {
    /// `dL/do`
    pub delta: Vec<f64>,
    /// `dL/du`
    pub eps: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdjointRecord {
    pub timesteps: usize,
    pub layers: Vec<LayerAdjoint>,
}

fn check_record(net: &NetworkSpec, record: &StateRecord) -> Result<(), StbpError> {
    let t = record.timesteps;
    if t == 0 {
        return Err(StbpError::MissingRecord("record has no timesteps".into()));
    }
    if record.layers.len() != net.layers.len() || record.inputs.len() != t * net.input.len() {
        return Err(StbpError::MissingRecord(format!(
            "{} recorded layers for {} network layers",
            record.layers.len(),
            net.layers.len()
        )));
    }
    for (n, (layer, trace)) in net.layers.iter().zip(&record.layers).enumerate() {
        let want = t * layer.num_neurons();
        if trace.u.len() != want || trace.o.len() != want {
            return Err(StbpError::MissingRecord(format!(
                "layer {n} holds {} values, expected {want}",
                trace.u.len()
            )));
        }
    }
    Ok(())
}

/// Gradient of the sample loss `½‖target - mean_t o^{t,N}‖²`.
pub fn backward(
    net: &NetworkSpec,
    record: &StateRecord,
    target: &[f64],
    mode: ResetGradient,
) -> Result<GradientSet, StbpError> {
    adjoint(net, record, target, mode).map(|(g, _)| g)
}

/// Like [`backward`], also returning the adjoint of every recorded value.
pub fn adjoint(
    net: &NetworkSpec,
    record: &StateRecord,
    target: &[f64],
    mode: ResetGradient,
) -> Result<(GradientSet, AdjointRecord), StbpError> {
    check_record(net, record)?;
    let n_out = net.output_size();
    if target.len() != n_out {
        return Err(StbpError::ShapeMismatch {
            expected: n_out,
            got: target.len(),
        });
    }
    let t_len = record.timesteps;
    let lif = &net.lif;
    let rates = output_rates(record);

    let mut grads = GradientSet::zeros(net);
    let mut adjoints: Vec<LayerAdjoint> = Vec::with_capacity(net.layers.len());

    // Direct loss term, identical at every timestep of the output layer.
    let direct: Vec<f64> = target
        .iter()
        .zip(&rates)
        .map(|(y, o)| -(y - o) / t_len as f64)
        .collect();
    let mut delta: Vec<f64> = direct.iter().copied().cycle().take(t_len * n_out).collect();

    for n in (0..net.layers.len()).rev() {
        let layer = &net.layers[n];
        let trace = &record.layers[n];
        let m = layer.num_neurons();
        let mut eps = vec![0.0; t_len * m];

        if net.is_spiking(n) {
            let mut next = vec![0.0; m];
            for t in (0..t_len).rev() {
                let row = t * m..(t + 1) * m;
                let (u, o, d) = (
                    &trace.u[row.clone()],
                    &trace.o[row.clone()],
                    &delta[row.clone()],
                );
                let e = &mut eps[row];
                for i in 0..m {
                    let mut dl_do = d[i];
                    if mode == ResetGradient::ProductRule {
                        dl_do -= lif.tau * u[i] * next[i];
                    }
                    e[i] = dl_do * surrogate_grad(u[i], lif) + next[i] * lif.tau * (1.0 - o[i]);
                }
                next.copy_from_slice(e);
            }
        } else {
            eps.copy_from_slice(&delta);
        }

        let input_of = |t: usize| -> &[f64] {
            if n == 0 {
                &record.inputs[t * net.input.len()..(t + 1) * net.input.len()]
            } else {
                let prev = &record.layers[n - 1];
                let k = net.layers[n - 1].num_neurons();
                &prev.o[t * k..(t + 1) * k]
            }
        };

        if layer.is_learnable() && eps.iter().any(|&e| e != 0.0) {
            let g = &mut grads.layers[n];
            // Runs of identical presynaptic rows share one outer product.
            let mut acc = vec![0.0; m];
            let mut run_start = 0;
            for t in 0..t_len {
                if t > run_start && input_of(t) != input_of(run_start) {
                    accumulate_weight_grad(layer, &acc, input_of(run_start), &mut g.weights);
                    acc.fill(0.0);
                    run_start = t;
                }
                acc.iter_mut()
                    .zip(&eps[t * m..(t + 1) * m])
                    .for_each(|(a, e)| *a += e);
                accumulate_bias_grad(layer, &eps[t * m..(t + 1) * m], &mut g.bias);
            }
            accumulate_weight_grad(layer, &acc, input_of(run_start), &mut g.weights);
        }

        let next_delta = if n > 0 {
            let k = layer.in_shape.len();
            let mut d = vec![0.0; t_len * k];
            for t in 0..t_len {
                let e = &eps[t * m..(t + 1) * m];
                if e.iter().any(|&x| x != 0.0) {
                    synaptic_adjoint(layer, e, &mut d[t * k..(t + 1) * k]);
                }
            }
            d
        } else {
            Vec::new()
        };
        adjoints.push(LayerAdjoint {
            delta: std::mem::replace(&mut delta, next_delta),
            eps,
        });
    }
    adjoints.reverse();
    Ok((
        grads,
        AdjointRecord {
            timesteps: t_len,
            layers: adjoints,
        },
    ))
}
