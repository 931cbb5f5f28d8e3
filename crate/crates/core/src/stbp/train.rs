use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::{backward, mse_loss, one_hot, GradientSet, ResetGradient, StbpError};
use crate::events::{Dataset, EventStream, NUM_CLASSES};
use crate::preprocess::{
    accumulate_on_canvas, random_clip, sample_frames, AccumulationConfig, SpikeFrame,
};
use crate::rng::{item_rng, Stream};
use crate::snn::{
    decide_class, forward_sequence, load_network, predict_stream, run_frame, save_network,
    NetworkSpec,
};

/// Frames per parallel work item. Chunk sums are reduced in index order, so
/// results do not depend on the number of worker threads.
const GRAD_CHUNK: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Frames per Adam step.
    pub batch_size: usize,
    pub lr_initial: f64,
    pub lr_halving_period_epochs: usize,
    pub t_sample_us: u64,
    pub t_length_us: u64,
    /// Timesteps each frame is held at the input.
    pub frame_repeat: usize,
    pub seed: u64,
    pub reset_gradient: ResetGradient,
    pub adam: AdamConfig,
    /// Evaluate every this many epochs (0: only after the last one).
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 40,
            lr_initial: 1e-3,
            lr_halving_period_epochs: 20,
            t_sample_us: 1_000,
            t_length_us: 10_000,
            frame_repeat: 20,
            seed: 0,
            reset_gradient: ResetGradient::Detached,
            adam: AdamConfig::default(),
            eval_every: 1,
        }
    }
}

impl TrainConfig {
    pub fn accumulation(&self) -> AccumulationConfig {
        AccumulationConfig {
            t_sample_us: self.t_sample_us,
            t_length_us: self.t_length_us,
            frame_repeat: self.frame_repeat,
        }
    }

    pub fn validate(&self) -> Result<(), StbpError> {
        if self.batch_size == 0 {
            return Err(StbpError::InvalidConfig("batch_size must be >= 1".into()));
        }
        if !(self.lr_initial > 0.0 && self.lr_initial.is_finite()) {
            return Err(StbpError::InvalidConfig("lr_initial must be > 0".into()));
        }
        if self.lr_halving_period_epochs == 0 {
            return Err(StbpError::InvalidConfig(
                "lr_halving_period_epochs must be >= 1".into(),
            ));
        }
        self.accumulation().validate()?;
        Ok(())
    }
}

/// Step decay: `lr_initial · 0.5^floor(epoch / period)`.
pub fn lr_schedule(epoch: usize, config: &TrainConfig) -> f64 {
    let halvings = epoch / config.lr_halving_period_epochs.max(1);
    config.lr_initial * 0.5f64.powi(halvings.min(i32::MAX as usize) as i32)
}

/// Accuracy of a network on one split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    /// Fraction of correctly classified single frames.
    pub acc_s: f64,
    /// Fraction of streams whose majority vote is correct.
    pub acc_stream: f64,
    pub frames: usize,
    pub streams: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
    pub acc_s: Option<f64>,
    pub acc_test: Option<f64>,
    pub acc_train: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub acc_s: f64,
    pub acc_test: f64,
    pub acc_train: f64,
    pub loss_curve: Vec<f64>,
    pub epochs: Vec<EpochMetrics>,
}

pub(crate) fn canvas(net: &NetworkSpec) -> Result<(u16, u16), StbpError> {
    let s = net.input;
    let fit = |v: usize| {
        u16::try_from(v).map_err(|_| StbpError::InvalidConfig(format!("input size {v} too large")))
    };
    if s.channels != 2 {
        return Err(StbpError::InvalidConfig(format!(
            "network input has {} channels, frames have 2",
            s.channels
        )));
    }
    Ok((fit(s.width)?, fit(s.height)?))
}

pub(crate) fn label_of(stream: &EventStream, index: usize) -> Result<usize, StbpError> {
    match stream.label() {
        Some(l) if usize::from(l) < NUM_CLASSES => Ok(usize::from(l)),
        _ => Err(StbpError::InvalidConfig(format!(
            "stream {index} has no valid label"
        ))),
    }
}

/// Frames of the fixed clip used to evaluate stream `index`.
pub fn evaluation_clip(
    stream: &EventStream,
    index: usize,
    acc: &AccumulationConfig,
    seed: u64,
    canvas: (u16, u16),
) -> Result<Vec<SpikeFrame>, StbpError> {
    let t0 = random_clip(
        stream,
        acc.t_length_us,
        &mut item_rng(seed, Stream::Eval, index as u64),
    );
    Ok(sample_frames(stream, t0, acc, canvas)?)
}

/// Classifies every stream from a fixed, seeded clip. Each frame starts from
/// rest and is held for `frame_repeat` timesteps.
pub fn evaluate(
    net: &NetworkSpec,
    streams: &[EventStream],
    acc: &AccumulationConfig,
    seed: u64,
) -> Result<EvalResult, StbpError> {
    acc.validate()?;
    let canvas = canvas(net)?;
    let per_stream: Vec<(usize, usize, bool)> = streams
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let label = label_of(s, i)?;
            let frames = evaluation_clip(s, i, acc, seed, canvas)?;
            let mut preds = Vec::with_capacity(frames.len());
            for f in &frames {
                let out = run_frame(net, &f.to_input(), acc.frame_repeat)?;
                preds.push(decide_class(&out.counts, &out.final_potential));
            }
            let correct = preds.iter().filter(|&&p| p == label).count();
            Ok((frames.len(), correct, predict_stream(&preds)? == label))
        })
        .collect::<Result<_, StbpError>>()?;
    let frames: usize = per_stream.iter().map(|r| r.0).sum();
    let frame_ok: usize = per_stream.iter().map(|r| r.1).sum();
    let stream_ok = per_stream.iter().filter(|r| r.2).count();
    Ok(EvalResult {
        acc_s: if frames == 0 {
            0.0
        } else {
            frame_ok as f64 / frames as f64
        },
        acc_stream: if streams.is_empty() {
            0.0
        } else {
            stream_ok as f64 / streams.len() as f64
        },
        frames,
        streams: streams.len(),
    })
}

/// Everything needed to continue training.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub net: NetworkSpec,
    pub adam: AdamState,
    /// Next epoch to run.
    pub epoch: usize,
}

impl TrainState {
    pub fn new(net: NetworkSpec, config: &TrainConfig) -> Self {
        let adam = AdamState::new(&net, config.adam);
        TrainState {
            net,
            adam,
            epoch: 0,
        }
    }
}

#[derive(Clone, Copy)]
struct Sample {
    stream: usize,
    t0: u64,
}

fn epoch_samples(streams: &[EventStream], config: &TrainConfig, epoch: usize) -> Vec<Sample> {
    let mut shuffle = item_rng(config.seed, Stream::Shuffle, epoch as u64);
    let mut clip = item_rng(config.seed, Stream::Clip, epoch as u64);
    let mut order: Vec<usize> = (0..streams.len()).collect();
    order.shuffle(&mut shuffle);
    let frames = config.accumulation().frames_per_clip() as u64;
    let mut samples = Vec::with_capacity(order.len() * frames as usize);
    for i in order {
        let s = &streams[i];
        let start = random_clip(s, config.t_length_us, &mut clip)
            .min(s.duration_us().saturating_sub(config.t_length_us));
        samples.extend((0..frames).map(|k| Sample {
            stream: i,
            t0: start + k * config.t_sample_us,
        }));
    }
    samples.shuffle(&mut shuffle);
    samples
}

fn chunk_gradient(
    net: &NetworkSpec,
    streams: &[EventStream],
    chunk: &[Sample],
    config: &TrainConfig,
    canvas: (u16, u16),
) -> Result<(GradientSet, f64), StbpError> {
    let mut grads = GradientSet::zeros(net);
    let mut loss = 0.0;
    for s in chunk {
        let stream = &streams[s.stream];
        let frame = accumulate_on_canvas(stream, s.t0, config.t_sample_us, canvas.0, canvas.1);
        let inputs = vec![frame.to_input(); config.frame_repeat];
        let record = forward_sequence(net, &inputs, None)?;
        let target = one_hot(label_of(stream, s.stream)?, NUM_CLASSES);
        loss += mse_loss(&record, &target)?;
        grads.add_assign(&backward(net, &record, &target, config.reset_gradient)?);
    }
    Ok((grads, loss))
}

/// Trains from scratch. `on_epoch` sees every epoch's metrics and the state
/// after it, e.g. to write logs and checkpoints.
pub fn train<F>(
    dataset: &Dataset,
    net: NetworkSpec,
    config: &TrainConfig,
    on_epoch: F,
) -> Result<(NetworkSpec, Metrics), StbpError>
where
    F: FnMut(&EpochMetrics, &TrainState) -> Result<(), StbpError>,
{
    let state = TrainState::new(net, config);
    train_resume(dataset, state, config, on_epoch).map(|(s, m)| (s.net, m))
}

/// Continues training from `state.epoch` up to `config.epochs`.
pub fn train_resume<F>(
    dataset: &Dataset,
    mut state: TrainState,
    config: &TrainConfig,
    mut on_epoch: F,
) -> Result<(TrainState, Metrics), StbpError>
where
    F: FnMut(&EpochMetrics, &TrainState) -> Result<(), StbpError>,
{
    config.validate()?;
    state.net.validate_classifier()?;
    if dataset.train.is_empty() {
        return Err(StbpError::EmptyDataset("train"));
    }
    if dataset.test.is_empty() {
        return Err(StbpError::EmptyDataset("test"));
    }
    let canvas = canvas(&state.net)?;
    for (i, s) in dataset.train.iter().enumerate() {
        label_of(s, i)?;
    }
    let acc = config.accumulation();
    let eval = |net: &NetworkSpec| -> Result<(EvalResult, EvalResult), StbpError> {
        Ok((
            evaluate(net, &dataset.test, &acc, config.seed)?,
            evaluate(net, &dataset.train, &acc, config.seed)?,
        ))
    };

    let mut history = Vec::new();
    let mut last_eval = None;
    while state.epoch < config.epochs {
        let epoch = state.epoch;
        let lr = lr_schedule(epoch, config);
        let samples = epoch_samples(&dataset.train, config, epoch);
        let mut loss_sum = 0.0;
        for batch in samples.chunks(config.batch_size) {
            let net = &state.net;
            let parts: Vec<(GradientSet, f64)> = batch
                .par_chunks(GRAD_CHUNK)
                .map(|c| chunk_gradient(net, &dataset.train, c, config, canvas))
                .collect::<Result<_, _>>()?;
            let mut grads = GradientSet::zeros(net);
            for (g, l) in &parts {
                grads.add_assign(g);
                loss_sum += l;
            }
            grads.scale(1.0 / batch.len() as f64);
            adam_step(&mut state.net, &grads, &mut state.adam, lr)?;
        }
        state.epoch += 1;

        let due = config.eval_every > 0 && state.epoch.is_multiple_of(config.eval_every);
        let evals = if due || state.epoch == config.epochs {
            Some(eval(&state.net)?)
        } else {
            None
        };
        let record = EpochMetrics {
            epoch,
            lr,
            loss: loss_sum / samples.len() as f64,
            acc_s: evals.map(|e| e.0.acc_s),
            acc_test: evals.map(|e| e.0.acc_stream),
            acc_train: evals.map(|e| e.1.acc_stream),
        };
        if evals.is_some() {
            last_eval = evals;
        }
        on_epoch(&record, &state)?;
        history.push(record);
    }

    let (test, train) = match last_eval {
        Some(e) if !history.is_empty() => e,
        _ => eval(&state.net)?,
    };
    let metrics = Metrics {
        acc_s: test.acc_s,
        acc_test: test.acc_stream,
        acc_train: train.acc_stream,
        loss_curve: history.iter().map(|m| m.loss).collect(),
        epochs: history,
    };
    Ok((state, metrics))
}

const ADAM_MAGIC: &[u8; 8] = b"EVADAM01";

/// Adam sidecar path for a checkpoint header: `ckpt.json` -> `ckpt.adam.bin`.
pub fn adam_path(header: &Path) -> PathBuf {
    header.with_extension("adam.bin")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StbpError + '_ {
    move |source| StbpError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes the network files plus an Adam sidecar holding the next epoch,
/// the step counter, the hyper-parameters and both moment tensors.
pub fn save_checkpoint(state: &TrainState, path: &Path) -> Result<(), StbpError> {
    save_network(&state.net, path)?;
    let a = &state.adam;
    let mut out = ADAM_MAGIC.to_vec();
    out.extend_from_slice(&(state.epoch as u64).to_le_bytes());
    out.extend_from_slice(&a.step.to_le_bytes());
    for v in [a.config.beta1, a.config.beta2, a.config.eps] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&(a.m.len() as u64).to_le_bytes());
    for (m, v) in a.m.iter().zip(&a.v) {
        out.extend_from_slice(&(m.len() as u64).to_le_bytes());
        for x in m.iter().chain(v) {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    let side = adam_path(path);
    fs::write(&side, out).map_err(io_err(&side))
}

pub fn load_checkpoint(path: &Path) -> Result<TrainState, StbpError> {
    let net = load_network(path)?;
    let side = adam_path(path);
    let bytes = fs::read(&side).map_err(io_err(&side))?;
    let bad = || {
        StbpError::Format(format!(
            "{}: truncated or corrupt Adam state",
            side.display()
        ))
    };
    if bytes.get(..8) != Some(&ADAM_MAGIC[..]) {
        return Err(bad());
    }
    let mut pos = 8;
    let mut word = || -> Result<[u8; 8], StbpError> {
        let w = bytes
            .get(pos..pos + 8)
            .ok_or_else(bad)?
            .try_into()
            .expect("8 bytes");
        pos += 8;
        Ok(w)
    };
    let epoch = u64::from_le_bytes(word()?) as usize;
    let step = u64::from_le_bytes(word()?);
    let config = AdamConfig {
        beta1: f64::from_le_bytes(word()?),
        beta2: f64::from_le_bytes(word()?),
        eps: f64::from_le_bytes(word()?),
    };
    let layers = u64::from_le_bytes(word()?) as usize;
    if layers != net.layers.len() {
        return Err(bad());
    }
    let (mut m, mut v) = (Vec::with_capacity(layers), Vec::with_capacity(layers));
    for _ in 0..layers {
        let len = u64::from_le_bytes(word()?) as usize;
        let mut read = |n: usize| {
            (0..n)
                .map(|_| word().map(f64::from_le_bytes))
                .collect::<Result<Vec<f64>, _>>()
        };
        m.push(read(len)?);
        v.push(read(len)?);
    }
    if pos != bytes.len() {
        return Err(bad());
    }
    let shapes_match = m
        .iter()
        .zip(&net.layers)
        .all(|(m, l)| m.len() == if l.is_learnable() { l.weights.len() } else { 0 });
    if !shapes_match {
        return Err(bad());
    }
    Ok(TrainState {
        net,
        adam: AdamState { config, step, m, v },
        epoch,
    })
}
