//! Integer current-based (CUBA) compartment dynamics and the inference
//! protocol run on the chip.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::quantize::{CubaParams, DecayRounding, QuantizedLayer, QuantizedNetwork, DECAY_ONE};
use super::EmuError;
use crate::events::EventStream;
use crate::preprocess::{AccumulationConfig, SpikeFrame};
use crate::snn::ops::synaptic_input_with;
use crate::snn::{decide_class, predict_stream, Shape};
use crate::stbp::evaluation_clip;

/// `x·(4096 - delta)/4096` in integer arithmetic.
pub fn decay(x: i64, delta: i64, rounding: DecayRounding) -> i64 {
    let p = x * (DECAY_ONE - delta);
    match rounding {
        DecayRounding::TowardZero => p / DECAY_ONE,
        DecayRounding::Floor => p.div_euclid(DECAY_ONE),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CubaState {
    pub comp_v: Vec<i64>,
    pub comp_i: Vec<i64>,
}

impl CubaState {
    pub fn zeros(n: usize) -> Self {
        CubaState {
            comp_v: vec![0; n],
            comp_i: vec![0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.comp_v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.comp_v.is_empty()
    }
}

/// Advances every compartment by one timestep given the summed mantissa drive
/// `Σ m·s`. Writes spikes (0/1) and the pre-reset voltage.
fn update(
    state: &mut CubaState,
    drive: &[i64],
    shift: u32,
    p: &CubaParams,
    spikes: &mut [i64],
    potential: &mut [i64],
) {
    let vth = p.threshold();
    for n in 0..state.len() {
        let i = decay(state.comp_i[n], p.delta_i, p.rounding) + (drive[n] << shift);
        let v = decay(state.comp_v[n], p.delta_v, p.rounding) + i + p.bias;
        state.comp_i[n] = i;
        potential[n] = v;
        let fire = v >= vth;
        spikes[n] = i64::from(fire);
        state.comp_v[n] = if fire { 0 } else { v };
    }
}

/// One timestep of a single layer.
pub fn cuba_step(
    state: &mut CubaState,
    layer: &QuantizedLayer,
    params: &CubaParams,
    input: &[bool],
) -> Result<Vec<bool>, EmuError> {
    let n_in = layer.spec.in_shape.len();
    let n_out = layer.spec.num_neurons();
    if input.len() != n_in {
        return Err(EmuError::ShapeMismatch {
            expected: n_in,
            got: input.len(),
        });
    }
    if state.len() != n_out || state.comp_i.len() != n_out {
        return Err(EmuError::ShapeMismatch {
            expected: n_out,
            got: state.len(),
        });
    }
    let input: Vec<i64> = input.iter().map(|&s| i64::from(s)).collect();
    let mut drive = vec![0; n_out];
    synaptic_input_with(&layer.spec, &layer.mantissas, &input, &mut drive);
    let mut spikes = vec![0; n_out];
    let mut potential = vec![0; n_out];
    update(
        state,
        &drive,
        layer.shift(),
        params,
        &mut spikes,
        &mut potential,
    );
    Ok(spikes.iter().map(|&s| s != 0).collect())
}

/// Whole-network emulator with persistent compartment state.
#[derive(Debug, Clone)]
pub struct ChipEmulator<'a> {
    qnet: &'a QuantizedNetwork,
    states: Vec<CubaState>,
    spikes: Vec<Vec<i64>>,
    potential: Vec<Vec<i64>>,
    drive: Vec<Vec<i64>>,
}

impl<'a> ChipEmulator<'a> {
    pub fn new(qnet: &'a QuantizedNetwork) -> Self {
        let sizes: Vec<usize> = qnet.layers.iter().map(|l| l.spec.num_neurons()).collect();
        let zeros = || sizes.iter().map(|&n| vec![0; n]).collect::<Vec<_>>();
        ChipEmulator {
            qnet,
            states: sizes.iter().map(|&n| CubaState::zeros(n)).collect(),
            spikes: zeros(),
            potential: zeros(),
            drive: zeros(),
        }
    }

    pub fn states(&self) -> &[CubaState] {
        &self.states
    }

    /// Spikes (0/1) of layer `n` at the last step.
    pub fn spikes(&self, n: usize) -> &[i64] {
        &self.spikes[n]
    }

    /// Voltages of layer `n` at the last step, before any reset.
    pub fn potential(&self, n: usize) -> &[i64] {
        &self.potential[n]
    }

    /// Advances all layers by one timestep; returns the output spikes.
    pub fn step(&mut self, input: &[i64]) -> Result<&[i64], EmuError> {
        let want = self.qnet.input.len();
        if input.len() != want {
            return Err(EmuError::ShapeMismatch {
                expected: want,
                got: input.len(),
            });
        }
        for (n, layer) in self.qnet.layers.iter().enumerate() {
            let (before, rest) = self.spikes.split_at_mut(n);
            let x = if n == 0 { input } else { &before[n - 1] };
            synaptic_input_with(&layer.spec, &layer.mantissas, x, &mut self.drive[n]);
            update(
                &mut self.states[n],
                &self.drive[n],
                layer.shift(),
                &self.qnet.params,
                &mut rest[0],
                &mut self.potential[n],
            );
        }
        Ok(self.spikes.last().map_or(&[], |s| s.as_slice()))
    }
}

/// Replication and blank timesteps per frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Protocol {
    pub replication: usize,
    pub blank: usize,
}

impl Default for Protocol {
    fn default() -> Self {
        Protocol {
            replication: 10,
            blank: 7,
        }
    }
}

impl Protocol {
    pub fn timesteps_per_inference(&self) -> usize {
        self.replication + self.blank
    }

    pub fn validate(&self) -> Result<(), EmuError> {
        if self.replication == 0 {
            return Err(EmuError::InvalidParams("replication must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Inference {
    pub class_id: usize,
    pub frame_predictions: Vec<usize>,
    /// Output spike counts per frame over all of its timesteps.
    pub frame_counts: Vec<Vec<u32>>,
    /// Output spikes of every timestep.
    pub trace: Vec<Vec<u8>>,
    pub timesteps_per_inference: usize,
}

pub(crate) fn frame_input(frame: &SpikeFrame, shape: Shape) -> Result<Vec<i64>, EmuError> {
    if shape.channels != 2
        || usize::from(frame.width()) != shape.width
        || usize::from(frame.height()) != shape.height
    {
        return Err(EmuError::ShapeMismatch {
            expected: shape.len(),
            got: frame.bits().len(),
        });
    }
    Ok(frame.bits().iter().map(|&b| i64::from(b != 0)).collect())
}

/// Runs a stream's frames back to back. Compartment state carries over from
/// one frame to the next; the blank steps let it decay.
pub fn emulate_inference(
    qnet: &QuantizedNetwork,
    frames: &[SpikeFrame],
    protocol: Protocol,
) -> Result<Inference, EmuError> {
    protocol.validate()?;
    if frames.is_empty() {
        return Err(EmuError::Snn(crate::snn::SnnError::EmptyInput));
    }
    let mut emu = ChipEmulator::new(qnet);
    let n_out = qnet.output_size();
    let blank = vec![0; qnet.input.len()];
    let mut frame_predictions = Vec::with_capacity(frames.len());
    let mut frame_counts = Vec::with_capacity(frames.len());
    let mut trace = Vec::with_capacity(frames.len() * protocol.timesteps_per_inference());
    for frame in frames {
        let input = frame_input(frame, qnet.input)?;
        let mut counts = vec![0u32; n_out];
        for t in 0..protocol.timesteps_per_inference() {
            let out = emu.step(if t < protocol.replication {
                &input
            } else {
                &blank
            })?;
            counts
                .iter_mut()
                .zip(out)
                .for_each(|(c, &s)| *c += s as u32);
            trace.push(out.iter().map(|&s| s as u8).collect());
        }
        let last = qnet.layers.len() - 1;
        frame_predictions.push(decide_class(&counts, emu.potential(last)));
        frame_counts.push(counts);
    }
    Ok(Inference {
        class_id: predict_stream(&frame_predictions)?,
        frame_predictions,
        frame_counts,
        trace,
        timesteps_per_inference: protocol.timesteps_per_inference(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmulationReport {
    pub acc_s: f64,
    pub acc_test: f64,
    pub frames: usize,
    pub streams: usize,
    pub replication: usize,
    pub blank: usize,
    pub timesteps_per_inference: usize,
}

/// Emulates every labelled stream on the same seeded clips used by the
/// offline evaluation.
pub fn emulate_dataset(
    qnet: &QuantizedNetwork,
    streams: &[EventStream],
    acc: &AccumulationConfig,
    protocol: Protocol,
    seed: u64,
) -> Result<EmulationReport, EmuError> {
    let s = qnet.input;
    let canvas = (
        u16::try_from(s.width).map_err(|_| EmuError::InvalidParams("input too wide".into()))?,
        u16::try_from(s.height).map_err(|_| EmuError::InvalidParams("input too tall".into()))?,
    );
    let per_stream: Vec<(usize, usize, bool)> = streams
        .par_iter()
        .enumerate()
        .map(|(i, stream)| {
            let label = stream
                .label()
                .map(usize::from)
                .ok_or_else(|| EmuError::InvalidParams(format!("stream {i} has no label")))?;
            let frames = evaluation_clip(stream, i, acc, seed, canvas)?;
            let inf = emulate_inference(qnet, &frames, protocol)?;
            let correct = inf
                .frame_predictions
                .iter()
                .filter(|&&p| p == label)
                .count();
            Ok((frames.len(), correct, inf.class_id == label))
        })
        .collect::<Result<_, EmuError>>()?;
    let frames: usize = per_stream.iter().map(|r| r.0).sum();
    let ok: usize = per_stream.iter().map(|r| r.1).sum();
    let stream_ok = per_stream.iter().filter(|r| r.2).count();
    Ok(EmulationReport {
        acc_s: if frames == 0 {
            0.0
        } else {
            ok as f64 / frames as f64
        },
        acc_test: if streams.is_empty() {
            0.0
        } else {
            stream_ok as f64 / streams.len() as f64
        },
        frames,
        streams: streams.len(),
        replication: protocol.replication,
        blank: protocol.blank,
        timesteps_per_inference: protocol.timesteps_per_inference(),
    })
}
