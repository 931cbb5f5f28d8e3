use super::ops::synaptic_input;
use super::{LifParams, NetworkSpec, SnnError};
use crate::preprocess::SpikeFrame;

/// One LIF update from `drive = x + b`; returns `(u, o)`.
#[inline]
pub fn lif_step(u_prev: f64, o_prev: f64, drive: f64, params: &LifParams) -> (f64, f64) {
    let u = u_prev * params.tau * (1.0 - o_prev) + drive;
    (u, if u >= params.v_th { 1.0 } else { 0.0 })
}

/// Membrane potentials and spikes of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuronState {
    pub u: Vec<f64>,
    pub o: Vec<f64>,
}

impl NeuronState {
    pub fn zeros(n: usize) -> Self {
        NeuronState {
            u: vec![0.0; n],
            o: vec![0.0; n],
        }
    }
}

/// Per-timestep values of one layer, each `timesteps x neurons` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrace {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub o: Vec<f64>,
}

impl LayerTrace {
    pub fn neurons(&self, timesteps: usize) -> usize {
        self.u.len() / timesteps.max(1)
    }
}

/// Everything the backward pass needs from one forward run.
#[derive(Debug, Clone, PartialEq)]
pub struct StateRecord {
    pub timesteps: usize,
    /// `timesteps x input_len` input spikes.
    pub inputs: Vec<f64>,
    pub initial: Vec<NeuronState>,
    pub layers: Vec<LayerTrace>,
}

impl StateRecord {
    pub fn output_counts(&self) -> Vec<u32> {
        let last = self.layers.last().expect("record has layers");
        let n = last.neurons(self.timesteps);
        let mut counts = vec![0u32; n];
        for row in last.o.chunks_exact(n) {
            counts
                .iter_mut()
                .zip(row)
                .for_each(|(c, &o)| *c += o as u32);
        }
        counts
    }

    pub fn final_potentials(&self) -> &[f64] {
        let last = self.layers.last().expect("record has layers");
        let n = last.neurons(self.timesteps);
        &last.u[last.u.len() - n..]
    }

    /// Final state of every layer, used to seed the next frame.
    pub fn final_state(&self) -> Vec<NeuronState> {
        self.layers
            .iter()
            .map(|l| {
                let n = l.neurons(self.timesteps);
                NeuronState {
                    u: l.u[l.u.len() - n..].to_vec(),
                    o: l.o[l.o.len() - n..].to_vec(),
                }
            })
            .collect()
    }
}

/// Stepwise simulator holding the state of every layer.
#[derive(Debug, Clone)]
pub struct Simulator<'a> {
    net: &'a NetworkSpec,
    states: Vec<NeuronState>,
    x: Vec<Vec<f64>>,
}

impl<'a> Simulator<'a> {
    pub fn new(net: &'a NetworkSpec) -> Self {
        let states = net
            .layers
            .iter()
            .map(|l| NeuronState::zeros(l.num_neurons()))
            .collect();
        Simulator {
            net,
            states,
            x: net
                .layers
                .iter()
                .map(|l| vec![0.0; l.num_neurons()])
                .collect(),
        }
    }

    pub fn with_state(net: &'a NetworkSpec, states: Vec<NeuronState>) -> Result<Self, SnnError> {
        let mut sim = Simulator::new(net);
        for (have, want) in states.iter().zip(&sim.states) {
            if have.u.len() != want.u.len() || have.o.len() != want.o.len() {
                return Err(SnnError::ShapeMismatch {
                    expected: want.u.len(),
                    got: have.u.len(),
                });
            }
        }
        if states.len() != sim.states.len() {
            return Err(SnnError::ShapeMismatch {
                expected: sim.states.len(),
                got: states.len(),
            });
        }
        sim.states = states;
        Ok(sim)
    }

    pub fn states(&self) -> &[NeuronState] {
        &self.states
    }

    pub fn into_states(self) -> Vec<NeuronState> {
        self.states
    }

    /// Synaptic input of layer `n` from the last step.
    pub fn synaptic(&self, n: usize) -> &[f64] {
        &self.x[n]
    }

    /// Advances every layer by one timestep.
    pub fn step(&mut self, input: &[f64]) -> Result<(), SnnError> {
        if input.len() != self.net.input.len() {
            return Err(SnnError::ShapeMismatch {
                expected: self.net.input.len(),
                got: input.len(),
            });
        }
        let lif = self.net.lif;
        for n in 0..self.net.layers.len() {
            let layer = &self.net.layers[n];
            let (done, rest) = self.states.split_at_mut(n);
            let prev = if n == 0 { input } else { &done[n - 1].o };
            let x = &mut self.x[n];
            synaptic_input(layer, prev, x);
            let st = &mut rest[0];
            if self.net.is_spiking(n) {
                for (i, &xi) in x.iter().enumerate() {
                    let (u, o) = lif_step(st.u[i], st.o[i], xi + layer.bias_of(i), &lif);
                    st.u[i] = u;
                    st.o[i] = o;
                }
            } else {
                st.u.copy_from_slice(x);
                st.o.copy_from_slice(x);
            }
        }
        Ok(())
    }
}

/// Runs the network over a sequence of per-timestep inputs and records every
/// layer. `initial` defaults to the all-zero state.
pub fn forward_sequence(
    net: &NetworkSpec,
    inputs: &[Vec<f64>],
    initial: Option<Vec<NeuronState>>,
) -> Result<StateRecord, SnnError> {
    let mut sim = match initial {
        Some(s) => Simulator::with_state(net, s)?,
        None => Simulator::new(net),
    };
    let initial = sim.states.clone();
    let timesteps = inputs.len();
    let mut layers: Vec<LayerTrace> = net
        .layers
        .iter()
        .map(|l| {
            let cap = timesteps * l.num_neurons();
            LayerTrace {
                x: Vec::with_capacity(cap),
                u: Vec::with_capacity(cap),
                o: Vec::with_capacity(cap),
            }
        })
        .collect();
    let mut flat = Vec::with_capacity(timesteps * net.input.len());
    for input in inputs {
        sim.step(input)?;
        flat.extend_from_slice(input);
        for (n, trace) in layers.iter_mut().enumerate() {
            trace.x.extend_from_slice(&sim.x[n]);
            trace.u.extend_from_slice(&sim.states[n].u);
            trace.o.extend_from_slice(&sim.states[n].o);
        }
    }
    Ok(StateRecord {
        timesteps,
        inputs: flat,
        initial,
        layers,
    })
}

/// Runs each frame for `frame_repeat` timesteps. With `carry_state` the
/// network state flows from one frame into the next; otherwise every frame
/// starts from rest.
pub fn forward(
    net: &NetworkSpec,
    frames: &[SpikeFrame],
    frame_repeat: usize,
    carry_state: bool,
) -> Result<Vec<StateRecord>, SnnError> {
    let mut carried: Option<Vec<NeuronState>> = None;
    let mut out = Vec::with_capacity(frames.len());
    for frame in frames {
        let input = frame.to_input();
        let inputs = vec![input; frame_repeat];
        let rec = forward_sequence(
            net,
            &inputs,
            if carry_state { carried.take() } else { None },
        )?;
        if carry_state {
            carried = Some(rec.final_state());
        }
        out.push(rec);
    }
    Ok(out)
}

/// Output spike counts and final output potentials of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameOutcome {
    pub counts: Vec<u32>,
    pub final_potential: Vec<f64>,
}

/// Inference-only run of one held frame from rest, without recording.
pub fn run_frame(
    net: &NetworkSpec,
    input: &[f64],
    timesteps: usize,
) -> Result<FrameOutcome, SnnError> {
    let mut sim = Simulator::new(net);
    let last = net.layers.len() - 1;
    let mut counts = vec![0u32; net.output_size()];
    for _ in 0..timesteps {
        sim.step(input)?;
        counts
            .iter_mut()
            .zip(&sim.states[last].o)
            .for_each(|(c, &o)| *c += o as u32);
    }
    Ok(FrameOutcome {
        counts,
        final_potential: sim.states[last].u.clone(),
    })
}
