//! Layer-by-layer comparison of the integer emulator against the float LIF
//! network with dequantized weights.
//!
//! Each float layer is driven by the chip's spikes of the layer below, so a
//! single mismatch does not cascade. A mismatch whose float potential lies
//! within `epsilon` of the threshold is a boundary event (the float spike is
//! then forced to the chip's); any other mismatch is a divergence.

use serde::{Deserialize, Serialize};

use super::cuba::{frame_input, ChipEmulator, Protocol};
use super::quantize::QuantizedNetwork;
use super::EmuError;
use crate::preprocess::SpikeFrame;
use crate::snn::ops::synaptic_input;
use crate::snn::NetworkSpec;

/// Default tolerance in units of the chip's voltage LSB.
pub const BOUNDARY_LSB: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpikeMismatch {
    pub frame: usize,
    pub step: usize,
    pub layer: usize,
    pub neuron: usize,
    pub chip_spike: bool,
    pub float_potential: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    /// True when no divergence occurred.
    pub equivalent: bool,
    pub epsilon: f64,
    pub compared_spikes: u64,
    pub chip_spikes: u64,
    pub boundary_count: u64,
    pub divergence_count: u64,
    /// Largest `|u_float - comp_v/(64·scale)|` seen.
    pub max_potential_error: f64,
    /// First recorded boundary events and divergences.
    pub boundary: Vec<SpikeMismatch>,
    pub divergences: Vec<SpikeMismatch>,
}

/// Events kept in each list of the report.
const MAX_LISTED: usize = 100;

/// Compares chip and float spike trains over `frames` run back to back with
/// the chip protocol. The float side uses `net.lif.tau`, the dequantized
/// weights and threshold of `qnet`, and spiking pooling.
pub fn equivalence_check(
    net: &NetworkSpec,
    qnet: &QuantizedNetwork,
    frames: &[SpikeFrame],
    protocol: Protocol,
    epsilon: Option<f64>,
) -> Result<EquivalenceReport, EmuError> {
    protocol.validate()?;
    if net.layers.len() != qnet.layers.len() || net.input != qnet.input {
        return Err(EmuError::InvalidParams(
            "network and quantized network differ in structure".into(),
        ));
    }
    let lsb = 1.0 / (64.0 * qnet.scale);
    let epsilon = epsilon.unwrap_or(BOUNDARY_LSB * lsb);
    let tau = net.lif.tau;
    let v_th = qnet.dequantized_threshold();

    let mut emu = ChipEmulator::new(qnet);
    let sizes: Vec<usize> = qnet.layers.iter().map(|l| l.spec.num_neurons()).collect();
    let mut u: Vec<Vec<f64>> = sizes.iter().map(|&n| vec![0.0; n]).collect();
    let mut o: Vec<Vec<f64>> = u.clone();
    let mut x: Vec<Vec<f64>> = u.clone();
    let mut report = EquivalenceReport {
        equivalent: true,
        epsilon,
        compared_spikes: 0,
        chip_spikes: 0,
        boundary_count: 0,
        divergence_count: 0,
        max_potential_error: 0.0,
        boundary: Vec::new(),
        divergences: Vec::new(),
    };
    let blank = vec![0; qnet.input.len()];
    let mut step = 0;
    for (f, frame) in frames.iter().enumerate() {
        let input = frame_input(frame, qnet.input)?;
        let input_f: Vec<f64> = input.iter().map(|&s| s as f64).collect();
        let blank_f = vec![0.0; blank.len()];
        for t in 0..protocol.timesteps_per_inference() {
            let live = t < protocol.replication;
            emu.step(if live { &input } else { &blank })?;
            for (n, layer) in qnet.layers.iter().enumerate() {
                let chip_in: Vec<f64>;
                let src: &[f64] = if n == 0 {
                    if live {
                        &input_f
                    } else {
                        &blank_f
                    }
                } else {
                    chip_in = emu.spikes(n - 1).iter().map(|&s| s as f64).collect();
                    &chip_in
                };
                synaptic_input(&layer.spec, src, &mut x[n]);
                let (chip_s, chip_v) = (emu.spikes(n), emu.potential(n));
                for i in 0..sizes[n] {
                    let ui = u[n][i] * tau * (1.0 - o[n][i]) + x[n][i];
                    u[n][i] = ui;
                    let float_spike = ui >= v_th;
                    let chip_spike = chip_s[i] != 0;
                    let err = (ui - chip_v[i] as f64 * lsb).abs();
                    report.max_potential_error = report.max_potential_error.max(err);
                    report.compared_spikes += 1;
                    report.chip_spikes += u64::from(chip_spike);
                    if float_spike != chip_spike {
                        let m = SpikeMismatch {
                            frame: f,
                            step,
                            layer: n,
                            neuron: i,
                            chip_spike,
                            float_potential: ui,
                        };
                        if (ui - v_th).abs() < epsilon {
                            report.boundary_count += 1;
                            if report.boundary.len() < MAX_LISTED {
                                report.boundary.push(m);
                            }
                        } else {
                            report.divergence_count += 1;
                            if report.divergences.len() < MAX_LISTED {
                                report.divergences.push(m);
                            }
                        }
                    }
                    o[n][i] = if chip_spike { 1.0 } else { 0.0 };
                }
            }
            step += 1;
        }
    }
    report.equivalent = report.divergence_count == 0;
    Ok(report)
}
