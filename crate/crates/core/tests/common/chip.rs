//! Random quantized networks run step by step against the rational reference.

use evsnn::emu::{
    quantize, ChipEmulator, DecayRounding, Protocol, QuantizeConfig, QuantizedNetwork,
};
use evsnn::snn::NetworkSpec;
use evsnn::SpikeFrame;
use rand::Rng;

use super::rational::RationalChip;

pub struct ChipCase {
    pub net: NetworkSpec,
    pub qnet: QuantizedNetwork,
    pub frames: Vec<SpikeFrame>,
}

pub fn chip_case(seed: u64, n_frames: usize) -> ChipCase {
    let mut rng = super::rng(seed);
    let net = super::random_chip_net(&mut rng);
    let rounding = if rng.random_bool(0.5) {
        DecayRounding::TowardZero
    } else {
        DecayRounding::Floor
    };
    let cfg = QuantizeConfig {
        rounding,
        ..QuantizeConfig::default()
    };
    let qnet = quantize(&net, &cfg).expect("random chip nets quantize");
    let (h, w) = (net.input.height as u16, net.input.width as u16);
    let frames = (0..n_frames)
        .map(|_| {
            let p = rng.random_range(0.05..0.6);
            SpikeFrame::from_bits(w, h, &super::random_frame_bits(&mut rng, net.input, p)).unwrap()
        })
        .collect();
    ChipCase { net, qnet, frames }
}

pub struct ChipRun {
    pub steps: usize,
    pub spikes: u64,
}

/// Runs the emulator and the rational reference side by side over the
/// replication/blank protocol, checking every state word and spike.
pub fn compare_with_rational(case: &ChipCase, protocol: Protocol) -> Result<ChipRun, String> {
    let mut emu = ChipEmulator::new(&case.qnet);
    let mut reference = RationalChip::new(&case.qnet);
    let blank = vec![0i64; case.qnet.input.len()];
    let mut run = ChipRun {
        steps: 0,
        spikes: 0,
    };
    for (f, frame) in case.frames.iter().enumerate() {
        let bits: Vec<i64> = frame.bits().iter().map(|&b| i64::from(b)).collect();
        for step in 0..protocol.timesteps_per_inference() {
            let x = if step < protocol.replication {
                &bits
            } else {
                &blank
            };
            emu.step(x).map_err(|e| e.to_string())?;
            reference.step(&x.iter().map(|&b| b != 0).collect::<Vec<_>>());
            for n in 0..case.qnet.layers.len() {
                let (v, i) = reference.state_i64(n);
                let s = &emu.states()[n];
                let spikes: Vec<bool> = emu.spikes(n).iter().map(|&b| b != 0).collect();
                if s.comp_v != v || s.comp_i != i || spikes != reference.spikes[n] {
                    return Err(format!("frame {f} step {step} layer {n}: state differs"));
                }
                run.spikes += spikes.iter().filter(|&&b| b).count() as u64;
            }
            run.steps += 1;
        }
    }
    Ok(run)
}
