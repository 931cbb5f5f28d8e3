//! Exact rational-arithmetic reference of the integer compartment dynamics:
//!
//! ```text
//! comp_i' = [comp_i·(4096 - δi)/4096] + 2^(6+e)·Σ m·s
//! comp_v' = [comp_v·(4096 - δv)/4096] + comp_i' + bias
//! spike iff comp_v' ≥ vth_mant·2^6, then comp_v' = 0
//! ```
//!
//! where `[·]` truncates toward zero (or floors). Values are kept as
//! `BigRational` so no intermediate can overflow or round.

use evsnn::emu::{DecayRounding, QuantizedNetwork};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

use super::synapses;

fn int(v: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(v))
}

fn decayed(x: &BigRational, delta: i64, rounding: DecayRounding) -> BigRational {
    let exact = x * BigRational::new(BigInt::from(4096 - delta), BigInt::from(4096));
    match rounding {
        DecayRounding::TowardZero => exact.trunc(),
        DecayRounding::Floor => exact.floor(),
    }
}

/// Weighted synapses `(post, pre, m·2^(6+e))` and the neuron count of a layer.
type Layer = (Vec<(usize, usize, BigRational)>, usize);

pub struct RationalChip {
    layers: Vec<Layer>,
    pub comp_v: Vec<Vec<BigRational>>,
    pub comp_i: Vec<Vec<BigRational>>,
    pub spikes: Vec<Vec<bool>>,
    delta_v: i64,
    delta_i: i64,
    bias: BigRational,
    threshold: BigRational,
    rounding: DecayRounding,
}

impl RationalChip {
    pub fn new(q: &QuantizedNetwork) -> Self {
        let layers = q
            .layers
            .iter()
            .map(|l| {
                let gain = int(2).pow(6 + l.wgt_exp);
                let syn = synapses(&l.spec)
                    .into_iter()
                    .map(|(post, pre, wi)| (post, pre, int(l.mantissas[wi]) * &gain))
                    .collect();
                (syn, l.spec.num_neurons())
            })
            .collect::<Vec<_>>();
        let zeros = |n: usize| vec![BigRational::zero(); n];
        RationalChip {
            comp_v: layers.iter().map(|(_, n)| zeros(*n)).collect(),
            comp_i: layers.iter().map(|(_, n)| zeros(*n)).collect(),
            spikes: layers.iter().map(|(_, n)| vec![false; *n]).collect(),
            layers,
            delta_v: q.params.delta_v,
            delta_i: q.params.delta_i,
            bias: int(q.params.bias),
            threshold: int(q.params.vth_mant) * int(64),
            rounding: q.params.rounding,
        }
    }

    pub fn step(&mut self, input: &[bool]) {
        let mut prev = input.to_vec();
        for (n, (syn, count)) in self.layers.iter().enumerate() {
            let mut drive = vec![BigRational::zero(); *count];
            for (post, pre, w) in syn {
                if prev[*pre] {
                    drive[*post] += w;
                }
            }
            let mut out = vec![false; *count];
            for k in 0..*count {
                let i = decayed(&self.comp_i[n][k], self.delta_i, self.rounding) + &drive[k];
                let v = decayed(&self.comp_v[n][k], self.delta_v, self.rounding) + &i + &self.bias;
                out[k] = v >= self.threshold;
                self.comp_i[n][k] = i;
                self.comp_v[n][k] = if out[k] { BigRational::zero() } else { v };
            }
            self.spikes[n] = out.clone();
            prev = out;
        }
    }

    /// Integer view of the state, for comparison with the emulator.
    pub fn state_i64(&self, n: usize) -> (Vec<i64>, Vec<i64>) {
        let conv = |v: &Vec<BigRational>| {
            v.iter()
                .map(|x| {
                    assert!(x.denom().is_one());
                    i64::try_from(x.to_integer()).expect("fits i64")
                })
                .collect()
        };
        (conv(&self.comp_v[n]), conv(&self.comp_i[n]))
    }
}
