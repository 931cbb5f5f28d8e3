//! Offline-to-chip parameter translation.
//!
//! A weight `w` becomes a mantissa `m` and a per-layer exponent `e` such that
//! `m·2^e ≈ scale·w`; the chip adds `m·2^(6+e)` to the synaptic current for
//! every input spike, while the threshold is compared against `vth_mant·2^6`.
//! Exponents stay in `[-6, 0]` so the scaling is always an exact left shift.

use serde::{Deserialize, Serialize};

use super::EmuError;
use crate::snn::{LayerSpec, NetworkSpec, Shape};

/// Largest decay value; `delta = 4096` erases the state in one step.
pub const DECAY_ONE: i64 = 4096;
pub const MIN_WGT_EXP: i32 = -6;
pub const MAX_WGT_EXP: i32 = 0;

/// How the integer decay `x·(4096 - delta)/4096` is rounded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayRounding {
    #[default]
    TowardZero,
    Floor,
}

/// Representable mantissa set of a layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MantissaGrid {
    pub min: i32,
    pub max: i32,
    pub step: i32,
}

impl MantissaGrid {
    pub fn contains(&self, m: i64) -> bool {
        m >= i64::from(self.min)
            && m <= i64::from(self.max)
            && m.rem_euclid(i64::from(self.step)) == 0
    }

    /// Nearest grid value (ties away from zero), unclamped.
    fn round(&self, v: f64) -> i64 {
        let step = f64::from(self.step);
        ((v / step).round() * step) as i64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MantissaEncoding {
    /// 8 bits of magnitude: `[0, 255]` or `[-255, 0]` for single-sign layers,
    /// even values in `[-256, 254]` for layers mixing signs.
    #[default]
    Auto,
    /// Plain two's complement byte, `[-128, 127]`.
    Signed8,
}

impl MantissaEncoding {
    pub fn grid_for(self, weights: &[f64]) -> MantissaGrid {
        match self {
            MantissaEncoding::Signed8 => MantissaGrid {
                min: -128,
                max: 127,
                step: 1,
            },
            MantissaEncoding::Auto => {
                let pos = weights.iter().any(|&w| w > 0.0);
                let neg = weights.iter().any(|&w| w < 0.0);
                match (pos, neg) {
                    (true, true) => MantissaGrid {
                        min: -256,
                        max: 254,
                        step: 2,
                    },
                    (false, true) => MantissaGrid {
                        min: -255,
                        max: 0,
                        step: 1,
                    },
                    _ => MantissaGrid {
                        min: 0,
                        max: 255,
                        step: 1,
                    },
                }
            }
        }
    }
}

/// How the exponent of a layer is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExponentPolicy {
    /// Effective weights are the integers `round(scale·w)`; the exponent only
    /// changes how they are stored.
    Integer,
    /// The most negative exponent whose mantissas all fit the grid.
    MaxPrecision,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuantizeConfig {
    /// Float-to-integer multiplier applied to weights and threshold.
    pub scale: f64,
    pub encoding: MantissaEncoding,
    pub learned_exponent: ExponentPolicy,
    pub pooling_exponent: ExponentPolicy,
    /// Clamp out-of-range weights instead of failing.
    pub clamp: bool,
    /// Current decay; 4096 renews the current every step.
    pub delta_i: u16,
    /// Voltage decay override; derived from `tau` when absent.
    pub delta_v: Option<u16>,
    pub rounding: DecayRounding,
}

impl Default for QuantizeConfig {
    fn default() -> Self {
        QuantizeConfig {
            scale: 25.0,
            encoding: MantissaEncoding::Auto,
            learned_exponent: ExponentPolicy::Integer,
            pooling_exponent: ExponentPolicy::MaxPrecision,
            clamp: false,
            delta_i: 4096,
            delta_v: None,
            rounding: DecayRounding::TowardZero,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct QuantStats {
    /// Largest `|dequantized - w|`.
    pub max_abs_error: f64,
    pub mean_abs_error: f64,
    pub clamped: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedLayer {
    /// Geometry, with `weights` holding the dequantized values `m·2^e/scale`.
    pub spec: LayerSpec,
    pub mantissas: Vec<i64>,
    pub wgt_exp: i32,
    pub grid: MantissaGrid,
    pub stats: QuantStats,
}

impl QuantizedLayer {
    /// Left shift applied to the summed mantissas.
    pub fn shift(&self) -> u32 {
        (6 + self.wgt_exp) as u32
    }
}

/// Chip-side dynamics shared by all compartments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CubaParams {
    pub vth_mant: i64,
    pub delta_v: i64,
    pub delta_i: i64,
    pub bias: i64,
    pub rounding: DecayRounding,
}

impl CubaParams {
    pub fn threshold(&self) -> i64 {
        self.vth_mant << 6
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedNetwork {
    pub input: Shape,
    pub layers: Vec<QuantizedLayer>,
    pub params: CubaParams,
    pub scale: f64,
}

impl QuantizedNetwork {
    pub fn output_size(&self) -> usize {
        self.layers.last().map_or(0, |l| l.spec.num_neurons())
    }

    /// Float threshold implied by the integer one.
    pub fn dequantized_threshold(&self) -> f64 {
        self.params.vth_mant as f64 / self.scale
    }

    pub fn validate(&self) -> Result<(), EmuError> {
        let p = &self.params;
        if !(0..=DECAY_ONE).contains(&p.delta_v) || !(0..=DECAY_ONE).contains(&p.delta_i) {
            return Err(EmuError::InvalidParams(
                "decays must lie in [0, 4096]".into(),
            ));
        }
        if p.bias != 0 {
            return Err(EmuError::InvalidParams("bias must be 0".into()));
        }
        if p.vth_mant <= 0 {
            return Err(EmuError::InvalidParams("vth_mant must be > 0".into()));
        }
        let mut shape = self.input;
        for (n, l) in self.layers.iter().enumerate() {
            if l.spec.in_shape != shape || l.mantissas.len() != l.spec.expected_weights() {
                return Err(EmuError::InvalidParams(format!(
                    "layer {n} does not match its input"
                )));
            }
            if !(MIN_WGT_EXP..=MAX_WGT_EXP).contains(&l.wgt_exp) {
                return Err(EmuError::InvalidParams(format!(
                    "layer {n} exponent {} out of range",
                    l.wgt_exp
                )));
            }
            if let Some(&m) = l.mantissas.iter().find(|&&m| !l.grid.contains(m)) {
                return Err(EmuError::InvalidParams(format!(
                    "layer {n} mantissa {m} is not representable"
                )));
            }
            shape = l.spec.out_shape;
        }
        Ok(())
    }
}

/// `m·2^e/scale`.
pub fn dequantize_weight(m: i64, wgt_exp: i32, scale: f64) -> f64 {
    m as f64 * 2f64.powi(wgt_exp) / scale
}

/// `floor(4096·(1 - tau))`.
pub fn voltage_decay(tau: f64) -> u16 {
    ((DECAY_ONE as f64) * (1.0 - tau) + 1e-9)
        .floor()
        .clamp(0.0, DECAY_ONE as f64) as u16
}

fn quantize_layer(
    n: usize,
    layer: &LayerSpec,
    config: &QuantizeConfig,
) -> Result<QuantizedLayer, EmuError> {
    let grid = config.encoding.grid_for(&layer.weights);
    let policy = if layer.is_learnable() {
        config.learned_exponent
    } else {
        config.pooling_exponent
    };
    let scaled: Vec<f64> = layer.weights.iter().map(|w| w * config.scale).collect();
    let targets: Vec<f64> = match policy {
        ExponentPolicy::Integer => scaled.iter().map(|v| v.round()).collect(),
        ExponentPolicy::MaxPrecision => scaled.clone(),
    };

    // Most negative exponent at which every target lands exactly (Integer) or
    // fits the grid after rounding (MaxPrecision).
    let pick = (MIN_WGT_EXP..=MAX_WGT_EXP).find(|&e| {
        let k = 2f64.powi(-e);
        targets.iter().all(|&t| {
            let m = grid.round(t * k);
            let fits = grid.contains(m);
            match policy {
                ExponentPolicy::Integer => fits && (m as f64) == t * k,
                ExponentPolicy::MaxPrecision => fits,
            }
        })
    });
    let (wgt_exp, lossy) = match pick {
        Some(e) => (e, false),
        None => (MAX_WGT_EXP, true),
    };

    let k = 2f64.powi(-wgt_exp);
    let mut clamped = 0;
    let mut mantissas = Vec::with_capacity(targets.len());
    for (i, &t) in targets.iter().enumerate() {
        // Without an exact exponent, round the raw scaled weight to the grid.
        let m = grid.round(if lossy { scaled[i] } else { t } * k);
        if grid.contains(m) {
            mantissas.push(m);
        } else if lossy && config.clamp {
            clamped += 1;
            mantissas.push(m.clamp(i64::from(grid.min), i64::from(grid.max)));
        } else {
            return Err(EmuError::WeightOverflow {
                layer: n,
                index: i,
                weight: layer.weights[i],
                scaled: t,
                min: grid.min,
                max: grid.max,
            });
        }
    }

    let mut spec = layer.clone();
    spec.weights = mantissas
        .iter()
        .map(|&m| dequantize_weight(m, wgt_exp, config.scale))
        .collect();
    spec.bias.iter_mut().for_each(|b| *b = 0.0);
    let errors: Vec<f64> = spec
        .weights
        .iter()
        .zip(&layer.weights)
        .map(|(q, w)| (q - w).abs())
        .collect();
    let stats = QuantStats {
        max_abs_error: errors.iter().copied().fold(0.0, f64::max),
        mean_abs_error: if errors.is_empty() {
            0.0
        } else {
            errors.iter().sum::<f64>() / errors.len() as f64
        },
        clamped,
    };
    Ok(QuantizedLayer {
        spec,
        mantissas,
        wgt_exp,
        grid,
        stats,
    })
}

/// Translates a trained network to chip parameters.
pub fn quantize(net: &NetworkSpec, config: &QuantizeConfig) -> Result<QuantizedNetwork, EmuError> {
    net.validate()?;
    if !(config.scale > 0.0 && config.scale.is_finite()) {
        return Err(EmuError::InvalidParams("scale must be > 0".into()));
    }
    if i64::from(config.delta_i) > DECAY_ONE
        || config.delta_v.is_some_and(|d| i64::from(d) > DECAY_ONE)
    {
        return Err(EmuError::InvalidParams(
            "decays must lie in [0, 4096]".into(),
        ));
    }
    if let Some(n) = net
        .layers
        .iter()
        .position(|l| l.bias.iter().any(|&b| b != 0.0))
    {
        return Err(EmuError::NonZeroBias(n));
    }
    let layers = net
        .layers
        .iter()
        .enumerate()
        .map(|(n, l)| quantize_layer(n, l, config))
        .collect::<Result<Vec<_>, _>>()?;
    let vth_mant = (config.scale * net.lif.v_th).round() as i64;
    if vth_mant <= 0 {
        return Err(EmuError::InvalidParams(format!(
            "scaled threshold {vth_mant} must be > 0"
        )));
    }
    let params = CubaParams {
        vth_mant,
        delta_v: i64::from(config.delta_v.unwrap_or_else(|| voltage_decay(net.lif.tau))),
        delta_i: i64::from(config.delta_i),
        bias: 0,
        rounding: config.rounding,
    };
    Ok(QuantizedNetwork {
        input: net.input,
        layers,
        params,
        scale: config.scale,
    })
}

/// Float network with the dequantized weights and threshold of `qnet`, the
/// given decay and spiking pooling.
pub fn dequantize(qnet: &QuantizedNetwork, tau: f64) -> NetworkSpec {
    let lif = crate::snn::LifParams::with_threshold(qnet.dequantized_threshold(), tau);
    NetworkSpec {
        input: qnet.input,
        layers: qnet.layers.iter().map(|l| l.spec.clone()).collect(),
        lif,
        pooling: crate::snn::PoolingMode::Spiking,
    }
}
