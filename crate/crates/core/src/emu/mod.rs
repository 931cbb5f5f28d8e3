//! Fixed-point neuromorphic chip emulation: parameter translation, integer
//! CUBA dynamics, the replicate-then-blank inference protocol, equivalence
//! checking against the float network and neurocore resource mapping.

mod cuba;
mod equiv;
mod io;
mod mapping;
mod quantize;

use thiserror::Error;

use crate::snn::SnnError;
use crate::stbp::StbpError;

pub use cuba::{
    cuba_step, decay, emulate_dataset, emulate_inference, ChipEmulator, CubaState, EmulationReport,
    Inference, Protocol,
};
pub use equiv::{equivalence_check, EquivalenceReport, SpikeMismatch, BOUNDARY_LSB};
pub use io::{load_qnet, mantissas_path, save_qnet, QNET_FORMAT, QNET_VERSION};
pub use mapping::{
    check_cores, map_network, map_resources, synapses_per_neuron, ChipConstraints, CoreUsage,
    LayerUsage, MappingReport,
};
pub use quantize::{
    dequantize, dequantize_weight, quantize, voltage_decay, CubaParams, DecayRounding,
    ExponentPolicy, MantissaEncoding, MantissaGrid, QuantStats, QuantizeConfig, QuantizedLayer,
    QuantizedNetwork, DECAY_ONE, MAX_WGT_EXP, MIN_WGT_EXP,
};

#[derive(Debug, Error)]
pub enum EmuError {
    #[error("layer {layer}: weight {weight} (scaled {scaled}) at index {index} is outside [{min}, {max}]")]
    WeightOverflow {
        layer: usize,
        index: usize,
        weight: f64,
        scaled: f64,
        min: i32,
        max: i32,
    },
    #[error("layer {0} has a nonzero bias; the chip runs with bias 0")]
    NonZeroBias(usize),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("infeasible mapping: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Snn(#[from] SnnError),
    #[error(transparent)]
    Stbp(#[from] StbpError),
    #[error(transparent)]
    Preprocess(#[from] crate::preprocess::PreprocessError),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
    #[error("quantized network: {0}")]
    Format(String),
}
