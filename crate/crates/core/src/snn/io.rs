//! Network files: a JSON header describing the layers and a little-endian
//! `f64` sidecar holding, per layer, the weights followed by the biases.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{LayerKind, LayerSpec, LifParams, NetworkSpec, PoolingMode, Shape, SnnError};

pub const NETWORK_FORMAT: &str = "evsnn-network";
pub const NETWORK_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    weights_file: String,
    /// Total number of `f64` values in the sidecar.
    values: usize,
    input: Shape,
    lif: LifParams,
    pooling: PoolingMode,
    layers: Vec<LayerHeader>,
}

#[derive(Serialize, Deserialize)]
pub(crate) struct LayerHeader {
    pub(crate) kind: LayerKind,
    pub(crate) in_channels: usize,
    pub(crate) out_channels: usize,
    pub(crate) kernel: usize,
    pub(crate) padding: usize,
    pub(crate) stride: usize,
    pub(crate) in_shape: Shape,
    pub(crate) out_shape: Shape,
    pub(crate) weight_count: usize,
    pub(crate) bias_count: usize,
}

impl LayerHeader {
    pub(crate) fn of(l: &LayerSpec) -> Self {
        LayerHeader {
            kind: l.kind,
            in_channels: l.in_channels,
            out_channels: l.out_channels,
            kernel: l.kernel,
            padding: l.padding,
            stride: l.stride,
            in_shape: l.in_shape,
            out_shape: l.out_shape,
            weight_count: l.weights.len(),
            bias_count: l.bias.len(),
        }
    }

    pub(crate) fn into_spec(self, weights: Vec<f64>, bias: Vec<f64>) -> LayerSpec {
        LayerSpec {
            kind: self.kind,
            in_channels: self.in_channels,
            out_channels: self.out_channels,
            kernel: self.kernel,
            padding: self.padding,
            stride: self.stride,
            in_shape: self.in_shape,
            out_shape: self.out_shape,
            weights,
            bias,
        }
    }
}

/// Sidecar path for a header path: `model.json` -> `model.weights.bin`.
pub fn weights_path(header: &Path) -> PathBuf {
    header.with_extension("weights.bin")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SnnError + '_ {
    move |source| SnnError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn save_network(net: &NetworkSpec, path: &Path) -> Result<(), SnnError> {
    net.validate()?;
    let sidecar = weights_path(path);
    let mut bytes = Vec::new();
    let mut layers = Vec::with_capacity(net.layers.len());
    for l in &net.layers {
        for v in l.weights.iter().chain(&l.bias) {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        layers.push(LayerHeader::of(l));
    }
    let header = Header {
        format: NETWORK_FORMAT.into(),
        version: NETWORK_VERSION,
        weights_file: sidecar
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        values: bytes.len() / 8,
        input: net.input,
        lif: net.lif,
        pooling: net.pooling,
        layers,
    };
    let json =
        serde_json::to_string_pretty(&header).map_err(|e| SnnError::Format(e.to_string()))?;
    fs::write(path, json).map_err(io_err(path))?;
    fs::write(&sidecar, bytes).map_err(io_err(&sidecar))
}

pub fn load_network(path: &Path) -> Result<NetworkSpec, SnnError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let header: Header =
        serde_json::from_str(&text).map_err(|e| SnnError::Format(e.to_string()))?;
    if header.format != NETWORK_FORMAT {
        return Err(SnnError::Format(format!(
            "not a network file (format `{}`)",
            header.format
        )));
    }
    if header.version != NETWORK_VERSION {
        return Err(SnnError::Format(format!(
            "unsupported network version {}",
            header.version
        )));
    }
    let sidecar = path.with_file_name(&header.weights_file);
    let bytes = fs::read(&sidecar).map_err(io_err(&sidecar))?;
    if bytes.len() != header.values * 8 {
        return Err(SnnError::Format(format!(
            "{}: expected {} values, found {} bytes",
            sidecar.display(),
            header.values,
            bytes.len()
        )));
    }
    let mut values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
    let mut layers = Vec::with_capacity(header.layers.len());
    for h in header.layers {
        let weights: Vec<f64> = values.by_ref().take(h.weight_count).collect();
        let bias: Vec<f64> = values.by_ref().take(h.bias_count).collect();
        if weights.len() != h.weight_count || bias.len() != h.bias_count {
            return Err(SnnError::Format(
                "sidecar shorter than the layer list".into(),
            ));
        }
        layers.push(h.into_spec(weights, bias));
    }
    if values.next().is_some() {
        return Err(SnnError::Format(
            "sidecar longer than the layer list".into(),
        ));
    }
    let net = NetworkSpec {
        input: header.input,
        layers,
        lif: header.lif,
        pooling: header.pooling,
    };
    net.validate()?;
    Ok(net)
}
