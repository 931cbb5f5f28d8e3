//! Quantized network files: a JSON header and a little-endian `i16` sidecar
//! with every layer's mantissas in order.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::quantize::{
    dequantize_weight, CubaParams, MantissaGrid, QuantStats, QuantizedLayer, QuantizedNetwork,
};
use super::EmuError;
use crate::snn::io::LayerHeader;
use crate::snn::Shape;

pub const QNET_FORMAT: &str = "evsnn-qnet";
pub const QNET_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    mantissas_file: String,
    values: usize,
    input: Shape,
    scale: f64,
    params: CubaParams,
    layers: Vec<QLayerHeader>,
}

#[derive(Serialize, Deserialize)]
struct QLayerHeader {
    #[serde(flatten)]
    geometry: LayerHeader,
    wgt_exp: i32,
    grid: MantissaGrid,
    stats: QuantStats,
}

/// `qnet.json` -> `qnet.mant.bin`.
pub fn mantissas_path(header: &Path) -> PathBuf {
    header.with_extension("mant.bin")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> EmuError + '_ {
    move |source| EmuError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn save_qnet(qnet: &QuantizedNetwork, path: &Path) -> Result<(), EmuError> {
    qnet.validate()?;
    let sidecar = mantissas_path(path);
    let mut bytes = Vec::new();
    let mut layers = Vec::with_capacity(qnet.layers.len());
    for l in &qnet.layers {
        for &m in &l.mantissas {
            let m = i16::try_from(m)
                .map_err(|_| EmuError::Format(format!("mantissa {m} does not fit 16 bits")))?;
            bytes.extend_from_slice(&m.to_le_bytes());
        }
        layers.push(QLayerHeader {
            geometry: LayerHeader::of(&l.spec),
            wgt_exp: l.wgt_exp,
            grid: l.grid,
            stats: l.stats,
        });
    }
    let header = Header {
        format: QNET_FORMAT.into(),
        version: QNET_VERSION,
        mantissas_file: sidecar
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        values: bytes.len() / 2,
        input: qnet.input,
        scale: qnet.scale,
        params: qnet.params,
        layers,
    };
    let json =
        serde_json::to_string_pretty(&header).map_err(|e| EmuError::Format(e.to_string()))?;
    fs::write(path, json).map_err(io_err(path))?;
    fs::write(&sidecar, bytes).map_err(io_err(&sidecar))
}

pub fn load_qnet(path: &Path) -> Result<QuantizedNetwork, EmuError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let header: Header =
        serde_json::from_str(&text).map_err(|e| EmuError::Format(e.to_string()))?;
    if header.format != QNET_FORMAT {
        return Err(EmuError::Format(format!(
            "not a quantized network file (format `{}`)",
            header.format
        )));
    }
    if header.version != QNET_VERSION {
        return Err(EmuError::Format(format!(
            "unsupported quantized network version {}",
            header.version
        )));
    }
    let sidecar = path.with_file_name(&header.mantissas_file);
    let bytes = fs::read(&sidecar).map_err(io_err(&sidecar))?;
    if bytes.len() != header.values * 2 {
        return Err(EmuError::Format(format!(
            "{}: expected {} mantissas, found {} bytes",
            sidecar.display(),
            header.values,
            bytes.len()
        )));
    }
    let mut values = bytes
        .chunks_exact(2)
        .map(|c| i64::from(i16::from_le_bytes([c[0], c[1]])));
    let mut layers = Vec::with_capacity(header.layers.len());
    for h in header.layers {
        let count = h.geometry.weight_count;
        let bias = vec![0.0; h.geometry.bias_count];
        let mantissas: Vec<i64> = values.by_ref().take(count).collect();
        if mantissas.len() != count {
            return Err(EmuError::Format(
                "sidecar shorter than the layer list".into(),
            ));
        }
        let weights = mantissas
            .iter()
            .map(|&m| dequantize_weight(m, h.wgt_exp, header.scale))
            .collect();
        layers.push(QuantizedLayer {
            spec: h.geometry.into_spec(weights, bias),
            mantissas,
            wgt_exp: h.wgt_exp,
            grid: h.grid,
            stats: h.stats,
        });
    }
    if values.next().is_some() {
        return Err(EmuError::Format(
            "sidecar longer than the layer list".into(),
        ));
    }
    let qnet = QuantizedNetwork {
        input: header.input,
        layers,
        params: header.params,
        scale: header.scale,
    };
    qnet.validate()?;
    Ok(qnet)
}
