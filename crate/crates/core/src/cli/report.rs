//! Machine-readable reports written by the subcommands. Their JSON schemas
//! live under `docs/schemas/`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::RunConfig;
use crate::emu::{
    CubaParams, EmulationReport, EquivalenceReport, MantissaGrid, MappingReport, QuantStats,
    QuantizeConfig, QuantizedNetwork,
};
use crate::events::{Dataset, DatasetFormat, SyntheticSpec};
use crate::preprocess::{AccumulationConfig, TileShare};
use crate::snn::LayerKind;
use crate::stbp::{EvalResult, Metrics};

pub const REPORT_VERSION: u32 = 1;

fn path_string(p: &Path) -> String {
    p.display().to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenReport {
    pub report: String,
    pub version: u32,
    pub root: String,
    pub format: DatasetFormat,
    pub spec: SyntheticSpec,
    pub train_streams: usize,
    pub test_streams: usize,
    pub train_events: usize,
    pub test_events: usize,
}

impl GenReport {
    pub fn new(root: &Path, spec: SyntheticSpec, format: DatasetFormat, d: &Dataset) -> Self {
        GenReport {
            report: "gen".into(),
            version: REPORT_VERSION,
            root: path_string(root),
            format,
            spec,
            train_streams: d.train.len(),
            test_streams: d.test.len(),
            train_events: d.train.iter().map(|s| s.len()).sum(),
            test_events: d.test.iter().map(|s| s.len()).sum(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsSplit {
    pub split: String,
    pub streams: usize,
    pub width: u16,
    pub height: u16,
    pub total_events: u64,
    pub csv: String,
    pub pgm: String,
    pub densest_50: Option<TileShare>,
    pub densest_100: Option<TileShare>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub report: String,
    pub version: u32,
    pub data: Value,
    pub splits: Vec<StatsSplit>,
}

impl StatsReport {
    pub fn new(data: Value, splits: Vec<StatsSplit>) -> Self {
        StatsReport {
            report: "stats".into(),
            version: REPORT_VERSION,
            data,
            splits,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub report: String,
    pub version: u32,
    pub data: Value,
    pub config: RunConfig,
    pub model: String,
    pub epochs_completed: usize,
    pub acc_s: f64,
    pub acc_test: f64,
    pub acc_train: f64,
    pub loss_curve: Vec<f64>,
}

impl TrainReport {
    pub fn new(data: Value, config: RunConfig, model: &str, epochs: usize, m: &Metrics) -> Self {
        TrainReport {
            report: "train".into(),
            version: REPORT_VERSION,
            data,
            config,
            model: model.into(),
            epochs_completed: epochs,
            acc_s: m.acc_s,
            acc_test: m.acc_test,
            acc_train: m.acc_train,
            loss_curve: m.loss_curve.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub report: String,
    pub version: u32,
    pub model: String,
    pub data: Value,
    pub accumulation: AccumulationConfig,
    pub seed: u64,
    pub acc_s: f64,
    pub acc_test: f64,
    pub frames: usize,
    pub streams: usize,
}

impl EvalReport {
    pub fn new(
        model: &Path,
        data: Value,
        accumulation: AccumulationConfig,
        seed: u64,
        r: EvalResult,
    ) -> Self {
        EvalReport {
            report: "eval".into(),
            version: REPORT_VERSION,
            model: path_string(model),
            data,
            accumulation,
            seed,
            acc_s: r.acc_s,
            acc_test: r.acc_stream,
            frames: r.frames,
            streams: r.streams,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizeLayerReport {
    pub kind: LayerKind,
    pub wgt_exp: i32,
    pub grid: MantissaGrid,
    pub mantissas: usize,
    pub stats: QuantStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizeReport {
    pub report: String,
    pub version: u32,
    pub model: String,
    pub qnet: String,
    pub config: QuantizeConfig,
    pub params: CubaParams,
    pub layers: Vec<QuantizeLayerReport>,
}

impl QuantizeReport {
    pub fn new(
        model: &Path,
        qnet_file: &str,
        config: &QuantizeConfig,
        q: &QuantizedNetwork,
    ) -> Self {
        QuantizeReport {
            report: "quantize".into(),
            version: REPORT_VERSION,
            model: path_string(model),
            qnet: qnet_file.into(),
            config: *config,
            params: q.params,
            layers: q
                .layers
                .iter()
                .map(|l| QuantizeLayerReport {
                    kind: l.spec.kind,
                    wgt_exp: l.wgt_exp,
                    grid: l.grid,
                    mantissas: l.mantissas.len(),
                    stats: l.stats,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmulateReport {
    pub report: String,
    pub version: u32,
    pub qnet: String,
    pub data: Value,
    pub accumulation: AccumulationConfig,
    pub seed: u64,
    pub acc_s: f64,
    pub acc_test: f64,
    pub frames: usize,
    pub streams: usize,
    pub replication: usize,
    pub blank: usize,
    pub timesteps_per_inference: usize,
    /// Float network on the same clips, when a model was given.
    pub offline: Option<EvalResult>,
    pub equivalence: Option<EquivalenceReport>,
}

impl EmulateReport {
    pub fn new(
        qnet: &Path,
        data: Value,
        accumulation: AccumulationConfig,
        seed: u64,
        r: EmulationReport,
        offline: Option<EvalResult>,
        equivalence: Option<EquivalenceReport>,
    ) -> Self {
        EmulateReport {
            report: "emulate".into(),
            version: REPORT_VERSION,
            qnet: path_string(qnet),
            data,
            accumulation,
            seed,
            acc_s: r.acc_s,
            acc_test: r.acc_test,
            frames: r.frames,
            streams: r.streams,
            replication: r.replication,
            blank: r.blank,
            timesteps_per_inference: r.timesteps_per_inference,
            offline,
            equivalence,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapReport {
    pub report: String,
    pub version: u32,
    pub source: String,
    #[serde(flatten)]
    pub mapping: MappingReport,
}

impl MapReport {
    pub fn new(source: String, mapping: MappingReport) -> Self {
        MapReport {
            report: "map".into(),
            version: REPORT_VERSION,
            source,
            mapping,
        }
    }
}
