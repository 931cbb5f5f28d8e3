//! The `evsnn` command-line front end.
//!
//! Settings are layered: built-in defaults, then `--preset`, then the JSON
//! file given with `--config`, then individual flags.

mod report;

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::emu::{
    emulate_dataset, equivalence_check, load_qnet, map_network, map_resources, quantize, save_qnet,
    ChipConstraints, DecayRounding, MantissaEncoding, MappingReport, Protocol, QuantizeConfig,
};
use crate::events::{
    gen_synthetic, load_dataset, write_dataset, Dataset, DatasetFormat, EventError, Pattern,
    SyntheticSpec,
};
use crate::preprocess::{event_occurrence_map, AccumulationConfig};
use crate::snn::{
    build_network_with_gain, load_network, save_network, LifParams, PoolingMode, Variant,
};
use crate::stbp::{
    evaluate, evaluation_clip, load_checkpoint, save_checkpoint, train_resume, ResetGradient,
    TrainConfig, TrainState,
};

pub use report::{
    EmulateReport, EvalReport, GenReport, MapReport, QuantizeLayerReport, QuantizeReport,
    StatsReport, StatsSplit, TrainReport, REPORT_VERSION,
};

/// Environment variable naming the default dataset root.
pub const DATA_ENV: &str = "NCARS_ROOT";

/// A failure with its exit code: 2 for usage, configuration and input
/// problems, 1 for everything else.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Internal(_) => 1,
        }
    }

    fn internal(e: impl std::fmt::Display) -> Self {
        CliError::Internal(e.to_string())
    }

    fn usage(e: impl std::fmt::Display) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Internal(m) => f.write_str(m),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "evsnn",
    version,
    about = "Spiking CNN pipeline for event-camera car detection"
)]
pub struct Cli {
    /// Worker threads (results do not depend on it) [default: all cores]
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic two-class event dataset on disk
    Gen(GenArgs),
    /// Event occurrence heatmaps and attention-window suggestions
    Stats(StatsArgs),
    /// Train a network with STBP
    Train(TrainArgs),
    /// Evaluate a trained network on the test split
    Eval(EvalArgs),
    /// Translate a trained network to fixed-point chip parameters
    Quantize(QuantizeArgs),
    /// Run the fixed-point emulator on the test split
    Emulate(EmulateArgs),
    /// Count compartments and synapses and place layers on neurocores
    Map(MapArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Small synthetic run: win50, 100 streams/class, 20 epochs
    Smoke,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Dat,
    EvtCsv,
}

impl From<FormatArg> for DatasetFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Dat => DatasetFormat::Dat,
            FormatArg::EvtCsv => DatasetFormat::EvtCsv,
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct SyntheticArgs {
    /// Synthetic canvas width [default: 50]
    #[arg(long)]
    pub synth_width: Option<u16>,
    /// Synthetic canvas height [default: 50]
    #[arg(long)]
    pub synth_height: Option<u16>,
    /// Synthetic streams per class and split [default: 100]
    #[arg(long)]
    pub n_per_class: Option<usize>,
    /// Synthetic stream duration in microseconds [default: 100000]
    #[arg(long)]
    pub duration_us: Option<u64>,
    /// Pattern of the car class [default: moving-bar]
    #[arg(long)]
    pub pattern: Option<Pattern>,
    /// Mean synthetic events per millisecond [default: 500]
    #[arg(long)]
    pub event_rate: Option<f64>,
    /// Seed of the synthetic generator [default: 7]
    #[arg(long)]
    pub data_seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct DataArgs {
    /// Dataset root with train/ and test/ splits [default: $NCARS_ROOT]
    #[arg(long, conflicts_with = "synthetic")]
    pub data: Option<PathBuf>,
    /// Use the built-in synthetic dataset instead of files
    #[arg(long)]
    pub synthetic: bool,
    /// File format under --data [default: detected]
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    #[command(flatten)]
    pub synth: SyntheticArgs,
}

/// Settings shared by every command that reads data or builds networks.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Settings preset applied before --config and flags
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// JSON settings file; flags override it
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed for init, shuffling, clip and evaluation draws [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Sample time T_s in microseconds [default: 1000]
    #[arg(long)]
    pub t_sample_us: Option<u64>,
    /// Sample length T_l in microseconds [default: 10000]
    #[arg(long)]
    pub t_length_us: Option<u64>,
    /// Timesteps each frame is held at the input [default: 20]
    #[arg(long)]
    pub frame_repeat: Option<usize>,
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Output dataset root
    #[arg(long)]
    pub out: PathBuf,
    /// File format [default: dat]
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    #[command(flatten)]
    pub synth: SyntheticArgs,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Output directory for heatmaps and the report
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Output directory for the model, metrics and checkpoints
    #[arg(long)]
    pub out: PathBuf,
    /// Network variant: full128 | win100 | win50 [default: full128]
    #[arg(long)]
    pub variant: Option<Variant>,
    /// Training epochs [default: 200]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Frames per Adam step [default: 40]
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Initial learning rate [default: 0.001]
    #[arg(long)]
    pub lr: Option<f64>,
    /// Epochs between learning-rate halvings [default: 20]
    #[arg(long)]
    pub lr_halving_period: Option<usize>,
    /// Firing threshold [default: 0.4]
    #[arg(long)]
    pub v_th: Option<f64>,
    /// Membrane decay factor [default: 0.2]
    #[arg(long)]
    pub tau: Option<f64>,
    /// Surrogate window width [default: 0.8]
    #[arg(long)]
    pub a1: Option<f64>,
    /// Pooling layers: spiking | linear [default: spiking]
    #[arg(long)]
    pub pooling: Option<PoolingMode>,
    /// Gradient through the reset gate: detached | product-rule [default: detached]
    #[arg(long)]
    pub reset_gradient: Option<ResetGradient>,
    /// Multiplier of the uniform ±1/sqrt(fan_in) initialisation [default: 1]
    #[arg(long)]
    pub init_gain: Option<f64>,
    /// Evaluate every N epochs, 0 for only the last [default: 1]
    #[arg(long)]
    pub eval_every: Option<usize>,
    /// Save a checkpoint every N epochs, 0 for never [default: 10]
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    /// Continue from a checkpoint header written by an earlier run
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Network header file
    #[arg(long)]
    pub model: PathBuf,
    /// Output directory for the report
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EncodingArg {
    Auto,
    Signed8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RoundingArg {
    TowardZero,
    Floor,
}

#[derive(Debug, Args)]
pub struct QuantizeArgs {
    /// Network header file
    #[arg(long)]
    pub model: PathBuf,
    /// Output directory for the quantized network and report
    #[arg(long)]
    pub out: PathBuf,
    /// Multiplier applied to weights and threshold
    #[arg(long, default_value_t = 25.0)]
    pub scale: f64,
    /// Mantissa encoding
    #[arg(long, value_enum, default_value_t = EncodingArg::Auto)]
    pub encoding: EncodingArg,
    /// Clamp out-of-range weights instead of failing
    #[arg(long)]
    pub clamp: bool,
    /// Current decay; 4096 renews the current every step
    #[arg(long, default_value_t = 4096)]
    pub delta_i: u16,
    /// Voltage decay [default: floor(4096·(1 - tau))]
    #[arg(long)]
    pub delta_v: Option<u16>,
    /// Rounding of the integer decay
    #[arg(long, value_enum, default_value_t = RoundingArg::TowardZero)]
    pub rounding: RoundingArg,
}

#[derive(Debug, Args)]
pub struct EmulateArgs {
    /// Quantized network header file
    #[arg(long)]
    pub qnet: PathBuf,
    /// Output directory for the report
    #[arg(long)]
    pub out: PathBuf,
    /// Timesteps each frame drives the chip
    #[arg(long, default_value_t = 10)]
    pub replication: usize,
    /// Zero-input timesteps after each frame
    #[arg(long, default_value_t = 7)]
    pub blank: usize,
    /// Float network to compare against (accuracy and spike trains)
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Test streams used for the spike-train comparison
    #[arg(long, default_value_t = 10)]
    pub check_streams: usize,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct MapArgs {
    /// Network header file
    #[arg(long, conflicts_with_all = ["qnet", "variant"])]
    pub model: Option<PathBuf>,
    /// Quantized network header file
    #[arg(long, conflicts_with = "variant")]
    pub qnet: Option<PathBuf>,
    /// Map an untrained network of this variant
    #[arg(long)]
    pub variant: Option<Variant>,
    /// Output directory for the report
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Bytes of synaptic memory per synapse
    #[arg(long, default_value_t = 1)]
    pub bytes_per_synapse: usize,
}

/// Everything that shapes a run, as stored in `--config` files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub variant: Variant,
    pub train: TrainConfig,
    pub lif: LifParams,
    pub pooling: PoolingMode,
    pub init_gain: f64,
    pub checkpoint_every: usize,
    pub synthetic: SyntheticSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            variant: Variant::Full128,
            train: TrainConfig::default(),
            lif: LifParams::default(),
            pooling: PoolingMode::Spiking,
            init_gain: 1.0,
            checkpoint_every: 10,
            synthetic: SyntheticSpec::default(),
        }
    }
}

impl RunConfig {
    pub fn preset(preset: Preset) -> Self {
        match preset {
            Preset::Smoke => {
                let mut c = RunConfig {
                    variant: Variant::Win50,
                    init_gain: 3.0,
                    checkpoint_every: 5,
                    ..Default::default()
                };
                c.train.epochs = 20;
                c.train.frame_repeat = 10;
                c.synthetic = SyntheticSpec {
                    width: 50,
                    height: 50,
                    n_per_class: 100,
                    event_rate: 500.0,
                    seed: 7,
                    ..Default::default()
                };
                c
            }
        }
    }

    pub fn accumulation(&self) -> AccumulationConfig {
        self.train.accumulation()
    }
}

fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (b, p) => *b = p,
    }
}

/// Dotted paths of keys in `patch` that `known` does not have.
fn unknown_keys(known: &Value, patch: &Value, prefix: &str, out: &mut Vec<String>) {
    if let (Value::Object(k), Value::Object(p)) = (known, patch) {
        for (key, v) in p {
            let path = if prefix.is_empty() {
                key.clone()
            } else {
                format!("{prefix}.{key}")
            };
            match k.get(key) {
                Some(inner) => unknown_keys(inner, v, &path, out),
                None => out.push(path),
            }
        }
    }
}

/// Defaults, then preset, then config file, then flags.
fn resolve(common: &CommonArgs) -> CliResult<RunConfig> {
    let mut config = common.preset.map(RunConfig::preset).unwrap_or_default();
    if let Some(path) = &common.config {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        let patch: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        let mut base = serde_json::to_value(&config).map_err(CliError::internal)?;
        let mut unknown = Vec::new();
        unknown_keys(&base, &patch, "", &mut unknown);
        if !unknown.is_empty() {
            return Err(CliError::usage(format!(
                "{}: unknown key(s) {}",
                path.display(),
                unknown.join(", ")
            )));
        }
        merge(&mut base, patch);
        config = serde_json::from_value(base)
            .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    }
    let t = &mut config.train;
    set(&mut t.seed, common.seed);
    set(&mut t.t_sample_us, common.t_sample_us);
    set(&mut t.t_length_us, common.t_length_us);
    set(&mut t.frame_repeat, common.frame_repeat);
    apply_synthetic(&mut config.synthetic, &common.data.synth);
    config.accumulation().validate().map_err(CliError::usage)?;
    Ok(config)
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn apply_synthetic(spec: &mut SyntheticSpec, a: &SyntheticArgs) {
    set(&mut spec.width, a.synth_width);
    set(&mut spec.height, a.synth_height);
    set(&mut spec.n_per_class, a.n_per_class);
    set(&mut spec.duration_us, a.duration_us);
    set(&mut spec.pattern, a.pattern);
    set(&mut spec.event_rate, a.event_rate);
    set(&mut spec.seed, a.data_seed);
}

/// Loads the dataset selected by the flags. A preset without `--data` uses
/// its synthetic dataset unless `NCARS_ROOT` is set. Also returns a
/// description of the source for reports.
fn load_data(common: &CommonArgs, config: &RunConfig) -> CliResult<(Dataset, Value)> {
    let root = match (&common.data.data, common.data.synthetic) {
        (_, true) => None,
        (Some(root), false) => Some(root.clone()),
        (None, false) => match std::env::var_os(DATA_ENV) {
            Some(r) => Some(PathBuf::from(r)),
            None if common.preset.is_some() => None,
            None => {
                return Err(CliError::usage(format!(
                    "no dataset given: pass --data DIR, --synthetic or set {DATA_ENV}"
                )))
            }
        },
    };
    let (dataset, source) = match root {
        None => (
            gen_synthetic(&config.synthetic).map_err(CliError::usage)?,
            serde_json::json!({ "synthetic": config.synthetic }),
        ),
        Some(root) => {
            let format = match common.data.format {
                Some(f) => f.into(),
                None => DatasetFormat::detect(&root).ok_or_else(|| {
                    CliError::usage(format!("no streams found under {}", root.display()))
                })?,
            };
            let d = load_dataset(&root, format).map_err(|e| match e {
                EventError::MissingSplit(dir) => CliError::usage(format!(
                    "no streams found under {} (missing {})",
                    root.display(),
                    dir.display()
                )),
                other => CliError::usage(format!("failed to load {}: {other}", root.display())),
            })?;
            (
                d,
                serde_json::json!({ "root": path_string(&root), "format": format }),
            )
        }
    };
    if dataset.is_empty() {
        return Err(CliError::usage("no streams found"));
    }
    Ok((dataset, source))
}

fn path_string(p: &Path) -> String {
    p.display().to_string()
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::usage(format!("cannot create {}: {e}", dir.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(CliError::internal)?;
    fs::write(path, text + "\n").map_err(|e| CliError::internal(format!("{}: {e}", path.display())))
}

fn load_net(path: &Path) -> CliResult<crate::snn::NetworkSpec> {
    load_network(path).map_err(|e| CliError::usage(format!("cannot load network: {e}")))
}

pub fn cmd_gen(a: &GenArgs) -> CliResult<GenReport> {
    let mut spec = SyntheticSpec::default();
    apply_synthetic(&mut spec, &a.synth);
    let format: DatasetFormat = a.format.unwrap_or(FormatArg::Dat).into();
    let dataset = gen_synthetic(&spec).map_err(CliError::usage)?;
    create_dir(&a.out)?;
    write_dataset(&a.out, &dataset, format).map_err(CliError::internal)?;
    let report = GenReport::new(&a.out, spec, format, &dataset);
    write_json(&a.out.join("gen_report.json"), &report)?;
    println!(
        "wrote {} train and {} test streams to {}",
        dataset.train.len(),
        dataset.test.len(),
        a.out.display()
    );
    Ok(report)
}

pub fn cmd_stats(a: &StatsArgs) -> CliResult<StatsReport> {
    let config = resolve(&a.common)?;
    let (dataset, source) = load_data(&a.common, &config)?;
    create_dir(&a.out)?;
    let mut splits = Vec::new();
    for (name, streams) in [("train", &dataset.train), ("test", &dataset.test)] {
        if streams.is_empty() {
            continue;
        }
        let map = event_occurrence_map(streams).map_err(CliError::internal)?;
        let csv = a.out.join(format!("occurrence_{name}.csv"));
        let pgm = a.out.join(format!("occurrence_{name}.pgm"));
        fs::write(&csv, map.to_csv())
            .map_err(|e| CliError::internal(format!("{}: {e}", csv.display())))?;
        fs::write(&pgm, map.to_pgm())
            .map_err(|e| CliError::internal(format!("{}: {e}", pgm.display())))?;
        let split = StatsSplit {
            split: name.into(),
            streams: streams.len(),
            width: map.width,
            height: map.height,
            total_events: map.total(),
            csv: csv
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default(),
            pgm: pgm
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default(),
            densest_50: map.densest_tile(50),
            densest_100: map.densest_tile(100),
        };
        println!(
            "{name}: {} streams, {} events on {}x{}",
            split.streams, split.total_events, map.width, map.height
        );
        for (size, tile) in [(50, &split.densest_50), (100, &split.densest_100)] {
            if let Some(t) = tile {
                println!(
                    "  densest {size}x{size} window at ({}, {}): {:.1}% of events",
                    t.window.origin_x,
                    t.window.origin_y,
                    100.0 * t.share
                );
            }
        }
        splits.push(split);
    }
    let report = StatsReport::new(source, splits);
    write_json(&a.out.join("stats_report.json"), &report)?;
    Ok(report)
}

fn train_config(a: &TrainArgs) -> CliResult<RunConfig> {
    let mut c = resolve(&a.common)?;
    set(&mut c.variant, a.variant);
    set(&mut c.train.epochs, a.epochs);
    set(&mut c.train.batch_size, a.batch_size);
    set(&mut c.train.lr_initial, a.lr);
    set(&mut c.train.lr_halving_period_epochs, a.lr_halving_period);
    set(&mut c.train.reset_gradient, a.reset_gradient);
    set(&mut c.train.eval_every, a.eval_every);
    set(&mut c.lif.v_th, a.v_th);
    set(&mut c.lif.tau, a.tau);
    set(&mut c.lif.a1, a.a1);
    set(&mut c.pooling, a.pooling);
    set(&mut c.init_gain, a.init_gain);
    set(&mut c.checkpoint_every, a.checkpoint_every);
    c.train.validate().map_err(CliError::usage)?;
    c.lif.validate().map_err(CliError::usage)?;
    if !(c.init_gain > 0.0 && c.init_gain.is_finite()) {
        return Err(CliError::usage("init_gain must be > 0"));
    }
    Ok(c)
}

pub fn cmd_train(a: &TrainArgs) -> CliResult<TrainReport> {
    let config = train_config(a)?;
    let (dataset, source) = load_data(&a.common, &config)?;
    create_dir(&a.out)?;
    let ckpt_dir = a.out.join("checkpoints");
    if config.checkpoint_every > 0 {
        create_dir(&ckpt_dir)?;
    }
    write_json(&a.out.join("run_config.json"), &config)?;

    let state = match &a.resume {
        Some(path) => {
            load_checkpoint(path).map_err(|e| CliError::usage(format!("cannot resume: {e}")))?
        }
        None => {
            let mut net = build_network_with_gain(
                config.variant,
                config.lif,
                config.train.seed,
                config.init_gain,
            );
            net.pooling = config.pooling;
            TrainState::new(net, &config.train)
        }
    };
    let log_path = a.out.join("metrics.jsonl");
    let mut log = fs::OpenOptions::new()
        .create(true)
        .write(true)
        .append(a.resume.is_some())
        .truncate(a.resume.is_none())
        .open(&log_path)
        .map_err(|e| CliError::internal(format!("{}: {e}", log_path.display())))?;
    let every = config.checkpoint_every;
    let total = config.train.epochs;
    let (state, metrics) = train_resume(&dataset, state, &config.train, |m, st| {
        let line =
            serde_json::to_string(m).map_err(|e| crate::stbp::StbpError::Format(e.to_string()))?;
        writeln!(log, "{line}").map_err(|source| crate::stbp::StbpError::Io {
            path: log_path.clone(),
            source,
        })?;
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
        eprintln!(
            "epoch {}/{total}  lr {:.2e}  loss {:.5}  acc_s {}  acc_test {}  acc_train {}",
            m.epoch + 1,
            m.lr,
            m.loss,
            fmt(m.acc_s),
            fmt(m.acc_test),
            fmt(m.acc_train)
        );
        if every > 0 && st.epoch % every == 0 {
            save_checkpoint(st, &ckpt_dir.join(format!("epoch_{:04}.json", st.epoch)))?;
        }
        Ok(())
    })
    .map_err(|e| match e {
        crate::stbp::StbpError::InvalidConfig(_) | crate::stbp::StbpError::EmptyDataset(_) => {
            CliError::usage(e)
        }
        other => CliError::internal(other),
    })?;

    let model = a.out.join("model.json");
    save_network(&state.net, &model).map_err(CliError::internal)?;
    write_json(&a.out.join("metrics.json"), &metrics)?;
    let report = TrainReport::new(source, config, "model.json", state.epoch, &metrics);
    write_json(&a.out.join("train_report.json"), &report)?;
    println!(
        "acc_s {:.4}  acc_test {:.4}  acc_train {:.4}  model {}",
        metrics.acc_s,
        metrics.acc_test,
        metrics.acc_train,
        model.display()
    );
    Ok(report)
}

pub fn cmd_eval(a: &EvalArgs) -> CliResult<EvalReport> {
    let config = resolve(&a.common)?;
    let net = load_net(&a.model)?;
    let (dataset, source) = load_data(&a.common, &config)?;
    if dataset.test.is_empty() {
        return Err(CliError::usage("no test streams found"));
    }
    let acc = config.accumulation();
    let r = evaluate(&net, &dataset.test, &acc, config.train.seed).map_err(CliError::internal)?;
    create_dir(&a.out)?;
    let report = EvalReport::new(&a.model, source, acc, config.train.seed, r);
    write_json(&a.out.join("eval_report.json"), &report)?;
    println!(
        "acc_s {:.4}  acc_test {:.4}  ({} frames, {} streams)",
        r.acc_s, r.acc_stream, r.frames, r.streams
    );
    Ok(report)
}

pub fn cmd_quantize(a: &QuantizeArgs) -> CliResult<QuantizeReport> {
    let net = load_net(&a.model)?;
    let config = QuantizeConfig {
        scale: a.scale,
        encoding: match a.encoding {
            EncodingArg::Auto => MantissaEncoding::Auto,
            EncodingArg::Signed8 => MantissaEncoding::Signed8,
        },
        clamp: a.clamp,
        delta_i: a.delta_i,
        delta_v: a.delta_v,
        rounding: match a.rounding {
            RoundingArg::TowardZero => DecayRounding::TowardZero,
            RoundingArg::Floor => DecayRounding::Floor,
        },
        ..Default::default()
    };
    let qnet = quantize(&net, &config).map_err(CliError::usage)?;
    create_dir(&a.out)?;
    let path = a.out.join("qnet.json");
    save_qnet(&qnet, &path).map_err(CliError::internal)?;
    let report = QuantizeReport::new(&a.model, "qnet.json", &config, &qnet);
    write_json(&a.out.join("quantize_report.json"), &report)?;
    println!(
        "vth_mant {}  delta_v {}  delta_i {}  -> {}",
        qnet.params.vth_mant,
        qnet.params.delta_v,
        qnet.params.delta_i,
        path.display()
    );
    for (n, l) in report.layers.iter().enumerate() {
        println!(
            "  layer {n} {:<8} exp {:>2}  max |err| {:.5}  clamped {}",
            l.kind.name(),
            l.wgt_exp,
            l.stats.max_abs_error,
            l.stats.clamped
        );
    }
    Ok(report)
}

pub fn cmd_emulate(a: &EmulateArgs) -> CliResult<EmulateReport> {
    let config = resolve(&a.common)?;
    let qnet = load_qnet(&a.qnet)
        .map_err(|e| CliError::usage(format!("cannot load quantized network: {e}")))?;
    let protocol = Protocol {
        replication: a.replication,
        blank: a.blank,
    };
    protocol.validate().map_err(CliError::usage)?;
    let (dataset, source) = load_data(&a.common, &config)?;
    if dataset.test.is_empty() {
        return Err(CliError::usage("no test streams found"));
    }
    let acc = config.accumulation();
    let seed = config.train.seed;
    let emu =
        emulate_dataset(&qnet, &dataset.test, &acc, protocol, seed).map_err(CliError::internal)?;

    let (mut offline, mut equivalence) = (None, None);
    if let Some(path) = &a.model {
        let net = load_net(path)?;
        offline = Some(evaluate(&net, &dataset.test, &acc, seed).map_err(CliError::internal)?);
        let canvas = (qnet.input.width as u16, qnet.input.height as u16);
        let mut frames = Vec::new();
        for (i, s) in dataset.test.iter().enumerate().take(a.check_streams) {
            frames.extend(evaluation_clip(s, i, &acc, seed, canvas).map_err(CliError::internal)?);
        }
        let mut shadow = net.clone();
        shadow.pooling = PoolingMode::Spiking;
        equivalence = Some(
            equivalence_check(&shadow, &qnet, &frames, protocol, None).map_err(CliError::usage)?,
        );
    }
    create_dir(&a.out)?;
    let report = EmulateReport::new(&a.qnet, source, acc, seed, emu, offline, equivalence);
    write_json(&a.out.join("emulate_report.json"), &report)?;
    println!(
        "acc_s {:.4}  acc_test {:.4}  timesteps/inference {} ({} + {} blank)",
        report.acc_s,
        report.acc_test,
        report.timesteps_per_inference,
        report.replication,
        report.blank
    );
    if let Some(o) = &report.offline {
        println!("offline acc_s {:.4}  acc_test {:.4}", o.acc_s, o.acc_stream);
    }
    if let Some(e) = &report.equivalence {
        println!(
            "spike trains: {} compared, {} boundary, {} divergent",
            e.compared_spikes, e.boundary_count, e.divergence_count
        );
    }
    Ok(report)
}

/// Table of per-layer and per-constraint usage.
pub fn render_mapping(m: &MappingReport) -> String {
    let c = &m.constraints;
    let max = |f: fn(&crate::emu::CoreUsage) -> usize| m.cores.iter().map(f).max().unwrap_or(0);
    let mut out = String::new();
    out.push_str("layer  kind      compartments     synapses  cores\n");
    for l in &m.layers {
        out.push_str(&format!(
            "{:>5}  {:<8}  {:>12}  {:>11}  {:>5}\n",
            l.layer,
            l.kind.name(),
            l.compartments,
            l.synapses,
            l.cores
        ));
    }
    out.push_str(&format!(
        "total            {:>12}  {:>11}  {:>5}  ({} chip(s))\n\n",
        m.total_compartments, m.total_synapses, m.cores_used, m.chips
    ));
    out.push_str("constraint                        limit   max used\n");
    let rows = [
        (
            "compartments per core",
            c.max_compartments_per_core,
            max(|u| u.compartments),
        ),
        (
            "fan-in per core (pre)",
            c.max_fanin_per_core,
            max(|u| u.fan_in),
        ),
        (
            "fan-out per core (post)",
            c.max_fanout_per_core,
            max(|u| u.fan_out),
        ),
        (
            "synaptic memory per core (B)",
            c.synaptic_mem_per_core,
            max(|u| u.memory_bytes),
        ),
    ];
    for (name, limit, used) in rows {
        out.push_str(&format!("{name:<30} {limit:>8}   {used:>8}\n"));
    }
    let mean = if m.cores.is_empty() {
        0.0
    } else {
        m.cores.iter().map(|u| u.utilization).sum::<f64>() / m.cores.len() as f64
    };
    out.push_str(&format!(
        "mean compartment utilization {:.1}%  feasible: {}\n",
        100.0 * mean,
        m.feasible
    ));
    out
}

pub fn cmd_map(a: &MapArgs) -> CliResult<MapReport> {
    let constraints = ChipConstraints {
        bytes_per_synapse: a.bytes_per_synapse,
        ..Default::default()
    };
    let (source, mapping) = match (&a.model, &a.qnet, a.variant) {
        (Some(path), _, _) => (
            path.display().to_string(),
            map_network(&load_net(path)?, &constraints),
        ),
        (_, Some(path), _) => {
            let q = load_qnet(path)
                .map_err(|e| CliError::usage(format!("cannot load quantized network: {e}")))?;
            (path.display().to_string(), map_resources(&q, &constraints))
        }
        (_, _, Some(v)) => {
            let net = build_network_with_gain(v, LifParams::default(), 0, 1.0);
            (format!("variant {v}"), map_network(&net, &constraints))
        }
        _ => return Err(CliError::usage("pass one of --model, --qnet or --variant")),
    };
    let mapping = mapping.map_err(CliError::usage)?;
    print!("{}", render_mapping(&mapping));
    let report = MapReport::new(source, mapping);
    if let Some(out) = &a.out {
        create_dir(out)?;
        write_json(&out.join("map_report.json"), &report)?;
    }
    Ok(report)
}

pub fn run(cli: &Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::usage("--threads must be >= 1"));
        }
        // Fails only if a pool already exists, which keeps its size.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    match &cli.command {
        Command::Gen(a) => cmd_gen(a).map(drop),
        Command::Stats(a) => cmd_stats(a).map(drop),
        Command::Train(a) => cmd_train(a).map(drop),
        Command::Eval(a) => cmd_eval(a).map(drop),
        Command::Quantize(a) => cmd_quantize(a).map(drop),
        Command::Emulate(a) => cmd_emulate(a).map(drop),
        Command::Map(a) => cmd_map(a).map(drop),
    }
}

/// Parses the process arguments and runs; the binary's whole `main`.
pub fn main_entry() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
