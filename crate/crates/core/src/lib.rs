//! Spiking convolutional networks for event-camera classification.
//!
//! The crate covers the whole offline-to-chip pipeline:
//!
//! * [`events`]: event streams, the DAT and `.evt.csv` formats, dataset loading
//!   and a synthetic generator.
//! * [`preprocess`]: occurrence statistics, attention-window cropping and
//!   accumulation of events into binary two-channel spike frames.
//! * [`snn`]: iterative LIF network construction, forward dynamics and
//!   per-frame / per-stream prediction.
//! * [`stbp`]: spatio-temporal back-propagation, Adam and the training loop.
//! * [`emu`]: fixed-point CUBA emulation, parameter translation and neurocore
//!   resource mapping.
//! * [`cli`]: the `evsnn` command-line front end.

pub mod cli;
pub mod emu;
pub mod events;
pub mod preprocess;
pub mod rng;
pub mod snn;
pub mod stbp;

pub use events::{Dataset, Event, EventError, EventStream, Polarity};
pub use preprocess::{AccumulationConfig, AttentionWindow, OccurrenceMap, SpikeFrame};
pub use snn::{LayerKind, LayerSpec, LifParams, NetworkSpec, Shape, StateRecord, Variant};
