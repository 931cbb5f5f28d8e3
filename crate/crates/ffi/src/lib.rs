//! C interface to the evsnn toolkit.
//!
//! Objects are opaque handles created by `evsnn_*_new`/`_load` functions and
//! released with the matching `_free`. Every fallible call returns an
//! [`EvsnnStatus`]; on failure [`evsnn_last_error`] describes the problem.
//! Errors are tracked per thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::mem::ManuallyDrop;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use evsnn::emu::{
    load_qnet, map_resources, quantize, save_qnet, ChipConstraints, ChipEmulator, EmuError,
    QuantizeConfig, QuantizedNetwork,
};
use evsnn::snn::{
    build_network, load_network, run_frame, save_network, LifParams, NetworkSpec, SnnError, Variant,
};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvsnnStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    WeightOverflow = 5,
    Infeasible = 6,
    ShapeMismatch = 7,
    Panic = 8,
}

/// A float network.
pub struct EvsnnNetwork(NetworkSpec);

/// A quantized network.
pub struct EvsnnQnet(QuantizedNetwork);

/// Chip emulator with its own copy of a quantized network and persistent
/// compartment state.
pub struct EvsnnEmulator {
    emu: ManuallyDrop<ChipEmulator<'static>>,
    qnet: *mut QuantizedNetwork,
}

impl Drop for EvsnnEmulator {
    fn drop(&mut self) {
        // SAFETY: the emulator is the only borrower of `qnet` and goes first;
        // `qnet` came from `Box::into_raw` and is freed exactly once.
        unsafe {
            ManuallyDrop::drop(&mut self.emu);
            drop(Box::from_raw(self.qnet));
        }
    }
}

/// Compartment parameters shared by every layer.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct EvsnnCubaParams {
    pub vth_mant: i64,
    pub delta_v: i64,
    pub delta_i: i64,
    pub bias: i64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct EvsnnMapSummary {
    pub total_compartments: u64,
    pub total_synapses: u64,
    pub cores_used: u64,
    pub chips: u64,
    pub feasible: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Failure(EvsnnStatus, String);

impl Failure {
    fn invalid(msg: impl Into<String>) -> Self {
        Failure(EvsnnStatus::InvalidArgument, msg.into())
    }
}

impl From<SnnError> for Failure {
    fn from(e: SnnError) -> Self {
        let status = match e {
            SnnError::Io { .. } => EvsnnStatus::Io,
            SnnError::ShapeMismatch { .. } => EvsnnStatus::ShapeMismatch,
            SnnError::Format(_) => EvsnnStatus::Format,
            _ => EvsnnStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

impl From<EmuError> for Failure {
    fn from(e: EmuError) -> Self {
        let status = match e {
            EmuError::Io { .. } => EvsnnStatus::Io,
            EmuError::Format(_) => EvsnnStatus::Format,
            EmuError::WeightOverflow { .. } => EvsnnStatus::WeightOverflow,
            EmuError::Infeasible(_) => EvsnnStatus::Infeasible,
            EmuError::ShapeMismatch { .. } => EvsnnStatus::ShapeMismatch,
            EmuError::Snn(e) => return e.into(),
            _ => EvsnnStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> EvsnnStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            EvsnnStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            EvsnnStatus::Panic
        }
    }
}

unsafe fn to_path<'a>(p: *const c_char) -> Result<&'a Path, Failure> {
    if p.is_null() {
        return Err(Failure(EvsnnStatus::NullPointer, "path is null".into()));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::invalid("path is not UTF-8"))?;
    Ok(Path::new(s))
}

unsafe fn get<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure(EvsnnStatus::NullPointer, format!("{what} is null")))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure(
            EvsnnStatus::NullPointer,
            "output pointer is null".into(),
        ));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn evsnn_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn evsnn_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Builds `variant` ("full128", "win100" or "win50") with default LIF
/// parameters and seeded initial weights.
///
/// # Safety
/// `variant` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn evsnn_network_build(
    variant: *const c_char,
    seed: u64,
    out: *mut *mut EvsnnNetwork,
) -> EvsnnStatus {
    guard(|| {
        if variant.is_null() {
            return Err(Failure(EvsnnStatus::NullPointer, "variant is null".into()));
        }
        let name = CStr::from_ptr(variant)
            .to_str()
            .map_err(|_| Failure::invalid("variant is not UTF-8"))?;
        let v: Variant = name.parse().map_err(Failure::invalid)?;
        put(
            out,
            EvsnnNetwork(build_network(v, LifParams::default(), seed)),
        )
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn evsnn_network_load(
    path: *const c_char,
    out: *mut *mut EvsnnNetwork,
) -> EvsnnStatus {
    guard(|| put(out, EvsnnNetwork(load_network(to_path(path)?)?)))
}

/// # Safety
/// `net` must come from this library; `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn evsnn_network_save(
    net: *const EvsnnNetwork,
    path: *const c_char,
) -> EvsnnStatus {
    guard(|| Ok(save_network(&get(net, "network")?.0, to_path(path)?)?))
}

/// # Safety
/// `net` must be null or come from this library, and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn evsnn_network_free(net: *mut EvsnnNetwork) {
    free(net)
}

/// Number of input values (`2·height·width`), 0 for a null handle.
///
/// # Safety
/// `net` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn evsnn_network_input_len(net: *const EvsnnNetwork) -> usize {
    net.as_ref().map_or(0, |n| n.0.input.len())
}

/// Holds a binary frame (`[c][y][x]` bytes, nonzero = spike) for `timesteps`
/// steps from rest and writes the predicted class.
///
/// # Safety
/// `bits` must point to `len` bytes and `class_out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn evsnn_network_classify(
    net: *const EvsnnNetwork,
    bits: *const u8,
    len: usize,
    timesteps: usize,
    class_out: *mut usize,
) -> EvsnnStatus {
    guard(|| {
        let net = &get(net, "network")?.0;
        if bits.is_null() || class_out.is_null() {
            return Err(Failure(
                EvsnnStatus::NullPointer,
                "bits or class_out is null".into(),
            ));
        }
        if timesteps == 0 {
            return Err(Failure::invalid("timesteps must be >= 1"));
        }
        let input: Vec<f64> = std::slice::from_raw_parts(bits, len)
            .iter()
            .map(|&b| f64::from(u8::from(b != 0)))
            .collect();
        let r = run_frame(net, &input, timesteps)?;
        *class_out = evsnn::snn::decide_class(&r.counts, &r.final_potential);
        Ok(())
    })
}

/// Quantizes with the default settings at float-to-integer `scale`
/// (25 for the reference threshold 0.4).
///
/// # Safety
/// `net` must come from this library and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn evsnn_quantize(
    net: *const EvsnnNetwork,
    scale: f64,
    out: *mut *mut EvsnnQnet,
) -> EvsnnStatus {
    guard(|| {
        let cfg = QuantizeConfig {
            scale,
            ..QuantizeConfig::default()
        };
        put(out, EvsnnQnet(quantize(&get(net, "network")?.0, &cfg)?))
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn evsnn_qnet_load(
    path: *const c_char,
    out: *mut *mut EvsnnQnet,
) -> EvsnnStatus {
    guard(|| put(out, EvsnnQnet(load_qnet(to_path(path)?)?)))
}

/// # Safety
/// `qnet` must come from this library; `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn evsnn_qnet_save(
    qnet: *const EvsnnQnet,
    path: *const c_char,
) -> EvsnnStatus {
    guard(|| Ok(save_qnet(&get(qnet, "qnet")?.0, to_path(path)?)?))
}

/// # Safety
/// `qnet` must be null or come from this library, and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn evsnn_qnet_free(qnet: *mut EvsnnQnet) {
    free(qnet)
}

/// # Safety
/// `qnet` must come from this library and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn evsnn_qnet_params(
    qnet: *const EvsnnQnet,
    out: *mut EvsnnCubaParams,
) -> EvsnnStatus {
    guard(|| {
        let p = get(qnet, "qnet")?.0.params;
        let out = out
            .as_mut()
            .ok_or_else(|| Failure(EvsnnStatus::NullPointer, "out is null".into()))?;
        *out = EvsnnCubaParams {
            vth_mant: p.vth_mant,
            delta_v: p.delta_v,
            delta_i: p.delta_i,
            bias: p.bias,
        };
        Ok(())
    })
}

/// Maps the quantized network onto neurocores with the default limits and
/// `bytes_per_synapse` bytes of synaptic memory per synapse.
///
/// # Safety
/// `qnet` must come from this library and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn evsnn_map(
    qnet: *const EvsnnQnet,
    bytes_per_synapse: usize,
    out: *mut EvsnnMapSummary,
) -> EvsnnStatus {
    guard(|| {
        let c = ChipConstraints {
            bytes_per_synapse,
            ..ChipConstraints::default()
        };
        let r = map_resources(&get(qnet, "qnet")?.0, &c)?;
        let out = out
            .as_mut()
            .ok_or_else(|| Failure(EvsnnStatus::NullPointer, "out is null".into()))?;
        *out = EvsnnMapSummary {
            total_compartments: r.total_compartments as u64,
            total_synapses: r.total_synapses as u64,
            cores_used: r.cores_used as u64,
            chips: r.chips as u64,
            feasible: r.feasible,
        };
        Ok(())
    })
}

/// Creates an emulator from a copy of `qnet`, all compartments at rest.
///
/// # Safety
/// `qnet` must come from this library and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn evsnn_emulator_new(
    qnet: *const EvsnnQnet,
    out: *mut *mut EvsnnEmulator,
) -> EvsnnStatus {
    guard(|| {
        let copy = get(qnet, "qnet")?.0.clone();
        copy.validate()?;
        if out.is_null() {
            return Err(Failure(
                EvsnnStatus::NullPointer,
                "output pointer is null".into(),
            ));
        }
        let raw = Box::into_raw(Box::new(copy));
        // The allocation is never moved or mutated and outlives the emulator
        // (see the Drop impl), so the 'static borrow never dangles.
        let emu = ManuallyDrop::new(ChipEmulator::new(&*raw));
        put(out, EvsnnEmulator { emu, qnet: raw })
    })
}

/// Advances one timestep. `input` holds one byte per input neuron (nonzero
/// = spike); `spikes_out` receives one byte per output neuron.
///
/// # Safety
/// `input` must point to `input_len` bytes and `spikes_out` to `out_len`.
#[no_mangle]
pub unsafe extern "C" fn evsnn_emulator_step(
    emu: *mut EvsnnEmulator,
    input: *const u8,
    input_len: usize,
    spikes_out: *mut u8,
    out_len: usize,
) -> EvsnnStatus {
    guard(|| {
        let emu = emu
            .as_mut()
            .ok_or_else(|| Failure(EvsnnStatus::NullPointer, "emulator is null".into()))?;
        if input.is_null() || spikes_out.is_null() {
            return Err(Failure(
                EvsnnStatus::NullPointer,
                "input or spikes_out is null".into(),
            ));
        }
        let x: Vec<i64> = std::slice::from_raw_parts(input, input_len)
            .iter()
            .map(|&b| i64::from(b != 0))
            .collect();
        let s = emu.emu.step(&x)?;
        if out_len != s.len() {
            return Err(Failure(
                EvsnnStatus::ShapeMismatch,
                format!(
                    "spikes_out holds {out_len} bytes, network has {} outputs",
                    s.len()
                ),
            ));
        }
        let out = std::slice::from_raw_parts_mut(spikes_out, out_len);
        out.iter_mut().zip(s).for_each(|(o, &v)| *o = v as u8);
        Ok(())
    })
}

/// Voltage of output neuron `index` after the last step, before any reset.
///
/// # Safety
/// `emu` must come from this library and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn evsnn_emulator_output_potential(
    emu: *const EvsnnEmulator,
    index: usize,
    out: *mut i64,
) -> EvsnnStatus {
    guard(|| {
        let emu = get(emu, "emulator")?;
        let layers = emu.emu.states().len();
        let v = layers
            .checked_sub(1)
            .and_then(|last| emu.emu.potential(last).get(index))
            .ok_or_else(|| Failure::invalid(format!("no output neuron {index}")))?;
        *out.as_mut()
            .ok_or_else(|| Failure(EvsnnStatus::NullPointer, "out is null".into()))? = *v;
        Ok(())
    })
}

/// # Safety
/// `emu` must be null or come from this library, and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn evsnn_emulator_free(emu: *mut EvsnnEmulator) {
    free(emu)
}
