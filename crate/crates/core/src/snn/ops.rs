//! Connection kernels shared by simulation and training.
//!
//! All kernels skip zero entries of their sparse operand, which is the common
//! case for spike vectors and surrogate-gated errors.

use std::ops::{Add, AddAssign, Mul};

use super::{LayerKind, LayerSpec};

/// Element type of the forward kernels: `f64` offline, `i64` on the emulator.
pub trait Scalar:
    Copy + Default + PartialEq + Add<Output = Self> + AddAssign + Mul<Output = Self> + std::iter::Sum
{
}

impl Scalar for f64 {}
impl Scalar for i64 {}

/// `out = W·input` (no bias).
pub fn synaptic_input(layer: &LayerSpec, input: &[f64], out: &mut [f64]) {
    synaptic_input_with(layer, &layer.weights, input, out);
}

/// `out = W·input` using the geometry of `layer` and explicit `weights`
/// laid out like `layer.weights`.
pub fn synaptic_input_with<T: Scalar>(
    layer: &LayerSpec,
    weights: &[T],
    input: &[T],
    out: &mut [T],
) {
    debug_assert_eq!(input.len(), layer.in_shape.len());
    debug_assert_eq!(out.len(), layer.out_shape.len());
    debug_assert_eq!(weights.len(), layer.expected_weights());
    out.fill(T::default());
    match layer.kind {
        LayerKind::AvgPool => pool_forward(layer, weights[0], input, out),
        LayerKind::Conv2d => conv_forward(layer, weights, input, out),
        LayerKind::Dense => dense_forward(weights, input, out),
    }
}

/// `grad_in = Wᵀ·grad_out`.
pub fn synaptic_adjoint(layer: &LayerSpec, grad_out: &[f64], grad_in: &mut [f64]) {
    debug_assert_eq!(grad_out.len(), layer.out_shape.len());
    debug_assert_eq!(grad_in.len(), layer.in_shape.len());
    grad_in.fill(0.0);
    match layer.kind {
        LayerKind::AvgPool => pool_adjoint(layer, grad_out, grad_in),
        LayerKind::Conv2d => conv_adjoint(layer, grad_out, grad_in),
        LayerKind::Dense => dense_adjoint(layer, grad_out, grad_in),
    }
}

/// `dw += grad_out ⊗ input`, laid out like `layer.weights`. No-op for pooling.
pub fn accumulate_weight_grad(layer: &LayerSpec, grad_out: &[f64], input: &[f64], dw: &mut [f64]) {
    match layer.kind {
        LayerKind::AvgPool => {}
        LayerKind::Conv2d => conv_weight_grad(layer, grad_out, input, dw),
        LayerKind::Dense => dense_weight_grad(layer, grad_out, input, dw),
    }
}

/// `db += grad_out` reduced over each bias' neurons.
pub fn accumulate_bias_grad(layer: &LayerSpec, grad_out: &[f64], db: &mut [f64]) {
    match layer.kind {
        LayerKind::AvgPool => {}
        LayerKind::Dense => db.iter_mut().zip(grad_out).for_each(|(d, g)| *d += g),
        LayerKind::Conv2d => {
            let plane = layer.out_shape.height * layer.out_shape.width;
            for (c, d) in db.iter_mut().enumerate() {
                *d += grad_out[c * plane..(c + 1) * plane].iter().sum::<f64>();
            }
        }
    }
}

fn pool_forward<T: Scalar>(layer: &LayerSpec, w: T, input: &[T], out: &mut [T]) {
    let (i, o, k) = (layer.in_shape, layer.out_shape, layer.kernel);
    for c in 0..i.channels {
        for iy in 0..i.height {
            let row = &input[(c * i.height + iy) * i.width..][..i.width];
            let orow = &mut out[(c * o.height + iy / k) * o.width..][..o.width];
            for (ix, &v) in row.iter().enumerate() {
                if v != T::default() {
                    orow[ix / k] += w * v;
                }
            }
        }
    }
}

fn pool_adjoint(layer: &LayerSpec, grad_out: &[f64], grad_in: &mut [f64]) {
    let (i, o, k, w) = (
        layer.in_shape,
        layer.out_shape,
        layer.kernel,
        layer.weights[0],
    );
    for c in 0..i.channels {
        for iy in 0..i.height {
            let orow = &grad_out[(c * o.height + iy / k) * o.width..][..o.width];
            let row = &mut grad_in[(c * i.height + iy) * i.width..][..i.width];
            for (ix, g) in row.iter_mut().enumerate() {
                *g = w * orow[ix / k];
            }
        }
    }
}

/// Output rows/columns that receive input coordinate `i` through tap `kk`.
#[inline]
fn tap_target(i: usize, kk: usize, pad: usize, stride: usize, n_out: usize) -> Option<usize> {
    let shifted = (i + pad).checked_sub(kk)?;
    (shifted % stride == 0 && shifted / stride < n_out).then_some(shifted / stride)
}

/// Input coordinate read by output `o` through tap `kk`.
#[inline]
fn tap_source(o: usize, kk: usize, pad: usize, stride: usize, n_in: usize) -> Option<usize> {
    let i = (o * stride + kk).checked_sub(pad)?;
    (i < n_in).then_some(i)
}

fn conv_forward<T: Scalar>(layer: &LayerSpec, weights: &[T], input: &[T], out: &mut [T]) {
    let (i, o) = (layer.in_shape, layer.out_shape);
    let (k, p, s) = (layer.kernel, layer.padding, layer.stride);
    let plane = o.height * o.width;
    let wstride = i.channels * k * k;
    for ci in 0..i.channels {
        for iy in 0..i.height {
            for ix in 0..i.width {
                let v = input[(ci * i.height + iy) * i.width + ix];
                if v == T::default() {
                    continue;
                }
                for ky in 0..k {
                    let Some(oy) = tap_target(iy, ky, p, s, o.height) else {
                        continue;
                    };
                    for kx in 0..k {
                        let Some(ox) = tap_target(ix, kx, p, s, o.width) else {
                            continue;
                        };
                        let base = oy * o.width + ox;
                        let woff = (ci * k + ky) * k + kx;
                        for co in 0..o.channels {
                            out[co * plane + base] += weights[co * wstride + woff] * v;
                        }
                    }
                }
            }
        }
    }
}

fn conv_adjoint(layer: &LayerSpec, grad_out: &[f64], grad_in: &mut [f64]) {
    let (i, o) = (layer.in_shape, layer.out_shape);
    let (k, p, s) = (layer.kernel, layer.padding, layer.stride);
    for co in 0..o.channels {
        let wco = &layer.weights[co * i.channels * k * k..][..i.channels * k * k];
        for oy in 0..o.height {
            for ox in 0..o.width {
                let g = grad_out[(co * o.height + oy) * o.width + ox];
                if g == 0.0 {
                    continue;
                }
                for ky in 0..k {
                    let Some(iy) = tap_source(oy, ky, p, s, i.height) else {
                        continue;
                    };
                    for kx in 0..k {
                        let Some(ix) = tap_source(ox, kx, p, s, i.width) else {
                            continue;
                        };
                        for ci in 0..i.channels {
                            grad_in[(ci * i.height + iy) * i.width + ix] +=
                                wco[(ci * k + ky) * k + kx] * g;
                        }
                    }
                }
            }
        }
    }
}

fn conv_weight_grad(layer: &LayerSpec, grad_out: &[f64], input: &[f64], dw: &mut [f64]) {
    let (i, o) = (layer.in_shape, layer.out_shape);
    let (k, p, s) = (layer.kernel, layer.padding, layer.stride);
    for co in 0..o.channels {
        let dco = &mut dw[co * i.channels * k * k..][..i.channels * k * k];
        for oy in 0..o.height {
            for ox in 0..o.width {
                let g = grad_out[(co * o.height + oy) * o.width + ox];
                if g == 0.0 {
                    continue;
                }
                for ky in 0..k {
                    let Some(iy) = tap_source(oy, ky, p, s, i.height) else {
                        continue;
                    };
                    for kx in 0..k {
                        let Some(ix) = tap_source(ox, kx, p, s, i.width) else {
                            continue;
                        };
                        for ci in 0..i.channels {
                            let v = input[(ci * i.height + iy) * i.width + ix];
                            dco[(ci * k + ky) * k + kx] += g * v;
                        }
                    }
                }
            }
        }
    }
}

fn dense_forward<T: Scalar>(weights: &[T], input: &[T], out: &mut [T]) {
    let n_in = input.len();
    let active: Vec<(usize, T)> = input
        .iter()
        .copied()
        .enumerate()
        .filter(|&(_, v)| v != T::default())
        .collect();
    if active.len() * 4 > n_in {
        for (o, row) in out.iter_mut().zip(weights.chunks_exact(n_in)) {
            *o = row.iter().zip(input).map(|(&w, &v)| w * v).sum();
        }
    } else {
        for (o, row) in out.iter_mut().zip(weights.chunks_exact(n_in)) {
            *o = active.iter().map(|&(j, v)| row[j] * v).sum();
        }
    }
}

fn dense_adjoint(layer: &LayerSpec, grad_out: &[f64], grad_in: &mut [f64]) {
    let n_in = grad_in.len();
    for (&g, row) in grad_out.iter().zip(layer.weights.chunks_exact(n_in)) {
        if g != 0.0 {
            grad_in.iter_mut().zip(row).for_each(|(d, w)| *d += w * g);
        }
    }
}

fn dense_weight_grad(layer: &LayerSpec, grad_out: &[f64], input: &[f64], dw: &mut [f64]) {
    let n_in = layer.in_shape.len();
    let active: Vec<(usize, f64)> = input
        .iter()
        .copied()
        .enumerate()
        .filter(|&(_, v)| v != 0.0)
        .collect();
    for (&g, drow) in grad_out.iter().zip(dw.chunks_exact_mut(n_in)) {
        if g != 0.0 {
            for &(j, v) in &active {
                drow[j] += g * v;
            }
        }
    }
}

/// Calls `f(pre, post)` for every synapse of the layer, padded taps excluded.
pub fn for_each_synapse(layer: &LayerSpec, mut f: impl FnMut(usize, usize)) {
    let (i, o) = (layer.in_shape, layer.out_shape);
    match layer.kind {
        LayerKind::Dense => {
            for post in 0..o.len() {
                for pre in 0..i.len() {
                    f(pre, post);
                }
            }
        }
        LayerKind::AvgPool | LayerKind::Conv2d => {
            let (k, p, s) = (layer.kernel, layer.padding, layer.stride);
            let pool = layer.kind == LayerKind::AvgPool;
            for co in 0..o.channels {
                for oy in 0..o.height {
                    for ox in 0..o.width {
                        let post = (co * o.height + oy) * o.width + ox;
                        let channels = if pool { co..co + 1 } else { 0..i.channels };
                        for ci in channels {
                            for ky in 0..k {
                                let Some(iy) = tap_source(oy, ky, p, s, i.height) else {
                                    continue;
                                };
                                for kx in 0..k {
                                    let Some(ix) = tap_source(ox, kx, p, s, i.width) else {
                                        continue;
                                    };
                                    f((ci * i.height + iy) * i.width + ix, post);
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}
