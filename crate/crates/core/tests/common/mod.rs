//! Reference implementations and generators shared by the integration tests.
//! Nothing here calls the crate's kernels: connectivity is re-derived from
//! the layer geometry with plain nested loops.
#![allow(dead_code)]

pub mod chip;
pub mod rational;
pub mod schema;
pub mod tape;

use evsnn::snn::{
    LayerKind, LayerSpec, LifParams, NetworkBuilder, NetworkSpec, PoolingMode, Shape,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// One synapse: `(post, pre, weight index)`.
pub type Synapse = (usize, usize, usize);

/// Every synapse of a layer, out-of-range (padded) taps dropped.
pub fn synapses(layer: &LayerSpec) -> Vec<Synapse> {
    let (i, o) = (layer.in_shape, layer.out_shape);
    let mut out = Vec::new();
    match layer.kind {
        LayerKind::Dense => {
            for post in 0..o.len() {
                for pre in 0..i.len() {
                    out.push((post, pre, post * i.len() + pre));
                }
            }
        }
        LayerKind::Conv2d => {
            let k = layer.kernel as isize;
            for co in 0..o.channels {
                for oy in 0..o.height {
                    for ox in 0..o.width {
                        let post = co * o.height * o.width + oy * o.width + ox;
                        for ci in 0..i.channels {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let iy =
                                        (oy * layer.stride) as isize + ky - layer.padding as isize;
                                    let ix =
                                        (ox * layer.stride) as isize + kx - layer.padding as isize;
                                    if iy < 0
                                        || ix < 0
                                        || iy >= i.height as isize
                                        || ix >= i.width as isize
                                    {
                                        continue;
                                    }
                                    let pre = ci * i.height * i.width
                                        + iy as usize * i.width
                                        + ix as usize;
                                    let w = ((co * i.channels + ci) * layer.kernel + ky as usize)
                                        * layer.kernel
                                        + kx as usize;
                                    out.push((post, pre, w));
                                }
                            }
                        }
                    }
                }
            }
        }
        LayerKind::AvgPool => {
            let k = layer.kernel;
            for c in 0..o.channels {
                for oy in 0..o.height {
                    for ox in 0..o.width {
                        let post = c * o.height * o.width + oy * o.width + ox;
                        for y in oy * k..(oy * k + k).min(i.height) {
                            for x in ox * k..(ox * k + k).min(i.width) {
                                out.push((post, c * i.height * i.width + y * i.width + x, 0));
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Bias index of a neuron, if the layer has biases.
pub fn bias_index(layer: &LayerSpec, post: usize) -> Option<usize> {
    match layer.kind {
        LayerKind::AvgPool => None,
        LayerKind::Dense => Some(post),
        LayerKind::Conv2d => Some(post / (layer.out_shape.height * layer.out_shape.width)),
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_spikes(rng: &mut ChaCha8Rng, n: usize, p: f64) -> Vec<f64> {
    (0..n)
        .map(|_| if rng.random_bool(p) { 1.0 } else { 0.0 })
        .collect()
}

fn fill(rng: &mut ChaCha8Rng, v: &mut [f64], lo: f64, hi: f64) {
    v.iter_mut().for_each(|w| *w = rng.random_range(lo..hi));
}

/// A random network of at most two layers and 200 parameters.
pub fn random_small_net(rng: &mut ChaCha8Rng) -> NetworkSpec {
    let lif = LifParams::default();
    loop {
        let b = match rng.random_range(0..5) {
            0 => NetworkBuilder::new(Shape::flat(rng.random_range(1..8)))
                .dense(rng.random_range(1..6))
                .dense(2),
            1 => NetworkBuilder::new(Shape::flat(rng.random_range(1..10)))
                .dense(rng.random_range(1..4)),
            2 => {
                let s = Shape::new(
                    rng.random_range(1..3),
                    rng.random_range(2..6),
                    rng.random_range(2..6),
                );
                let k = rng.random_range(1..4);
                let pad = rng.random_range(0..2).min(k - 1);
                NetworkBuilder::new(s)
                    .conv2d(rng.random_range(1..4), k, pad, rng.random_range(1..3))
                    .dense(2)
            }
            3 => {
                let s = Shape::new(
                    rng.random_range(1..3),
                    rng.random_range(2..7),
                    rng.random_range(2..7),
                );
                NetworkBuilder::new(s)
                    .avg_pool(rng.random_range(2..4))
                    .dense(2)
            }
            _ => {
                let s = Shape::new(
                    rng.random_range(1..3),
                    rng.random_range(2..6),
                    rng.random_range(2..6),
                );
                let k = rng.random_range(2..4);
                NetworkBuilder::new(s)
                    .conv2d(rng.random_range(1..3), k, rng.random_range(0..2), 1)
                    .avg_pool(2)
            }
        };
        let mut net = b.build_zeroed(lif);
        if net.num_parameters() > 200 {
            continue;
        }
        net.pooling = if rng.random_bool(0.5) {
            PoolingMode::Spiking
        } else {
            PoolingMode::Linear
        };
        for l in net.layers.iter_mut().filter(|l| l.is_learnable()) {
            fill(rng, &mut l.weights, -0.5, 0.9);
            fill(rng, &mut l.bias, -0.1, 0.2);
        }
        return net;
    }
}

/// A random network shaped like the real ones (pool, conv, pool, dense) but
/// tiny, with weights in the range quantization accepts and zero biases.
pub fn random_chip_net(rng: &mut ChaCha8Rng) -> NetworkSpec {
    let tau = [0.2, 0.3, 0.5][rng.random_range(0..3)];
    let lif = LifParams {
        tau,
        ..LifParams::default()
    };
    let side = rng.random_range(4..9);
    let b = match rng.random_range(0..3) {
        0 => NetworkBuilder::new(Shape::new(2, side, side))
            .avg_pool(2)
            .conv2d(rng.random_range(1..4), 3, 1, 1)
            .avg_pool(2)
            .dense(rng.random_range(2..6))
            .dense(2),
        1 => NetworkBuilder::new(Shape::new(2, side, side))
            .conv2d(rng.random_range(1..3), 3, 1, 1)
            .dense(2),
        _ => NetworkBuilder::new(Shape::new(2, side, side))
            .dense(rng.random_range(2..8))
            .dense(2),
    };
    let mut net = b.build_zeroed(lif);
    for l in net.layers.iter_mut().filter(|l| l.is_learnable()) {
        let scale = 2.0 / (l.fan_in() as f64).sqrt();
        fill(rng, &mut l.weights, -0.6 * scale, 1.2 * scale);
    }
    net
}

/// Binary frame bits `[c][y][x]` with spike probability `p`.
pub fn random_frame_bits(rng: &mut ChaCha8Rng, shape: Shape, p: f64) -> Vec<u8> {
    (0..shape.len())
        .map(|_| u8::from(rng.random_bool(p)))
        .collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
