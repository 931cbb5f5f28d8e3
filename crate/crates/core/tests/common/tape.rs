//! Scalar reverse-mode differentiation of the fully unrolled network.
//!
//! Every neuron at every timestep is its own node. A spike node's forward
//! value is the Heaviside step and its local derivative the rectangular
//! surrogate; the reset gate `1 - o` is either a constant (detached) or a
//! node depending on `o`.

use evsnn::snn::{LifParams, NetworkSpec, PoolingMode};

use super::{bias_index, synapses};

#[derive(Default)]
pub struct Tape {
    value: Vec<f64>,
    parents: Vec<Vec<(usize, f64)>>,
}

impl Tape {
    fn push(&mut self, value: f64, parents: Vec<(usize, f64)>) -> usize {
        self.value.push(value);
        self.parents.push(parents);
        self.value.len() - 1
    }

    pub fn constant(&mut self, v: f64) -> usize {
        self.push(v, Vec::new())
    }

    pub fn mul(&mut self, a: usize, b: usize) -> usize {
        let (va, vb) = (self.value[a], self.value[b]);
        self.push(va * vb, vec![(a, vb), (b, va)])
    }

    /// `c + Σ coeff·node`.
    pub fn linear(&mut self, terms: &[(usize, f64)], c: f64) -> usize {
        let v = c + terms.iter().map(|&(n, k)| k * self.value[n]).sum::<f64>();
        self.push(v, terms.to_vec())
    }

    pub fn spike(&mut self, u: usize, lif: &LifParams) -> usize {
        let v = self.value[u];
        let h = if (v - lif.v_th).abs() < lif.a1 / 2.0 {
            1.0 / lif.a1
        } else {
            0.0
        };
        self.push(if v >= lif.v_th { 1.0 } else { 0.0 }, vec![(u, h)])
    }

    pub fn value(&self, n: usize) -> f64 {
        self.value[n]
    }

    pub fn gradient(&self, root: usize) -> Vec<f64> {
        let mut adj = vec![0.0; self.value.len()];
        adj[root] = 1.0;
        for i in (0..=root).rev() {
            let a = adj[i];
            if a == 0.0 {
                continue;
            }
            for &(p, d) in &self.parents[i] {
                adj[p] += a * d;
            }
        }
        adj
    }
}

pub struct OracleResult {
    pub loss: f64,
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<Vec<f64>>,
    /// Membrane potentials `[layer][t][neuron]`.
    pub potentials: Vec<Vec<Vec<f64>>>,
    pub spikes: Vec<Vec<Vec<f64>>>,
}

/// Loss `½‖y - mean_t o_out‖²` and its gradient for every weight and bias.
pub fn oracle(
    net: &NetworkSpec,
    inputs: &[Vec<f64>],
    target: &[f64],
    product_rule: bool,
) -> OracleResult {
    let mut tape = Tape::default();
    let lif = net.lif;
    let w_nodes: Vec<Vec<usize>> = net
        .layers
        .iter()
        .map(|l| l.weights.iter().map(|&w| tape.constant(w)).collect())
        .collect();
    let b_nodes: Vec<Vec<usize>> = net
        .layers
        .iter()
        .map(|l| l.bias.iter().map(|&b| tape.constant(b)).collect())
        .collect();
    let syn: Vec<_> = net.layers.iter().map(synapses).collect();

    let mut state: Vec<Option<(Vec<usize>, Vec<usize>)>> = vec![None; net.layers.len()];
    let mut potentials = vec![Vec::new(); net.layers.len()];
    let mut spikes = vec![Vec::new(); net.layers.len()];
    let mut outputs: Vec<Vec<usize>> = Vec::new();
    for x in inputs {
        let mut prev: Vec<usize> = x.iter().map(|&v| tape.constant(v)).collect();
        for (n, layer) in net.layers.iter().enumerate() {
            let count = layer.num_neurons();
            let mut drive: Vec<Vec<(usize, f64)>> = vec![Vec::new(); count];
            for &(post, pre, wi) in &syn[n] {
                if layer.is_learnable() {
                    let p = tape.mul(w_nodes[n][wi], prev[pre]);
                    drive[post].push((p, 1.0));
                } else {
                    drive[post].push((prev[pre], layer.weights[0]));
                }
            }
            let spiking = layer.is_learnable() || net.pooling == PoolingMode::Spiking;
            let mut us = Vec::with_capacity(count);
            let mut os = Vec::with_capacity(count);
            for (i, mut terms) in drive.into_iter().enumerate() {
                if let Some(bi) = bias_index(layer, i) {
                    terms.push((b_nodes[n][bi], 1.0));
                }
                if !spiking {
                    let v = tape.linear(&terms, 0.0);
                    us.push(v);
                    os.push(v);
                    continue;
                }
                if let Some((u_prev, o_prev)) = &state[n] {
                    let gate = if product_rule {
                        tape.linear(&[(o_prev[i], -1.0)], 1.0)
                    } else {
                        tape.constant(1.0 - tape.value(o_prev[i]))
                    };
                    let kept = tape.mul(u_prev[i], gate);
                    terms.push((kept, lif.tau));
                }
                let u = tape.linear(&terms, 0.0);
                us.push(u);
                os.push(tape.spike(u, &lif));
            }
            potentials[n].push(us.iter().map(|&u| tape.value(u)).collect());
            spikes[n].push(os.iter().map(|&o| tape.value(o)).collect());
            prev = os.clone();
            state[n] = Some((us, os));
        }
        outputs.push(prev);
    }

    let t = inputs.len() as f64;
    let mut sq = Vec::new();
    for (k, &y) in target.iter().enumerate() {
        let terms: Vec<(usize, f64)> = outputs.iter().map(|o| (o[k], -1.0 / t)).collect();
        let diff = tape.linear(&terms, y);
        sq.push((tape.mul(diff, diff), 0.5));
    }
    let loss = tape.linear(&sq, 0.0);
    let adj = tape.gradient(loss);
    OracleResult {
        loss: tape.value(loss),
        weights: net
            .layers
            .iter()
            .zip(&w_nodes)
            .map(|(l, w)| {
                if l.is_learnable() {
                    w.iter().map(|&n| adj[n]).collect()
                } else {
                    Vec::new()
                }
            })
            .collect(),
        bias: b_nodes
            .iter()
            .map(|b| b.iter().map(|&n| adj[n]).collect())
            .collect(),
        potentials,
        spikes,
    }
}

/// True when some potential sits so close to the threshold or to the edge
/// of the surrogate window that summation order could flip a decision.
pub fn near_edge(r: &OracleResult, lif: &LifParams) -> bool {
    r.potentials.iter().flatten().flatten().any(|&u| {
        let d = (u - lif.v_th).abs();
        d < 1e-9 || (d - lif.a1 / 2.0).abs() < 1e-9
    })
}

pub struct CaseOutcome {
    pub max_diff: f64,
    pub loss_diff: f64,
    pub nonzero: bool,
    /// Bit patterns of every gradient the crate produced, for determinism checks.
    pub bits: Vec<u64>,
}

/// Random network, input and label from `seed`; compares the crate's
/// backward pass with the oracle. `None` for knife-edge cases.
pub fn random_case(seed: u64, product_rule: bool) -> Option<CaseOutcome> {
    use evsnn::snn::forward_sequence;
    use evsnn::stbp::{backward, mse_loss, ResetGradient};
    use rand::Rng;

    let mut rng = super::rng(seed);
    let net = super::random_small_net(&mut rng);
    let t = rng.random_range(1..=5);
    let p = rng.random_range(0.2..0.9);
    let inputs: Vec<Vec<f64>> = (0..t)
        .map(|_| super::random_spikes(&mut rng, net.input.len(), p))
        .collect();
    let n_out = net.output_size();
    let target: Vec<f64> = (0..n_out)
        .map(|k| if k == seed as usize % n_out { 1.0 } else { 0.0 })
        .collect();

    let r = oracle(&net, &inputs, &target, product_rule);
    if near_edge(&r, &net.lif) {
        return None;
    }
    let mode = if product_rule {
        ResetGradient::ProductRule
    } else {
        ResetGradient::Detached
    };
    let rec = forward_sequence(&net, &inputs, None).unwrap();
    let g = backward(&net, &rec, &target, mode).unwrap();
    let mut max_diff: f64 = 0.0;
    let mut nonzero = false;
    let mut bits = Vec::new();
    for (n, lg) in g.layers.iter().enumerate() {
        bits.extend(lg.weights.iter().chain(&lg.bias).map(|v| v.to_bits()));
        max_diff = max_diff.max(super::max_abs_diff(&lg.weights, &r.weights[n]));
        max_diff = max_diff.max(super::max_abs_diff(&lg.bias, &r.bias[n]));
        nonzero |= r.weights[n].iter().any(|&v| v != 0.0);
    }
    let loss_diff = (mse_loss(&rec, &target).unwrap() - r.loss).abs();
    Some(CaseOutcome {
        max_diff,
        loss_diff,
        nonzero,
        bits,
    })
}
