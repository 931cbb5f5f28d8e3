//! Compartment and synapse accounting, and first-fit placement of layers onto
//! neurocores.

use serde::{Deserialize, Serialize};

use super::quantize::QuantizedNetwork;
use super::EmuError;
use crate::snn::ops::for_each_synapse;
use crate::snn::{LayerKind, LayerSpec, NetworkSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChipConstraints {
    pub max_compartments_per_core: usize,
    /// Distinct presynaptic neurons feeding one core.
    pub max_fanin_per_core: usize,
    /// Distinct postsynaptic neurons fed by one core.
    pub max_fanout_per_core: usize,
    pub synaptic_mem_per_core: usize,
    pub bytes_per_synapse: usize,
    pub cores_per_chip: usize,
}

impl Default for ChipConstraints {
    fn default() -> Self {
        ChipConstraints {
            max_compartments_per_core: 1024,
            max_fanin_per_core: 4096,
            max_fanout_per_core: 4096,
            synaptic_mem_per_core: 128 * 1024,
            bytes_per_synapse: 1,
            cores_per_chip: 128,
        }
    }
}

impl ChipConstraints {
    pub fn validate(&self) -> Result<(), EmuError> {
        let all = [
            self.max_compartments_per_core,
            self.max_fanin_per_core,
            self.max_fanout_per_core,
            self.synaptic_mem_per_core,
            self.bytes_per_synapse,
            self.cores_per_chip,
        ];
        if all.contains(&0) {
            return Err(EmuError::InvalidParams(
                "chip constraints must be positive".into(),
            ));
        }
        Ok(())
    }

    fn max_synapses(&self) -> usize {
        self.synaptic_mem_per_core / self.bytes_per_synapse
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoreUsage {
    pub core: usize,
    pub layer: usize,
    pub compartments: usize,
    pub synapses: usize,
    pub fan_in: usize,
    pub fan_out: usize,
    pub memory_bytes: usize,
    /// Compartments over the per-core maximum.
    pub utilization: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerUsage {
    pub layer: usize,
    pub kind: LayerKind,
    pub compartments: usize,
    pub synapses: usize,
    pub cores: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingReport {
    pub total_compartments: usize,
    pub total_synapses: usize,
    pub cores_used: usize,
    pub chips: usize,
    pub constraints: ChipConstraints,
    pub layers: Vec<LayerUsage>,
    pub cores: Vec<CoreUsage>,
    pub feasible: bool,
    pub violations: Vec<String>,
}

/// Nominal synapse count per neuron: the full kernel volume, padding included.
pub fn synapses_per_neuron(layer: &LayerSpec) -> usize {
    match layer.kind {
        LayerKind::Dense => layer.in_shape.len(),
        LayerKind::Conv2d => layer.in_shape.channels * layer.kernel * layer.kernel,
        LayerKind::AvgPool => layer.kernel * layer.kernel,
    }
}

/// Compressed adjacency: `targets[offsets[i]..offsets[i + 1]]` for node `i`.
struct Csr {
    offsets: Vec<usize>,
    targets: Vec<u32>,
}

impl Csr {
    fn build(nodes: usize, layer: &LayerSpec, reverse: bool) -> Csr {
        let key = |pre: usize, post: usize| if reverse { pre } else { post };
        let val = |pre: usize, post: usize| if reverse { post } else { pre };
        let mut offsets = vec![0usize; nodes + 1];
        for_each_synapse(layer, |pre, post| offsets[key(pre, post) + 1] += 1);
        for i in 0..nodes {
            offsets[i + 1] += offsets[i];
        }
        let mut fill = offsets.clone();
        let mut targets = vec![0u32; offsets[nodes]];
        for_each_synapse(layer, |pre, post| {
            let k = key(pre, post);
            targets[fill[k]] = val(pre, post) as u32;
            fill[k] += 1;
        });
        Csr { offsets, targets }
    }

    fn of(&self, i: usize) -> &[u32] {
        &self.targets[self.offsets[i]..self.offsets[i + 1]]
    }
}

/// Counts entries of `items` not yet stamped with `mark`; stamps them when
/// `commit` is set.
fn distinct_new(stamp: &mut [u32], items: &[u32], mark: u32, commit: bool) -> usize {
    let mut n = 0;
    for &t in items {
        let s = &mut stamp[t as usize];
        if *s != mark {
            n += 1;
            if commit {
                *s = mark;
            }
        }
    }
    n
}

/// Maps the layers of a float network; only the geometry is used.
pub fn map_network(
    net: &NetworkSpec,
    constraints: &ChipConstraints,
) -> Result<MappingReport, EmuError> {
    net.validate()?;
    map_layers(&net.layers.iter().collect::<Vec<_>>(), constraints)
}

pub fn map_resources(
    qnet: &QuantizedNetwork,
    constraints: &ChipConstraints,
) -> Result<MappingReport, EmuError> {
    qnet.validate()?;
    map_layers(
        &qnet.layers.iter().map(|l| &l.spec).collect::<Vec<_>>(),
        constraints,
    )
}

fn map_layers(layers: &[&LayerSpec], c: &ChipConstraints) -> Result<MappingReport, EmuError> {
    c.validate()?;
    let mut cores = Vec::new();
    let mut usage = Vec::with_capacity(layers.len());
    for (n, layer) in layers.iter().enumerate() {
        let neurons = layer.num_neurons();
        let per = synapses_per_neuron(layer);
        let fanin = Csr::build(neurons, layer, false);
        let fanout = layers
            .get(n + 1)
            .map(|next| Csr::build(next.in_shape.len(), next, true));
        let mut pre_stamp = vec![0u32; layer.in_shape.len()];
        let mut post_stamp = vec![0u32; layers.get(n + 1).map_or(0, |l| l.num_neurons())];

        let first = cores.len();
        let mut open: Option<CoreUsage> = None;
        let mut mark = 0u32;
        let s = layer.out_shape;
        // Neurons are placed position by position, all channels together.
        for p in 0..s.height * s.width {
            for ch in 0..s.channels {
                let i = ch * s.height * s.width + p;
                let ins = fanin.of(i);
                let outs = fanout.as_ref().map_or(&[][..], |f| f.of(i));
                let fits = |core: &CoreUsage, pre: &mut [u32], post: &mut [u32], mark: u32| {
                    core.compartments < c.max_compartments_per_core
                        && core.synapses + per <= c.max_synapses()
                        && core.fan_in + distinct_new(pre, ins, mark, false) <= c.max_fanin_per_core
                        && core.fan_out + distinct_new(post, outs, mark, false)
                            <= c.max_fanout_per_core
                };
                if let Some(core) = &open {
                    if !fits(core, &mut pre_stamp, &mut post_stamp, mark) {
                        cores.push(open.take().unwrap());
                    }
                }
                if open.is_none() {
                    mark += 1;
                    let fresh = CoreUsage {
                        core: cores.len(),
                        layer: n,
                        compartments: 0,
                        synapses: 0,
                        fan_in: 0,
                        fan_out: 0,
                        memory_bytes: 0,
                        utilization: 0.0,
                    };
                    if !fits(&fresh, &mut pre_stamp, &mut post_stamp, mark) {
                        return Err(EmuError::Infeasible(format!(
                            "a single neuron of layer {n} ({}) exceeds the per-core limits",
                            layer.kind.name()
                        )));
                    }
                    open = Some(fresh);
                }
                let core = open.as_mut().unwrap();
                core.compartments += 1;
                core.synapses += per;
                core.fan_in += distinct_new(&mut pre_stamp, ins, mark, true);
                core.fan_out += distinct_new(&mut post_stamp, outs, mark, true);
            }
        }
        cores.extend(open);
        usage.push(LayerUsage {
            layer: n,
            kind: layer.kind,
            compartments: neurons,
            synapses: neurons * per,
            cores: cores.len() - first,
        });
    }
    for core in &mut cores {
        core.memory_bytes = core.synapses * c.bytes_per_synapse;
        core.utilization = core.compartments as f64 / c.max_compartments_per_core as f64;
    }
    let violations = check_cores(&cores, c);
    Ok(MappingReport {
        total_compartments: usage.iter().map(|l| l.compartments).sum(),
        total_synapses: usage.iter().map(|l| l.synapses).sum(),
        cores_used: cores.len(),
        chips: cores.len().div_ceil(c.cores_per_chip),
        constraints: *c,
        layers: usage,
        cores,
        feasible: violations.is_empty(),
        violations,
    })
}

/// Every limit a core breaks, as readable messages.
pub fn check_cores(cores: &[CoreUsage], c: &ChipConstraints) -> Vec<String> {
    let mut v = Vec::new();
    for core in cores {
        let limits = [
            (
                "compartments",
                core.compartments,
                c.max_compartments_per_core,
            ),
            ("fan-in", core.fan_in, c.max_fanin_per_core),
            ("fan-out", core.fan_out, c.max_fanout_per_core),
            (
                "synaptic memory",
                core.synapses * c.bytes_per_synapse,
                c.synaptic_mem_per_core,
            ),
        ];
        for (what, used, max) in limits {
            if used > max {
                v.push(format!("core {}: {what} {used} > {max}", core.core));
            }
        }
    }
    v
}
