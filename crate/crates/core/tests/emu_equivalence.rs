mod common;

use common::chip::{chip_case, compare_with_rational};
use evsnn::emu::{
    decay, equivalence_check, map_network, quantize, ChipConstraints, DecayRounding, Protocol,
    QuantizeConfig, DECAY_ONE,
};
use evsnn::snn::{LayerKind, NetworkBuilder, Shape, Variant};
use proptest::prelude::*;

#[test]
fn emulator_matches_rational_reference() {
    let mut total_spikes = 0;
    for seed in 0..12 {
        let case = chip_case(seed, 12);
        let run = compare_with_rational(&case, Protocol::default())
            .unwrap_or_else(|e| panic!("seed {seed}: {e}"));
        assert_eq!(run.steps, 12 * 17);
        total_spikes += run.spikes;
    }
    assert!(total_spikes > 1000, "networks barely spike: {total_spikes}");
}

#[test]
fn float_shadow_agrees_with_chip() {
    for seed in 100..110 {
        let case = chip_case(seed, 8);
        let r = equivalence_check(
            &case.net,
            &case.qnet,
            &case.frames,
            Protocol::default(),
            None,
        )
        .unwrap();
        assert!(r.equivalent, "seed {seed}: {:?}", r.divergences.first());
        assert!(r.compared_spikes > 0);
    }
}

#[test]
fn wrong_voltage_decay_is_detected() {
    let mut diverged = 0;
    for seed in 200..210 {
        let mut case = chip_case(seed, 8);
        case.qnet.params.delta_v = (case.qnet.params.delta_v + 1200) % 4096;
        let r = equivalence_check(
            &case.net,
            &case.qnet,
            &case.frames,
            Protocol::default(),
            None,
        )
        .unwrap();
        diverged += usize::from(!r.equivalent);
    }
    assert!(diverged >= 5, "only {diverged} of 10 caught");
}

#[test]
fn full128_mapping_totals() {
    let net = Variant::Full128.builder().build_zeroed(Default::default());
    let report = map_network(&net, &ChipConstraints::default()).unwrap();
    assert!(report.feasible);
    let mut compartments = 0;
    let mut synapses = 0;
    for l in &net.layers {
        let o = l.out_shape;
        let per = match l.kind {
            LayerKind::Dense => l.in_shape.len(),
            LayerKind::Conv2d => l.in_shape.channels * l.kernel * l.kernel,
            LayerKind::AvgPool => l.kernel * l.kernel,
        };
        compartments += o.len();
        synapses += o.len() * per;
    }
    assert_eq!(report.total_compartments, compartments);
    assert_eq!(report.total_synapses, synapses);
    assert_eq!(
        report.cores.iter().map(|c| c.compartments).sum::<usize>(),
        compartments
    );
}

proptest! {
    #[test]
    fn decay_is_monotone_and_contracting(a in -1_000_000i64..1_000_000, b in -1_000_000i64..1_000_000,
                                         delta in 0i64..=4096, floor in any::<bool>()) {
        let r = if floor { DecayRounding::Floor } else { DecayRounding::TowardZero };
        let (lo, hi) = (a.min(b), a.max(b));
        prop_assert!(decay(lo, delta, r) <= decay(hi, delta, r));
        prop_assert!(decay(a, delta, r).abs() <= a.abs());
        prop_assert_eq!(decay(a, 0, r), a);
        prop_assert_eq!(decay(a, DECAY_ONE, r), 0);
    }

    #[test]
    fn quantization_error_is_half_a_step(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let net = common::random_chip_net(&mut rng);
        let cfg = QuantizeConfig::default();
        let q = quantize(&net, &cfg).unwrap();
        for (l, ql) in net.layers.iter().zip(&q.layers) {
            if !l.is_learnable() {
                continue;
            }
            let err = common::max_abs_diff(&l.weights, &ql.spec.weights);
            prop_assert!(err <= 0.5 / cfg.scale + 1e-12, "err {}", err);
            prop_assert!(ql.mantissas.iter().all(|&m| ql.grid.contains(m)));
        }
    }

    #[test]
    fn every_core_respects_limits(width in 8usize..64, hidden in 1usize..600, compartments in 64usize..1024) {
        let net = NetworkBuilder::new(Shape::new(2, width, width))
            .avg_pool(2)
            .conv2d(4, 3, 1, 1)
            .dense(hidden)
            .dense(2)
            .build_zeroed(Default::default());
        let c = ChipConstraints { max_compartments_per_core: compartments, ..Default::default() };
        if let Ok(r) = map_network(&net, &c) {
            prop_assert!(r.feasible);
            for core in &r.cores {
                prop_assert!(core.compartments <= c.max_compartments_per_core);
                prop_assert!(core.fan_in <= c.max_fanin_per_core);
                prop_assert!(core.fan_out <= c.max_fanout_per_core);
                prop_assert!(core.memory_bytes <= c.synaptic_mem_per_core);
            }
            prop_assert_eq!(r.cores.iter().map(|c| c.compartments).sum::<usize>(), r.total_compartments);
        }
    }
}
