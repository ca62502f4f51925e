//! Behavioral properties of compiled networks on randomized genomes.

use std::collections::BTreeMap;

use modnev_core::genome::{TransferKind, parse_genome, serialize_genome};
use modnev_core::network::{CompiledNetwork, compile};
use modnev_core::presets::random_genome;
use modnev_core::rng::EvoRng;

fn zero_sensors(net: &CompiledNetwork) -> BTreeMap<String, f64> {
    net.sensor_channels()
        .map(|c| (c.to_string(), 0.0))
        .collect()
}

fn random_sensors(net: &CompiledNetwork, rng: &mut EvoRng) -> BTreeMap<String, f64> {
    net.sensor_channels()
        .map(|c| (c.to_string(), rng.symmetric(2.0)))
        .collect()
}

#[test]
fn transfer_ranges_hold_over_long_runs() {
    let root = EvoRng::from_seed(404);
    for i in 0..30 {
        let mut rng = root.substream("net", i);
        let genome = random_genome(&mut rng);
        let net = compile(&genome).unwrap();
        let sensors = zero_sensors(&net);
        let mut state = net.initial_state();
        for _ in 0..1000 {
            state = net.step(&state, &sensors).unwrap();
        }
        // the open bounds of sigm/tanh close under f64 rounding once the
        // activation saturates, so the assertable range is the closed one
        for (node, output) in net.nodes().iter().zip(&state.outputs) {
            match node.transfer {
                TransferKind::Sigm if node.kind != modnev_core::genome::LocalKind::Sensor => {
                    assert!((0.0..=1.0).contains(output), "sigm out of range: {output}");
                }
                TransferKind::Tanh if node.kind != modnev_core::genome::LocalKind::Sensor => {
                    assert!((-1.0..=1.0).contains(output), "tanh out of range: {output}");
                }
                _ => assert!(output.is_finite() || node.transfer == TransferKind::Id),
            }
        }
    }
}

#[test]
fn identical_inputs_give_bit_identical_streams() {
    let root = EvoRng::from_seed(405);
    let genome = random_genome(&mut root.substream("net", 0));
    let net = compile(&genome).unwrap();
    let mut sensor_rng_a = root.substream("sensors", 0);
    let mut sensor_rng_b = root.substream("sensors", 0);
    let mut a = net.initial_state();
    let mut b = net.initial_state();
    for _ in 0..200 {
        a = net.step(&a, &random_sensors(&net, &mut sensor_rng_a)).unwrap();
        b = net.step(&b, &random_sensors(&net, &mut sensor_rng_b)).unwrap();
        for (x, y) in a.outputs.iter().zip(&b.outputs) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }
}

#[test]
fn round_tripped_genomes_compile_to_equivalent_networks() {
    let root = EvoRng::from_seed(406);
    for i in 0..25 {
        let mut rng = root.substream("net", i);
        let genome = random_genome(&mut rng);
        let copy = parse_genome(&serialize_genome(&genome)).unwrap();
        let net_a = compile(&genome).unwrap();
        let net_b = compile(&copy).unwrap();

        let mut stream_rng = root.substream("stream", i);
        let mut a = net_a.initial_state();
        let mut b = net_b.initial_state();
        for _ in 0..100 {
            let sensors = random_sensors(&net_a, &mut stream_rng);
            a = net_a.step(&a, &sensors).unwrap();
            b = net_b.step(&b, &sensors).unwrap();
            let out_a = net_a.read_actuators(&a);
            let out_b = net_b.read_actuators(&b);
            assert_eq!(out_a.len(), out_b.len());
            for (channel, value) in &out_a {
                assert_eq!(
                    value.to_bits(),
                    out_b[channel].to_bits(),
                    "case {i}: channel {channel} diverged"
                );
            }
        }
    }
}

#[test]
fn evaluation_order_permutations_leave_outputs_unchanged() {
    let root = EvoRng::from_seed(407);
    for i in 0..50 {
        let mut rng = root.substream("net", i);
        let genome = random_genome(&mut rng);
        let net = compile(&genome).unwrap();
        if net.node_count() == 0 {
            continue;
        }
        let mut state = net.initial_state();
        let mut order_rng = root.substream("order", i);
        for _ in 0..20 {
            let sensors = random_sensors(&net, &mut order_rng);
            let forward = net.step(&state, &sensors).unwrap();
            let order = order_rng.sample_indices(net.node_count(), net.node_count());
            let permuted = net.step_in_order(&state, &sensors, Some(&order)).unwrap();
            assert_eq!(forward, permuted, "case {i}: order changed the result");
            state = forward;
        }
    }
}
