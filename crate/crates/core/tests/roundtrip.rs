//! Round-trip and legality-closure checks over randomized valid genomes.

use modnev_core::genome::{
    edge_direction_legal, instantiate, parse_genome, serialize_genome, validate,
};
use modnev_core::mutation::{EdgeAddMode, MutationParams, mutate_genome};
use modnev_core::presets::random_genome;
use modnev_core::rng::EvoRng;

#[test]
fn serialize_parse_serialize_is_a_fixpoint() {
    let root = EvoRng::from_seed(2024);
    for i in 0..300 {
        let mut rng = root.substream("roundtrip", i);
        let genome = random_genome(&mut rng);
        let first = serialize_genome(&genome);
        let reparsed = parse_genome(&first).unwrap_or_else(|e| panic!("case {i}: {e}\n{first}"));
        assert_eq!(reparsed, genome, "case {i}: structural mismatch");
        let second = serialize_genome(&reparsed);
        assert_eq!(first, second, "case {i}: bytes changed on the second pass");
    }
}

#[test]
fn instancing_preserves_edge_legality() {
    let root = EvoRng::from_seed(55);
    for i in 0..100 {
        let mut rng = root.substream("inst", i);
        let genome = random_genome(&mut rng);
        for module in instantiate(&genome).unwrap() {
            // resolved modules still satisfy the direction rules for their
            // local nodes (connectors resolve through the genome view)
            for edge in &module.edges {
                let kind_of = |label: &str| {
                    module
                        .nodes
                        .iter()
                        .find(|n| n.label == *label)
                        .and_then(|n| match &n.body {
                            modnev_core::genome::NodeBody::Local(l) => Some(l.kind),
                            modnev_core::genome::NodeBody::Connector(_) => None,
                        })
                };
                if let (Some(src), Some(dst)) = (kind_of(&edge.source), kind_of(&edge.target)) {
                    assert!(
                        edge_direction_legal(src, dst),
                        "illegal edge {}->{} after instancing",
                        edge.source,
                        edge.target
                    );
                }
            }
        }
    }
}

#[test]
fn mutation_closure_keeps_genomes_valid() {
    let root = EvoRng::from_seed(77);
    for i in 0..60 {
        let mut rng = root.substream("fuzz", i);
        let mut genome = random_genome(&mut rng);
        let params = MutationParams {
            edge_add: rng.u(),
            edge_add_mode: if rng.u() < 0.5 {
                EdgeAddMode::Uniform
            } else {
                EdgeAddMode::Distance
            },
            edge_del: rng.u(),
            edge_mod: rng.u(),
            node_add: rng.u(),
            node_del: rng.u(),
            node_mod: rng.u(),
            ..Default::default()
        };
        for round in 0..5 {
            genome = mutate_genome(&genome, &params, &mut rng);
            validate(&genome)
                .unwrap_or_else(|e| panic!("case {i} round {round}: mutated genome invalid: {e}"));
        }
        // weights and biases stay inside the clamps
        for module in &genome.modules {
            for edge in &module.edges {
                assert!(edge.weight.abs() <= params.edge_max);
            }
        }
    }
}

#[test]
fn mutated_hidden_nodes_can_receive_synapses_in_the_same_pass() {
    // a module whose only edge gets split must end up with the new hidden
    // node visible to the same pass's synapse insertion
    let genome = {
        use modnev_core::genome::*;
        let mut m = ModuleSpec::new("m");
        m.nodes = vec![
            NodeSpec {
                label: "s".into(),
                body: NodeBody::Local(LocalNode {
                    kind: LocalKind::Sensor,
                    position: [0.0; 3],
                    bias: 0.0,
                    transfer: TransferKind::Id,
                    binding: Some("s".into()),
                }),
            },
            NodeSpec {
                label: "a".into(),
                body: NodeBody::Local(LocalNode {
                    kind: LocalKind::Actuator,
                    position: [1.0, 0.0, 0.0],
                    bias: 0.0,
                    transfer: TransferKind::Tanh,
                    binding: Some("a".into()),
                }),
            },
        ];
        m.edges = vec![EdgeSpec {
            source: "s".into(),
            target: "a".into(),
            weight: 0.5,
        }];
        m.normalize();
        Genome {
            modules: vec![m],
            ..Default::default()
        }
    };
    let params = MutationParams {
        node_add: 1.0,
        edge_add: 1.0,
        ..Default::default()
    };
    let mut rng = EvoRng::from_seed(9);
    let mutated = mutate_genome(&genome, &params, &mut rng);
    validate(&mutated).unwrap();
    let module = &mutated.modules[0];
    let hidden = module.node("h0").expect("split inserted h0");
    assert_eq!(hidden.kind(), modnev_core::genome::NodeKind::Hidden);
    // with edge_add = 1 every legal missing pair was inserted, including
    // pairs touching the fresh node
    assert!(module.edges.iter().any(|e| e.source == "h0" && e.target == "h0"));
}

#[test]
fn view_positions_follow_mirrored_instances() {
    // a connector's position must be the mirrored one when the referenced
    // instance is mirrored
    use modnev_core::genome::*;
    use std::collections::BTreeMap;
    let mut worker = ModuleSpec::new("worker");
    worker.nodes = vec![NodeSpec {
        label: "in0".into(),
        body: NodeBody::Local(LocalNode {
            kind: LocalKind::Input,
            position: [2.0, 1.0, 0.0],
            bias: 0.0,
            transfer: TransferKind::Tanh,
            binding: None,
        }),
    }];
    let mut coord = ModuleSpec::new("coord");
    coord.role = ModuleRole::Cpg;
    coord.nodes = vec![NodeSpec {
        label: "c0".into(),
        body: NodeBody::Connector(ConnectorRef {
            module: "w1".into(),
            node: "in0".into(),
        }),
    }];
    let genome = Genome {
        modules: vec![worker, coord],
        instances: vec![ModuleInstance {
            template: "worker".into(),
            name: "w1".into(),
            mirror: true,
            bindings: BTreeMap::new(),
        }],
        metadata: BTreeMap::new(),
    };
    validate(&genome).unwrap();
    let view = module_view(&genome, genome.module("coord").unwrap()).unwrap();
    assert_eq!(view.position("c0"), Some([-2.0, 1.0, 0.0]));
}
