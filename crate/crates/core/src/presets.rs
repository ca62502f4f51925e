//! Ready-made genomes: the six-legged reference controller, its two-leg
//! variant for incremental evolution, and a randomized valid-genome
//! generator for round-trip and fuzz tests.

use std::collections::BTreeMap;

use crate::genome::{
    ConnectorRef, EdgeSpec, Genome, LocalKind, LocalNode, ModuleInstance, ModuleRole, ModuleSpec,
    NodeBody, NodeSpec, Position, TransferKind, edge_direction_legal, module_view, validate,
};
use crate::rng::EvoRng;

pub const HEXAPOD_LEGS: [&str; 6] = ["fl", "fr", "ml", "mr", "rl", "rr"];

fn local(
    kind: LocalKind,
    position: Position,
    transfer: TransferKind,
    binding: Option<&str>,
) -> NodeBody {
    NodeBody::Local(LocalNode {
        kind,
        position,
        bias: 0.0,
        transfer,
        binding: binding.map(str::to_owned),
    })
}

/// Leg controller template: shoulder/knee angle sensors plus a foot contact
/// sensor, shoulder/knee motors, and one input/output interface pair. Same
/// shape as the reference six-legged controller's leg module; starts with no
/// synapses. Nodes sit on the left side (x > 0); right legs are mirrored
/// instances.
pub fn leg_module() -> ModuleSpec {
    let mut m = ModuleSpec::new("leg");
    m.nodes = vec![
        NodeSpec {
            label: "s_shoulder".into(),
            body: local(
                LocalKind::Sensor,
                [0.5, 0.1, 0.3],
                TransferKind::Id,
                Some("shoulder_angle"),
            ),
        },
        NodeSpec {
            label: "s_knee".into(),
            body: local(
                LocalKind::Sensor,
                [0.5, -0.1, 0.3],
                TransferKind::Id,
                Some("knee_angle"),
            ),
        },
        NodeSpec {
            label: "s_contact".into(),
            body: local(
                LocalKind::Sensor,
                [0.5, 0.0, 0.0],
                TransferKind::Id,
                Some("foot_contact"),
            ),
        },
        NodeSpec {
            label: "a_shoulder".into(),
            body: local(
                LocalKind::Actuator,
                [0.5, 0.1, 0.2],
                TransferKind::Tanh,
                Some("shoulder_motor"),
            ),
        },
        NodeSpec {
            label: "a_knee".into(),
            body: local(
                LocalKind::Actuator,
                [0.5, -0.1, 0.2],
                TransferKind::Tanh,
                Some("knee_motor"),
            ),
        },
        NodeSpec {
            label: "in0".into(),
            body: local(LocalKind::Input, [0.5, 0.0, 0.45], TransferKind::Tanh, None),
        },
        NodeSpec {
            label: "out0".into(),
            body: local(LocalKind::Output, [0.5, 0.0, 0.55], TransferKind::Tanh, None),
        },
    ];
    m.normalize();
    m
}

fn leg_instance(leg: &str) -> ModuleInstance {
    let mirrored = leg.ends_with('r');
    let bindings: BTreeMap<String, String> = [
        ("shoulder_angle", format!("{leg}_shoulder_angle")),
        ("knee_angle", format!("{leg}_knee_angle")),
        ("foot_contact", format!("{leg}_foot_contact")),
        ("shoulder_motor", format!("{leg}_shoulder_motor")),
        ("knee_motor", format!("{leg}_knee_motor")),
    ]
    .into_iter()
    .map(|(a, b)| (a.to_string(), b))
    .collect();
    ModuleInstance {
        template: "leg".into(),
        name: format!("leg_{leg}"),
        mirror: mirrored,
        bindings,
    }
}

/// Coordination module for the given legs: per leg one connector into the
/// leg's input node and one from its output node. No synapses yet.
pub fn cpg_module(legs: &[&str]) -> ModuleSpec {
    let mut m = ModuleSpec::new("cpg");
    m.role = ModuleRole::Cpg;
    for leg in legs {
        m.nodes.push(NodeSpec {
            label: format!("c_{leg}_in"),
            body: NodeBody::Connector(ConnectorRef {
                module: format!("leg_{leg}"),
                node: "in0".into(),
            }),
        });
        m.nodes.push(NodeSpec {
            label: format!("c_{leg}_out"),
            body: NodeBody::Connector(ConnectorRef {
                module: format!("leg_{leg}"),
                node: "out0".into(),
            }),
        });
    }
    m.normalize();
    m
}

/// Six-legged walking controller: one evolvable leg template instantiated
/// for all six legs (right side mirrored) plus a pure-connector cpg.
pub fn hexapod_genome() -> Genome {
    let mut g = Genome {
        modules: vec![leg_module(), cpg_module(&HEXAPOD_LEGS)],
        instances: HEXAPOD_LEGS.iter().map(|leg| leg_instance(leg)).collect(),
        metadata: BTreeMap::new(),
    };
    g.metadata.insert("name".into(), "hexapod".into());
    g.normalize();
    validate(&g).expect("reference genome is valid");
    g
}

/// Self-driven pattern generator seed: one actuator on channel `osc` plus
/// two hidden nodes, no synapses. Evolution has to grow the oscillator.
pub fn oscillator_genome() -> Genome {
    let mut m = ModuleSpec::new("osc");
    m.nodes = vec![
        NodeSpec {
            label: "a0".into(),
            body: local(LocalKind::Actuator, [0.0, 0.0, 0.0], TransferKind::Tanh, Some("osc")),
        },
        NodeSpec {
            label: "n0".into(),
            body: local(LocalKind::Hidden, [0.1, 0.0, 0.0], TransferKind::Tanh, None),
        },
        NodeSpec {
            label: "n1".into(),
            body: local(LocalKind::Hidden, [0.0, 0.1, 0.0], TransferKind::Tanh, None),
        },
    ];
    m.normalize();
    let mut g = Genome {
        modules: vec![m],
        ..Default::default()
    };
    g.metadata.insert("name".into(), "oscillator".into());
    validate(&g).expect("reference genome is valid");
    g
}

/// Two-leg variant used as the first stage of incremental evolution: one
/// leg pair (right side mirrored) and its own cpg.
pub fn leg_pair_genome(left: &str, right: &str) -> Genome {
    let mut g = Genome {
        modules: vec![leg_module(), cpg_module(&[left, right])],
        instances: vec![leg_instance(left), leg_instance(right)],
        metadata: BTreeMap::new(),
    };
    g.metadata
        .insert("name".into(), format!("pair_{left}_{right}"));
    g.normalize();
    validate(&g).expect("reference genome is valid");
    g
}

const TRANSFERS: [TransferKind; 3] = [TransferKind::Id, TransferKind::Sigm, TransferKind::Tanh];

fn random_position(rng: &mut EvoRng) -> Position {
    [rng.symmetric(2.0), rng.symmetric(2.0), rng.symmetric(2.0)]
}

/// Generate a random genome satisfying every invariant: a few modules with
/// mixed node kinds, legal random edges, optional mirrored instances with
/// unique channel maps, a connector module wired to live interface nodes,
/// and metadata that exercises XML escaping.
pub fn random_genome(rng: &mut EvoRng) -> Genome {
    let module_count = 1 + rng.index(3);
    let mut genome = Genome::default();

    for m in 0..module_count {
        let mut module = ModuleSpec::new(format!("m{m}"));
        module.evolvable = rng.u() < 0.8;
        let node_count = 1 + rng.index(7);
        for n in 0..node_count {
            let kind = [
                LocalKind::Sensor,
                LocalKind::Actuator,
                LocalKind::Hidden,
                LocalKind::Input,
                LocalKind::Output,
            ][rng.index(5)];
            let binding = kind.is_bound().then(|| format!("ch_m{m}_{n}"));
            module.nodes.push(NodeSpec {
                label: format!("n{n}"),
                body: NodeBody::Local(LocalNode {
                    kind,
                    position: random_position(rng),
                    bias: rng.symmetric(1.0),
                    transfer: TRANSFERS[rng.index(3)],
                    binding,
                }),
            });
        }
        module.normalize();
        genome.modules.push(module);
    }

    // explicit instances for some modules; channels prefixed by instance
    for m in 0..module_count {
        if rng.u() < 0.5 {
            let copies = 1 + rng.index(2);
            for c in 0..copies {
                let template = &genome.modules[m];
                let name = format!("i{m}_{c}");
                let bindings = template
                    .binding_channels()
                    .into_iter()
                    .map(|ch| {
                        let concrete = format!("{name}_{ch}");
                        (ch, concrete)
                    })
                    .collect();
                genome.instances.push(ModuleInstance {
                    template: template.name.clone(),
                    name,
                    mirror: rng.u() < 0.5,
                    bindings,
                });
            }
        }
    }

    // sometimes a coordination module referencing live interface nodes
    if rng.u() < 0.7 {
        let mut targets = Vec::new();
        for inst in genome.live_instances() {
            let template = genome.module(&inst.template).expect("template exists");
            for node in &template.nodes {
                if let Some(local) = node.local()
                    && matches!(local.kind, LocalKind::Input | LocalKind::Output)
                {
                    targets.push((inst.name.clone(), node.label.clone()));
                }
            }
        }
        if !targets.is_empty() {
            let mut coord = ModuleSpec::new("coord");
            coord.role = ModuleRole::Cpg;
            let picks = 1 + rng.index(targets.len().min(4));
            for (i, index) in rng
                .sample_indices(targets.len(), picks)
                .into_iter()
                .enumerate()
            {
                let (module, node) = targets[index].clone();
                coord.nodes.push(NodeSpec {
                    label: format!("c{i}"),
                    body: NodeBody::Connector(ConnectorRef { module, node }),
                });
            }
            if rng.u() < 0.5 {
                coord.nodes.push(NodeSpec {
                    label: "hub".into(),
                    body: NodeBody::Local(LocalNode {
                        kind: LocalKind::Hidden,
                        position: random_position(rng),
                        bias: rng.symmetric(1.0),
                        transfer: TRANSFERS[rng.index(3)],
                        binding: None,
                    }),
                });
            }
            coord.normalize();
            genome.modules.push(coord);
        }
    }

    // random legal edges per module
    for index in 0..genome.modules.len() {
        let view = module_view(&genome, &genome.modules[index]).expect("consistent genome");
        let labels: Vec<String> = genome.modules[index]
            .nodes
            .iter()
            .map(|n| n.label.clone())
            .collect();
        let mut edges = Vec::new();
        for source in &labels {
            for target in &labels {
                let (Some(s), Some(t)) = (view.kind(source), view.kind(target)) else {
                    continue;
                };
                if edge_direction_legal(s, t) && rng.u() < 0.25 {
                    edges.push(EdgeSpec {
                        source: source.clone(),
                        target: target.clone(),
                        weight: rng.symmetric(5.0),
                    });
                }
            }
        }
        genome.modules[index].edges = edges;
        genome.modules[index].normalize();
    }

    genome
        .metadata
        .insert("name".into(), format!("fuzz_{}", rng.index(1000)));
    if rng.u() < 0.5 {
        // exercise attribute escaping in the round trip
        genome
            .metadata
            .insert("note".into(), "a<b & \"c\" > d".into());
    }
    genome.normalize();
    validate(&genome).expect("generator must produce valid genomes");
    genome
}
