//! Compilation of genomes into flat synchronous discrete-time recurrent
//! networks, and their execution.
//!
//! Compilation stamps every live instance, then unifies each connector node
//! with the interface node it references, so connectors never appear in the
//! compiled graph. Execution uses the additive neuron model with a strict
//! two-phase update: all activations `a(t+1) = bias + sum(w * o(t))` are
//! computed from the previous outputs before any output `o(t+1) = tau(a(t+1))`
//! is written, so the result cannot depend on node evaluation order.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::genome::{Genome, GenomeError, LocalKind, NodeBody, TransferKind, instantiate, validate};

#[derive(Debug, Error)]
pub enum CompileError {
    #[error(transparent)]
    Genome(#[from] GenomeError),
    #[error("duplicate {kind} binding channel `{channel}`")]
    DuplicateChannel { kind: &'static str, channel: String },
}

#[derive(Debug, Error)]
pub enum StepError {
    #[error("missing sensor channel `{0}`")]
    MissingSensor(String),
    #[error("non-finite value on sensor channel `{0}`")]
    NonFiniteSensor(String),
    #[error("state has {state} entries but the network has {nodes} nodes")]
    StateSize { state: usize, nodes: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompiledNode {
    /// Genome-unique label of the underlying node (`instance:label`).
    pub label: String,
    pub kind: LocalKind,
    pub bias: f64,
    pub transfer: TransferKind,
    /// Environment channel for sensor/actuator nodes.
    pub channel: Option<String>,
}

/// Flat executable network. Immutable once compiled; share it freely and
/// give every concurrent evaluation its own [`NetworkState`].
#[derive(Debug, Clone)]
pub struct CompiledNetwork {
    nodes: Vec<CompiledNode>,
    /// Incoming synapses per node as (source label, source index, weight),
    /// sorted by (source label, weight bits). Sorting by label keeps
    /// summation order independent of module/instance declaration order, so
    /// equal genomes produce bit-identical output streams.
    incoming: Vec<Vec<(usize, f64)>>,
    edge_count: usize,
    sensors: BTreeMap<String, usize>,
    actuators: BTreeMap<String, usize>,
}

/// Activations and outputs of every node at one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub activations: Vec<f64>,
    pub outputs: Vec<f64>,
    pub step: u64,
}

impl CompiledNetwork {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn nodes(&self) -> &[CompiledNode] {
        &self.nodes
    }

    pub fn sensor_channels(&self) -> impl Iterator<Item = &str> {
        self.sensors.keys().map(String::as_str)
    }

    pub fn actuator_channels(&self) -> impl Iterator<Item = &str> {
        self.actuators.keys().map(String::as_str)
    }

    /// Fresh all-zero state at t = 0.
    pub fn initial_state(&self) -> NetworkState {
        NetworkState {
            activations: vec![0.0; self.nodes.len()],
            outputs: vec![0.0; self.nodes.len()],
            step: 0,
        }
    }

    /// Advance the network one step.
    ///
    /// Sensor nodes take their channel value as output directly (bias and
    /// transfer ignored); every other node sums weighted outputs of the
    /// previous step. `sensors` must cover all sensor channels; extra
    /// entries are ignored.
    pub fn step(
        &self,
        state: &NetworkState,
        sensors: &BTreeMap<String, f64>,
    ) -> Result<NetworkState, StepError> {
        self.step_in_order(state, sensors, None)
    }

    /// As [`step`](Self::step), but computing activations in the given node
    /// order. Exposed as a verification hook: the two-phase update makes the
    /// result bit-identical for every permutation of `0..node_count()`.
    pub fn step_in_order(
        &self,
        state: &NetworkState,
        sensors: &BTreeMap<String, f64>,
        order: Option<&[usize]>,
    ) -> Result<NetworkState, StepError> {
        if state.outputs.len() != self.nodes.len() {
            return Err(StepError::StateSize {
                state: state.outputs.len(),
                nodes: self.nodes.len(),
            });
        }
        let mut next = NetworkState {
            activations: vec![0.0; self.nodes.len()],
            outputs: vec![0.0; self.nodes.len()],
            step: state.step + 1,
        };
        let indices: Vec<usize> = match order {
            Some(o) => o.to_vec(),
            None => (0..self.nodes.len()).collect(),
        };
        for &i in &indices {
            let node = &self.nodes[i];
            if node.kind == LocalKind::Sensor {
                let channel = node.channel.as_deref().expect("sensor has channel");
                let value = *sensors
                    .get(channel)
                    .ok_or_else(|| StepError::MissingSensor(channel.to_string()))?;
                if !value.is_finite() {
                    return Err(StepError::NonFiniteSensor(channel.to_string()));
                }
                next.activations[i] = value;
                next.outputs[i] = value;
            } else {
                let mut a = node.bias;
                for &(src, w) in &self.incoming[i] {
                    a += w * state.outputs[src];
                }
                next.activations[i] = a;
                next.outputs[i] = node.transfer.apply(a);
            }
        }
        Ok(next)
    }

    /// Outputs of all actuator nodes, keyed by channel.
    pub fn read_actuators(&self, state: &NetworkState) -> BTreeMap<String, f64> {
        self.actuators
            .iter()
            .map(|(channel, &i)| (channel.clone(), state.outputs[i]))
            .collect()
    }

    pub fn sensor_index(&self, channel: &str) -> Option<usize> {
        self.sensors.get(channel).copied()
    }

    pub fn actuator_index(&self, channel: &str) -> Option<usize> {
        self.actuators.get(channel).copied()
    }
}

/// Compile a genome: instantiate, unify connectors with their referenced
/// interface nodes, assign indices (instance order, then node label order)
/// and build the channel maps.
pub fn compile(genome: &Genome) -> Result<CompiledNetwork, CompileError> {
    validate(genome)?;
    let resolved = instantiate(genome)?;

    let mut nodes = Vec::new();
    let mut index_of: BTreeMap<String, usize> = BTreeMap::new();
    let mut sensors = BTreeMap::new();
    let mut actuators = BTreeMap::new();

    // first pass: every non-connector node becomes a compiled node
    for module in &resolved {
        let mut ordered: Vec<_> = module.nodes.iter().collect();
        ordered.sort_by(|a, b| a.label.cmp(&b.label));
        for node in ordered {
            if let NodeBody::Local(local) = &node.body {
                let index = nodes.len();
                index_of.insert(node.label.clone(), index);
                if let Some(channel) = &local.binding {
                    let map = match local.kind {
                        LocalKind::Sensor => &mut sensors,
                        LocalKind::Actuator => &mut actuators,
                        _ => unreachable!("binding validated"),
                    };
                    if map.insert(channel.clone(), index).is_some() {
                        return Err(CompileError::DuplicateChannel {
                            kind: if local.kind == LocalKind::Sensor {
                                "sensor"
                            } else {
                                "actuator"
                            },
                            channel: channel.clone(),
                        });
                    }
                }
                nodes.push(CompiledNode {
                    label: node.label.clone(),
                    kind: local.kind,
                    bias: local.bias,
                    transfer: local.transfer,
                    channel: local.binding.clone(),
                });
            }
        }
    }

    // second pass: connector labels alias the referenced node's index
    for module in &resolved {
        for node in &module.nodes {
            if let NodeBody::Connector(r) = &node.body {
                let referenced = format!("{}:{}", r.module, r.node);
                let index =
                    *index_of
                        .get(&referenced)
                        .ok_or_else(|| GenomeError::UnresolvedConnector {
                            module: module.name.clone(),
                            node: node.template_label.clone(),
                            ref_module: r.module.clone(),
                            ref_node: r.node.clone(),
                        })?;
                index_of.insert(node.label.clone(), index);
            }
        }
    }

    // edges; endpoint labels already carry the instance prefix
    let mut incoming: Vec<Vec<(String, usize, f64)>> = vec![Vec::new(); nodes.len()];
    let mut edge_count = 0;
    for module in &resolved {
        for edge in &module.edges {
            let src = index_of[edge.source.as_str()];
            let dst = index_of[edge.target.as_str()];
            incoming[dst].push((nodes[src].label.clone(), src, edge.weight));
            edge_count += 1;
        }
    }
    let incoming = incoming
        .into_iter()
        .map(|mut list| {
            list.sort_by(|a, b| (a.0.as_str(), a.2.to_bits()).cmp(&(b.0.as_str(), b.2.to_bits())));
            list.into_iter().map(|(_, src, w)| (src, w)).collect()
        })
        .collect();

    Ok(CompiledNetwork {
        nodes,
        incoming,
        edge_count,
        sensors,
        actuators,
    })
}
