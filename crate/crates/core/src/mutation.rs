//! Per-module mutation operators.
//!
//! All six operators are pure functions of `(module, view, params, rng)`:
//! they return a new module and never touch the rest of the genome. The
//! `view` carries effective kinds and positions with connector references
//! already resolved, so legality (sensor/input nodes never receive edges,
//! output nodes never send) and node distances are decided locally.
//!
//! Structural operators are deliberately invasive: synapse insertion draws
//! per candidate pair, deletion can remove up to `p * |E|` synapses at once.
//! Neuron insertion and deletion are careful by contrast: at most one
//! neuron per module per mutation, insertion splits an existing synapse.

use thiserror::Error;

use crate::genome::{
    EdgeSpec, Genome, LocalKind, LocalNode, ModuleSpec, ModuleView, NodeBody, NodeSpec,
    TransferKind, distance, edge_direction_legal, midpoint, module_view,
};
use crate::rng::EvoRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EdgeAddMode {
    /// Every legal missing synapse has the same insertion probability.
    #[default]
    Uniform,
    /// Insertion probability scales with 1/distance between the nodes.
    Distance,
}

/// Knobs for all six operators. Defaults are the hexapod batch set.
#[derive(Debug, Clone, PartialEq)]
pub struct MutationParams {
    pub edge_add: f64,
    pub edge_add_mode: EdgeAddMode,
    /// Distances below this are clamped up; self-connections use it directly.
    pub min_distance: f64,
    /// New edges draw their weight uniformly from [-weight_init_max, +weight_init_max].
    pub weight_init_max: f64,
    pub edge_del: f64,
    pub edge_mod: f64,
    pub edge_delta: f64,
    pub edge_max: f64,
    pub node_add: f64,
    pub node_del: f64,
    pub node_mod: f64,
    pub node_delta: f64,
    pub node_max: f64,
}

impl Default for MutationParams {
    fn default() -> Self {
        Self {
            edge_add: 0.05,
            edge_add_mode: EdgeAddMode::Uniform,
            min_distance: 0.1,
            weight_init_max: 1.0,
            edge_del: 0.05,
            edge_mod: 0.2,
            edge_delta: 0.5,
            edge_max: 5.0,
            node_add: 0.0,
            node_del: 0.0,
            node_mod: 0.01,
            node_delta: 0.01,
            node_max: 1.0,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ParamError {
    #[error("{name} must be a probability in [0, 1], got {value}")]
    Probability { name: &'static str, value: f64 },
    #[error("{name} must be positive, got {value}")]
    Bound { name: &'static str, value: f64 },
}

impl MutationParams {
    pub fn validate(&self) -> Result<(), ParamError> {
        let probabilities = [
            ("edge_add", self.edge_add),
            ("edge_del", self.edge_del),
            ("edge_mod", self.edge_mod),
            ("node_add", self.node_add),
            ("node_del", self.node_del),
            ("node_mod", self.node_mod),
        ];
        for (name, value) in probabilities {
            if !(0.0..=1.0).contains(&value) {
                return Err(ParamError::Probability { name, value });
            }
        }
        let bounds = [
            ("min_distance", self.min_distance),
            ("weight_init_max", self.weight_init_max),
            ("edge_delta", self.edge_delta),
            ("edge_max", self.edge_max),
            ("node_delta", self.node_delta),
            ("node_max", self.node_max),
        ];
        for (name, value) in bounds {
            if value <= 0.0 || value.is_nan() || !value.is_finite() {
                return Err(ParamError::Bound { name, value });
            }
        }
        Ok(())
    }
}

fn clamp(value: f64, max_abs: f64) -> f64 {
    value.clamp(-max_abs, max_abs)
}

/// Candidate pairs for insertion: ordered (source, target) label pairs,
/// self-connections included, that are direction-legal and not yet present.
fn missing_legal_pairs<'a>(module: &'a ModuleSpec, view: &ModuleView) -> Vec<(&'a str, &'a str)> {
    let mut labels: Vec<&str> = module.nodes.iter().map(|n| n.label.as_str()).collect();
    labels.sort_unstable();
    let mut pairs = Vec::new();
    for &source in &labels {
        for &target in &labels {
            let (Some(src), Some(dst)) = (view.kind(source), view.kind(target)) else {
                continue;
            };
            if edge_direction_legal(src, dst) && !module.has_edge(source, target) {
                pairs.push((source, target));
            }
        }
    }
    pairs
}

/// Grow synapses over a dis-connectivity matrix: every legal missing pair
/// gets an entry (1 when uniform, 1/distance otherwise), the matrix is
/// normalized so its largest entry is one, and each pair is inserted with
/// probability `edge_add * entry`.
pub fn insert_synapses(
    module: &ModuleSpec,
    view: &ModuleView,
    params: &MutationParams,
    rng: &mut EvoRng,
) -> ModuleSpec {
    let pairs = missing_legal_pairs(module, view);
    if pairs.is_empty() {
        return module.clone();
    }
    let raw: Vec<f64> = pairs
        .iter()
        .map(|&(s, t)| match params.edge_add_mode {
            EdgeAddMode::Uniform => 1.0,
            EdgeAddMode::Distance => {
                let d = distance(
                    view.position(s).expect("viewed node"),
                    view.position(t).expect("viewed node"),
                );
                1.0 / d.max(params.min_distance)
            }
        })
        .collect();
    let largest = raw.iter().cloned().fold(f64::MIN, f64::max);
    let mut out = module.clone();
    for (&(source, target), &d) in pairs.iter().zip(&raw) {
        if rng.u() < params.edge_add * (d / largest) {
            out.edges.push(EdgeSpec {
                source: source.to_string(),
                target: target.to_string(),
                weight: rng.symmetric(params.weight_init_max),
            });
        }
    }
    out.normalize();
    out
}

/// Remove `floor(u * edge_del * |E|)` synapses, drawn without replacement.
pub fn delete_synapses(
    module: &ModuleSpec,
    params: &MutationParams,
    rng: &mut EvoRng,
) -> ModuleSpec {
    let count = (rng.u() * params.edge_del * module.edges.len() as f64).floor() as usize;
    if count == 0 {
        return module.clone();
    }
    let mut doomed = rng.sample_indices(module.edges.len(), count);
    doomed.sort_unstable();
    let mut out = module.clone();
    for index in doomed.into_iter().rev() {
        out.edges.remove(index);
    }
    out
}

/// Perturb each synapse independently with probability `edge_mod`:
/// `w += edge_delta * (2u - 1)`, clamped into [-edge_max, edge_max].
pub fn modify_synapses(
    module: &ModuleSpec,
    params: &MutationParams,
    rng: &mut EvoRng,
) -> ModuleSpec {
    let mut out = module.clone();
    for edge in &mut out.edges {
        if rng.u() < params.edge_mod {
            edge.weight = clamp(edge.weight + rng.symmetric(params.edge_delta), params.edge_max);
        }
    }
    out
}

fn fresh_hidden_label(module: &ModuleSpec) -> String {
    (0..)
        .map(|k| format!("h{k}"))
        .find(|label| module.node(label).is_none())
        .expect("unbounded label space")
}

/// With probability `node_add`, split one synapse with a new hidden node at
/// the midpoint of its endpoints. The incoming synapse gets weight one, the
/// outgoing one keeps the original weight.
pub fn insert_neuron(
    module: &ModuleSpec,
    view: &ModuleView,
    params: &MutationParams,
    rng: &mut EvoRng,
) -> ModuleSpec {
    if rng.u() >= params.node_add || module.edges.is_empty() {
        return module.clone();
    }
    let mut out = module.clone();
    let split = out.edges.remove(rng.index(out.edges.len()));
    let label = fresh_hidden_label(&out);
    let position = midpoint(
        view.position(&split.source).expect("viewed node"),
        view.position(&split.target).expect("viewed node"),
    );
    out.nodes.push(NodeSpec {
        label: label.clone(),
        body: NodeBody::Local(LocalNode {
            kind: LocalKind::Hidden,
            position,
            bias: 0.0,
            transfer: TransferKind::Tanh,
            binding: None,
        }),
    });
    out.edges.push(EdgeSpec {
        source: split.source,
        target: label.clone(),
        weight: 1.0,
    });
    out.edges.push(EdgeSpec {
        source: label,
        target: split.target,
        weight: split.weight,
    });
    out.normalize();
    out
}

/// With probability `node_del`, remove one uniformly drawn hidden node and
/// every synapse touching it. Interface, sensor and actuator nodes are never
/// removed; at most one neuron goes per call.
pub fn delete_neuron(module: &ModuleSpec, params: &MutationParams, rng: &mut EvoRng) -> ModuleSpec {
    let roll = rng.u();
    let hidden: Vec<&str> = module
        .nodes
        .iter()
        .filter(|n| n.local().is_some_and(|l| l.kind == LocalKind::Hidden))
        .map(|n| n.label.as_str())
        .collect();
    if roll >= params.node_del || hidden.is_empty() {
        return module.clone();
    }
    let victim = hidden[rng.index(hidden.len())].to_string();
    let mut out = module.clone();
    out.nodes.retain(|n| n.label != victim);
    out.edges
        .retain(|e| e.source != victim && e.target != victim);
    out
}

/// Perturb the bias of each non-sensor node independently with probability
/// `node_mod`, clamped into [-node_max, node_max]. Connectors carry no bias
/// of their own and are skipped.
pub fn modify_neurons(
    module: &ModuleSpec,
    params: &MutationParams,
    rng: &mut EvoRng,
) -> ModuleSpec {
    let mut out = module.clone();
    for node in &mut out.nodes {
        if let NodeBody::Local(local) = &mut node.body
            && local.kind != LocalKind::Sensor
            && rng.u() < params.node_mod
        {
            local.bias = clamp(local.bias + rng.symmetric(params.node_delta), params.node_max);
        }
    }
    out
}

/// Mutate every evolvable module of the genome, in name order, applying
/// insert_neuron, delete_neuron, insert_synapses, delete_synapses,
/// modify_synapses, modify_neurons in that sequence. Frozen modules pass
/// through untouched and consume no randomness.
pub fn mutate_genome(genome: &Genome, params: &MutationParams, rng: &mut EvoRng) -> Genome {
    let mut out = genome.clone();
    let mut order: Vec<usize> = (0..out.modules.len()).collect();
    order.sort_by(|&a, &b| out.modules[a].name.cmp(&out.modules[b].name));
    for index in order {
        if !out.modules[index].evolvable {
            continue;
        }
        let base = module_view(genome, &genome.modules[index])
            .expect("mutate_genome requires a valid genome");
        let mut module = out.modules[index].clone();
        module = insert_neuron(&module, &base, params, rng);
        module = delete_neuron(&module, params, rng);
        // re-resolve so a freshly split-in hidden node can receive synapses
        // within the same mutation
        let view = refresh_view(&module, &base);
        module = insert_synapses(&module, &view, params, rng);
        module = delete_synapses(&module, params, rng);
        module = modify_synapses(&module, params, rng);
        module = modify_neurons(&module, params, rng);
        out.modules[index] = module;
    }
    out.normalize();
    out
}

/// Rebuild a module view after structural changes: local nodes are read off
/// the module, connector entries (which mutation never adds or removes) are
/// taken from the base view.
fn refresh_view(module: &ModuleSpec, base: &ModuleView) -> ModuleView {
    let mut view = ModuleView::default();
    for node in &module.nodes {
        match &node.body {
            NodeBody::Local(local) => {
                view.kinds.insert(node.label.clone(), local.kind);
                view.positions.insert(node.label.clone(), local.position);
            }
            NodeBody::Connector(_) => {
                if let (Some(kind), Some(position)) =
                    (base.kind(&node.label), base.position(&node.label))
                {
                    view.kinds.insert(node.label.clone(), kind);
                    view.positions.insert(node.label.clone(), position);
                }
            }
        }
    }
    view
}
