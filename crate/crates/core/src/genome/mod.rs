//! Genome data model: modules, typed nodes, intra-module synapses, module
//! instances, and the operations that keep them consistent.
//!
//! A genome never stores a flat network. It stores module *templates* plus
//! *instances* that stamp a template onto concrete sensor/actuator channels
//! (optionally mirrored through the x=0 plane). Modules interact only through
//! interface nodes: `input` and `output` nodes expose connection points, and
//! `connector` nodes in one module reference interface nodes of another.
//! Connectors carry no position, bias or transfer of their own; those are
//! copied from the referenced node when the genome is compiled.

mod merge;
mod xml;

pub use merge::merge_genomes;
pub use xml::{format_real, parse_genome, serialize_genome};

pub(crate) use xml::genome_from_element;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

/// The six node kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeKind {
    Sensor,
    Actuator,
    Hidden,
    Input,
    Output,
    Connector,
}

impl NodeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Sensor => "sensor",
            NodeKind::Actuator => "actuator",
            NodeKind::Hidden => "hidden",
            NodeKind::Input => "input",
            NodeKind::Output => "output",
            NodeKind::Connector => "connector",
        }
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Node kinds that carry their own position/bias/transfer (everything but
/// `connector`). Also the *effective* kind of a connector after resolving
/// its reference: a connector pointing at an `input` node acts as an
/// `output` node of its own module, and vice versa.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LocalKind {
    Sensor,
    Actuator,
    Hidden,
    Input,
    Output,
}

impl LocalKind {
    pub fn as_node_kind(self) -> NodeKind {
        match self {
            LocalKind::Sensor => NodeKind::Sensor,
            LocalKind::Actuator => NodeKind::Actuator,
            LocalKind::Hidden => NodeKind::Hidden,
            LocalKind::Input => NodeKind::Input,
            LocalKind::Output => NodeKind::Output,
        }
    }

    /// Sensor and actuator nodes bind to an environment channel.
    pub fn is_bound(self) -> bool {
        matches!(self, LocalKind::Sensor | LocalKind::Actuator)
    }
}

/// Transfer functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TransferKind {
    /// id(x) = x
    Id,
    /// sigm(x) = 1 / (1 + e^-x), maps into (0, 1)
    Sigm,
    /// tanh(x), maps into (-1, 1)
    Tanh,
}

impl TransferKind {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            TransferKind::Id => x,
            TransferKind::Sigm => 1.0 / (1.0 + (-x).exp()),
            TransferKind::Tanh => x.tanh(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TransferKind::Id => "id",
            TransferKind::Sigm => "sigm",
            TransferKind::Tanh => "tanh",
        }
    }
}

/// Global-frame node position in meters.
pub type Position = [f64; 3];

pub fn distance(a: Position, b: Position) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

pub fn midpoint(a: Position, b: Position) -> Position {
    [
        (a[0] + b[0]) / 2.0,
        (a[1] + b[1]) / 2.0,
        (a[2] + b[2]) / 2.0,
    ]
}

/// A node that lives in its own module (any kind except `connector`).
#[derive(Debug, Clone, PartialEq)]
pub struct LocalNode {
    pub kind: LocalKind,
    pub position: Position,
    pub bias: f64,
    pub transfer: TransferKind,
    /// Sensor/actuator channel name; present exactly for those kinds.
    pub binding: Option<String>,
}

/// Reference held by a connector node: an interface node of another
/// instantiated module.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConnectorRef {
    pub module: String,
    pub node: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeBody {
    Local(LocalNode),
    Connector(ConnectorRef),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeSpec {
    pub label: String,
    pub body: NodeBody,
}

impl NodeSpec {
    pub fn kind(&self) -> NodeKind {
        match &self.body {
            NodeBody::Local(n) => n.kind.as_node_kind(),
            NodeBody::Connector(_) => NodeKind::Connector,
        }
    }

    pub fn local(&self) -> Option<&LocalNode> {
        match &self.body {
            NodeBody::Local(n) => Some(n),
            NodeBody::Connector(_) => None,
        }
    }

    pub fn connector(&self) -> Option<&ConnectorRef> {
        match &self.body {
            NodeBody::Local(_) => None,
            NodeBody::Connector(r) => Some(r),
        }
    }
}

/// Directed intra-module synapse.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeSpec {
    pub source: String,
    pub target: String,
    pub weight: f64,
}

/// Role tag used by genome merging: all `cpg` modules of the merged parts
/// are unioned into a single coordination module.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ModuleRole {
    #[default]
    Plain,
    Cpg,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModuleSpec {
    pub name: String,
    pub role: ModuleRole,
    /// Frozen modules (`evolvable = false`) pass through mutation verbatim.
    pub evolvable: bool,
    pub nodes: Vec<NodeSpec>,
    pub edges: Vec<EdgeSpec>,
}

impl ModuleSpec {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            role: ModuleRole::Plain,
            evolvable: true,
            nodes: Vec::new(),
            edges: Vec::new(),
        }
    }

    pub fn node(&self, label: &str) -> Option<&NodeSpec> {
        self.nodes.iter().find(|n| n.label == label)
    }

    pub fn has_edge(&self, source: &str, target: &str) -> bool {
        self.edges
            .iter()
            .any(|e| e.source == source && e.target == target)
    }

    /// Channel names bound by this module's sensor/actuator nodes.
    pub fn binding_channels(&self) -> BTreeSet<String> {
        self.nodes
            .iter()
            .filter_map(|n| n.local().and_then(|l| l.binding.clone()))
            .collect()
    }

    /// Sort nodes by label and edges by (source, target). Serialization and
    /// mutation both rely on this canonical order.
    pub fn normalize(&mut self) {
        self.nodes.sort_by(|a, b| a.label.cmp(&b.label));
        self.edges
            .sort_by(|a, b| (a.source.as_str(), a.target.as_str()).cmp(&(&b.source, &b.target)));
    }
}

/// Stamp of a module template onto concrete environment channels.
#[derive(Debug, Clone, PartialEq)]
pub struct ModuleInstance {
    pub template: String,
    pub name: String,
    /// Mirror through the x=0 plane: negates the x coordinate of every node
    /// position in the instantiated copy.
    pub mirror: bool,
    /// Template channel name -> concrete environment channel name.
    pub bindings: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Genome {
    pub modules: Vec<ModuleSpec>,
    pub instances: Vec<ModuleInstance>,
    pub metadata: BTreeMap<String, String>,
}

impl Genome {
    pub fn module(&self, name: &str) -> Option<&ModuleSpec> {
        self.modules.iter().find(|m| m.name == name)
    }

    pub fn module_mut(&mut self, name: &str) -> Option<&mut ModuleSpec> {
        self.modules.iter_mut().find(|m| m.name == name)
    }

    /// Canonical order: modules by name, instances by name, nodes by label,
    /// edges by (source, target).
    pub fn normalize(&mut self) {
        for m in &mut self.modules {
            m.normalize();
        }
        self.modules.sort_by(|a, b| a.name.cmp(&b.name));
        self.instances.sort_by(|a, b| a.name.cmp(&b.name));
    }

    /// Live module names: explicit instances, plus an implicit singleton for
    /// every module that is never instantiated explicitly.
    pub fn live_instances(&self) -> Vec<ModuleInstance> {
        let mut live: Vec<ModuleInstance> = self.instances.clone();
        let instantiated: BTreeSet<&str> =
            self.instances.iter().map(|i| i.template.as_str()).collect();
        for m in &self.modules {
            if !instantiated.contains(m.name.as_str()) {
                live.push(ModuleInstance {
                    template: m.name.clone(),
                    name: m.name.clone(),
                    mirror: false,
                    bindings: m
                        .binding_channels()
                        .into_iter()
                        .map(|c| (c.clone(), c))
                        .collect(),
                });
            }
        }
        live
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GenomeError {
    #[error("malformed XML: {0}")]
    Xml(String),
    #[error("unknown node kind `{kind}` on node `{node}` in module `{module}`")]
    UnknownKind {
        module: String,
        node: String,
        kind: String,
    },
    #[error("unknown transfer `{transfer}` on node `{node}` in module `{module}`")]
    UnknownTransfer {
        module: String,
        node: String,
        transfer: String,
    },
    #[error("duplicate node label `{label}` in module `{module}`")]
    DuplicateLabel { module: String, label: String },
    #[error("duplicate module name `{0}`")]
    DuplicateModule(String),
    #[error("duplicate instance name `{0}`")]
    DuplicateInstance(String),
    #[error("dangling edge endpoint `{missing}` on edge {from}->{to} in module `{module}`")]
    DanglingEdge {
        module: String,
        from: String,
        to: String,
        missing: String,
    },
    #[error("illegal incoming edge on {kind} node `{target}` in module `{module}`")]
    IllegalEdgeTarget {
        module: String,
        target: String,
        kind: NodeKind,
    },
    #[error("illegal outgoing edge on output node `{node}` in module `{module}`")]
    IllegalEdgeSource { module: String, node: String },
    #[error(
        "connector `{node}` in module `{module}` references missing node \
         `{ref_module}/{ref_node}`"
    )]
    UnresolvedConnector {
        module: String,
        node: String,
        ref_module: String,
        ref_node: String,
    },
    #[error(
        "connector `{node}` in module `{module}` must reference an input or output node, \
         but `{ref_module}/{ref_node}` is a {kind} node"
    )]
    ConnectorKind {
        module: String,
        node: String,
        ref_module: String,
        ref_node: String,
        kind: NodeKind,
    },
    #[error("node `{node}` in module `{module}` {problem}")]
    BindingRule {
        module: String,
        node: String,
        problem: String,
    },
    #[error("instance `{instance}` references missing template `{template}`")]
    MissingTemplate { instance: String, template: String },
    #[error("instance `{instance}` of `{template}`: {problem}")]
    BindingMap {
        instance: String,
        template: String,
        problem: String,
    },
    #[error("binding channel `{channel}` bound by both `{first}` and `{second}`")]
    BindingCollision {
        channel: String,
        first: String,
        second: String,
    },
    #[error("merge conflict: {0}")]
    Merge(String),
    #[error("non-finite value in {context}")]
    NonFinite { context: String },
}

/// Effective-kind and position view of one module, with connector nodes
/// resolved against the rest of the genome. Mutation operators and the edge
/// legality rules work on this view.
#[derive(Debug, Clone, Default)]
pub struct ModuleView {
    pub kinds: BTreeMap<String, LocalKind>,
    pub positions: BTreeMap<String, Position>,
}

impl ModuleView {
    pub fn kind(&self, label: &str) -> Option<LocalKind> {
        self.kinds.get(label).copied()
    }

    pub fn position(&self, label: &str) -> Option<Position> {
        self.positions.get(label).copied()
    }
}

/// May `source -> target` exist inside a module? Sensor and input nodes only
/// send, output nodes only receive.
pub fn edge_direction_legal(source: LocalKind, target: LocalKind) -> bool {
    source != LocalKind::Output && !matches!(target, LocalKind::Sensor | LocalKind::Input)
}

fn mirror_position(p: Position, mirror: bool) -> Position {
    if mirror { [-p[0], p[1], p[2]] } else { p }
}

/// Resolve the effective kind and position of every node of `module`,
/// following connector references through the genome's live instances.
pub fn module_view(genome: &Genome, module: &ModuleSpec) -> Result<ModuleView, GenomeError> {
    let live = genome.live_instances();
    let mut view = ModuleView::default();
    for node in &module.nodes {
        match &node.body {
            NodeBody::Local(local) => {
                view.kinds.insert(node.label.clone(), local.kind);
                view.positions.insert(node.label.clone(), local.position);
            }
            NodeBody::Connector(r) => {
                let unresolved = || GenomeError::UnresolvedConnector {
                    module: module.name.clone(),
                    node: node.label.clone(),
                    ref_module: r.module.clone(),
                    ref_node: r.node.clone(),
                };
                let inst = live
                    .iter()
                    .find(|i| i.name == r.module)
                    .ok_or_else(unresolved)?;
                let template = genome.module(&inst.template).ok_or_else(unresolved)?;
                let referenced = template.node(&r.node).ok_or_else(unresolved)?;
                let local = referenced.local().ok_or_else(unresolved)?;
                // A connector to an input node becomes an output node of its
                // own module, and the other way around.
                let effective = match local.kind {
                    LocalKind::Input => LocalKind::Output,
                    LocalKind::Output => LocalKind::Input,
                    other => {
                        return Err(GenomeError::ConnectorKind {
                            module: module.name.clone(),
                            node: node.label.clone(),
                            ref_module: r.module.clone(),
                            ref_node: r.node.clone(),
                            kind: other.as_node_kind(),
                        });
                    }
                };
                view.kinds.insert(node.label.clone(), effective);
                view.positions.insert(
                    node.label.clone(),
                    mirror_position(local.position, inst.mirror),
                );
            }
        }
    }
    Ok(view)
}

fn validate_module_shallow(module: &ModuleSpec) -> Result<(), GenomeError> {
    let mut seen = BTreeSet::new();
    for node in &module.nodes {
        if !seen.insert(node.label.as_str()) {
            return Err(GenomeError::DuplicateLabel {
                module: module.name.clone(),
                label: node.label.clone(),
            });
        }
        if let Some(local) = node.local() {
            match (local.kind.is_bound(), &local.binding) {
                (true, None) => {
                    return Err(GenomeError::BindingRule {
                        module: module.name.clone(),
                        node: node.label.clone(),
                        problem: format!("is a {} node and requires a binding", local.kind.as_node_kind()),
                    });
                }
                (false, Some(_)) => {
                    return Err(GenomeError::BindingRule {
                        module: module.name.clone(),
                        node: node.label.clone(),
                        problem: format!(
                            "is a {} node and must not carry a binding",
                            local.kind.as_node_kind()
                        ),
                    });
                }
                _ => {}
            }
            if !local.position.iter().all(|v| v.is_finite()) || !local.bias.is_finite() {
                return Err(GenomeError::NonFinite {
                    context: format!("node `{}` in module `{}`", node.label, module.name),
                });
            }
        }
    }
    for edge in &module.edges {
        for label in [&edge.source, &edge.target] {
            if module.node(label).is_none() {
                return Err(GenomeError::DanglingEdge {
                    module: module.name.clone(),
                    from: edge.source.clone(),
                    to: edge.target.clone(),
                    missing: label.clone(),
                });
            }
        }
        if !edge.weight.is_finite() {
            return Err(GenomeError::NonFinite {
                context: format!(
                    "edge {}->{} in module `{}`",
                    edge.source, edge.target, module.name
                ),
            });
        }
    }
    Ok(())
}

fn validate_module_edges(module: &ModuleSpec, view: &ModuleView) -> Result<(), GenomeError> {
    for edge in &module.edges {
        let src = view.kind(&edge.source).expect("endpoint checked");
        let dst = view.kind(&edge.target).expect("endpoint checked");
        if matches!(dst, LocalKind::Sensor | LocalKind::Input) {
            return Err(GenomeError::IllegalEdgeTarget {
                module: module.name.clone(),
                target: edge.target.clone(),
                kind: module.node(&edge.target).expect("endpoint checked").kind(),
            });
        }
        if src == LocalKind::Output {
            return Err(GenomeError::IllegalEdgeSource {
                module: module.name.clone(),
                node: edge.source.clone(),
            });
        }
    }
    Ok(())
}

/// Check every genome invariant: unique names, binding rules, edge legality
/// (with connector kinds resolved), instance binding maps, connector
/// resolution.
pub fn validate(genome: &Genome) -> Result<(), GenomeError> {
    let mut names = BTreeSet::new();
    for m in &genome.modules {
        if !names.insert(m.name.as_str()) {
            return Err(GenomeError::DuplicateModule(m.name.clone()));
        }
        validate_module_shallow(m)?;
    }

    let mut instance_names = BTreeSet::new();
    for inst in genome.live_instances() {
        if !instance_names.insert(inst.name.clone()) {
            return Err(GenomeError::DuplicateInstance(inst.name));
        }
    }

    for inst in &genome.instances {
        let template =
            genome
                .module(&inst.template)
                .ok_or_else(|| GenomeError::MissingTemplate {
                    instance: inst.name.clone(),
                    template: inst.template.clone(),
                })?;
        let wanted = template.binding_channels();
        let got: BTreeSet<String> = inst.bindings.keys().cloned().collect();
        if let Some(missing) = wanted.difference(&got).next() {
            return Err(GenomeError::BindingMap {
                instance: inst.name.clone(),
                template: inst.template.clone(),
                problem: format!("missing binding for channel `{missing}`"),
            });
        }
        if let Some(extra) = got.difference(&wanted).next() {
            return Err(GenomeError::BindingMap {
                instance: inst.name.clone(),
                template: inst.template.clone(),
                problem: format!("binds unknown channel `{extra}`"),
            });
        }
    }

    for m in &genome.modules {
        let view = module_view(genome, m)?;
        validate_module_edges(m, &view)?;
    }
    Ok(())
}

/// A module template stamped onto its instance: labels prefixed with the
/// instance name, bindings made concrete, positions mirrored if requested.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedModule {
    pub name: String,
    pub template: String,
    pub role: ModuleRole,
    pub evolvable: bool,
    pub nodes: Vec<ResolvedNode>,
    pub edges: Vec<EdgeSpec>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedNode {
    /// Prefixed, genome-unique label (`instance:template-label`).
    pub label: String,
    /// Label inside the template, used to resolve connector references.
    pub template_label: String,
    pub body: NodeBody,
}

/// Stamp every live instance of the genome. Order: explicit instances in
/// genome order, then implicit singletons in module order.
pub fn instantiate(genome: &Genome) -> Result<Vec<ResolvedModule>, GenomeError> {
    let mut out = Vec::new();
    for inst in genome.live_instances() {
        let template =
            genome
                .module(&inst.template)
                .ok_or_else(|| GenomeError::MissingTemplate {
                    instance: inst.name.clone(),
                    template: inst.template.clone(),
                })?;
        let wanted = template.binding_channels();
        let mut nodes = Vec::with_capacity(template.nodes.len());
        for node in &template.nodes {
            let body = match &node.body {
                NodeBody::Local(local) => {
                    let binding = match &local.binding {
                        Some(channel) => Some(
                            inst.bindings
                                .get(channel)
                                .cloned()
                                .ok_or_else(|| GenomeError::BindingMap {
                                    instance: inst.name.clone(),
                                    template: inst.template.clone(),
                                    problem: format!("missing binding for channel `{channel}`"),
                                })?,
                        ),
                        None => None,
                    };
                    NodeBody::Local(LocalNode {
                        kind: local.kind,
                        position: mirror_position(local.position, inst.mirror),
                        bias: local.bias,
                        transfer: local.transfer,
                        binding,
                    })
                }
                NodeBody::Connector(r) => NodeBody::Connector(r.clone()),
            };
            nodes.push(ResolvedNode {
                label: format!("{}:{}", inst.name, node.label),
                template_label: node.label.clone(),
                body,
            });
        }
        let _ = wanted;
        let edges = template
            .edges
            .iter()
            .map(|e| EdgeSpec {
                source: format!("{}:{}", inst.name, e.source),
                target: format!("{}:{}", inst.name, e.target),
                weight: e.weight,
            })
            .collect();
        out.push(ResolvedModule {
            name: inst.name.clone(),
            template: inst.template.clone(),
            role: template.role,
            evolvable: template.evolvable,
            nodes,
            edges,
        });
    }
    Ok(out)
}

/// Node counts feeding the search-space dimension formulas.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DimensionCounts {
    pub sensors: u64,
    pub actuators: u64,
    pub inputs: u64,
    pub outputs: u64,
    pub hidden: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DimensionMode {
    /// Leg-style module with sensors, actuators and interface nodes.
    ModularLeg,
    /// Pure coordination module made of connector nodes.
    ModularCpg,
    /// Flat network where synapses may connect any two neurons (interface
    /// node pairs replaced by single hidden nodes).
    Unrestricted,
}

/// Maximal number of free synaptic weights for the given configuration.
pub fn dimension(counts: DimensionCounts, mode: DimensionMode) -> u64 {
    let DimensionCounts {
        sensors: ns,
        actuators: na,
        inputs: ni,
        outputs: no,
        hidden: nh,
    } = counts;
    match mode {
        DimensionMode::ModularLeg => {
            ns * (no + na) + ni * (ni + na) + no * (ni + na) + na * (no + na)
        }
        DimensionMode::ModularCpg => ni * no + no * ni,
        DimensionMode::Unrestricted => ns * (nh + na) + nh * (nh + na) + na * (nh + na),
    }
}

/// Effective-kind node counts for one module (connectors counted under the
/// interface kind they act as).
pub fn module_counts(genome: &Genome, module: &ModuleSpec) -> Result<DimensionCounts, GenomeError> {
    let view = module_view(genome, module)?;
    let mut counts = DimensionCounts::default();
    for kind in view.kinds.values() {
        match kind {
            LocalKind::Sensor => counts.sensors += 1,
            LocalKind::Actuator => counts.actuators += 1,
            LocalKind::Hidden => counts.hidden += 1,
            LocalKind::Input => counts.inputs += 1,
            LocalKind::Output => counts.outputs += 1,
        }
    }
    Ok(counts)
}

/// Per-module search-space dimension: coordination modules (role `cpg` or
/// all-connector) use the CPG formula, everything else the leg formula.
pub fn module_dimension(genome: &Genome, module: &ModuleSpec) -> Result<u64, GenomeError> {
    let counts = module_counts(genome, module)?;
    let all_connectors =
        !module.nodes.is_empty() && module.nodes.iter().all(|n| n.connector().is_some());
    let mode = if module.role == ModuleRole::Cpg || all_connectors {
        DimensionMode::ModularCpg
    } else {
        DimensionMode::ModularLeg
    };
    Ok(dimension(counts, mode))
}
