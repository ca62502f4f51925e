//! Genome merging for incremental evolution: independently evolved part
//! genomes are combined into one, with their coordination (`cpg`-role)
//! modules unioned into a single module so that later evolution can grow
//! synapses across the former part boundaries.

use std::collections::{BTreeMap, BTreeSet};

use super::{Genome, GenomeError, ModuleRole, ModuleSpec, NodeBody, validate};

fn part_name(genome: &Genome, index: usize) -> String {
    genome
        .metadata
        .get("name")
        .cloned()
        .unwrap_or_else(|| format!("p{index}"))
}

/// Concrete environment channels claimed by a genome's live instances.
fn claimed_channels(genome: &Genome) -> BTreeSet<String> {
    genome
        .live_instances()
        .iter()
        .flat_map(|inst| inst.bindings.values().cloned())
        .collect()
}

/// Merge part genomes into one.
///
/// Plain modules and instances are concatenated (module names must be unique
/// across parts). All `cpg`-role modules are unioned into a single module
/// named after the first one; on node-label collision the later node is
/// prefixed with its source genome's name and every connector reference is
/// rewritten to follow. A single part is returned unchanged.
pub fn merge_genomes(parts: &[Genome]) -> Result<Genome, GenomeError> {
    let Some(first) = parts.first() else {
        return Err(GenomeError::Merge("no genomes to merge".into()));
    };
    if parts.len() == 1 {
        return Ok(first.clone());
    }

    // binding channels across parts must be disjoint
    let mut channel_owner: BTreeMap<String, String> = BTreeMap::new();
    for (i, part) in parts.iter().enumerate() {
        let name = part_name(part, i);
        for channel in claimed_channels(part) {
            if let Some(owner) = channel_owner.get(&channel) {
                return Err(GenomeError::BindingCollision {
                    channel,
                    first: owner.clone(),
                    second: name,
                });
            }
            channel_owner.insert(channel, name.clone());
        }
    }

    let mut merged = Genome {
        metadata: first.metadata.clone(),
        ..Default::default()
    };
    let mut cpg: Option<ModuleSpec> = None;

    for (i, part) in parts.iter().enumerate() {
        let name = part_name(part, i);

        // union this part's cpg modules first, recording how its node labels
        // map into the merged module ((old module name, old label) -> label)
        let union_start = cpg.as_ref().map_or(0, |m| m.nodes.len());
        let mut relabeled: BTreeMap<(String, String), String> = BTreeMap::new();
        let mut cpg_names: BTreeSet<String> = BTreeSet::new();
        for module in part.modules.iter().filter(|m| m.role == ModuleRole::Cpg) {
            cpg_names.insert(module.name.clone());
            if part
                .instances
                .iter()
                .any(|inst| inst.template == module.name)
            {
                return Err(GenomeError::Merge(format!(
                    "cpg module `{}` in `{name}` has explicit instances; \
                     unioned modules must be singletons",
                    module.name
                )));
            }
            let target = cpg.get_or_insert_with(|| ModuleSpec {
                name: module.name.clone(),
                role: ModuleRole::Cpg,
                evolvable: false,
                nodes: Vec::new(),
                edges: Vec::new(),
            });
            // coordination stays evolvable if any part kept it evolvable
            target.evolvable |= module.evolvable;
            for node in &module.nodes {
                let mut label = node.label.clone();
                if target.node(&label).is_some() {
                    label = format!("{name}:{label}");
                    if target.node(&label).is_some() {
                        return Err(GenomeError::Merge(format!(
                            "cpg node label `{label}` still collides after prefixing"
                        )));
                    }
                }
                relabeled.insert((module.name.clone(), node.label.clone()), label.clone());
                let mut node = node.clone();
                node.label = label;
                target.nodes.push(node);
            }
            for edge in &module.edges {
                let mut edge = edge.clone();
                edge.source = relabeled[&(module.name.clone(), edge.source)].clone();
                edge.target = relabeled[&(module.name.clone(), edge.target)].clone();
                target.edges.push(edge);
            }
        }

        // references into this part's cpg modules follow the union; they are
        // singletons, so instance name == module name
        let rewrite = |r: &mut super::ConnectorRef| -> Result<(), GenomeError> {
            if !cpg_names.contains(&r.module) {
                return Ok(());
            }
            let key = (r.module.clone(), r.node.clone());
            let label = relabeled.get(&key).ok_or_else(|| {
                GenomeError::Merge(format!(
                    "connector reference `{}/{}` cannot be resolved after merging",
                    r.module, r.node
                ))
            })?;
            r.module = cpg.as_ref().expect("cpg exists for this part").name.clone();
            r.node = label.clone();
            Ok(())
        };

        for module in part.modules.iter().filter(|m| m.role != ModuleRole::Cpg) {
            if merged.module(&module.name).is_some() {
                return Err(GenomeError::Merge(format!(
                    "module `{}` appears in more than one part",
                    module.name
                )));
            }
            let mut module = module.clone();
            for node in &mut module.nodes {
                if let NodeBody::Connector(r) = &mut node.body {
                    rewrite(r)?;
                }
            }
            merged.modules.push(module);
        }
        // the freshly unioned nodes of this part may themselves hold
        // references into the union (cpg-to-cpg links)
        if let Some(target) = &mut cpg {
            let merged_name = target.name.clone();
            for node in &mut target.nodes[union_start..] {
                if let NodeBody::Connector(r) = &mut node.body
                    && cpg_names.contains(&r.module)
                {
                    let key = (r.module.clone(), r.node.clone());
                    if let Some(label) = relabeled.get(&key) {
                        r.node = label.clone();
                    }
                    r.module = merged_name.clone();
                }
            }
        }
        merged.instances.extend(part.instances.iter().cloned());
    }

    if let Some(module) = cpg {
        merged.modules.push(module);
    }

    merged.normalize();
    validate(&merged)?;
    Ok(merged)
}
