//! Genome XML persistence.
//!
//! The writer is deterministic: modules sorted by name, nodes by label,
//! edges by (source, target), instances by name, metadata by key, reals with
//! 17 significant digits. Any valid genome therefore has exactly one
//! serialized form, which makes checkpoints content-addressable and lets
//! round-trip tests compare bytes.

use std::collections::BTreeMap;

use super::{
    ConnectorRef, EdgeSpec, Genome, GenomeError, LocalKind, LocalNode, ModuleInstance, ModuleRole,
    ModuleSpec, NodeBody, NodeSpec, TransferKind, validate,
};

fn escape(value: &str, out: &mut String) {
    for ch in value.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            _ => out.push(ch),
        }
    }
}

fn push_attr(out: &mut String, name: &str, value: &str) {
    out.push(' ');
    out.push_str(name);
    out.push_str("=\"");
    escape(value, out);
    out.push('"');
}

/// 17 significant digits; enough to reproduce any f64 bit pattern.
pub fn format_real(v: f64) -> String {
    let v = if v == 0.0 { 0.0 } else { v };
    format!("{v:.16e}")
}

use format_real as fmt_real;

fn push_real(out: &mut String, name: &str, value: f64) {
    push_attr(out, name, &fmt_real(value));
}

/// Render a genome to its canonical XML form.
///
/// The genome must satisfy the type invariants; ordering is normalized here
/// without mutating the input.
pub fn serialize_genome(genome: &Genome) -> String {
    let mut g = genome.clone();
    g.normalize();

    let mut out = String::new();
    out.push_str("<nmode version=\"1\">\n");
    for module in &g.modules {
        out.push_str("  <module");
        push_attr(&mut out, "name", &module.name);
        push_attr(&mut out, "evolvable", if module.evolvable { "true" } else { "false" });
        if module.role == ModuleRole::Cpg {
            push_attr(&mut out, "role", "cpg");
        }
        out.push_str(">\n");
        for node in &module.nodes {
            out.push_str("    <node");
            push_attr(&mut out, "label", &node.label);
            match &node.body {
                NodeBody::Local(local) => {
                    push_attr(&mut out, "kind", local.kind.as_node_kind().as_str());
                    push_real(&mut out, "x", local.position[0]);
                    push_real(&mut out, "y", local.position[1]);
                    push_real(&mut out, "z", local.position[2]);
                    push_real(&mut out, "bias", local.bias);
                    push_attr(&mut out, "transfer", local.transfer.as_str());
                    if let Some(binding) = &local.binding {
                        push_attr(&mut out, "binding", binding);
                    }
                }
                NodeBody::Connector(r) => {
                    push_attr(&mut out, "kind", "connector");
                    push_attr(&mut out, "ref-module", &r.module);
                    push_attr(&mut out, "ref-node", &r.node);
                }
            }
            out.push_str("/>\n");
        }
        for edge in &module.edges {
            out.push_str("    <edge");
            push_attr(&mut out, "source", &edge.source);
            push_attr(&mut out, "target", &edge.target);
            push_real(&mut out, "weight", edge.weight);
            out.push_str("/>\n");
        }
        out.push_str("  </module>\n");
    }
    for inst in &g.instances {
        out.push_str("  <instance");
        push_attr(&mut out, "template", &inst.template);
        push_attr(&mut out, "name", &inst.name);
        push_attr(&mut out, "mirror", if inst.mirror { "true" } else { "false" });
        if inst.bindings.is_empty() {
            out.push_str("/>\n");
        } else {
            out.push_str(">\n");
            for (from, to) in &inst.bindings {
                out.push_str("    <bind");
                push_attr(&mut out, "from", from);
                push_attr(&mut out, "to", to);
                out.push_str("/>\n");
            }
            out.push_str("  </instance>\n");
        }
    }
    for (key, value) in &g.metadata {
        out.push_str("  <meta");
        push_attr(&mut out, "key", key);
        push_attr(&mut out, "value", value);
        out.push_str("/>\n");
    }
    out.push_str("</nmode>\n");
    out
}

struct Attrs<'a> {
    element: &'static str,
    node: roxmltree::Node<'a, 'a>,
    taken: Vec<&'static str>,
}

impl<'a> Attrs<'a> {
    fn new(element: &'static str, node: roxmltree::Node<'a, 'a>) -> Self {
        Self {
            element,
            node,
            taken: Vec::new(),
        }
    }

    fn get(&mut self, name: &'static str) -> Option<&'a str> {
        self.taken.push(name);
        self.node.attribute(name)
    }

    fn require(&mut self, name: &'static str) -> Result<&'a str, GenomeError> {
        self.get(name).ok_or_else(|| {
            GenomeError::Xml(format!(
                "<{}> is missing required attribute `{name}`",
                self.element
            ))
        })
    }

    /// Reject attributes this element does not define; typos would otherwise
    /// be silently dropped and break the round-trip guarantee.
    fn finish(self) -> Result<(), GenomeError> {
        for attr in self.node.attributes() {
            if !self.taken.contains(&attr.name()) {
                return Err(GenomeError::Xml(format!(
                    "<{}> has unknown attribute `{}`",
                    self.element,
                    attr.name()
                )));
            }
        }
        Ok(())
    }
}

fn parse_real(element: &str, name: &str, raw: &str) -> Result<f64, GenomeError> {
    raw.parse::<f64>()
        .map_err(|_| GenomeError::Xml(format!("<{element}> attribute `{name}`: bad number `{raw}`")))
        .and_then(|v| {
            if v.is_finite() {
                Ok(v)
            } else {
                Err(GenomeError::NonFinite {
                    context: format!("<{element}> attribute `{name}`"),
                })
            }
        })
}

fn parse_bool(element: &str, name: &str, raw: &str) -> Result<bool, GenomeError> {
    match raw {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(GenomeError::Xml(format!(
            "<{element}> attribute `{name}`: expected true/false, got `{other}`"
        ))),
    }
}

fn parse_node(module: &str, xml: roxmltree::Node<'_, '_>) -> Result<NodeSpec, GenomeError> {
    let mut attrs = Attrs::new("node", xml);
    let label = attrs.require("label")?.to_string();
    let kind = attrs.require("kind")?;
    let body = match kind {
        "connector" => {
            let r = ConnectorRef {
                module: attrs.require("ref-module")?.to_string(),
                node: attrs.require("ref-node")?.to_string(),
            };
            NodeBody::Connector(r)
        }
        other => {
            let kind = match other {
                "sensor" => LocalKind::Sensor,
                "actuator" => LocalKind::Actuator,
                "hidden" => LocalKind::Hidden,
                "input" => LocalKind::Input,
                "output" => LocalKind::Output,
                unknown => {
                    return Err(GenomeError::UnknownKind {
                        module: module.to_string(),
                        node: label,
                        kind: unknown.to_string(),
                    });
                }
            };
            let position = [
                parse_real("node", "x", attrs.require("x")?)?,
                parse_real("node", "y", attrs.require("y")?)?,
                parse_real("node", "z", attrs.require("z")?)?,
            ];
            let bias = parse_real("node", "bias", attrs.require("bias")?)?;
            let transfer = match attrs.require("transfer")? {
                "id" => TransferKind::Id,
                "sigm" => TransferKind::Sigm,
                "tanh" => TransferKind::Tanh,
                unknown => {
                    return Err(GenomeError::UnknownTransfer {
                        module: module.to_string(),
                        node: label,
                        transfer: unknown.to_string(),
                    });
                }
            };
            let binding = attrs.get("binding").map(str::to_string);
            NodeBody::Local(LocalNode {
                kind,
                position,
                bias,
                transfer,
                binding,
            })
        }
    };
    attrs.finish()?;
    Ok(NodeSpec { label, body })
}

fn parse_module(xml: roxmltree::Node<'_, '_>) -> Result<ModuleSpec, GenomeError> {
    let mut attrs = Attrs::new("module", xml);
    let name = attrs.require("name")?.to_string();
    let evolvable = match attrs.get("evolvable") {
        Some(raw) => parse_bool("module", "evolvable", raw)?,
        None => true,
    };
    let role = match attrs.get("role") {
        Some("cpg") => ModuleRole::Cpg,
        Some(other) => {
            return Err(GenomeError::Xml(format!(
                "<module> attribute `role`: unknown role `{other}`"
            )));
        }
        None => ModuleRole::Plain,
    };
    attrs.finish()?;

    let mut module = ModuleSpec {
        name: name.clone(),
        role,
        evolvable,
        nodes: Vec::new(),
        edges: Vec::new(),
    };
    for child in xml.children().filter(|c| c.is_element()) {
        match child.tag_name().name() {
            "node" => module.nodes.push(parse_node(&name, child)?),
            "edge" => {
                let mut attrs = Attrs::new("edge", child);
                let edge = EdgeSpec {
                    source: attrs.require("source")?.to_string(),
                    target: attrs.require("target")?.to_string(),
                    weight: parse_real("edge", "weight", attrs.require("weight")?)?,
                };
                attrs.finish()?;
                module.edges.push(edge);
            }
            other => {
                return Err(GenomeError::Xml(format!(
                    "unexpected element <{other}> inside <module name=\"{name}\">"
                )));
            }
        }
    }
    Ok(module)
}

fn parse_instance(xml: roxmltree::Node<'_, '_>) -> Result<ModuleInstance, GenomeError> {
    let mut attrs = Attrs::new("instance", xml);
    let template = attrs.require("template")?.to_string();
    let name = attrs.require("name")?.to_string();
    let mirror = match attrs.get("mirror") {
        Some(raw) => parse_bool("instance", "mirror", raw)?,
        None => false,
    };
    attrs.finish()?;

    let mut bindings = BTreeMap::new();
    for child in xml.children().filter(|c| c.is_element()) {
        if child.tag_name().name() != "bind" {
            return Err(GenomeError::Xml(format!(
                "unexpected element <{}> inside <instance name=\"{name}\">",
                child.tag_name().name()
            )));
        }
        let mut attrs = Attrs::new("bind", child);
        let from = attrs.require("from")?.to_string();
        let to = attrs.require("to")?.to_string();
        attrs.finish()?;
        if bindings.insert(from.clone(), to).is_some() {
            return Err(GenomeError::Xml(format!(
                "instance `{name}` binds channel `{from}` twice"
            )));
        }
    }
    Ok(ModuleInstance {
        template,
        name,
        mirror,
        bindings,
    })
}

/// Parse and validate a genome document. The result is normalized, so
/// serializing it again yields canonical bytes.
pub fn parse_genome(text: &str) -> Result<Genome, GenomeError> {
    let doc = roxmltree::Document::parse(text).map_err(|e| GenomeError::Xml(e.to_string()))?;
    genome_from_element(doc.root_element())
}

/// Parse one `<nmode>` element; lets container formats (population
/// checkpoints) embed genomes.
pub(crate) fn genome_from_element(root: roxmltree::Node<'_, '_>) -> Result<Genome, GenomeError> {
    if root.tag_name().name() != "nmode" {
        return Err(GenomeError::Xml(format!(
            "expected root element <nmode>, found <{}>",
            root.tag_name().name()
        )));
    }
    match root.attribute("version") {
        Some("1") => {}
        Some(other) => {
            return Err(GenomeError::Xml(format!(
                "unsupported format version `{other}`"
            )));
        }
        None => return Err(GenomeError::Xml("missing version attribute".into())),
    }

    let mut genome = Genome::default();
    for child in root.children().filter(|c| c.is_element()) {
        match child.tag_name().name() {
            "module" => genome.modules.push(parse_module(child)?),
            "instance" => genome.instances.push(parse_instance(child)?),
            "meta" => {
                let mut attrs = Attrs::new("meta", child);
                let key = attrs.require("key")?.to_string();
                let value = attrs.require("value")?.to_string();
                attrs.finish()?;
                if genome.metadata.insert(key.clone(), value).is_some() {
                    return Err(GenomeError::Xml(format!("duplicate meta key `{key}`")));
                }
            }
            other => {
                return Err(GenomeError::Xml(format!(
                    "unexpected element <{other}> under <nmode>"
                )));
            }
        }
    }
    genome.normalize();
    validate(&genome)?;
    Ok(genome)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
<nmode version="1">
  <module name="m" evolvable="true">
    <node label="s0" kind="sensor" x="0.0" y="0.0" z="0.0" bias="0.0" transfer="id" binding="angle"/>
    <node label="a0" kind="actuator" x="0.1" y="0.0" z="0.0" bias="0.0" transfer="tanh" binding="motor"/>
    <edge source="s0" target="a0" weight="0.5"/>
  </module>
</nmode>
"#;

    #[test]
    fn parse_minimal() {
        let g = parse_genome(MINIMAL).unwrap();
        assert_eq!(g.modules.len(), 1);
        assert_eq!(g.modules[0].nodes.len(), 2);
        assert_eq!(g.modules[0].edges.len(), 1);
    }

    #[test]
    fn serialize_is_fixpoint() {
        let g = parse_genome(MINIMAL).unwrap();
        let first = serialize_genome(&g);
        let reparsed = parse_genome(&first).unwrap();
        assert_eq!(g, reparsed);
        assert_eq!(first, serialize_genome(&reparsed));
    }

    #[test]
    fn empty_genome_serializes() {
        let text = serialize_genome(&Genome::default());
        assert_eq!(text, "<nmode version=\"1\">\n</nmode>\n");
        assert_eq!(parse_genome(&text).unwrap(), Genome::default());
    }

    #[test]
    fn sensor_edge_target_is_reported_with_context() {
        let bad = MINIMAL.replace(
            r#"<edge source="s0" target="a0" weight="0.5"/>"#,
            r#"<edge source="a0" target="s0" weight="0.5"/>"#,
        );
        let err = parse_genome(&bad).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("illegal incoming edge on sensor"), "{msg}");
        assert!(msg.contains("`s0`"), "{msg}");
        assert!(msg.contains("`m`"), "{msg}");
    }

    #[test]
    fn unknown_kind_rejected() {
        let bad = MINIMAL.replace("kind=\"sensor\"", "kind=\"sensory\"");
        assert!(matches!(
            parse_genome(&bad).unwrap_err(),
            GenomeError::UnknownKind { .. }
        ));
    }

    #[test]
    fn unknown_attribute_rejected() {
        let bad = MINIMAL.replace("weight=\"0.5\"", "weight=\"0.5\" wight=\"1\"");
        assert!(matches!(
            parse_genome(&bad).unwrap_err(),
            GenomeError::Xml(_)
        ));
    }

    #[test]
    fn duplicate_label_rejected() {
        let bad = MINIMAL.replace("label=\"a0\"", "label=\"s0\"");
        assert!(matches!(
            parse_genome(&bad).unwrap_err(),
            GenomeError::DuplicateLabel { .. }
        ));
    }

    #[test]
    fn mirror_attribute_round_trips() {
        let doc = r#"
<nmode version="1">
  <module name="m" evolvable="true">
    <node label="s0" kind="sensor" x="1.0" y="0.0" z="0.0" bias="0.0" transfer="id" binding="angle"/>
    <node label="a0" kind="actuator" x="0.1" y="0.0" z="0.0" bias="0.0" transfer="tanh" binding="motor"/>
  </module>
  <instance template="m" name="left" mirror="true">
    <bind from="angle" to="l_angle"/>
    <bind from="motor" to="l_motor"/>
  </instance>
</nmode>
"#;
        let g = parse_genome(doc).unwrap();
        assert!(g.instances[0].mirror);
        let text = serialize_genome(&g);
        assert!(text.contains("mirror=\"true\""));
        assert_eq!(parse_genome(&text).unwrap(), g);
    }

    #[test]
    fn seventeen_digit_reals() {
        assert_eq!(fmt_real(0.5), "5.0000000000000000e-1");
        assert_eq!(fmt_real(0.0), "0.0000000000000000e0");
        assert_eq!(fmt_real(-0.0), "0.0000000000000000e0");
        let v = 0.1 + 0.2;
        let round_tripped: f64 = fmt_real(v).parse().unwrap();
        assert_eq!(v.to_bits(), round_tripped.to_bits());
    }
}
