//! Run configuration file: one XML document naming the genome template, the
//! environment, and every selection/mutation/population parameter.
//!
//! ```xml
//! <run version="1">
//!   <genome path="hexapod.xml"/>
//!   <population size="50" max-generations="50" seed="42"/>
//!   <selection pressure="0.1" elitism="10.0" crossover="0.1" elite-count="1"/>
//!   <mutation edge-add="0.05" edge-mod="0.2" node-mod="0.01"/>
//!   <evaluation environment="hexapod" lifetime="250">
//!     <param key="stride" value="1.0"/>
//!   </evaluation>
//!   <output dir="out"/>
//! </run>
//! ```
//!
//! Relative paths resolve against the config file's directory. Omitted
//! selection/mutation attributes fall back to the hexapod batch defaults.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use modnev_core::env::EvalConfig;
use modnev_core::evolution::{RunSettings, SelectionConfig};
use modnev_core::mutation::{EdgeAddMode, MutationParams};

use crate::CliError;

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub genome_path: PathBuf,
    pub out_dir: PathBuf,
    pub settings: RunSettings,
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

struct Attrs<'a> {
    element: &'a str,
    node: roxmltree::Node<'a, 'a>,
    taken: Vec<String>,
}

impl<'a> Attrs<'a> {
    fn new(element: &'a str, node: roxmltree::Node<'a, 'a>) -> Self {
        Self {
            element,
            node,
            taken: Vec::new(),
        }
    }

    fn get(&mut self, name: &str) -> Option<&'a str> {
        self.taken.push(name.to_string());
        self.node.attribute(name)
    }

    fn require(&mut self, name: &str) -> Result<&'a str, CliError> {
        self.get(name).ok_or_else(|| {
            config_err(format!(
                "<{}> is missing required attribute (field `{name}`)",
                self.element
            ))
        })
    }

    fn f64(&mut self, name: &str, default: f64) -> Result<f64, CliError> {
        match self.get(name) {
            None => Ok(default),
            Some(raw) => raw.parse::<f64>().map_err(|_| {
                config_err(format!("<{}> field `{name}`: bad number `{raw}`", self.element))
            }),
        }
    }

    fn u64_req(&mut self, name: &str) -> Result<u64, CliError> {
        let raw = self.require(name)?;
        raw.parse::<u64>().map_err(|_| {
            config_err(format!("<{}> field `{name}`: bad integer `{raw}`", self.element))
        })
    }

    fn finish(self) -> Result<(), CliError> {
        for attr in self.node.attributes() {
            if !self.taken.iter().any(|t| t == attr.name()) {
                return Err(config_err(format!(
                    "<{}> has unknown attribute `{}`",
                    self.element,
                    attr.name()
                )));
            }
        }
        Ok(())
    }
}

pub fn load_run_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| config_err(format!("cannot read config `{}`: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_run_config(&text, base)
}

pub fn parse_run_config(text: &str, base: &Path) -> Result<RunConfig, CliError> {
    let doc = roxmltree::Document::parse(text)
        .map_err(|e| config_err(format!("malformed config XML: {e}")))?;
    let root = doc.root_element();
    if root.tag_name().name() != "run" {
        return Err(config_err(format!(
            "expected root element <run>, found <{}>",
            root.tag_name().name()
        )));
    }

    let mut genome_path = None;
    let mut out_dir = PathBuf::from("out");
    let mut population: Option<(usize, u64, u64, Option<f64>)> = None;
    let mut selection = SelectionConfig::default();
    let mut mutation = MutationParams::default();
    let mut eval: Option<EvalConfig> = None;

    for child in root.children().filter(|c| c.is_element()) {
        match child.tag_name().name() {
            "genome" => {
                let mut attrs = Attrs::new("genome", child);
                genome_path = Some(base.join(attrs.require("path")?));
                attrs.finish()?;
            }
            "population" => {
                let mut attrs = Attrs::new("population", child);
                let size = attrs.require("size")?.parse::<usize>().map_err(|_| {
                    config_err("<population> field `size`: not a positive integer")
                })?;
                let generations = attrs.u64_req("max-generations")?;
                let seed = match attrs.get("seed") {
                    None => 0,
                    Some(raw) => raw.parse::<u64>().map_err(|_| {
                        config_err(format!("<population> field `seed`: bad integer `{raw}`"))
                    })?,
                };
                let target = match attrs.get("fitness-target") {
                    None => None,
                    Some(raw) => Some(raw.parse::<f64>().map_err(|_| {
                        config_err(format!(
                            "<population> field `fitness-target`: bad number `{raw}`"
                        ))
                    })?),
                };
                attrs.finish()?;
                population = Some((size, generations, seed, target));
            }
            "selection" => {
                let mut attrs = Attrs::new("selection", child);
                selection.pressure = attrs.f64("pressure", selection.pressure)?;
                selection.elitism = attrs.f64("elitism", selection.elitism)?;
                selection.crossover = attrs.f64("crossover", selection.crossover)?;
                if let Some(raw) = attrs.get("elite-count") {
                    selection.elite_count = raw.parse::<usize>().map_err(|_| {
                        config_err(format!("<selection> field `elite-count`: bad integer `{raw}`"))
                    })?;
                }
                attrs.finish()?;
            }
            "mutation" => {
                let mut attrs = Attrs::new("mutation", child);
                mutation.edge_add = attrs.f64("edge-add", mutation.edge_add)?;
                mutation.edge_add_mode = match attrs.get("edge-add-mode") {
                    None | Some("uniform") => EdgeAddMode::Uniform,
                    Some("distance") => EdgeAddMode::Distance,
                    Some(other) => {
                        return Err(config_err(format!(
                            "<mutation> field `edge-add-mode`: expected uniform|distance, got `{other}`"
                        )));
                    }
                };
                mutation.min_distance = attrs.f64("min-distance", mutation.min_distance)?;
                mutation.weight_init_max = attrs.f64("weight-init-max", mutation.weight_init_max)?;
                mutation.edge_del = attrs.f64("edge-del", mutation.edge_del)?;
                mutation.edge_mod = attrs.f64("edge-mod", mutation.edge_mod)?;
                mutation.edge_delta = attrs.f64("edge-delta", mutation.edge_delta)?;
                mutation.edge_max = attrs.f64("edge-max", mutation.edge_max)?;
                mutation.node_add = attrs.f64("node-add", mutation.node_add)?;
                mutation.node_del = attrs.f64("node-del", mutation.node_del)?;
                mutation.node_mod = attrs.f64("node-mod", mutation.node_mod)?;
                mutation.node_delta = attrs.f64("node-delta", mutation.node_delta)?;
                mutation.node_max = attrs.f64("node-max", mutation.node_max)?;
                attrs.finish()?;
            }
            "evaluation" => {
                let mut attrs = Attrs::new("evaluation", child);
                let environment = attrs.require("environment")?.to_string();
                let lifetime = attrs.u64_req("lifetime")?;
                attrs.finish()?;
                let mut params = BTreeMap::new();
                for param in child.children().filter(|c| c.is_element()) {
                    if param.tag_name().name() != "param" {
                        return Err(config_err(format!(
                            "unexpected element <{}> inside <evaluation>",
                            param.tag_name().name()
                        )));
                    }
                    let mut attrs = Attrs::new("param", param);
                    let key = attrs.require("key")?.to_string();
                    let value = attrs.require("value")?.to_string();
                    attrs.finish()?;
                    if params.insert(key.clone(), value).is_some() {
                        return Err(config_err(format!("duplicate <param> key `{key}`")));
                    }
                }
                eval = Some(EvalConfig {
                    environment,
                    lifetime,
                    params,
                });
            }
            "output" => {
                let mut attrs = Attrs::new("output", child);
                out_dir = base.join(attrs.require("dir")?);
                attrs.finish()?;
            }
            other => {
                return Err(config_err(format!("unexpected element <{other}> under <run>")));
            }
        }
    }

    let genome_path =
        genome_path.ok_or_else(|| config_err("config is missing <genome path=...>"))?;
    let (population_size, max_generations, seed, fitness_target) = population
        .ok_or_else(|| config_err("config is missing <population size=... max-generations=...>"))?;
    let eval = eval.ok_or_else(|| {
        config_err("config is missing <evaluation environment=... lifetime=...> (field `environment`)")
    })?;

    Ok(RunConfig {
        genome_path,
        out_dir,
        settings: RunSettings {
            population_size,
            max_generations,
            seed,
            fitness_target,
            selection,
            mutation,
            eval,
            jobs: None,
        },
    })
}

/// Render the effective configuration (after command-line overrides) for the
/// provenance dump written next to the run outputs.
pub fn render_run_config(config: &RunConfig) -> String {
    let s = &config.settings;
    let mut out = String::from("<run version=\"1\">\n");
    out.push_str(&format!(
        "  <genome path=\"{}\"/>\n",
        config.genome_path.display()
    ));
    out.push_str(&format!(
        "  <population size=\"{}\" max-generations=\"{}\" seed=\"{}\"{}/>\n",
        s.population_size,
        s.max_generations,
        s.seed,
        s.fitness_target
            .map(|t| format!(" fitness-target=\"{t}\""))
            .unwrap_or_default()
    ));
    out.push_str(&format!(
        "  <selection pressure=\"{}\" elitism=\"{}\" crossover=\"{}\" elite-count=\"{}\"/>\n",
        s.selection.pressure, s.selection.elitism, s.selection.crossover, s.selection.elite_count
    ));
    let m = &s.mutation;
    out.push_str(&format!(
        "  <mutation edge-add=\"{}\" edge-add-mode=\"{}\" min-distance=\"{}\" \
         weight-init-max=\"{}\" edge-del=\"{}\" edge-mod=\"{}\" edge-delta=\"{}\" \
         edge-max=\"{}\" node-add=\"{}\" node-del=\"{}\" node-mod=\"{}\" node-delta=\"{}\" \
         node-max=\"{}\"/>\n",
        m.edge_add,
        match m.edge_add_mode {
            EdgeAddMode::Uniform => "uniform",
            EdgeAddMode::Distance => "distance",
        },
        m.min_distance,
        m.weight_init_max,
        m.edge_del,
        m.edge_mod,
        m.edge_delta,
        m.edge_max,
        m.node_add,
        m.node_del,
        m.node_mod,
        m.node_delta,
        m.node_max
    ));
    out.push_str(&format!(
        "  <evaluation environment=\"{}\" lifetime=\"{}\">\n",
        s.eval.environment, s.eval.lifetime
    ));
    for (key, value) in &s.eval.params {
        out.push_str(&format!("    <param key=\"{key}\" value=\"{value}\"/>\n"));
    }
    out.push_str("  </evaluation>\n");
    out.push_str(&format!("  <output dir=\"{}\"/>\n", config.out_dir.display()));
    out.push_str("</run>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const CONFIG: &str = r#"
<run version="1">
  <genome path="g.xml"/>
  <population size="10" max-generations="5" seed="42"/>
  <selection pressure="0.2" elite-count="2"/>
  <mutation edge-add="0.1" edge-add-mode="distance"/>
  <evaluation environment="oscillator" lifetime="30">
    <param key="channel" value="osc"/>
  </evaluation>
  <output dir="results"/>
</run>
"#;

    #[test]
    fn parses_a_full_config() {
        let config = parse_run_config(CONFIG, Path::new("/tmp/base")).unwrap();
        assert_eq!(config.genome_path, Path::new("/tmp/base/g.xml"));
        assert_eq!(config.out_dir, Path::new("/tmp/base/results"));
        assert_eq!(config.settings.population_size, 10);
        assert_eq!(config.settings.max_generations, 5);
        assert_eq!(config.settings.seed, 42);
        assert_eq!(config.settings.selection.pressure, 0.2);
        assert_eq!(config.settings.selection.elite_count, 2);
        assert_eq!(config.settings.selection.elitism, 10.0); // default kept
        assert_eq!(config.settings.mutation.edge_add, 0.1);
        assert_eq!(config.settings.mutation.edge_add_mode, EdgeAddMode::Distance);
        assert_eq!(config.settings.eval.environment, "oscillator");
        assert_eq!(config.settings.eval.lifetime, 30);
        assert_eq!(config.settings.eval.params["channel"], "osc");
    }

    #[test]
    fn missing_environment_names_the_field() {
        let bad = CONFIG.replace(" environment=\"oscillator\"", "");
        let err = parse_run_config(&bad, Path::new(".")).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("`environment`"), "{err}");
    }

    #[test]
    fn unknown_attributes_are_rejected() {
        let bad = CONFIG.replace("size=\"10\"", "size=\"10\" sized=\"11\"");
        let err = parse_run_config(&bad, Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("sized"), "{err}");
    }

    #[test]
    fn rendered_config_reparses_to_the_same_settings() {
        let config = parse_run_config(CONFIG, Path::new("")).unwrap();
        let rendered = render_run_config(&config);
        let reparsed = parse_run_config(&rendered, Path::new("")).unwrap();
        assert_eq!(format!("{:?}", reparsed.settings), format!("{:?}", config.settings));
    }
}
