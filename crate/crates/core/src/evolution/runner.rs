//! Batch run loop with per-generation checkpoints.
//!
//! Every generation is evaluated, logged to `stats.csv`, and dumped as a
//! population checkpoint `gen_%05d.xml` (all members, fitness and lineage in
//! the genome metadata). The champion over the whole run lands in
//! `best.xml`. All outputs are deterministic functions of (template,
//! settings), byte for byte, regardless of the worker thread count.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use thiserror::Error;

use super::{
    EvolveError, Individual, Population, SelectionConfig, evaluate_population, reproduce, select,
};
use crate::env::{EvalConfig, evaluate};
use crate::genome::{Genome, GenomeError, format_real, genome_from_element, serialize_genome};
use crate::mutation::MutationParams;
use crate::rng::EvoRng;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Evolve(#[from] EvolveError),
    #[error("run config: {0}")]
    Config(String),
    #[error(transparent)]
    Genome(#[from] GenomeError),
    #[error("writing outputs: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct RunSettings {
    pub population_size: usize,
    /// Generations are evaluated from 0 through `max_generations` inclusive.
    pub max_generations: u64,
    pub seed: u64,
    /// Stop early once the generation best reaches this fitness.
    pub fitness_target: Option<f64>,
    pub selection: SelectionConfig,
    pub mutation: MutationParams,
    pub eval: EvalConfig,
    /// Worker threads for evaluation; `None` uses the global pool. The
    /// outcome does not depend on this.
    pub jobs: Option<usize>,
}

/// Per-generation fitness statistics, the rows of `stats.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct GenStats {
    pub generation: u64,
    pub best: f64,
    pub mean: f64,
    pub sd: f64,
    pub selected_mean: f64,
    pub selected_sd: f64,
}

pub const STATS_HEADER: &str = "generation,best,mean,sd,selected_mean,selected_sd";

impl GenStats {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.generation, self.best, self.mean, self.sd, self.selected_mean, self.selected_sd
        )
    }
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub champion: Individual,
    pub stats: Vec<GenStats>,
    pub final_generation: u64,
}

/// Serialize a member with its id, fitness and lineage recorded in the
/// genome metadata.
fn member_to_xml(member: &Individual) -> String {
    let mut genome = member.genome.clone();
    genome.metadata.insert("id".into(), member.id.to_string());
    if let Some(fitness) = member.fitness {
        genome.metadata.insert("fitness".into(), format_real(fitness));
    } else {
        genome.metadata.remove("fitness");
    }
    genome.metadata.insert(
        "parents".into(),
        member
            .parents
            .iter()
            .map(u64::to_string)
            .collect::<Vec<_>>()
            .join(","),
    );
    serialize_genome(&genome)
}

/// Render a whole population as one checkpoint document.
pub fn population_to_xml(population: &Population) -> String {
    let mut out = format!(
        "<population version=\"1\" generation=\"{}\">\n",
        population.generation
    );
    for member in &population.members {
        out.push_str(&member_to_xml(member));
    }
    out.push_str("</population>\n");
    out
}

/// Read a checkpoint back. Member ids, fitness and lineage are restored from
/// the genome metadata.
pub fn parse_population(text: &str) -> Result<Population, GenomeError> {
    let doc = roxmltree::Document::parse(text).map_err(|e| GenomeError::Xml(e.to_string()))?;
    let root = doc.root_element();
    if root.tag_name().name() != "population" {
        return Err(GenomeError::Xml(format!(
            "expected root element <population>, found <{}>",
            root.tag_name().name()
        )));
    }
    let generation = root
        .attribute("generation")
        .and_then(|raw| raw.parse::<u64>().ok())
        .ok_or_else(|| GenomeError::Xml("population is missing a generation number".into()))?;
    let mut members = Vec::new();
    for child in root.children().filter(|c| c.is_element()) {
        let genome = genome_from_element(child)?;
        let id = genome
            .metadata
            .get("id")
            .and_then(|raw| raw.parse::<u64>().ok())
            .ok_or_else(|| GenomeError::Xml("member genome has no valid `id` metadata".into()))?;
        let fitness = genome
            .metadata
            .get("fitness")
            .and_then(|raw| raw.parse::<f64>().ok());
        let parents = genome
            .metadata
            .get("parents")
            .map(|raw| {
                raw.split(',')
                    .filter(|s| !s.is_empty())
                    .filter_map(|s| s.parse::<u64>().ok())
                    .collect()
            })
            .unwrap_or_default();
        members.push(Individual {
            id,
            genome,
            fitness,
            parents,
        });
    }
    let next_id = members.iter().map(|m| m.id + 1).max().unwrap_or(0);
    Ok(Population {
        generation,
        members,
        next_id,
    })
}

fn stats_for(population: &Population, selection: &SelectionConfig) -> Result<GenStats, EvolveError> {
    let fitnesses: Vec<f64> = population
        .members
        .iter()
        .map(|m| m.fitness.expect("population evaluated"))
        .collect();
    let best = fitnesses.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (mean, sd) = mean_sd(&fitnesses);
    let selected: Vec<f64> = select(population, selection)?
        .iter()
        .map(|m| m.fitness.expect("selected evaluated"))
        .collect();
    let (selected_mean, selected_sd) = mean_sd(&selected);
    Ok(GenStats {
        generation: population.generation,
        best,
        mean,
        sd,
        selected_mean,
        selected_sd,
    })
}

fn validate_settings(settings: &RunSettings) -> Result<(), RunError> {
    if settings.population_size == 0 {
        return Err(RunError::Config("population size must be at least 1".into()));
    }
    settings.selection.validate()?;
    settings
        .mutation
        .validate()
        .map_err(|e| RunError::Config(e.to_string()))?;
    settings
        .eval
        .validate()
        .map_err(|e| RunError::Config(e.to_string()))?;
    Ok(())
}

/// Run the generational loop on a template genome. With an output directory
/// the checkpoints, `stats.csv` and `best.xml` are written there.
pub fn run_evolution(
    template: &Genome,
    settings: &RunSettings,
    out_dir: Option<&Path>,
) -> Result<RunOutcome, RunError> {
    validate_settings(settings)?;
    match settings.jobs {
        Some(jobs) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(jobs)
                .build()
                .map_err(|e| RunError::Config(format!("thread pool: {e}")))?;
            pool.install(|| run_loop(template, settings, out_dir))
        }
        None => run_loop(template, settings, out_dir),
    }
}

fn run_loop(
    template: &Genome,
    settings: &RunSettings,
    out_dir: Option<&Path>,
) -> Result<RunOutcome, RunError> {
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
    }
    let root = EvoRng::from_seed(settings.seed);
    let eval_config = settings.eval.clone();
    let evaluator = move |genome: &Genome, rng: &mut EvoRng| {
        evaluate(genome, &eval_config, rng).map(|e| e.fitness)
    };

    let mut population = Population::seed(
        template,
        settings.population_size,
        &settings.mutation,
        &root,
    );
    let mut stats = Vec::new();
    let mut stats_csv = String::from(STATS_HEADER);
    stats_csv.push('\n');
    let mut champion: Option<Individual> = None;

    loop {
        evaluate_population(&mut population, &evaluator, &root)?;
        let row = stats_for(&population, &settings.selection)?;
        let _ = writeln!(stats_csv, "{}", row.csv_line());
        stats.push(row);

        let best = population.best().expect("evaluated population").clone();
        let improved = champion
            .as_ref()
            .is_none_or(|c| best.fitness > c.fitness);
        if improved {
            champion = Some(best.clone());
        }

        if let Some(dir) = out_dir {
            let path = dir.join(format!("gen_{:05}.xml", population.generation));
            fs::write(path, population_to_xml(&population))?;
        }

        let target_reached = settings
            .fitness_target
            .is_some_and(|t| best.fitness.expect("evaluated") >= t);
        if target_reached || population.generation >= settings.max_generations {
            break;
        }
        population = reproduce(&population, &settings.selection, &settings.mutation, &root)?;
    }

    let champion = champion.expect("at least one generation evaluated");
    if let Some(dir) = out_dir {
        fs::write(dir.join("stats.csv"), &stats_csv)?;
        fs::write(dir.join("best.xml"), member_to_xml(&champion))?;
    }
    Ok(RunOutcome {
        champion,
        stats,
        final_generation: population.generation,
    })
}
