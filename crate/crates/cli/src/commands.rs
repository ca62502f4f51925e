//! Implementations of the four batch commands: run, merge, dims, replay.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use modnev_core::env::{EvalConfig, EvalError, evaluate};
use modnev_core::evolution::{RunError, RunOutcome, run_evolution};
use modnev_core::genome::{
    DimensionCounts, DimensionMode, Genome, ModuleRole, dimension, format_real, merge_genomes,
    module_dimension, parse_genome, serialize_genome,
};
use modnev_core::rng::EvoRng;

use crate::CliError;
use crate::config::{RunConfig, load_run_config, render_run_config};

fn load_genome(path: &Path) -> Result<Genome, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read genome `{}`: {e}", path.display())))?;
    parse_genome(&text)
        .map_err(|e| CliError::Config(format!("genome `{}`: {e}", path.display())))
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOverrides {
    pub seed: Option<u64>,
    pub generations: Option<u64>,
    pub jobs: Option<usize>,
}

/// `run <config.xml>`: evolve from the configured template, writing
/// per-generation checkpoints, `stats.csv`, `best.xml` and a resolved-config
/// dump into the output directory.
pub fn cmd_run(
    config_path: &Path,
    overrides: RunOverrides,
    out_override: Option<&Path>,
) -> Result<RunOutcome, CliError> {
    let mut config: RunConfig = load_run_config(config_path)?;
    if let Some(seed) = overrides.seed {
        config.settings.seed = seed;
    }
    if let Some(generations) = overrides.generations {
        config.settings.max_generations = generations;
    }
    config.settings.jobs = overrides.jobs;
    if let Some(out) = out_override {
        config.out_dir = out.to_path_buf();
    }

    let template = load_genome(&config.genome_path)?;
    fs::create_dir_all(&config.out_dir)?;
    fs::write(
        config.out_dir.join("resolved_config.xml"),
        render_run_config(&config),
    )?;

    let outcome = run_evolution(&template, &config.settings, Some(&config.out_dir)).map_err(
        |e| match e {
            RunError::Config(msg) => CliError::Config(msg),
            RunError::Genome(e) => CliError::Config(e.to_string()),
            RunError::Io(e) => CliError::Io(e),
            RunError::Evolve(e) => CliError::Eval(e.to_string()),
        },
    )?;
    Ok(outcome)
}

/// `merge <in...> -o <out>`: combine part genomes for incremental
/// evolution. With two or more inputs the merged plain modules are frozen by
/// default so that only coordination keeps evolving; `keep_evolvable`
/// disables the freeze. A single input passes through unchanged.
pub fn cmd_merge(inputs: &[PathBuf], output: &Path, keep_evolvable: bool) -> Result<(), CliError> {
    if inputs.is_empty() {
        return Err(CliError::Config("merge needs at least one input genome".into()));
    }
    let parts = inputs
        .iter()
        .map(|p| load_genome(p))
        .collect::<Result<Vec<_>, _>>()?;
    let mut merged = merge_genomes(&parts).map_err(|e| CliError::Config(e.to_string()))?;
    if parts.len() > 1 && !keep_evolvable {
        for module in &mut merged.modules {
            if module.role != ModuleRole::Cpg {
                module.evolvable = false;
            }
        }
    }
    fs::write(output, serialize_genome(&merged))?;
    Ok(())
}

/// Search-space dimension report; see `dims` in the command reference.
/// Returns the printable table.
pub fn cmd_dims(
    genome_path: Option<&Path>,
    unrestricted: Option<(u64, u64, u64)>,
) -> Result<String, CliError> {
    let mut out = String::new();
    let mut modular_total = None;
    if let Some(path) = genome_path {
        let genome = load_genome(path)?;
        let mut total = 0u64;
        for module in &genome.modules {
            let dim = module_dimension(&genome, module)
                .map_err(|e| CliError::Config(e.to_string()))?;
            out.push_str(&format!("module {}: {}\n", module.name, dim));
            total += dim;
        }
        out.push_str(&format!("total: {total}\n"));
        modular_total = Some(total);
    }
    if let Some((ns, nh, na)) = unrestricted {
        let flat = dimension(
            DimensionCounts {
                sensors: ns,
                hidden: nh,
                actuators: na,
                ..Default::default()
            },
            DimensionMode::Unrestricted,
        );
        out.push_str(&format!("unrestricted(ns={ns}, nh={nh}, na={na}): {flat}\n"));
        if let Some(total) = modular_total.filter(|&t| t > 0) {
            out.push_str(&format!("ratio: {:.1}\n", flat as f64 / total as f64));
        }
    }
    if out.is_empty() {
        return Err(CliError::Config(
            "dims needs a genome path or --unrestricted with --ns/--nh/--na".into(),
        ));
    }
    Ok(out)
}

/// `replay <genome.xml> --env name --steps n -o trace.csv`: run one
/// evaluation and write the trace; returns the fitness.
pub fn cmd_replay(
    genome_path: &Path,
    env: &str,
    steps: u64,
    out: &Path,
    seed: u64,
    params: &BTreeMap<String, String>,
) -> Result<f64, CliError> {
    let genome = load_genome(genome_path)?;
    let config = EvalConfig {
        environment: env.to_string(),
        lifetime: steps,
        params: params.clone(),
    };
    let mut rng = EvoRng::from_seed(seed);
    let evaluation = evaluate(&genome, &config, &mut rng).map_err(|e| match e {
        EvalError::Compile(e) => CliError::Config(e.to_string()),
        EvalError::Config(msg) => CliError::Config(msg),
        other => CliError::Eval(other.to_string()),
    })?;
    fs::write(out, evaluation.trace.to_csv())?;
    Ok(evaluation.fitness)
}

/// Parse repeated `--param key=value` flags.
pub fn parse_params(raw: &[String]) -> Result<BTreeMap<String, String>, CliError> {
    let mut params = BTreeMap::new();
    for entry in raw {
        let (key, value) = entry.split_once('=').ok_or_else(|| {
            CliError::Config(format!("--param expects key=value, got `{entry}`"))
        })?;
        params.insert(key.to_string(), value.to_string());
    }
    Ok(params)
}

/// Formatted fitness line printed by `replay`; 17 significant digits so the
/// value can be compared bit-exactly against checkpoint metadata.
pub fn fitness_line(fitness: f64) -> String {
    format!("fitness {}", format_real(fitness))
}
