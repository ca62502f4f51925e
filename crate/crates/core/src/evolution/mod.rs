//! Generational loop: rank selection, elitism-weighted offspring
//! allocation, module-exchange crossover, mutation dispatch.
//!
//! One generation is evaluation, selection, reproduction, mutation in that
//! order. Evaluation of distinct individuals is a pure parallel map with
//! per-individual rng sub-streams keyed by (generation, index), so thread
//! count and scheduling can never change a run's outcome.

mod runner;

pub use runner::{
    GenStats, RunError, RunOutcome, RunSettings, STATS_HEADER, parse_population,
    population_to_xml, run_evolution,
};

use rayon::prelude::*;
use thiserror::Error;

use crate::env::EvalError;
use crate::genome::{Genome, LocalKind, ModuleSpec, NodeBody};
use crate::mutation::{MutationParams, mutate_genome};
use crate::rng::EvoRng;

#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub id: u64,
    pub genome: Genome,
    pub fitness: Option<f64>,
    pub parents: Vec<u64>,
}

impl Individual {
    fn fitness_or_err(&self) -> Result<f64, EvolveError> {
        match self.fitness {
            Some(f) if f.is_finite() => Ok(f),
            Some(f) => Err(EvolveError::NonFiniteFitness { id: self.id, value: f }),
            None => Err(EvolveError::Unevaluated { id: self.id }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    pub generation: u64,
    pub members: Vec<Individual>,
    next_id: u64,
}

impl Population {
    /// Seed generation zero from a template genome: member 0 is the pristine
    /// template, the rest are singly mutated copies.
    pub fn seed(
        template: &Genome,
        size: usize,
        mutation: &MutationParams,
        root: &EvoRng,
    ) -> Self {
        let members = (0..size)
            .map(|i| {
                let genome = if i == 0 {
                    template.clone()
                } else {
                    let mut rng = root.substream("seed", i as u64);
                    mutate_genome(template, mutation, &mut rng)
                };
                Individual {
                    id: i as u64,
                    genome,
                    fitness: None,
                    parents: Vec::new(),
                }
            })
            .collect();
        Self {
            generation: 0,
            members,
            next_id: size as u64,
        }
    }

    pub fn size(&self) -> usize {
        self.members.len()
    }

    /// Best evaluated member: highest fitness, ties to the lowest id.
    pub fn best(&self) -> Option<&Individual> {
        self.members
            .iter()
            .filter(|m| m.fitness.is_some())
            .min_by(|a, b| rank_order(a, b))
    }
}

#[derive(Debug, Error)]
pub enum EvolveError {
    #[error("evaluating individual {id}: {source}")]
    Evaluation { id: u64, source: EvalError },
    #[error("individual {id} has not been evaluated")]
    Unevaluated { id: u64 },
    #[error("individual {id} has non-finite fitness {value}")]
    NonFiniteFitness { id: u64, value: f64 },
    #[error("selection config: {0}")]
    Config(String),
}

/// Rank selection and reproduction parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionConfig {
    /// Fraction of the population kept for reproduction, in (0, 1].
    pub pressure: f64,
    /// Elitism exponent of the reproduction factors; high values
    /// concentrate offspring on the fittest parents.
    pub elitism: f64,
    /// Probability of sampling a father and, per module, of taking his
    /// module instead of the mother's.
    pub crossover: f64,
    /// Best individuals copied into the next generation unchanged.
    pub elite_count: usize,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            pressure: 0.1,
            elitism: 10.0,
            crossover: 0.1,
            elite_count: 1,
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<(), EvolveError> {
        if !(self.pressure > 0.0 && self.pressure <= 1.0) {
            return Err(EvolveError::Config(format!(
                "pressure must be in (0, 1], got {}",
                self.pressure
            )));
        }
        if self.elitism.is_nan() || self.elitism < 0.0 || !self.elitism.is_finite() {
            return Err(EvolveError::Config(format!(
                "elitism must be a finite non-negative number, got {}",
                self.elitism
            )));
        }
        if !(0.0..=1.0).contains(&self.crossover) {
            return Err(EvolveError::Config(format!(
                "crossover must be in [0, 1], got {}",
                self.crossover
            )));
        }
        Ok(())
    }
}

/// Descending fitness, ascending id on ties. Requires evaluated members.
fn rank_order(a: &Individual, b: &Individual) -> std::cmp::Ordering {
    let fa = a.fitness.expect("ranked individuals are evaluated");
    let fb = b.fitness.expect("ranked individuals are evaluated");
    fb.partial_cmp(&fa)
        .expect("finite fitness")
        .then(a.id.cmp(&b.id))
}

/// Rank-based selection: the top `ceil(pressure * N)` members by fitness,
/// ties broken toward the lower id.
pub fn select(
    population: &Population,
    config: &SelectionConfig,
) -> Result<Vec<Individual>, EvolveError> {
    config.validate()?;
    for member in &population.members {
        member.fitness_or_err()?;
    }
    let mut ranked = population.members.clone();
    ranked.sort_by(rank_order);
    let keep = (config.pressure * population.size() as f64).ceil() as usize;
    ranked.truncate(keep.max(1));
    Ok(ranked)
}

/// Normalized reproduction factors: `s_i = ((f_i - min) / (max - min))^eta`,
/// `r_i = s_i / sum(s)`. Equal fitnesses (or eta = 0) give uniform factors.
pub fn reproduction_factors(fitnesses: &[f64], eta: f64) -> Result<Vec<f64>, EvolveError> {
    if fitnesses.is_empty() {
        return Err(EvolveError::Config("no fitness values".into()));
    }
    for (i, f) in fitnesses.iter().enumerate() {
        if !f.is_finite() {
            return Err(EvolveError::NonFiniteFitness {
                id: i as u64,
                value: *f,
            });
        }
    }
    let min = fitnesses.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = fitnesses.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let n = fitnesses.len();
    if max == min || eta == 0.0 {
        return Ok(vec![1.0 / n as f64; n]);
    }
    let scores: Vec<f64> = fitnesses
        .iter()
        .map(|f| ((f - min) / (max - min)).powf(eta))
        .collect();
    let total: f64 = scores.iter().sum();
    Ok(scores.into_iter().map(|s| s / total).collect())
}

/// Largest-remainder apportionment of `slots` offspring over normalized
/// factors; remainder ties go to the lower index.
pub fn allocate_offspring(factors: &[f64], slots: usize) -> Vec<usize> {
    let quotas: Vec<f64> = factors.iter().map(|r| r * slots as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..factors.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.partial_cmp(&fa).expect("finite factors").then(a.cmp(&b))
    });
    for &i in order.iter().take(slots.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// The module interface visible to crossover: everything except hidden
/// internals. Two modules are exchangeable when these match.
fn interface_signature(module: &ModuleSpec) -> Vec<(String, String)> {
    let mut sig: Vec<(String, String)> = module
        .nodes
        .iter()
        .filter_map(|node| match &node.body {
            NodeBody::Local(local) if local.kind == LocalKind::Hidden => None,
            NodeBody::Local(local) => Some((
                node.label.clone(),
                format!(
                    "{}:{}",
                    local.kind.as_node_kind(),
                    local.binding.as_deref().unwrap_or("")
                ),
            )),
            NodeBody::Connector(r) => {
                Some((node.label.clone(), format!("connector:{}/{}", r.module, r.node)))
            }
        })
        .collect();
    sig.sort();
    sig
}

pub fn interface_compatible(a: &ModuleSpec, b: &ModuleSpec) -> bool {
    interface_signature(a) == interface_signature(b)
}

/// Module-exchange crossover. The offspring starts as a copy of the mother;
/// with positive `zeta` a father is drawn proportionally to the reproduction
/// factors and each interface-compatible module of the same name is taken
/// from him with probability `zeta`.
pub fn crossover(
    mother: &Individual,
    parents: &[Individual],
    factors: &[f64],
    zeta: f64,
    rng: &mut EvoRng,
) -> Genome {
    crossover_with_father(mother, parents, factors, zeta, rng).0
}

pub(crate) fn crossover_with_father(
    mother: &Individual,
    parents: &[Individual],
    factors: &[f64],
    zeta: f64,
    rng: &mut EvoRng,
) -> (Genome, Option<u64>) {
    let mut offspring = mother.genome.clone();
    if zeta <= 0.0 {
        return (offspring, None);
    }
    let father = &parents[rng.weighted_index(factors)];
    for module in &mut offspring.modules {
        let swap = rng.u() < zeta;
        if let Some(candidate) = father.genome.module(&module.name)
            && swap
            && interface_compatible(module, candidate)
        {
            *module = candidate.clone();
        }
    }
    (offspring, Some(father.id))
}

/// Evaluate every member that has no fitness yet, in parallel, using a
/// sub-stream per (generation, member index).
pub fn evaluate_population<E>(
    population: &mut Population,
    evaluator: &E,
    root: &EvoRng,
) -> Result<(), EvolveError>
where
    E: Fn(&Genome, &mut EvoRng) -> Result<f64, EvalError> + Sync,
{
    let generation = population.generation;
    let results: Vec<Option<Result<f64, EvolveError>>> = population
        .members
        .par_iter()
        .enumerate()
        .map(|(index, member)| {
            member.fitness.is_none().then(|| {
                let mut rng = root
                    .substream("eval", generation)
                    .substream("individual", index as u64);
                let fitness = (evaluator)(&member.genome, &mut rng)
                    .map_err(|source| EvolveError::Evaluation {
                        id: member.id,
                        source,
                    })?;
                if !fitness.is_finite() {
                    return Err(EvolveError::NonFiniteFitness {
                        id: member.id,
                        value: fitness,
                    });
                }
                Ok(fitness)
            })
        })
        .collect();
    for (member, result) in population.members.iter_mut().zip(results) {
        if let Some(result) = result {
            member.fitness = Some(result?);
        }
    }
    Ok(())
}

/// Selection, reproduction and mutation: consume an evaluated population and
/// produce the next generation. Elites are carried over unchanged (fitness
/// included); every other slot is an offspring.
pub fn reproduce(
    population: &Population,
    selection: &SelectionConfig,
    mutation: &MutationParams,
    root: &EvoRng,
) -> Result<Population, EvolveError> {
    let selected = select(population, selection)?;
    let fitnesses: Vec<f64> = selected
        .iter()
        .map(|m| m.fitness.expect("selected are evaluated"))
        .collect();
    let factors = reproduction_factors(&fitnesses, selection.elitism)?;

    let elite_count = selection.elite_count.min(selected.len()).min(population.size());
    let mut members: Vec<Individual> = selected[..elite_count].to_vec();
    let slots = population.size() - elite_count;
    let counts = allocate_offspring(&factors, slots);

    let mut next_id = population.next_id;
    let mut offspring_index = 0u64;
    let repro_root = root.substream("repro", population.generation);
    for (mother, count) in selected.iter().zip(&counts) {
        for _ in 0..*count {
            let mut rng = repro_root.substream("offspring", offspring_index);
            offspring_index += 1;
            let (genome, father) =
                crossover_with_father(mother, &selected, &factors, selection.crossover, &mut rng);
            let genome = mutate_genome(&genome, mutation, &mut rng);
            let mut parents = vec![mother.id];
            if let Some(father) = father.filter(|&f| f != mother.id) {
                parents.push(father);
            }
            members.push(Individual {
                id: next_id,
                genome,
                fitness: None,
                parents,
            });
            next_id += 1;
        }
    }
    Ok(Population {
        generation: population.generation + 1,
        members,
        next_id,
    })
}

/// One full step of the generational loop: evaluate, select, reproduce,
/// mutate.
pub fn next_generation<E>(
    population: &Population,
    selection: &SelectionConfig,
    mutation: &MutationParams,
    evaluator: &E,
    root: &EvoRng,
) -> Result<Population, EvolveError>
where
    E: Fn(&Genome, &mut EvoRng) -> Result<f64, EvalError> + Sync,
{
    let mut evaluated = population.clone();
    evaluate_population(&mut evaluated, evaluator, root)?;
    reproduce(&evaluated, selection, mutation, root)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genome::{EdgeSpec, LocalNode, NodeSpec, TransferKind};

    fn dummy_genome() -> Genome {
        let mut m = ModuleSpec::new("m");
        m.nodes.push(NodeSpec {
            label: "a0".into(),
            body: NodeBody::Local(LocalNode {
                kind: LocalKind::Actuator,
                position: [0.0; 3],
                bias: 0.0,
                transfer: TransferKind::Tanh,
                binding: Some("out".into()),
            }),
        });
        Genome {
            modules: vec![m],
            ..Default::default()
        }
    }

    fn population(fitnesses: &[f64]) -> Population {
        Population {
            generation: 0,
            members: fitnesses
                .iter()
                .enumerate()
                .map(|(i, &f)| Individual {
                    id: i as u64,
                    genome: dummy_genome(),
                    fitness: Some(f),
                    parents: vec![],
                })
                .collect(),
            next_id: fitnesses.len() as u64,
        }
    }

    #[test]
    fn select_keeps_the_top_share() {
        let fitnesses: Vec<f64> = (0..100).map(f64::from).collect();
        let pop = population(&fitnesses);
        let config = SelectionConfig {
            pressure: 0.1,
            ..Default::default()
        };
        let selected = select(&pop, &config).unwrap();
        assert_eq!(selected.len(), 10);
        assert_eq!(selected[0].fitness, Some(99.0));
        assert_eq!(selected[9].fitness, Some(90.0));
    }

    #[test]
    fn select_with_full_pressure_returns_everyone() {
        let pop = population(&[1.0, 2.0, 3.0]);
        let config = SelectionConfig {
            pressure: 1.0,
            ..Default::default()
        };
        assert_eq!(select(&pop, &config).unwrap().len(), 3);
    }

    #[test]
    fn equal_fitness_ties_break_to_lower_id() {
        let pop = population(&[5.0, 5.0, 1.0]);
        let config = SelectionConfig {
            pressure: 0.34,
            ..Default::default()
        };
        let a = select(&pop, &config).unwrap();
        let b = select(&pop, &config).unwrap();
        assert_eq!(a[0].id, 0);
        assert_eq!(a.iter().map(|m| m.id).collect::<Vec<_>>(), b
            .iter()
            .map(|m| m.id)
            .collect::<Vec<_>>());
    }

    #[test]
    fn factors_for_equal_fitnesses_are_uniform() {
        let r = reproduction_factors(&[5.0, 5.0, 5.0], 10.0).unwrap();
        for v in &r {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn factors_match_hand_evaluation() {
        // f = [1,2,3], eta = 1: s = [0, 0.5, 1], r = [0, 1/3, 2/3]
        let r = reproduction_factors(&[1.0, 2.0, 3.0], 1.0).unwrap();
        assert_eq!(r[0], 0.0);
        assert!((r[1] - 1.0 / 3.0).abs() < 1e-15);
        assert!((r[2] - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn large_eta_concentrates_on_the_argmax() {
        let r = reproduction_factors(&[1.0, 2.0, 3.0], 50.0).unwrap();
        assert!(r[2] > 0.999_999);
        assert!(r[0] == 0.0 && r[1] < 1e-6);
    }

    #[test]
    fn eta_zero_is_uniform() {
        let r = reproduction_factors(&[1.0, 2.0, 3.0], 0.0).unwrap();
        for v in &r {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn allocation_examples() {
        assert_eq!(allocate_offspring(&[1.0], 10), vec![10]);
        assert_eq!(allocate_offspring(&[0.0, 1.0 / 3.0, 2.0 / 3.0], 9), vec![0, 3, 6]);
        // remainder tie goes to the lower index
        assert_eq!(allocate_offspring(&[0.5, 0.5], 3), vec![2, 1]);
    }

    #[test]
    fn allocation_conserves_slots_and_stays_near_quota() {
        let mut rng = EvoRng::from_seed(17);
        for _ in 0..200 {
            let n = 1 + rng.index(8);
            let raw: Vec<f64> = (0..n).map(|_| rng.u()).collect();
            let total: f64 = raw.iter().sum();
            let factors: Vec<f64> = raw.iter().map(|v| v / total).collect();
            let slots = rng.index(40);
            let counts = allocate_offspring(&factors, slots);
            assert_eq!(counts.iter().sum::<usize>(), slots);
            for (count, factor) in counts.iter().zip(&factors) {
                assert!((*count as f64 - factor * slots as f64).abs() < 1.0);
            }
        }
    }

    #[test]
    fn crossover_zeta_zero_copies_the_mother() {
        let pop = population(&[1.0, 2.0]);
        let parents = pop.members.clone();
        let mut rng = EvoRng::from_seed(1);
        let child = crossover(&parents[0], &parents, &[0.5, 0.5], 0.0, &mut rng);
        assert_eq!(child, parents[0].genome);
    }

    #[test]
    fn self_mating_is_identity_for_any_zeta() {
        let pop = population(&[1.0]);
        let parents = pop.members.clone();
        for zeta in [0.1, 0.5, 1.0] {
            let mut rng = EvoRng::from_seed(2);
            let child = crossover(&parents[0], &parents, &[1.0], zeta, &mut rng);
            assert_eq!(child, parents[0].genome);
        }
    }

    #[test]
    fn crossover_swaps_compatible_modules_at_rate_zeta() {
        // two-module parents; the father's modules carry different edge
        // weights so a swap is visible
        let mut mother_genome = dummy_genome();
        let mut second = ModuleSpec::new("n");
        second.nodes.push(NodeSpec {
            label: "a1".into(),
            body: NodeBody::Local(LocalNode {
                kind: LocalKind::Actuator,
                position: [0.0; 3],
                bias: 0.0,
                transfer: TransferKind::Tanh,
                binding: Some("out2".into()),
            }),
        });
        mother_genome.modules.push(second);
        mother_genome.normalize();
        let mut father_genome = mother_genome.clone();
        for module in &mut father_genome.modules {
            module.edges.push(EdgeSpec {
                source: module.nodes[0].label.clone(),
                target: module.nodes[0].label.clone(),
                weight: 9.0,
            });
        }
        let parents = vec![
            Individual {
                id: 0,
                genome: mother_genome,
                fitness: Some(1.0),
                parents: vec![],
            },
            Individual {
                id: 1,
                genome: father_genome,
                fitness: Some(2.0),
                parents: vec![],
            },
        ];

        // zeta = 1 and the father forced by factors: all modules swapped
        let mut rng = EvoRng::from_seed(3);
        let child = crossover(&parents[0], &parents, &[0.0, 1.0], 1.0, &mut rng);
        assert_eq!(child, parents[1].genome);

        // swap frequency per module tracks zeta
        let zeta = 0.3;
        let root = EvoRng::from_seed(4);
        let trials = 20_000u32;
        let mut swaps = 0u32;
        for i in 0..trials {
            let mut rng = root.substream("x", u64::from(i));
            let child = crossover(&parents[0], &parents, &[0.0, 1.0], zeta, &mut rng);
            if child.module("m").unwrap().edges.len() == 1 {
                swaps += 1;
            }
        }
        let rate = f64::from(swaps) / f64::from(trials);
        // 3 sigma over 20k trials at p = 0.3 is ~0.0097
        assert!((rate - zeta).abs() < 0.01, "swap rate {rate}");
    }

    #[test]
    fn incompatible_modules_stay_with_the_mother() {
        let mother_genome = dummy_genome();
        let mut father_genome = dummy_genome();
        // same module name, different binding: incompatible interface
        if let NodeBody::Local(l) = &mut father_genome.modules[0].nodes[0].body {
            l.binding = Some("other".into());
        }
        let parents = vec![
            Individual {
                id: 0,
                genome: mother_genome.clone(),
                fitness: Some(1.0),
                parents: vec![],
            },
            Individual {
                id: 1,
                genome: father_genome,
                fitness: Some(2.0),
                parents: vec![],
            },
        ];
        let mut rng = EvoRng::from_seed(5);
        let child = crossover(&parents[0], &parents, &[0.0, 1.0], 1.0, &mut rng);
        assert_eq!(child, mother_genome);
    }

    #[test]
    fn inert_configuration_reproduces_the_population_unchanged() {
        let pop = population(&[1.0, 2.0, 3.0, 4.0]);
        let selection = SelectionConfig {
            pressure: 1.0,
            elitism: 1.0,
            crossover: 0.0,
            elite_count: 4,
        };
        let mutation = MutationParams {
            edge_add: 0.0,
            edge_del: 0.0,
            edge_mod: 0.0,
            node_add: 0.0,
            node_del: 0.0,
            node_mod: 0.0,
            ..Default::default()
        };
        let root = EvoRng::from_seed(6);
        let next = reproduce(&pop, &selection, &mutation, &root).unwrap();
        assert_eq!(next.generation, 1);
        assert_eq!(next.size(), 4);
        // all four carried as elites, best first
        let ids: Vec<u64> = next.members.iter().map(|m| m.id).collect();
        assert_eq!(ids, vec![3, 2, 1, 0]);
        for member in &next.members {
            assert!(member.fitness.is_some());
            assert_eq!(member.genome, pop.members[0].genome);
        }
    }

    #[test]
    fn reproduction_keeps_population_size() {
        let pop = population(&[0.5, 1.5, 2.5, 3.5, 4.5]);
        let selection = SelectionConfig {
            pressure: 0.4,
            elitism: 2.0,
            crossover: 0.5,
            elite_count: 1,
        };
        let mutation = MutationParams::default();
        let root = EvoRng::from_seed(7);
        let next = reproduce(&pop, &selection, &mutation, &root).unwrap();
        assert_eq!(next.size(), pop.size());
        // exactly one elite with fitness, rest unevaluated offspring
        assert_eq!(next.members.iter().filter(|m| m.fitness.is_some()).count(), 1);
        assert_eq!(next.members[0].id, 4);
    }

    #[test]
    fn unevaluated_members_fail_selection() {
        let mut pop = population(&[1.0, 2.0]);
        pop.members[1].fitness = None;
        let err = select(&pop, &SelectionConfig::default()).unwrap_err();
        assert!(matches!(err, EvolveError::Unevaluated { id: 1 }));
    }

    #[test]
    fn evaluation_error_carries_the_individual_id() {
        let mut pop = population(&[1.0, 2.0]);
        pop.members[0].fitness = None;
        pop.members[1].fitness = None;
        let evaluator = |_: &Genome, _: &mut EvoRng| -> Result<f64, EvalError> {
            Err(EvalError::Config("boom".into()))
        };
        let err = evaluate_population(&mut pop, &evaluator, &EvoRng::from_seed(0)).unwrap_err();
        assert!(matches!(err, EvolveError::Evaluation { id: 0, .. }), "{err}");
    }

    #[test]
    fn factors_are_affine_invariant() {
        let mut rng = EvoRng::from_seed(9);
        for _ in 0..100 {
            let n = 2 + rng.index(6);
            let fitnesses: Vec<f64> = (0..n).map(|_| rng.u() * 10.0 - 5.0).collect();
            let a = 0.1 + rng.u() * 5.0;
            let b = rng.u() * 100.0 - 50.0;
            let shifted: Vec<f64> = fitnesses.iter().map(|f| a * f + b).collect();
            for eta in [0.5, 1.0, 5.0] {
                let r1 = reproduction_factors(&fitnesses, eta).unwrap();
                let r2 = reproduction_factors(&shifted, eta).unwrap();
                for (x, y) in r1.iter().zip(&r2) {
                    assert!((x - y).abs() < 1e-9, "affine variance: {x} vs {y}");
                }
            }
        }
    }
}
