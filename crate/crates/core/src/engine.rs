use std::time::{Duration, Instant};

use crate::operators::{apply_elitism, crossover, init_population, is_better, mutate, tournament_select};
use crate::{seeded_rng, Fitness, GaConfig, GaError, GaRng, Genome, Individual, Population, Problem};

pub type EvalError = Box<dyn std::error::Error + Send + Sync>;

/// One unevaluated member handed to an [`Evaluator`].
#[derive(Debug, Clone, Copy)]
pub struct EvalItem<'a> {
    pub index: usize,
    pub genome: &'a Genome,
}

/// Fitness values for a batch, in batch order, plus delivery accounting.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalOutcome {
    pub fitness: Vec<Fitness>,
    pub duplicates: u64,
    pub republished: u64,
}

/// Computes the fitness of a whole generation's batch in one call. This is
/// the only step of the loop that may run elsewhere.
pub trait Evaluator {
    fn evaluate_all(&mut self, generation: u64, batch: &[EvalItem<'_>]) -> Result<EvalOutcome, EvalError>;
}

/// Evaluates in the calling thread.
#[derive(Debug, Clone)]
pub struct SequentialEvaluator {
    problem: Problem,
}

impl SequentialEvaluator {
    pub fn new(problem: Problem) -> Self {
        SequentialEvaluator { problem }
    }

    pub fn for_config(config: &GaConfig) -> Result<Self, GaError> {
        Ok(SequentialEvaluator::new(config.validate()?))
    }
}

impl Evaluator for SequentialEvaluator {
    fn evaluate_all(&mut self, _generation: u64, batch: &[EvalItem<'_>]) -> Result<EvalOutcome, EvalError> {
        let fitness = batch
            .iter()
            .map(|item| self.problem.evaluate(item.genome))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(EvalOutcome {
            fitness,
            ..EvalOutcome::default()
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationReport {
    pub generation: u64,
    pub best_fitness: Fitness,
    pub mean_fitness: Fitness,
    pub evaluations_performed: u64,
    pub duplicate_responses: u64,
    pub republished_requests: u64,
    pub wall_time: Duration,
}

impl GenerationReport {
    /// Compares the seed-determined fields, ignoring timing and delivery
    /// accounting.
    pub fn same_trajectory(&self, other: &GenerationReport) -> bool {
        self.generation == other.generation
            && self.best_fitness.to_bits() == other.best_fitness.to_bits()
            && self.mean_fitness.to_bits() == other.mean_fitness.to_bits()
            && self.evaluations_performed == other.evaluations_performed
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub best: Individual,
    pub best_generation: u64,
    pub reports: Vec<GenerationReport>,
}

/// A run that stopped early, with the reports of completed generations.
#[derive(Debug, thiserror::Error)]
#[error("run failed after {} generation(s): {source}", reports.len())]
pub struct RunFailure {
    #[source]
    pub source: GaError,
    pub reports: Vec<GenerationReport>,
}

/// Evaluates the unevaluated members of `pop`, then breeds the next
/// generation. Returns the evaluated `pop` alongside the next population.
pub fn evolve_generation(
    mut pop: Population,
    config: &GaConfig,
    evaluator: &mut dyn Evaluator,
    rng: &mut GaRng,
) -> Result<(Population, Population, GenerationReport), GaError> {
    let started = Instant::now();

    let pending: Vec<usize> = pop
        .members
        .iter()
        .filter(|m| m.fitness.is_none())
        .map(|m| m.id)
        .collect();
    let outcome = {
        let batch: Vec<EvalItem<'_>> = pending
            .iter()
            .map(|&i| EvalItem {
                index: i,
                genome: &pop.members[i].genome,
            })
            .collect();
        evaluator
            .evaluate_all(pop.generation, &batch)
            .map_err(GaError::Evaluation)?
    };
    if outcome.fitness.len() != pending.len() {
        return Err(GaError::BatchSize {
            expected: pending.len(),
            found: outcome.fitness.len(),
        });
    }
    for (&index, &fitness) in pending.iter().zip(&outcome.fitness) {
        if !fitness.is_finite() {
            return Err(GaError::NonFiniteFitness { index, fitness });
        }
        pop.members[index].fitness = Some(fitness);
    }

    let fitness: Vec<Fitness> = pop.members.iter().map(|m| m.fitness.expect("filled above")).collect();
    let best_fitness = fitness
        .iter()
        .copied()
        .reduce(|a, b| if is_better(b, a, config.maximize) { b } else { a })
        .expect("population is non-empty");
    let mean_fitness = fitness.iter().sum::<Fitness>() / fitness.len() as Fitness;

    let target = config.offspring_count();
    let mut offspring = Vec::with_capacity(target);
    while offspring.len() < target {
        let a = tournament_select(&pop, config, rng)?;
        let b = tournament_select(&pop, config, rng)?;
        let (c1, c2) = crossover(a, b, config, rng)?;
        offspring.push(mutate(c1, config, rng));
        if offspring.len() < target {
            offspring.push(mutate(c2, config, rng));
        }
    }
    let next = apply_elitism(&pop, offspring, config)?;

    let report = GenerationReport {
        generation: pop.generation,
        best_fitness,
        mean_fitness,
        evaluations_performed: pending.len() as u64,
        duplicate_responses: outcome.duplicates,
        republished_requests: outcome.republished,
        wall_time: started.elapsed(),
    };
    Ok((pop, next, report))
}

pub fn run_ga(config: &GaConfig, evaluator: &mut dyn Evaluator) -> Result<RunResult, RunFailure> {
    run_ga_with(config, evaluator, |_| {})
}

/// Like [`run_ga`], calling `observe` after every completed generation.
pub fn run_ga_with(
    config: &GaConfig,
    evaluator: &mut dyn Evaluator,
    mut observe: impl FnMut(&GenerationReport),
) -> Result<RunResult, RunFailure> {
    let mut reports = Vec::with_capacity(config.max_generations as usize);
    let mut rng = seeded_rng(config.seed);
    let mut pop = match init_population(config, &mut rng) {
        Ok(p) => p,
        Err(e) => {
            return Err(RunFailure {
                source: e.into(),
                reports,
            })
        }
    };
    let mut best: Option<(Individual, u64)> = None;

    while pop.generation < config.max_generations {
        let (evaluated, next, report) = match evolve_generation(pop, config, evaluator, &mut rng) {
            Ok(step) => step,
            Err(source) => return Err(RunFailure { source, reports }),
        };
        for m in &evaluated.members {
            let f = m.fitness.expect("evaluated");
            let replace = match &best {
                None => true,
                Some((b, _)) => is_better(f, b.fitness.expect("evaluated"), config.maximize),
            };
            if replace {
                best = Some((m.clone(), evaluated.generation));
            }
        }
        observe(&report);
        reports.push(report);
        pop = next;
    }

    let (best, best_generation) = best.expect("max_generations >= 1");
    Ok(RunResult {
        best,
        best_generation,
        reports,
    })
}
