use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::{lookup_problem, ConfigError, GenomeKind, Problem};

/// Per-coordinate search interval for real-valued genomes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub low: f64,
    pub high: f64,
}

impl Bounds {
    pub fn width(&self) -> f64 {
        self.high - self.low
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.low, self.high)
    }

    pub fn check(&self) -> Result<(), ConfigError> {
        if self.low.is_finite() && self.high.is_finite() && self.low < self.high {
            Ok(())
        } else {
            Err(ConfigError::InvalidBounds {
                low: self.low,
                high: self.high,
            })
        }
    }
}

/// `max(10 s, 10 x delay)`: a generation that takes longer than this without
/// a response is republished.
pub fn default_generation_timeout(delay: Duration) -> Duration {
    Duration::from_secs(10).max(delay.saturating_mul(10))
}

/// Full description of one GA run.
#[derive(Debug, Clone, PartialEq)]
pub struct GaConfig {
    pub population_size: usize,
    pub genome_kind: GenomeKind,
    pub genome_length: usize,
    pub max_generations: u64,
    pub crossover_rate: f64,
    pub mutation_rate: f64,
    pub tournament_size: usize,
    pub elite_count: usize,
    pub problem_id: String,
    pub problem_params: BTreeMap<String, f64>,
    pub seed: u64,
    pub generation_timeout: Duration,
    pub maximize: bool,
    /// Search interval for real genomes, taken from the problem.
    pub bounds: Option<Bounds>,
}

impl GaConfig {
    /// Defaults for `problem_id`: genome kind, direction and bounds come from
    /// the problem registry.
    pub fn for_problem(problem_id: &str, problem_params: BTreeMap<String, f64>) -> Result<GaConfig, ConfigError> {
        let problem = lookup_problem(problem_id, &problem_params)?;
        let genome_length = 32;
        Ok(GaConfig {
            population_size: 64,
            genome_kind: problem.spec.genome_kind,
            genome_length,
            max_generations: 50,
            crossover_rate: 0.9,
            mutation_rate: 1.0 / genome_length as f64,
            tournament_size: 3,
            elite_count: 1,
            problem_id: problem_id.to_string(),
            problem_params,
            seed: 0,
            generation_timeout: default_generation_timeout(problem.delay.duration),
            maximize: problem.spec.maximize,
            bounds: problem.spec.bounds,
        })
    }

    /// Checks every range constraint and resolves the problem.
    pub fn validate(&self) -> Result<Problem, ConfigError> {
        fn range(field: &'static str, value: impl ToString, bound: &str) -> ConfigError {
            ConfigError::OutOfRange {
                field,
                value: value.to_string(),
                bound: bound.to_string(),
            }
        }
        if self.population_size < 2 {
            return Err(range("population_size", self.population_size, "must be >= 2"));
        }
        if self.genome_length < 1 {
            return Err(range("genome_length", self.genome_length, "must be >= 1"));
        }
        if self.max_generations < 1 {
            return Err(range("max_generations", self.max_generations, "must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.crossover_rate) {
            return Err(range("crossover_rate", self.crossover_rate, "must be in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.mutation_rate) {
            return Err(range("mutation_rate", self.mutation_rate, "must be in [0, 1]"));
        }
        if self.tournament_size < 1 || self.tournament_size > self.population_size {
            return Err(range(
                "tournament_size",
                self.tournament_size,
                &format!("must be in [1, population_size = {}]", self.population_size),
            ));
        }
        if self.elite_count >= self.population_size {
            return Err(range(
                "elite_count",
                self.elite_count,
                &format!("must be < population_size = {}", self.population_size),
            ));
        }
        if self.generation_timeout.is_zero() {
            return Err(range("generation_timeout", "0", "must be positive"));
        }
        let problem = lookup_problem(&self.problem_id, &self.problem_params)?;
        if problem.spec.genome_kind != self.genome_kind {
            return Err(ConfigError::KindMismatch {
                problem: self.problem_id.clone(),
                expected: problem.spec.genome_kind,
                found: self.genome_kind,
            });
        }
        if self.genome_kind == GenomeKind::RealVector {
            match self.bounds {
                Some(b) => b.check()?,
                None => {
                    return Err(ConfigError::InvalidBounds {
                        low: f64::NAN,
                        high: f64::NAN,
                    })
                }
            }
        }
        if let Some(sigma) = self.problem_params.get("mutation_sigma") {
            if !(sigma.is_finite() && *sigma >= 0.0) {
                return Err(range("mutation_sigma", sigma, "must be >= 0"));
            }
        }
        Ok(problem)
    }

    /// Standard deviation of Gaussian mutation for real genomes.
    pub fn mutation_sigma(&self) -> f64 {
        self.problem_params
            .get("mutation_sigma")
            .copied()
            .unwrap_or_else(|| 0.1 * self.bounds.map_or(1.0, |b| b.width()))
    }

    pub fn offspring_count(&self) -> usize {
        self.population_size - self.elite_count
    }
}
