//! Generational genetic algorithm engine for the master side of a
//! master/worker (global parallelisation) deployment.
//!
//! Every genetic operator runs here on a single thread of control. Fitness
//! evaluation is the one step handed off to an [`Evaluator`], which receives
//! the whole batch of unevaluated individuals of a generation at once. A
//! [`SequentialEvaluator`] computes the batch in-process; the `gaqueue-runtime`
//! crate provides one that scatters the batch over a message broker.
//!
//! The benchmark fitness functions in [`problems::functions`] are generic over
//! [`num_traits::Float`]; the engine itself fixes the scalar to [`Fitness`]
//! because genomes and fitness values cross process boundaries as 64-bit
//! floats.

pub mod config;
pub mod engine;
pub mod error;
pub mod genome;
pub mod operators;
pub mod problems;

pub use config::{default_generation_timeout, Bounds, GaConfig};
pub use engine::{
    evolve_generation, run_ga, run_ga_with, EvalError, EvalItem, EvalOutcome, Evaluator, GenerationReport, RunFailure,
    RunResult, SequentialEvaluator,
};
pub use error::{ConfigError, GaError};
pub use genome::{Genome, GenomeKind, Individual, Population};
pub use operators::{
    apply_elitism, crossover, init_population, is_better, mutate, single_point_crossover, tournament_select,
};
pub use problems::{lookup_problem, Problem, ProblemKind, ProblemSpec};

/// Scalar used for fitness values and real-valued genes.
pub type Fitness = f64;

/// Single-precision variant of the scalar, usable with the generic
/// functions in [`problems::functions`].
pub type Fitness32 = f32;

/// Deterministic generator driving every operator draw.
pub type GaRng = rand_chacha::ChaCha8Rng;

/// Creates the operator generator for a run seed.
pub fn seeded_rng(seed: u64) -> GaRng {
    use rand::SeedableRng;
    GaRng::seed_from_u64(seed)
}
