//! Genetic operators. All of them draw from the run generator in a fixed
//! order so a trajectory depends only on the seed, never on the order in
//! which fitness values arrived.

use std::cmp::Ordering;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::{ConfigError, Fitness, GaConfig, GaError, GaRng, Genome, GenomeKind, Individual, Population};

/// Strict "a beats b" under the run's optimisation direction.
pub fn is_better(a: Fitness, b: Fitness, maximize: bool) -> bool {
    if maximize {
        a > b
    } else {
        a < b
    }
}

/// Orders evaluated individuals best-first; ties go to the lower id.
fn rank(a: &Individual, b: &Individual, maximize: bool) -> Result<Ordering, GaError> {
    let fa = a.fitness.ok_or(GaError::Unevaluated(a.id))?;
    let fb = b.fitness.ok_or(GaError::Unevaluated(b.id))?;
    Ok(if is_better(fa, fb, maximize) {
        Ordering::Less
    } else if is_better(fb, fa, maximize) {
        Ordering::Greater
    } else {
        a.id.cmp(&b.id)
    })
}

pub fn init_population(config: &GaConfig, rng: &mut GaRng) -> Result<Population, ConfigError> {
    config.validate()?;
    let members = (0..config.population_size)
        .map(|id| {
            let genome = match config.genome_kind {
                GenomeKind::Bitstring => Genome::Bits((0..config.genome_length).map(|_| rng.random()).collect()),
                GenomeKind::RealVector => {
                    let b = config.bounds.expect("validated real config has bounds");
                    Genome::Reals(
                        (0..config.genome_length)
                            .map(|_| rng.random_range(b.low..=b.high))
                            .collect(),
                    )
                }
            };
            Individual::new(id, genome)
        })
        .collect();
    Ok(Population { generation: 0, members })
}

/// Best of `tournament_size` members drawn uniformly with replacement.
pub fn tournament_select<'p>(
    pop: &'p Population,
    config: &GaConfig,
    rng: &mut GaRng,
) -> Result<&'p Individual, GaError> {
    let n = pop.members.len();
    let mut best = &pop.members[rng.random_range(0..n)];
    best.fitness.ok_or(GaError::Unevaluated(best.id))?;
    for _ in 1..config.tournament_size {
        let candidate = &pop.members[rng.random_range(0..n)];
        if rank(candidate, best, config.maximize)? == Ordering::Less {
            best = candidate;
        }
    }
    Ok(best)
}

/// Children of a single cut: `a[..cut] ++ b[cut..]` and `b[..cut] ++ a[cut..]`.
pub fn single_point_crossover(a: &[bool], b: &[bool], cut: usize) -> (Vec<bool>, Vec<bool>) {
    let mut c1 = a[..cut].to_vec();
    c1.extend_from_slice(&b[cut..]);
    let mut c2 = b[..cut].to_vec();
    c2.extend_from_slice(&a[cut..]);
    (c1, c2)
}

pub fn crossover(
    a: &Individual,
    b: &Individual,
    config: &GaConfig,
    rng: &mut GaRng,
) -> Result<(Genome, Genome), GaError> {
    if a.genome.kind() != b.genome.kind() || a.genome.len() != b.genome.len() {
        return Err(GaError::ShapeMismatch(format!(
            "{} x{} vs {} x{}",
            a.genome.kind(),
            a.genome.len(),
            b.genome.kind(),
            b.genome.len()
        )));
    }
    let apply = rng.random::<f64>() < config.crossover_rate;
    if !apply {
        return Ok((a.genome.clone(), b.genome.clone()));
    }
    Ok(match (&a.genome, &b.genome) {
        (Genome::Bits(x), Genome::Bits(y)) => {
            if x.len() < 2 {
                return Ok((a.genome.clone(), b.genome.clone()));
            }
            let cut = rng.random_range(1..x.len());
            let (c1, c2) = single_point_crossover(x, y, cut);
            (Genome::Bits(c1), Genome::Bits(c2))
        }
        (Genome::Reals(x), Genome::Reals(y)) => {
            let mut c1 = x.clone();
            let mut c2 = y.clone();
            for i in 0..x.len() {
                if rng.random::<bool>() {
                    std::mem::swap(&mut c1[i], &mut c2[i]);
                }
            }
            (Genome::Reals(c1), Genome::Reals(c2))
        }
        _ => unreachable!("kinds checked above"),
    })
}

pub fn mutate(genome: Genome, config: &GaConfig, rng: &mut GaRng) -> Genome {
    let rate = config.mutation_rate;
    match genome {
        Genome::Bits(mut bits) => {
            for bit in bits.iter_mut() {
                if rng.random::<f64>() < rate {
                    *bit = !*bit;
                }
            }
            Genome::Bits(bits)
        }
        Genome::Reals(mut reals) => {
            let sigma = config.mutation_sigma();
            let noise = Normal::new(0.0, sigma).expect("sigma validated finite and >= 0");
            for x in reals.iter_mut() {
                if rng.random::<f64>() < rate {
                    let moved = *x + noise.sample(rng);
                    *x = match config.bounds {
                        Some(b) => b.clamp(moved),
                        None => moved,
                    };
                }
            }
            Genome::Reals(reals)
        }
    }
}

/// Next population: the best `elite_count` members of `evaluated_old`
/// (keeping their fitness) followed by the offspring, renumbered `0..n`.
pub fn apply_elitism(
    evaluated_old: &Population,
    offspring: Vec<Genome>,
    config: &GaConfig,
) -> Result<Population, GaError> {
    let expected = config.offspring_count();
    if offspring.len() != expected {
        return Err(GaError::OffspringCount {
            expected,
            found: offspring.len(),
        });
    }
    let mut ranked: Vec<&Individual> = evaluated_old.members.iter().collect();
    let mut failure = None;
    ranked.sort_by(|a, b| {
        rank(a, b, config.maximize).unwrap_or_else(|e| {
            failure.get_or_insert(e);
            Ordering::Equal
        })
    });
    if let Some(e) = failure {
        return Err(e);
    }

    let elites = ranked
        .into_iter()
        .take(config.elite_count)
        .map(|ind| (ind.genome.clone(), ind.fitness));
    let fresh = offspring.into_iter().map(|g| (g, None));
    let members = elites
        .chain(fresh)
        .enumerate()
        .map(|(id, (genome, fitness))| Individual { id, genome, fitness })
        .collect();
    Ok(Population {
        generation: evaluated_old.generation + 1,
        members,
    })
}
