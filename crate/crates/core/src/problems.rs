//! Registry of pure fitness functions evaluated on worker nodes.
//!
//! Workers resolve a problem from the `problem_id` and parameter map carried
//! by each request, so only genomes travel over the broker. Every problem
//! accepts `delay_ms` (and `delay_spin`, nonzero for busy-waiting instead of
//! sleeping) to emulate expensive evaluations.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use crate::{Bounds, ConfigError, Fitness, GaError, Genome, GenomeKind};

pub mod functions {
    //! Benchmark functions, generic over the float type.

    use num_traits::{Float, FloatConst};

    /// Number of set bits.
    pub fn onemax<T: Float>(bits: &[bool]) -> T {
        T::from(bits.iter().filter(|b| **b).count()).expect("bit count fits in a float")
    }

    /// Sum of squares; minimum 0 at the origin.
    pub fn sphere<T: Float>(x: &[T]) -> T {
        x.iter().fold(T::zero(), |acc, &v| acc + v * v)
    }

    /// `A·n + Σ (xᵢ² − A·cos(2π xᵢ))`; minimum 0 at the origin.
    pub fn rastrigin<T: Float + FloatConst>(x: &[T], a: T) -> T {
        let two_pi = T::TAU();
        let n = T::from(x.len()).expect("length fits in a float");
        x.iter().fold(a * n, |acc, &v| acc + (v * v - a * (two_pi * v).cos()))
    }
}

pub const RASTRIGIN_DEFAULT_A: f64 = 10.0;
pub const RASTRIGIN_BOUNDS: Bounds = Bounds { low: -5.12, high: 5.12 };
pub const SPHERE_DEFAULT_BOUNDS: Bounds = Bounds { low: -5.12, high: 5.12 };

const COMMON_PARAMS: &[&str] = &["delay_ms", "delay_spin", "mutation_sigma"];
const REAL_PARAMS: &[&str] = &["low", "high"];

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub problem_id: String,
    pub genome_kind: GenomeKind,
    pub bounds: Option<Bounds>,
    pub maximize: bool,
    pub params: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProblemKind {
    OneMax,
    Sphere,
    Rastrigin { a: f64 },
}

impl ProblemKind {
    fn name(&self) -> &'static str {
        match self {
            ProblemKind::OneMax => "onemax",
            ProblemKind::Sphere => "sphere",
            ProblemKind::Rastrigin { .. } => "rastrigin",
        }
    }
}

/// Emulated evaluation cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Delay {
    pub duration: Duration,
    pub spin: bool,
}

impl Delay {
    pub fn wait(&self) {
        if self.duration.is_zero() {
            return;
        }
        if self.spin {
            let start = Instant::now();
            while start.elapsed() < self.duration {
                std::hint::spin_loop();
            }
        } else {
            std::thread::sleep(self.duration);
        }
    }
}

/// A resolved problem: its declared spec plus the function to evaluate.
///
/// Two lookups with the same id and parameters compare equal and compute the
/// same function.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub spec: ProblemSpec,
    pub kind: ProblemKind,
    pub delay: Delay,
}

impl Problem {
    pub fn evaluate(&self, genome: &Genome) -> Result<Fitness, GaError> {
        let value = match (self.kind, genome) {
            (ProblemKind::OneMax, Genome::Bits(bits)) => onemax(bits),
            (ProblemKind::Sphere, Genome::Reals(x)) => functions::sphere(x),
            (ProblemKind::Rastrigin { a }, Genome::Reals(x)) => functions::rastrigin(x, a),
            (kind, g) => {
                return Err(GaError::WrongGenomeKind {
                    problem: kind.name(),
                    found: g.kind(),
                })
            }
        };
        self.delay.wait();
        Ok(value)
    }
}

pub fn onemax(bits: &[bool]) -> Fitness {
    functions::onemax(bits)
}

pub fn sphere(genome: &Genome) -> Result<Fitness, GaError> {
    match genome {
        Genome::Reals(x) => Ok(functions::sphere(x)),
        g => Err(GaError::WrongGenomeKind {
            problem: "sphere",
            found: g.kind(),
        }),
    }
}

pub fn rastrigin(genome: &Genome, a: f64) -> Result<Fitness, GaError> {
    match genome {
        Genome::Reals(x) => Ok(functions::rastrigin(x, a)),
        g => Err(GaError::WrongGenomeKind {
            problem: "rastrigin",
            found: g.kind(),
        }),
    }
}

/// Waits out `delay`, then returns OneMax for bitstrings or the sphere value
/// for real vectors.
pub fn delay_fitness(genome: &Genome, delay: Delay) -> Fitness {
    delay.wait();
    match genome {
        Genome::Bits(bits) => onemax(bits),
        Genome::Reals(x) => functions::sphere(x),
    }
}

pub fn registered_ids() -> &'static [&'static str] {
    &["onemax", "sphere", "rastrigin"]
}

pub fn lookup_problem(problem_id: &str, params: &BTreeMap<String, f64>) -> Result<Problem, ConfigError> {
    let (kind, genome_kind, maximize, extra): (_, _, _, &[&str]) = match problem_id {
        "onemax" => (ProblemKind::OneMax, GenomeKind::Bitstring, true, &[]),
        "sphere" => (ProblemKind::Sphere, GenomeKind::RealVector, false, REAL_PARAMS),
        "rastrigin" => {
            let a = params.get("A").copied().unwrap_or(RASTRIGIN_DEFAULT_A);
            if !a.is_finite() {
                return Err(ConfigError::OutOfRange {
                    field: "A",
                    value: a.to_string(),
                    bound: "must be finite".into(),
                });
            }
            (
                ProblemKind::Rastrigin { a },
                GenomeKind::RealVector,
                false,
                &["low", "high", "A"],
            )
        }
        other => return Err(ConfigError::UnknownProblem(other.to_string())),
    };

    if let Some(key) = params
        .keys()
        .find(|k| !COMMON_PARAMS.contains(&k.as_str()) && !extra.contains(&k.as_str()))
    {
        return Err(ConfigError::UnknownParam {
            problem: problem_id.to_string(),
            param: key.clone(),
        });
    }

    let bounds = match genome_kind {
        GenomeKind::Bitstring => None,
        GenomeKind::RealVector => {
            let default = match kind {
                ProblemKind::Rastrigin { .. } => RASTRIGIN_BOUNDS,
                _ => SPHERE_DEFAULT_BOUNDS,
            };
            let b = Bounds {
                low: params.get("low").copied().unwrap_or(default.low),
                high: params.get("high").copied().unwrap_or(default.high),
            };
            b.check()?;
            Some(b)
        }
    };

    let delay_ms = params.get("delay_ms").copied().unwrap_or(0.0);
    if !(delay_ms.is_finite() && delay_ms >= 0.0) {
        return Err(ConfigError::OutOfRange {
            field: "delay_ms",
            value: delay_ms.to_string(),
            bound: "must be >= 0".into(),
        });
    }
    let delay = Delay {
        duration: Duration::from_secs_f64(delay_ms / 1000.0),
        spin: params.get("delay_spin").is_some_and(|v| *v != 0.0),
    };

    Ok(Problem {
        spec: ProblemSpec {
            problem_id: problem_id.to_string(),
            genome_kind,
            bounds,
            maximize,
            params: params.clone(),
        },
        kind,
        delay,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    fn bits(s: &str) -> Genome {
        Genome::from_bit_str(s).unwrap()
    }

    #[test]
    fn onemax_examples() {
        let p = lookup_problem("onemax", &BTreeMap::new()).unwrap();
        assert_eq!(p.evaluate(&bits("11111111")).unwrap(), 8.0);
        assert_eq!(p.evaluate(&bits("00000000")).unwrap(), 0.0);
        assert_eq!(p.evaluate(&bits("10110010")).unwrap(), 4.0);
        assert!(p.spec.maximize);
        assert_eq!(p.spec.genome_kind, GenomeKind::Bitstring);
    }

    #[test]
    fn sphere_examples() {
        assert_eq!(sphere(&Genome::Reals(vec![0.0, 0.0, 0.0])).unwrap(), 0.0);
        assert_eq!(sphere(&Genome::Reals(vec![1.0, 2.0])).unwrap(), 5.0);
        assert_eq!(sphere(&Genome::Reals(vec![-3.0])).unwrap(), 9.0);
        assert!(matches!(sphere(&bits("101")), Err(GaError::WrongGenomeKind { .. })));
    }

    #[test]
    fn rastrigin_examples() {
        for n in 1..6 {
            assert_eq!(rastrigin(&Genome::Reals(vec![0.0; n]), 10.0).unwrap(), 0.0);
        }
        assert!((rastrigin(&Genome::Reals(vec![1.0]), 10.0).unwrap() - 1.0).abs() < 1e-12);
        // 10 + 0.25 - 10 * cos(pi) = 20.25
        assert!((rastrigin(&Genome::Reals(vec![0.5]), 10.0).unwrap() - 20.25).abs() < 1e-12);
        assert!(rastrigin(&bits("1"), 10.0).is_err());
    }

    #[test]
    fn rastrigin_honours_a_param() {
        let p = lookup_problem("rastrigin", &params(&[("A", 5.0)])).unwrap();
        assert_eq!(p.kind, ProblemKind::Rastrigin { a: 5.0 });
        // independent spot values: 5 + x^2 - 5 cos(2 pi x)
        let cases = [(0.5, 5.0 + 0.25 + 5.0), (1.0, 1.0), (0.25, 5.0 + 0.0625 - 0.0)];
        for (x, expected) in cases {
            let got = p.evaluate(&Genome::Reals(vec![x])).unwrap();
            assert!((got - expected).abs() < 1e-12, "x={x}: {got} vs {expected}");
        }
        assert_eq!(p.spec.bounds, Some(RASTRIGIN_BOUNDS));
    }

    #[test]
    fn generic_functions_work_in_single_precision() {
        let x: [f32; 2] = [1.0, 2.0];
        assert_eq!(functions::sphere(&x), 5.0f32);
        assert!((functions::rastrigin(&[0.5f32], 10.0) - 20.25).abs() < 1e-4);
        assert_eq!(functions::onemax::<f32>(&[true, false, true]), 2.0);
    }

    #[test]
    fn unknown_problem_and_param() {
        assert_eq!(
            lookup_problem("nosuch", &BTreeMap::new()),
            Err(ConfigError::UnknownProblem("nosuch".into()))
        );
        assert!(matches!(
            lookup_problem("onemax", &params(&[("A", 3.0)])),
            Err(ConfigError::UnknownParam { .. })
        ));
        assert!(lookup_problem("sphere", &params(&[("low", 1.0), ("high", 1.0)])).is_err());
        assert!(lookup_problem("onemax", &params(&[("delay_ms", -1.0)])).is_err());
    }

    #[test]
    fn same_lookup_is_extensionally_identical() {
        let ps = params(&[("A", 7.5)]);
        assert_eq!(
            lookup_problem("rastrigin", &ps).unwrap(),
            lookup_problem("rastrigin", &ps).unwrap()
        );
    }

    #[test]
    fn zero_delay_matches_underlying_function() {
        let g = bits("1101");
        assert_eq!(delay_fitness(&g, Delay::default()), onemax(&[true, true, false, true]));
        let r = Genome::Reals(vec![1.0, 2.0]);
        assert_eq!(delay_fitness(&r, Delay::default()), 5.0);
    }

    #[test]
    fn delay_is_a_lower_bound() {
        for spin in [false, true] {
            let d = Delay {
                duration: Duration::from_millis(50),
                spin,
            };
            let start = Instant::now();
            assert_eq!(delay_fitness(&bits("11"), d), 2.0);
            assert!(start.elapsed() >= Duration::from_millis(50));
        }
        let p = lookup_problem("onemax", &params(&[("delay_ms", 50.0)])).unwrap();
        let start = Instant::now();
        p.evaluate(&bits("1")).unwrap();
        assert!(start.elapsed() >= Duration::from_millis(50));
    }
}
