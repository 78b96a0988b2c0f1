use std::fmt;

use serde::{Deserialize, Serialize};

use crate::Fitness;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum GenomeKind {
    Bitstring,
    RealVector,
}

impl fmt::Display for GenomeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GenomeKind::Bitstring => "BITSTRING",
            GenomeKind::RealVector => "REAL_VECTOR",
        })
    }
}

/// Encoded candidate solution.
///
/// Serialized as `{"kind":"BITSTRING","bits":"0110"}` or
/// `{"kind":"REAL_VECTOR","reals":[0.5,-1.25]}`. Deserialization rejects
/// empty genomes, characters other than `0`/`1` and non-finite reals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GenomeRepr", into = "GenomeRepr")]
pub enum Genome {
    Bits(Vec<bool>),
    Reals(Vec<f64>),
}

impl Genome {
    pub fn kind(&self) -> GenomeKind {
        match self {
            Genome::Bits(_) => GenomeKind::Bitstring,
            Genome::Reals(_) => GenomeKind::RealVector,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Genome::Bits(b) => b.len(),
            Genome::Reals(r) => r.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Parses a `0`/`1` string such as `"10110010"`.
    pub fn from_bit_str(s: &str) -> Option<Genome> {
        s.chars()
            .map(|c| match c {
                '0' => Some(false),
                '1' => Some(true),
                _ => None,
            })
            .collect::<Option<Vec<_>>>()
            .map(Genome::Bits)
    }

    pub fn check(&self) -> Result<(), String> {
        if self.is_empty() {
            return Err("genome must have at least one gene".into());
        }
        if let Genome::Reals(r) = self {
            if let Some(i) = r.iter().position(|x| !x.is_finite()) {
                return Err(format!("gene {i} is not finite"));
            }
        }
        Ok(())
    }
}

impl fmt::Display for Genome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Genome::Bits(bits) => {
                for b in bits {
                    f.write_str(if *b { "1" } else { "0" })?;
                }
                Ok(())
            }
            Genome::Reals(reals) => {
                f.write_str("[")?;
                for (i, x) in reals.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{x}")?;
                }
                f.write_str("]")
            }
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE", deny_unknown_fields)]
enum GenomeRepr {
    Bitstring { bits: String },
    RealVector { reals: Vec<f64> },
}

impl TryFrom<GenomeRepr> for Genome {
    type Error = String;

    fn try_from(repr: GenomeRepr) -> Result<Self, Self::Error> {
        let genome = match repr {
            GenomeRepr::Bitstring { bits } => Genome::from_bit_str(&bits)
                .ok_or_else(|| format!("bitstring {bits:?} contains characters other than 0/1"))?,
            GenomeRepr::RealVector { reals } => Genome::Reals(reals),
        };
        genome.check()?;
        Ok(genome)
    }
}

impl From<Genome> for GenomeRepr {
    fn from(g: Genome) -> Self {
        match g {
            bits @ Genome::Bits(_) => GenomeRepr::Bitstring { bits: bits.to_string() },
            Genome::Reals(reals) => GenomeRepr::RealVector { reals },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub id: usize,
    pub genome: Genome,
    pub fitness: Option<Fitness>,
}

impl Individual {
    pub fn new(id: usize, genome: Genome) -> Self {
        Individual {
            id,
            genome,
            fitness: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    pub generation: u64,
    pub members: Vec<Individual>,
}

impl Population {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn is_evaluated(&self) -> bool {
        self.members.iter().all(|m| m.fitness.is_some())
    }

    /// Member ids must be exactly `0..len` in order.
    pub fn ids_are_dense(&self) -> bool {
        self.members.iter().enumerate().all(|(i, m)| m.id == i)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bitstring_json_shape() {
        let g = Genome::from_bit_str("1011").unwrap();
        let json = serde_json::to_string(&g).unwrap();
        assert_eq!(json, r#"{"kind":"BITSTRING","bits":"1011"}"#);
        assert_eq!(serde_json::from_str::<Genome>(&json).unwrap(), g);
    }

    #[test]
    fn reals_round_trip_exactly() {
        let g = Genome::Reals(vec![0.1, -5.12, 1e-300, 3.0000000000000004]);
        let json = serde_json::to_string(&g).unwrap();
        assert_eq!(serde_json::from_str::<Genome>(&json).unwrap(), g);
    }

    #[test]
    fn rejects_invalid_payloads() {
        for bad in [
            r#"{"kind":"BITSTRING","bits":""}"#,
            r#"{"kind":"BITSTRING","bits":"10a"}"#,
            r#"{"kind":"REAL_VECTOR","reals":[]}"#,
            r#"{"kind":"REAL_VECTOR","reals":[null]}"#,
            r#"{"kind":"TREE","nodes":[]}"#,
        ] {
            assert!(serde_json::from_str::<Genome>(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn non_finite_reals_fail_check() {
        assert!(Genome::Reals(vec![1.0, f64::NAN]).check().is_err());
        assert!(Genome::Reals(vec![f64::INFINITY]).check().is_err());
    }
}
