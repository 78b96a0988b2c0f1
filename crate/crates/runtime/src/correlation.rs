use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// `run_id:generation:index`, the key tying a response to its request.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CorrelationId {
    pub run_id: String,
    pub generation: u64,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CorrelationError {
    #[error("run id {0:?} must be non-empty and must not contain ':'")]
    InvalidRunId(String),
    #[error("malformed correlation id {0:?}")]
    Malformed(String),
}

pub fn check_run_id(run_id: &str) -> Result<(), CorrelationError> {
    if run_id.is_empty() || run_id.contains(':') {
        Err(CorrelationError::InvalidRunId(run_id.to_string()))
    } else {
        Ok(())
    }
}

pub fn make_correlation(run_id: &str, generation: u64, index: usize) -> Result<CorrelationId, CorrelationError> {
    check_run_id(run_id)?;
    Ok(CorrelationId {
        run_id: run_id.to_string(),
        generation,
        index,
    })
}

pub fn parse_correlation(s: &str) -> Result<CorrelationId, CorrelationError> {
    let malformed = || CorrelationError::Malformed(s.to_string());
    let mut parts = s.split(':');
    let (Some(run_id), Some(generation), Some(index), None) = (parts.next(), parts.next(), parts.next(), parts.next())
    else {
        return Err(malformed());
    };
    // reject signs and whitespace that `parse` would otherwise accept
    let digits = |t: &str| !t.is_empty() && t.bytes().all(|b| b.is_ascii_digit());
    if run_id.is_empty() || !digits(generation) || !digits(index) {
        return Err(malformed());
    }
    Ok(CorrelationId {
        run_id: run_id.to_string(),
        generation: generation.parse().map_err(|_| malformed())?,
        index: index.parse().map_err(|_| malformed())?,
    })
}

impl fmt::Display for CorrelationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.run_id, self.generation, self.index)
    }
}

impl FromStr for CorrelationId {
    type Err = CorrelationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_correlation(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn format_and_parse() {
        assert_eq!(make_correlation("r1", 3, 7).unwrap().to_string(), "r1:3:7");
        assert_eq!(
            parse_correlation("r1:3:7").unwrap(),
            CorrelationId {
                run_id: "r1".into(),
                generation: 3,
                index: 7
            }
        );
    }

    #[test]
    fn rejects_malformed() {
        for bad in ["r1:3", "r1:3:7:9", ":3:7", "r1:x:7", "r1:3:", "r1:+3:7", "r1: 3:7", ""] {
            assert!(parse_correlation(bad).is_err(), "{bad}");
        }
        assert!(make_correlation("a:b", 0, 0).is_err());
        assert!(make_correlation("", 0, 0).is_err());
    }

    proptest! {
        #[test]
        fn parse_inverts_format(run_id in "[^:]{1,20}", generation in any::<u64>(), index in any::<usize>()) {
            let id = make_correlation(&run_id, generation, index).unwrap();
            prop_assert_eq!(parse_correlation(&id.to_string()).unwrap(), id);
        }
    }
}
