//! RPC payloads carried in broker message bodies as UTF-8 JSON.

use std::collections::BTreeMap;
use std::time::Duration;

use gaqueue_core::{Fitness, Genome};
use serde::{Deserialize, Serialize};

use crate::correlation::{make_correlation, CorrelationError, CorrelationId};

pub fn request_queue(run_id: &str) -> String {
    format!("ga.request.{run_id}")
}

pub fn response_queue(run_id: &str) -> String {
    format!("ga.response.{run_id}")
}

/// One individual sent out for evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalRequest {
    pub run_id: String,
    pub generation: u64,
    pub index: usize,
    pub genome: Genome,
    pub problem_id: String,
    #[serde(default)]
    pub problem_params: BTreeMap<String, f64>,
    pub attempt: u32,
}

/// The fitness of one individual, echoing the request's correlation triple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalResponse {
    pub run_id: String,
    pub generation: u64,
    pub index: usize,
    pub fitness: Fitness,
    pub worker_id: String,
    #[serde(rename = "eval_duration_us", with = "micros")]
    pub eval_duration: Duration,
    pub attempt: u32,
}

#[derive(Debug, thiserror::Error)]
pub enum PayloadError {
    #[error("invalid payload: {0}")]
    Json(#[from] serde_json::Error),
    #[error("attempt must be at least 1")]
    ZeroAttempt,
    #[error("fitness {0} is not finite")]
    NonFinite(f64),
    #[error(transparent)]
    Correlation(#[from] CorrelationError),
}

impl EvalRequest {
    pub fn correlation(&self) -> Result<CorrelationId, CorrelationError> {
        make_correlation(&self.run_id, self.generation, self.index)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("request serializes")
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<EvalRequest, PayloadError> {
        let req: EvalRequest = serde_json::from_slice(bytes)?;
        req.correlation()?;
        if req.attempt == 0 {
            return Err(PayloadError::ZeroAttempt);
        }
        Ok(req)
    }

    /// Builds the answer to this request.
    pub fn respond(&self, fitness: Fitness, worker_id: &str, eval_duration: Duration) -> EvalResponse {
        EvalResponse {
            run_id: self.run_id.clone(),
            generation: self.generation,
            index: self.index,
            fitness,
            worker_id: worker_id.to_string(),
            eval_duration,
            attempt: self.attempt,
        }
    }
}

impl EvalResponse {
    pub fn correlation(&self) -> Result<CorrelationId, CorrelationError> {
        make_correlation(&self.run_id, self.generation, self.index)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("response serializes")
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<EvalResponse, PayloadError> {
        let resp: EvalResponse = serde_json::from_slice(bytes)?;
        resp.correlation()?;
        if resp.attempt == 0 {
            return Err(PayloadError::ZeroAttempt);
        }
        if !resp.fitness.is_finite() {
            return Err(PayloadError::NonFinite(resp.fitness));
        }
        Ok(resp)
    }
}

mod micros {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_micros().min(u64::MAX as u128) as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        u64::deserialize(d).map(Duration::from_micros)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn request() -> EvalRequest {
        EvalRequest {
            run_id: "r1".into(),
            generation: 3,
            index: 7,
            genome: Genome::from_bit_str("1111").unwrap(),
            problem_id: "onemax".into(),
            problem_params: BTreeMap::new(),
            attempt: 1,
        }
    }

    #[test]
    fn request_json_shape() {
        let text = String::from_utf8(request().to_bytes()).unwrap();
        assert_eq!(
            text,
            r#"{"run_id":"r1","generation":3,"index":7,"genome":{"kind":"BITSTRING","bits":"1111"},"problem_id":"onemax","problem_params":{},"attempt":1}"#
        );
        assert_eq!(EvalRequest::from_bytes(text.as_bytes()).unwrap(), request());
    }

    #[test]
    fn response_json_shape() {
        let resp = request().respond(4.0, "w1", Duration::from_micros(1250));
        let text = String::from_utf8(resp.to_bytes()).unwrap();
        assert_eq!(
            text,
            r#"{"run_id":"r1","generation":3,"index":7,"fitness":4.0,"worker_id":"w1","eval_duration_us":1250,"attempt":1}"#
        );
        assert_eq!(EvalResponse::from_bytes(text.as_bytes()).unwrap(), resp);
        assert_eq!(resp.correlation().unwrap().to_string(), "r1:3:7");
    }

    #[test]
    fn rejects_bad_payloads() {
        let mut r = request();
        r.attempt = 0;
        assert!(matches!(
            EvalRequest::from_bytes(&r.to_bytes()),
            Err(PayloadError::ZeroAttempt)
        ));
        r.attempt = 1;
        r.run_id = "a:b".into();
        assert!(matches!(
            EvalRequest::from_bytes(&r.to_bytes()),
            Err(PayloadError::Correlation(_))
        ));
        assert!(EvalRequest::from_bytes(b"{}").is_err());
        assert!(EvalRequest::from_bytes(br#"{"run_id":"r","extra":1}"#).is_err());
        let nan = br#"{"run_id":"r","generation":0,"index":0,"fitness":null,"worker_id":"w","eval_duration_us":0,"attempt":1}"#;
        assert!(EvalResponse::from_bytes(nan).is_err());
    }

    proptest::proptest! {
        #[test]
        fn floats_survive_the_wire_bit_for_bit(
            reals in proptest::collection::vec(proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO, 1..8),
            fitness in proptest::num::f64::NORMAL,
        ) {
            let mut req = request();
            req.genome = Genome::Reals(reals);
            let back = EvalRequest::from_bytes(&req.to_bytes()).unwrap();
            proptest::prop_assert_eq!(&back, &req);
            let resp = req.respond(fitness, "w", Duration::ZERO);
            let back = EvalResponse::from_bytes(&resp.to_bytes()).unwrap();
            proptest::prop_assert_eq!(back.fitness.to_bits(), fitness.to_bits());
        }
    }

    #[test]
    fn queue_names() {
        assert_eq!(request_queue("r1"), "ga.request.r1");
        assert_eq!(response_queue("r1"), "ga.response.r1");
    }
}
