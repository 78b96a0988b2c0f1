//! Distributed fitness evaluation over the gaqueue broker: the master-side
//! [`DistributedEvaluator`] and the [`worker_run_loop`].

pub mod correlation;
pub mod master;
pub mod messages;
pub mod scatter;
pub mod worker;

use std::time::Duration;

use thiserror::Error;

pub use correlation::{make_correlation, parse_correlation, CorrelationError, CorrelationId};
pub use master::{DistributedEvaluator, MasterOptions, MasterStats, DEFAULT_MAX_REPUBLISH};
pub use messages::{request_queue, response_queue, EvalRequest, EvalResponse, PayloadError};
pub use scatter::{dedup_accept, Acceptance, ScatterState};
pub use worker::{worker_run_loop, Backoff, Fault, WorkerOptions, WorkerStats};

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error(transparent)]
    Broker(#[from] gaqueue_broker::ClientError),
    #[error(transparent)]
    Correlation(#[from] CorrelationError),
    #[error("evaluation stalled in generation {generation}: {outstanding} responses missing after {rounds} republish rounds")]
    Stalled {
        generation: u64,
        outstanding: usize,
        rounds: u32,
    },
    #[error("response queue {queue} has {consumers} consumers, expected only the master")]
    NotSoleConsumer { queue: String, consumers: usize },
    #[error("broker at {addr} unreachable for {waited:?}: {last}")]
    Unreachable {
        addr: String,
        waited: Duration,
        last: String,
    },
}
