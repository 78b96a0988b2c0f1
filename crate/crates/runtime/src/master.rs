//! Master-side evaluator: scatters unevaluated individuals to the request
//! queue and gathers fitness values from the response queue.

use std::collections::{BTreeMap, HashMap};
use std::time::{Duration, Instant};

use gaqueue_broker::{ClientError, Session};
use gaqueue_core::{EvalError, EvalItem, EvalOutcome, Evaluator, GaConfig, Genome};
use log::{debug, info, warn};

use crate::correlation::check_run_id;
use crate::messages::{request_queue, response_queue, EvalRequest, EvalResponse};
use crate::scatter::{dedup_accept, Acceptance, ScatterState};
use crate::RuntimeError;

pub const DEFAULT_MAX_REPUBLISH: u32 = 5;
/// Responses the broker may push to the master before it acks.
const RESPONSE_PREFETCH: u32 = 1024;
const MASTER_CONSUMER: &str = "master";

#[derive(Debug, Clone, PartialEq)]
pub struct MasterOptions {
    pub run_id: String,
    pub problem_id: String,
    pub problem_params: BTreeMap<String, f64>,
    pub generation_timeout: Duration,
    pub max_republish: u32,
}

impl MasterOptions {
    pub fn from_config(run_id: &str, config: &GaConfig) -> MasterOptions {
        MasterOptions {
            run_id: run_id.to_string(),
            problem_id: config.problem_id.clone(),
            problem_params: config.problem_params.clone(),
            generation_timeout: config.generation_timeout,
            max_republish: DEFAULT_MAX_REPUBLISH,
        }
    }
}

/// Cumulative delivery accounting over a whole run.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MasterStats {
    pub accepted: u64,
    pub duplicates: u64,
    pub stale: u64,
    pub rejected: u64,
    pub republished: u64,
    /// Accepted responses per worker id.
    pub per_worker: BTreeMap<String, u64>,
}

pub struct DistributedEvaluator {
    session: Session,
    options: MasterOptions,
    requests: String,
    responses: String,
    stats: MasterStats,
}

impl DistributedEvaluator {
    /// Declares the run's queues and subscribes as the response queue's only
    /// consumer.
    pub fn new(session: Session, options: MasterOptions) -> Result<DistributedEvaluator, RuntimeError> {
        check_run_id(&options.run_id)?;
        let requests = request_queue(&options.run_id);
        let responses = response_queue(&options.run_id);
        session.declare(&requests)?;
        session.declare(&responses)?;
        session.subscribe(&responses, MASTER_CONSUMER, RESPONSE_PREFETCH)?;
        let evaluator = DistributedEvaluator {
            session,
            options,
            requests,
            responses,
            stats: MasterStats::default(),
        };
        evaluator.check_sole_consumer()?;
        Ok(evaluator)
    }

    pub fn connect(addr: &str, options: MasterOptions) -> Result<DistributedEvaluator, RuntimeError> {
        DistributedEvaluator::new(Session::connect(addr, "master")?, options)
    }

    pub fn stats(&self) -> &MasterStats {
        &self.stats
    }

    pub fn options(&self) -> &MasterOptions {
        &self.options
    }

    pub fn session(&self) -> &Session {
        &self.session
    }

    pub fn close(self) -> Result<(), RuntimeError> {
        Ok(self.session.close()?)
    }

    fn check_sole_consumer(&self) -> Result<(), RuntimeError> {
        let stats = self.session.stats(&self.responses)?;
        if stats.consumer_count != 1 {
            return Err(RuntimeError::NotSoleConsumer {
                queue: self.responses.clone(),
                consumers: stats.consumer_count,
            });
        }
        Ok(())
    }

    fn publish(&self, generation: u64, index: usize, genome: &Genome, attempt: u32) -> Result<(), ClientError> {
        let req = EvalRequest {
            run_id: self.options.run_id.clone(),
            generation,
            index,
            genome: genome.clone(),
            problem_id: self.options.problem_id.clone(),
            problem_params: self.options.problem_params.clone(),
            attempt,
        };
        let corr = req.correlation().expect("run id checked at construction");
        self.session
            .publish(&self.requests, req.to_bytes(), &corr.to_string(), Some(&self.responses))
    }

    /// Scatter one batch and block until every index has an accepted response.
    pub fn scatter_gather(&mut self, generation: u64, batch: &[EvalItem<'_>]) -> Result<EvalOutcome, RuntimeError> {
        self.check_sole_consumer()?;
        let timeout = self.options.generation_timeout;
        let mut state = ScatterState::new(&self.options.run_id, generation, batch.iter().map(|i| i.index), timeout);
        let genomes: HashMap<usize, &Genome> = batch.iter().map(|i| (i.index, i.genome)).collect();
        for item in batch {
            self.publish(generation, item.index, item.genome, 1)?;
        }
        debug!("generation {generation}: scattered {} requests", batch.len());

        let mut outcome = EvalOutcome::default();
        while !state.is_complete() {
            let now = Instant::now();
            if now >= state.deadline {
                if state.republish_count >= self.options.max_republish {
                    return Err(RuntimeError::Stalled {
                        generation,
                        outstanding: state.outstanding.len(),
                        rounds: state.republish_count,
                    });
                }
                let again = state.begin_republish(timeout);
                warn!(
                    "generation {generation}: {} responses missing after {timeout:?}, republishing (attempt {})",
                    again.len(),
                    state.attempt()
                );
                for index in &again {
                    self.publish(generation, *index, genomes[index], state.attempt())?;
                }
                outcome.republished += again.len() as u64;
                self.stats.republished += again.len() as u64;
                continue;
            }
            let Some(delivery) = self.session.recv_delivery(state.deadline - now)? else {
                continue;
            };
            self.session.ack(delivery.delivery_tag)?;
            let resp = match EvalResponse::from_bytes(&delivery.body) {
                Ok(resp) => resp,
                Err(e) => {
                    warn!("discarding response {}: {e}", delivery.correlation_id);
                    self.stats.rejected += 1;
                    continue;
                }
            };
            match dedup_accept(&mut state, &resp) {
                Acceptance::Accepted => {
                    self.stats.accepted += 1;
                    *self.stats.per_worker.entry(resp.worker_id).or_default() += 1;
                }
                Acceptance::Duplicate => {
                    outcome.duplicates += 1;
                    self.stats.duplicates += 1;
                }
                Acceptance::Stale => {
                    debug!("stale response {}", delivery.correlation_id);
                    self.stats.stale += 1;
                }
            }
        }
        outcome.fitness = batch.iter().map(|i| state.received[&i.index]).collect();
        info!(
            "generation {generation}: gathered {} fitness values ({} duplicates, {} republished)",
            batch.len(),
            outcome.duplicates,
            outcome.republished
        );
        Ok(outcome)
    }
}

impl Evaluator for DistributedEvaluator {
    fn evaluate_all(&mut self, generation: u64, batch: &[EvalItem<'_>]) -> Result<EvalOutcome, EvalError> {
        Ok(self.scatter_gather(generation, batch)?)
    }
}
