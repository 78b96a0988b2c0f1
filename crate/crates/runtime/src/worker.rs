//! Worker loop: take one request at a time, evaluate, reply, then ack.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::thread;
use std::time::{Duration, Instant};

use gaqueue_broker::client::Delivery;
use gaqueue_broker::{ClientError, Session};
use gaqueue_core::{lookup_problem, Problem};
use log::{debug, info, warn};

use crate::correlation::check_run_id;
use crate::messages::{request_queue, EvalRequest};
use crate::RuntimeError;

/// Exponential reconnect delay: `base * 2^n`, capped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Backoff {
    pub base: Duration,
    pub cap: Duration,
}

impl Default for Backoff {
    fn default() -> Self {
        Backoff {
            base: Duration::from_millis(100),
            cap: Duration::from_secs(5),
        }
    }
}

impl Backoff {
    pub fn delay(&self, failures: u32) -> Duration {
        self.base.saturating_mul(1u32 << failures.min(20)).min(self.cap)
    }
}

/// Scripted failures for fault-injection tests. `after` counts completed
/// evaluations; the fault hits the next delivery.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Drop the connection without replying, as a killed process would.
    CrashBeforeReply { after: u64 },
    /// Keep the delivery unanswered and unacked until stopped.
    HangBeforeReply { after: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkerOptions {
    pub broker_addr: String,
    pub run_id: String,
    pub worker_id: String,
    pub backoff: Backoff,
    /// Give up after the broker has been unreachable this long.
    pub give_up_after: Option<Duration>,
    /// How often the loop checks the stop flag while idle.
    pub poll: Duration,
    pub fault: Option<Fault>,
}

impl WorkerOptions {
    pub fn new(broker_addr: &str, run_id: &str, worker_id: &str) -> WorkerOptions {
        WorkerOptions {
            broker_addr: broker_addr.to_string(),
            run_id: run_id.to_string(),
            worker_id: worker_id.to_string(),
            backoff: Backoff::default(),
            give_up_after: Some(Duration::from_secs(60)),
            poll: Duration::from_millis(100),
            fault: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WorkerStats {
    pub evaluations: u64,
    pub dead_lettered: u64,
    pub reconnects: u64,
    /// The run ended through an injected crash.
    pub crashed: bool,
}

enum Step {
    Continue,
    Reconnect,
    Crash,
}

struct ProblemCache {
    key: Option<(String, BTreeMap<String, u64>)>,
    problem: Option<Problem>,
}

impl ProblemCache {
    fn get(&mut self, id: &str, params: &BTreeMap<String, f64>) -> Result<&Problem, gaqueue_core::ConfigError> {
        let key = (
            id.to_string(),
            params.iter().map(|(k, v)| (k.clone(), v.to_bits())).collect(),
        );
        if self.key.as_ref() != Some(&key) || self.problem.is_none() {
            self.problem = Some(lookup_problem(id, params)?);
            self.key = Some(key);
        }
        Ok(self.problem.as_ref().expect("just set"))
    }
}

/// Runs until `stop` is set, an injected crash fires, or the broker stays
/// unreachable past `give_up_after`.
pub fn worker_run_loop(options: &WorkerOptions, stop: &AtomicBool) -> Result<WorkerStats, RuntimeError> {
    check_run_id(&options.run_id)?;
    let queue = request_queue(&options.run_id);
    let mut stats = WorkerStats::default();
    let mut cache = ProblemCache {
        key: None,
        problem: None,
    };
    let mut hanging: Option<Delivery> = None;
    let mut connected_once = false;

    'session: while !stop.load(Ordering::SeqCst) {
        let session = match connect(options, &queue, stop)? {
            Some(s) => s,
            None => break,
        };
        if connected_once {
            stats.reconnects += 1;
        }
        connected_once = true;
        info!("worker {} consuming {queue}", options.worker_id);
        while !stop.load(Ordering::SeqCst) {
            let delivery = match session.recv_delivery(options.poll) {
                Ok(Some(d)) => d,
                Ok(None) => continue,
                Err(e) => {
                    warn!("worker {}: {e}; reconnecting", options.worker_id);
                    continue 'session;
                }
            };
            if hanging.is_some() {
                continue;
            }
            match handle(options, &session, delivery, &mut cache, &mut stats, &mut hanging) {
                Step::Continue => {}
                Step::Reconnect => continue 'session,
                Step::Crash => {
                    session.abort();
                    stats.crashed = true;
                    return Ok(stats);
                }
            }
        }
        let _ = session.close();
    }
    Ok(stats)
}

/// Connects with backoff and subscribes. `None` means stop was requested.
fn connect(options: &WorkerOptions, queue: &str, stop: &AtomicBool) -> Result<Option<Session>, RuntimeError> {
    let started = Instant::now();
    let mut failures = 0u32;
    loop {
        if stop.load(Ordering::SeqCst) {
            return Ok(None);
        }
        let attempt = Session::connect(options.broker_addr.as_str(), "worker").and_then(|s| {
            s.declare(queue)?;
            s.subscribe(queue, &options.worker_id, 1)?;
            Ok(s)
        });
        let err = match attempt {
            Ok(s) => return Ok(Some(s)),
            Err(e) => e,
        };
        if let Some(limit) = options.give_up_after {
            if started.elapsed() >= limit {
                return Err(RuntimeError::Unreachable {
                    addr: options.broker_addr.clone(),
                    waited: started.elapsed(),
                    last: err.to_string(),
                });
            }
        }
        let delay = options.backoff.delay(failures);
        failures = failures.saturating_add(1);
        debug!(
            "worker {}: connect failed ({err}), retrying in {delay:?}",
            options.worker_id
        );
        sleep_unless_stopped(delay, stop);
    }
}

fn sleep_unless_stopped(total: Duration, stop: &AtomicBool) {
    let end = Instant::now() + total;
    while !stop.load(Ordering::SeqCst) {
        let now = Instant::now();
        if now >= end {
            break;
        }
        thread::sleep((end - now).min(Duration::from_millis(20)));
    }
}

fn handle(
    options: &WorkerOptions,
    session: &Session,
    delivery: Delivery,
    cache: &mut ProblemCache,
    stats: &mut WorkerStats,
    hanging: &mut Option<Delivery>,
) -> Step {
    match options.fault {
        Some(Fault::CrashBeforeReply { after }) if stats.evaluations >= after => return Step::Crash,
        Some(Fault::HangBeforeReply { after }) if stats.evaluations >= after => {
            warn!("worker {}: hanging on {}", options.worker_id, delivery.correlation_id);
            *hanging = Some(delivery);
            return Step::Continue;
        }
        _ => {}
    }
    let tag = delivery.delivery_tag;
    let result = evaluate(options, &delivery, cache).and_then(|(reply_to, body)| {
        session
            .publish(&reply_to, body, &delivery.correlation_id, None)
            .map_err(Failure::Broker)
    });
    match result {
        Ok(()) => stats.evaluations += 1,
        Err(Failure::Broker(e)) => {
            warn!("worker {}: reply failed ({e}); reconnecting", options.worker_id);
            return Step::Reconnect;
        }
        Err(Failure::Poison(reason)) => {
            warn!(
                "worker {}: dead-lettering {}: {reason}",
                options.worker_id, delivery.correlation_id
            );
            stats.dead_lettered += 1;
        }
    }
    match session.ack(tag) {
        Ok(()) => Step::Continue,
        Err(e) => {
            warn!("worker {}: ack failed ({e}); reconnecting", options.worker_id);
            Step::Reconnect
        }
    }
}

enum Failure {
    Broker(ClientError),
    Poison(String),
}

fn evaluate(
    options: &WorkerOptions,
    delivery: &Delivery,
    cache: &mut ProblemCache,
) -> Result<(String, Vec<u8>), Failure> {
    let poison = |e: &dyn std::fmt::Display| Failure::Poison(e.to_string());
    let req = EvalRequest::from_bytes(&delivery.body).map_err(|e| poison(&e))?;
    let reply_to = delivery
        .reply_to
        .clone()
        .ok_or_else(|| Failure::Poison("request has no reply_to".into()))?;
    let problem = cache
        .get(&req.problem_id, &req.problem_params)
        .map_err(|e| poison(&e))?;
    let started = Instant::now();
    let fitness = problem.evaluate(&req.genome).map_err(|e| poison(&e))?;
    let elapsed = started.elapsed();
    debug!(
        "worker {} evaluated {} -> {fitness} in {elapsed:?}",
        options.worker_id, delivery.correlation_id
    );
    Ok((reply_to, req.respond(fitness, &options.worker_id, elapsed).to_bytes()))
}
