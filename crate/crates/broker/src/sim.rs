//! Scripted simulations of the in-memory [`Broker`] checked against a
//! reference model. Used by the property tests; each function returns a
//! description of the first violated property.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use crate::state::{Broker, ConnId, Delivery};

pub const QUEUES: [&str; 2] = ["a", "b"];

/// One scripted step. `pick` values select among live items modulo their
/// count, so any integer is a valid choice.
#[derive(Debug, Clone)]
pub enum Op {
    Subscribe { queue: usize, prefetch: u32 },
    Publish { queue: usize },
    Ack { pick: usize },
    Disconnect { pick: usize },
    BogusAck { pick: usize },
}

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

#[derive(Default)]
struct Model {
    published: BTreeMap<&'static str, BTreeSet<u64>>,
    acked: BTreeSet<u64>,
    /// (conn, tag) -> message id for deliveries not yet acked or requeued
    outstanding: BTreeMap<(ConnId, u64), u64>,
    consumers: Vec<ConnId>,
    next_consumer: usize,
}

impl Model {
    fn absorb(&mut self, deliveries: Vec<Delivery>) -> Result<(), String> {
        for d in deliveries {
            let id = d.message.id;
            ensure!(
                !self.outstanding.values().any(|m| *m == id),
                "message {id} delivered while already in flight"
            );
            ensure!(!self.acked.contains(&id), "message {id} delivered after its ack");
            self.outstanding.insert((d.conn, d.delivery_tag), id);
        }
        Ok(())
    }
}

fn check(broker: &Broker, model: &Model) -> Result<(), String> {
    for q in QUEUES {
        let pending: Vec<u64> = broker.pending(q).map(|m| m.id).collect();
        let mut per_consumer: HashMap<&str, (usize, usize)> = HashMap::new();
        let mut flight = Vec::new();
        for (consumer, prefetch, m) in broker.in_flight(q) {
            let e = per_consumer.entry(consumer).or_insert((0, prefetch));
            e.0 += 1;
            flight.push(m.id);
        }
        for (c, (n, prefetch)) in per_consumer {
            ensure!(n <= prefetch, "consumer {c} holds {n} > prefetch {prefetch}");
        }
        let published = model.published.get(q).cloned().unwrap_or_default();
        let live: BTreeSet<u64> = pending.iter().chain(&flight).copied().collect();
        ensure!(
            live.len() == pending.len() + flight.len(),
            "message in two places on {q}"
        );
        let acked_here: BTreeSet<u64> = model.acked.intersection(&published).copied().collect();
        ensure!(live.is_disjoint(&acked_here), "acked message still live on {q}");
        let accounted: BTreeSet<u64> = live.union(&acked_here).copied().collect();
        ensure!(accounted == published, "queue {q} lost or invented messages");
    }
    let outstanding: BTreeSet<u64> = model.outstanding.values().copied().collect();
    let in_flight: BTreeSet<u64> = QUEUES
        .iter()
        .flat_map(|q| broker.in_flight(q).map(|(_, _, m)| m.id))
        .collect();
    ensure!(outstanding == in_flight, "in-flight set diverged from the model");
    Ok(())
}

/// Runs `ops` and checks, after every step, that each published message is
/// exactly one of pending, in flight or acked, and that no consumer exceeds
/// its prefetch.
pub fn run_script(ops: &[Op]) -> Result<(), String> {
    let mut broker = Broker::new();
    let publisher = broker.connect();
    let mut model = Model::default();
    for op in ops {
        match *op {
            Op::Subscribe { queue, prefetch } => {
                let conn = broker.connect();
                let id = format!("c{}", model.next_consumer);
                model.next_consumer += 1;
                let d = broker
                    .subscribe(conn, QUEUES[queue % QUEUES.len()], &id, prefetch)
                    .map_err(|e| e.to_string())?;
                model.consumers.push(conn);
                model.absorb(d)?;
            }
            Op::Publish { queue } => {
                let q = QUEUES[queue % QUEUES.len()];
                let id = broker.next_message_id();
                let d = broker
                    .publish(publisher, q, vec![], String::new(), None)
                    .map_err(|e| e.to_string())?;
                model.published.entry(q).or_default().insert(id);
                model.absorb(d)?;
            }
            Op::Ack { pick } => {
                if model.outstanding.is_empty() {
                    continue;
                }
                let key = *model
                    .outstanding
                    .keys()
                    .nth(pick % model.outstanding.len())
                    .expect("in range");
                let id = model.outstanding.remove(&key).expect("present");
                let d = broker.ack(key.0, key.1).map_err(|e| e.to_string())?;
                ensure!(model.acked.insert(id), "message {id} acked twice");
                model.absorb(d)?;
            }
            Op::Disconnect { pick } => {
                if model.consumers.is_empty() {
                    continue;
                }
                let conn = model.consumers.remove(pick % model.consumers.len());
                model.outstanding.retain(|(c, _), _| *c != conn);
                let d = broker.disconnect(conn);
                model.absorb(d)?;
            }
            Op::BogusAck { pick } => {
                if model.consumers.is_empty() {
                    continue;
                }
                let conn = model.consumers[pick % model.consumers.len()];
                ensure!(broker.ack(conn, u64::MAX).is_err(), "bogus ack accepted");
            }
        }
        check(&broker, &model)?;
    }
    Ok(())
}

/// One consumer with the given prefetch, subscribed before (`early`) or
/// after `n` publishes, acking in arrival order: it must see publish order.
pub fn single_consumer_order(n: usize, prefetch: u32, early: bool) -> Result<(), String> {
    let mut broker = Broker::new();
    let p = broker.connect();
    let w = broker.connect();
    let mut seen = Vec::new();
    let mut inflight = VecDeque::new();
    let err = |e: crate::BrokerError| e.to_string();
    if early {
        inflight.extend(broker.subscribe(w, "q", "w", prefetch).map_err(err)?);
    }
    for i in 0..n {
        inflight.extend(
            broker
                .publish(p, "q", (i as u64).to_be_bytes().to_vec(), String::new(), None)
                .map_err(err)?,
        );
    }
    if !early {
        inflight.extend(broker.subscribe(w, "q", "w", prefetch).map_err(err)?);
    }
    while let Some(d) = inflight.pop_front() {
        let bytes: [u8; 8] = d
            .message
            .body
            .as_slice()
            .try_into()
            .map_err(|_| "bad body".to_string())?;
        seen.push(u64::from_be_bytes(bytes) as usize);
        inflight.extend(broker.ack(w, d.delivery_tag).map_err(err)?);
    }
    ensure!(
        seen == (0..n).collect::<Vec<_>>(),
        "order {seen:?} differs from publish order"
    );
    Ok(())
}

/// `k` prefetch-1 consumers that all finish their current message in the
/// same step. Returns how many of `n` messages each consumer received.
pub fn lockstep_counts(n: usize, k: usize) -> Vec<usize> {
    let mut broker = Broker::new();
    let p = broker.connect();
    let conns: Vec<ConnId> = (0..k).map(|_| broker.connect()).collect();
    for (i, c) in conns.iter().enumerate() {
        broker.subscribe(*c, "q", &format!("w{i}"), 1).expect("fresh consumer");
    }
    let index = |d: &Delivery| d.consumer_id[1..].parse::<usize>().expect("w<i>");
    let mut counts = vec![0usize; k];
    let mut arrivals = Vec::new();
    for _ in 0..n {
        arrivals.extend(broker.publish(p, "q", vec![], String::new(), None).expect("publish"));
    }
    let mut holding: BTreeMap<usize, Delivery> = BTreeMap::new();
    loop {
        for d in arrivals.drain(..) {
            counts[index(&d)] += 1;
            holding.insert(index(&d), d);
        }
        if holding.is_empty() {
            break;
        }
        for (_, d) in std::mem::take(&mut holding) {
            arrivals.extend(broker.ack(d.conn, d.delivery_tag).expect("held tag"));
        }
    }
    counts
}

/// Round-robin fairness: every consumer gets between floor(n/k) and
/// ceil(n/k) messages.
pub fn check_fairness(n: usize, k: usize) -> Result<(), String> {
    let counts = lockstep_counts(n, k);
    let (lo, hi) = (n / k, n.div_ceil(k));
    ensure!(
        counts.iter().all(|c| (lo..=hi).contains(c)),
        "counts {counts:?} outside [{lo}, {hi}]"
    );
    ensure!(counts.iter().sum::<usize>() == n, "counts {counts:?} do not sum to {n}");
    Ok(())
}
