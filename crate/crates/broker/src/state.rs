//! In-memory broker state.
//!
//! Every operation mutates the state and returns the deliveries it caused;
//! the server routes those to connections. Keeping I/O out of this module
//! makes per-queue operations trivially linearizable (the server holds one
//! lock around each call) and lets tests drive the broker deterministically.
//!
//! A message is always in exactly one place: a queue's `pending` buffer, the
//! `in_flight` map of exactly one consumer, or gone after its ack.

use std::collections::{BTreeMap, HashMap, VecDeque};

use thiserror::Error;

pub type ConnId = u64;

pub const MAX_QUEUE_NAME: usize = 255;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    /// Broker-assigned identity, stable across redeliveries.
    pub id: u64,
    pub body: Vec<u8>,
    pub correlation_id: String,
    pub reply_to: Option<String>,
    pub redelivered: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Delivery {
    pub conn: ConnId,
    pub queue: String,
    pub consumer_id: String,
    pub delivery_tag: u64,
    pub message: Message,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueueStats {
    pub depth: usize,
    pub consumer_count: usize,
    pub in_flight_total: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BrokerError {
    #[error("invalid queue name {0:?}")]
    InvalidQueueName(String),
    #[error("queue {0:?} does not exist")]
    UnknownQueue(String),
    #[error("consumer {consumer_id:?} already subscribed to {queue:?}")]
    DuplicateConsumer { queue: String, consumer_id: String },
    #[error("prefetch must be at least 1")]
    InvalidPrefetch,
    #[error("unknown delivery tag {0}")]
    UnknownDeliveryTag(u64),
    #[error("connection {0} is closed")]
    ConnectionClosed(ConnId),
}

impl BrokerError {
    pub fn code(&self) -> &'static str {
        match self {
            BrokerError::InvalidQueueName(_) => "bad_queue",
            BrokerError::UnknownQueue(_) => "not_found",
            BrokerError::DuplicateConsumer { .. } => "duplicate_consumer",
            BrokerError::InvalidPrefetch => "bad_prefetch",
            BrokerError::UnknownDeliveryTag(_) => "unknown_tag",
            BrokerError::ConnectionClosed(_) => "closed",
        }
    }

    /// Whether the offending connection must be closed after the ERR frame.
    pub fn is_connection_fault(&self) -> bool {
        matches!(self, BrokerError::UnknownDeliveryTag(_))
    }
}

#[derive(Debug)]
struct Consumer {
    id: String,
    conn: ConnId,
    prefetch: usize,
    in_flight: BTreeMap<u64, Message>,
}

#[derive(Debug, Default)]
struct Queue {
    pending: VecDeque<Message>,
    consumers: Vec<Consumer>,
    cursor: usize,
}

#[derive(Debug, Default)]
struct Connection {
    next_tag: u64,
    /// delivery tag -> queue holding the in-flight message
    tags: HashMap<u64, String>,
}

#[derive(Debug, Default)]
pub struct Broker {
    queues: BTreeMap<String, Queue>,
    conns: HashMap<ConnId, Connection>,
    next_conn: ConnId,
    next_message: u64,
}

fn check_name(name: &str) -> Result<(), BrokerError> {
    if name.is_empty() || name.len() > MAX_QUEUE_NAME {
        Err(BrokerError::InvalidQueueName(name.to_string()))
    } else {
        Ok(())
    }
}

impl Broker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn connect(&mut self) -> ConnId {
        let id = self.next_conn;
        self.next_conn += 1;
        self.conns.insert(id, Connection::default());
        id
    }

    /// Id the next published message will receive.
    pub fn next_message_id(&self) -> u64 {
        self.next_message
    }

    pub fn is_open(&self, conn: ConnId) -> bool {
        self.conns.contains_key(&conn)
    }

    /// Idempotent.
    pub fn declare_queue(&mut self, name: &str) -> Result<(), BrokerError> {
        check_name(name)?;
        self.queues.entry(name.to_string()).or_default();
        Ok(())
    }

    /// Appends to the queue (declaring it if needed) and dispatches.
    pub fn publish(
        &mut self,
        conn: ConnId,
        queue: &str,
        body: Vec<u8>,
        correlation_id: String,
        reply_to: Option<String>,
    ) -> Result<Vec<Delivery>, BrokerError> {
        if !self.is_open(conn) {
            return Err(BrokerError::ConnectionClosed(conn));
        }
        self.declare_queue(queue)?;
        let id = self.next_message;
        self.next_message += 1;
        self.queues
            .get_mut(queue)
            .expect("declared above")
            .pending
            .push_back(Message {
                id,
                body,
                correlation_id,
                reply_to,
                redelivered: false,
            });
        Ok(self.dispatch(queue))
    }

    pub fn subscribe(
        &mut self,
        conn: ConnId,
        queue: &str,
        consumer_id: &str,
        prefetch: u32,
    ) -> Result<Vec<Delivery>, BrokerError> {
        if !self.is_open(conn) {
            return Err(BrokerError::ConnectionClosed(conn));
        }
        if prefetch == 0 {
            return Err(BrokerError::InvalidPrefetch);
        }
        self.declare_queue(queue)?;
        let q = self.queues.get_mut(queue).expect("declared above");
        if q.consumers.iter().any(|c| c.id == consumer_id) {
            return Err(BrokerError::DuplicateConsumer {
                queue: queue.to_string(),
                consumer_id: consumer_id.to_string(),
            });
        }
        q.consumers.push(Consumer {
            id: consumer_id.to_string(),
            conn,
            prefetch: prefetch as usize,
            in_flight: BTreeMap::new(),
        });
        Ok(self.dispatch(queue))
    }

    pub fn ack(&mut self, conn: ConnId, delivery_tag: u64) -> Result<Vec<Delivery>, BrokerError> {
        let c = self.conns.get_mut(&conn).ok_or(BrokerError::ConnectionClosed(conn))?;
        let queue = c
            .tags
            .remove(&delivery_tag)
            .ok_or(BrokerError::UnknownDeliveryTag(delivery_tag))?;
        let q = self.queues.get_mut(&queue).expect("tags only point at live queues");
        let removed = q
            .consumers
            .iter_mut()
            .filter(|c| c.conn == conn)
            .find_map(|c| c.in_flight.remove(&delivery_tag));
        debug_assert!(removed.is_some(), "tag index out of sync");
        Ok(self.dispatch(&queue))
    }

    /// Drops the connection: its consumers leave their rings and their
    /// unacked messages go back to the front of `pending`, oldest first.
    pub fn disconnect(&mut self, conn: ConnId) -> Vec<Delivery> {
        if self.conns.remove(&conn).is_none() {
            return Vec::new();
        }
        let mut touched = Vec::new();
        for (name, q) in self.queues.iter_mut() {
            if !q.consumers.iter().any(|c| c.conn == conn) {
                continue;
            }
            let mut returned: Vec<(u64, Message)> = Vec::new();
            let mut kept = Vec::with_capacity(q.consumers.len());
            for (i, c) in q.consumers.drain(..).enumerate() {
                if c.conn == conn {
                    returned.extend(c.in_flight);
                    if i < q.cursor {
                        q.cursor -= 1;
                    }
                } else {
                    kept.push(c);
                }
            }
            q.consumers = kept;
            if q.cursor >= q.consumers.len() {
                q.cursor = 0;
            }
            returned.sort_by_key(|(tag, _)| *tag);
            for (_, mut m) in returned.into_iter().rev() {
                m.redelivered = true;
                q.pending.push_front(m);
            }
            touched.push(name.clone());
        }
        touched.iter().flat_map(|name| self.dispatch(name)).collect()
    }

    pub fn stats(&self, queue: &str) -> Result<QueueStats, BrokerError> {
        let q = self
            .queues
            .get(queue)
            .ok_or_else(|| BrokerError::UnknownQueue(queue.to_string()))?;
        Ok(QueueStats {
            depth: q.pending.len(),
            consumer_count: q.consumers.len(),
            in_flight_total: q.consumers.iter().map(|c| c.in_flight.len()).sum(),
        })
    }

    /// Pending messages of `queue`, head first.
    pub fn pending(&self, queue: &str) -> impl Iterator<Item = &Message> {
        self.queues.get(queue).into_iter().flat_map(|q| q.pending.iter())
    }

    /// In-flight messages of `queue` with their consumer and prefetch.
    pub fn in_flight(&self, queue: &str) -> impl Iterator<Item = (&str, usize, &Message)> {
        self.queues.get(queue).into_iter().flat_map(|q| {
            q.consumers
                .iter()
                .flat_map(|c| c.in_flight.values().map(move |m| (c.id.as_str(), c.prefetch, m)))
        })
    }

    pub fn queue_names(&self) -> impl Iterator<Item = &str> {
        self.queues.keys().map(String::as_str)
    }

    /// Round-robin: starting at the cursor, hand the head message to the
    /// first consumer below its prefetch, then move the cursor past it.
    fn dispatch(&mut self, queue: &str) -> Vec<Delivery> {
        let mut out = Vec::new();
        let Some(q) = self.queues.get_mut(queue) else {
            return out;
        };
        while !q.pending.is_empty() {
            let n = q.consumers.len();
            let Some(i) = (0..n)
                .map(|k| (q.cursor + k) % n)
                .find(|&i| q.consumers[i].in_flight.len() < q.consumers[i].prefetch)
            else {
                break;
            };
            let message = q.pending.pop_front().expect("non-empty");
            let consumer = &mut q.consumers[i];
            let conn = self
                .conns
                .get_mut(&consumer.conn)
                .expect("consumers belong to open connections");
            conn.next_tag += 1;
            let tag = conn.next_tag;
            conn.tags.insert(tag, queue.to_string());
            consumer.in_flight.insert(tag, message.clone());
            out.push(Delivery {
                conn: consumer.conn,
                queue: queue.to_string(),
                consumer_id: consumer.id.clone(),
                delivery_tag: tag,
                message,
            });
            q.cursor = (i + 1) % n;
        }
        out
    }
}
