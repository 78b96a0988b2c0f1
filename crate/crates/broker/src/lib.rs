//! A small work-queue broker speaking a length-prefixed JSON protocol.
//!
//! Supports the subset of AMQP queueing semantics a master/worker GA needs:
//! direct named queues, publish, subscribe with prefetch, round-robin
//! dispatch, acknowledgements and requeue of unacked messages when a
//! consumer's connection drops. State lives in memory only.

pub mod client;
pub mod server;
pub mod sim;
pub mod state;
pub mod wire;

pub use client::{ClientError, Delivery, Session};
pub use server::{BrokerServer, ServerHandle};
pub use state::{Broker, BrokerError, ConnId, Message, QueueStats};
pub use wire::{Command, FrameDecoder, WireError, MAX_FRAME_LEN, PROTOCOL_VERSION};
