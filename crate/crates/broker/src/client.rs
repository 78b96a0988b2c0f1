//! Blocking client session.
//!
//! A background thread reads frames: `DELIVER` frames go to the delivery
//! channel, everything else answers the single outstanding request. Requests
//! are serialized, so replies match requests in order.

use std::io::{self, Write};
use std::net::{Shutdown, SocketAddr, TcpStream, ToSocketAddrs};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use thiserror::Error;

use crate::state::QueueStats;
use crate::wire::{encode_frame, Command, CommandReader, WireError, PROTOCOL_VERSION};

pub const DEFAULT_REPLY_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("wire: {0}")]
    Wire(#[from] WireError),
    #[error("broker replied {code}: {message}")]
    Remote { code: String, message: String },
    #[error("connection to broker lost")]
    Disconnected,
    #[error("no reply from broker within {0:?}")]
    Timeout(Duration),
    #[error("unexpected reply {0}")]
    Unexpected(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Delivery {
    pub queue: String,
    pub consumer_id: String,
    pub delivery_tag: u64,
    pub body: Vec<u8>,
    pub correlation_id: String,
    pub reply_to: Option<String>,
    pub redelivered: bool,
}

pub struct Session {
    stream: Mutex<TcpStream>,
    replies: Mutex<Receiver<Result<Command, ClientError>>>,
    deliveries: Receiver<Delivery>,
    reply_timeout: Duration,
    peer: SocketAddr,
}

impl Session {
    /// Connects and performs the HELLO handshake.
    pub fn connect(addr: impl ToSocketAddrs, role: &str) -> Result<Session, ClientError> {
        let stream = TcpStream::connect(addr)?;
        Session::handshake(stream, role)
    }

    pub fn handshake(stream: TcpStream, role: &str) -> Result<Session, ClientError> {
        let _ = stream.set_nodelay(true);
        let peer = stream.peer_addr()?;
        let read_half = stream.try_clone()?;
        let (reply_tx, reply_rx) = mpsc::channel();
        let (deliver_tx, deliver_rx) = mpsc::channel();
        thread::Builder::new().name(format!("session-{role}")).spawn(move || {
            let mut reader = CommandReader::new(read_half);
            loop {
                match reader.read_command() {
                    Ok(Some(Command::Deliver {
                        queue,
                        consumer_id,
                        delivery_tag,
                        body,
                        correlation_id,
                        reply_to,
                        redelivered,
                    })) => {
                        let _ = deliver_tx.send(Delivery {
                            queue,
                            consumer_id,
                            delivery_tag,
                            body,
                            correlation_id,
                            reply_to,
                            redelivered,
                        });
                    }
                    Ok(Some(other)) => {
                        if reply_tx.send(Ok(other)).is_err() {
                            return;
                        }
                    }
                    Ok(None) | Err(WireError::Io(_)) => return,
                    Err(e) => {
                        let _ = reply_tx.send(Err(e.into()));
                        return;
                    }
                }
            }
        })?;
        let session = Session {
            stream: Mutex::new(stream),
            replies: Mutex::new(reply_rx),
            deliveries: deliver_rx,
            reply_timeout: DEFAULT_REPLY_TIMEOUT,
            peer,
        };
        session.request(Command::Hello {
            role: role.to_string(),
            protocol_version: PROTOCOL_VERSION,
        })?;
        Ok(session)
    }

    pub fn peer(&self) -> SocketAddr {
        self.peer
    }

    pub fn set_reply_timeout(&mut self, timeout: Duration) {
        self.reply_timeout = timeout;
    }

    /// Writes one frame without waiting for a reply.
    pub fn send_raw(&self, command: &Command) -> Result<(), ClientError> {
        let bytes = encode_frame(command)?;
        let mut s = self.stream.lock().unwrap_or_else(|p| p.into_inner());
        s.write_all(&bytes)?;
        Ok(())
    }

    fn request(&self, command: Command) -> Result<Command, ClientError> {
        let replies = self.replies.lock().unwrap_or_else(|p| p.into_inner());
        self.send_raw(&command)?;
        match replies.recv_timeout(self.reply_timeout) {
            Ok(Ok(Command::Err { code, message })) => Err(ClientError::Remote { code, message }),
            Ok(reply) => reply,
            Err(RecvTimeoutError::Timeout) => Err(ClientError::Timeout(self.reply_timeout)),
            Err(RecvTimeoutError::Disconnected) => Err(ClientError::Disconnected),
        }
    }

    fn expect_ok(&self, command: Command) -> Result<(), ClientError> {
        match self.request(command)? {
            Command::Ok => Ok(()),
            other => Err(ClientError::Unexpected(other.op())),
        }
    }

    pub fn declare(&self, queue: &str) -> Result<(), ClientError> {
        self.expect_ok(Command::Declare {
            queue: queue.to_string(),
        })
    }

    pub fn publish(
        &self,
        queue: &str,
        body: Vec<u8>,
        correlation_id: &str,
        reply_to: Option<&str>,
    ) -> Result<(), ClientError> {
        self.expect_ok(Command::Publish {
            queue: queue.to_string(),
            body,
            correlation_id: correlation_id.to_string(),
            reply_to: reply_to.map(str::to_string),
        })
    }

    pub fn subscribe(&self, queue: &str, consumer_id: &str, prefetch: u32) -> Result<(), ClientError> {
        self.expect_ok(Command::Subscribe {
            queue: queue.to_string(),
            consumer_id: consumer_id.to_string(),
            prefetch,
        })
    }

    pub fn ack(&self, delivery_tag: u64) -> Result<(), ClientError> {
        self.expect_ok(Command::Ack { delivery_tag })
    }

    pub fn stats(&self, queue: &str) -> Result<QueueStats, ClientError> {
        match self.request(Command::Stats {
            queue: queue.to_string(),
        })? {
            Command::StatsReply {
                depth,
                consumer_count,
                in_flight_total,
                ..
            } => Ok(QueueStats {
                depth: depth as usize,
                consumer_count: consumer_count as usize,
                in_flight_total: in_flight_total as usize,
            }),
            other => Err(ClientError::Unexpected(other.op())),
        }
    }

    /// Next delivery, `Ok(None)` on timeout, `Disconnected` once the broker
    /// connection is gone and no deliveries remain buffered.
    pub fn recv_delivery(&self, timeout: Duration) -> Result<Option<Delivery>, ClientError> {
        match self.deliveries.recv_timeout(timeout) {
            Ok(d) => Ok(Some(d)),
            Err(RecvTimeoutError::Timeout) => Ok(None),
            Err(RecvTimeoutError::Disconnected) => Err(ClientError::Disconnected),
        }
    }

    /// Graceful close; unacked deliveries are requeued by the broker.
    pub fn close(self) -> Result<(), ClientError> {
        let result = self.expect_ok(Command::Close);
        self.abort();
        result
    }

    /// Drops the TCP connection without a CLOSE, as a crash would.
    pub fn abort(&self) {
        let s = self.stream.lock().unwrap_or_else(|p| p.into_inner());
        let _ = s.shutdown(Shutdown::Both);
    }
}

impl Drop for Session {
    fn drop(&mut self) {
        self.abort();
    }
}
