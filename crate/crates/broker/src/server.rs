//! TCP front end for [`Broker`].
//!
//! One reader thread and one writer thread per connection. The reader
//! applies commands to the shared state under a single lock and enqueues the
//! resulting frames (replies and deliveries) on the writer channels while
//! still holding it, so frames leave in linearization order. Only the writer
//! thread touches the socket's write half, which keeps frames whole.

use std::collections::HashMap;
use std::io::{self, BufWriter, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Sender};
use std::sync::{Arc, Mutex, MutexGuard};
use std::thread::{self, JoinHandle};

use log::{debug, info, warn};

use crate::state::{Broker, ConnId, Delivery};
use crate::wire::{encode_frame, Command, CommandReader, WireError, PROTOCOL_VERSION};

enum Outbound {
    Frame(Command),
    /// Flush, then shut the socket down.
    Close,
}

struct Shared {
    broker: Broker,
    writers: HashMap<ConnId, Sender<Outbound>>,
    streams: HashMap<ConnId, TcpStream>,
}

impl Shared {
    fn route(&self, deliveries: Vec<Delivery>) {
        for d in deliveries {
            if let Some(tx) = self.writers.get(&d.conn) {
                let _ = tx.send(Outbound::Frame(Command::Deliver {
                    queue: d.queue,
                    consumer_id: d.consumer_id,
                    delivery_tag: d.delivery_tag,
                    body: d.message.body,
                    correlation_id: d.message.correlation_id,
                    reply_to: d.message.reply_to,
                    redelivered: d.message.redelivered,
                }));
            }
        }
    }
}

/// A bound, not yet serving, broker.
pub struct BrokerServer {
    listener: TcpListener,
    shared: Arc<Mutex<Shared>>,
    stop: Arc<AtomicBool>,
}

/// Handle to a broker serving on a background thread.
pub struct ServerHandle {
    addr: SocketAddr,
    shared: Arc<Mutex<Shared>>,
    stop: Arc<AtomicBool>,
    accept: Option<JoinHandle<()>>,
}

fn lock(shared: &Mutex<Shared>) -> MutexGuard<'_, Shared> {
    shared.lock().unwrap_or_else(|p| p.into_inner())
}

impl BrokerServer {
    /// Fails if the address is already in use.
    pub fn bind(addr: impl ToSocketAddrs) -> io::Result<BrokerServer> {
        let listener = TcpListener::bind(addr)?;
        Ok(BrokerServer {
            listener,
            shared: Arc::new(Mutex::new(Shared {
                broker: Broker::new(),
                writers: HashMap::new(),
                streams: HashMap::new(),
            })),
            stop: Arc::new(AtomicBool::new(false)),
        })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    /// Accepts connections until the process exits.
    pub fn run(self) {
        accept_loop(self.listener, self.shared, self.stop);
    }

    pub fn spawn(self) -> io::Result<ServerHandle> {
        let addr = self.local_addr()?;
        let shared = Arc::clone(&self.shared);
        let stop = Arc::clone(&self.stop);
        let accept = thread::Builder::new()
            .name("broker-accept".into())
            .spawn(move || self.run())?;
        Ok(ServerHandle {
            addr,
            shared,
            stop,
            accept: Some(accept),
        })
    }
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Runs `f` against the live broker state.
    pub fn inspect<T>(&self, f: impl FnOnce(&Broker) -> T) -> T {
        f(&lock(&self.shared).broker)
    }

    /// Stops accepting and drops every connection.
    pub fn shutdown(&mut self) {
        if self.stop.swap(true, Ordering::SeqCst) {
            return;
        }
        // wake the blocking accept
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
        let shared = lock(&self.shared);
        for s in shared.streams.values() {
            let _ = s.shutdown(Shutdown::Both);
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.shutdown();
    }
}

fn accept_loop(listener: TcpListener, shared: Arc<Mutex<Shared>>, stop: Arc<AtomicBool>) {
    for stream in listener.incoming() {
        if stop.load(Ordering::SeqCst) {
            break;
        }
        match stream {
            Ok(stream) => {
                let shared = Arc::clone(&shared);
                if let Err(e) = start_connection(stream, shared) {
                    warn!("failed to start connection: {e}");
                }
            }
            Err(e) => warn!("accept failed: {e}"),
        }
    }
}

fn start_connection(stream: TcpStream, shared: Arc<Mutex<Shared>>) -> io::Result<()> {
    let _ = stream.set_nodelay(true);
    let peer = stream.peer_addr().ok();
    let write_half = stream.try_clone()?;
    let (tx, rx) = mpsc::channel::<Outbound>();
    let conn = {
        let mut s = lock(&shared);
        let conn = s.broker.connect();
        s.writers.insert(conn, tx.clone());
        s.streams.insert(conn, stream.try_clone()?);
        conn
    };
    debug!("conn {conn} opened from {peer:?}");

    thread::Builder::new().name(format!("broker-w{conn}")).spawn(move || {
        let shutdown_half = write_half.try_clone().ok();
        let mut out = BufWriter::new(write_half);
        while let Ok(msg) = rx.recv() {
            let mut frames = vec![msg];
            // batch whatever is already queued into one flush
            frames.extend(rx.try_iter());
            let mut close = false;
            for f in frames {
                match f {
                    Outbound::Frame(cmd) => match encode_frame(&cmd) {
                        Ok(bytes) => {
                            if out.write_all(&bytes).is_err() {
                                return;
                            }
                        }
                        Err(e) => warn!("conn {conn}: dropping unencodable frame: {e}"),
                    },
                    Outbound::Close => close = true,
                }
            }
            if out.flush().is_err() {
                return;
            }
            if close {
                break;
            }
        }
        if let Some(s) = shutdown_half {
            let _ = s.shutdown(Shutdown::Both);
        }
    })?;

    thread::Builder::new().name(format!("broker-r{conn}")).spawn(move || {
        serve_connection(conn, stream, &shared, &tx);
        let mut s = lock(&shared);
        let redelivered = s.broker.disconnect(conn);
        s.writers.remove(&conn);
        s.streams.remove(&conn);
        s.route(redelivered);
        debug!("conn {conn} closed");
    })?;
    Ok(())
}

fn serve_connection(conn: ConnId, stream: TcpStream, shared: &Mutex<Shared>, tx: &Sender<Outbound>) {
    let fail = |code: &str, message: String| {
        debug!("conn {conn}: {code}: {message}");
        let _ = tx.send(Outbound::Frame(Command::err(code, message)));
        let _ = tx.send(Outbound::Close);
    };
    let mut reader = CommandReader::new(stream);
    let mut handshaken = false;
    loop {
        let cmd = match reader.read_command() {
            Ok(Some(cmd)) => cmd,
            Ok(None) => return,
            Err(WireError::Io(e)) => {
                debug!("conn {conn}: read ended: {e}");
                return;
            }
            Err(e) => return fail(e.code(), e.to_string()),
        };

        if !handshaken {
            match cmd {
                Command::Hello {
                    protocol_version: PROTOCOL_VERSION,
                    role,
                } => {
                    info!("conn {conn}: hello from {role}");
                    handshaken = true;
                    let _ = tx.send(Outbound::Frame(Command::Ok));
                    continue;
                }
                Command::Hello { protocol_version, .. } => {
                    return fail(
                        "version",
                        format!("unsupported protocol version {protocol_version}, expected {PROTOCOL_VERSION}"),
                    )
                }
                other => return fail("no_handshake", format!("{} before HELLO", other.op())),
            }
        }

        let mut s = lock(shared);
        let result = match cmd {
            Command::Declare { queue } => s.broker.declare_queue(&queue).map(|_| (Command::Ok, vec![])),
            Command::Publish {
                queue,
                body,
                correlation_id,
                reply_to,
            } => s
                .broker
                .publish(conn, &queue, body, correlation_id, reply_to)
                .map(|d| (Command::Ok, d)),
            Command::Subscribe {
                queue,
                consumer_id,
                prefetch,
            } => s
                .broker
                .subscribe(conn, &queue, &consumer_id, prefetch)
                .map(|d| (Command::Ok, d)),
            Command::Ack { delivery_tag } => s.broker.ack(conn, delivery_tag).map(|d| (Command::Ok, d)),
            Command::Stats { queue } => s.broker.stats(&queue).map(|st| {
                (
                    Command::StatsReply {
                        queue,
                        depth: st.depth as u64,
                        consumer_count: st.consumer_count as u64,
                        in_flight_total: st.in_flight_total as u64,
                    },
                    vec![],
                )
            }),
            Command::Close => {
                let _ = tx.send(Outbound::Frame(Command::Ok));
                let _ = tx.send(Outbound::Close);
                return;
            }
            other @ (Command::Hello { .. }
            | Command::Deliver { .. }
            | Command::Ok
            | Command::Err { .. }
            | Command::StatsReply { .. }) => {
                drop(s);
                return fail("bad_op", format!("{} is not a client command", other.op()));
            }
        };
        match result {
            Ok((reply, deliveries)) => {
                let _ = tx.send(Outbound::Frame(reply));
                s.route(deliveries);
            }
            Err(e) if e.is_connection_fault() => {
                drop(s);
                return fail(e.code(), e.to_string());
            }
            Err(e) => {
                let _ = tx.send(Outbound::Frame(Command::err(e.code(), e.to_string())));
            }
        }
    }
}
