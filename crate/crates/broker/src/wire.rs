//! Frame codec: `[u32 big-endian length][UTF-8 JSON command]`.
//!
//! Message bodies are base64 inside the JSON envelope so every payload stays
//! valid UTF-8 text. Decoding is incremental: [`FrameDecoder`] buffers
//! partial frames and yields commands as soon as they are complete.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const PROTOCOL_VERSION: u32 = 1;

/// Largest accepted payload (16 MiB).
pub const MAX_FRAME_LEN: usize = 16 * 1024 * 1024;

const LEN_PREFIX: usize = 4;

/// One protocol command. Encoded as a JSON object whose `op` field names
/// the variant; decoding goes through [`Envelope`] so that schema errors keep
/// their byte position.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "op", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Command {
    Hello {
        role: String,
        protocol_version: u32,
    },
    Declare {
        queue: String,
    },
    Publish {
        queue: String,
        #[serde(with = "body_b64")]
        body: Vec<u8>,
        correlation_id: String,
        reply_to: Option<String>,
    },
    Subscribe {
        queue: String,
        consumer_id: String,
        prefetch: u32,
    },
    Ack {
        delivery_tag: u64,
    },
    Deliver {
        queue: String,
        consumer_id: String,
        delivery_tag: u64,
        #[serde(with = "body_b64")]
        body: Vec<u8>,
        correlation_id: String,
        reply_to: Option<String>,
        redelivered: bool,
    },
    Ok,
    Err {
        code: String,
        message: String,
    },
    Stats {
        queue: String,
    },
    StatsReply {
        queue: String,
        depth: u64,
        consumer_count: u64,
        in_flight_total: u64,
    },
    Close,
}

const OPS: &[&str] = &[
    "HELLO",
    "DECLARE",
    "PUBLISH",
    "SUBSCRIBE",
    "ACK",
    "DELIVER",
    "OK",
    "ERR",
    "STATS",
    "STATS_REPLY",
    "CLOSE",
];

impl Command {
    pub fn err(code: &str, message: impl Into<String>) -> Command {
        Command::Err {
            code: code.to_string(),
            message: message.into(),
        }
    }

    pub fn op(&self) -> &'static str {
        match self {
            Command::Hello { .. } => "HELLO",
            Command::Declare { .. } => "DECLARE",
            Command::Publish { .. } => "PUBLISH",
            Command::Subscribe { .. } => "SUBSCRIBE",
            Command::Ack { .. } => "ACK",
            Command::Deliver { .. } => "DELIVER",
            Command::Ok => "OK",
            Command::Err { .. } => "ERR",
            Command::Stats { .. } => "STATS",
            Command::StatsReply { .. } => "STATS_REPLY",
            Command::Close => "CLOSE",
        }
    }
}

mod body_b64 {
    use base64::engine::general_purpose::STANDARD;
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(body: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&STANDARD.encode(body))
    }

    pub fn deserialize_opt<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<u8>>, D::Error> {
        let text = <std::borrow::Cow<'de, str>>::deserialize(d)?;
        STANDARD
            .decode(text.as_bytes())
            .map(Some)
            .map_err(serde::de::Error::custom)
    }
}

/// Absent stays `None`, an explicit `null` becomes `Some(None)`.
fn present<'de, D, T>(d: D) -> Result<Option<Option<T>>, D::Error>
where
    D: serde::Deserializer<'de>,
    T: Deserialize<'de>,
{
    Option::<T>::deserialize(d).map(Some)
}

/// Every field any command may carry.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Envelope {
    op: String,
    role: Option<String>,
    protocol_version: Option<u32>,
    queue: Option<String>,
    #[serde(default, deserialize_with = "body_b64::deserialize_opt")]
    body: Option<Vec<u8>>,
    correlation_id: Option<String>,
    #[serde(default, deserialize_with = "present")]
    reply_to: Option<Option<String>>,
    consumer_id: Option<String>,
    prefetch: Option<u32>,
    delivery_tag: Option<u64>,
    redelivered: Option<bool>,
    code: Option<String>,
    message: Option<String>,
    depth: Option<u64>,
    consumer_count: Option<u64>,
    in_flight_total: Option<u64>,
}

impl Envelope {
    fn into_command(mut self, text: &str) -> Result<Command, WireError> {
        fn need<T>(v: Option<T>, field: &str, text: &str) -> Result<T, WireError> {
            v.ok_or_else(|| WireError::Malformed {
                offset: text.len().saturating_sub(1),
                message: format!("missing field `{field}`"),
            })
        }
        let cmd = match self.op.as_str() {
            "HELLO" => Command::Hello {
                role: need(self.role.take(), "role", text)?,
                protocol_version: need(self.protocol_version.take(), "protocol_version", text)?,
            },
            "DECLARE" => Command::Declare {
                queue: need(self.queue.take(), "queue", text)?,
            },
            "PUBLISH" => Command::Publish {
                queue: need(self.queue.take(), "queue", text)?,
                body: need(self.body.take(), "body", text)?,
                correlation_id: need(self.correlation_id.take(), "correlation_id", text)?,
                reply_to: self.reply_to.take().flatten(),
            },
            "SUBSCRIBE" => Command::Subscribe {
                queue: need(self.queue.take(), "queue", text)?,
                consumer_id: need(self.consumer_id.take(), "consumer_id", text)?,
                prefetch: need(self.prefetch.take(), "prefetch", text)?,
            },
            "ACK" => Command::Ack {
                delivery_tag: need(self.delivery_tag.take(), "delivery_tag", text)?,
            },
            "DELIVER" => Command::Deliver {
                queue: need(self.queue.take(), "queue", text)?,
                consumer_id: need(self.consumer_id.take(), "consumer_id", text)?,
                delivery_tag: need(self.delivery_tag.take(), "delivery_tag", text)?,
                body: need(self.body.take(), "body", text)?,
                correlation_id: need(self.correlation_id.take(), "correlation_id", text)?,
                reply_to: self.reply_to.take().flatten(),
                redelivered: need(self.redelivered.take(), "redelivered", text)?,
            },
            "OK" => Command::Ok,
            "ERR" => Command::Err {
                code: need(self.code.take(), "code", text)?,
                message: need(self.message.take(), "message", text)?,
            },
            "STATS" => Command::Stats {
                queue: need(self.queue.take(), "queue", text)?,
            },
            "STATS_REPLY" => Command::StatsReply {
                queue: need(self.queue.take(), "queue", text)?,
                depth: need(self.depth.take(), "depth", text)?,
                consumer_count: need(self.consumer_count.take(), "consumer_count", text)?,
                in_flight_total: need(self.in_flight_total.take(), "in_flight_total", text)?,
            },
            "CLOSE" => Command::Close,
            _ => return Err(WireError::UnknownOp(self.op)),
        };
        if let Some(field) = self.leftover() {
            let key = format!("\"{field}\"");
            return Err(WireError::Malformed {
                offset: text.find(&key).unwrap_or(0),
                message: format!("field `{field}` is not valid for {}", cmd.op()),
            });
        }
        Ok(cmd)
    }

    fn leftover(&self) -> Option<&'static str> {
        [
            ("role", self.role.is_some()),
            ("protocol_version", self.protocol_version.is_some()),
            ("queue", self.queue.is_some()),
            ("body", self.body.is_some()),
            ("correlation_id", self.correlation_id.is_some()),
            ("reply_to", self.reply_to.is_some()),
            ("consumer_id", self.consumer_id.is_some()),
            ("prefetch", self.prefetch.is_some()),
            ("delivery_tag", self.delivery_tag.is_some()),
            ("redelivered", self.redelivered.is_some()),
            ("code", self.code.is_some()),
            ("message", self.message.is_some()),
            ("depth", self.depth.is_some()),
            ("consumer_count", self.consumer_count.is_some()),
            ("in_flight_total", self.in_flight_total.is_some()),
        ]
        .into_iter()
        .find_map(|(name, set)| set.then_some(name))
    }
}

#[derive(Debug, Error)]
pub enum WireError {
    #[error("frame of {len} bytes exceeds the {MAX_FRAME_LEN} byte limit")]
    FrameTooLarge { len: usize },
    #[error("malformed payload at byte {offset}: {message}")]
    Malformed { offset: usize, message: String },
    #[error("unknown op {0:?}")]
    UnknownOp(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl WireError {
    /// Code carried by the ERR frame sent in response.
    pub fn code(&self) -> &'static str {
        match self {
            WireError::FrameTooLarge { .. } => "frame_too_large",
            WireError::Malformed { .. } => "malformed",
            WireError::UnknownOp(_) => "bad_op",
            WireError::Io(_) => "io",
        }
    }
}

pub fn encode_frame(command: &Command) -> Result<Vec<u8>, WireError> {
    let payload = serde_json::to_vec(command).map_err(|e| WireError::Malformed {
        offset: 0,
        message: e.to_string(),
    })?;
    if payload.len() > MAX_FRAME_LEN {
        return Err(WireError::FrameTooLarge { len: payload.len() });
    }
    let mut frame = Vec::with_capacity(LEN_PREFIX + payload.len());
    frame.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    frame.extend_from_slice(&payload);
    Ok(frame)
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let line_start: usize = text
        .split_inclusive('\n')
        .take(line.saturating_sub(1))
        .map(str::len)
        .sum();
    (line_start + column.saturating_sub(1)).min(text.len())
}

/// Parses one frame payload.
pub fn decode_payload(payload: &[u8]) -> Result<Command, WireError> {
    let text = std::str::from_utf8(payload).map_err(|e| WireError::Malformed {
        offset: e.valid_up_to(),
        message: "payload is not valid UTF-8".into(),
    })?;
    let envelope = serde_json::from_str::<Envelope>(text).map_err(|e| {
        // an unknown op wins over schema errors its unknown fields would cause
        if let Ok(serde_json::Value::Object(obj)) = serde_json::from_str::<serde_json::Value>(text) {
            if let Some(serde_json::Value::String(op)) = obj.get("op") {
                if !OPS.contains(&op.as_str()) {
                    return WireError::UnknownOp(op.clone());
                }
            }
        }
        WireError::Malformed {
            offset: byte_offset(text, e.line(), e.column()),
            message: e.to_string(),
        }
    })?;
    envelope.into_command(text)
}

/// Decodes the first complete frame in `bytes`, returning the command and
/// the number of bytes it occupied, or `None` if more input is needed.
pub fn decode_frame(bytes: &[u8]) -> Result<Option<(Command, usize)>, WireError> {
    if bytes.len() < LEN_PREFIX {
        return Ok(None);
    }
    let len = u32::from_be_bytes(bytes[..LEN_PREFIX].try_into().expect("4 bytes")) as usize;
    if len > MAX_FRAME_LEN {
        return Err(WireError::FrameTooLarge { len });
    }
    let end = LEN_PREFIX + len;
    if bytes.len() < end {
        return Ok(None);
    }
    let command = decode_payload(&bytes[LEN_PREFIX..end])?;
    Ok(Some((command, end)))
}

/// Incremental decoder over a byte stream read in arbitrary chunks.
#[derive(Debug, Default)]
pub struct FrameDecoder {
    buf: Vec<u8>,
}

impl FrameDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn feed(&mut self, chunk: &[u8]) {
        self.buf.extend_from_slice(chunk);
    }

    /// Next complete command, if any. After an error the stream is unusable.
    pub fn next_command(&mut self) -> Result<Option<Command>, WireError> {
        match decode_frame(&self.buf)? {
            Some((command, used)) => {
                self.buf.drain(..used);
                Ok(Some(command))
            }
            None => Ok(None),
        }
    }

    pub fn buffered(&self) -> usize {
        self.buf.len()
    }
}

/// Blocking reader yielding one command per call; `Ok(None)` on clean EOF.
pub struct CommandReader<R> {
    inner: R,
    decoder: FrameDecoder,
    chunk: Box<[u8]>,
}

impl<R: std::io::Read> CommandReader<R> {
    pub fn new(inner: R) -> Self {
        CommandReader {
            inner,
            decoder: FrameDecoder::new(),
            chunk: vec![0; 64 * 1024].into_boxed_slice(),
        }
    }

    pub fn read_command(&mut self) -> Result<Option<Command>, WireError> {
        loop {
            if let Some(cmd) = self.decoder.next_command()? {
                return Ok(Some(cmd));
            }
            let n = self.inner.read(&mut self.chunk)?;
            if n == 0 {
                if self.decoder.buffered() > 0 {
                    return Err(WireError::Io(std::io::ErrorKind::UnexpectedEof.into()));
                }
                return Ok(None);
            }
            self.decoder.feed(&self.chunk[..n]);
        }
    }
}
