//! Session wire format: each message is a big-endian `u32` byte length
//! followed by that many bytes of UTF-8 JSON with a `type` field.

use std::collections::BTreeMap;
use std::io::{ErrorKind, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PROTOCOL_VERSION: u32 = 1;
pub const MAX_MESSAGE_BYTES: usize = 16 << 20;

const KNOWN_TYPES: &[&str] = &["hello", "frame", "action", "control", "saved", "bye"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlCommand {
    Start,
    Pause,
    Reset,
    RecordOn,
    RecordOff,
    /// Requires `name`.
    Save,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleView {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
    pub alive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnemyView {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub hp: u32,
    pub alive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircleView {
    pub x: f64,
    pub y: f64,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointView {
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FrameEvents {
    pub kills: u32,
    pub crashed: bool,
    pub episode_over: bool,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub tick: u64,
    pub arena_size: f64,
    pub player: VehicleView,
    pub enemies: Vec<EnemyView>,
    pub obstacles: Vec<CircleView>,
    pub projectiles: Vec<PointView>,
    /// `x, y, dx, dy, v, ammo`.
    pub telemetry: [f32; 6],
    pub events: FrameEvents,
    pub kills_total: u32,
    pub running: bool,
    pub recording: bool,
    pub recorded_samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SessionMessage {
    Hello {
        protocol_version: u32,
        /// Simulator settings as `key -> value`; empty from clients.
        #[serde(default)]
        config: BTreeMap<String, String>,
    },
    Frame(Frame),
    Action {
        tick: u64,
        continuous: [f32; 2],
        discrete: [bool; 2],
    },
    Control {
        command: ControlCommand,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
    },
    /// Server confirmation of a `save` control.
    Saved {
        name: String,
        path: String,
        samples: usize,
    },
    Bye {
        reason: String,
    },
}

impl SessionMessage {
    pub fn type_name(&self) -> &'static str {
        match self {
            Self::Hello { .. } => "hello",
            Self::Frame(_) => "frame",
            Self::Action { .. } => "action",
            Self::Control { .. } => "control",
            Self::Saved { .. } => "saved",
            Self::Bye { .. } => "bye",
        }
    }
}

pub fn encode(msg: &SessionMessage) -> Result<Vec<u8>> {
    let body = serde_json::to_vec(msg).map_err(|e| Error::Protocol(e.to_string()))?;
    let mut out = Vec::with_capacity(body.len() + 4);
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend_from_slice(&body);
    Ok(out)
}

/// Parses one JSON message body.
pub fn decode_body(body: &[u8]) -> Result<SessionMessage> {
    let text = std::str::from_utf8(body).map_err(|_| Error::Protocol("message is not valid utf-8".into()))?;
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::Protocol(format!("malformed message: {e}")))?;
    let ty = value
        .get("type")
        .and_then(|t| t.as_str())
        .ok_or_else(|| Error::Protocol("message has no `type` field".into()))?;
    if !KNOWN_TYPES.contains(&ty) {
        return Err(Error::Protocol(format!("unknown message type `{ty}`")));
    }
    let msg: SessionMessage =
        serde_json::from_value(value.clone()).map_err(|e| Error::Protocol(format!("bad `{ty}` message: {e}")))?;
    if let SessionMessage::Control { command: ControlCommand::Save, name: None } = msg {
        return Err(Error::Protocol("save control needs a name".into()));
    }
    Ok(msg)
}

/// Decodes one framed message from the front of `bytes`, returning it and
/// the number of bytes consumed.
pub fn decode(bytes: &[u8]) -> Result<(SessionMessage, usize)> {
    if bytes.len() < 4 {
        return Err(Error::Protocol(format!("truncated length prefix ({} bytes)", bytes.len())));
    }
    let len = u32::from_be_bytes(bytes[..4].try_into().expect("4 bytes")) as usize;
    if len > MAX_MESSAGE_BYTES {
        return Err(Error::Protocol(format!("message of {len} bytes exceeds limit")));
    }
    let end = 4 + len;
    if bytes.len() < end {
        return Err(Error::Protocol(format!("truncated message: expected {len} bytes, got {}", bytes.len() - 4)));
    }
    Ok((decode_body(&bytes[4..end])?, end))
}

pub fn write_message<W: Write>(w: &mut W, msg: &SessionMessage) -> Result<()> {
    w.write_all(&encode(msg)?)?;
    w.flush()?;
    Ok(())
}

/// Reads one message. Returns `Ok(None)` on a clean end of stream between
/// messages; a stream ending inside a message is a protocol error.
pub fn read_message<R: Read>(r: &mut R) -> Result<Option<SessionMessage>> {
    let mut prefix = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match r.read(&mut prefix[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(Error::Protocol("stream ended inside a length prefix".into())),
            Ok(n) => got += n,
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let len = u32::from_be_bytes(prefix) as usize;
    if len > MAX_MESSAGE_BYTES {
        return Err(Error::Protocol(format!("message of {len} bytes exceeds limit")));
    }
    let mut body = vec![0u8; len];
    r.read_exact(&mut body).map_err(|e| match e.kind() {
        ErrorKind::UnexpectedEof => Error::Protocol(format!("stream ended inside a {len}-byte message")),
        _ => e.into(),
    })?;
    decode_body(&body).map(Some)
}
