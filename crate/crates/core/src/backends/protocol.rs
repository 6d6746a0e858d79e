//! Bridge wire protocol.
//!
//! Wire format: 4-byte big-endian length prefix + UTF-8 JSON payload of exactly that length.

use std::io::{ErrorKind, Read, Write};

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use super::BackendError;

pub const PROTOCOL_VERSION: u32 = 1;

/// Upper bound on a single payload (64 MiB).
pub const MAX_MESSAGE_SIZE: usize = 64 * 1024 * 1024;

/// Segmentation prompt as sent on the wire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WirePrompt {
    Box([f64; 4]),
    Point([f64; 2]),
    Points(Vec<[f64; 2]>),
}

/// Messages sent by the client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Request {
    Hello {
        version: u32,
        session_dir: String,
    },
    Segment {
        id: u64,
        /// Path relative to the session directory.
        frame: String,
        prompt: WirePrompt,
    },
    Track {
        id: u64,
        frames: Vec<String>,
        query_points: Vec<[f64; 2]>,
    },
}

/// Messages sent by the bridge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Reply {
    HelloAck {
        version: u32,
        capabilities: Vec<String>,
    },
    Mask {
        id: u64,
        width: usize,
        height: usize,
        /// Column-major COCO run-length string.
        rle: String,
    },
    Trajectory {
        id: u64,
        positions: Vec<Vec<[f64; 2]>>,
        visible: Vec<Vec<bool>>,
    },
    Error {
        #[serde(default)]
        id: u64,
        message: String,
    },
}

impl Reply {
    pub fn id(&self) -> Option<u64> {
        match self {
            Reply::HelloAck { .. } => None,
            Reply::Mask { id, .. } | Reply::Trajectory { id, .. } | Reply::Error { id, .. } => Some(*id),
        }
    }
}

pub fn encode<T: Serialize>(msg: &T) -> Result<Vec<u8>, BackendError> {
    serde_json::to_vec(msg).map_err(|e| BackendError::Protocol(format!("encode: {e}")))
}

pub fn decode<T: DeserializeOwned>(bytes: &[u8]) -> Result<T, BackendError> {
    serde_json::from_slice(bytes).map_err(|e| {
        BackendError::Protocol(format!(
            "malformed message ({e}): {}",
            String::from_utf8_lossy(&bytes[..bytes.len().min(200)])
        ))
    })
}

/// Writes one length-prefixed frame and flushes.
pub fn write_frame<W: Write + ?Sized>(w: &mut W, payload: &[u8]) -> Result<(), BackendError> {
    if payload.len() > MAX_MESSAGE_SIZE {
        return Err(BackendError::Protocol(format!(
            "message too large: {} bytes (max {MAX_MESSAGE_SIZE})",
            payload.len()
        )));
    }
    w.write_all(&(payload.len() as u32).to_be_bytes())?;
    w.write_all(payload)?;
    w.flush()?;
    Ok(())
}

/// Reads one length-prefixed frame. `Ok(None)` means the peer closed cleanly between frames.
pub fn read_frame<R: Read + ?Sized>(r: &mut R) -> Result<Option<Vec<u8>>, BackendError> {
    let mut len_buf = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match r.read(&mut len_buf[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => {
                return Err(BackendError::Protocol(format!(
                    "stream closed inside a length prefix ({got} of 4 bytes)"
                )))
            }
            Ok(n) => got += n,
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let len = u32::from_be_bytes(len_buf) as usize;
    if len > MAX_MESSAGE_SIZE {
        return Err(BackendError::Protocol(format!(
            "length prefix {len:#010x} exceeds the {MAX_MESSAGE_SIZE} byte limit"
        )));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf).map_err(|e| match e.kind() {
        ErrorKind::UnexpectedEof => {
            BackendError::Protocol(format!("stream closed inside a {len} byte payload"))
        }
        _ => e.into(),
    })?;
    if std::str::from_utf8(&buf).is_err() {
        return Err(BackendError::Protocol("payload is not valid UTF-8".into()));
    }
    Ok(Some(buf))
}

pub fn send<W: Write + ?Sized, T: Serialize>(w: &mut W, msg: &T) -> Result<(), BackendError> {
    write_frame(w, &encode(msg)?)
}

pub fn receive<R: Read + ?Sized, T: DeserializeOwned>(r: &mut R) -> Result<T, BackendError> {
    let bytes = read_frame(r)?.ok_or_else(|| BackendError::Protocol("connection closed by peer".into()))?;
    decode(&bytes)
}
