//! Recorded bridge session used to check protocol conformance of either side.
//!
//! The exchange is hello, one segment request, one track request, then the client closes
//! the stream. The client's session directory is the only variable part and is written
//! as `${SESSION_DIR}` in the recording.

use std::io::{Read, Write};

use serde::Deserialize;
use serde_json::Value;

use super::protocol::{read_frame, write_frame};
use super::BackendError;
use crate::geometry::{BoundingBox, Point};
use crate::raster::Frame;

const RECORDING: &str = include_str!("../../fixtures/conformance.jsonl");
pub const SESSION_DIR_PLACEHOLDER: &str = "${SESSION_DIR}";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Client,
    Bridge,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct FixtureMessage {
    pub from: Side,
    pub payload: String,
}

/// The recorded exchange, in order.
pub fn conformance_exchange() -> Vec<FixtureMessage> {
    RECORDING
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).expect("fixture recording is valid JSON lines"))
        .collect()
}

/// Inputs the client side performs during the recording.
pub struct FixtureInputs {
    pub frames: Vec<Frame>,
    pub segment_box: BoundingBox,
    pub query_points: Vec<Point>,
}

pub fn conformance_inputs() -> FixtureInputs {
    let frames = (0..2)
        .map(|i| Frame::gray(i, 8, 6, (0..48).map(|v| (v * 5 + i * 40) as u8).collect()).expect("8x6 frame"))
        .collect();
    FixtureInputs {
        frames,
        segment_box: BoundingBox::new(1.0, 1.0, 4.0, 3.0).expect("valid box"),
        query_points: vec![Point::new(2.5, 2.5), Point::new(4.5, 3.5)],
    }
}

/// Substitutes the session directory into a recorded payload.
pub fn expand(payload: &str, session_dir: &str) -> String {
    let escaped = serde_json::to_string(session_dir).expect("strings serialize");
    payload.replace(SESSION_DIR_PLACEHOLDER, &escaped[1..escaped.len() - 1])
}

/// First differing JSON path between two payloads, e.g. `$.prompt.box[2]: expected 4.0, got 5.0`.
pub fn field_diff(expected: &str, got: &str) -> Option<String> {
    if expected == got {
        return None;
    }
    let (e, g) = match (serde_json::from_str::<Value>(expected), serde_json::from_str::<Value>(got)) {
        (Ok(e), Ok(g)) => (e, g),
        _ => return Some(format!("$: expected {expected}, got {got}")),
    };
    Some(value_diff("$", &e, &g).unwrap_or_else(|| {
        format!("$: same JSON value but different bytes: expected {expected}, got {got}")
    }))
}

fn value_diff(path: &str, e: &Value, g: &Value) -> Option<String> {
    match (e, g) {
        (Value::Object(eo), Value::Object(go)) => {
            for (k, ev) in eo {
                match go.get(k) {
                    None => return Some(format!("{path}.{k}: missing")),
                    Some(gv) => {
                        if let Some(d) = value_diff(&format!("{path}.{k}"), ev, gv) {
                            return Some(d);
                        }
                    }
                }
            }
            go.keys()
                .find(|k| !eo.contains_key(*k))
                .map(|k| format!("{path}.{k}: unexpected field"))
        }
        (Value::Array(ea), Value::Array(ga)) if ea.len() == ga.len() => ea
            .iter()
            .zip(ga)
            .enumerate()
            .find_map(|(i, (ev, gv))| value_diff(&format!("{path}[{i}]"), ev, gv)),
        _ if e == g => None,
        _ => Some(format!("{path}: expected {e}, got {g}")),
    }
}

/// Plays the bridge side of the recording against a connected client.
///
/// Fails with the first divergent field when the client's bytes differ from the recording,
/// and when the client does not close the stream after the last message.
pub fn serve_recording<R: Read, W: Write>(reader: &mut R, writer: &mut W, session_dir: &str) -> Result<(), BackendError> {
    for (i, msg) in conformance_exchange().into_iter().enumerate() {
        let expected = expand(&msg.payload, session_dir);
        match msg.from {
            Side::Bridge => write_frame(writer, expected.as_bytes())?,
            Side::Client => {
                let got = read_frame(reader)?
                    .ok_or_else(|| BackendError::Protocol(format!("message {i}: client closed early")))?;
                let got = String::from_utf8(got).expect("read_frame checks UTF-8");
                if let Some(diff) = field_diff(&expected, &got) {
                    return Err(BackendError::Protocol(format!("message {i}: {diff}")));
                }
            }
        }
    }
    match read_frame(reader)? {
        None => Ok(()),
        Some(extra) => Err(BackendError::Protocol(format!(
            "expected close, got {}",
            String::from_utf8_lossy(&extra)
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recording_alternates() {
        let ex = conformance_exchange();
        assert_eq!(ex.len(), 6);
        for (i, m) in ex.iter().enumerate() {
            assert_eq!(m.from, if i % 2 == 0 { Side::Client } else { Side::Bridge });
        }
    }

    #[test]
    fn diff_names_field() {
        let d = field_diff(r#"{"a":{"b":[1,2,3]}}"#, r#"{"a":{"b":[1,5,3]}}"#).unwrap();
        assert_eq!(d, "$.a.b[1]: expected 2, got 5");
        let d = field_diff(r#"{"a":1}"#, r#"{"a":1,"c":2}"#).unwrap();
        assert_eq!(d, "$.c: unexpected field");
        assert!(field_diff(r#"{"a":1.0}"#, r#"{"a":1}"#).is_some());
        assert_eq!(field_diff("{}", "{}"), None);
    }

    #[test]
    fn expand_escapes() {
        assert_eq!(expand(r#"{"d":"${SESSION_DIR}"}"#, "a\"b"), r#"{"d":"a\"b"}"#);
    }
}
