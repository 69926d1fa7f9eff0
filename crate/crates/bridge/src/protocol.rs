//! Wire messages. Every message is a JSON object whose `type` field selects
//! the variant.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub const PROTOCOL_VERSION: u32 = 1;
/// Upper bound on samples in one `playback_update`.
pub const MAX_SAMPLES_PER_UPDATE: usize = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    Hello {
        protocol_version: u32,
    },
    /// A full `.adaptics` document.
    UpdatePattern {
        tacton: serde_json::Value,
    },
    Play {},
    Stop {},
    SetParams {
        params: BTreeMap<String, f64>,
    },
    /// Row-major 4x4 affine transform.
    SetTransform {
        matrix: Vec<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WireSample {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub amp: f64,
    pub pt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Hello {
        protocol_version: u32,
    },
    Status {
        playing: bool,
        finished: bool,
        warnings: u64,
    },
    /// `device_time` is the device time of the last sample.
    PlaybackUpdate {
        samples: Vec<WireSample>,
        device_time: f64,
    },
    Error {
        code: String,
        message: String,
    },
}

impl ServerMessage {
    pub fn error(code: &str, message: impl Into<String>) -> Self {
        ServerMessage::Error { code: code.to_owned(), message: message.into() }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages always serialize")
    }
}

pub const KNOWN_TYPES: [&str; 6] = ["hello", "update_pattern", "play", "stop", "set_params", "set_transform"];

/// Decode a client frame, mapping failures to `error` replies.
pub fn decode(text: &str) -> Result<ClientMessage, ServerMessage> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| ServerMessage::error("malformed", format!("not JSON: {e}")))?;
    let kind = value
        .get("type")
        .and_then(|t| t.as_str())
        .ok_or_else(|| ServerMessage::error("malformed", "message needs a string `type` field"))?;
    if !KNOWN_TYPES.contains(&kind) {
        return Err(ServerMessage::error("unknown-type", format!("unknown message type `{kind}`")));
    }
    let kind = kind.to_owned();
    serde_json::from_value(value).map_err(|e| ServerMessage::error("malformed", format!("bad `{kind}` message: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn messages_round_trip() {
        let client = [
            ClientMessage::Hello { protocol_version: 1 },
            ClientMessage::UpdatePattern { tacton: serde_json::json!({"format_version": 1}) },
            ClientMessage::Play {},
            ClientMessage::Stop {},
            ClientMessage::SetParams { params: [("proximity".to_owned(), 0.5)].into() },
            ClientMessage::SetTransform { matrix: vec![0.0; 16] },
        ];
        for m in client {
            let text = serde_json::to_string(&m).unwrap();
            assert_eq!(decode(&text).unwrap(), m, "{text}");
        }
        let server = [
            ServerMessage::Hello { protocol_version: 1 },
            ServerMessage::Status { playing: true, finished: false, warnings: 3 },
            ServerMessage::PlaybackUpdate {
                samples: vec![WireSample { x: 1.0, y: 2.0, z: 200.0, amp: 0.5, pt: 0.25 }],
                device_time: 1.5,
            },
            ServerMessage::error("no-pattern", "nothing loaded"),
        ];
        for m in server {
            let back: ServerMessage = serde_json::from_str(&m.to_json()).unwrap();
            assert_eq!(back, m);
        }
    }

    #[test]
    fn wire_shape() {
        assert_eq!(serde_json::to_string(&ClientMessage::Play {}).unwrap(), r#"{"type":"play"}"#);
        assert_eq!(
            ServerMessage::Status { playing: false, finished: false, warnings: 0 }.to_json(),
            r#"{"type":"status","playing":false,"finished":false,"warnings":0}"#
        );
    }

    #[test]
    fn decode_errors() {
        let code = |text: &str| match decode(text) {
            Err(ServerMessage::Error { code, .. }) => code,
            other => panic!("{other:?}"),
        };
        assert_eq!(code("{"), "malformed");
        assert_eq!(code("[1]"), "malformed");
        assert_eq!(code(r#"{"type":"dance"}"#), "unknown-type");
        assert_eq!(code(r#"{"type":"set_params","params":{"a":"x"}}"#), "malformed");
        assert_eq!(code(r#"{"type":"set_params","params":{"a":1e999}}"#), "malformed");
    }
}
