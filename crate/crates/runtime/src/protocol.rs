//! Streaming protocol: one JSON object per WebSocket text frame,
//! `{"type", "session_id", "sequence", "payload"}`.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use stepwise_core::fsm::{Guidance, GuidanceMessage, StateKind};
use stepwise_core::BoundingBox;

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageType {
    Hello,
    Frame,
    Detections,
    Guidance,
    Ack,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamMessage {
    #[serde(rename = "type")]
    pub kind: MessageType,
    #[serde(default)]
    pub session_id: String,
    pub sequence: u64,
    #[serde(default)]
    pub payload: Value,
}

impl StreamMessage {
    pub fn new<P: Serialize>(kind: MessageType, session_id: &str, sequence: u64, payload: &P) -> Self {
        Self {
            kind,
            session_id: session_id.to_string(),
            sequence,
            payload: serde_json::to_value(payload).expect("payload serializes"),
        }
    }

    pub fn payload_as<P: DeserializeOwned>(&self) -> Result<P, serde_json::Error> {
        P::deserialize(&self.payload)
    }

    pub fn to_text(&self) -> String {
        serde_json::to_string(self).expect("message serializes")
    }

    pub fn from_text(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// `in_reply_to` of server replies, when present.
    pub fn in_reply_to(&self) -> Option<u64> {
        self.payload.get("in_reply_to").and_then(Value::as_u64)
    }

    /// Whether this reply gives back the token of the frame it answers.
    pub fn returns_token(&self) -> bool {
        let answers_frame = self.in_reply_to().is_some();
        match self.kind {
            MessageType::Guidance => answers_frame,
            MessageType::Ack => answers_frame && self.payload.get("session_id").is_none(),
            MessageType::Error => answers_frame && self.payload.get("dropped") != Some(&Value::Bool(true)),
            _ => false,
        }
    }

}

fn version() -> u32 {
    PROTOCOL_VERSION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HelloPayload {
    #[serde(default = "version")]
    pub protocol_version: u32,
    pub task: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AckPayload {
    pub protocol_version: u32,
    pub in_reply_to: u64,
    /// Set on the reply to hello.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub current_state: Option<String>,
}

/// Raw image, PNG or any format the image decoder accepts, base64-encoded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FramePayload {
    #[serde(default = "version")]
    pub protocol_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_index: Option<u32>,
    pub image: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionsPayload {
    #[serde(default = "version")]
    pub protocol_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_index: Option<u32>,
    pub boxes: Vec<BoundingBox>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidancePayload {
    pub protocol_version: u32,
    pub in_reply_to: u64,
    pub frame_index: u32,
    pub from_state: String,
    pub state_id: String,
    pub kind: StateKind,
    pub guidance: Guidance,
    pub terminal: bool,
}

impl GuidancePayload {
    pub fn from_message(in_reply_to: u64, m: GuidanceMessage) -> Self {
        Self {
            protocol_version: PROTOCOL_VERSION,
            in_reply_to,
            frame_index: m.frame_index,
            from_state: m.from_state,
            state_id: m.state_id,
            kind: m.kind,
            guidance: m.guidance,
            terminal: m.terminal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorPayload {
    pub protocol_version: u32,
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub in_reply_to: Option<u64>,
    /// The referenced message was refused before processing and held no token.
    #[serde(default)]
    pub dropped: bool,
}

impl ErrorPayload {
    pub fn new(code: &str, message: impl Into<String>, in_reply_to: Option<u64>) -> Self {
        Self {
            protocol_version: PROTOCOL_VERSION,
            code: code.to_string(),
            message: message.into(),
            in_reply_to,
            dropped: false,
        }
    }

    pub fn dropped(code: &str, message: impl Into<String>, in_reply_to: u64) -> Self {
        Self {
            dropped: true,
            ..Self::new(code, message, Some(in_reply_to))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wire_shape() {
        let m = StreamMessage::new(
            MessageType::Hello,
            "",
            0,
            &HelloPayload {
                protocol_version: 1,
                task: "sandwich".into(),
            },
        );
        assert_eq!(
            m.to_text(),
            r#"{"type":"hello","session_id":"","sequence":0,"payload":{"protocol_version":1,"task":"sandwich"}}"#
        );
        let back = StreamMessage::from_text(&m.to_text()).unwrap();
        assert_eq!(back.payload_as::<HelloPayload>().unwrap().task, "sandwich");
        assert!(!m.to_text().contains('\n'));
    }

    #[test]
    fn reply_reference() {
        let e = StreamMessage::new(MessageType::Error, "s", 4, &ErrorPayload::new("flow_control", "no tokens", Some(9)));
        assert_eq!(e.in_reply_to(), Some(9));
        assert!(e.returns_token());
        let d = StreamMessage::new(MessageType::Error, "s", 5, &ErrorPayload::dropped("flow_control", "no tokens", 10));
        assert!(!d.returns_token());
        let hello_ack = StreamMessage::new(
            MessageType::Ack,
            "s",
            0,
            &AckPayload {
                protocol_version: 1,
                in_reply_to: 0,
                session_id: Some("s".into()),
                max_tokens: Some(2),
                current_state: None,
            },
        );
        assert!(!hello_ack.returns_token());
    }
}
