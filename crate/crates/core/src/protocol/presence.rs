//! Loop presence wire protocol towards a signal controller.
//!
//! ```text
//! PRES <loop_id> <0|1> <ts_ms>\n
//! HB <ts_ms>\n
//! ```

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("line is not newline-terminated ASCII")]
    Framing,
    #[error("unknown message tag `{0}`")]
    UnknownTag(String),
    #[error("expected {expected} tokens, found {found}")]
    TokenCount { expected: usize, found: usize },
    #[error("invalid integer `{0}`")]
    Integer(String),
    #[error("presence state must be 0 or 1, got `{0}`")]
    State(String),
    #[error("invalid loop id `{0}`")]
    LoopId(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PresenceMessage {
    pub loop_id: String,
    pub state: bool,
    pub ts_ms: i64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WireMessage {
    Presence(PresenceMessage),
    Heartbeat { ts_ms: i64 },
}

pub fn valid_loop_id(id: &str) -> bool {
    !id.is_empty() && id.bytes().all(|b| b.is_ascii_graphic())
}

impl fmt::Display for WireMessage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WireMessage::Presence(m) => writeln!(f, "PRES {} {} {}", m.loop_id, u8::from(m.state), m.ts_ms),
            WireMessage::Heartbeat { ts_ms } => writeln!(f, "HB {ts_ms}"),
        }
    }
}

/// Wire bytes for a message, including the trailing newline.
pub fn encode_wire(m: &WireMessage) -> Vec<u8> {
    m.to_string().into_bytes()
}

/// Canonical decimal only: optional `-`, no leading zeros, no `+`, no `-0`.
fn parse_int(tok: &str) -> Result<i64, ProtocolError> {
    let digits = tok.strip_prefix('-').unwrap_or(tok);
    let canonical = !digits.is_empty()
        && digits.bytes().all(|b| b.is_ascii_digit())
        && (digits == "0" || !digits.starts_with('0'))
        && tok != "-0";
    if !canonical {
        return Err(ProtocolError::Integer(tok.to_string()));
    }
    tok.parse().map_err(|_| ProtocolError::Integer(tok.to_string()))
}

/// Exact inverse of [`encode_wire`]; the input must be one full line.
pub fn parse_wire(bytes: &[u8]) -> Result<WireMessage, ProtocolError> {
    let body = bytes.strip_suffix(b"\n").ok_or(ProtocolError::Framing)?;
    if !body.iter().all(|b| b.is_ascii_graphic() || *b == b' ') {
        return Err(ProtocolError::Framing);
    }
    let text = std::str::from_utf8(body).map_err(|_| ProtocolError::Framing)?;
    let tokens: Vec<&str> = text.split(' ').collect();
    match tokens[0] {
        "PRES" => {
            if tokens.len() != 4 {
                return Err(ProtocolError::TokenCount { expected: 4, found: tokens.len() });
            }
            let loop_id = tokens[1];
            if !valid_loop_id(loop_id) {
                return Err(ProtocolError::LoopId(loop_id.to_string()));
            }
            let state = match tokens[2] {
                "0" => false,
                "1" => true,
                other => return Err(ProtocolError::State(other.to_string())),
            };
            Ok(WireMessage::Presence(PresenceMessage {
                loop_id: loop_id.to_string(),
                state,
                ts_ms: parse_int(tokens[3])?,
            }))
        }
        "HB" => {
            if tokens.len() != 2 {
                return Err(ProtocolError::TokenCount { expected: 2, found: tokens.len() });
            }
            Ok(WireMessage::Heartbeat { ts_ms: parse_int(tokens[1])? })
        }
        other => Err(ProtocolError::UnknownTag(other.to_string())),
    }
}
