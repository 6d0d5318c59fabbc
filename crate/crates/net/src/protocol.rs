//! Wire grammar: one JSON object per LF-terminated line, discriminated by
//! `type`.
//!
//! ```text
//! → {"type":"hello","role":"sensor"}
//! → {"type":"ecg","t":[12.000,12.0077],"v":[0.01,0.02]}
//! → {"type":"cmd","id":1,"cmd":"start","age":30,"condition":"adaptive_npc"}
//! ← {"type":"ack","id":1,"cmd":"start","config":{...}}
//! ← {"type":"state","t_s":0.020000,"phase":"training",...,"tick_wall_us":...}
//! ```
//!
//! Unknown fields are ignored. Lines over [`MAX_FRAME_BYTES`], malformed JSON
//! and unknown `type`s produce an `error` frame; the connection stays open.

use std::fmt;
use std::str::FromStr;

use cardioloop_core::rider_sim::RiderModel;
use cardioloop_core::session::{ConfigRecord, LoopState};
use cardioloop_core::Condition;
use serde::{Deserialize, Serialize};

/// Upper bound on one frame, newline excluded.
pub const MAX_FRAME_BYTES: usize = 64 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Sensor,
    Console,
    Observer,
}

impl Role {
    /// Roles that receive the per-tick state broadcast.
    pub fn receives_state(self) -> bool {
        matches!(self, Role::Console | Role::Observer)
    }
}

/// Where the session's ECG comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// A `sensor` client streams `ecg` frames.
    #[default]
    Sensor,
    /// A human sets rider power with `effort` frames.
    Manual,
    /// A simulated rider policy closes the loop.
    Sim,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Sensor => "sensor",
            Mode::Manual => "manual",
            Mode::Sim => "sim",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sensor" => Ok(Mode::Sensor),
            "manual" => Ok(Mode::Manual),
            "sim" => Ok(Mode::Sim),
            other => Err(format!("unknown mode `{other}` (expected sensor|manual|sim)")),
        }
    }
}

/// A scalar or an array; `ecg` frames may batch samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
}

impl OneOrMany {
    pub fn as_slice(&self) -> &[f64] {
        match self {
            OneOrMany::One(x) => std::slice::from_ref(x),
            OneOrMany::Many(xs) => xs,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CmdKind {
    Start,
    Stop,
    SetCondition,
    SetAge,
    SetMode,
}

/// Operator command. Arguments a command does not use are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmdFrame {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<u64>,
    pub cmd: CmdKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub age: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<Condition>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub participant_id: Option<String>,
}

impl CmdFrame {
    pub fn new(cmd: CmdKind) -> Self {
        Self {
            id: None,
            cmd,
            age: None,
            condition: None,
            mode: None,
            participant_id: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateFrame {
    #[serde(flatten)]
    pub state: LoopState,
    /// Broadcast frames this client missed since its previous state frame.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub dropped: u64,
    /// Server wall clock when the tick was computed, microseconds since the
    /// Unix epoch.
    pub tick_wall_us: u64,
}

fn is_zero(n: &u64) -> bool {
    *n == 0
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AckFrame {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cmd: Option<CmdKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    /// Session configuration: the running one, or the one `start` would use.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<Box<ConfigRecord>>,
    /// Rider model behind `manual` and `sim` modes; bounds the effort slider.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rider: Option<RiderModel>,
    /// Power actually applied by an `effort` frame.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power_w: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    /// Not JSON, not an object, or fields of the wrong shape.
    BadFrame,
    FrameTooLarge,
    UnknownType,
    /// `hello` must come before anything else.
    HelloRequired,
    /// A second `hello`, or a role that is already taken.
    RoleRejected,
    /// The frame does not fit the server's mode.
    WrongMode,
    /// The command does not fit the session's phase.
    WrongPhase,
    InvalidArgument,
    /// Out-of-order or non-finite ECG samples.
    BadSample,
    /// Frames sent by the server only.
    NotAccepted,
    Internal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorFrame {
    pub code: ErrorCode,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<u64>,
}

impl ErrorFrame {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
            id: None,
        }
    }

    pub fn with_id(mut self, id: Option<u64>) -> Self {
        self.id = id;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Frame {
    Hello { role: Role },
    Ecg { t: OneOrMany, v: OneOrMany },
    Effort { power_w: f64 },
    Cmd(CmdFrame),
    State(Box<StateFrame>),
    Ack(Box<AckFrame>),
    Error(ErrorFrame),
}

const KNOWN_TYPES: [&str; 7] = ["hello", "ecg", "effort", "cmd", "state", "ack", "error"];

impl Frame {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("frames always serialize")
    }

    /// Parse one line (without its terminator).
    pub fn parse(line: &str) -> Result<Frame, ErrorFrame> {
        if line.len() > MAX_FRAME_BYTES {
            return Err(too_large(Some(line.len())));
        }
        let value: serde_json::Value =
            serde_json::from_str(line).map_err(|e| ErrorFrame::new(ErrorCode::BadFrame, e.to_string()))?;
        let kind = value
            .get("type")
            .and_then(serde_json::Value::as_str)
            .ok_or_else(|| ErrorFrame::new(ErrorCode::BadFrame, "frame must be an object with a string `type`"))?;
        if !KNOWN_TYPES.contains(&kind) {
            return Err(ErrorFrame::new(ErrorCode::UnknownType, format!("unknown frame type `{kind}`")));
        }
        serde_json::from_value(value).map_err(|e| ErrorFrame::new(ErrorCode::BadFrame, e.to_string()))
    }

    pub fn error(code: ErrorCode, message: impl Into<String>) -> Frame {
        Frame::Error(ErrorFrame::new(code, message))
    }
}

pub(crate) fn too_large(len: Option<usize>) -> ErrorFrame {
    let message = match len {
        Some(len) => format!("frame of {len} bytes exceeds the {MAX_FRAME_BYTES} byte limit"),
        None => format!("frame exceeds the {MAX_FRAME_BYTES} byte limit"),
    };
    ErrorFrame::new(ErrorCode::FrameTooLarge, message)
}


#[cfg(test)]
mod roundtrip {
    use proptest::prelude::*;

    use super::*;
    use crate::arbitrary;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(2000))]

        #[test]
        fn serialize_then_parse_is_identity(frame in arbitrary::frame()) {
            let line = frame.to_line();
            prop_assert!(!line.contains('\n'));
            prop_assert!(line.len() <= MAX_FRAME_BYTES);
            prop_assert_eq!(Frame::parse(&line).unwrap(), frame);
        }
    }
}
