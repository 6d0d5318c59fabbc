//! Streaming service for the cardioloop engine.
//!
//! Clients declare a role with `hello`, then a sensor streams `ecg`, consoles
//! send `cmd` and `effort`, and consoles and observers receive one `state`
//! frame per tick. The same frames travel as lines over TCP and as text
//! messages over the WebSocket gateway used by the browser console.

#[cfg(any(test, feature = "arbitrary"))]
pub mod arbitrary;
mod conn;
pub mod engine;
pub mod protocol;
mod server;

pub use engine::{spawn_engine, EngineConfig, EngineHandle};
pub use protocol::{
    AckFrame, CmdFrame, CmdKind, ErrorCode, ErrorFrame, Frame, Mode, OneOrMany, Role, StateFrame, MAX_FRAME_BYTES,
};
pub use server::{ServeError, Server, ServerOptions};
