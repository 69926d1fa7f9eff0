//! WebSocket bridge for live tacton editing.
//!
//! Clients connect to `/ws`, exchange `hello` messages, then send commands
//! that [`session::Session`] turns into runtime commands. Every command is
//! answered with `status` or `error`; decimated focal-point telemetry is
//! broadcast to all greeted clients as `playback_update` messages.

pub mod protocol;
pub mod server;
pub mod session;

pub use protocol::{ClientMessage, ServerMessage, WireSample, PROTOCOL_VERSION};
pub use server::{start, BridgeConfig, BridgeError, RunningBridge, DEFAULT_PORT};
pub use session::{EngineLink, Session};
