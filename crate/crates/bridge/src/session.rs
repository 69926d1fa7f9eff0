//! Per-connection message handling, independent of any transport.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};

use adaptics_core::runtime::{Command, Controller};
use adaptics_core::tacton::{parse_tacton, Tacton};
use adaptics_core::HostTransform;

use crate::protocol::{decode, ClientMessage, ServerMessage, PROTOCOL_VERSION};

/// Engine state shared by every connection.
pub struct EngineLink {
    controller: Controller,
    pattern: Mutex<Option<Tacton>>,
    playing: AtomicBool,
}

impl EngineLink {
    pub fn new(controller: Controller) -> Arc<Self> {
        Arc::new(EngineLink { controller, pattern: Mutex::new(None), playing: AtomicBool::new(false) })
    }

    pub fn controller(&self) -> &Controller {
        &self.controller
    }

    /// `playing` is the transport state last requested by a client;
    /// `finished` and `warnings` come from the renderer.
    pub fn status(&self) -> ServerMessage {
        let snapshot = self.controller.status();
        ServerMessage::Status {
            playing: self.playing.load(Ordering::Acquire),
            finished: snapshot.finished,
            warnings: snapshot.warnings,
        }
    }

    pub fn is_playing(&self) -> bool {
        self.playing.load(Ordering::Acquire)
    }
}

pub struct Session {
    link: Arc<EngineLink>,
    greeted: bool,
}

impl Session {
    pub fn new(link: Arc<EngineLink>) -> Self {
        Session { link, greeted: false }
    }

    /// Telemetry is only sent after a successful handshake.
    pub fn is_greeted(&self) -> bool {
        self.greeted
    }

    /// Replies to one client frame, in order. Never closes the session.
    pub fn handle_text(&mut self, text: &str) -> Vec<ServerMessage> {
        match decode(text) {
            Ok(message) => self.handle(message),
            Err(error) => vec![error],
        }
    }

    pub fn handle(&mut self, message: ClientMessage) -> Vec<ServerMessage> {
        let reply = match message {
            ClientMessage::Hello { protocol_version } if protocol_version == PROTOCOL_VERSION => {
                self.greeted = true;
                return vec![ServerMessage::Hello { protocol_version: PROTOCOL_VERSION }, self.link.status()];
            }
            ClientMessage::Hello { protocol_version } => Err(ServerMessage::error(
                "protocol-version",
                format!("engine speaks protocol {PROTOCOL_VERSION}, client sent {protocol_version}"),
            )),
            _ if !self.greeted => Err(ServerMessage::error("handshake-required", "send hello first")),
            ClientMessage::UpdatePattern { tacton } => self.update_pattern(tacton),
            ClientMessage::Play {} => self.play(),
            ClientMessage::Stop {} => {
                self.submit(Command::Stop).map(|()| self.link.playing.store(false, Ordering::Release))
            }
            ClientMessage::SetParams { params } => self.submit(Command::SetParams(params.into_iter().collect())),
            ClientMessage::SetTransform { matrix } => HostTransform::from_slice(&matrix)
                .map_err(|e| ServerMessage::error("bad-matrix", e.to_string()))
                .and_then(|t| self.submit(Command::SetTransform(t))),
        };
        match reply {
            Ok(()) => vec![self.link.status()],
            Err(error) => vec![error],
        }
    }

    fn submit(&self, command: Command) -> Result<(), ServerMessage> {
        self.link.controller.submit(command).map_err(|e| ServerMessage::error(e.code(), e.to_string()))
    }

    fn update_pattern(&self, document: serde_json::Value) -> Result<(), ServerMessage> {
        let tacton =
            parse_tacton(&document.to_string()).map_err(|e| ServerMessage::error("invalid-tacton", e.to_string()))?;
        let mut pattern = self.link.pattern.lock().unwrap_or_else(|e| e.into_inner());
        self.submit(Command::HotReload(tacton.clone()))?;
        *pattern = Some(tacton);
        Ok(())
    }

    fn play(&self) -> Result<(), ServerMessage> {
        let pattern = self.link.pattern.lock().unwrap_or_else(|e| e.into_inner());
        let tacton = pattern.clone().ok_or_else(|| ServerMessage::error("no-pattern", "upload a pattern first"))?;
        self.submit(Command::Play(tacton))?;
        self.link.playing.store(true, Ordering::Release);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use adaptics_core::runtime::{engine, Renderer, DEFAULT_QUEUE_DEPTH};

    fn session() -> (Session, Renderer) {
        let (controller, renderer) = engine(DEFAULT_QUEUE_DEPTH);
        (Session::new(EngineLink::new(controller)), renderer)
    }

    fn codes(replies: Vec<ServerMessage>) -> Vec<String> {
        replies
            .into_iter()
            .map(|m| match m {
                ServerMessage::Error { code, .. } => code,
                ServerMessage::Status { .. } => "status".into(),
                ServerMessage::Hello { .. } => "hello".into(),
                ServerMessage::PlaybackUpdate { .. } => "playback_update".into(),
            })
            .collect()
    }

    #[test]
    fn handshake_rules() {
        let (mut s, _renderer) = session();
        assert_eq!(codes(s.handle_text(r#"{"type":"play"}"#)), ["handshake-required"]);
        assert_eq!(codes(s.handle_text(r#"{"type":"hello","protocol_version":2}"#)), ["protocol-version"]);
        assert!(!s.is_greeted());
        assert_eq!(codes(s.handle_text(r#"{"type":"hello","protocol_version":1}"#)), ["hello", "status"]);
        assert!(s.is_greeted());
    }

    #[test]
    fn command_errors() {
        let (mut s, _renderer) = session();
        s.handle_text(r#"{"type":"hello","protocol_version":1}"#);
        assert_eq!(codes(s.handle_text(r#"{"type":"play"}"#)), ["no-pattern"]);
        let bad = r#"{"type":"update_pattern","tacton":{"format_version":1,"keyframes":[
            {"time":1,"coords":{"x":0,"y":0},"brush":{"kind":"circle","size":"1"}},
            {"time":0,"coords":{"x":0,"y":0},"brush":{"kind":"circle","size":"1"}}]}}"#;
        assert_eq!(codes(s.handle_text(bad)), ["invalid-tacton"]);
        assert_eq!(codes(s.handle_text(r#"{"type":"set_transform","matrix":[1,2]}"#)), ["bad-matrix"]);
        assert_eq!(codes(s.handle_text(r#"{"type":"warp"}"#)), ["unknown-type"]);
        assert_eq!(codes(s.handle_text("not json")), ["malformed"]);
        assert_eq!(codes(s.handle_text(r#"{"type":"stop"}"#)), ["status"]);
    }
}
