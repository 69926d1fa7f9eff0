use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use adaptics_core::device::{spawn_paced, DeviceConfig, DeviceConfigError, PacedDevice};
use adaptics_core::runtime::{decimation_factor, engine, telemetry_channel, TelemetryReceiver, DEFAULT_QUEUE_DEPTH};
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::Response;
use axum::routing::get;
use axum::Router;
use futures::{SinkExt, StreamExt};
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::sync::broadcast;
use tokio::task::JoinHandle;

use crate::protocol::{ServerMessage, WireSample, MAX_SAMPLES_PER_UPDATE};
use crate::session::{EngineLink, Session};

pub const DEFAULT_PORT: u16 = 8037;

#[derive(Debug, Clone, PartialEq)]
pub struct BridgeConfig {
    pub port: u16,
    pub rate: f64,
    pub batch: usize,
    /// Target `playback_update` messages per second.
    pub telemetry_hz: f64,
    /// Samples per `playback_update` the decimation aims for.
    pub samples_per_update: usize,
    /// Status broadcast period while nothing is playing.
    pub heartbeat: Duration,
}

impl Default for BridgeConfig {
    fn default() -> Self {
        BridgeConfig {
            port: DEFAULT_PORT,
            rate: 40_000.0,
            batch: 40,
            telemetry_hz: 60.0,
            samples_per_update: 64,
            heartbeat: Duration::from_secs(1),
        }
    }
}

#[derive(Debug, Error)]
pub enum BridgeError {
    #[error(transparent)]
    Device(#[from] DeviceConfigError),
    #[error("cannot listen on port {port}: {source}")]
    Bind { port: u16, source: std::io::Error },
}

#[derive(Clone)]
struct AppState {
    link: Arc<EngineLink>,
    telemetry: broadcast::Sender<Arc<str>>,
}

/// A bridge listening on `addr`, with its engine and mock device running.
pub struct RunningBridge {
    pub addr: SocketAddr,
    server: JoinHandle<()>,
    pump: JoinHandle<()>,
    _device: PacedDevice,
}

impl RunningBridge {
    /// Resolves when the server stops.
    pub async fn wait(mut self) {
        let _ = (&mut self.server).await;
    }
}

impl Drop for RunningBridge {
    fn drop(&mut self) {
        self.server.abort();
        self.pump.abort();
    }
}

/// Start the engine, a real-time mock device and the WebSocket endpoint `/ws`.
/// Port 0 picks a free port.
pub async fn start(config: BridgeConfig) -> Result<RunningBridge, BridgeError> {
    let device_config = DeviceConfig::new(config.rate, config.batch);
    device_config.validate()?;
    let (controller, mut renderer) = engine(DEFAULT_QUEUE_DEPTH);
    let every = decimation_factor(config.rate, config.telemetry_hz, config.samples_per_update);
    let (tap, receiver) = telemetry_channel(every, 2 * MAX_SAMPLES_PER_UPDATE);
    renderer.attach_telemetry(tap);
    let device = spawn_paced(renderer, device_config)?;

    let link = EngineLink::new(controller);
    let (telemetry, _) = broadcast::channel(64);
    let state = AppState { link: link.clone(), telemetry: telemetry.clone() };
    let pump = tokio::spawn(pump(receiver, link, telemetry, config.clone()));

    let listener = TcpListener::bind(("0.0.0.0", config.port))
        .await
        .map_err(|source| BridgeError::Bind { port: config.port, source })?;
    let addr = listener.local_addr().map_err(|source| BridgeError::Bind { port: config.port, source })?;
    let app = Router::new().route("/ws", get(upgrade)).with_state(state);
    let server = tokio::spawn(async move {
        if let Err(e) = axum::serve(listener, app).await {
            log::error!("server stopped: {e}");
        }
    });
    log::info!("listening on ws://{addr}/ws");
    Ok(RunningBridge { addr, server, pump, _device: device })
}

/// Broadcast decimated samples at `telemetry_hz`, or a status heartbeat
/// every `heartbeat` while nothing is playing.
async fn pump(
    receiver: TelemetryReceiver,
    link: Arc<EngineLink>,
    out: broadcast::Sender<Arc<str>>,
    config: BridgeConfig,
) {
    let mut ticker = tokio::time::interval(Duration::from_secs_f64(1.0 / config.telemetry_hz));
    ticker.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Skip);
    let mut since_heartbeat = Duration::ZERO;
    let mut drained = Vec::with_capacity(MAX_SAMPLES_PER_UPDATE);
    loop {
        ticker.tick().await;
        drained.clear();
        receiver.drain_into(&mut drained, MAX_SAMPLES_PER_UPDATE);
        if let Some(last) = drained.last() {
            let message = ServerMessage::PlaybackUpdate {
                device_time: last.device_time,
                samples: drained.iter().map(|s| WireSample { x: s.x, y: s.y, z: s.z, amp: s.amp, pt: s.pt }).collect(),
            };
            let _ = out.send(message.to_json().into());
            since_heartbeat = Duration::ZERO;
        } else if !link.is_playing() {
            since_heartbeat += ticker.period();
            if since_heartbeat >= config.heartbeat {
                since_heartbeat = Duration::ZERO;
                let _ = out.send(link.status().to_json().into());
            }
        }
    }
}

async fn upgrade(ws: WebSocketUpgrade, State(state): State<AppState>) -> Response {
    ws.on_upgrade(move |socket| connection(socket, state))
}

async fn connection(socket: WebSocket, state: AppState) {
    let (mut sink, mut stream) = socket.split();
    let mut session = Session::new(state.link.clone());
    let mut telemetry = state.telemetry.subscribe();
    loop {
        tokio::select! {
            incoming = stream.next() => {
                let replies = match incoming {
                    Some(Ok(Message::Text(text))) => session.handle_text(text.as_str()),
                    Some(Ok(Message::Binary(_))) => vec![ServerMessage::error("malformed", "binary frames are not supported")],
                    Some(Ok(Message::Close(_))) | Some(Err(_)) | None => break,
                    Some(Ok(_)) => continue,
                };
                for reply in replies {
                    if sink.send(Message::Text(reply.to_json().into())).await.is_err() {
                        return;
                    }
                }
            }
            broadcast = telemetry.recv(), if session.is_greeted() => match broadcast {
                Ok(text) => {
                    if sink.send(Message::Text(text.as_ref().into())).await.is_err() {
                        return;
                    }
                }
                Err(broadcast::error::RecvError::Lagged(skipped)) => log::debug!("client lagging, dropped {skipped} telemetry messages"),
                Err(broadcast::error::RecvError::Closed) => break,
            },
        }
    }
}
