//! Playback runtime.
//!
//! [`engine`] returns a [`Controller`] for the control side and a [`Renderer`]
//! for the single evaluation side. Commands travel through a bounded queue and
//! are applied at the start of the next batch; a full queue rejects the
//! submission instead of blocking. The renderer publishes its status through
//! atomics and, optionally, decimated samples through a lossy telemetry queue.
//! Pattern time only ever advances by the `dt` the device passes in.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;

use crossbeam_channel::{Receiver, Sender, TrySendError};
use crossbeam_queue::ArrayQueue;
use serde::Serialize;
use thiserror::Error;

use crate::evaluator::{FocalPointSample, ParamSlots, PlaybackState, Program};
use crate::formula::{NonFiniteParam, ParamEnv};
use crate::tacton::{Tacton, TactonError};
use crate::transform::HostTransform;

pub const DEFAULT_QUEUE_DEPTH: usize = 256;

#[derive(Debug, Clone)]
pub enum Command {
    /// Start `Tacton` from pattern time 0, replacing any current playback.
    Play(Tacton),
    Stop,
    SetParam(String, f64),
    SetParams(Vec<(String, f64)>),
    SetTransform(HostTransform),
    /// Swap the tacton, keeping pattern time (clamped) and modulation phases.
    HotReload(Tacton),
}

#[derive(Debug, Error)]
pub enum SubmitError {
    #[error(transparent)]
    NonFinite(#[from] NonFiniteParam),
    #[error(transparent)]
    InvalidTacton(#[from] TactonError),
    #[error("command queue is full")]
    QueueFull,
    #[error("renderer has shut down")]
    Disconnected,
}

impl SubmitError {
    pub fn code(&self) -> &'static str {
        match self {
            SubmitError::NonFinite(_) => "non-finite",
            SubmitError::InvalidTacton(_) => "invalid-tacton",
            SubmitError::QueueFull => "queue-full",
            SubmitError::Disconnected => "disconnected",
        }
    }
}

enum Message {
    Play(Box<Program>),
    HotReload(Box<Program>),
    Stop,
    SetParam(String, f64),
    SetParams(Vec<(String, f64)>),
    SetTransform(HostTransform),
}

#[derive(Debug, Default)]
struct SharedStatus {
    loaded: AtomicBool,
    playing: AtomicBool,
    finished: AtomicBool,
    warnings: AtomicU64,
    pattern_time: AtomicU64,
    device_time: AtomicU64,
    batches: AtomicU64,
}

/// Renderer status as of the end of its most recent batch.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct StatusSnapshot {
    pub loaded: bool,
    pub playing: bool,
    pub finished: bool,
    pub warnings: u64,
    pub pattern_time: f64,
    pub device_time: f64,
    pub batches: u64,
}

/// Control-side handle. Cheap to clone; each clone is an independent submitter.
#[derive(Clone)]
pub struct Controller {
    tx: Sender<Message>,
    status: Arc<SharedStatus>,
}

impl Controller {
    /// Validate and enqueue `command`. It takes effect at the next batch boundary.
    pub fn submit(&self, command: Command) -> Result<(), SubmitError> {
        let message = match command {
            Command::Play(t) => Message::Play(Box::new(Program::compile(&t)?)),
            Command::HotReload(t) => Message::HotReload(Box::new(Program::compile(&t)?)),
            Command::Stop => Message::Stop,
            Command::SetParam(name, value) => {
                check_finite(&name, value)?;
                Message::SetParam(name, value)
            }
            Command::SetParams(values) => {
                for (name, value) in &values {
                    check_finite(name, *value)?;
                }
                Message::SetParams(values)
            }
            Command::SetTransform(t) => Message::SetTransform(t),
        };
        self.tx.try_send(message).map_err(|e| match e {
            TrySendError::Full(_) => SubmitError::QueueFull,
            TrySendError::Disconnected(_) => SubmitError::Disconnected,
        })
    }

    pub fn status(&self) -> StatusSnapshot {
        let s = &self.status;
        StatusSnapshot {
            loaded: s.loaded.load(Ordering::Acquire),
            playing: s.playing.load(Ordering::Acquire),
            finished: s.finished.load(Ordering::Acquire),
            warnings: s.warnings.load(Ordering::Acquire),
            pattern_time: f64::from_bits(s.pattern_time.load(Ordering::Acquire)),
            device_time: f64::from_bits(s.device_time.load(Ordering::Acquire)),
            batches: s.batches.load(Ordering::Acquire),
        }
    }
}

fn check_finite(name: &str, value: f64) -> Result<(), NonFiniteParam> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(NonFiniteParam { name: name.to_owned(), value })
    }
}

/// One decimated sample for visualization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TelemetrySample {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub amp: f64,
    pub pt: f64,
    #[serde(skip)]
    pub device_time: f64,
}

/// Every-`k`th-sample factor so that `rate / k` fits into
/// `messages_per_second` messages of at most `max_per_message` samples.
pub fn decimation_factor(device_rate: f64, messages_per_second: f64, max_per_message: usize) -> usize {
    let per_message = device_rate / messages_per_second;
    (per_message / max_per_message.max(1) as f64).ceil().max(1.0) as usize
}

/// Render-side producer for telemetry. Pushing never blocks or allocates;
/// when the queue is full the oldest sample is dropped.
pub struct TelemetryTap {
    queue: Arc<ArrayQueue<TelemetrySample>>,
    every: usize,
    countdown: usize,
}

/// Consumer side of the telemetry queue.
#[derive(Clone)]
pub struct TelemetryReceiver {
    queue: Arc<ArrayQueue<TelemetrySample>>,
}

impl TelemetryReceiver {
    pub fn pop(&self) -> Option<TelemetrySample> {
        self.queue.pop()
    }

    /// Pop up to `max` samples into `out`.
    pub fn drain_into(&self, out: &mut Vec<TelemetrySample>, max: usize) {
        while out.len() < max {
            match self.queue.pop() {
                Some(s) => out.push(s),
                None => break,
            }
        }
    }
}

pub fn telemetry_channel(every: usize, capacity: usize) -> (TelemetryTap, TelemetryReceiver) {
    let queue = Arc::new(ArrayQueue::new(capacity.max(1)));
    (TelemetryTap { queue: queue.clone(), every: every.max(1), countdown: 0 }, TelemetryReceiver { queue })
}

impl TelemetryTap {
    fn record(&mut self, samples: &[FocalPointSample], device_time: f64, dt: f64) {
        for (i, s) in samples.iter().enumerate() {
            if self.countdown == 0 {
                self.queue.force_push(TelemetrySample {
                    x: s.position.x,
                    y: s.position.y,
                    z: s.position.z,
                    amp: s.amplitude,
                    pt: s.pattern_time,
                    device_time: device_time + i as f64 * dt,
                });
                self.countdown = self.every;
            }
            self.countdown -= 1;
        }
    }
}

/// Anything a device can pull sample batches from.
pub trait BatchSource {
    /// Fill `out` with the samples for device times `device_time + i * dt`.
    fn next_batch(&mut self, device_time: f64, dt: f64, out: &mut [FocalPointSample]);
}

/// Evaluation side. Owns the playback state; one per engine.
pub struct Renderer {
    rx: Receiver<Message>,
    status: Arc<SharedStatus>,
    program: Option<Box<Program>>,
    state: PlaybackState,
    env: ParamEnv,
    slots: ParamSlots,
    env_dirty: bool,
    host: HostTransform,
    playing: bool,
    telemetry: Option<TelemetryTap>,
}

pub fn engine(queue_depth: usize) -> (Controller, Renderer) {
    let (tx, rx) = crossbeam_channel::bounded(queue_depth.max(1));
    let status = Arc::new(SharedStatus::default());
    let controller = Controller { tx, status: status.clone() };
    let renderer = Renderer {
        rx,
        status,
        program: None,
        state: PlaybackState::default(),
        env: ParamEnv::new(),
        slots: ParamSlots::default(),
        env_dirty: false,
        host: HostTransform::IDENTITY,
        playing: false,
        telemetry: None,
    };
    (controller, renderer)
}

impl Renderer {
    pub fn attach_telemetry(&mut self, tap: TelemetryTap) {
        self.telemetry = Some(tap);
    }

    pub fn state(&self) -> &PlaybackState {
        &self.state
    }

    pub fn params(&self) -> &ParamEnv {
        &self.env
    }

    pub fn is_playing(&self) -> bool {
        self.playing && self.program.is_some()
    }

    pub fn program(&self) -> Option<&Program> {
        self.program.as_deref()
    }

    /// Apply every queued command.
    pub fn drain_commands(&mut self) {
        while let Ok(message) = self.rx.try_recv() {
            self.apply(message);
        }
        if self.env_dirty {
            if let Some(program) = &self.program {
                program.rebind(&self.env, &mut self.slots);
            }
            self.env_dirty = false;
        }
    }

    fn apply(&mut self, message: Message) {
        match message {
            Message::Play(program) => {
                self.program = Some(program);
                let last_device_time = self.state.last_device_time;
                self.state = PlaybackState { last_device_time, ..PlaybackState::default() };
                self.playing = true;
                self.env_dirty = true;
            }
            Message::HotReload(program) => {
                self.state.pattern_time = self.state.pattern_time.clamp(0.0, program.end_time());
                self.state.finished = false;
                self.program = Some(program);
                self.env_dirty = true;
            }
            Message::Stop => self.playing = false,
            Message::SetParam(name, value) => {
                let _ = self.env.set(&name, value);
                self.env_dirty = true;
            }
            Message::SetParams(values) => {
                for (name, value) in &values {
                    let _ = self.env.set(name, *value);
                }
                self.env_dirty = true;
            }
            Message::SetTransform(host) => self.host = host,
        }
    }

    fn publish(&self) {
        let s = &self.status;
        s.loaded.store(self.program.is_some(), Ordering::Release);
        s.playing.store(self.is_playing(), Ordering::Release);
        s.finished.store(self.state.finished, Ordering::Release);
        s.warnings.store(self.state.warnings(), Ordering::Release);
        s.pattern_time.store(self.state.pattern_time.to_bits(), Ordering::Release);
        s.device_time.store(self.state.last_device_time.to_bits(), Ordering::Release);
        s.batches.fetch_add(1, Ordering::AcqRel);
    }
}

impl BatchSource for Renderer {
    fn next_batch(&mut self, device_time: f64, dt: f64, out: &mut [FocalPointSample]) {
        self.drain_commands();
        match (&self.program, self.playing) {
            (Some(program), true) => {
                program.eval_batch(&mut self.state, &self.slots, &self.host, dt, out);
                if let Some(tap) = &mut self.telemetry {
                    tap.record(out, device_time, dt);
                }
            }
            _ => {
                let silent = FocalPointSample {
                    position: self.state.last_position,
                    amplitude: 0.0,
                    pattern_time: self.state.pattern_time,
                };
                out.fill(silent);
            }
        }
        self.state.last_device_time = device_time + out.len() as f64 * dt;
        self.publish();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tacton::parse_tacton;

    const DT: f64 = 1.0 / 40_000.0;

    fn gated() -> Tacton {
        parse_tacton(
            r#"{"format_version":1,"keyframes":[
                {"time":0,"coords":{"x":0,"y":0},"brush":{"kind":"circle","size":"5"},"intensity":"gate"},
                {"time":1,"coords":{"x":10,"y":0},"brush":{"kind":"circle","size":"5"},"intensity":"gate"}]}"#,
        )
        .unwrap()
    }

    fn batch(renderer: &mut Renderer, n: usize) -> Vec<FocalPointSample> {
        let mut out = vec![FocalPointSample::default(); n];
        let t = renderer.state.last_device_time;
        renderer.next_batch(t, DT, &mut out);
        out
    }

    #[test]
    fn idle_renderer_is_silent() {
        let (_c, mut r) = engine(DEFAULT_QUEUE_DEPTH);
        let out = batch(&mut r, 40);
        assert_eq!(out.len(), 40);
        assert!(out.iter().all(|s| s.amplitude == 0.0));
    }

    #[test]
    fn set_param_applies_at_next_batch() {
        let (c, mut r) = engine(DEFAULT_QUEUE_DEPTH);
        c.submit(Command::Play(gated())).unwrap();
        assert!(batch(&mut r, 40).iter().all(|s| s.amplitude == 0.0));
        c.submit(Command::SetParam("gate".into(), 1.0)).unwrap();
        assert!(batch(&mut r, 40).iter().all(|s| s.amplitude == 1.0));
    }

    #[test]
    fn stop_silences() {
        let (c, mut r) = engine(DEFAULT_QUEUE_DEPTH);
        c.submit(Command::SetParam("gate".into(), 1.0)).unwrap();
        c.submit(Command::Play(gated())).unwrap();
        assert!(batch(&mut r, 40).iter().all(|s| s.amplitude == 1.0));
        c.submit(Command::Stop).unwrap();
        assert!(batch(&mut r, 40).iter().all(|s| s.amplitude == 0.0));
        assert!(!c.status().playing);
    }

    #[test]
    fn rejects_non_finite_and_invalid_tactons() {
        let (c, _r) = engine(DEFAULT_QUEUE_DEPTH);
        assert!(matches!(c.submit(Command::SetParam("p".into(), f64::NAN)), Err(SubmitError::NonFinite(_))));
        let mut bad = gated();
        bad.keyframes.swap(0, 1);
        assert!(matches!(c.submit(Command::HotReload(bad)), Err(SubmitError::InvalidTacton(_))));
    }

    #[test]
    fn hot_reload_clamps_pattern_time_and_keeps_phases() {
        let (c, mut r) = engine(DEFAULT_QUEUE_DEPTH);
        c.submit(Command::Play(gated())).unwrap();
        for _ in 0..500 {
            batch(&mut r, 40);
        }
        assert!((r.state().pattern_time - 0.5).abs() < 1e-9);
        let phase = r.state().stm_phase;
        let mut short = gated();
        short.keyframes[1].time = 0.2;
        c.submit(Command::HotReload(short)).unwrap();
        r.drain_commands();
        assert_eq!(r.state().pattern_time, 0.2);
        assert_eq!(r.state().stm_phase, phase);
        assert!(r.is_playing());
    }

    #[test]
    fn queue_overflow_rejects() {
        let (c, _r) = engine(2);
        c.submit(Command::Stop).unwrap();
        c.submit(Command::Stop).unwrap();
        assert!(matches!(c.submit(Command::Stop), Err(SubmitError::QueueFull)));
    }

    #[test]
    fn decimation_bounds() {
        let k = decimation_factor(40_000.0, 60.0, 64);
        assert_eq!(k, 11);
        let per_message = (40_000.0 / 60.0 / k as f64).ceil() as usize;
        assert!(per_message <= 64);
        assert_eq!(decimation_factor(100.0, 60.0, 64), 1);
    }

    #[test]
    fn telemetry_keeps_every_kth_sample_and_drops_oldest() {
        let (c, mut r) = engine(DEFAULT_QUEUE_DEPTH);
        let (tap, rx) = telemetry_channel(10, 4);
        r.attach_telemetry(tap);
        c.submit(Command::Play(gated())).unwrap();
        batch(&mut r, 40);
        let got: Vec<_> = std::iter::from_fn(|| rx.pop()).collect();
        assert_eq!(got.len(), 4);
        assert!((got[0].device_time - 0.0).abs() < 1e-15);
        assert!((got[1].device_time - 10.0 * DT).abs() < 1e-15);
        batch(&mut r, 80);
        let got: Vec<_> = std::iter::from_fn(|| rx.pop()).collect();
        assert_eq!(got.len(), 4);
        // oldest four of the eight dropped
        assert!((got[0].device_time - 80.0 * DT).abs() < 1e-12);
    }
}
