//! Handle-based embedding API.
//!
//! Each [`EngineHandle`] owns an engine driven by a paced mock device thread.
//! Handles are process-global, never reused, and never zero.

use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{LazyLock, Mutex};

use thiserror::Error;

use crate::device::{spawn_paced, DeviceConfig, DeviceConfigError, PacedDevice};
use crate::runtime::{engine, Command, Controller, StatusSnapshot, SubmitError, DEFAULT_QUEUE_DEPTH};
use crate::tacton::{parse_tacton, TactonError};
use crate::transform::{HostTransform, TransformError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EngineHandle(u64);

impl EngineHandle {
    pub fn from_raw(raw: u64) -> Self {
        EngineHandle(raw)
    }

    pub fn raw(self) -> u64 {
        self.0
    }
}

#[derive(Debug, Error)]
pub enum ApiError {
    #[error(transparent)]
    Device(#[from] DeviceConfigError),
    #[error("no hardware backend is available; use the mock device")]
    DeviceUnavailable,
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Tacton(#[from] TactonError),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Submit(#[from] SubmitError),
    #[error("unknown engine handle {0}")]
    InvalidHandle(u64),
}

impl ApiError {
    pub fn code(&self) -> &'static str {
        match self {
            ApiError::Device(e) => e.code(),
            ApiError::DeviceUnavailable => "device-unavailable",
            ApiError::Io { .. } => "io",
            ApiError::Tacton(_) => "invalid-tacton",
            ApiError::Transform(_) => "bad-matrix",
            ApiError::Submit(e) => e.code(),
            ApiError::InvalidHandle(_) => "invalid-handle",
        }
    }
}

struct Instance {
    controller: Controller,
    _device: PacedDevice,
}

static NEXT_HANDLE: AtomicU64 = AtomicU64::new(1);
static REGISTRY: LazyLock<Mutex<HashMap<u64, Instance>>> = LazyLock::new(Default::default);

fn with_controller<T>(handle: EngineHandle, f: impl FnOnce(&Controller) -> Result<T, ApiError>) -> Result<T, ApiError> {
    let controller = {
        let registry = REGISTRY.lock().unwrap_or_else(|e| e.into_inner());
        registry.get(&handle.0).map(|i| i.controller.clone()).ok_or(ApiError::InvalidHandle(handle.0))?
    };
    f(&controller)
}

/// Start an engine at `rate` samples per second in batches of `batch`.
pub fn api_init(use_mock: bool, rate: f64, batch: usize) -> Result<EngineHandle, ApiError> {
    let config = DeviceConfig::new(rate, batch);
    config.validate()?;
    if !use_mock {
        return Err(ApiError::DeviceUnavailable);
    }
    let (controller, renderer) = engine(DEFAULT_QUEUE_DEPTH);
    let device = spawn_paced(renderer, config)?;
    let handle = NEXT_HANDLE.fetch_add(1, Ordering::Relaxed);
    REGISTRY.lock().unwrap_or_else(|e| e.into_inner()).insert(handle, Instance { controller, _device: device });
    Ok(EngineHandle(handle))
}

pub fn api_play_tacton_immediate(handle: EngineHandle, path: impl AsRef<Path>) -> Result<(), ApiError> {
    let path = path.as_ref();
    with_controller(handle, |c| {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ApiError::Io { path: path.display().to_string(), source })?;
        let tacton = parse_tacton(&text)?;
        Ok(c.submit(Command::Play(tacton))?)
    })
}

pub fn api_update_user_parameter(handle: EngineHandle, name: &str, value: f64) -> Result<(), ApiError> {
    with_controller(handle, |c| Ok(c.submit(Command::SetParam(name.to_owned(), value))?))
}

/// `matrix` is a row-major 4x4 affine transform.
pub fn api_update_transform(handle: EngineHandle, matrix: &[f64]) -> Result<(), ApiError> {
    let transform = HostTransform::from_slice(matrix)?;
    with_controller(handle, |c| Ok(c.submit(Command::SetTransform(transform))?))
}

pub fn api_stop(handle: EngineHandle) -> Result<(), ApiError> {
    with_controller(handle, |c| Ok(c.submit(Command::Stop)?))
}

pub fn api_status(handle: EngineHandle) -> Result<StatusSnapshot, ApiError> {
    with_controller(handle, |c| Ok(c.status()))
}

/// Stop the device thread and release the handle.
pub fn api_deinit(handle: EngineHandle) -> Result<(), ApiError> {
    let instance = REGISTRY
        .lock()
        .unwrap_or_else(|e| e.into_inner())
        .remove(&handle.0)
        .ok_or(ApiError::InvalidHandle(handle.0))?;
    drop(instance);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::time::{Duration, Instant};

    fn wait_for(mut cond: impl FnMut() -> bool) -> bool {
        let deadline = Instant::now() + Duration::from_secs(2);
        while Instant::now() < deadline {
            if cond() {
                return true;
            }
            std::thread::sleep(Duration::from_millis(5));
        }
        false
    }

    #[test]
    fn lifecycle() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("one.adaptics");
        std::fs::write(
            &path,
            r#"{"format_version":1,"keyframes":[{"time":0,"coords":{"x":0,"y":0},"brush":{"kind":"circle","size":"5"}}]}"#,
        )
        .unwrap();

        let h = api_init(true, 10_000.0, 50).unwrap();
        assert_ne!(h.raw(), 0);
        api_play_tacton_immediate(h, &path).unwrap();
        assert!(wait_for(|| api_status(h).unwrap().playing));
        api_update_user_parameter(h, "p", 1.0).unwrap();
        api_update_transform(h, HostTransform::translation(0.0, 0.0, 5.0).matrix()).unwrap();
        api_stop(h).unwrap();
        assert!(wait_for(|| !api_status(h).unwrap().playing));
        api_deinit(h).unwrap();
        assert_eq!(api_stop(h).unwrap_err().code(), "invalid-handle");
    }

    #[test]
    fn error_codes() {
        assert_eq!(api_init(true, 0.0, 10).unwrap_err().code(), "invalid-rate");
        assert_eq!(api_init(true, 100.0, 0).unwrap_err().code(), "invalid-batch");
        assert_eq!(api_init(false, 100.0, 10).unwrap_err().code(), "device-unavailable");
        let h = api_init(true, 1000.0, 10).unwrap();
        assert_eq!(api_play_tacton_immediate(h, "/nonexistent/x.adaptics").unwrap_err().code(), "io");
        assert_eq!(api_update_user_parameter(h, "p", f64::INFINITY).unwrap_err().code(), "non-finite");
        assert_eq!(api_update_transform(h, &[0.0; 4]).unwrap_err().code(), "bad-matrix");
        api_deinit(h).unwrap();
        assert_eq!(api_status(EngineHandle::from_raw(0)).unwrap_err().code(), "invalid-handle");
    }
}
