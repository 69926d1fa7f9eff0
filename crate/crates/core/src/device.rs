//! Simulated output devices.
//!
//! A device pulls batches from a [`BatchSource`] at a fixed nominal rate and
//! batch size. [`MockDevice`] is stepped explicitly and records everything it
//! receives; [`spawn_paced`] runs the same loop on a thread paced against the
//! wall clock.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::evaluator::FocalPointSample;
use crate::runtime::BatchSource;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum DeviceConfigError {
    #[error("sample rate must be positive and finite, got {0}")]
    InvalidRate(f64),
    #[error("batch size must be positive")]
    InvalidBatch,
    #[error("jitter fraction must be in [0, 1), got {0}")]
    InvalidJitter(f64),
}

impl DeviceConfigError {
    pub fn code(&self) -> &'static str {
        match self {
            DeviceConfigError::InvalidRate(_) => "invalid-rate",
            DeviceConfigError::InvalidBatch => "invalid-batch",
            DeviceConfigError::InvalidJitter(_) => "invalid-jitter",
        }
    }
}

/// Per-batch `dt` perturbation: each batch uses `(1 + u) / rate` with
/// `u` uniform in `[-fraction, fraction]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jitter {
    pub fraction: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviceConfig {
    pub rate: f64,
    pub batch: usize,
    pub jitter: Option<Jitter>,
}

impl DeviceConfig {
    pub fn new(rate: f64, batch: usize) -> Self {
        DeviceConfig { rate, batch, jitter: None }
    }

    pub fn with_jitter(mut self, fraction: f64, seed: u64) -> Self {
        self.jitter = Some(Jitter { fraction, seed });
        self
    }

    pub fn validate(&self) -> Result<(), DeviceConfigError> {
        if !(self.rate.is_finite() && self.rate > 0.0) {
            return Err(DeviceConfigError::InvalidRate(self.rate));
        }
        if self.batch == 0 {
            return Err(DeviceConfigError::InvalidBatch);
        }
        if let Some(j) = self.jitter {
            if !(0.0..1.0).contains(&j.fraction) {
                return Err(DeviceConfigError::InvalidJitter(j.fraction));
            }
        }
        Ok(())
    }

    /// Requests needed to cover `seconds` of output.
    pub fn batches_for(&self, seconds: f64) -> usize {
        (seconds * self.rate / self.batch as f64).ceil().max(0.0) as usize
    }
}

/// One received batch: the device time of its first sample and its `dt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchRecord {
    pub device_time: f64,
    pub dt: f64,
}

#[derive(Debug)]
pub struct MockDevice {
    config: DeviceConfig,
    rng: Option<ChaCha8Rng>,
    device_time: f64,
    buffer: Vec<FocalPointSample>,
    samples: Vec<FocalPointSample>,
    batches: Vec<BatchRecord>,
}

impl MockDevice {
    pub fn new(config: DeviceConfig) -> Result<Self, DeviceConfigError> {
        config.validate()?;
        Ok(MockDevice {
            rng: config.jitter.map(|j| ChaCha8Rng::seed_from_u64(j.seed)),
            config,
            device_time: 0.0,
            buffer: vec![FocalPointSample::default(); config.batch],
            samples: Vec::new(),
            batches: Vec::new(),
        })
    }

    pub fn config(&self) -> &DeviceConfig {
        &self.config
    }

    pub fn device_time(&self) -> f64 {
        self.device_time
    }

    fn next_dt(&mut self) -> f64 {
        let nominal = 1.0 / self.config.rate;
        match (&mut self.rng, self.config.jitter) {
            (Some(rng), Some(j)) if j.fraction > 0.0 => nominal * (1.0 + rng.random_range(-j.fraction..=j.fraction)),
            _ => nominal,
        }
    }

    /// Request and record one batch.
    pub fn step(&mut self, source: &mut impl BatchSource) -> &[FocalPointSample] {
        let dt = self.next_dt();
        source.next_batch(self.device_time, dt, &mut self.buffer);
        self.batches.push(BatchRecord { device_time: self.device_time, dt });
        self.device_time += dt * self.config.batch as f64;
        let start = self.samples.len();
        self.samples.extend_from_slice(&self.buffer);
        &self.samples[start..]
    }

    /// Run for `seconds` of device time, rounded up to whole batches.
    pub fn run(&mut self, source: &mut impl BatchSource, seconds: f64) -> &[FocalPointSample] {
        let start = self.samples.len();
        for _ in 0..self.config.batches_for(seconds) {
            self.step(source);
        }
        &self.samples[start..]
    }

    pub fn samples(&self) -> &[FocalPointSample] {
        &self.samples
    }

    pub fn batches(&self) -> &[BatchRecord] {
        &self.batches
    }

    /// Device time at which each recorded sample was emitted.
    pub fn sample_times(&self) -> impl Iterator<Item = f64> + '_ {
        let n = self.config.batch;
        self.batches.iter().flat_map(move |b| (0..n).map(move |i| b.device_time + i as f64 * b.dt))
    }

    pub fn clear(&mut self) {
        self.samples.clear();
        self.batches.clear();
    }
}

/// Counters shared with a paced device thread.
#[derive(Debug, Default)]
pub struct PacedStats {
    pub batches: AtomicU64,
    pub samples: AtomicU64,
}

pub struct PacedDevice {
    stop: Arc<AtomicBool>,
    stats: Arc<PacedStats>,
    thread: Option<JoinHandle<()>>,
}

/// Spawn a thread that pulls batches from `source` in real time.
///
/// The thread sleeps until the wall clock catches up with the device time of
/// the next batch, so output stays paced at `rate` on average.
pub fn spawn_paced<S>(mut source: S, config: DeviceConfig) -> Result<PacedDevice, DeviceConfigError>
where
    S: BatchSource + Send + 'static,
{
    config.validate()?;
    let stop = Arc::new(AtomicBool::new(false));
    let stats = Arc::new(PacedStats::default());
    let thread = {
        let stop = stop.clone();
        let stats = stats.clone();
        std::thread::Builder::new()
            .name("adaptics-device".into())
            .spawn(move || {
                let dt = 1.0 / config.rate;
                let mut buffer = vec![FocalPointSample::default(); config.batch];
                let started = Instant::now();
                let mut device_time = 0.0;
                while !stop.load(Ordering::Acquire) {
                    source.next_batch(device_time, dt, &mut buffer);
                    device_time += dt * config.batch as f64;
                    stats.batches.fetch_add(1, Ordering::Relaxed);
                    stats.samples.fetch_add(config.batch as u64, Ordering::Relaxed);
                    let due = Duration::from_secs_f64(device_time);
                    if let Some(wait) = due.checked_sub(started.elapsed()) {
                        std::thread::sleep(wait);
                    }
                }
            })
            .expect("spawn device thread")
    };
    Ok(PacedDevice { stop, stats, thread: Some(thread) })
}

impl PacedDevice {
    pub fn stats(&self) -> &PacedStats {
        &self.stats
    }

    pub fn stop(mut self) {
        self.shutdown();
    }

    fn shutdown(&mut self) {
        self.stop.store(true, Ordering::Release);
        if let Some(thread) = self.thread.take() {
            let _ = thread.join();
        }
    }
}

impl Drop for PacedDevice {
    fn drop(&mut self) {
        self.shutdown();
    }
}
