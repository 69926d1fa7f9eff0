//! Offline throughput measurement.

use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::evaluator::FocalPointSample;
use crate::formula::ParamEnv;
use crate::runtime::{engine, BatchSource, Command, SubmitError, DEFAULT_QUEUE_DEPTH};
use crate::tacton::Tacton;

pub const DEFAULT_DEVICE_RATE: f64 = 40_000.0;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("benchmark needs at least one batch of at least one sample, repeated at least once")]
    Empty,
    #[error(transparent)]
    Submit(#[from] SubmitError),
}

impl BenchError {
    pub fn code(&self) -> &'static str {
        match self {
            BenchError::Empty => "empty-benchmark",
            BenchError::Submit(e) => e.code(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchConfig {
    pub batches: usize,
    pub batch_size: usize,
    pub repeats: usize,
    /// Nominal device rate; sets the `dt` passed per sample.
    pub device_rate: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig { batches: 1000, batch_size: 40, repeats: 5, device_rate: DEFAULT_DEVICE_RATE }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub name: String,
    pub keyframes: usize,
    pub batches: usize,
    pub batch_size: usize,
    pub repeats: usize,
    /// Samples per second of wall time, in kHz, one entry per repeat.
    pub rates_khz: Vec<f64>,
    pub min_khz: f64,
    pub median_khz: f64,
    pub max_khz: f64,
    /// FNV-1a over the bit patterns of every sample of one run.
    pub checksum: u64,
}

/// Play `tacton` from the start `config.repeats` times through a fresh
/// renderer, timing `config.batches` calls of `config.batch_size` samples each.
pub fn run_bench(tacton: &Tacton, params: &ParamEnv, config: &BenchConfig) -> Result<BenchReport, BenchError> {
    if config.batches == 0 || config.batch_size == 0 || config.repeats == 0 {
        return Err(BenchError::Empty);
    }
    let dt = 1.0 / config.device_rate;
    let mut out = vec![FocalPointSample::default(); config.batch_size];
    let prepare = || -> Result<_, BenchError> {
        let (controller, mut renderer) = engine(DEFAULT_QUEUE_DEPTH);
        let values: Vec<(String, f64)> = params.iter().map(|(k, v)| (k.to_owned(), v)).collect();
        controller.submit(Command::SetParams(values))?;
        controller.submit(Command::Play(tacton.clone()))?;
        renderer.drain_commands();
        Ok(renderer)
    };

    let mut checksum = Fnv1a::new();
    let mut renderer = prepare()?;
    for b in 0..config.batches {
        renderer.next_batch(b as f64 * dt * config.batch_size as f64, dt, &mut out);
        out.iter().for_each(|s| checksum.sample(s));
    }

    let mut rates = Vec::with_capacity(config.repeats);
    for _ in 0..config.repeats {
        let mut renderer = prepare()?;
        let start = Instant::now();
        for b in 0..config.batches {
            renderer.next_batch(b as f64 * dt * config.batch_size as f64, dt, &mut out);
        }
        let elapsed = start.elapsed().as_secs_f64();
        std::hint::black_box(&out);
        let samples = (config.batches * config.batch_size) as f64;
        rates.push(samples / elapsed.max(f64::MIN_POSITIVE) / 1000.0);
    }

    let mut sorted = rates.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(BenchReport {
        name: tacton.name.clone(),
        keyframes: tacton.keyframes.len(),
        batches: config.batches,
        batch_size: config.batch_size,
        repeats: config.repeats,
        min_khz: sorted[0],
        median_khz: median(&sorted),
        max_khz: sorted[sorted.len() - 1],
        rates_khz: rates,
        checksum: checksum.0,
    })
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

struct Fnv1a(u64);

impl Fnv1a {
    fn new() -> Self {
        Fnv1a(0xcbf2_9ce4_8422_2325)
    }

    fn word(&mut self, w: u64) {
        for byte in w.to_le_bytes() {
            self.0 = (self.0 ^ byte as u64).wrapping_mul(0x0100_0000_01b3);
        }
    }

    fn sample(&mut self, s: &FocalPointSample) {
        for v in [s.position.x, s.position.y, s.position.z, s.amplitude, s.pattern_time] {
            self.word(v.to_bits());
        }
    }
}
