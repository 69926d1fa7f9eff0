//! Side-by-side runs of the engine and the reference player.

use adaptics_core::evaluator::FocalPointSample;
use adaptics_core::runtime::{engine, BatchSource, Command, DEFAULT_QUEUE_DEPTH};
use adaptics_core::HostTransform;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::generate;
use crate::reference::{row_major, RefPlayer};

pub const MAX_BATCH: usize = 64;
const RATES: [f64; 3] = [40_000.0, 4_000.0, 500.0];

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CaseReport {
    pub samples: usize,
    pub keyframes: usize,
    pub jumps_taken: u64,
    pub max_position_error: f64,
    pub max_amplitude_error: f64,
    pub max_pattern_time_error: f64,
    pub jump_warnings_match: bool,
}

impl CaseReport {
    pub fn within(&self, tol: f64) -> bool {
        self.max_position_error <= tol
            && self.max_amplitude_error <= tol
            && self.max_pattern_time_error <= tol
            && self.jump_warnings_match
    }
}

/// Play one seeded random tacton through the runtime and the reference
/// player with the same random parameter trajectory, batch sizes and
/// jittered `dt`, recording the largest disagreement.
pub fn oracle_case(seed: u64, batches: usize) -> CaseReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tacton = generate::tacton(&mut rng, 16);
    let host = generate::host(&mut rng);
    let mut env = generate::env(&mut rng);
    let rate = RATES[rng.random_range(0..RATES.len())];

    let (controller, mut renderer) = engine(DEFAULT_QUEUE_DEPTH);
    let host_transform = HostTransform::new(row_major(&host)).expect("rigid transform");
    controller.submit(Command::SetTransform(host_transform)).unwrap();
    controller.submit(Command::SetParams(env.iter().map(|(k, v)| (k.clone(), *v)).collect())).unwrap();
    controller.submit(Command::Play(tacton.clone())).unwrap();

    let mut reference = RefPlayer::new(&tacton);
    let mut out = [FocalPointSample::default(); MAX_BATCH];
    let mut report = CaseReport { keyframes: tacton.keyframes.len(), ..CaseReport::default() };
    let mut device_time = 0.0;
    for _ in 0..batches {
        if let Some((name, value)) = generate::param_step(&mut rng) {
            controller.submit(Command::SetParam(name.clone(), value)).unwrap();
            env.insert(name, value);
        }
        let n = rng.random_range(1..=MAX_BATCH);
        let dt = rng.random_range(0.9..1.1) / rate;
        renderer.next_batch(device_time, dt, &mut out[..n]);
        for s in &out[..n] {
            let r = reference.sample(&env, &host, dt);
            let dp = (0..3)
                .map(|i| (r.position[i] - [s.position.x, s.position.y, s.position.z][i]).abs())
                .fold(0.0, f64::max);
            report.max_position_error = report.max_position_error.max(dp);
            report.max_amplitude_error = report.max_amplitude_error.max((r.amplitude - s.amplitude).abs());
            report.max_pattern_time_error = report.max_pattern_time_error.max((r.pattern_time - s.pattern_time).abs());
        }
        report.samples += n;
        device_time += n as f64 * dt;
    }
    report.jumps_taken = reference.jumps_taken;
    report.jump_warnings_match = reference.jump_warnings == renderer.state().jump_warnings;
    report
}
