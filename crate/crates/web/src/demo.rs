//! Demo logic with plain Rust types, so it runs and tests natively.

use adaptics_core::evaluator::FocalPointSample;
use adaptics_core::formula::{parse_formula, referenced_params};
use adaptics_core::runtime::{engine, BatchSource, Command, Controller, Renderer};
use adaptics_core::{parse_tacton, ParamEnv};
use serde::Serialize;

/// Values per sample in [`Preview::step`] output: x, y, z, amplitude, pattern time.
pub const STRIDE: usize = 5;

pub const LIBRARY: [(&str, &str); 5] = [
    ("Button", include_str!("../../../corpus/Button.adaptics")),
    ("Rain", include_str!("../../../corpus/Rain.adaptics")),
    ("Heartbeat", include_str!("../../../corpus/Heartbeat.adaptics")),
    ("loading", include_str!("../../../corpus/loading.adaptics")),
    ("RainBench", include_str!("../../../corpus/RainBench.adaptics")),
];

pub fn library_tacton(name: &str) -> Option<&'static str> {
    LIBRARY.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}

/// A renderer driven by a simulated device clock instead of a device thread.
pub struct Preview {
    controller: Controller,
    renderer: Renderer,
    rate: f64,
    device_time: f64,
    batch: Vec<FocalPointSample>,
}

impl Preview {
    pub fn new(tacton_json: &str, rate: f64) -> Result<Preview, String> {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(format!("invalid-rate: {rate}"));
        }
        let tacton = parse_tacton(tacton_json).map_err(|e| format!("invalid-tacton: {e}"))?;
        let (controller, renderer) = engine(64);
        let mut preview = Preview { controller, renderer, rate, device_time: 0.0, batch: Vec::new() };
        preview.send(Command::Play(tacton))?;
        Ok(preview)
    }

    fn send(&mut self, command: Command) -> Result<(), String> {
        self.controller.submit(command).map_err(|e| format!("{}: {e}", e.code()))?;
        // nothing else drains the queue between steps
        self.renderer.drain_commands();
        Ok(())
    }

    pub fn set_param(&mut self, name: &str, value: f64) -> Result<(), String> {
        self.send(Command::SetParam(name.to_owned(), value))
    }

    /// Swap the pattern, keeping pattern time and phases.
    pub fn reload(&mut self, tacton_json: &str) -> Result<(), String> {
        let tacton = parse_tacton(tacton_json).map_err(|e| format!("invalid-tacton: {e}"))?;
        self.send(Command::HotReload(tacton))
    }

    pub fn restart(&mut self, tacton_json: &str) -> Result<(), String> {
        let tacton = parse_tacton(tacton_json).map_err(|e| format!("invalid-tacton: {e}"))?;
        self.send(Command::Play(tacton))
    }

    /// Render `samples` device samples as one batch and return them flattened.
    pub fn step(&mut self, samples: usize) -> Vec<f64> {
        self.batch.resize(samples, FocalPointSample::default());
        let dt = 1.0 / self.rate;
        self.renderer.next_batch(self.device_time, dt, &mut self.batch);
        self.device_time += samples as f64 * dt;
        let mut out = Vec::with_capacity(samples * STRIDE);
        for s in &self.batch {
            out.extend_from_slice(&[s.position.x, s.position.y, s.position.z, s.amplitude, s.pattern_time]);
        }
        out
    }

    pub fn pattern_time(&self) -> f64 {
        self.renderer.state().pattern_time
    }

    pub fn finished(&self) -> bool {
        self.renderer.state().finished
    }

    pub fn device_time(&self) -> f64 {
        self.device_time
    }

    /// Names every formula in the pattern references, sorted.
    pub fn param_names(&self) -> Vec<String> {
        self.renderer.program().map(|p| p.params().names().to_vec()).unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FormulaCheck {
    pub ok: bool,
    /// Value under the given parameters; absent parameters read as 0.
    pub value: Option<f64>,
    /// The result was non-finite and replaced by 0.
    pub sanitized: bool,
    pub params: Vec<String>,
    /// Character index of a syntax error.
    pub position: Option<usize>,
    pub message: Option<String>,
}

pub fn check_formula(text: &str, params: &[(String, f64)]) -> FormulaCheck {
    match parse_formula(text) {
        Ok(expr) => {
            let mut env = ParamEnv::new();
            for (name, value) in params {
                // sliders never produce non-finite values; skip rather than fail the check
                let _ = env.set(name, *value);
            }
            let eval = expr.eval(&env);
            FormulaCheck {
                ok: true,
                value: Some(eval.value),
                sanitized: eval.sanitized,
                params: referenced_params(&expr).into_iter().collect(),
                position: None,
                message: None,
            }
        }
        Err(e) => FormulaCheck {
            ok: false,
            value: None,
            sanitized: false,
            params: Vec::new(),
            position: Some(e.position),
            message: Some(e.to_string()),
        },
    }
}
