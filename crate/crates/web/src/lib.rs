//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Build with `wasm-pack build crates/web --target web --out-dir www/pkg`.

pub mod demo;

use wasm_bindgen::prelude::*;

#[wasm_bindgen]
pub struct Preview(demo::Preview);

#[wasm_bindgen]
impl Preview {
    #[wasm_bindgen(constructor)]
    pub fn new(tacton_json: &str, rate: f64) -> Result<Preview, String> {
        demo::Preview::new(tacton_json, rate).map(Preview)
    }

    #[wasm_bindgen(js_name = setParam)]
    pub fn set_param(&mut self, name: &str, value: f64) -> Result<(), String> {
        self.0.set_param(name, value)
    }

    pub fn reload(&mut self, tacton_json: &str) -> Result<(), String> {
        self.0.reload(tacton_json)
    }

    pub fn restart(&mut self, tacton_json: &str) -> Result<(), String> {
        self.0.restart(tacton_json)
    }

    /// Flat `[x, y, z, amp, pt]` per sample.
    pub fn step(&mut self, samples: usize) -> Vec<f64> {
        self.0.step(samples)
    }

    #[wasm_bindgen(getter, js_name = patternTime)]
    pub fn pattern_time(&self) -> f64 {
        self.0.pattern_time()
    }

    #[wasm_bindgen(getter)]
    pub fn finished(&self) -> bool {
        self.0.finished()
    }

    #[wasm_bindgen(js_name = paramNames)]
    pub fn param_names(&self) -> Vec<String> {
        self.0.param_names()
    }
}

/// JSON-encoded [`demo::FormulaCheck`]; `params_json` maps names to values.
#[wasm_bindgen(js_name = checkFormula)]
pub fn check_formula(text: &str, params_json: &str) -> String {
    let params: Vec<(String, f64)> = serde_json::from_str::<std::collections::BTreeMap<String, f64>>(params_json)
        .map(|m| m.into_iter().collect())
        .unwrap_or_default();
    serde_json::to_string(&demo::check_formula(text, &params)).expect("check serializes")
}

#[wasm_bindgen(js_name = libraryNames)]
pub fn library_names() -> Vec<String> {
    demo::LIBRARY.iter().map(|(name, _)| name.to_string()).collect()
}

#[wasm_bindgen(js_name = libraryTacton)]
pub fn library_tacton(name: &str) -> Option<String> {
    demo::library_tacton(name).map(str::to_owned)
}
