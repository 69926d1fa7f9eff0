//! Regenerates the bundled `.adaptics` library.
//!
//! ```text
//! cargo run -p adaptics-core --example gen_corpus -- corpus
//! ```

use std::path::PathBuf;

use adaptics_core::formula::Formula;
use adaptics_core::serialize_tacton;
use adaptics_core::tacton::parse_tacton;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

const RAIN_PERIOD: f64 = 0.05;

fn doc(name: &str, params: &[(&str, f64)], keyframes: Vec<Value>, post: Value) -> Value {
    json!({
        "format_version": 1,
        "name": name,
        "params": params.iter().map(|(n, d)| json!({"name": n, "default": d})).collect::<Vec<_>>(),
        "keyframes": keyframes,
        "post": post,
    })
}

fn baseline() -> Value {
    doc(
        "Baseline",
        &[],
        vec![json!({
            "time": 0,
            "coords": {"x": 0, "y": 0, "z": 200},
            "brush": {"kind": "circle", "size": "5", "stm_freq": "100"},
        })],
        json!({}),
    )
}

/// Drops at seeded random positions, one every `RAIN_PERIOD`; the last
/// keyframe loops back to the start until `stop` reaches 1.
fn rain_bench(name: &str, count: usize, size: &str, intensity: &str, stm: &str) -> Value {
    let mut rng = ChaCha8Rng::seed_from_u64(62);
    let keyframes = (0..count)
        .map(|i| {
            let mut kf = json!({
                "time": i as f64 * RAIN_PERIOD,
                "coords": {
                    "x": (rng.random_range(-40.0..40.0_f64) * 10.0).round() / 10.0,
                    "y": (rng.random_range(-40.0..40.0_f64) * 10.0).round() / 10.0,
                    "z": 200,
                },
                "coords_transition": "step",
                "brush": {"kind": "circle", "size": size, "stm_freq": stm},
                "intensity": intensity,
            });
            if i == count - 1 {
                kf["jumps"] = json!([{"param": "stop", "op": "<", "threshold": 1, "target": 0}]);
            }
            kf
        })
        .collect();
    doc(
        name,
        &[("drop", 1.0), ("fade", 0.0), ("wind", 0.0), ("gust", 0.0), ("pulse", 0.0), ("stop", 0.0)],
        keyframes,
        json!({}),
    )
}

fn button() -> Value {
    let radius = "activation * 15 + 15";
    let kf = |time: f64, jumps: Value| {
        json!({
            "time": time,
            "coords": {"x": 0, "y": 0, "z": 200},
            "brush": {"kind": "circle", "size": radius, "stm_freq": "100"},
            "intensity": "proximity * 0.5 + 0.5",
            "jumps": jumps,
        })
    };
    let hover = json!([
        {"param": "proximity", "op": "<", "threshold": 1, "target": 0},
        {"param": "activation", "op": "<", "threshold": 1, "target": 0.4},
    ]);
    doc(
        "Button",
        &[("proximity", 0.0), ("activation", 0.0)],
        vec![kf(0.0, json!([])), kf(0.3, hover.clone()), kf(0.4, json!([])), kf(0.6, hover), kf(0.9, json!([]))],
        json!({}),
    )
}

fn rain() -> Value {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let keyframes = (0..12)
        .map(|i| {
            json!({
                "time": i as f64 * 0.1,
                "coords": {"x": rng.random_range(-30..=30), "y": rng.random_range(-30..=30), "z": 200},
                "coords_transition": "step",
                "brush": {"kind": "circle", "size": "3 + rain_intensity * 4", "stm_freq": "120"},
                "intensity": "rain_intensity",
                "jumps": if i == 11 { json!([{"param": "rain_intensity", "op": ">", "threshold": 0, "target": 0}]) } else { json!([]) },
            })
        })
        .collect();
    doc("Rain", &[("rain_intensity", 0.5)], keyframes, json!({"playback_speed": "0.5 + rain_intensity"}))
}

fn heartbeat() -> Value {
    let beat = |time: f64, intensity: &str| {
        json!({
            "time": time,
            "coords": {"x": 0, "y": 0, "z": 200},
            "brush": {"kind": "circle", "size": "4 + stress * 3", "am_freq": "200", "stm_freq": "80"},
            "brush_transition": "step",
            "intensity": intensity,
            "intensity_transition": "step",
        })
    };
    let mut last = beat(1.0, "0");
    last["jumps"] = json!([{"param": "stop", "op": "<", "threshold": 1, "target": 0}]);
    doc(
        "Heartbeat",
        &[("stress", 0.0), ("stop", 0.0)],
        vec![beat(0.0, "1"), beat(0.12, "0"), beat(0.25, "0.8"), beat(0.37, "0"), last],
        json!({"playback_speed": "1 + stress"}),
    )
}

fn loading() -> Value {
    let kf = |time: f64, x: f64, jumps: Value| {
        json!({
            "time": time,
            "coords": {"x": x, "y": 0, "z": 200},
            "brush": {"kind": "line", "size": "8", "rotation": "90", "stm_freq": "100"},
            "jumps": jumps,
        })
    };
    doc(
        "Loading",
        &[("progress", 0.0)],
        vec![
            kf(0.0, -40.0, json!([])),
            kf(1.0, 40.0, json!([{"param": "progress", "op": "<", "threshold": 1, "target": 0}])),
            kf(1.2, 40.0, json!([])),
        ],
        json!({"playback_speed": "1 + progress * 2"}),
    )
}

fn op_total(text: &str) -> usize {
    let tacton = parse_tacton(text).expect("generated tacton is valid");
    tacton.formulas().iter().map(|(_, f): &(String, &Formula)| f.expr().op_count()).sum()
}

fn main() {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "corpus".into()));
    std::fs::create_dir_all(&dir).expect("create output directory");

    let plain = ("drop * 3 + 2", "1", "80");
    let heavy = (
        "drop * 3 + 2 + wind * 0.5 - gust * 0.25",
        "1 - fade * 0.5 + pulse * 0.1 - pulse * 0.1",
        "70 + drop * 10 + wind * 5 - gust * 5",
    );
    let files = [
        ("Baseline", baseline()),
        ("RainBench", rain_bench("RainBench", 62, plain.0, plain.1, plain.2)),
        ("RainBench2x", rain_bench("RainBench2x", 124, plain.0, plain.1, plain.2)),
        ("RainBenchF", rain_bench("RainBenchF", 62, heavy.0, heavy.1, heavy.2)),
        ("Button", button()),
        ("Rain", rain()),
        ("Heartbeat", heartbeat()),
        ("loading", loading()),
    ];
    for (stem, value) in files {
        let tacton = parse_tacton(&value.to_string()).unwrap_or_else(|e| panic!("{stem}: {e}"));
        let text = serialize_tacton(&tacton);
        let path = dir.join(format!("{stem}.adaptics"));
        std::fs::write(&path, &text).expect("write tacton");
        println!("{} ({} keyframes, {} formula ops)", path.display(), tacton.keyframes.len(), op_total(&text));
    }
}
