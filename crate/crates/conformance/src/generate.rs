//! Seeded random formulas, tacton documents and parameter trajectories.

use adaptics_core::tacton::{parse_tacton, Tacton};
use rand::seq::IndexedRandom;
use rand::Rng;
use serde_json::{json, Map, Value};

use crate::reference::{mat_mul, rotation_z_deg, translation, Env, Mat4};

/// Parameter names as written in formulas; `missing` is never bound.
pub const FORMULA_NAMES: [&str; 6] = ["a", "b", "c", "speed_k", "`hand speed`", "missing"];
/// Names an environment may bind.
pub const ENV_NAMES: [&str; 5] = ["a", "b", "c", "speed_k", "hand speed"];
const JUMP_PARAMS: [&str; 3] = ["a", "b", "c"];
const OPS: [&str; 4] = ["+", "-", "*", "/"];
const COMPARE: [&str; 4] = ["<", "<=", ">", ">="];

pub fn number_literal(rng: &mut impl Rng) -> String {
    match rng.random_range(0..6) {
        0 => rng.random_range(0..100).to_string(),
        1 => format!("{:.2}", rng.random_range(0.0..10.0)),
        2 => format!(".{}", rng.random_range(1..1000)),
        3 => format!("{}.", rng.random_range(0..50)),
        4 => format!("{}e-{}", rng.random_range(1..9), rng.random_range(0..4)),
        _ => format!("{}.{}E+{}", rng.random_range(1..9), rng.random_range(0..99), rng.random_range(0..3)),
    }
}

fn spaces(rng: &mut impl Rng) -> &'static str {
    ["", " ", "  ", "\t"][rng.random_range(0..4)]
}

fn operand(rng: &mut impl Rng, depth: u32) -> String {
    let minus = if rng.random_bool(0.15) { "-" } else { "" };
    let body = if depth > 0 && rng.random_bool(0.25) {
        format!("({})", formula(rng, depth - 1))
    } else if rng.random_bool(0.5) {
        number_literal(rng)
    } else {
        FORMULA_NAMES.choose(rng).unwrap().to_string()
    };
    format!("{minus}{body}")
}

/// A syntactically valid formula with up to `depth` levels of parentheses.
pub fn formula(rng: &mut impl Rng, depth: u32) -> String {
    let mut out = operand(rng, depth);
    for _ in 0..rng.random_range(0..4) {
        let op = OPS.choose(rng).unwrap();
        let (l, r) = (spaces(rng), spaces(rng));
        out.push_str(&format!("{l}{op}{r}{}", operand(rng, depth)));
    }
    out
}

/// A formula whose magnitude stays within a few thousand for the parameter
/// values [`env`] and [`param_step`] produce.
pub fn bounded_formula(rng: &mut impl Rng) -> String {
    let leaf = |rng: &mut dyn rand::RngCore| {
        if rng.random_bool(0.5) {
            format!("{}", rng.random_range(0..20))
        } else {
            FORMULA_NAMES.choose(rng).unwrap().to_string()
        }
    };
    let mut out = leaf(rng);
    for _ in 0..rng.random_range(0..4) {
        let term = leaf(rng);
        out = match rng.random_range(0..5) {
            0 => format!("{out} + {term}"),
            1 => format!("{out} - {term}"),
            2 => format!("({out}) * {term}"),
            3 => format!("-({out}) / 2"),
            _ => format!("{term} * ({out})"),
        };
    }
    out
}

/// Mostly small constants, sometimes a random expression.
fn field(rng: &mut impl Rng, constant: impl FnOnce(&mut dyn rand::RngCore) -> f64) -> String {
    if rng.random_bool(0.5) {
        bounded_formula(rng)
    } else {
        let v = constant(rng);
        format!("{}", (v * 100.0).round() / 100.0)
    }
}

fn keyframe(rng: &mut impl Rng, time: f64) -> Value {
    let transition = |rng: &mut dyn rand::RngCore| if rng.random_bool(0.5) { "linear" } else { "step" };
    json!({
        "time": time,
        "coords": {
            "x": rng.random_range(-100.0..100.0),
            "y": rng.random_range(-100.0..100.0),
            "z": rng.random_range(100.0..300.0),
        },
        "coords_transition": transition(rng),
        "brush": {
            "kind": if rng.random_bool(0.5) { "circle" } else { "line" },
            "size": field(rng, |r| r.random_range(0.0..20.0)),
            "rotation": field(rng, |r| r.random_range(-180.0..180.0)),
            "am_freq": if rng.random_bool(0.5) { "0".to_owned() } else { field(rng, |r| r.random_range(0.0..300.0)) },
            "stm_freq": field(rng, |r| r.random_range(0.0..200.0)),
        },
        "brush_transition": transition(rng),
        "intensity": field(rng, |r| r.random_range(0.0..1.0)),
        "intensity_transition": transition(rng),
        "jumps": [],
    })
}

/// A valid tacton document with at most `max_keyframes` keyframes.
pub fn document(rng: &mut impl Rng, max_keyframes: usize) -> Value {
    let n = rng.random_range(1..=max_keyframes.max(1));
    let mut time = if rng.random_bool(0.8) { 0.0 } else { rng.random_range(0.0..0.1) };
    let mut keyframes = Vec::with_capacity(n);
    for _ in 0..n {
        keyframes.push(keyframe(rng, time));
        time += rng.random_range(0.01..0.3);
    }
    let times: Vec<f64> = keyframes.iter().map(|k| k["time"].as_f64().unwrap()).collect();
    let end = *times.last().unwrap();
    for kf in keyframes.iter_mut() {
        let mut jumps = Vec::new();
        for _ in 0..rng.random_range(0..3) {
            if !rng.random_bool(0.4) {
                continue;
            }
            let target = if rng.random_bool(0.5) { *times.choose(rng).unwrap() } else { rng.random_range(0.0..=end) };
            jumps.push(json!({
                "param": JUMP_PARAMS.choose(rng).unwrap(),
                "op": COMPARE.choose(rng).unwrap(),
                "threshold": rng.random_range(-1.0..1.0),
                "target": target,
            }));
        }
        kf["jumps"] = Value::Array(jumps);
    }

    let speed = match rng.random_range(0..6) {
        0 => "1".to_owned(),
        1 => "-1".to_owned(),
        2 => "0.5 + speed_k".to_owned(),
        3 => "speed_k * 2".to_owned(),
        4 => format!("{}", rng.random_range(-2.0..3.0)),
        _ => bounded_formula(rng),
    };
    let post = json!({
        "playback_speed": speed,
        "intensity_factor": field(rng, |r| r.random_range(0.0..1.0)),
        "translate": {
            "x": field(rng, |r| r.random_range(-20.0..20.0)),
            "y": field(rng, |r| r.random_range(-20.0..20.0)),
            "z": field(rng, |r| r.random_range(-20.0..20.0)),
        },
        "rotation_z": field(rng, |r| r.random_range(-180.0..180.0)),
        "scale": field(rng, |r| r.random_range(0.5..2.0)),
    });
    let mut params = Vec::new();
    for name in ENV_NAMES {
        if rng.random_bool(0.5) {
            params.push(json!({"name": name, "default": rng.random_range(-1.0..1.0)}));
        }
    }
    json!({
        "format_version": 1,
        "name": format!("random-{}", rng.random_range(0..u32::MAX)),
        "params": params,
        "keyframes": keyframes,
        "post": post,
    })
}

pub fn tacton(rng: &mut impl Rng, max_keyframes: usize) -> Tacton {
    let doc = document(rng, max_keyframes);
    parse_tacton(&doc.to_string()).unwrap_or_else(|e| panic!("generated tacton rejected: {e}\n{doc}"))
}

/// Remove fields whose value equals their documented default, at random,
/// so parsing must fill them back in.
pub fn strip_defaults(rng: &mut impl Rng, doc: &mut Value) {
    fn strip(rng: &mut impl Rng, obj: &mut Map<String, Value>, defaults: &[(&str, Value)]) {
        for (key, default) in defaults {
            if obj.get(*key) == Some(default) && rng.random_bool(0.5) {
                obj.remove(*key);
            }
        }
    }
    let linear = || json!("linear");
    if let Some(kfs) = doc["keyframes"].as_array_mut() {
        for kf in kfs {
            let obj = kf.as_object_mut().unwrap();
            strip(
                rng,
                obj,
                &[
                    ("coords_transition", linear()),
                    ("brush_transition", linear()),
                    ("intensity_transition", linear()),
                    ("intensity", json!("1")),
                    ("jumps", json!([])),
                ],
            );
            strip(
                rng,
                obj["brush"].as_object_mut().unwrap(),
                &[("rotation", json!("0")), ("am_freq", json!("0")), ("stm_freq", json!("0"))],
            );
        }
    }
    let root = doc.as_object_mut().unwrap();
    strip(rng, root, &[("params", json!([])), ("name", json!(""))]);
}

/// One random parameter update, or `None` most of the time.
pub fn param_step(rng: &mut impl Rng) -> Option<(String, f64)> {
    rng.random_bool(0.3).then(|| {
        let name = ENV_NAMES.choose(rng).unwrap().to_string();
        let value = (rng.random_range(-1.5..1.5_f64) * 8.0).round() / 8.0;
        (name, value)
    })
}

pub fn env(rng: &mut impl Rng) -> Env {
    let mut env = Env::new();
    for name in ENV_NAMES {
        if rng.random_bool(0.7) {
            env.insert(name.to_owned(), rng.random_range(-2.0..2.0));
        }
    }
    env
}

/// A random rigid transform with a small z offset.
pub fn host(rng: &mut impl Rng) -> Mat4 {
    if rng.random_bool(0.3) {
        return crate::reference::IDENTITY;
    }
    mat_mul(
        &translation(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0)),
        &rotation_z_deg(rng.random_range(-180.0..180.0)),
    )
}
