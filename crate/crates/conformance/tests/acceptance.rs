//! Acceptance gate: one line per criterion, nonzero exit if any fails.

use std::alloc::{GlobalAlloc, Layout, System};
use std::cell::Cell;
use std::panic::AssertUnwindSafe;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use adaptics_bridge::{start, BridgeConfig, ServerMessage};
use adaptics_conformance::{formula as reference_formula, generate, harness};
use adaptics_core::bench::{run_bench, BenchConfig};
use adaptics_core::device::{DeviceConfig, MockDevice};
use adaptics_core::evaluator::FocalPointSample;
use adaptics_core::formula::{parse_formula, Formula, ParamEnv};
use adaptics_core::runtime::{engine, telemetry_channel, BatchSource, Command, Renderer, DEFAULT_QUEUE_DEPTH};
use adaptics_core::{parse_tacton, serialize_tacton, HostTransform, PlaybackState, Program, Tacton};
use futures::{SinkExt, StreamExt};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use tokio_tungstenite::tungstenite::Message;

struct CountingAlloc;

static ALLOCATIONS: AtomicU64 = AtomicU64::new(0);
thread_local! {
    static COUNTING: Cell<bool> = const { Cell::new(false) };
}

unsafe impl GlobalAlloc for CountingAlloc {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        if COUNTING.with(Cell::get) {
            ALLOCATIONS.fetch_add(1, Ordering::Relaxed);
        }
        System.alloc(layout)
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        System.dealloc(ptr, layout)
    }

    unsafe fn realloc(&self, ptr: *mut u8, layout: Layout, new_size: usize) -> *mut u8 {
        if COUNTING.with(Cell::get) {
            ALLOCATIONS.fetch_add(1, Ordering::Relaxed);
        }
        System.realloc(ptr, layout, new_size)
    }
}

#[global_allocator]
static GLOBAL: CountingAlloc = CountingAlloc;

const RATE: f64 = 40_000.0;
const DT: f64 = 1.0 / RATE;
const BATCH: usize = 40;

type Outcome = Result<String, String>;
type Criterion = (&'static str, Duration, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn corpus(name: &str) -> Tacton {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus").join(format!("{name}.adaptics"));
    parse_tacton(&std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))).unwrap()
}

fn env_of(pairs: &[(&str, f64)]) -> ParamEnv {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn playing(tacton: &Tacton, params: &[(&str, f64)]) -> (adaptics_core::runtime::Controller, Renderer) {
    let (c, mut r) = engine(DEFAULT_QUEUE_DEPTH);
    let values = params.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    c.submit(Command::SetParams(values)).unwrap();
    c.submit(Command::Play(tacton.clone())).unwrap();
    r.drain_commands();
    (c, r)
}

fn oracle_equivalence() -> Outcome {
    const CASES: u64 = 1000;
    const TOL: f64 = 1e-9;
    let mut worst = harness::CaseReport::default();
    let (mut samples, mut with_jumps, mut failures) = (0, 0, Vec::new());
    for seed in 0..CASES {
        let r = harness::oracle_case(seed, 60);
        samples += r.samples;
        with_jumps += (r.jumps_taken > 0) as u32;
        worst.max_position_error = worst.max_position_error.max(r.max_position_error);
        worst.max_amplitude_error = worst.max_amplitude_error.max(r.max_amplitude_error);
        worst.max_pattern_time_error = worst.max_pattern_time_error.max(r.max_pattern_time_error);
        if !r.within(TOL) {
            failures.push(seed);
        }
    }
    check(
        failures.is_empty(),
        format!(
            "{CASES} tactons, {samples} samples, {with_jumps} with jumps; max |dpos| {:.1e}, |damp| {:.1e}, |dpt| {:.1e}; failing seeds {:?}",
            worst.max_position_error, worst.max_amplitude_error, worst.max_pattern_time_error, &failures[..failures.len().min(5)]
        ),
    )
}

fn button_semantics() -> Outcome {
    let (c, mut r) = playing(&corpus("Button"), &[("proximity", 0.5)]);
    let mut out = [FocalPointSample::default(); BATCH];
    let mut device_time = 0.0;
    let mut max_pt = f64::NEG_INFINITY;
    for _ in 0..10_000 / BATCH {
        r.next_batch(device_time, DT, &mut out);
        device_time += BATCH as f64 * DT;
        max_pt = out.iter().map(|s| s.pattern_time).fold(max_pt, f64::max);
    }
    let looped = max_pt <= 0.3 + DT;

    c.submit(Command::SetParams(vec![("proximity".into(), 1.0), ("activation".into(), 1.0)])).unwrap();
    let released_at = device_time;
    let mut passed_at = None;
    while device_time - released_at < 0.5 && passed_at.is_none() {
        r.next_batch(device_time, DT, &mut out);
        if let Some(i) = out.iter().position(|s| s.pattern_time > 0.4) {
            passed_at = Some(device_time + i as f64 * DT - released_at);
        }
        device_time += BATCH as f64 * DT;
    }
    check(
        looped && passed_at.is_some(),
        format!("proximity=0.5: max pattern_time {max_pt:.6} over 10000 samples (bound {:.6}); released: passes 0.4 after {passed_at:?} s", 0.3 + DT),
    )
}

fn formula_goldens() -> Outcome {
    let at = |src: &str, pairs: &[(&str, f64)]| parse_formula(src).unwrap().eval(&env_of(pairs));
    let radius0 = at("activation * 15 + 15", &[("activation", 0.0)]);
    let radius1 = at("activation * 15 + 15", &[("activation", 1.0)]);
    let damage = at("taking_damage / health", &[("taking_damage", 5.0), ("health", 0.0)]);
    let goldens = radius0.value == 15.0 && radius1.value == 30.0 && damage.value == 0.0 && damage.sanitized;

    let mut rng = ChaCha8Rng::seed_from_u64(0xF0);
    let mut mismatches = 0;
    let mut sanitized = 0;
    for _ in 0..10_000 {
        let src = generate::formula(&mut rng, 3);
        let env = generate::env(&mut rng);
        let engine_env: ParamEnv = env.iter().map(|(k, v)| (k.clone(), *v)).collect();
        let got = parse_formula(&src).map(|e| e.eval(&engine_env));
        let want = reference_formula::eval(&src, &env);
        match got {
            Ok(got) if got.value.to_bits() == want.0.to_bits() && got.sanitized == want.1 => sanitized += want.1 as u32,
            _ => mismatches += 1,
        }
    }
    check(
        goldens && mismatches == 0,
        format!(
            "15 at 0 -> {}, 30 at 1 -> {}, damage/0 -> {} (warning {}); 10000 random expressions, {mismatches} bit mismatches ({sanitized} sanitized)",
            radius0.value, radius1.value, damage.value, damage.sanitized
        ),
    )
}

fn device_time_relativity() -> Outcome {
    let tacton = corpus("RainBenchF");
    let program = Program::compile(&tacton).unwrap();
    let slots = program.bind(&env_of(&[("drop", 1.0), ("wind", 0.3), ("gust", 0.1)]));
    let host = HostTransform::IDENTITY;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut single, mut whole) = (PlaybackState::default(), PlaybackState::default());
    let mut identical = true;
    let mut compared = 0;
    for _ in 0..2000 {
        let dt = DT * rand::Rng::random_range(&mut rng, 0.9..1.1);
        let mut a = [FocalPointSample::default(); BATCH];
        for s in a.iter_mut() {
            program.eval_batch(&mut single, &slots, &host, dt, std::slice::from_mut(s));
        }
        let mut b = [FocalPointSample::default(); BATCH];
        program.eval_batch(&mut whole, &slots, &host, dt, &mut b);
        identical &= a == b;
        compared += BATCH;
    }

    let speed = 0.75;
    let t = parse_tacton(
        &json!({"format_version": 1, "post": {"playback_speed": speed.to_string()}, "keyframes": [
            {"time": 0, "coords": {"x": 0, "y": 0}, "brush": {"kind": "circle", "size": "5", "stm_freq": "100"}},
            {"time": 1000, "coords": {"x": 10, "y": 0}, "brush": {"kind": "circle", "size": "5", "stm_freq": "100"}}]})
        .to_string(),
    )
    .unwrap();
    let (_c, mut r) = playing(&t, &[]);
    let mut device = MockDevice::new(DeviceConfig::new(RATE, BATCH).with_jitter(0.1, 2024)).unwrap();
    device.run(&mut r, 1.0);
    // Neumaier-compensated sum of speed * dt over every emitted sample
    let (mut sum, mut carry) = (0.0f64, 0.0f64);
    for batch in device.batches() {
        for _ in 0..BATCH {
            let term = speed * batch.dt;
            let next = sum + term;
            carry += if sum.abs() >= term.abs() { (sum - next) + term } else { (term - next) + sum };
            sum = next;
        }
    }
    let expected = sum + carry;
    let err = (r.state().pattern_time - expected).abs();
    let spread = device.batches().iter().map(|b| b.dt / DT - 1.0).fold(0.0f64, |m, d| m.max(d.abs()));
    check(
        identical && err <= 1e-12,
        format!("40x1 vs 1x40 over {compared} samples bit-identical: {identical}; jittered (max {:.1}% dt) pattern_time error {err:.1e}", spread * 100.0),
    )
}

fn negative_and_zero_speed() -> Outcome {
    let doc = |speed: &str, stm: &str| {
        parse_tacton(
            &json!({"format_version": 1, "post": {"playback_speed": speed}, "keyframes": [
                {"time": 0, "coords": {"x": -50, "y": 10}, "brush": {"kind": "circle", "size": "3", "stm_freq": stm}},
                {"time": 1, "coords": {"x": 50, "y": 10}, "brush": {"kind": "circle", "size": "3", "stm_freq": stm}}]})
            .to_string(),
        )
        .unwrap()
    };
    let run = |t: &Tacton, start: f64, n: usize| {
        let program = Program::compile(t).unwrap();
        let slots = program.bind(&ParamEnv::new());
        let mut state = PlaybackState::at(start);
        let mut out = vec![FocalPointSample::default(); n];
        program.eval_batch(&mut state, &slots, &HostTransform::IDENTITY, DT, &mut out);
        out
    };
    const N: usize = 10_000;
    let forward = run(&doc("1", "0"), 0.0, N);
    let backward = run(&doc("-1", "0"), 1.0, N);
    let pt_err =
        forward.iter().zip(&backward).map(|(f, b)| (b.pattern_time - (1.0 - f.pattern_time)).abs()).fold(0.0, f64::max);
    // path x(pt) = -50 + 100 pt mirrors about 0; a circle at STM phase 0 sits +size off the path
    let x_err =
        forward.iter().zip(&backward).map(|(f, b)| (b.position.x + f.position.x - 6.0).abs()).fold(0.0, f64::max);

    let frozen = run(&doc("0", "150"), 0.3, N);
    let program = Program::compile(&doc("0", "150")).unwrap();
    let slots = program.bind(&ParamEnv::new());
    let reference = program.interpolate(0.3, &slots, &mut 0);
    let frozen_ok = frozen.iter().all(|s| {
        s.pattern_time.to_bits() == 0.3f64.to_bits() && program.interpolate(s.pattern_time, &slots, &mut 0) == reference
    });
    let still = run(&doc("0", "0"), 0.3, N);
    let still_ok = still.windows(2).all(|w| w[0] == w[1]);
    check(
        pt_err <= 1e-12 && x_err <= 1e-10 && frozen_ok && still_ok,
        format!("speed -1 vs 1 over {N} samples: pattern_time mirror error {pt_err:.1e}, x mirror error {x_err:.1e}; speed 0 frozen: {frozen_ok}, static output identical: {still_ok}"),
    )
}

fn latency() -> Outcome {
    let t = parse_tacton(
        r#"{"format_version":1,"keyframes":[
            {"time":0,"coords":{"x":0,"y":0},"brush":{"kind":"circle","size":"5","stm_freq":"100"},"intensity":"gate"},
            {"time":100,"coords":{"x":0,"y":0},"brush":{"kind":"circle","size":"5","stm_freq":"100"},"intensity":"gate"}]}"#,
    )
    .unwrap();
    let (c, mut r) = playing(&t, &[]);
    let mut out = [FocalPointSample::default(); BATCH];
    let mut late = 0;
    for k in 0..500 {
        let gate = (k % 2) as f64;
        c.submit(Command::SetParam("gate".into(), gate)).unwrap();
        r.next_batch(k as f64 * BATCH as f64 * DT, DT, &mut out);
        late += out.iter().filter(|s| s.amplitude != gate).count();
    }
    check(
        late == 0,
        format!(
            "500 gate toggles, {late} samples not reflecting the new value; bound 1 batch = {} ms",
            BATCH as f64 * DT * 1e3
        ),
    )
}

fn throughput() -> Outcome {
    let config = BenchConfig { batches: 1000, batch_size: BATCH, repeats: 7, device_rate: RATE };
    let params = env_of(&[("drop", 1.0), ("wind", 0.2), ("gust", 0.1), ("fade", 0.3), ("pulse", 0.5)]);
    let mut lines = Vec::new();
    let mut ok = true;
    for name in ["Baseline", "RainBench", "RainBench2x", "RainBenchF"] {
        let report = run_bench(&corpus(name), &params, &config).map_err(|e| e.to_string())?;
        let floor = if name == "RainBench" { 200.0 } else { 40.0 };
        ok &= report.median_khz >= floor;
        lines.push(format!("{name} {:.0} kHz (>= {floor})", report.median_khz));
    }
    check(ok, format!("median over {} repeats: {}", config.repeats, lines.join(", ")))
}

fn no_allocation() -> Outcome {
    let mut counts = Vec::new();
    for (name, params) in [
        ("RainBenchF", vec![("drop", 1.0), ("wind", 0.5)]),
        ("Button", vec![("proximity", 1.0), ("activation", 0.0)]),
        ("Heartbeat", vec![("stress", 0.5)]),
    ] {
        let (_c, mut r) = playing(&corpus(name), &params);
        let (tap, _rx) = telemetry_channel(11, 128);
        r.attach_telemetry(tap);
        let mut out = [FocalPointSample::default(); BATCH];
        let mut device_time = 0.0;
        for _ in 0..100 {
            r.next_batch(device_time, DT, &mut out);
            device_time += BATCH as f64 * DT;
        }
        let before = ALLOCATIONS.load(Ordering::Relaxed);
        COUNTING.with(|c| c.set(true));
        for _ in 0..1000 {
            r.next_batch(device_time, DT, &mut out);
            device_time += BATCH as f64 * DT;
        }
        COUNTING.with(|c| c.set(false));
        counts.push((name, ALLOCATIONS.load(Ordering::Relaxed) - before));
    }
    check(
        counts.iter().all(|(_, n)| *n == 0),
        format!("allocations over 1000 next_batch calls after warm-up: {counts:?}"),
    )
}

fn protocol_conformance() -> Outcome {
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build().unwrap();
    runtime.block_on(async {
        let bridge = start(BridgeConfig { port: 0, heartbeat: Duration::from_secs(3600), ..BridgeConfig::default() })
            .await
            .map_err(|e| e.to_string())?;
        let (mut ws, _) = tokio_tungstenite::connect_async(format!("ws://{}/ws", bridge.addr)).await.map_err(|e| e.to_string())?;

        let button = serde_json::to_value(corpus("Button")).unwrap();
        let status = |playing: bool| ServerMessage::Status { playing, finished: false, warnings: 0 };
        let error = |code: &str| format!("error:{code}");
        let mut script: Vec<(String, Vec<String>)> = vec![
            (json!({"type": "hello", "protocol_version": 1}).to_string(), vec![ServerMessage::Hello { protocol_version: 1 }.to_json(), status(false).to_json()]),
            (json!({"type": "update_pattern", "tacton": button}).to_string(), vec![status(false).to_json()]),
            ("{not json".to_owned(), vec![error("malformed")]),
            (json!({"type": "play"}).to_string(), vec![status(true).to_json()]),
        ];
        for step in 0..=4 {
            let v = step as f64 / 4.0;
            script.push((json!({"type": "set_params", "params": {"proximity": v, "activation": v}}).to_string(), vec![status(true).to_json()]));
        }
        script.push((json!({"type": "rewind"}).to_string(), vec![error("unknown-type")]));
        script.push((json!({"type": "stop"}).to_string(), vec![status(false).to_json()]));

        let mut updates = 0;
        let mut oversized = 0;
        let mut mismatches = Vec::new();
        for (i, (request, expected)) in script.iter().enumerate() {
            ws.send(Message::Text(request.as_str().into())).await.map_err(|e| e.to_string())?;
            let mut got = Vec::new();
            while got.len() < expected.len() {
                let frame = tokio::time::timeout(Duration::from_secs(5), ws.next()).await.map_err(|_| format!("step {i}: no reply"))?;
                let Some(Ok(Message::Text(text))) = frame else { return Err(format!("step {i}: connection lost")) };
                match serde_json::from_str::<ServerMessage>(text.as_str()).map_err(|e| e.to_string())? {
                    ServerMessage::PlaybackUpdate { samples, .. } => {
                        updates += 1;
                        oversized += (samples.len() > 1024) as u32;
                    }
                    ServerMessage::Error { code, .. } => got.push(error(&code)),
                    other => got.push(other.to_json()),
                }
            }
            if &got != expected {
                mismatches.push(format!("step {i}: got {got:?}, expected {expected:?}"));
            }
            if i == 3 {
                // let telemetry flow while playing
                let deadline = Instant::now() + Duration::from_secs(2);
                while updates < 3 && Instant::now() < deadline {
                    if let Ok(Some(Ok(Message::Text(text)))) = tokio::time::timeout(Duration::from_millis(200), ws.next()).await {
                        if let Ok(ServerMessage::PlaybackUpdate { samples, .. }) = serde_json::from_str(text.as_str()) {
                            updates += 1;
                            oversized += (samples.len() > 1024) as u32;
                        }
                    }
                }
            }
        }
        check(
            mismatches.is_empty() && updates >= 3 && oversized == 0,
            format!("{} scripted steps, {} mismatches {:?}; {updates} playback_update messages, {oversized} over 1024 samples", script.len(), mismatches.len(), mismatches.first()),
        )
    })
}

fn serialization_fixed_point() -> Outcome {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus");
    let mut library = 0;
    let mut failures = Vec::new();
    let mut fixed = |label: String, text: &str| match parse_tacton(text) {
        Ok(first) => {
            let once = serialize_tacton(&first);
            let second = parse_tacton(&once).expect("serialized documents parse");
            let formulas_kept = first
                .formulas()
                .iter()
                .zip(second.formulas().iter())
                .all(|((_, a), (_, b)): (&(String, &Formula), _)| a.source() == b.source());
            if second != first || serialize_tacton(&second) != once || !formulas_kept {
                failures.push(label);
            }
        }
        Err(e) => failures.push(format!("{label}: {e}")),
    };
    for entry in std::fs::read_dir(&dir).map_err(|e| e.to_string())? {
        let path = entry.map_err(|e| e.to_string())?.path();
        if path.extension().is_some_and(|e| e == "adaptics") {
            library += 1;
            fixed(path.display().to_string(), &std::fs::read_to_string(&path).map_err(|e| e.to_string())?);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5E);
    for i in 0..1000 {
        let mut doc = generate::document(&mut rng, 16);
        generate::strip_defaults(&mut rng, &mut doc);
        let text = if i % 2 == 0 { doc.to_string() } else { serde_json::to_string_pretty(&doc).unwrap() };
        fixed(format!("fuzzed #{i}"), &text);
    }
    check(
        failures.is_empty(),
        format!("{library} library documents + 1000 fuzzed; failures {:?}", &failures[..failures.len().min(3)]),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("oracle-equivalence", Duration::from_secs(120), oracle_equivalence),
        ("button-jump-semantics", Duration::from_secs(1), button_semantics),
        ("formula-goldens", Duration::from_secs(10), formula_goldens),
        ("device-time-relativity", Duration::from_secs(5), device_time_relativity),
        ("negative-zero-speed", Duration::from_secs(1), negative_and_zero_speed),
        ("latency", Duration::from_secs(1), latency),
        ("throughput", Duration::from_secs(30), throughput),
        ("no-steady-state-allocation", Duration::from_secs(5), no_allocation),
        ("protocol-conformance", Duration::from_secs(5), protocol_conformance),
        ("serialization-fixed-point", Duration::from_secs(10), serialization_fixed_point),
    ];
    let mut failed = 0;
    for (name, limit, run) in criteria {
        let started = Instant::now();
        let outcome = std::panic::catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default())
        });
        let elapsed = started.elapsed();
        let (verdict, detail) = match outcome {
            Ok(d) if elapsed <= limit => ("PASS", d),
            Ok(d) => ("FAIL", format!("{d}; over time limit")),
            Err(d) => ("FAIL", d),
        };
        failed += (verdict == "FAIL") as u32;
        println!("{verdict} {name:<28} [{:.2}s / {}s] {detail}", elapsed.as_secs_f64(), limit.as_secs());
    }
    println!("acceptance: {} passed, {failed} failed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
