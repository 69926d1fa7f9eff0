//! `adaptics` subcommands. Failures print one line, `error: <code>: <message>`.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use adaptics_bridge::{BridgeConfig, BridgeError, DEFAULT_PORT};
use adaptics_core::bench::{run_bench, BenchConfig, BenchError, DEFAULT_DEVICE_RATE};
use adaptics_core::device::{spawn_paced, DeviceConfig, DeviceConfigError};
use adaptics_core::evaluator::{apply_post, brush_offset, BrushState, PostValues};
use adaptics_core::formula::NonFiniteParam;
use adaptics_core::runtime::{engine, Command, StatusSnapshot, SubmitError, DEFAULT_QUEUE_DEPTH};
use adaptics_core::{parse_tacton, HostTransform, ParamEnv, Program, Tacton, TactonError, Vec3};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Parser)]
#[command(name = "adaptics", version, about = "Adaptive mid-air tacton engine")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Run the engine on a mock device behind the WebSocket bridge.
    Serve {
        #[arg(long, default_value_t = DEFAULT_PORT)]
        port: u16,
        #[arg(long, default_value_t = 40_000.0)]
        rate: f64,
        #[arg(long, default_value_t = 40)]
        batch: usize,
    },
    /// Play a tacton on a paced mock device and print the final status.
    Play {
        file: PathBuf,
        #[command(flatten)]
        params: ParamArgs,
        /// Seconds to play; without it, play until the tacton finishes.
        #[arg(long, allow_negative_numbers = true)]
        duration: Option<f64>,
        #[arg(long, default_value_t = 40_000.0)]
        rate: f64,
        #[arg(long, default_value_t = 40)]
        batch: usize,
    },
    /// Print brush and post-processed output at pattern times, as JSON.
    Eval {
        file: PathBuf,
        /// Pattern times in seconds.
        #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
        at: Vec<f64>,
        #[command(flatten)]
        params: ParamArgs,
    },
    /// Evaluate batches back to back and report focal-point rates.
    Bench {
        file: PathBuf,
        #[arg(long, default_value_t = 1000)]
        batches: usize,
        #[arg(long, default_value_t = 40)]
        batch_size: usize,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        /// Print the report as JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug, Args)]
pub struct ParamArgs {
    /// External parameter, `name=value`; repeatable.
    #[arg(long = "param", value_name = "NAME=VALUE")]
    pub param: Vec<String>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Tacton { path: String, source: TactonError },
    #[error("expected NAME=VALUE, got {0:?}")]
    BadParam(String),
    #[error(transparent)]
    NonFinite(#[from] NonFiniteParam),
    #[error("duration must be finite and non-negative, got {0}")]
    BadDuration(f64),
    #[error(transparent)]
    Device(#[from] DeviceConfigError),
    #[error(transparent)]
    Submit(#[from] SubmitError),
    #[error(transparent)]
    Bench(#[from] BenchError),
    #[error(transparent)]
    Bridge(#[from] BridgeError),
    #[error("cannot write output: {0}")]
    Output(std::io::Error),
}

impl CliError {
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Io { .. } => "io",
            CliError::Tacton { .. } => "invalid-tacton",
            CliError::BadParam(_) => "bad-param",
            CliError::NonFinite(_) => "non-finite",
            CliError::BadDuration(_) => "bad-duration",
            CliError::Device(e) => e.code(),
            CliError::Submit(e) => e.code(),
            CliError::Bench(BenchError::Empty) => "empty-benchmark",
            CliError::Bench(BenchError::Submit(e)) => e.code(),
            CliError::Bridge(BridgeError::Device(e)) => e.code(),
            CliError::Bridge(BridgeError::Bind { .. }) => "bind",
            CliError::Output(_) => "io",
        }
    }
}

pub fn run(cli: Cli, out: &mut impl Write) -> Result<(), CliError> {
    match cli.command {
        Cmd::Serve { port, rate, batch } => serve(BridgeConfig { port, rate, batch, ..BridgeConfig::default() }),
        Cmd::Play { file, params, duration, rate, batch } => {
            let status = play(&load(&file)?, &parse_params(&params.param)?, duration, DeviceConfig::new(rate, batch))?;
            emit(out, &serde_json::to_string(&status).expect("status serializes"))
        }
        Cmd::Eval { file, at, params } => {
            let report = eval(&load(&file)?, &parse_params(&params.param)?, &at);
            emit(out, &serde_json::to_string_pretty(&report).expect("report serializes"))
        }
        Cmd::Bench { file, batches, batch_size, repeats, json } => {
            let tacton = load(&file)?;
            let config = BenchConfig { batches, batch_size, repeats, device_rate: DEFAULT_DEVICE_RATE };
            let report = run_bench(&tacton, &ParamEnv::new(), &config)?;
            if json {
                emit(out, &serde_json::to_string(&report).expect("report serializes"))
            } else {
                let table = format!(
                    "{:<16} {:>4} {:>8} {:>6} {:>12} {:>12} {:>12}\n{:<16} {:>4} {:>8} {:>6} {:>12.1} {:>12.1} {:>12.1}\nchecksum {:016x}",
                    "tacton", "kfs", "batches", "size", "min kHz", "median kHz", "max kHz",
                    report.name, report.keyframes, report.batches, report.batch_size, report.min_khz, report.median_khz, report.max_khz,
                    report.checksum
                );
                emit(out, &table)
            }
        }
    }
}

fn emit(out: &mut impl Write, text: &str) -> Result<(), CliError> {
    writeln!(out, "{text}").map_err(CliError::Output)
}

pub fn load(path: &Path) -> Result<Tacton, CliError> {
    let text =
        std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.display().to_string(), source })?;
    parse_tacton(&text).map_err(|source| CliError::Tacton { path: path.display().to_string(), source })
}

/// Splits at the last `=`; surrounding backticks on the name are dropped so
/// formula spelling works too.
pub fn parse_params(pairs: &[String]) -> Result<ParamEnv, CliError> {
    let mut env = ParamEnv::new();
    for pair in pairs {
        let (name, value) = pair.rsplit_once('=').ok_or_else(|| CliError::BadParam(pair.clone()))?;
        let value: f64 = value.trim().parse().map_err(|_| CliError::BadParam(pair.clone()))?;
        let name = name.trim();
        let name = name.strip_prefix('`').and_then(|n| n.strip_suffix('`')).unwrap_or(name);
        if name.is_empty() {
            return Err(CliError::BadParam(pair.clone()));
        }
        env.set(name, value)?;
    }
    Ok(env)
}

fn serve(config: BridgeConfig) -> Result<(), CliError> {
    let runtime = tokio::runtime::Runtime::new().map_err(CliError::Output)?;
    runtime.block_on(async {
        let bridge = adaptics_bridge::start(config).await?;
        eprintln!("listening on ws://{}/ws", bridge.addr);
        bridge.wait().await;
        Ok(())
    })
}

/// Plays until `duration` seconds of wall time pass, or until the tacton
/// finishes when no duration is given.
pub fn play(
    tacton: &Tacton,
    params: &ParamEnv,
    duration: Option<f64>,
    device: DeviceConfig,
) -> Result<StatusSnapshot, CliError> {
    if let Some(d) = duration {
        if !d.is_finite() || d < 0.0 {
            return Err(CliError::BadDuration(d));
        }
    }
    let program = Program::compile(tacton).map_err(|source| CliError::Tacton { path: tacton.name.clone(), source })?;
    let (controller, renderer) = engine(DEFAULT_QUEUE_DEPTH);
    controller.submit(Command::SetParams(params.iter().map(|(k, v)| (k.to_owned(), v)).collect()))?;
    controller.submit(Command::Play(tacton.clone()))?;
    let paced = spawn_paced(renderer, device)?;
    let started = Instant::now();
    let mut last_report = started;
    loop {
        std::thread::sleep(Duration::from_millis(5));
        let status = controller.status();
        let elapsed = started.elapsed().as_secs_f64();
        if last_report.elapsed() >= Duration::from_secs(1) {
            last_report = Instant::now();
            log::info!(
                "pattern time {:.3} s of {:.3} s, {} warnings",
                status.pattern_time,
                program.end_time(),
                status.warnings
            );
        }
        let done = match duration {
            Some(d) => elapsed >= d,
            None => status.finished,
        };
        if done {
            paced.stop();
            return Ok(controller.status());
        }
    }
}

#[derive(Debug, Serialize)]
pub struct EvalReport {
    pub name: String,
    pub end_time: f64,
    pub params: Vec<(String, f64)>,
    pub post: PostValues,
    pub points: Vec<EvalPoint>,
}

/// One pattern time. `position` and `amplitude` are taken at STM phase 0 with
/// the AM envelope at its peak; the host transform is the identity.
#[derive(Debug, Serialize)]
pub struct EvalPoint {
    pub at: f64,
    pub finished: bool,
    pub segment: (usize, Option<usize>),
    pub brush: Option<BrushState>,
    pub position: Option<Vec3>,
    pub amplitude: f64,
    pub formula_warnings: u64,
}

/// Pure evaluator queries; no runtime, device or jump resolution involved.
pub fn eval(tacton: &Tacton, params: &ParamEnv, times: &[f64]) -> EvalReport {
    let program = Program::compile(tacton).expect("parsed tactons compile");
    let slots = program.bind(params);
    let mut post_warnings = 0;
    let post = program.eval_post(&slots, &mut post_warnings);
    let points = times
        .iter()
        .map(|&at| {
            let mut warnings = post_warnings;
            let segment = program.segment_at(at);
            if !program.is_static() && at > program.end_time() {
                return EvalPoint {
                    at,
                    finished: true,
                    segment,
                    brush: None,
                    position: None,
                    amplitude: 0.0,
                    formula_warnings: warnings,
                };
            }
            let brush = program.interpolate(at, &slots, &mut warnings);
            let (dx, dy) = brush_offset(&brush, 0.0);
            let local = Vec3::new(brush.center.x + dx, brush.center.y + dy, brush.center.z);
            let (position, amplitude) = apply_post(local, brush.intensity, &post, &HostTransform::IDENTITY);
            EvalPoint {
                at,
                finished: false,
                segment,
                brush: Some(brush),
                position: Some(position),
                amplitude,
                formula_warnings: warnings,
            }
        })
        .collect();
    EvalReport {
        name: tacton.name.clone(),
        end_time: program.end_time(),
        params: {
            let mut sorted: Vec<_> = params.iter().map(|(k, v)| (k.to_owned(), v)).collect();
            sorted.sort_by(|a, b| a.0.cmp(&b.0));
            sorted
        },
        post,
        points,
    }
}
