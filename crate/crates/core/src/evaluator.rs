//! Turns a tacton plus external parameters into focal-point samples.
//!
//! Pattern time is integrated from device time scaled by the playback speed.
//! For every sample the evaluator advances pattern time, resolves conditional
//! jumps crossed on the way, interpolates the keyframes around the new time,
//! sweeps the focal point along the brush and applies the AM envelope,
//! post-processing and host transform.
//!
//! Interpolation into keyframe `k` uses `k`'s transition settings. Formula
//! fields are evaluated at both segment endpoints with the current parameters
//! and then interpolated. Brush kind always steps. STM and AM phases advance
//! in device time, so modulation frequencies do not follow playback speed.
//! Post-processing formulas (including playback speed) are evaluated once per
//! batch.

use std::collections::{BTreeSet, HashMap};
use std::f64::consts::TAU;

use serde::Serialize;

use crate::formula::{BinOp, Evaluated, Expr, Formula, ParamEnv};
use crate::tacton::{validate_tacton, BrushKind, CompareOp, Tacton, TactonError, Transition};
use crate::transform::{HostTransform, Vec3};

/// Maximum number of jumps followed while resolving a single sample.
pub const JUMP_BUDGET: u32 = 16;
pub const MAX_MODULATION_HZ: f64 = 1000.0;

/// Parameter names used by a compiled tacton, each bound to a slot index.
#[derive(Debug, Clone, Default)]
pub struct ParamTable {
    names: Vec<String>,
    index: HashMap<String, u32>,
}

impl ParamTable {
    fn from_names(names: BTreeSet<String>) -> Self {
        let names: Vec<String> = names.into_iter().collect();
        let index = names.iter().enumerate().map(|(i, n)| (n.clone(), i as u32)).collect();
        ParamTable { names, index }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn slot(&self, name: &str) -> Option<usize> {
        self.index.get(name).map(|&i| i as usize)
    }
}

/// Parameter values laid out by a [`ParamTable`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSlots {
    values: Vec<f64>,
}

impl ParamSlots {
    #[inline]
    pub fn get(&self, slot: u32) -> f64 {
        self.values[slot as usize]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn set_slot(&mut self, slot: usize, value: f64) {
        self.values[slot] = value;
    }
}

#[derive(Debug, Clone)]
enum Node {
    Const(f64),
    Slot(u32),
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
}

impl Node {
    fn compile(expr: &Expr, table: &ParamTable) -> Node {
        match expr {
            Expr::Const(v) => Node::Const(*v),
            Expr::Param(name) => Node::Slot(table.index[name.as_str()]),
            Expr::Neg(inner) => Node::Neg(Box::new(Node::compile(inner, table))),
            Expr::BinOp(op, lhs, rhs) => {
                Node::Bin(*op, Box::new(Node::compile(lhs, table)), Box::new(Node::compile(rhs, table)))
            }
        }
    }

    #[inline]
    fn eval(&self, slots: &ParamSlots) -> f64 {
        match self {
            Node::Const(v) => *v,
            Node::Slot(i) => slots.get(*i),
            Node::Neg(inner) => -inner.eval(slots),
            Node::Bin(op, lhs, rhs) => op.apply(lhs.eval(slots), rhs.eval(slots)),
        }
    }
}

/// Formula compiled against a [`ParamTable`].
#[derive(Debug, Clone)]
struct Compiled(Node);

impl Compiled {
    fn new(formula: &Formula, table: &ParamTable) -> Self {
        Compiled(Node::compile(formula.expr(), table))
    }

    #[inline]
    fn eval(&self, slots: &ParamSlots, warnings: &mut u64) -> f64 {
        if let Node::Const(v) = self.0 {
            return v;
        }
        let Evaluated { value, sanitized } = Evaluated::from_raw(self.0.eval(slots));
        *warnings += sanitized as u64;
        value
    }
}

#[derive(Debug, Clone)]
struct CompiledJump {
    slot: u32,
    op: CompareOp,
    threshold: f64,
    target: f64,
}

#[derive(Debug, Clone)]
struct CompiledKeyframe {
    time: f64,
    coords: Vec3,
    coords_transition: Transition,
    kind: BrushKind,
    size: Compiled,
    rotation: Compiled,
    am_freq: Compiled,
    stm_freq: Compiled,
    brush_transition: Transition,
    intensity: Compiled,
    intensity_transition: Transition,
    jumps: Vec<CompiledJump>,
}

#[derive(Debug, Clone)]
struct CompiledPost {
    playback_speed: Compiled,
    intensity_factor: Compiled,
    translate: [Compiled; 3],
    rotation_z: Compiled,
    scale: Compiled,
}

/// A validated tacton compiled for evaluation.
#[derive(Debug, Clone)]
pub struct Program {
    tacton: Tacton,
    table: ParamTable,
    keyframes: Vec<CompiledKeyframe>,
    post: CompiledPost,
}

/// Endpoint-evaluated brush and intensity at one pattern time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BrushState {
    pub center: Vec3,
    pub kind: BrushKind,
    /// mm, >= 0.
    pub size: f64,
    /// Degrees.
    pub rotation: f64,
    /// Hz in [0, 1000].
    pub am_freq: f64,
    /// Hz in [0, 1000].
    pub stm_freq: f64,
    /// [0, 1].
    pub intensity: f64,
}

/// Post-processing formulas evaluated for one batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PostValues {
    pub playback_speed: f64,
    /// Clamped to [0, 1].
    pub intensity_factor: f64,
    pub translate: Vec3,
    /// Degrees.
    pub rotation_z: f64,
    pub scale: f64,
    #[serde(skip)]
    rot_cos: f64,
    #[serde(skip)]
    rot_sin: f64,
}

impl PostValues {
    pub fn new(playback_speed: f64, intensity_factor: f64, translate: Vec3, rotation_z: f64, scale: f64) -> Self {
        let (rot_sin, rot_cos) = rotation_z.to_radians().sin_cos();
        PostValues {
            playback_speed,
            intensity_factor: intensity_factor.clamp(0.0, 1.0),
            translate,
            rotation_z,
            scale,
            rot_cos,
            rot_sin,
        }
    }

    pub fn identity() -> Self {
        Self::new(1.0, 1.0, Vec3::ZERO, 0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct FocalPointSample {
    pub position: Vec3,
    /// [0, 1].
    pub amplitude: f64,
    pub pattern_time: f64,
}

/// Mutable playback position of one tacton. Only device time advances it.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct PlaybackState {
    pub pattern_time: f64,
    /// Radians in [0, 2π).
    pub stm_phase: f64,
    /// Radians in [0, 2π).
    pub am_phase: f64,
    pub finished: bool,
    pub jump_warnings: u64,
    pub formula_warnings: u64,
    pub last_device_time: f64,
    pub last_position: Vec3,
}

impl PlaybackState {
    pub fn at(pattern_time: f64) -> Self {
        PlaybackState { pattern_time, ..Default::default() }
    }

    pub fn warnings(&self) -> u64 {
        self.jump_warnings + self.formula_warnings
    }
}

/// Outcome of [`Program::resolve_jumps`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpResolution {
    pub time: f64,
    pub jumped: bool,
    /// The budget ran out while jumps were still firing.
    pub exhausted: bool,
}

impl Program {
    pub fn compile(tacton: &Tacton) -> Result<Program, TactonError> {
        let violations = validate_tacton(tacton);
        if !violations.is_empty() {
            return Err(TactonError::Invalid(violations));
        }

        let mut names: BTreeSet<String> = tacton.params.iter().map(|p| p.name.clone()).collect();
        for (_, f) in tacton.formulas() {
            names.extend(f.expr().referenced_params());
        }
        for kf in &tacton.keyframes {
            names.extend(kf.jumps.iter().map(|j| j.param.clone()));
        }
        let table = ParamTable::from_names(names);
        let c = |f: &Formula| Compiled::new(f, &table);

        let keyframes = tacton
            .keyframes
            .iter()
            .map(|kf| CompiledKeyframe {
                time: kf.time,
                coords: Vec3::new(kf.coords.x, kf.coords.y, kf.coords.z),
                coords_transition: kf.coords_transition,
                kind: kf.brush.kind,
                size: c(&kf.brush.size),
                rotation: c(&kf.brush.rotation),
                am_freq: c(&kf.brush.am_freq),
                stm_freq: c(&kf.brush.stm_freq),
                brush_transition: kf.brush_transition,
                intensity: c(&kf.intensity),
                intensity_transition: kf.intensity_transition,
                jumps: kf
                    .jumps
                    .iter()
                    .map(|j| CompiledJump {
                        slot: table.index[j.param.as_str()],
                        op: j.op,
                        threshold: j.threshold,
                        target: j.target,
                    })
                    .collect(),
            })
            .collect();

        let post = &tacton.post;
        let post = CompiledPost {
            playback_speed: c(&post.playback_speed),
            intensity_factor: c(&post.intensity_factor),
            translate: [c(&post.translate.x), c(&post.translate.y), c(&post.translate.z)],
            rotation_z: c(&post.rotation_z),
            scale: c(&post.scale),
        };

        Ok(Program { tacton: tacton.clone(), table, keyframes, post })
    }

    pub fn tacton(&self) -> &Tacton {
        &self.tacton
    }

    pub fn params(&self) -> &ParamTable {
        &self.table
    }

    pub fn end_time(&self) -> f64 {
        self.keyframes.last().map_or(0.0, |k| k.time)
    }

    /// A single-keyframe tacton is a static pattern and never finishes.
    pub fn is_static(&self) -> bool {
        self.keyframes.len() < 2
    }

    pub fn bind(&self, env: &ParamEnv) -> ParamSlots {
        let mut slots = ParamSlots::default();
        self.rebind(env, &mut slots);
        slots
    }

    /// Refresh `slots` from `env`. Does not allocate when `slots` already has this table's layout.
    pub fn rebind(&self, env: &ParamEnv, slots: &mut ParamSlots) {
        slots.values.resize(self.table.names.len(), 0.0);
        for (slot, name) in slots.values.iter_mut().zip(&self.table.names) {
            *slot = env.get(name);
        }
    }

    /// `(prev, next)` keyframe indices around `pt`.
    ///
    /// `prev` is the last keyframe at or before `pt` (the first keyframe when
    /// `pt` precedes it), `next` the first keyframe strictly after `pt`.
    pub fn segment_at(&self, pt: f64) -> (usize, Option<usize>) {
        let after = self.keyframes.partition_point(|k| k.time <= pt);
        if after == 0 {
            (0, Some(0))
        } else if after < self.keyframes.len() {
            (after - 1, Some(after))
        } else {
            (after - 1, None)
        }
    }

    pub fn interpolate(&self, pt: f64, slots: &ParamSlots, warnings: &mut u64) -> BrushState {
        let (prev, next) = self.segment_at(pt);
        let a = &self.keyframes[prev];
        let b = match next {
            Some(n) if n != prev => &self.keyframes[n],
            _ => return clamp_brush(self.hold(a, slots, warnings)),
        };
        let alpha = (pt - a.time) / (b.time - a.time);
        let pick = |mode: Transition, x: f64, y: f64| match mode {
            Transition::Linear => lerp(x, y, alpha),
            Transition::Step => x,
        };
        let center = match b.coords_transition {
            Transition::Linear => Vec3::new(
                lerp(a.coords.x, b.coords.x, alpha),
                lerp(a.coords.y, b.coords.y, alpha),
                lerp(a.coords.z, b.coords.z, alpha),
            ),
            Transition::Step => a.coords,
        };
        let bt = b.brush_transition;
        let mut ev = |c: &Compiled| c.eval(slots, warnings);
        let size = pick(bt, ev(&a.size), ev(&b.size));
        let rotation = pick(bt, ev(&a.rotation), ev(&b.rotation));
        let am_freq = pick(bt, ev(&a.am_freq), ev(&b.am_freq));
        let stm_freq = pick(bt, ev(&a.stm_freq), ev(&b.stm_freq));
        let intensity = pick(b.intensity_transition, ev(&a.intensity), ev(&b.intensity));
        clamp_brush(BrushState { center, kind: a.kind, size, rotation, am_freq, stm_freq, intensity })
    }

    fn hold(&self, k: &CompiledKeyframe, slots: &ParamSlots, warnings: &mut u64) -> BrushState {
        let mut ev = |c: &Compiled| c.eval(slots, warnings);
        BrushState {
            center: k.coords,
            kind: k.kind,
            size: ev(&k.size),
            rotation: ev(&k.rotation),
            am_freq: ev(&k.am_freq),
            stm_freq: ev(&k.stm_freq),
            intensity: ev(&k.intensity),
        }
    }

    pub fn eval_post(&self, slots: &ParamSlots, warnings: &mut u64) -> PostValues {
        let p = &self.post;
        let mut ev = |c: &Compiled| c.eval(slots, warnings);
        PostValues::new(
            ev(&p.playback_speed),
            ev(&p.intensity_factor),
            Vec3::new(ev(&p.translate[0]), ev(&p.translate[1]), ev(&p.translate[2])),
            ev(&p.rotation_z),
            ev(&p.scale),
        )
    }

    fn first_firing(&self, range: impl Iterator<Item = usize>, slots: &ParamSlots) -> Option<f64> {
        for i in range {
            for jump in &self.keyframes[i].jumps {
                if jump.op.holds(slots.get(jump.slot), jump.threshold) {
                    return Some(jump.target);
                }
            }
        }
        None
    }

    /// Follow conditional jumps for travel from `from` to `to`.
    ///
    /// Keyframes in `(from, to]` (forward) or `[to, from)` (backward) are
    /// visited in travel order; the first satisfied jump moves pattern time to
    /// exactly its target, the rest of the travel is discarded, and jumps on a
    /// keyframe located at the landing time are evaluated next. At most
    /// `budget` jumps are taken; if another would fire after that, the
    /// resolution stops at the current position with `exhausted` set.
    pub fn resolve_jumps(&self, from: f64, to: f64, slots: &ParamSlots, budget: u32) -> JumpResolution {
        let kfs = &self.keyframes;
        let mut remaining = budget;
        let mut jumped = false;
        let mut landing: Option<f64> = None;
        loop {
            let fired = match landing {
                Some(t) => {
                    let lo = kfs.partition_point(|k| k.time < t);
                    let hi = kfs.partition_point(|k| k.time <= t);
                    self.first_firing(lo..hi, slots)
                }
                None if to > from => {
                    let lo = kfs.partition_point(|k| k.time <= from);
                    let hi = kfs.partition_point(|k| k.time <= to);
                    self.first_firing(lo..hi, slots)
                }
                None if to < from => {
                    let lo = kfs.partition_point(|k| k.time < to);
                    let hi = kfs.partition_point(|k| k.time < from);
                    self.first_firing((lo..hi).rev(), slots)
                }
                None => None,
            };
            let position = landing.unwrap_or(to);
            match fired {
                None => return JumpResolution { time: position, jumped, exhausted: false },
                Some(_) if remaining == 0 => return JumpResolution { time: position, jumped: true, exhausted: true },
                Some(target) => {
                    remaining -= 1;
                    jumped = true;
                    landing = Some(target);
                }
            }
        }
    }

    /// Evaluate `out.len()` consecutive samples, each `device_dt` seconds of device time apart.
    ///
    /// Non-positive or non-finite `device_dt` is treated as zero. Performs no
    /// heap allocation.
    pub fn eval_batch(
        &self,
        state: &mut PlaybackState,
        slots: &ParamSlots,
        host: &HostTransform,
        device_dt: f64,
        out: &mut [FocalPointSample],
    ) {
        let dt = if device_dt.is_finite() && device_dt > 0.0 { device_dt } else { 0.0 };
        let post = self.eval_post(slots, &mut state.formula_warnings);
        let end = self.end_time();
        let can_finish = !self.is_static();

        for sample in out.iter_mut() {
            if state.finished {
                *sample = FocalPointSample {
                    position: state.last_position,
                    amplitude: 0.0,
                    pattern_time: state.pattern_time,
                };
                continue;
            }
            let target = advance_pattern_time(state.pattern_time, dt, post.playback_speed);
            // overflowing speed formulas leave pattern time where it was
            let target = if target.is_finite() { target } else { state.pattern_time };
            let resolution = self.resolve_jumps(state.pattern_time, target, slots, JUMP_BUDGET);
            state.jump_warnings += resolution.exhausted as u64;
            let pt = resolution.time;
            state.pattern_time = pt;

            if can_finish && pt > end {
                state.finished = true;
                *sample = FocalPointSample { position: state.last_position, amplitude: 0.0, pattern_time: pt };
                continue;
            }

            let brush = self.interpolate(pt, slots, &mut state.formula_warnings);
            let (dx, dy) = brush_offset(&brush, state.stm_phase);
            let local = Vec3::new(brush.center.x + dx, brush.center.y + dy, brush.center.z);
            let intensity = brush.intensity * am_factor(brush.am_freq, state.am_phase);
            let (position, amplitude) = apply_post(local, intensity, &post, host);
            let (position, amplitude) = if position.is_finite() {
                (position, amplitude)
            } else {
                state.formula_warnings += 1;
                (state.last_position, 0.0)
            };

            state.stm_phase = wrap_phase(state.stm_phase + TAU * brush.stm_freq * dt);
            state.am_phase = wrap_phase(state.am_phase + TAU * brush.am_freq * dt);
            state.last_position = position;
            *sample = FocalPointSample { position, amplitude, pattern_time: pt };
        }
    }
}

/// Finite for finite endpoints and `alpha` in `[0, 1]`.
#[inline]
fn lerp(a: f64, b: f64, alpha: f64) -> f64 {
    let v = a + (b - a) * alpha;
    if v.is_finite() {
        return v;
    }
    // b - a overflowed
    let convex = a * (1.0 - alpha) + b * alpha;
    if convex.is_finite() {
        convex
    } else if alpha < 0.5 {
        a
    } else {
        b
    }
}

#[inline]
fn wrap_phase(phase: f64) -> f64 {
    let p = phase.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if p >= TAU {
        0.0
    } else {
        p
    }
}

fn clamp_brush(mut b: BrushState) -> BrushState {
    b.size = b.size.max(0.0);
    b.intensity = b.intensity.clamp(0.0, 1.0);
    b.am_freq = b.am_freq.clamp(0.0, MAX_MODULATION_HZ);
    b.stm_freq = b.stm_freq.clamp(0.0, MAX_MODULATION_HZ);
    b
}

/// `pattern_time + speed * dt_device`.
#[inline]
pub fn advance_pattern_time(pattern_time: f64, dt_device: f64, speed: f64) -> f64 {
    pattern_time + speed * dt_device
}

/// Brush sweep displacement from the brush center at STM phase `stm_phase`.
///
/// Circles trace `size` radius starting on +x; lines sweep sinusoidally over
/// `[-size, size]` along the direction `rotation` degrees from +x.
#[inline]
pub fn brush_offset(brush: &BrushState, stm_phase: f64) -> (f64, f64) {
    let (sin, cos) = stm_phase.sin_cos();
    match brush.kind {
        BrushKind::Circle => (brush.size * cos, brush.size * sin),
        BrushKind::Line => {
            let (ry, rx) = brush.rotation.to_radians().sin_cos();
            let s = brush.size * cos;
            (s * rx, s * ry)
        }
    }
}

/// Raised-cosine AM envelope, `1` when AM is disabled.
#[inline]
pub fn am_factor(am_freq: f64, am_phase: f64) -> f64 {
    if am_freq == 0.0 {
        1.0
    } else {
        0.5 * (1.0 - am_phase.cos())
    }
}

/// `host × T(translate) × Rz(rotation_z) × S(scale) × point`; scale acts on x and y.
#[inline]
pub fn apply_post(point: Vec3, intensity: f64, post: &PostValues, host: &HostTransform) -> (Vec3, f64) {
    let sx = point.x * post.scale;
    let sy = point.y * post.scale;
    let rx = post.rot_cos * sx - post.rot_sin * sy;
    let ry = post.rot_sin * sx + post.rot_cos * sy;
    let local = Vec3::new(rx + post.translate.x, ry + post.translate.y, point.z + post.translate.z);
    let amplitude = (intensity * post.intensity_factor).clamp(0.0, 1.0);
    (host.apply(local), amplitude)
}

pub fn keyframe_segment_at(program: &Program, pt: f64) -> (usize, Option<usize>) {
    program.segment_at(pt)
}

pub fn interpolate_state(program: &Program, pt: f64, slots: &ParamSlots) -> BrushState {
    program.interpolate(pt, slots, &mut 0)
}
