//! Naive per-sample reference player.
//!
//! Deliberately simple: formulas are interpreted from source on every use,
//! keyframes are found by linear scan, and the output transform is built as an
//! explicit product of 4x4 matrices.

use std::collections::HashMap;
use std::f64::consts::PI;

use adaptics_core::tacton::{BrushKind, CompareOp, Keyframe, Tacton, Transition};

use crate::formula;

pub type Mat4 = [[f64; 4]; 4];
pub type Env = HashMap<String, f64>;

pub const IDENTITY: Mat4 = [[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]];

const BUDGET: u32 = 16;
const MAX_HZ: f64 = 1000.0;

pub fn mat_mul(a: &Mat4, b: &Mat4) -> Mat4 {
    let mut m = [[0.0; 4]; 4];
    for (i, row) in m.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = (0..4).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    m
}

pub fn mat_apply(m: &Mat4, p: [f64; 3]) -> [f64; 3] {
    let v = [p[0], p[1], p[2], 1.0];
    let row = |i: usize| (0..4).map(|k| m[i][k] * v[k]).sum::<f64>();
    [row(0), row(1), row(2)]
}

pub fn translation(x: f64, y: f64, z: f64) -> Mat4 {
    let mut m = IDENTITY;
    m[0][3] = x;
    m[1][3] = y;
    m[2][3] = z;
    m
}

pub fn rotation_z_deg(deg: f64) -> Mat4 {
    let r = deg * PI / 180.0;
    let mut m = IDENTITY;
    m[0][0] = r.cos();
    m[0][1] = -r.sin();
    m[1][0] = r.sin();
    m[1][1] = r.cos();
    m
}

pub fn scale_xy(s: f64) -> Mat4 {
    let mut m = IDENTITY;
    m[0][0] = s;
    m[1][1] = s;
    m
}

pub fn row_major(m: &Mat4) -> [f64; 16] {
    let mut out = [0.0; 16];
    for i in 0..4 {
        out[i * 4..i * 4 + 4].copy_from_slice(&m[i]);
    }
    out
}

fn value(src: &str, env: &Env) -> f64 {
    formula::eval(src, env).0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefBrush {
    pub center: [f64; 3],
    pub circle: bool,
    pub size: f64,
    pub rotation: f64,
    pub am_freq: f64,
    pub stm_freq: f64,
    pub intensity: f64,
}

fn brush_of(k: &Keyframe, env: &Env) -> RefBrush {
    RefBrush {
        center: [k.coords.x, k.coords.y, k.coords.z],
        circle: k.brush.kind == BrushKind::Circle,
        size: value(k.brush.size.source(), env),
        rotation: value(k.brush.rotation.source(), env),
        am_freq: value(k.brush.am_freq.source(), env),
        stm_freq: value(k.brush.stm_freq.source(), env),
        intensity: value(k.intensity.source(), env),
    }
}

fn blend(mode: Transition, a: f64, b: f64, w: f64) -> f64 {
    match mode {
        Transition::Linear => a * (1.0 - w) + b * w,
        Transition::Step => a,
    }
}

/// Brush state at pattern time `pt`, clamped to the engine's output ranges.
pub fn brush_at(t: &Tacton, pt: f64, env: &Env) -> RefBrush {
    let kfs = &t.keyframes;
    let mut prev = None;
    for (i, k) in kfs.iter().enumerate() {
        if k.time <= pt {
            prev = Some(i);
        }
    }
    let raw = match prev {
        None => brush_of(&kfs[0], env),
        Some(i) if i + 1 == kfs.len() => brush_of(&kfs[i], env),
        Some(i) => {
            let (a, b) = (&kfs[i], &kfs[i + 1]);
            let w = (pt - a.time) / (b.time - a.time);
            let (ba, bb) = (brush_of(a, env), brush_of(b, env));
            let c = b.coords_transition;
            RefBrush {
                center: [
                    blend(c, ba.center[0], bb.center[0], w),
                    blend(c, ba.center[1], bb.center[1], w),
                    blend(c, ba.center[2], bb.center[2], w),
                ],
                circle: ba.circle,
                size: blend(b.brush_transition, ba.size, bb.size, w),
                rotation: blend(b.brush_transition, ba.rotation, bb.rotation, w),
                am_freq: blend(b.brush_transition, ba.am_freq, bb.am_freq, w),
                stm_freq: blend(b.brush_transition, ba.stm_freq, bb.stm_freq, w),
                intensity: blend(b.intensity_transition, ba.intensity, bb.intensity, w),
            }
        }
    };
    RefBrush {
        size: raw.size.max(0.0),
        intensity: raw.intensity.clamp(0.0, 1.0),
        am_freq: raw.am_freq.clamp(0.0, MAX_HZ),
        stm_freq: raw.stm_freq.clamp(0.0, MAX_HZ),
        ..raw
    }
}

fn holds(op: CompareOp, v: f64, threshold: f64) -> bool {
    match op {
        CompareOp::Lt => v < threshold,
        CompareOp::Le => v <= threshold,
        CompareOp::Gt => v > threshold,
        CompareOp::Ge => v >= threshold,
    }
}

fn first_jump<'a>(kfs: impl Iterator<Item = &'a Keyframe>, env: &Env) -> Option<f64> {
    for k in kfs {
        for j in &k.jumps {
            if holds(j.op, env.get(&j.param).copied().unwrap_or(0.0), j.threshold) {
                return Some(j.target);
            }
        }
    }
    None
}

/// `(landing time, budget exhausted, jumps taken)` for travel from `from` to `to`.
pub fn resolve(t: &Tacton, from: f64, to: f64, env: &Env) -> (f64, bool, u32) {
    let kfs = &t.keyframes;
    let mut fired = if to > from {
        first_jump(kfs.iter().filter(|k| k.time > from && k.time <= to), env)
    } else if to < from {
        first_jump(kfs.iter().rev().filter(|k| k.time >= to && k.time < from), env)
    } else {
        None
    };
    let mut position = to;
    let mut taken = 0;
    while let Some(target) = fired {
        if taken == BUDGET {
            return (position, true, taken);
        }
        taken += 1;
        position = target;
        fired = first_jump(kfs.iter().filter(|k| k.time == position), env);
    }
    (position, false, taken)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefSample {
    pub position: [f64; 3],
    pub amplitude: f64,
    pub pattern_time: f64,
}

#[derive(Debug, Clone)]
pub struct RefPlayer<'a> {
    tacton: &'a Tacton,
    pub pattern_time: f64,
    pub stm_phase: f64,
    pub am_phase: f64,
    pub finished: bool,
    pub last_position: [f64; 3],
    pub jump_warnings: u64,
    pub jumps_taken: u64,
}

impl<'a> RefPlayer<'a> {
    pub fn new(tacton: &'a Tacton) -> Self {
        RefPlayer {
            tacton,
            pattern_time: 0.0,
            stm_phase: 0.0,
            am_phase: 0.0,
            finished: false,
            last_position: [0.0; 3],
            jump_warnings: 0,
            jumps_taken: 0,
        }
    }

    pub fn sample(&mut self, env: &Env, host: &Mat4, dt: f64) -> RefSample {
        let t = self.tacton;
        let dt = if dt.is_finite() && dt > 0.0 { dt } else { 0.0 };
        if self.finished {
            return RefSample { position: self.last_position, amplitude: 0.0, pattern_time: self.pattern_time };
        }
        let post = &t.post;
        let speed = value(post.playback_speed.source(), env);
        let mut target = self.pattern_time + speed * dt;
        if !target.is_finite() {
            target = self.pattern_time;
        }
        let (pt, exhausted, taken) = resolve(t, self.pattern_time, target, env);
        self.jump_warnings += exhausted as u64;
        self.jumps_taken += taken as u64;
        self.pattern_time = pt;
        let end = t.keyframes.last().map_or(0.0, |k| k.time);
        if t.keyframes.len() > 1 && pt > end {
            self.finished = true;
            return RefSample { position: self.last_position, amplitude: 0.0, pattern_time: pt };
        }

        let b = brush_at(t, pt, env);
        let (dx, dy) = if b.circle {
            (b.size * self.stm_phase.cos(), b.size * self.stm_phase.sin())
        } else {
            let r = b.rotation * PI / 180.0;
            let s = b.size * self.stm_phase.cos();
            (s * r.cos(), s * r.sin())
        };
        let envelope = if b.am_freq == 0.0 { 1.0 } else { 0.5 - 0.5 * self.am_phase.cos() };

        let m = mat_mul(
            host,
            &mat_mul(
                &translation(
                    value(post.translate.x.source(), env),
                    value(post.translate.y.source(), env),
                    value(post.translate.z.source(), env),
                ),
                &mat_mul(
                    &rotation_z_deg(value(post.rotation_z.source(), env)),
                    &scale_xy(value(post.scale.source(), env)),
                ),
            ),
        );
        let position = mat_apply(&m, [b.center[0] + dx, b.center[1] + dy, b.center[2]]);
        let factor = value(post.intensity_factor.source(), env).clamp(0.0, 1.0);
        let amplitude = (b.intensity * envelope * factor).clamp(0.0, 1.0);
        let (position, amplitude) =
            if position.iter().all(|v| v.is_finite()) { (position, amplitude) } else { (self.last_position, 0.0) };

        let two_pi = 2.0 * PI;
        self.stm_phase = (self.stm_phase + two_pi * b.stm_freq * dt) % two_pi;
        self.am_phase = (self.am_phase + two_pi * b.am_freq * dt) % two_pi;
        self.last_position = position;
        RefSample { position, amplitude, pattern_time: pt }
    }
}
