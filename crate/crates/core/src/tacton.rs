//! Tacton documents and the `.adaptics` file format.
//!
//! A document is UTF-8 JSON with the top-level keys `format_version`, `name`,
//! `params`, `keyframes` and `post`. Formulas are JSON strings holding the
//! formula source verbatim. Times are seconds, coordinates millimeters with the
//! origin at the array center and `z` pointing up.
//!
//! Serialization is canonical: keys always appear in the declaration order of
//! the structs below, numbers are written in shortest round-trip form, and the
//! output is pretty-printed with two-space indentation and a trailing newline.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formula::{is_valid_param_name, Formula};

pub const FORMAT_VERSION: u32 = 1;
pub const FILE_EXTENSION: &str = "adaptics";

/// Default focal height of keyframes edited on the 2D canvas.
pub const DEFAULT_Z_MM: f64 = 200.0;
/// Workspace sanity bound for |x| and |y|.
pub const MAX_XY_MM: f64 = 500.0;
/// Upper bound for z (lower bound is 0).
pub const MAX_Z_MM: f64 = 1000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transition {
    #[default]
    Linear,
    Step,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BrushKind {
    Circle,
    Line,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coords {
    pub x: f64,
    pub y: f64,
    #[serde(default = "default_z")]
    pub z: f64,
}

fn default_z() -> f64 {
    DEFAULT_Z_MM
}

fn zero() -> Formula {
    Formula::constant(0.0)
}

fn one() -> Formula {
    Formula::constant(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrushSpec {
    pub kind: BrushKind,
    /// Circle radius or line half-length, mm.
    pub size: Formula,
    /// Degrees, counter-clockwise from +x. Only meaningful for lines.
    #[serde(default = "zero")]
    pub rotation: Formula,
    #[serde(default = "zero")]
    pub am_freq: Formula,
    #[serde(default = "zero")]
    pub stm_freq: Formula,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CompareOp {
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
}

impl CompareOp {
    #[inline]
    pub fn holds(self, value: f64, threshold: f64) -> bool {
        match self {
            CompareOp::Lt => value < threshold,
            CompareOp::Le => value <= threshold,
            CompareOp::Gt => value > threshold,
            CompareOp::Ge => value >= threshold,
        }
    }
}

impl fmt::Display for CompareOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CompareOp::Lt => "<",
            CompareOp::Le => "<=",
            CompareOp::Gt => ">",
            CompareOp::Ge => ">=",
        })
    }
}

/// `if <param> <op> <threshold> jump to <target>`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalJump {
    pub param: String,
    pub op: CompareOp,
    pub threshold: f64,
    /// Seconds.
    pub target: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Keyframe {
    pub time: f64,
    pub coords: Coords,
    #[serde(default)]
    pub coords_transition: Transition,
    pub brush: BrushSpec,
    #[serde(default)]
    pub brush_transition: Transition,
    #[serde(default = "one")]
    pub intensity: Formula,
    #[serde(default)]
    pub intensity_transition: Transition,
    #[serde(default)]
    pub jumps: Vec<ConditionalJump>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Translate {
    #[serde(default = "zero")]
    pub x: Formula,
    #[serde(default = "zero")]
    pub y: Formula,
    #[serde(default = "zero")]
    pub z: Formula,
}

impl Default for Translate {
    fn default() -> Self {
        Translate { x: zero(), y: zero(), z: zero() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostProcessing {
    #[serde(default = "one")]
    pub playback_speed: Formula,
    #[serde(default = "one")]
    pub intensity_factor: Formula,
    #[serde(default)]
    pub translate: Translate,
    /// Degrees about the array's z axis.
    #[serde(default = "zero")]
    pub rotation_z: Formula,
    #[serde(default = "one")]
    pub scale: Formula,
}

impl Default for PostProcessing {
    fn default() -> Self {
        PostProcessing {
            playback_speed: one(),
            intensity_factor: one(),
            translate: Translate::default(),
            rotation_z: zero(),
            scale: one(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamDecl {
    pub name: String,
    /// Design-time test value. The engine itself defaults absent parameters to 0.
    #[serde(default)]
    pub default: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tacton {
    pub format_version: u32,
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub params: Vec<ParamDecl>,
    pub keyframes: Vec<Keyframe>,
    #[serde(default)]
    pub post: PostProcessing,
}

impl Tacton {
    /// Time of the last keyframe (0 for an empty document).
    pub fn end_time(&self) -> f64 {
        self.keyframes.last().map_or(0.0, |k| k.time)
    }

    /// Every formula in the document with its location.
    pub fn formulas(&self) -> Vec<(String, &Formula)> {
        let mut out = Vec::new();
        for (i, kf) in self.keyframes.iter().enumerate() {
            let at = |field: &str| format!("keyframes[{i}].{field}");
            out.push((at("brush.size"), &kf.brush.size));
            out.push((at("brush.rotation"), &kf.brush.rotation));
            out.push((at("brush.am_freq"), &kf.brush.am_freq));
            out.push((at("brush.stm_freq"), &kf.brush.stm_freq));
            out.push((at("intensity"), &kf.intensity));
        }
        let post = &self.post;
        out.push(("post.playback_speed".into(), &post.playback_speed));
        out.push(("post.intensity_factor".into(), &post.intensity_factor));
        out.push(("post.translate.x".into(), &post.translate.x));
        out.push(("post.translate.y".into(), &post.translate.y));
        out.push(("post.translate.z".into(), &post.translate.z));
        out.push(("post.rotation_z".into(), &post.rotation_z));
        out.push(("post.scale".into(), &post.scale));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    /// Machine-readable code such as `jump-target-out-of-range`.
    pub code: &'static str,
    /// Path into the document, e.g. `keyframes[2].jumps[0].target`.
    pub location: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {} ({})", self.code, self.message, self.location)
    }
}

#[derive(Debug, Error)]
pub enum TactonError {
    #[error("malformed JSON at byte {offset}: {message}")]
    Json { offset: usize, message: String },
    #[error("invalid document at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("unsupported format_version {0} (expected {FORMAT_VERSION})")]
    Version(u32),
    #[error("{}", format_violations(.0))]
    Invalid(Vec<Violation>),
}

fn format_violations(violations: &[Violation]) -> String {
    violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}

impl TactonError {
    pub fn code(&self) -> &'static str {
        match self {
            TactonError::Json { .. } => "malformed-json",
            TactonError::Schema { .. } => "schema",
            TactonError::Version(_) => "unsupported-format-version",
            TactonError::Invalid(_) => "invalid-tacton",
        }
    }
}

/// A structurally parsed document plus the JSON paths of fields that were ignored.
#[derive(Debug, Clone)]
pub struct ParsedDocument {
    pub tacton: Tacton,
    pub ignored_fields: Vec<String>,
}

/// Structural parse: JSON syntax, schema and formula syntax, but no invariant checks.
pub fn parse_document(text: &str) -> Result<ParsedDocument, TactonError> {
    let value: serde_json::Value = serde_json::from_str(text)
        .map_err(|e| TactonError::Json { offset: byte_offset(text, e.line(), e.column()), message: e.to_string() })?;
    let mut ignored_fields = Vec::new();
    let mut record = |path: serde_ignored::Path<'_>| ignored_fields.push(path.to_string());
    let ignoring = serde_ignored::Deserializer::new(value, &mut record);
    let tacton: Tacton = serde_path_to_error::deserialize(ignoring)
        .map_err(|e| TactonError::Schema { path: e.path().to_string(), message: e.inner().to_string() })?;
    if tacton.format_version != FORMAT_VERSION {
        return Err(TactonError::Version(tacton.format_version));
    }
    Ok(ParsedDocument { tacton, ignored_fields })
}

/// Parse and validate. Unknown fields are logged and otherwise ignored.
pub fn parse_tacton(text: &str) -> Result<Tacton, TactonError> {
    let ParsedDocument { tacton, ignored_fields } = parse_document(text)?;
    for field in &ignored_fields {
        log::warn!("ignoring unknown field `{field}`");
    }
    let violations = validate_tacton(&tacton);
    if violations.is_empty() {
        Ok(tacton)
    } else {
        Err(TactonError::Invalid(violations))
    }
}

/// Canonical JSON rendering.
pub fn serialize_tacton(tacton: &Tacton) -> String {
    let mut out = serde_json::to_string_pretty(tacton).expect("tacton serializes");
    out.push('\n');
    out
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let line_start: usize = text.split_inclusive('\n').take(line - 1).map(str::len).sum();
    (line_start + column.saturating_sub(1)).min(text.len())
}

/// Every invariant violation in the document. Empty means valid.
pub fn validate_tacton(tacton: &Tacton) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |code: &'static str, location: String, message: String| {
        out.push(Violation { code, location, message });
    };

    if tacton.format_version != FORMAT_VERSION {
        push(
            "unsupported-format-version",
            "format_version".into(),
            format!("format_version {} is not supported", tacton.format_version),
        );
    }

    let mut seen = std::collections::HashSet::new();
    for (i, p) in tacton.params.iter().enumerate() {
        let location = format!("params[{i}].name");
        if !is_valid_param_name(&p.name) {
            push(
                "invalid-param-name",
                location.clone(),
                format!("parameter name {:?} is not a valid identifier", p.name),
            );
        }
        if !seen.insert(p.name.as_str()) {
            push("duplicate-param", location.clone(), format!("parameter `{}` is declared more than once", p.name));
        }
        if !p.default.is_finite() {
            push("non-finite-number", format!("params[{i}].default"), "default must be finite".into());
        }
    }

    if tacton.keyframes.is_empty() {
        push("no-keyframes", "keyframes".into(), "a tacton needs at least one keyframe".into());
    }

    let end = tacton.end_time();
    let mut prev_time: Option<f64> = None;
    for (i, kf) in tacton.keyframes.iter().enumerate() {
        let at = |field: &str| format!("keyframes[{i}].{field}");
        if !kf.time.is_finite() || kf.time < 0.0 {
            push("time-out-of-range", at("time"), format!("keyframe time {} must be finite and >= 0", kf.time));
        }
        if let Some(prev) = prev_time {
            if kf.time <= prev {
                push(
                    "keyframes-not-increasing",
                    at("time"),
                    format!("keyframes not strictly increasing: {} follows {}", kf.time, prev),
                );
            }
        }
        prev_time = Some(kf.time);

        let c = kf.coords;
        let xy_ok = |v: f64| v.is_finite() && v.abs() <= MAX_XY_MM;
        if !xy_ok(c.x) || !xy_ok(c.y) || !c.z.is_finite() || !(0.0..=MAX_Z_MM).contains(&c.z) {
            push(
                "coords-out-of-range",
                at("coords"),
                format!("coordinates ({}, {}, {}) outside the workspace", c.x, c.y, c.z),
            );
        }

        for (j, jump) in kf.jumps.iter().enumerate() {
            let jat = |field: &str| format!("keyframes[{i}].jumps[{j}].{field}");
            if !is_valid_param_name(&jump.param) {
                push(
                    "invalid-param-name",
                    jat("param"),
                    format!("parameter name {:?} is not a valid identifier", jump.param),
                );
            }
            if !jump.threshold.is_finite() {
                push("non-finite-number", jat("threshold"), "jump threshold must be finite".into());
            }
            if !jump.target.is_finite() || jump.target < 0.0 || jump.target > end {
                push(
                    "jump-target-out-of-range",
                    jat("target"),
                    format!("jump target {} outside [0, {}]", jump.target, end),
                );
            }
        }
    }
    out
}
