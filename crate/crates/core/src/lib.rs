//! Real-time engine for adaptive mid-air ultrasound tactons.
//!
//! A [`Tacton`](tacton::Tacton) is a keyframed focal-point pattern whose
//! fields may be arithmetic formulas over external parameters and whose
//! keyframes may carry conditional jumps. The [`evaluator`] turns a compiled
//! tacton into focal-point samples, the [`runtime`] services device batch
//! requests and applies control commands between batches, and [`api`] wraps
//! both behind integer handles for foreign callers.

pub mod api;
pub mod bench;
pub mod device;
pub mod evaluator;
pub mod formula;
pub mod runtime;
pub mod tacton;
pub mod transform;

pub use evaluator::{BrushState, FocalPointSample, PlaybackState, Program};
pub use formula::{Expr, Formula, ParamEnv};
pub use tacton::{parse_tacton, serialize_tacton, validate_tacton, Tacton, TactonError};
pub use transform::{HostTransform, Vec3};
