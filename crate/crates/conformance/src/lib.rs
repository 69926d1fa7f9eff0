//! Independent oracles for the adaptics engine.
//!
//! [`formula`] re-interprets formula source text, [`reference`] replays a
//! tacton one sample at a time the slow and obvious way, and [`generate`]
//! produces the seeded random inputs both are compared on. [`harness`] runs
//! the two side by side.

pub mod formula;
pub mod generate;
pub mod harness;
pub mod reference;
