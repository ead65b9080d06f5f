//! Self-similar growth-fragmentation processes.
//!
//! Particles carry masses driven by exponentials of spectrally negative Lévy
//! processes, split conservatively in two at the jumps of a birth measure, and
//! are turned into a self-similar system by a particle-wise Lamperti
//! time-change. The crate provides:
//!
//! * [`jump_measure`]: the closed family of Lévy measures on `(-∞, 0)` with
//!   tail masses, restricted samplers and fractional moments,
//! * [`cumulant`]: `Ψ`, `Ψ₂`, the cumulant `κ`, its minimiser, hypothesis
//!   checks and tilt selection,
//! * [`levy_path`]: path sampling with killing and marked birth events,
//! * [`homogeneous`]: the event-driven homogeneous growth-fragmentation,
//! * [`selfsimilar`]: Lamperti clocks, interval counts, truncation coupling,
//! * [`spine`]: tilted (spine) simulation and the explosion experiment.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cumulant;
pub mod error;
pub mod homogeneous;
pub mod jump_measure;
pub mod levy_path;
pub mod quad;
pub mod rng;
pub mod selfsimilar;
pub mod spine;
pub mod stats;

pub use cumulant::{Characteristics, CumulantProfile, Tilts};
pub use error::{Error, Result};
pub use homogeneous::{Caps, Label, TreePopulation};
pub use jump_measure::{JumpMeasure, TruncatedPair};
pub use levy_path::{PathRecord, PathSpec};
pub use selfsimilar::ClockedPopulation;
pub use spine::{SpineRealization, SpineSpec};
