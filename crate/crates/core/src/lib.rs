//! Coherence scoring and evaluation toolkit for part-aware text-to-motion
//! generation.
//!
//! * [`motion`]: joint-position sequences, skeletons, body-part partitions and file formats.
//! * [`temporal`]: Temporal Coherence (TC), lag-tolerant synchrony of part velocities.
//! * [`spatial`]: Spatial Coherence (SC), per-frame plausibility of part geometry
//!   against corpus reference statistics.
//! * [`metrics`]: feature-space metrics (FID, R-Precision, MM-Dist, Diversity,
//!   MultiModality) over embedding dumps, with repeated-run confidence intervals.
//! * [`kernels`]: deterministic forward-pass reference kernels of the part-guided
//!   generator (temporal enhancement, quantization, text grounding, fusion
//!   attention and the cyclic generation scheduler).
//! * [`synth`]: seeded synthetic motion used by tests and self-checks.

pub mod embedding;
pub mod error;
pub mod kernels;
pub mod metrics;
pub mod motion;
pub mod spatial;
pub mod synth;
pub mod temporal;

pub use error::{Error, Result};
