//! Core library of the itrack toolkit: an evaluation engine for interactive
//! visual tracking.
//!
//! The library replays timestamped natural-language prompt schedules against
//! pluggable tracker/grounder backends, runs the memory-augmented arbitration
//! loop, and computes the four-dimensional interactive-tracking metric suite
//! (perception, responsiveness, tracking, interactiveness).
//!
//! Module map:
//! - [`geometry`]: axis-aligned box arithmetic (IoU, center distances).
//! - [`dataset`]: annotation schema, validation, JSON I/O, and the
//!   deterministic synthetic sequence generator.
//! - [`metrics`]: the metric suite and per-sequence/aggregate reports.
//! - [`memory`]: positive/negative appearance memory banks and the
//!   memory-conditioned scorer.
//! - [`arbitration`]: drift detection and the keep-vs-reinit decision.
//! - [`harness`]: the interaction loop, synthetic backends, and the external
//!   process wire protocol.
//! - [`report`]: canonical JSON/CSV emission for reports and run records.

pub mod arbitration;
pub mod dataset;
pub mod geometry;
pub mod harness;
pub mod jsonfmt;
pub mod memory;
pub mod metrics;
pub mod presets;
pub mod report;
