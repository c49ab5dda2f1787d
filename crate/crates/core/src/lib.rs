//! Real-time undesired-event detection for oil-well sensor time series.
//!
//! The pipeline reads per-second multivariate episodes labeled with
//! normal/transient/faulty stages, interpolates a per-second event
//! probability across transients, cuts episodes into one-minute windows,
//! and trains two model families per event: a from-scratch CART random
//! forest on nine per-channel window statistics, and a causal dilated
//! temporal convolutional network on the raw standardized windows. Both
//! families cover event-type classification and event-probability
//! regression; an experiment harness reproduces the per-event evaluation
//! protocol with seeded splits and deterministic reports.

pub mod cli;
pub mod config;
pub mod features;
pub mod forest;
pub mod harness;
pub mod ingest;
pub mod label;
pub mod metrics;
pub mod model;
pub mod stream;
pub mod synth;
pub mod tcn;

pub use forest::Task;
pub use model::{Episode, EventType, Sample, Source, Stage, Window, WINDOW_LEN};
