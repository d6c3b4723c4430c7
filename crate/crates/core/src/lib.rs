//! Deterministic discrete-event simulation of distributed lock protocols.
//!
//! Four protocols (centralized, quorum-replicated, lease-based and
//! hierarchical) plus a hybrid mode run on a seeded kernel with skewed clocks,
//! region-aware latencies, crashes and partitions. Every run produces
//! throughput and latency summaries and a true-time critical-section trace
//! that the safety checker validates.

pub mod checker;
pub mod config;
pub mod experiment;
pub mod lock;
pub mod metrics;
pub mod optimizations;
pub mod plot;
pub mod presets;
pub mod proto;
pub mod sim;
pub mod run;
pub mod sweep;
pub mod workload;
