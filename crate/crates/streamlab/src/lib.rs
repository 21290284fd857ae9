//! Deterministic desk-scale stream-processing resiliency lab.
//!
//! A discrete-event engine executes small dataflow jobs under scripted
//! faults, with credit-based backpressure, aligned snapshotting, pluggable
//! recovery scopes, routing strategies, a guarded parallelism recommender,
//! and coordination-plane cost models. Same seed, same config: identical
//! results, byte for byte.

pub mod autoscale;
pub mod bench;
pub mod chaos;
pub mod cli;
pub mod checkpoint;
pub mod control;
pub mod graph;
pub mod recovery;
pub mod runtime;
pub mod shuffle;
pub mod util;
