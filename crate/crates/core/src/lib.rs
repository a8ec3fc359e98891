//! Incident aggregation for large cloud systems.
//!
//! Bursts in the incident stream are detected with a streaming EVT
//! detector, each burst is partitioned into failure-impact graphs over the
//! service topology, incident types are embedded by walking those graphs,
//! and the live stream is grouped online using the learned embeddings and
//! topological distance.

pub mod aggregator;
pub mod codec;
pub mod config;
pub mod detector;
pub mod embedding;
pub mod error;
pub mod impact;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod simulator;

pub use error::{Error, Result};
