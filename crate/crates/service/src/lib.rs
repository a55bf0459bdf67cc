//! Contact-tracing server: durable event ingestion, infection reporting and
//! snapshot-isolated graph queries over HTTP.

mod config;
mod engine;
mod error;
pub mod http;
mod service;
pub mod store;
mod views;

pub use config::ServiceConfig;
pub use engine::{Rejection, RiskOutcome};
pub use error::ServiceError;
pub use service::{IngestSummary, RiskSummary, Snapshot, TraceService};
pub use views::{ClustersView, EdgeView, GraphView, NodeView, RiskView, TraceView, MAX_TRACE_LEVELS};
