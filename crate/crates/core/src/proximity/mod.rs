//! On-device proximity pipeline: RSSI windows → features → Near/Far verdicts →
//! encounter state machine and aggregated proximity events.

mod aggregate;
mod classifier;
mod encounter;
mod features;
mod geofence;
mod pipeline;
mod window;

pub use aggregate::{aggregate_events, AggregateOutput, TokenResolver};
pub use classifier::{classify_proximity, logistic, ProximityModel, ProximityVerdict, Verdict, FEATURE_DIM, FEATURE_NAMES};
pub use encounter::{update_encounter, EncounterParams, EncounterPhase, EncounterState, InterventionNotice};
pub use features::{extract_features, FeatureVector};
pub use geofence::{point_in_geofence, Geofence};
pub use pipeline::{DevicePipeline, EventUploader, PipelineConfig, PipelineOutput, Spool, UploadError};
pub use window::{make_windows, ObservationWindow, RssiSample, RSSI_RANGE, TX_POWER_RANGE};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProximityError {
    #[error("rssi sample out of range: {0}")]
    InvalidSample(String),
    #[error("stream not sorted by timestamp at index {0}")]
    InvalidStream(usize),
    #[error("invalid window parameters: window {window_ms} ms, slide {slide_ms} ms")]
    InvalidWindowing { window_ms: i64, slide_ms: i64 },
    #[error("window contains no samples")]
    EmptyWindow,
    #[error("model expects {expected} features, got {got}")]
    ModelMismatch { expected: usize, got: usize },
    #[error("invalid geofence: {0}")]
    InvalidGeofence(&'static str),
    #[error("spool i/o: {0}")]
    Spool(String),
}
