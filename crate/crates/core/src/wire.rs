//! Line-record wire format shared by device spools, the server event log and
//! `POST /v1/events`. One [`EventEnvelope`] per JSON document.

use serde::{Deserialize, Serialize};

use crate::event::{Ambience, Closeness, EventError, ProximityEvent};
use crate::identity::{AssociateHash, TokenBytes};
use crate::zone::{AccessLogEntry, InfraSighting};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Proximity,
    AccessLog,
    InfectionReport,
    InfraSighting,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventEnvelope {
    pub schema_version: u32,
    pub kind: EventKind,
    pub payload: serde_json::Value,
    pub received_ms: i64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WireError {
    #[error("unsupported schema version {0}")]
    UnsupportedSchema(u32),
    #[error("payload does not match kind {kind:?}: {message}")]
    MalformedPayload { kind: EventKind, message: String },
    #[error(transparent)]
    InvalidEvent(#[from] EventError),
    #[error("access log interval must have exit after entry")]
    InvalidInterval,
}

impl WireError {
    /// Stable machine-readable code used in rejection lists and error documents.
    pub fn code(&self) -> &'static str {
        match self {
            WireError::UnsupportedSchema(_) => "UnsupportedSchema",
            WireError::MalformedPayload { .. } => "MalformedPayload",
            WireError::InvalidEvent(EventError::InvalidEvent { .. }) => "InvalidEvent",
            WireError::InvalidEvent(EventError::SelfContact) => "SelfContact",
            WireError::InvalidEvent(EventError::BadConfidence(_)) => "BadConfidence",
            WireError::InvalidInterval => "InvalidInterval",
        }
    }
}

/// A device-side encounter whose peer is still only known by broadcast token.
/// The server resolves the token against its roster at ingestion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenizedProximity {
    pub reporter_hash: AssociateHash,
    pub peer_token: TokenBytes,
    pub epoch_index: i64,
    pub start_ms: i64,
    pub end_ms: i64,
    pub closeness: Closeness,
    pub peak_confidence: f64,
    pub ambience: Ambience,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProximityPayload {
    Resolved(ProximityEvent),
    Tokenized(TokenizedProximity),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InfectionStatus {
    #[default]
    Reported,
    Recovered,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfectionReport {
    pub associate_hash: AssociateHash,
    pub report_ms: i64,
    #[serde(default)]
    pub status: InfectionStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Proximity(ProximityPayload),
    AccessLog(AccessLogEntry),
    InfectionReport(InfectionReport),
    InfraSighting(InfraSighting),
}

impl Payload {
    pub fn kind(&self) -> EventKind {
        match self {
            Payload::Proximity(_) => EventKind::Proximity,
            Payload::AccessLog(_) => EventKind::AccessLog,
            Payload::InfectionReport(_) => EventKind::InfectionReport,
            Payload::InfraSighting(_) => EventKind::InfraSighting,
        }
    }
}

impl EventEnvelope {
    pub fn new(payload: &Payload, received_ms: i64) -> Self {
        let value = match payload {
            Payload::Proximity(p) => serde_json::to_value(p),
            Payload::AccessLog(p) => serde_json::to_value(p),
            Payload::InfectionReport(p) => serde_json::to_value(p),
            Payload::InfraSighting(p) => serde_json::to_value(p),
        }
        .expect("payload types serialize infallibly");
        EventEnvelope { schema_version: SCHEMA_VERSION, kind: payload.kind(), payload: value, received_ms }
    }

    pub fn proximity(event: &ProximityEvent, received_ms: i64) -> Self {
        Self::new(&Payload::Proximity(ProximityPayload::Resolved(event.clone())), received_ms)
    }

    /// Check the schema version and decode + validate the payload against `kind`.
    pub fn decode(&self) -> Result<Payload, WireError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(WireError::UnsupportedSchema(self.schema_version));
        }
        let malformed = |e: serde_json::Error| WireError::MalformedPayload { kind: self.kind, message: e.to_string() };
        let payload = match self.kind {
            EventKind::Proximity => {
                let p: ProximityPayload = serde_json::from_value(self.payload.clone()).map_err(malformed)?;
                match &p {
                    ProximityPayload::Resolved(e) => e.validate()?,
                    ProximityPayload::Tokenized(t) => {
                        if t.end_ms < t.start_ms {
                            return Err(EventError::InvalidEvent { start_ms: t.start_ms, end_ms: t.end_ms }.into());
                        }
                        if !(0.0..=1.0).contains(&t.peak_confidence) {
                            return Err(EventError::BadConfidence(t.peak_confidence).into());
                        }
                    }
                }
                Payload::Proximity(p)
            }
            EventKind::AccessLog => {
                let e: AccessLogEntry = serde_json::from_value(self.payload.clone()).map_err(malformed)?;
                if e.exit_ms <= e.entry_ms {
                    return Err(WireError::InvalidInterval);
                }
                Payload::AccessLog(e)
            }
            EventKind::InfectionReport => {
                Payload::InfectionReport(serde_json::from_value(self.payload.clone()).map_err(malformed)?)
            }
            EventKind::InfraSighting => Payload::InfraSighting(serde_json::from_value(self.payload.clone()).map_err(malformed)?),
        };
        Ok(payload)
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("envelope serializes infallibly")
    }
}
