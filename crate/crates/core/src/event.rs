//! Resolved pairwise encounters, the unit exchanged between devices and the server.

use serde::{Deserialize, Serialize};

use crate::identity::AssociateHash;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Ambience {
    Indoor,
    Outdoor,
    AirConditioned,
    Crowded,
    #[default]
    Unknown,
}

impl Ambience {
    pub const ALL: [Ambience; 5] = [
        Ambience::Indoor,
        Ambience::Outdoor,
        Ambience::AirConditioned,
        Ambience::Crowded,
        Ambience::Unknown,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Closeness {
    /// Measured on-device below the social-distance threshold.
    Near,
    /// Shared presence in a zone, from access logs or infrastructure sightings.
    CoLocated,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EventError {
    #[error("event ends before it starts ({start_ms} > {end_ms})")]
    InvalidEvent { start_ms: i64, end_ms: i64 },
    #[error("event pairs an associate with itself")]
    SelfContact,
    #[error("peak confidence {0} outside [0, 1]")]
    BadConfidence(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProximityEvent {
    pub peer_a_hash: AssociateHash,
    pub peer_b_hash: AssociateHash,
    pub start_ms: i64,
    pub end_ms: i64,
    pub closeness: Closeness,
    pub peak_confidence: f64,
    pub ambience: Ambience,
}

impl ProximityEvent {
    /// Build an event with the pair put in canonical (ascending) order.
    pub fn new(
        a: AssociateHash,
        b: AssociateHash,
        start_ms: i64,
        end_ms: i64,
        closeness: Closeness,
        peak_confidence: f64,
        ambience: Ambience,
    ) -> Self {
        let (peer_a_hash, peer_b_hash) = if a <= b { (a, b) } else { (b, a) };
        ProximityEvent { peer_a_hash, peer_b_hash, start_ms, end_ms, closeness, peak_confidence, ambience }
    }

    pub fn validate(&self) -> Result<(), EventError> {
        if self.end_ms < self.start_ms {
            return Err(EventError::InvalidEvent { start_ms: self.start_ms, end_ms: self.end_ms });
        }
        if self.peer_a_hash == self.peer_b_hash {
            return Err(EventError::SelfContact);
        }
        if !(0.0..=1.0).contains(&self.peak_confidence) {
            return Err(EventError::BadConfidence(self.peak_confidence));
        }
        Ok(())
    }

    /// Same event with the pair in canonical order, if it was submitted reversed.
    pub fn canonical(mut self) -> Self {
        if self.peer_b_hash < self.peer_a_hash {
            std::mem::swap(&mut self.peer_a_hash, &mut self.peer_b_hash);
        }
        self
    }

    pub fn duration_ms(&self) -> i64 {
        self.end_ms - self.start_ms
    }

    pub fn overlaps(&self, start_ms: i64, end_ms: i64) -> bool {
        self.start_ms < end_ms && start_ms < self.end_ms
    }
}
