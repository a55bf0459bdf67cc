use std::path::Path;

use proxigraph_core::graph::{RiskParams, RiskTier};
use proxigraph_core::identity::{DEFAULT_ROTATION_MS, DEFAULT_SKEW_EPOCHS};
use proxigraph_core::zone::{DEFAULT_GAP_MS, DEFAULT_MIN_DWELL_MS, DEFAULT_MIN_OVERLAP_MS};
use serde::{Deserialize, Serialize};

use crate::ServiceError;

/// Server settings, read from a TOML file. Every key is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub risk: RiskParams,
    pub rotation_ms: i64,
    pub skew_epochs: i64,
    /// Minimum shared time in a device-free zone before it counts as a contact.
    pub min_overlap_ms: i64,
    pub sighting_gap_ms: i64,
    pub sighting_min_dwell_ms: i64,
    /// Used by `GET /v1/trace` when `levels` is omitted.
    pub default_trace_levels: u32,
    /// Tier at or above which a risk increase is reported as newly at risk.
    pub notify_tier: RiskTier,
    /// Write a snapshot manifest after this many accepted events.
    pub snapshot_every: u64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            risk: RiskParams::default(),
            rotation_ms: DEFAULT_ROTATION_MS,
            skew_epochs: DEFAULT_SKEW_EPOCHS,
            min_overlap_ms: DEFAULT_MIN_OVERLAP_MS,
            sighting_gap_ms: DEFAULT_GAP_MS,
            sighting_min_dwell_ms: DEFAULT_MIN_DWELL_MS,
            default_trace_levels: 3,
            notify_tier: RiskTier::Medium,
            snapshot_every: 1000,
        }
    }
}

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<Self, ServiceError> {
        let config: ServiceConfig = toml::from_str(text).map_err(|e| ServiceError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ServiceError> {
        let text = std::fs::read_to_string(path).map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), ServiceError> {
        self.risk.validate().map_err(|e| ServiceError::Config(e.to_string()))?;
        let positive = [
            ("rotation_ms", self.rotation_ms),
            ("min_overlap_ms", self.min_overlap_ms),
            ("sighting_gap_ms", self.sighting_gap_ms),
            ("sighting_min_dwell_ms", self.sighting_min_dwell_ms),
        ];
        for (name, v) in positive {
            if v <= 0 {
                return Err(ServiceError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.skew_epochs < 0 {
            return Err(ServiceError::Config(format!("skew_epochs must be >= 0, got {}", self.skew_epochs)));
        }
        if self.default_trace_levels < 1 {
            return Err(ServiceError::Config("default_trace_levels must be >= 1".into()));
        }
        if self.notify_tier == RiskTier::None {
            return Err(ServiceError::Config("notify_tier must be low, medium or high".into()));
        }
        if self.snapshot_every == 0 {
            return Err(ServiceError::Config("snapshot_every must be >= 1".into()));
        }
        Ok(())
    }
}
