use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{ChannelParams, SimError};
use crate::event::Ambience;
use crate::identity::{hash_identity, AssociateHash, DEFAULT_ROTATION_MS};
use crate::proximity::{Geofence, TX_POWER_RANGE};
use crate::zone::{validate_zones, ZoneDef};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub x: f64,
    pub y: f64,
    pub dwell_ms: i64,
}

impl Waypoint {
    pub fn new(x: f64, y: f64, dwell_ms: i64) -> Self {
        Waypoint { x, y, dwell_ms }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub associate_hash: AssociateHash,
    pub device_present: bool,
    pub speed_mps: f64,
    /// The first waypoint is the start position.
    pub waypoints: Vec<Waypoint>,
}

/// A zone footprint: `rect = [x0, y0, x1, y1]`, bounds inclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneArea {
    #[serde(flatten)]
    pub zone: ZoneDef,
    pub rect: [f64; 4],
}

impl ZoneArea {
    pub fn contains(&self, (x, y): (f64, f64)) -> bool {
        let [x0, y0, x1, y1] = self.rect;
        x >= x0 && x <= x1 && y >= y0 && y <= y1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Workspace {
    pub width_m: f64,
    pub height_m: f64,
    #[serde(default)]
    pub zones: Vec<ZoneArea>,
    #[serde(default)]
    pub geofence: Option<Geofence>,
}

impl Workspace {
    pub fn contains(&self, (x, y): (f64, f64)) -> bool {
        x >= 0.0 && y >= 0.0 && x <= self.width_m && y <= self.height_m
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub seed: u64,
    pub duration_ms: i64,
    pub sample_period_ms: i64,
    pub rotation_ms: i64,
    pub ambience: Ambience,
    /// Inclusive range for the per-device tx-power offset, in whole dB.
    pub tx_offset_range_db: (i32, i32),
    pub workspace: Workspace,
    pub channel: ChannelParams,
    pub agents: Vec<Agent>,
}

impl Scenario {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidScenario(m));
        if self.duration_ms <= 0 || self.sample_period_ms <= 0 || self.rotation_ms <= 0 {
            return bad("duration, sample period and rotation must be positive".into());
        }
        let ws = &self.workspace;
        if !(ws.width_m > 0.0 && ws.height_m > 0.0) || !ws.width_m.is_finite() || !ws.height_m.is_finite() {
            return bad("workspace dimensions must be positive".into());
        }
        let defs: Vec<ZoneDef> = ws.zones.iter().map(|z| z.zone.clone()).collect();
        validate_zones(&defs).map_err(|e| SimError::InvalidScenario(e.to_string()))?;
        for z in &ws.zones {
            let [x0, y0, x1, y1] = z.rect;
            if !(x0 <= x1 && y0 <= y1) || z.rect.iter().any(|v| !v.is_finite()) {
                return bad(format!("zone {} has an empty footprint", z.zone.zone_id));
            }
        }
        let (lo, hi) = self.tx_offset_range_db;
        if lo > hi {
            return bad(format!("tx offset range [{lo}, {hi}] is empty"));
        }
        let base = self.channel.tx_power_dbm.round() as i32;
        if !TX_POWER_RANGE.contains(&(base + lo)) || !TX_POWER_RANGE.contains(&(base + hi)) {
            return bad("advertised tx power would leave the valid range".into());
        }
        self.channel.validate()?;
        let mut seen = HashSet::new();
        for (i, a) in self.agents.iter().enumerate() {
            if !seen.insert(a.associate_hash) {
                return bad(format!("agent {i} duplicates an earlier associate"));
            }
            if !(a.speed_mps > 0.0) || !a.speed_mps.is_finite() {
                return bad(format!("agent {i} speed must be positive"));
            }
            if a.waypoints.is_empty() {
                return bad(format!("agent {i} has no waypoints"));
            }
            for w in &a.waypoints {
                if !ws.contains((w.x, w.y)) {
                    return bad(format!("agent {i} waypoint ({}, {}) lies outside the workspace", w.x, w.y));
                }
                if w.dwell_ms < 0 {
                    return bad(format!("agent {i} has a negative dwell"));
                }
            }
        }
        Ok(())
    }

    pub fn ticks(&self) -> usize {
        (self.duration_ms / self.sample_period_ms) as usize
    }

    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        let file: ScenarioFile = toml::from_str(text).map_err(|e| SimError::InvalidScenario(e.to_string()))?;
        file.into_scenario()
    }
}

fn default_period() -> i64 {
    1000
}

fn default_rotation() -> i64 {
    DEFAULT_ROTATION_MS
}

fn default_speed() -> f64 {
    1.2
}

fn default_true() -> bool {
    true
}

fn default_ambience() -> Ambience {
    Ambience::Indoor
}

fn default_offsets() -> (i32, i32) {
    (-8, 4)
}

/// One agent as written in a scenario file. Give either an enterprise `id`
/// (hashed with the file's `org_salt`) or a precomputed `hash`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub id: Option<String>,
    pub hash: Option<AssociateHash>,
    #[serde(default = "default_true")]
    pub device_present: bool,
    #[serde(default = "default_speed")]
    pub speed_mps: f64,
    /// `[x, y, dwell_ms]` triples.
    pub waypoints: Vec<(f64, f64, i64)>,
}

/// Generated office layout instead of an explicit agent list.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateSpec {
    pub agents: usize,
}

/// The TOML scenario document. See the README for the schema.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub seed: u64,
    pub duration_ms: i64,
    #[serde(default = "default_period")]
    pub sample_period_ms: i64,
    #[serde(default = "default_rotation")]
    pub rotation_ms: i64,
    #[serde(default = "default_ambience")]
    pub ambience: Ambience,
    #[serde(default = "default_offsets")]
    pub tx_offset_range_db: (i32, i32),
    /// 32 hex chars; all zeros when absent.
    pub org_salt: Option<String>,
    pub workspace: Option<Workspace>,
    #[serde(default)]
    pub channel: ChannelParams,
    #[serde(default)]
    pub agents: Vec<AgentSpec>,
    pub generate: Option<GenerateSpec>,
}

impl ScenarioFile {
    pub fn into_scenario(self) -> Result<Scenario, SimError> {
        let bad = |m: &str| SimError::InvalidScenario(m.to_string());
        let mut scenario = match (&self.generate, self.agents.is_empty()) {
            (Some(g), true) => super::office_scenario(self.seed, g.agents, self.duration_ms),
            (None, _) => Scenario {
                seed: self.seed,
                duration_ms: self.duration_ms,
                sample_period_ms: self.sample_period_ms,
                rotation_ms: self.rotation_ms,
                ambience: self.ambience,
                tx_offset_range_db: self.tx_offset_range_db,
                workspace: self.workspace.clone().ok_or_else(|| bad("missing [workspace]"))?,
                channel: self.channel,
                agents: Vec::new(),
            },
            (Some(_), false) => return Err(bad("give either [generate] or [[agents]], not both")),
        };
        if self.generate.is_some() {
            scenario.sample_period_ms = self.sample_period_ms;
            scenario.rotation_ms = self.rotation_ms;
            scenario.ambience = self.ambience;
            scenario.tx_offset_range_db = self.tx_offset_range_db;
            scenario.channel = self.channel;
            if self.workspace.is_some() {
                return Err(bad("generated scenarios use the built-in office workspace"));
            }
        }

        let salt = match &self.org_salt {
            None => [0u8; 16],
            Some(h) => {
                let bytes = hex::decode(h).map_err(|_| bad("org_salt must be hex"))?;
                bytes.try_into().map_err(|_| bad("org_salt must be 16 bytes"))?
            }
        };
        for spec in self.agents {
            let associate_hash = match (&spec.id, spec.hash) {
                (Some(id), None) => hash_identity(id, &salt).map_err(|e| SimError::InvalidScenario(e.to_string()))?.associate_hash,
                (None, Some(h)) => h,
                _ => return Err(bad("each agent needs exactly one of id or hash")),
            };
            scenario.agents.push(Agent {
                associate_hash,
                device_present: spec.device_present,
                speed_mps: spec.speed_mps,
                waypoints: spec.waypoints.iter().map(|&(x, y, d)| Waypoint::new(x, y, d)).collect(),
            });
        }
        scenario.validate()?;
        Ok(scenario)
    }
}
