//! Temporal contact multi-graph.
//!
//! Associates are nodes; every accepted proximity event is its own edge, so a
//! pair that met three times has three parallel edges. Analytics only follow
//! time-respecting paths: successive edges along a path have non-decreasing
//! start times.

mod clusters;
mod risk;
mod trace;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use clusters::{detect_clusters, Cluster};
pub use risk::{at_risk_notifications, propagate_risk, RiskAssessment, RiskMap, RiskTier};
pub use trace::{trace_contacts, TraceEntry, TraceResult};

use crate::event::{Ambience, Closeness, ProximityEvent};
use crate::identity::AssociateHash;

pub type EdgeId = u64;

pub const MS_PER_DAY: i64 = 86_400_000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GraphError {
    #[error("event ends before it starts ({start_ms} > {end_ms})")]
    InvalidEvent { start_ms: i64, end_ms: i64 },
    #[error("event pairs an associate with itself")]
    SelfContact,
    #[error("unknown associate {0}")]
    UnknownAssociate(AssociateHash),
    #[error("invalid time window [{from_ms}, {to_ms}]")]
    InvalidWindow { from_ms: i64, to_ms: i64 },
    #[error("invalid risk parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassFactors {
    pub near: f64,
    pub co_located: f64,
}

impl ClassFactors {
    pub fn get(&self, c: Closeness) -> f64 {
        match c {
            Closeness::Near => self.near,
            Closeness::CoLocated => self.co_located,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmbienceFactors {
    pub indoor: f64,
    pub outdoor: f64,
    pub air_conditioned: f64,
    pub crowded: f64,
    pub unknown: f64,
}

impl AmbienceFactors {
    pub fn get(&self, a: Ambience) -> f64 {
        match a {
            Ambience::Indoor => self.indoor,
            Ambience::Outdoor => self.outdoor,
            Ambience::AirConditioned => self.air_conditioned,
            Ambience::Crowded => self.crowded,
            Ambience::Unknown => self.unknown,
        }
    }
}

/// Risk model parameters. The numeric defaults are tunable choices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RiskParams {
    /// Attenuation applied per hop.
    pub beta_hop: f64,
    /// Contact duration (minutes) at which the duration term saturates.
    pub d_sat_min: f64,
    pub class_factor: ClassFactors,
    pub ambience_factor: AmbienceFactors,
    pub window_days: i64,
    pub max_levels: u32,
    pub tier_high: f64,
    pub tier_medium: f64,
}

impl Default for RiskParams {
    fn default() -> Self {
        RiskParams {
            beta_hop: 0.5,
            d_sat_min: 15.0,
            class_factor: ClassFactors { near: 1.0, co_located: 0.4 },
            ambience_factor: AmbienceFactors { indoor: 0.8, outdoor: 0.5, air_conditioned: 1.0, crowded: 1.0, unknown: 0.8 },
            window_days: 14,
            max_levels: 3,
            tier_high: 0.5,
            tier_medium: 0.2,
        }
    }
}

impl RiskParams {
    pub fn validate(&self) -> Result<(), GraphError> {
        let unit = |name: &str, v: f64| {
            if v > 0.0 && v <= 1.0 {
                Ok(())
            } else {
                Err(GraphError::InvalidParams(format!("{name} = {v} not in (0, 1]")))
            }
        };
        unit("beta_hop", self.beta_hop)?;
        unit("class_factor.near", self.class_factor.near)?;
        unit("class_factor.co_located", self.class_factor.co_located)?;
        for a in Ambience::ALL {
            unit("ambience_factor", self.ambience_factor.get(a))?;
        }
        if !(self.d_sat_min > 0.0 && self.d_sat_min.is_finite()) {
            return Err(GraphError::InvalidParams(format!("d_sat_min = {}", self.d_sat_min)));
        }
        if self.window_days < 0 {
            return Err(GraphError::InvalidParams(format!("window_days = {}", self.window_days)));
        }
        if self.max_levels < 1 {
            return Err(GraphError::InvalidParams("max_levels must be >= 1".into()));
        }
        if !(0.0 < self.tier_medium && self.tier_medium <= self.tier_high) {
            return Err(GraphError::InvalidParams("tier thresholds must satisfy 0 < medium <= high".into()));
        }
        Ok(())
    }

    pub fn window_ms(&self) -> i64 {
        self.window_days * MS_PER_DAY
    }
}

/// Inclusive time window over edge start times.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub from_ms: i64,
    pub to_ms: i64,
}

impl TimeWindow {
    pub const ALL: TimeWindow = TimeWindow { from_ms: i64::MIN, to_ms: i64::MAX };

    pub fn new(from_ms: i64, to_ms: i64) -> Result<Self, GraphError> {
        if to_ms < from_ms {
            return Err(GraphError::InvalidWindow { from_ms, to_ms });
        }
        Ok(TimeWindow { from_ms, to_ms })
    }

    pub fn contains(&self, t: i64) -> bool {
        self.from_ms <= t && t <= self.to_ms
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum Infection {
    Healthy,
    Reported { report_ms: i64 },
    Recovered { cleared_ms: i64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactNode {
    pub associate_hash: AssociateHash,
    pub attributes: BTreeMap<String, String>,
    pub infection: Infection,
    pub risk: Option<RiskAssessment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactEdge {
    pub edge_id: EdgeId,
    pub peer_a: AssociateHash,
    pub peer_b: AssociateHash,
    pub start_ms: i64,
    pub end_ms: i64,
    pub duration_min: f64,
    pub closeness: Closeness,
    pub ambience: Ambience,
    pub peak_confidence: f64,
    pub weight: f64,
}

impl ContactEdge {
    pub fn other(&self, me: &AssociateHash) -> AssociateHash {
        if *me == self.peer_a {
            self.peer_b
        } else {
            self.peer_a
        }
    }
}

/// `min(1, duration / saturation) × class factor × ambience factor`.
pub fn edge_weight(edge: &ContactEdge, params: &RiskParams) -> f64 {
    let duration = (edge.duration_min / params.d_sat_min).clamp(0.0, 1.0);
    duration * params.class_factor.get(edge.closeness) * params.ambience_factor.get(edge.ambience)
}

type DedupKey = (AssociateHash, AssociateHash, i64, i64, Closeness);

#[derive(Debug, Clone, Default)]
pub struct ContactMultiGraph {
    params: RiskParams,
    nodes: Vec<ContactNode>,
    index: HashMap<AssociateHash, u32>,
    edges: Vec<ContactEdge>,
    ends: Vec<(u32, u32)>,
    /// Per node, incident edge ids sorted by (start_ms, edge_id).
    adjacency: Vec<Vec<EdgeId>>,
    /// All edge ids sorted by (start_ms, edge_id).
    by_start: Vec<EdgeId>,
    dedup: HashMap<DedupKey, EdgeId>,
}

impl ContactMultiGraph {
    pub fn new(params: RiskParams) -> Result<Self, GraphError> {
        params.validate()?;
        Ok(ContactMultiGraph { params, ..Default::default() })
    }

    pub fn params(&self) -> &RiskParams {
        &self.params
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn nodes(&self) -> impl Iterator<Item = &ContactNode> {
        self.nodes.iter()
    }

    pub fn node(&self, hash: &AssociateHash) -> Option<&ContactNode> {
        self.index.get(hash).map(|&i| &self.nodes[i as usize])
    }

    pub fn contains(&self, hash: &AssociateHash) -> bool {
        self.index.contains_key(hash)
    }

    pub fn edge(&self, id: EdgeId) -> Option<&ContactEdge> {
        self.edges.get(id as usize)
    }

    pub fn edges(&self) -> impl Iterator<Item = &ContactEdge> {
        self.edges.iter()
    }

    /// Edges with start time inside `window`, in start-time order.
    pub fn edges_in(&self, window: TimeWindow) -> impl Iterator<Item = &ContactEdge> {
        let lo = self.by_start.partition_point(|&id| self.edges[id as usize].start_ms < window.from_ms);
        self.by_start[lo..]
            .iter()
            .map(|&id| &self.edges[id as usize])
            .take_while(move |e| e.start_ms <= window.to_ms)
    }

    pub fn incident(&self, hash: &AssociateHash) -> &[EdgeId] {
        self.index.get(hash).map_or(&[], |&i| &self.adjacency[i as usize])
    }

    pub(crate) fn node_index(&self, hash: &AssociateHash) -> Option<u32> {
        self.index.get(hash).copied()
    }

    pub(crate) fn node_at(&self, idx: u32) -> &ContactNode {
        &self.nodes[idx as usize]
    }

    pub(crate) fn adjacency_at(&self, idx: u32) -> &[EdgeId] {
        &self.adjacency[idx as usize]
    }

    pub(crate) fn edge_at(&self, id: EdgeId) -> &ContactEdge {
        &self.edges[id as usize]
    }

    /// Node index on the far side of edge `id` from node `idx`.
    pub(crate) fn across(&self, id: EdgeId, idx: u32) -> u32 {
        let (a, b) = self.ends[id as usize];
        if a == idx {
            b
        } else {
            a
        }
    }

    pub fn ensure_node(&mut self, hash: AssociateHash) -> u32 {
        if let Some(&i) = self.index.get(&hash) {
            return i;
        }
        let i = self.nodes.len() as u32;
        self.nodes.push(ContactNode { associate_hash: hash, attributes: BTreeMap::new(), infection: Infection::Healthy, risk: None });
        self.adjacency.push(Vec::new());
        self.index.insert(hash, i);
        i
    }

    pub fn set_attribute(&mut self, hash: AssociateHash, key: impl Into<String>, value: impl Into<String>) {
        let i = self.ensure_node(hash);
        self.nodes[i as usize].attributes.insert(key.into(), value.into());
    }

    pub fn set_infection(&mut self, hash: &AssociateHash, infection: Infection) -> Result<(), GraphError> {
        let i = self.node_index(hash).ok_or(GraphError::UnknownAssociate(*hash))?;
        self.nodes[i as usize].infection = infection;
        Ok(())
    }

    /// Store the latest assessment on each node it mentions.
    pub fn apply_risk(&mut self, risk: &RiskMap) {
        for node in &mut self.nodes {
            node.risk = risk.get(&node.associate_hash).copied();
        }
    }

    /// Append `event` as a new edge, creating endpoints as needed. An exact
    /// duplicate (pair, start, end, closeness) returns the existing edge id.
    pub fn add_contact_event(&mut self, event: &ProximityEvent) -> Result<EdgeId, GraphError> {
        if event.end_ms < event.start_ms {
            return Err(GraphError::InvalidEvent { start_ms: event.start_ms, end_ms: event.end_ms });
        }
        let event = event.clone().canonical();
        if event.peer_a_hash == event.peer_b_hash {
            return Err(GraphError::SelfContact);
        }
        let key = (event.peer_a_hash, event.peer_b_hash, event.start_ms, event.end_ms, event.closeness);
        if let Some(&id) = self.dedup.get(&key) {
            return Ok(id);
        }

        let a = self.ensure_node(event.peer_a_hash);
        let b = self.ensure_node(event.peer_b_hash);
        let id = self.edges.len() as EdgeId;
        let mut edge = ContactEdge {
            edge_id: id,
            peer_a: event.peer_a_hash,
            peer_b: event.peer_b_hash,
            start_ms: event.start_ms,
            end_ms: event.end_ms,
            duration_min: (event.end_ms - event.start_ms) as f64 / 60_000.0,
            closeness: event.closeness,
            ambience: event.ambience,
            peak_confidence: event.peak_confidence,
            weight: 0.0,
        };
        edge.weight = edge_weight(&edge, &self.params);
        let start = edge.start_ms;
        self.edges.push(edge);
        self.ends.push((a, b));

        let edges = &self.edges;
        let key_of = |&e: &EdgeId| (edges[e as usize].start_ms, e);
        for node in [a, b] {
            let list = &mut self.adjacency[node as usize];
            let pos = list.partition_point(|e| key_of(e) < (start, id));
            list.insert(pos, id);
        }
        let pos = self.by_start.partition_point(|e| key_of(e) < (start, id));
        self.by_start.insert(pos, id);
        self.dedup.insert(key, id);
        Ok(id)
    }

    /// Order-independent description of the graph content: nodes with their
    /// attributes and infection state, and the multiset of edges without ids.
    pub fn canonical_content(&self) -> (Vec<(AssociateHash, BTreeMap<String, String>, Infection)>, Vec<String>) {
        let mut nodes: Vec<_> =
            self.nodes.iter().map(|n| (n.associate_hash, n.attributes.clone(), n.infection)).collect();
        nodes.sort_by(|x, y| x.0.cmp(&y.0));
        let mut edges: Vec<String> = self
            .edges
            .iter()
            .map(|e| {
                format!(
                    "{}|{}|{}|{}|{:?}|{:?}|{:?}|{:?}",
                    e.peer_a, e.peer_b, e.start_ms, e.end_ms, e.closeness, e.ambience, e.peak_confidence, e.weight
                )
            })
            .collect();
        edges.sort();
        (nodes, edges)
    }

    /// SHA-256 over [`Self::canonical_content`], hex-encoded.
    pub fn content_digest(&self) -> String {
        let (nodes, edges) = self.canonical_content();
        let mut h = Sha256::new();
        for (hash, attrs, infection) in nodes {
            h.update(hash.as_bytes());
            for (k, v) in attrs {
                h.update(k.as_bytes());
                h.update([0]);
                h.update(v.as_bytes());
                h.update([0]);
            }
            h.update(format!("{infection:?}").as_bytes());
            h.update([0xff]);
        }
        for e in edges {
            h.update(e.as_bytes());
            h.update([0xfe]);
        }
        hex::encode(h.finalize())
    }
}
