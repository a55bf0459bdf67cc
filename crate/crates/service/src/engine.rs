//! Single-writer state: the contact graph plus everything needed to keep it
//! in step with the event stream. No I/O happens here.

use std::collections::{HashMap, HashSet};

use proxigraph_core::graph::{
    at_risk_notifications, propagate_risk, ContactMultiGraph, GraphError, Infection, RiskMap, RiskParams,
};
use proxigraph_core::identity::{derive_token, DeviceSecret, TokenBytes};
use proxigraph_core::wire::{EventEnvelope, InfectionStatus, Payload, ProximityPayload};
use proxigraph_core::zone::{
    co_occupancy_events, overlap_event, sightings_to_intervals, AccessLogEntry, Enrollment, InfraSighting,
    SightingParams,
};
use proxigraph_core::{AssociateHash, ProximityEvent};
use serde::Serialize;

use crate::ServiceConfig;

/// Why one envelope of a batch was not accepted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Rejection {
    pub index: usize,
    pub code: String,
    pub message: String,
}

impl Rejection {
    fn new(code: &str, message: impl Into<String>) -> Self {
        Rejection { index: 0, code: code.to_string(), message: message.into() }
    }
}

/// Result of one risk recomputation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiskOutcome {
    pub computed_ms: i64,
    pub assessed_count: usize,
    /// Associates whose tier rose to the notification tier, excluding reported cases.
    pub newly_at_risk: Vec<AssociateHash>,
}

/// Lazily built per-epoch token tables over the device roster.
#[derive(Debug, Default)]
struct TokenDirectory {
    roster: Vec<DeviceSecret>,
    skew: i64,
    epochs: HashMap<i64, HashMap<TokenBytes, AssociateHash>>,
}

const MAX_CACHED_EPOCHS: usize = 4096;

impl TokenDirectory {
    fn resolve(&mut self, token: &TokenBytes, observed_epoch: i64) -> Option<AssociateHash> {
        if self.epochs.len() > MAX_CACHED_EPOCHS {
            self.epochs.clear();
        }
        for epoch in observed_epoch.saturating_sub(self.skew)..=observed_epoch.saturating_add(self.skew) {
            let roster = &self.roster;
            let table = self
                .epochs
                .entry(epoch)
                .or_insert_with(|| roster.iter().map(|s| (derive_token(s, epoch).token, s.owner)).collect());
            if let Some(owner) = table.get(token) {
                return Some(*owner);
            }
        }
        None
    }
}

#[derive(Debug, Default)]
struct Pending {
    changed: bool,
    sightings_changed: bool,
    infection_changed: bool,
}

#[derive(Debug)]
pub(crate) struct Engine {
    config: ServiceConfig,
    tokens: TokenDirectory,
    enrollment: Enrollment,
    graph: ContactMultiGraph,
    proximity: Vec<ProximityEvent>,
    logs: HashMap<String, Vec<AccessLogEntry>>,
    seen_logs: HashSet<AccessLogEntry>,
    sightings: Vec<InfraSighting>,
    seen_sightings: HashSet<InfraSighting>,
    intervals: Vec<AccessLogEntry>,
    risk: RiskMap,
    risk_clock_ms: i64,
    clock_ms: i64,
    pending: Pending,
}

impl Engine {
    pub fn new(config: ServiceConfig, roster: Vec<DeviceSecret>, enrollment: Enrollment) -> Result<Self, GraphError> {
        let graph = ContactMultiGraph::new(config.risk)?;
        let skew = config.skew_epochs;
        Ok(Engine {
            config,
            tokens: TokenDirectory { roster, skew, epochs: HashMap::new() },
            enrollment,
            graph,
            proximity: Vec::new(),
            logs: HashMap::new(),
            seen_logs: HashSet::new(),
            sightings: Vec::new(),
            seen_sightings: HashSet::new(),
            intervals: Vec::new(),
            risk: RiskMap::new(),
            risk_clock_ms: i64::MIN,
            clock_ms: 0,
            pending: Pending::default(),
        })
    }

    pub fn graph(&self) -> &ContactMultiGraph {
        &self.graph
    }

    pub fn risk(&self) -> &RiskMap {
        &self.risk
    }

    pub fn clock_ms(&self) -> i64 {
        self.clock_ms
    }

    pub fn params(&self) -> &RiskParams {
        &self.config.risk
    }

    /// Validate and apply one envelope. On success returns the form to
    /// persist: tokenized proximity payloads are stored resolved, so replay
    /// never depends on the roster.
    pub fn accept(&mut self, envelope: EventEnvelope) -> Result<EventEnvelope, Rejection> {
        let payload = envelope.decode().map_err(|e| Rejection::new(e.code(), e.to_string()))?;
        let stored = match payload {
            Payload::Proximity(ProximityPayload::Resolved(event)) => {
                self.add_proximity(&event)?;
                envelope
            }
            Payload::Proximity(ProximityPayload::Tokenized(t)) => {
                let peer = self.tokens.resolve(&t.peer_token, t.epoch_index).ok_or_else(|| {
                    Rejection::new("UnresolvedToken", format!("token {} matches no roster device near epoch {}", t.peer_token, t.epoch_index))
                })?;
                let event =
                    ProximityEvent::new(t.reporter_hash, peer, t.start_ms, t.end_ms, t.closeness, t.peak_confidence, t.ambience);
                event.validate().map_err(|e| Rejection::new(wire_code(&e), e.to_string()))?;
                self.add_proximity(&event)?;
                EventEnvelope::proximity(&event, envelope.received_ms)
            }
            Payload::AccessLog(entry) => {
                self.add_access_log(entry);
                envelope
            }
            Payload::InfraSighting(sighting) => {
                if !self.enrollment.contains_key(&sighting.tag_id) {
                    return Err(Rejection::new("UnenrolledTag", format!("tag {:?} is not enrolled", sighting.tag_id)));
                }
                if self.seen_sightings.insert(sighting.clone()) {
                    self.sightings.push(sighting);
                    self.pending.sightings_changed = true;
                }
                envelope
            }
            Payload::InfectionReport(report) => {
                let infection = match report.status {
                    InfectionStatus::Reported => Infection::Reported { report_ms: report.report_ms },
                    InfectionStatus::Recovered => Infection::Recovered { cleared_ms: report.report_ms },
                };
                let current = self.graph.node(&report.associate_hash).map(|n| n.infection);
                match current {
                    None => {
                        return Err(Rejection::new(
                            "UnknownAssociate",
                            format!("unknown associate {}", report.associate_hash),
                        ))
                    }
                    Some(c) if c != infection => {
                        self.graph.set_infection(&report.associate_hash, infection).expect("node exists");
                        self.pending.infection_changed = true;
                    }
                    Some(_) => {}
                }
                self.clock_ms = self.clock_ms.max(report.report_ms);
                envelope
            }
        };
        self.clock_ms = self.clock_ms.max(stored.received_ms);
        Ok(stored)
    }

    fn add_proximity(&mut self, event: &ProximityEvent) -> Result<(), Rejection> {
        let before = self.graph.edge_count();
        self.graph.add_contact_event(event).map_err(|e| Rejection::new(graph_code(&e), e.to_string()))?;
        if self.graph.edge_count() > before {
            self.proximity.push(event.clone());
            self.pending.changed = true;
        }
        Ok(())
    }

    fn add_access_log(&mut self, entry: AccessLogEntry) {
        if !self.seen_logs.insert(entry.clone()) {
            return;
        }
        if !self.graph.contains(&entry.associate_hash) {
            self.graph.ensure_node(entry.associate_hash);
            self.pending.changed = true;
        }
        let zone_logs = self.logs.entry(entry.zone_id.clone()).or_default();
        let zone_intervals = self.intervals.iter().filter(|i| i.zone_id == entry.zone_id);
        let events: Vec<_> =
            zone_logs.iter().chain(zone_intervals).filter_map(|o| overlap_event(&entry, o, self.config.min_overlap_ms)).collect();
        zone_logs.push(entry);
        for e in events {
            let before = self.graph.edge_count();
            self.graph.add_contact_event(&e).expect("overlap events are valid");
            self.pending.changed |= self.graph.edge_count() > before;
        }
    }

    /// Close a batch: fold sightings into intervals (rebuilding the graph if
    /// they moved), then recompute risk if anything changed. Risk is always
    /// `propagate_risk(graph, clock)` after this returns.
    pub fn finish_batch(&mut self) -> Option<RiskOutcome> {
        let pending = std::mem::take(&mut self.pending);
        let mut changed = pending.changed || pending.infection_changed;
        if pending.sightings_changed {
            let params =
                SightingParams { gap_ms: self.config.sighting_gap_ms, min_dwell_ms: self.config.sighting_min_dwell_ms };
            let intervals = sightings_to_intervals(&self.sightings, &self.enrollment, params)
                .expect("config validated")
                .intervals;
            if intervals != self.intervals {
                self.intervals = intervals;
                self.rebuild();
                changed = true;
            }
        }
        if !changed && self.risk_clock_ms == self.clock_ms {
            return None;
        }
        let risk = propagate_risk(&self.graph, &self.config.risk, self.clock_ms);
        let newly_at_risk: Vec<_> = at_risk_notifications(&risk, &self.risk, self.config.notify_tier)
            .into_iter()
            .filter(|h| !matches!(self.graph.node(h).map(|n| n.infection), Some(Infection::Reported { .. })))
            .collect();
        self.graph.apply_risk(&risk);
        let outcome = RiskOutcome { computed_ms: self.clock_ms, assessed_count: risk.len(), newly_at_risk };
        self.risk = risk;
        self.risk_clock_ms = self.clock_ms;
        Some(outcome)
    }

    /// Fresh graph from the retained proximity events and all zone presence,
    /// carrying node state over.
    fn rebuild(&mut self) {
        let mut graph = ContactMultiGraph::new(self.config.risk).expect("params validated");
        for node in self.graph.nodes() {
            graph.ensure_node(node.associate_hash);
            for (k, v) in &node.attributes {
                graph.set_attribute(node.associate_hash, k.clone(), v.clone());
            }
            graph.set_infection(&node.associate_hash, node.infection).expect("node just added");
        }
        for e in &self.proximity {
            graph.add_contact_event(e).expect("accepted before");
        }
        let presence: Vec<AccessLogEntry> = self.logs.values().flatten().chain(&self.intervals).cloned().collect();
        for i in &self.intervals {
            graph.ensure_node(i.associate_hash);
        }
        for e in co_occupancy_events(&presence, self.config.min_overlap_ms).expect("positive overlap") {
            graph.add_contact_event(&e).expect("overlap events are valid");
        }
        self.graph = graph;
    }
}

fn graph_code(e: &GraphError) -> &'static str {
    match e {
        GraphError::InvalidEvent { .. } => "InvalidEvent",
        GraphError::SelfContact => "SelfContact",
        GraphError::UnknownAssociate(_) => "UnknownAssociate",
        GraphError::InvalidWindow { .. } => "InvalidWindow",
        GraphError::InvalidParams(_) => "InvalidParams",
    }
}

fn wire_code(e: &proxigraph_core::event::EventError) -> &'static str {
    proxigraph_core::wire::WireError::InvalidEvent(e.clone()).code()
}
