//! Response documents for the query endpoints, computed from one [`Snapshot`].

use proxigraph_core::graph::{
    detect_clusters, trace_contacts, Cluster, Infection, RiskMap, RiskTier, TimeWindow, TraceResult,
};
use proxigraph_core::identity::default_alias;
use proxigraph_core::{Ambience, AssociateHash, Closeness};
use serde::{Deserialize, Serialize};

use crate::{ServiceError, Snapshot};

/// Upper bound on `levels` accepted from clients.
pub const MAX_TRACE_LEVELS: u32 = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceView {
    pub snapshot_id: u64,
    pub window: Option<TimeWindow>,
    #[serde(flatten)]
    pub trace: TraceResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskView {
    pub snapshot_id: u64,
    pub computed_ms: i64,
    pub risk: RiskMap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClustersView {
    pub snapshot_id: u64,
    pub min_weight: f64,
    pub min_size: usize,
    pub clusters: Vec<Cluster>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeView {
    pub associate_hash: AssociateHash,
    pub alias: String,
    pub tier: RiskTier,
    pub score: f64,
    pub infection: Infection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeView {
    pub edge_id: u64,
    pub peer_a: AssociateHash,
    pub peer_b: AssociateHash,
    pub start_ms: i64,
    pub end_ms: i64,
    pub weight: f64,
    pub closeness: Closeness,
    pub ambience: Ambience,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphView {
    pub snapshot_id: u64,
    pub window: Option<TimeWindow>,
    pub nodes: Vec<NodeView>,
    pub edges: Vec<EdgeView>,
}

impl Snapshot {
    pub fn trace(&self, source: &AssociateHash, levels: Option<u32>, window: Option<TimeWindow>) -> Result<TraceView, ServiceError> {
        let levels = levels.unwrap_or(self.default_trace_levels);
        if !(1..=MAX_TRACE_LEVELS).contains(&levels) {
            return Err(ServiceError::invalid("levels", format!("must be in 1..={MAX_TRACE_LEVELS}, got {levels}")));
        }
        let trace = trace_contacts(&self.graph, source, levels, window.unwrap_or(TimeWindow::ALL))?;
        Ok(TraceView { snapshot_id: self.snapshot_id, window, trace })
    }

    pub fn risk_view(&self) -> RiskView {
        RiskView { snapshot_id: self.snapshot_id, computed_ms: self.clock_ms, risk: self.risk.clone() }
    }

    pub fn clusters(&self, min_weight: f64, min_size: usize) -> Result<ClustersView, ServiceError> {
        if !(0.0..=1.0).contains(&min_weight) {
            return Err(ServiceError::invalid("min_weight", format!("must be in [0, 1], got {min_weight}")));
        }
        if min_size < 1 {
            return Err(ServiceError::invalid("min_size", "must be >= 1"));
        }
        let clusters = detect_clusters(&self.graph, &self.risk, &self.params, min_weight, min_size);
        Ok(ClustersView { snapshot_id: self.snapshot_id, min_weight, min_size, clusters })
    }

    /// Edges starting inside `window` and the nodes they touch, plus every
    /// node that is not healthy. Without a window, the whole graph.
    pub fn graph_view(&self, window: Option<TimeWindow>) -> GraphView {
        let w = window.unwrap_or(TimeWindow::ALL);
        let edges: Vec<EdgeView> = self
            .graph
            .edges_in(w)
            .map(|e| EdgeView {
                edge_id: e.edge_id,
                peer_a: e.peer_a,
                peer_b: e.peer_b,
                start_ms: e.start_ms,
                end_ms: e.end_ms,
                weight: e.weight,
                closeness: e.closeness,
                ambience: e.ambience,
            })
            .collect();
        let touched: std::collections::HashSet<AssociateHash> = edges.iter().flat_map(|e| [e.peer_a, e.peer_b]).collect();
        let mut nodes: Vec<NodeView> = self
            .graph
            .nodes()
            .filter(|n| window.is_none() || touched.contains(&n.associate_hash) || n.infection != Infection::Healthy)
            .map(|n| {
                let (score, tier) = self.risk.get(&n.associate_hash).map_or((0.0, RiskTier::None), |a| (a.score, a.tier));
                NodeView {
                    associate_hash: n.associate_hash,
                    alias: default_alias(&n.associate_hash),
                    tier,
                    score,
                    infection: n.infection,
                }
            })
            .collect();
        nodes.sort_by(|a, b| a.associate_hash.cmp(&b.associate_hash));
        GraphView { snapshot_id: self.snapshot_id, window, nodes, edges }
    }
}
