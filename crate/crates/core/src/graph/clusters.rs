use serde::{Deserialize, Serialize};

use super::{edge_weight, ContactMultiGraph, RiskMap, RiskParams, TimeWindow};
use crate::identity::AssociateHash;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    /// Sorted by hash.
    pub members: Vec<AssociateHash>,
    pub cluster_risk: f64,
    /// `[earliest start, latest end]` over the component's qualifying edges;
    /// `None` for a single member with no such edge.
    pub span: Option<(i64, i64)>,
}

/// Union by size with path halving.
struct DisjointSet {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet { parent: (0..n as u32).collect(), size: vec![1; n] }
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let grand = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = grand;
            x = grand;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return;
        }
        if self.size[a as usize] < self.size[b as usize] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b as usize] = a;
        self.size[a as usize] += self.size[b as usize];
    }
}

/// Connected components over edges with `weight >= min_weight` that start
/// inside the risk window ending at the risk map's computation time. Keeps
/// components with at least `min_size` members, one of whom has a positive
/// score. Ordered by cluster risk (descending), then smallest member hash.
pub fn detect_clusters(
    graph: &ContactMultiGraph,
    risk: &RiskMap,
    params: &RiskParams,
    min_weight: f64,
    min_size: usize,
) -> Vec<Cluster> {
    let Some(now) = risk.values().map(|a| a.computed_at_ms).max() else {
        return Vec::new();
    };
    let window = TimeWindow { from_ms: now.saturating_sub(params.window_ms()), to_ms: now };

    let n = graph.node_count();
    let mut sets = DisjointSet::new(n);
    let mut qualifying = Vec::new();
    for e in graph.edges_in(window) {
        if edge_weight(e, params) >= min_weight {
            let a = graph.node_index(&e.peer_a).expect("edge endpoint is a node");
            let b = graph.node_index(&e.peer_b).expect("edge endpoint is a node");
            sets.union(a, b);
            qualifying.push((a, e.start_ms, e.end_ms));
        }
    }

    let mut groups: std::collections::HashMap<u32, (Vec<AssociateHash>, Option<(i64, i64)>)> =
        std::collections::HashMap::new();
    for i in 0..n as u32 {
        let root = sets.find(i);
        groups.entry(root).or_default().0.push(graph.node_at(i).associate_hash);
    }
    for (a, start, end) in qualifying {
        let root = sets.find(a);
        let span = &mut groups.get_mut(&root).expect("root has a group").1;
        *span = Some(span.map_or((start, end), |(s, e)| (s.min(start), e.max(end))));
    }

    let mut clusters: Vec<Cluster> = groups
        .into_values()
        .filter(|(members, _)| members.len() >= min_size.max(1))
        .filter_map(|(mut members, span)| {
            let cluster_risk = members.iter().filter_map(|m| risk.get(m)).map(|a| a.score).fold(0.0, f64::max);
            (cluster_risk > 0.0).then(|| {
                members.sort();
                Cluster { members, cluster_risk, span }
            })
        })
        .collect();
    clusters.sort_by(|x, y| y.cluster_risk.total_cmp(&x.cluster_risk).then_with(|| x.members[0].cmp(&y.members[0])));
    clusters
}
