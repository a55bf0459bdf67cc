use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{ContactMultiGraph, EdgeId, GraphError, TimeWindow};
use crate::identity::AssociateHash;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub associate_hash: AssociateHash,
    /// Edges that reach this associate at its level from the previous level.
    pub via_edge_ids: Vec<EdgeId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceResult {
    pub source: AssociateHash,
    /// `levels[k]` holds the associates whose shortest time-respecting path from
    /// the source has exactly `k` edges, sorted by hash. Trailing empty levels
    /// are omitted.
    pub levels: Vec<Vec<TraceEntry>>,
}

impl TraceResult {
    pub fn level(&self, k: usize) -> &[TraceEntry] {
        self.levels.get(k).map_or(&[], Vec::as_slice)
    }

    pub fn level_hashes(&self, k: usize) -> Vec<AssociateHash> {
        self.level(k).iter().map(|e| e.associate_hash).collect()
    }

    pub fn level_of(&self, hash: &AssociateHash) -> Option<usize> {
        self.levels.iter().position(|l| l.iter().any(|e| e.associate_hash == *hash))
    }

    pub fn contact_count(&self) -> usize {
        self.levels.iter().skip(1).map(Vec::len).sum()
    }
}

/// Multi-level contact tracing over time-respecting paths.
///
/// Level by level, keep for every node the earliest start time of the last
/// edge over all walks of that length. Extending from the earliest time
/// dominates extending from any later one, and a node state that is no
/// earlier than what a shorter walk already achieved cannot produce a new
/// minimum level, so it is dropped.
pub fn trace_contacts(
    graph: &ContactMultiGraph,
    source: &AssociateHash,
    max_levels: u32,
    window: TimeWindow,
) -> Result<TraceResult, GraphError> {
    if window.to_ms < window.from_ms {
        return Err(GraphError::InvalidWindow { from_ms: window.from_ms, to_ms: window.to_ms });
    }
    let src = graph.node_index(source).ok_or(GraphError::UnknownAssociate(*source))?;

    let mut best_time: HashMap<u32, i64> = HashMap::from([(src, i64::MIN)]);
    let mut frontier: Vec<(u32, i64)> = vec![(src, i64::MIN)];
    let mut levels = vec![vec![TraceEntry { associate_hash: *source, via_edge_ids: Vec::new() }]];

    for _ in 0..max_levels {
        let mut arrivals: HashMap<u32, i64> = HashMap::new();
        let mut newly: BTreeMap<AssociateHash, Vec<EdgeId>> = BTreeMap::new();
        for &(u, t_u) in &frontier {
            let adj = graph.adjacency_at(u);
            let lower = t_u.max(window.from_ms);
            let first = adj.partition_point(|&e| graph.edge_at(e).start_ms < lower);
            for &e in &adj[first..] {
                let start = graph.edge_at(e).start_ms;
                if start > window.to_ms {
                    break;
                }
                let v = graph.across(e, u);
                if !best_time.contains_key(&v) {
                    newly.entry(graph.node_at(v).associate_hash).or_default().push(e);
                }
                let slot = arrivals.entry(v).or_insert(i64::MAX);
                *slot = (*slot).min(start);
            }
        }

        frontier.clear();
        for (v, t) in arrivals {
            let best = best_time.entry(v).or_insert(i64::MAX);
            if t < *best {
                *best = t;
                frontier.push((v, t));
            }
        }
        if newly.is_empty() && frontier.is_empty() {
            break;
        }
        levels.push(
            newly
                .into_iter()
                .map(|(associate_hash, mut via)| {
                    via.sort_unstable();
                    via.dedup();
                    TraceEntry { associate_hash, via_edge_ids: via }
                })
                .collect(),
        );
        frontier.sort_unstable();
    }
    while levels.len() > 1 && levels.last().is_some_and(Vec::is_empty) {
        levels.pop();
    }
    Ok(TraceResult { source: *source, levels })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::{Ambience, Closeness, ProximityEvent};
    use crate::identity::hash_identity;

    fn h(name: &str) -> AssociateHash {
        hash_identity(name, &[4; 16]).unwrap().associate_hash
    }

    fn graph(edges: &[(&str, &str, i64)]) -> ContactMultiGraph {
        let mut g = ContactMultiGraph::default();
        for &(a, b, t) in edges {
            g.add_contact_event(&ProximityEvent::new(h(a), h(b), t, t + 600_000, Closeness::Near, 1.0, Ambience::Indoor))
                .unwrap();
        }
        g
    }

    #[test]
    fn isolated_source() {
        let mut g = ContactMultiGraph::default();
        g.ensure_node(h("a"));
        let r = trace_contacts(&g, &h("a"), 3, TimeWindow::ALL).unwrap();
        assert_eq!(r.levels.len(), 1);
        assert_eq!(r.level_hashes(0), vec![h("a")]);
    }

    #[test]
    fn in_order_chain() {
        let g = graph(&[("a", "b", 10), ("b", "c", 20)]);
        let r = trace_contacts(&g, &h("a"), 2, TimeWindow::ALL).unwrap();
        assert_eq!(r.level_hashes(1), vec![h("b")]);
        assert_eq!(r.level_hashes(2), vec![h("c")]);
        assert_eq!(r.level(2)[0].via_edge_ids, vec![1]);
    }

    #[test]
    fn out_of_order_chain_stops() {
        let g = graph(&[("a", "b", 20), ("b", "c", 10)]);
        let r = trace_contacts(&g, &h("a"), 2, TimeWindow::ALL).unwrap();
        assert_eq!(r.level_hashes(1), vec![h("b")]);
        assert!(r.level(2).is_empty());
    }

    #[test]
    fn later_level_with_earlier_time_still_extends() {
        // b is level 1 only via a late edge, but reachable at level 2 early via c;
        // d's edge from b sits between the two times.
        let g = graph(&[("a", "b", 100), ("a", "c", 1), ("c", "b", 2), ("b", "d", 50)]);
        let r = trace_contacts(&g, &h("a"), 3, TimeWindow::ALL).unwrap();
        assert_eq!(r.level_of(&h("b")), Some(1));
        assert_eq!(r.level_of(&h("d")), Some(3));
    }

    #[test]
    fn window_and_errors() {
        let g = graph(&[("a", "b", 10), ("b", "c", 20)]);
        let r = trace_contacts(&g, &h("a"), 3, TimeWindow::new(15, 100).unwrap()).unwrap();
        assert_eq!(r.levels.len(), 1);
        assert_eq!(trace_contacts(&g, &h("zz"), 2, TimeWindow::ALL), Err(GraphError::UnknownAssociate(h("zz"))));
        assert!(trace_contacts(&g, &h("a"), 2, TimeWindow { from_ms: 5, to_ms: 1 }).is_err());
    }

    #[test]
    fn equal_start_times_chain() {
        let g = graph(&[("a", "b", 10), ("b", "c", 10)]);
        let r = trace_contacts(&g, &h("a"), 2, TimeWindow::ALL).unwrap();
        assert_eq!(r.level_hashes(2), vec![h("c")]);
    }
}
