//! Slow, obviously-correct reference implementations used as test oracles,
//! plus random fixture generators. Nothing here shares code with the
//! algorithms it checks beyond the public data types.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use proxigraph_core::graph::{
    Cluster, ContactEdge, ContactMultiGraph, EdgeId, Infection, RiskMap, RiskParams, TimeWindow, MS_PER_DAY,
};
use proxigraph_core::identity::hash_identity;
use proxigraph_core::sim::GroundTruth;
use proxigraph_core::zone::AccessLogEntry;
use proxigraph_core::{Ambience, AssociateHash, Closeness, ProximityEvent};
use rand::Rng;

pub const HOUR_MS: i64 = 3_600_000;

pub fn hash(name: &str) -> AssociateHash {
    hash_identity(name, &[0x5a; 16]).expect("non-empty").associate_hash
}

// ---------------------------------------------------------------- graphs

/// Random contact events and infection states for a small node set. Events
/// have distinct dedup keys, so any insertion order builds the same graph.
#[derive(Debug, Clone)]
pub struct GraphFixture {
    pub nodes: Vec<AssociateHash>,
    pub events: Vec<ProximityEvent>,
    pub infections: Vec<(AssociateHash, Infection)>,
    pub now_ms: i64,
}

impl GraphFixture {
    /// Coarse start times (so ties are common) over twelve days, with a mix of
    /// fresh, stale, recovered and healthy nodes.
    pub fn random<R: Rng>(rng: &mut R, max_nodes: usize, max_edges: usize) -> Self {
        let now_ms = 12 * MS_PER_DAY;
        let n = rng.random_range(1..=max_nodes);
        let m = rng.random_range(0..=max_edges);
        let nodes: Vec<AssociateHash> = (0..n).map(|i| hash(&format!("node-{i}"))).collect();
        let mut events: Vec<ProximityEvent> = Vec::new();
        if n >= 2 {
            while events.len() < m {
                let a = rng.random_range(0..n);
                let mut b = rng.random_range(0..n - 1);
                if b >= a {
                    b += 1;
                }
                let start = rng.random_range(0..24) * 12 * HOUR_MS;
                let end = start + rng.random_range(1..=30) * 60_000;
                let closeness = if rng.random_bool(0.7) { Closeness::Near } else { Closeness::CoLocated };
                let ambience = Ambience::ALL[rng.random_range(0..Ambience::ALL.len())];
                let ev =
                    ProximityEvent::new(nodes[a], nodes[b], start, end, closeness, rng.random_range(0.5..1.0), ambience);
                let key = |e: &ProximityEvent| (e.peer_a_hash, e.peer_b_hash, e.start_ms, e.end_ms, e.closeness);
                if events.iter().all(|x| key(x) != key(&ev)) {
                    events.push(ev);
                }
            }
        }
        let infections = nodes
            .iter()
            .map(|h| {
                let roll: f64 = rng.random();
                let state = if roll < 0.2 {
                    Infection::Reported { report_ms: now_ms - rng.random_range(0..20) * MS_PER_DAY }
                } else if roll < 0.3 {
                    Infection::Recovered { cleared_ms: now_ms }
                } else {
                    Infection::Healthy
                };
                (*h, state)
            })
            .collect();
        GraphFixture { nodes, events, infections, now_ms }
    }

    pub fn build(&self) -> ContactMultiGraph {
        self.build_from(&self.events)
    }

    /// Same nodes and infections, edges inserted in the given order.
    pub fn build_from(&self, events: &[ProximityEvent]) -> ContactMultiGraph {
        let mut g = ContactMultiGraph::default();
        for h in &self.nodes {
            g.ensure_node(*h);
        }
        for e in events {
            g.add_contact_event(e).expect("valid event");
        }
        for (h, state) in &self.infections {
            g.set_infection(h, *state).expect("node exists");
        }
        g
    }
}

fn oracle_weight(e: &ContactEdge, p: &RiskParams) -> f64 {
    let minutes = (e.end_ms - e.start_ms) as f64 / 60_000.0;
    let class = match e.closeness {
        Closeness::Near => p.class_factor.near,
        Closeness::CoLocated => p.class_factor.co_located,
    };
    let ambience = match e.ambience {
        Ambience::Indoor => p.ambience_factor.indoor,
        Ambience::Outdoor => p.ambience_factor.outdoor,
        Ambience::AirConditioned => p.ambience_factor.air_conditioned,
        Ambience::Crowded => p.ambience_factor.crowded,
        Ambience::Unknown => p.ambience_factor.unknown,
    };
    (minutes / p.d_sat_min).min(1.0) * class * ambience
}

/// Calls `visit(node, path)` for every simple
/// time-respecting path from `source` with at most `max_hops` edges drawn
/// from `edges` (including the empty path).
fn for_each_path<'a>(
    edges: &[&'a ContactEdge],
    source: AssociateHash,
    max_hops: usize,
    visit: &mut dyn FnMut(AssociateHash, &[&'a ContactEdge]),
) {
    fn walk<'a>(
        edges: &[&'a ContactEdge],
        at: AssociateHash,
        on_path: &mut Vec<AssociateHash>,
        path: &mut Vec<&'a ContactEdge>,
        max_hops: usize,
        visit: &mut dyn FnMut(AssociateHash, &[&'a ContactEdge]),
    ) {
        visit(at, path);
        if path.len() == max_hops {
            return;
        }
        let after = path.last().map_or(i64::MIN, |e| e.start_ms);
        for &e in edges {
            if e.start_ms < after || (e.peer_a != at && e.peer_b != at) {
                continue;
            }
            let next = e.other(&at);
            if on_path.contains(&next) {
                continue;
            }
            on_path.push(next);
            path.push(e);
            walk(edges, next, on_path, path, max_hops, visit);
            path.pop();
            on_path.pop();
        }
    }
    walk(edges, source, &mut vec![source], &mut Vec::new(), max_hops, visit);
}

/// Level and via-edge set per reached associate, by exhaustive path enumeration.
pub fn trace_oracle(
    graph: &ContactMultiGraph,
    source: AssociateHash,
    max_levels: u32,
    window: TimeWindow,
) -> BTreeMap<AssociateHash, (usize, BTreeSet<EdgeId>)> {
    let edges: Vec<&ContactEdge> =
        graph.edges().filter(|e| window.from_ms <= e.start_ms && e.start_ms <= window.to_ms).collect();
    let mut out: BTreeMap<AssociateHash, (usize, BTreeSet<EdgeId>)> = BTreeMap::new();
    for_each_path(&edges, source, max_levels as usize, &mut |node, path| {
        let hops = path.len();
        let entry = out.entry(node).or_insert((hops, BTreeSet::new()));
        if hops < entry.0 {
            *entry = (hops, BTreeSet::new());
        }
        if hops == entry.0 {
            if let Some(last) = path.last() {
                entry.1.insert(last.edge_id);
            }
        }
    });
    out
}

/// Score per associate: best product of `beta × weight` over all simple
/// time-respecting paths from a live report, within the risk window.
pub fn risk_oracle(graph: &ContactMultiGraph, params: &RiskParams, now_ms: i64) -> BTreeMap<AssociateHash, f64> {
    best_paths(graph, params, now_ms).into_iter().map(|(h, (s, _))| (h, s)).collect()
}

/// Like [`risk_oracle`], also returning the hop count of the shortest path
/// achieving the best score (0 for sources and unreached nodes).
pub fn best_paths(graph: &ContactMultiGraph, params: &RiskParams, now_ms: i64) -> BTreeMap<AssociateHash, (f64, usize)> {
    let window = params.window_days * MS_PER_DAY;
    let sources: Vec<(AssociateHash, i64)> = graph
        .nodes()
        .filter_map(|n| match n.infection {
            Infection::Reported { report_ms } if now_ms - report_ms <= window => Some((n.associate_hash, report_ms)),
            _ => None,
        })
        .collect();
    let mut best: BTreeMap<AssociateHash, (f64, usize)> = graph.nodes().map(|n| (n.associate_hash, (0.0, 0))).collect();
    if let Some(earliest) = sources.iter().map(|s| s.1).min() {
        let lo = earliest - window;
        let edges: Vec<&ContactEdge> = graph.edges().filter(|e| lo <= e.start_ms && e.start_ms <= now_ms).collect();
        for (src, _) in &sources {
            for_each_path(&edges, *src, params.max_levels as usize, &mut |node, path| {
                let s: f64 = path.iter().map(|e| params.beta_hop * oracle_weight(e, params)).product();
                let slot = best.get_mut(&node).expect("node exists");
                if s > slot.0 || (s == slot.0 && s > 0.0 && path.len() < slot.1) {
                    *slot = (s, path.len());
                }
            });
        }
    }
    for n in graph.nodes() {
        if matches!(n.infection, Infection::Recovered { .. }) {
            best.insert(n.associate_hash, (0.0, 0));
        }
    }
    best
}

/// Quick-find components (relabel on every union) over qualifying edges.
pub fn clusters_oracle(
    graph: &ContactMultiGraph,
    risk: &RiskMap,
    params: &RiskParams,
    min_weight: f64,
    min_size: usize,
) -> Vec<Cluster> {
    let Some(now) = risk.values().map(|a| a.computed_at_ms).max() else {
        return Vec::new();
    };
    let from = now - params.window_days * MS_PER_DAY;
    let nodes: Vec<AssociateHash> = graph.nodes().map(|n| n.associate_hash).collect();
    let mut label: HashMap<AssociateHash, usize> = nodes.iter().enumerate().map(|(i, h)| (*h, i)).collect();
    let qualifying: Vec<&ContactEdge> = graph
        .edges()
        .filter(|e| from <= e.start_ms && e.start_ms <= now && oracle_weight(e, params) >= min_weight)
        .collect();
    for e in &qualifying {
        let (la, lb) = (label[&e.peer_a], label[&e.peer_b]);
        if la != lb {
            for l in label.values_mut() {
                if *l == lb {
                    *l = la;
                }
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<AssociateHash>> = BTreeMap::new();
    for h in &nodes {
        groups.entry(label[h]).or_default().push(*h);
    }
    let mut out: Vec<Cluster> = Vec::new();
    for (l, mut members) in groups {
        members.sort();
        let cluster_risk = members.iter().map(|m| risk.get(m).map_or(0.0, |a| a.score)).fold(0.0, f64::max);
        if members.len() < min_size.max(1) || cluster_risk <= 0.0 {
            continue;
        }
        let mut span: Option<(i64, i64)> = None;
        for e in qualifying.iter().filter(|e| label[&e.peer_a] == l) {
            span = Some(span.map_or((e.start_ms, e.end_ms), |(s, t)| (s.min(e.start_ms), t.max(e.end_ms))));
        }
        out.push(Cluster { members, cluster_risk, span });
    }
    out.sort_by(|x, y| y.cluster_risk.total_cmp(&x.cluster_risk).then(x.members[0].cmp(&y.members[0])));
    out
}

// ---------------------------------------------------------------- zones

pub fn random_access_logs<R: Rng>(rng: &mut R, count: usize, zones: usize, associates: usize) -> Vec<AccessLogEntry> {
    let people: Vec<AssociateHash> = (0..associates).map(|i| hash(&format!("badge-{i}"))).collect();
    (0..count)
        .map(|_| {
            let entry = rng.random_range(0..8 * HOUR_MS);
            AccessLogEntry {
                associate_hash: people[rng.random_range(0..associates)],
                zone_id: format!("zone-{}", rng.random_range(0..zones)),
                entry_ms: entry,
                exit_ms: entry + rng.random_range(1..90 * 60_000),
            }
        })
        .collect()
}

/// Every qualifying pair of intervals, checked directly. Sorted.
pub fn co_occupancy_oracle(logs: &[AccessLogEntry], min_overlap_ms: i64) -> Vec<ProximityEvent> {
    let mut out = Vec::new();
    for i in 0..logs.len() {
        for j in i + 1..logs.len() {
            let (a, b) = (&logs[i], &logs[j]);
            if a.zone_id != b.zone_id || a.associate_hash == b.associate_hash {
                continue;
            }
            let start = a.entry_ms.max(b.entry_ms);
            let end = a.exit_ms.min(b.exit_ms);
            if end - start >= min_overlap_ms {
                out.push(ProximityEvent::new(
                    a.associate_hash,
                    b.associate_hash,
                    start,
                    end,
                    Closeness::CoLocated,
                    1.0,
                    Ambience::Indoor,
                ));
            }
        }
    }
    sort_events(&mut out);
    out
}

pub fn sort_events(events: &mut [ProximityEvent]) {
    events.sort_by(|x, y| {
        (x.peer_a_hash, x.peer_b_hash, x.start_ms, x.end_ms).cmp(&(y.peer_a_hash, y.peer_b_hash, y.start_ms, y.end_ms))
    });
}

// ---------------------------------------------------------------- detection scoring

/// `(precision, recall)` by re-deriving episodes tick by tick and matching
/// every event against every episode.
pub fn detection_oracle(
    events: &[ProximityEvent],
    truth: &GroundTruth,
    near_threshold_m: f64,
    min_dwell_ms: i64,
) -> (f64, f64) {
    let n = truth.agents.len();
    let close = |t: usize, i: usize, j: usize| {
        truth.radio_on(t, i) && truth.radio_on(t, j) && truth.distance(t, i, j) < near_threshold_m
    };
    let mut episodes: Vec<(AssociateHash, AssociateHash, i64, i64)> = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i == j || truth.agents[i] > truth.agents[j] {
                continue;
            }
            for t in 0..truth.ticks {
                // a run starts at t when t is close and t - 1 is not
                if !close(t, i, j) || (t > 0 && close(t - 1, i, j)) {
                    continue;
                }
                let mut end = t;
                while end < truth.ticks && close(end, i, j) {
                    end += 1;
                }
                let (s, e) = (truth.tick_ms(t), truth.tick_ms(end));
                if e - s >= min_dwell_ms {
                    episodes.push((truth.agents[i], truth.agents[j], s, e));
                }
            }
        }
    }
    let matches = |ev: &ProximityEvent, ep: &(AssociateHash, AssociateHash, i64, i64)| {
        let pair = (ev.peer_a_hash.min(ev.peer_b_hash), ev.peer_a_hash.max(ev.peer_b_hash));
        pair == (ep.0, ep.1) && ev.start_ms < ep.3 && ep.2 < ev.end_ms
    };
    let matched_events = events.iter().filter(|ev| episodes.iter().any(|ep| matches(ev, ep))).count();
    let matched_episodes = episodes.iter().filter(|ep| events.iter().any(|ev| matches(ev, ep))).count();
    let precision = if events.is_empty() { 1.0 } else { matched_events as f64 / events.len() as f64 };
    let recall = if episodes.is_empty() { 1.0 } else { matched_episodes as f64 / episodes.len() as f64 };
    (precision, recall)
}
