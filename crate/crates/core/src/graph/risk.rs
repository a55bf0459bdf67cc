use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{edge_weight, ContactMultiGraph, Infection, RiskParams};
use crate::identity::AssociateHash;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskTier {
    None,
    Low,
    Medium,
    High,
}

impl RiskTier {
    pub fn from_score(score: f64, params: &RiskParams) -> Self {
        if score >= params.tier_high {
            RiskTier::High
        } else if score >= params.tier_medium {
            RiskTier::Medium
        } else if score > 0.0 {
            RiskTier::Low
        } else {
            RiskTier::None
        }
    }
}

impl std::str::FromStr for RiskTier {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(RiskTier::None),
            "low" => Ok(RiskTier::Low),
            "medium" => Ok(RiskTier::Medium),
            "high" => Ok(RiskTier::High),
            other => Err(format!("unknown risk tier {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskAssessment {
    pub score: f64,
    pub tier: RiskTier,
    pub computed_at_ms: i64,
}

pub type RiskMap = BTreeMap<AssociateHash, RiskAssessment>;

/// Pareto set of (last edge start, score) states for one node: a state is kept
/// only if no other state is both no later and no weaker.
#[derive(Debug, Default)]
struct Front(Vec<(i64, f64)>);

impl Front {
    fn dominates(&self, t: i64, s: f64) -> bool {
        self.0.iter().any(|&(t0, s0)| t0 <= t && s0 >= s)
    }

    fn insert(&mut self, t: i64, s: f64) {
        self.0.retain(|&(t0, s0)| !(t <= t0 && s >= s0));
        self.0.push((t, s));
    }
}

/// Contagion score for every node.
///
/// Sources are nodes reported within `window_days` of `now_ms`; they score 1.
/// Any other node scores the maximum, over time-respecting paths of at most
/// `max_levels` edges that start at a source and use only edges starting in
/// `[earliest source report − window, now]`, of the product of
/// `beta_hop × weight` along the path. Recovered nodes relay risk but score 0.
///
/// States are expanded level by level. A state reached with more hops is
/// dropped when an earlier-or-equal time with an equal-or-higher score is
/// already known at that node, since it can only produce dominated extensions.
pub fn propagate_risk(graph: &ContactMultiGraph, params: &RiskParams, now_ms: i64) -> RiskMap {
    let window_ms = params.window_ms();
    let mut sources = Vec::new();
    let mut earliest_report = i64::MAX;
    for i in 0..graph.node_count() as u32 {
        if let Infection::Reported { report_ms } = graph.node_at(i).infection {
            if now_ms - report_ms <= window_ms {
                sources.push(i);
                earliest_report = earliest_report.min(report_ms);
            }
        }
    }

    let mut score = vec![0.0f64; graph.node_count()];
    if !sources.is_empty() {
        let lo = earliest_report.saturating_sub(window_ms);
        let hi = now_ms;
        let mut fronts: HashMap<u32, Front> = HashMap::new();
        let mut frontier: Vec<(u32, i64, f64)> = Vec::new();
        for &s in &sources {
            score[s as usize] = 1.0;
            fronts.entry(s).or_default().insert(i64::MIN, 1.0);
            frontier.push((s, i64::MIN, 1.0));
        }

        for _ in 0..params.max_levels {
            let mut next: BTreeMap<u32, Vec<(i64, f64)>> = BTreeMap::new();
            for &(u, t_u, s_u) in &frontier {
                let adj = graph.adjacency_at(u);
                let lower = t_u.max(lo);
                let first = adj.partition_point(|&e| graph.edge_at(e).start_ms < lower);
                for &e in &adj[first..] {
                    let edge = graph.edge_at(e);
                    if edge.start_ms > hi {
                        break;
                    }
                    let w = edge_weight(edge, params);
                    if w <= 0.0 {
                        continue;
                    }
                    next.entry(graph.across(e, u)).or_default().push((edge.start_ms, s_u * (params.beta_hop * w)));
                }
            }

            frontier.clear();
            for (v, mut states) in next {
                // earliest first, strongest first among equal times
                states.sort_by(|a, b| a.0.cmp(&b.0).then(b.1.total_cmp(&a.1)));
                let front = fronts.entry(v).or_default();
                for (t, s) in states {
                    if front.dominates(t, s) {
                        continue;
                    }
                    front.insert(t, s);
                    frontier.push((v, t, s));
                    let slot = &mut score[v as usize];
                    *slot = slot.max(s);
                }
            }
            if frontier.is_empty() {
                break;
            }
        }
    }

    let mut out = RiskMap::new();
    for i in 0..graph.node_count() as u32 {
        let node = graph.node_at(i);
        let s = match node.infection {
            Infection::Recovered { .. } => 0.0,
            _ => score[i as usize],
        };
        out.insert(node.associate_hash, RiskAssessment { score: s, tier: RiskTier::from_score(s, params), computed_at_ms: now_ms });
    }
    out
}

/// Associates whose tier rose to at least `threshold` since `previous`
/// (absent entries count as tier None). Sorted by hash.
pub fn at_risk_notifications(risk: &RiskMap, previous: &RiskMap, threshold: RiskTier) -> Vec<AssociateHash> {
    risk.iter()
        .filter(|(hash, now)| {
            let before = previous.get(hash).map_or(RiskTier::None, |a| a.tier);
            now.tier >= threshold && before < threshold
        })
        .map(|(hash, _)| *hash)
        .collect()
}
