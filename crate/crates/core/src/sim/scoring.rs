use std::collections::HashMap;

use serde::Serialize;

use super::GroundTruth;
use crate::event::ProximityEvent;
use crate::identity::AssociateHash;

/// A maximal run of ticks during which a pair was closer than the threshold
/// with both radios on. Covers `[start_ms, end_ms)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Episode {
    pub peer_a_hash: AssociateHash,
    pub peer_b_hash: AssociateHash,
    pub start_ms: i64,
    pub end_ms: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DetectionScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub events: usize,
    pub episodes: usize,
    pub matched_events: usize,
    pub matched_episodes: usize,
}

/// Ground-truth episodes lasting at least `min_true_dwell_ms`, sorted by
/// pair then start.
pub fn episodes(truth: &GroundTruth, near_threshold_m: f64, min_true_dwell_ms: i64) -> Vec<Episode> {
    let n = truth.agents.len();
    let mut out = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let mut run_start: Option<usize> = None;
            for tick in 0..=truth.ticks {
                let close = tick < truth.ticks
                    && truth.radio_on(tick, i)
                    && truth.radio_on(tick, j)
                    && truth.distance(tick, i, j) < near_threshold_m;
                match (close, run_start) {
                    (true, None) => run_start = Some(tick),
                    (false, Some(s)) => {
                        let (start_ms, end_ms) = (truth.tick_ms(s), truth.tick_ms(tick));
                        if end_ms - start_ms >= min_true_dwell_ms {
                            let (a, b) = order(truth.agents[i], truth.agents[j]);
                            out.push(Episode { peer_a_hash: a, peer_b_hash: b, start_ms, end_ms });
                        }
                        run_start = None;
                    }
                    _ => {}
                }
            }
        }
    }
    out.sort_by_key(|e| (e.peer_a_hash, e.peer_b_hash, e.start_ms));
    out
}

fn order(a: AssociateHash, b: AssociateHash) -> (AssociateHash, AssociateHash) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// An event matches an episode of the same pair when their intervals
/// overlap. Precision is 1 with no events; recall is 1 with no episodes.
pub fn score_detection(
    events: &[ProximityEvent],
    truth: &GroundTruth,
    near_threshold_m: f64,
    min_true_dwell_ms: i64,
) -> DetectionScore {
    let eps = episodes(truth, near_threshold_m, min_true_dwell_ms);
    let mut by_pair: HashMap<(AssociateHash, AssociateHash), Vec<usize>> = HashMap::new();
    for (k, e) in eps.iter().enumerate() {
        by_pair.entry((e.peer_a_hash, e.peer_b_hash)).or_default().push(k);
    }
    let mut episode_hit = vec![false; eps.len()];
    let mut matched_events = 0;
    for ev in events {
        let key = order(ev.peer_a_hash, ev.peer_b_hash);
        let mut hit = false;
        for &k in by_pair.get(&key).map(Vec::as_slice).unwrap_or_default() {
            if ev.start_ms < eps[k].end_ms && eps[k].start_ms < ev.end_ms {
                episode_hit[k] = true;
                hit = true;
            }
        }
        matched_events += usize::from(hit);
    }
    let matched_episodes = episode_hit.iter().filter(|&&h| h).count();
    let precision = if events.is_empty() { 1.0 } else { matched_events as f64 / events.len() as f64 };
    let recall = if eps.is_empty() { 1.0 } else { matched_episodes as f64 / eps.len() as f64 };
    let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
    DetectionScore {
        precision,
        recall,
        f1,
        events: events.len(),
        episodes: eps.len(),
        matched_events,
        matched_episodes,
    }
}
