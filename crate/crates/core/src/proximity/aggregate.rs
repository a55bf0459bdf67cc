use std::collections::{BTreeMap, BTreeSet};

use super::{ObservationWindow, ProximityVerdict};
use crate::event::{Ambience, Closeness, ProximityEvent};
use crate::identity::{AssociateHash, EpochResolver, TokenBytes};

/// Maps an observed broadcast token to the associate that owns it.
pub trait TokenResolver {
    fn resolve(&self, token: &TokenBytes, observed_ms: i64) -> Option<AssociateHash>;
}

impl<F> TokenResolver for F
where
    F: Fn(&TokenBytes, i64) -> Option<AssociateHash>,
{
    fn resolve(&self, token: &TokenBytes, observed_ms: i64) -> Option<AssociateHash> {
        self(token, observed_ms)
    }
}

impl TokenResolver for EpochResolver {
    fn resolve(&self, token: &TokenBytes, observed_ms: i64) -> Option<AssociateHash> {
        self.resolve_at(token, observed_ms)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AggregateOutput {
    pub events: Vec<ProximityEvent>,
    /// Distinct tokens that no roster entry explains (visitors, foreign devices).
    pub unresolved_tokens: usize,
}

#[derive(Debug, Clone, Copy)]
struct Slot {
    start: i64,
    end: i64,
    near: bool,
    confidence: f64,
    ambience: Ambience,
}

/// Fold per-window verdicts from `own`'s device into proximity events.
///
/// Windows are grouped by the associate their token resolves to, so token
/// rotation does not split an encounter. A maximal run of Near windows becomes
/// one event; a Far window ends the run, and so does a gap of more than one
/// missing slide between Near windows.
pub fn aggregate_events<R: TokenResolver + ?Sized>(
    own: AssociateHash,
    windows_verdicts: &[(ObservationWindow, ProximityVerdict)],
    resolver: &R,
    slide_ms: i64,
) -> AggregateOutput {
    let mut unresolved = BTreeSet::new();
    let mut per_peer: BTreeMap<AssociateHash, BTreeMap<i64, Slot>> = BTreeMap::new();
    for (window, verdict) in windows_verdicts {
        let observed = window.samples.first().map_or(window.window_start_ms, |s| s.timestamp_ms);
        let Some(peer) = resolver.resolve(&window.peer_token, observed) else {
            unresolved.insert(window.peer_token);
            continue;
        };
        if peer == own {
            continue;
        }
        let slot = Slot {
            start: window.window_start_ms,
            end: window.end_ms(),
            near: verdict.is_near(),
            confidence: verdict.confidence,
            ambience: window.samples.first().map_or(Ambience::Unknown, |s| s.ambience),
        };
        // Two tokens of the same peer can share a window across a rotation boundary.
        per_peer
            .entry(peer)
            .or_default()
            .entry(slot.start)
            .and_modify(|s| {
                s.near |= slot.near;
                s.confidence = s.confidence.max(slot.confidence);
                s.end = s.end.max(slot.end);
            })
            .or_insert(slot);
    }

    let mut events = Vec::new();
    for (peer, slots) in per_peer {
        let mut run: Option<(Slot, i64, f64)> = None; // (first, last_end, peak)
        let mut last_near_start = i64::MIN;
        let close = |run: &mut Option<(Slot, i64, f64)>, events: &mut Vec<ProximityEvent>| {
            if let Some((first, end, peak)) = run.take() {
                events.push(ProximityEvent::new(own, peer, first.start, end, Closeness::Near, peak, first.ambience));
            }
        };
        for slot in slots.values() {
            if !slot.near {
                close(&mut run, &mut events);
                continue;
            }
            match run.as_mut() {
                Some((_, end, peak)) if slot.start - last_near_start <= 2 * slide_ms => {
                    *end = (*end).max(slot.end);
                    *peak = peak.max(slot.confidence);
                }
                _ => {
                    close(&mut run, &mut events);
                    run = Some((*slot, slot.end, slot.confidence));
                }
            }
            last_near_start = slot.start;
        }
        close(&mut run, &mut events);
    }
    crate::zone::sort_events(&mut events);
    AggregateOutput { events, unresolved_tokens: unresolved.len() }
}
