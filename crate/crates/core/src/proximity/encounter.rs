use serde::{Deserialize, Serialize};

use super::ProximityVerdict;
use crate::identity::TokenBytes;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncounterPhase {
    Idle,
    Candidate,
    Alerting,
    Cooldown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncounterParams {
    /// Consecutive Near verdicts needed before alerting.
    pub consecutive_near: u32,
    pub cooldown_ms: i64,
}

impl Default for EncounterParams {
    fn default() -> Self {
        EncounterParams { consecutive_near: 2, cooldown_ms: 300_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncounterState {
    pub peer: TokenBytes,
    pub phase: EncounterPhase,
    pub consecutive_near: u32,
    pub phase_entered_ms: i64,
}

impl EncounterState {
    pub fn idle(peer: TokenBytes, now_ms: i64) -> Self {
        EncounterState { peer, phase: EncounterPhase::Idle, consecutive_near: 0, phase_entered_ms: now_ms }
    }

    fn enter(self, phase: EncounterPhase, consecutive_near: u32, now_ms: i64) -> Self {
        EncounterState { phase, consecutive_near, phase_entered_ms: now_ms, ..self }
    }
}

/// The alert record handed to the device UI layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterventionNotice {
    pub peer: TokenBytes,
    pub issued_ms: i64,
    pub confidence: f64,
}

/// One step of the per-peer alert state machine.
///
/// ```text
/// Idle      --Near-->               Candidate
/// Candidate --Near (k in a row)-->  Alerting   [notice]
/// Candidate --Far-->                Idle
/// Alerting  --Far-->                Cooldown
/// Cooldown  --cooldown elapsed-->   Idle, then the verdict is applied from Idle
/// ```
/// Everything else is a self-loop. `now_ms` earlier than `phase_entered_ms`
/// is clamped, so time never runs backwards inside the machine.
pub fn update_encounter(
    state: EncounterState,
    verdict: &ProximityVerdict,
    now_ms: i64,
    params: &EncounterParams,
) -> (EncounterState, Option<InterventionNotice>) {
    use EncounterPhase::*;
    let now_ms = now_ms.max(state.phase_entered_ms);
    let k = params.consecutive_near.max(1);

    let state = if state.phase == Cooldown && now_ms - state.phase_entered_ms >= params.cooldown_ms {
        state.enter(Idle, 0, now_ms)
    } else {
        state
    };

    let alert = |s: EncounterState| {
        let notice = InterventionNotice { peer: s.peer, issued_ms: now_ms, confidence: verdict.confidence };
        (s.enter(Alerting, k, now_ms), Some(notice))
    };

    match (state.phase, verdict.is_near()) {
        (Idle, true) if k == 1 => alert(state),
        (Idle, true) => (state.enter(Candidate, 1, now_ms), None),
        (Idle, false) => (state, None),
        (Candidate, true) => {
            let run = state.consecutive_near + 1;
            if run >= k {
                alert(state)
            } else {
                (EncounterState { consecutive_near: run, ..state }, None)
            }
        }
        (Candidate, false) => (state.enter(Idle, 0, now_ms), None),
        (Alerting, true) => (state, None),
        (Alerting, false) => (state.enter(Cooldown, 0, now_ms), None),
        (Cooldown, _) => (state, None),
    }
}
