//! Device-free zones: presence intervals from access-control logs or fixed BLE
//! infrastructure, turned into co-location contacts by per-zone sweep.

use std::collections::{BTreeMap, HashMap};
use std::io;

use serde::{Deserialize, Serialize};

use crate::event::{Ambience, Closeness, ProximityEvent};
use crate::identity::AssociateHash;

pub const DEFAULT_GAP_MS: i64 = 120_000;
pub const DEFAULT_MIN_DWELL_MS: i64 = 60_000;
pub const DEFAULT_MIN_OVERLAP_MS: i64 = 300_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZoneDef {
    pub zone_id: String,
    pub personal_devices_allowed: bool,
    pub capacity: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AccessLogEntry {
    pub associate_hash: AssociateHash,
    pub zone_id: String,
    pub entry_ms: i64,
    pub exit_ms: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InfraSighting {
    pub tag_id: String,
    pub zone_id: String,
    pub sighted_ms: i64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ZoneError {
    #[error("duplicate zone id {0:?}")]
    DuplicateZone(String),
    #[error("zone {0:?} must have capacity >= 1")]
    ZeroCapacity(String),
    #[error("unknown zone {0:?}")]
    UnknownZone(String),
    #[error("access interval for zone {zone:?} must have exit after entry")]
    InvalidInterval { zone: String },
    #[error("tag {0:?} is not enrolled")]
    UnenrolledTag(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
    #[error("csv: {0}")]
    Csv(String),
}

impl From<csv::Error> for ZoneError {
    fn from(e: csv::Error) -> Self {
        ZoneError::Csv(e.to_string())
    }
}

pub fn validate_zones(zones: &[ZoneDef]) -> Result<(), ZoneError> {
    let mut seen = std::collections::HashSet::new();
    for z in zones {
        if !seen.insert(z.zone_id.as_str()) {
            return Err(ZoneError::DuplicateZone(z.zone_id.clone()));
        }
        if z.capacity < 1 {
            return Err(ZoneError::ZeroCapacity(z.zone_id.clone()));
        }
    }
    Ok(())
}

pub fn validate_logs(logs: &[AccessLogEntry], zones: &[ZoneDef]) -> Result<(), ZoneError> {
    for entry in logs {
        if entry.exit_ms <= entry.entry_ms {
            return Err(ZoneError::InvalidInterval { zone: entry.zone_id.clone() });
        }
        if !zones.iter().any(|z| z.zone_id == entry.zone_id) {
            return Err(ZoneError::UnknownZone(entry.zone_id.clone()));
        }
    }
    Ok(())
}

/// Tag id → associate lookup for infrastructure tags.
pub type Enrollment = HashMap<String, AssociateHash>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SightingParams {
    pub gap_ms: i64,
    pub min_dwell_ms: i64,
}

impl Default for SightingParams {
    fn default() -> Self {
        SightingParams { gap_ms: DEFAULT_GAP_MS, min_dwell_ms: DEFAULT_MIN_DWELL_MS }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SightingIntervals {
    pub intervals: Vec<AccessLogEntry>,
    /// Sightings skipped because their tag had no enrollment.
    pub unenrolled: usize,
}

/// Merge per-(tag, zone) sightings no more than `gap_ms` apart into presence
/// intervals `[first, last]`. An isolated sighting at `t` becomes
/// `[t, t + min_dwell_ms]`.
pub fn sightings_to_intervals(
    sightings: &[InfraSighting],
    enrollment: &Enrollment,
    params: SightingParams,
) -> Result<SightingIntervals, ZoneError> {
    if params.gap_ms <= 0 {
        return Err(ZoneError::InvalidParameter("gap_ms must be positive"));
    }
    if params.min_dwell_ms <= 0 {
        return Err(ZoneError::InvalidParameter("min_dwell_ms must be positive"));
    }
    let mut unenrolled = 0;
    let mut grouped: BTreeMap<(AssociateHash, &str), Vec<i64>> = BTreeMap::new();
    for s in sightings {
        match enrollment.get(&s.tag_id) {
            Some(owner) => grouped.entry((*owner, s.zone_id.as_str())).or_default().push(s.sighted_ms),
            None => unenrolled += 1,
        }
    }

    let mut intervals = Vec::new();
    for ((owner, zone), mut times) in grouped {
        times.sort_unstable();
        let mut push = |first: i64, last: i64| {
            let exit_ms = if last > first { last } else { first + params.min_dwell_ms };
            intervals.push(AccessLogEntry { associate_hash: owner, zone_id: zone.to_string(), entry_ms: first, exit_ms });
        };
        let mut first = times[0];
        let mut last = times[0];
        for &t in &times[1..] {
            if t - last <= params.gap_ms {
                last = t;
            } else {
                push(first, last);
                first = t;
                last = t;
            }
        }
        push(first, last);
    }
    intervals.sort();
    Ok(SightingIntervals { intervals, unenrolled })
}

/// Co-location event for two intervals in the same zone, if they overlap by at
/// least `min_overlap_ms` and belong to different associates.
pub fn overlap_event(a: &AccessLogEntry, b: &AccessLogEntry, min_overlap_ms: i64) -> Option<ProximityEvent> {
    if a.zone_id != b.zone_id || a.associate_hash == b.associate_hash {
        return None;
    }
    let start = a.entry_ms.max(b.entry_ms);
    let end = a.exit_ms.min(b.exit_ms);
    (end - start >= min_overlap_ms).then(|| {
        ProximityEvent::new(a.associate_hash, b.associate_hash, start, end, Closeness::CoLocated, 1.0, Ambience::Indoor)
    })
}

/// All pairwise co-occupancy events, computed zone by zone with a sweep over
/// entry times. Output is sorted, so it does not depend on input order.
pub fn co_occupancy_events(logs: &[AccessLogEntry], min_overlap_ms: i64) -> Result<Vec<ProximityEvent>, ZoneError> {
    if min_overlap_ms <= 0 {
        return Err(ZoneError::InvalidParameter("min_overlap_ms must be positive"));
    }
    let mut by_zone: BTreeMap<&str, Vec<&AccessLogEntry>> = BTreeMap::new();
    for entry in logs {
        if entry.exit_ms <= entry.entry_ms {
            return Err(ZoneError::InvalidInterval { zone: entry.zone_id.clone() });
        }
        by_zone.entry(entry.zone_id.as_str()).or_default().push(entry);
    }

    let mut events = Vec::new();
    let mut active: Vec<&AccessLogEntry> = Vec::new();
    for (_, mut entries) in by_zone {
        entries.sort_by_key(|e| (e.entry_ms, e.exit_ms));
        active.clear();
        for entry in entries {
            // Anything that left before `entry + min_overlap` can no longer reach the bar.
            let horizon = entry.entry_ms + min_overlap_ms;
            active.retain(|a| a.exit_ms >= horizon);
            for other in &active {
                if let Some(ev) = overlap_event(other, entry, min_overlap_ms) {
                    events.push(ev);
                }
            }
            if entry.exit_ms >= horizon {
                active.push(entry);
            }
        }
    }
    sort_events(&mut events);
    Ok(events)
}

pub(crate) fn sort_events(events: &mut [ProximityEvent]) {
    events.sort_by(|x, y| {
        (x.start_ms, x.end_ms, x.peer_a_hash, x.peer_b_hash, x.closeness)
            .cmp(&(y.start_ms, y.end_ms, y.peer_a_hash, y.peer_b_hash, y.closeness))
    });
}

#[derive(Debug, Serialize, Deserialize)]
struct AccessRow(String, String, i64, i64);

/// Header-less CSV `associate_hash,zone_id,entry_ms,exit_ms`.
pub fn read_access_log<R: io::Read>(input: R) -> Result<Vec<AccessLogEntry>, ZoneError> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(input);
    let mut out = Vec::new();
    for row in r.deserialize() {
        let AccessRow(hash, zone_id, entry_ms, exit_ms) = row?;
        let associate_hash = hash.parse().map_err(|e: crate::identity::IdentityError| ZoneError::Csv(e.to_string()))?;
        out.push(AccessLogEntry { associate_hash, zone_id, entry_ms, exit_ms });
    }
    Ok(out)
}

pub fn write_access_log<W: io::Write>(logs: &[AccessLogEntry], out: W) -> Result<(), ZoneError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    for e in logs {
        w.serialize(AccessRow(e.associate_hash.to_hex(), e.zone_id.clone(), e.entry_ms, e.exit_ms))?;
    }
    w.flush().map_err(|e| ZoneError::Csv(e.to_string()))
}

/// Header-less CSV `tag_id,zone_id,sighted_ms`.
pub fn read_sightings<R: io::Read>(input: R) -> Result<Vec<InfraSighting>, ZoneError> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(input);
    let mut out = Vec::new();
    for row in r.deserialize() {
        let (tag_id, zone_id, sighted_ms): (String, String, i64) = row?;
        out.push(InfraSighting { tag_id, zone_id, sighted_ms });
    }
    Ok(out)
}

pub fn write_sightings<W: io::Write>(sightings: &[InfraSighting], out: W) -> Result<(), ZoneError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    for s in sightings {
        w.serialize((&s.tag_id, &s.zone_id, s.sighted_ms))?;
    }
    w.flush().map_err(|e| ZoneError::Csv(e.to_string()))
}
