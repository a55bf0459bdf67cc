//! Per-device driver. Runs entirely offline: events are spooled to a local
//! line-record file and flushed FIFO whenever an uploader accepts them.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use super::{
    aggregate_events, classify_proximity, extract_features, make_windows, update_encounter, EncounterParams,
    EncounterState, Geofence, InterventionNotice, ProximityError, ProximityModel, ProximityVerdict, RssiSample,
    TokenResolver,
};
use crate::event::ProximityEvent;
use crate::identity::{AssociateHash, TokenBytes};
use crate::wire::EventEnvelope;

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub window_ms: i64,
    pub slide_ms: i64,
    pub encounter: EncounterParams,
    pub geofence: Option<Geofence>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig { window_ms: 10_000, slide_ms: 5_000, encounter: EncounterParams::default(), geofence: None }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PipelineOutput {
    pub notices: Vec<InterventionNotice>,
    pub events: Vec<ProximityEvent>,
    pub unresolved_tokens: usize,
    pub windows: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("upload failed: {0}")]
pub struct UploadError(pub String);

/// The device's connection to the trace service.
pub trait EventUploader {
    fn upload(&mut self, batch: &[EventEnvelope]) -> Result<(), UploadError>;
}

/// Append-only FIFO of pending envelopes, one JSON document per line.
#[derive(Debug)]
pub struct Spool {
    path: PathBuf,
}

impl Spool {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, ProximityError> {
        let path = path.as_ref().to_path_buf();
        OpenOptions::new().create(true).append(true).open(&path).map_err(spool_err)?;
        Ok(Spool { path })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn push(&self, envelopes: &[EventEnvelope]) -> Result<(), ProximityError> {
        if envelopes.is_empty() {
            return Ok(());
        }
        let mut f = OpenOptions::new().append(true).open(&self.path).map_err(spool_err)?;
        let mut buf = String::new();
        for e in envelopes {
            buf.push_str(&e.to_line());
            buf.push('\n');
        }
        f.write_all(buf.as_bytes()).map_err(spool_err)?;
        f.sync_data().map_err(spool_err)
    }

    pub fn pending(&self) -> Result<Vec<EventEnvelope>, ProximityError> {
        let f = File::open(&self.path).map_err(spool_err)?;
        let mut out = Vec::new();
        for line in BufReader::new(f).lines() {
            let line = line.map_err(spool_err)?;
            if line.trim().is_empty() {
                continue;
            }
            out.push(serde_json::from_str(&line).map_err(|e| ProximityError::Spool(e.to_string()))?);
        }
        Ok(out)
    }

    /// Hand every pending envelope to `uploader` in order. The spool is only
    /// cleared once the uploader has accepted the whole batch.
    pub fn flush(&self, uploader: &mut dyn EventUploader) -> Result<usize, ProximityError> {
        let pending = self.pending()?;
        if pending.is_empty() {
            return Ok(0);
        }
        match uploader.upload(&pending) {
            Ok(()) => {
                File::create(&self.path).map_err(spool_err)?.sync_data().map_err(spool_err)?;
                Ok(pending.len())
            }
            Err(_) => Ok(0),
        }
    }
}

fn spool_err(e: std::io::Error) -> ProximityError {
    ProximityError::Spool(e.to_string())
}

/// One device's proximity pipeline. Instances share nothing.
pub struct DevicePipeline<R> {
    pub own: AssociateHash,
    pub model: ProximityModel,
    pub config: PipelineConfig,
    resolver: R,
    states: HashMap<TokenBytes, EncounterState>,
}

impl<R: TokenResolver> DevicePipeline<R> {
    pub fn new(own: AssociateHash, model: ProximityModel, config: PipelineConfig, resolver: R) -> Self {
        DevicePipeline { own, model, config, resolver, states: HashMap::new() }
    }

    /// Scanning and advertising are enabled only inside the geofence (or always, without one).
    pub fn scanning_enabled(&self, position: (f64, f64)) -> bool {
        self.config.geofence.as_ref().is_none_or(|g| g.contains(position))
    }

    pub fn classify_windows(
        &self,
        stream: &[RssiSample],
    ) -> Result<Vec<(super::ObservationWindow, ProximityVerdict)>, ProximityError> {
        let windows = make_windows(stream, self.config.window_ms, self.config.slide_ms)?;
        windows
            .into_iter()
            .map(|w| {
                let f = extract_features(&w, self.model.reference_tx_power)?;
                let v = classify_proximity(&f, &self.model)?;
                Ok((w, v))
            })
            .collect()
    }

    /// Process a time-sorted stream: alert notices from the state machine plus
    /// aggregated events. Verdicts are fed to the state machine at window end.
    pub fn process(&mut self, stream: &[RssiSample]) -> Result<PipelineOutput, ProximityError> {
        let classified = self.classify_windows(stream)?;
        let mut order: Vec<usize> = (0..classified.len()).collect();
        order.sort_by_key(|&i| (classified[i].0.end_ms(), classified[i].0.peer_token));

        let mut notices = Vec::new();
        for i in order {
            let (w, v) = &classified[i];
            let now = w.end_ms();
            let state = self.states.get(&w.peer_token).copied().unwrap_or_else(|| EncounterState::idle(w.peer_token, now));
            let (next, notice) = update_encounter(state, v, now, &self.config.encounter);
            self.states.insert(w.peer_token, next);
            notices.extend(notice);
        }

        let agg = aggregate_events(self.own, &classified, &self.resolver, self.config.slide_ms);
        Ok(PipelineOutput { notices, events: agg.events, unresolved_tokens: agg.unresolved_tokens, windows: classified.len() })
    }

    /// Spool the events, then try to flush. With no uploader (offline) they stay queued.
    pub fn deliver(
        &self,
        events: &[ProximityEvent],
        now_ms: i64,
        spool: &Spool,
        uploader: Option<&mut dyn EventUploader>,
    ) -> Result<usize, ProximityError> {
        let envelopes: Vec<_> = events.iter().map(|e| EventEnvelope::proximity(e, now_ms)).collect();
        spool.push(&envelopes)?;
        match uploader {
            Some(u) => spool.flush(u),
            None => Ok(0),
        }
    }
}
