use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use proxigraph_core::graph::{ContactMultiGraph, RiskMap, RiskParams};
use proxigraph_core::identity::{read_roster, DeviceSecret};
use proxigraph_core::wire::{EventEnvelope, InfectionReport, InfectionStatus, Payload};
use proxigraph_core::zone::Enrollment;
use proxigraph_core::AssociateHash;
use serde::Serialize;

use crate::engine::{Engine, Rejection, RiskOutcome};
use crate::store::{self, EventLog, RiskRecord, SnapshotManifest};
use crate::{ServiceConfig, ServiceError};

/// Immutable view of the graph after some number of accepted events. Queries
/// only ever see whole batches.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub snapshot_id: u64,
    pub event_count: u64,
    /// Logical clock: the latest `received_ms` or report time accepted so far.
    pub clock_ms: i64,
    pub graph: ContactMultiGraph,
    pub risk: RiskMap,
    pub params: RiskParams,
    pub default_trace_levels: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IngestSummary {
    pub accepted: usize,
    pub rejected: Vec<Rejection>,
    pub snapshot_id: u64,
    /// Present when the batch triggered a risk recomputation.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub risk: Option<RiskOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiskSummary {
    pub snapshot_id: u64,
    pub computed_ms: i64,
    pub assessed_count: usize,
    pub newly_at_risk: Vec<AssociateHash>,
}

struct Writer {
    engine: Engine,
    log: EventLog,
    snapshot_id: u64,
    manifest_count: u64,
    poisoned: bool,
}

/// The trace service without its HTTP front end. One writer at a time;
/// readers take the current [`Snapshot`] without blocking ingestion.
pub struct TraceService {
    dir: PathBuf,
    config: ServiceConfig,
    writer: Mutex<Writer>,
    current: RwLock<Arc<Snapshot>>,
}

impl TraceService {
    /// Open a data directory, replaying its event log. If a manifest exists,
    /// the graph after its `event_count` events must hash to its digest.
    pub fn open(dir: impl AsRef<Path>, config: ServiceConfig) -> Result<Self, ServiceError> {
        config.validate()?;
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let roster = load_roster(&dir)?;
        let enrollment = load_enrollment(&dir)?;
        let (log, envelopes) = EventLog::open(&dir)?;
        let manifest = store::read_manifest(&dir)?;
        if let Some(m) = &manifest {
            if m.event_count > log.len() {
                return Err(ServiceError::ManifestMismatch(format!(
                    "manifest covers {} events but the log holds {}",
                    m.event_count,
                    log.len()
                )));
            }
        }

        let mut engine = Engine::new(config.clone(), roster, enrollment)?;
        let check_digest = |engine: &mut Engine, count: u64| -> Result<(), ServiceError> {
            if let Some(m) = manifest.as_ref().filter(|m| m.event_count == count) {
                engine.finish_batch();
                let digest = engine.graph().content_digest();
                if digest != m.graph_digest {
                    return Err(ServiceError::ManifestMismatch(format!(
                        "replaying {count} events gives digest {digest}, manifest has {}",
                        m.graph_digest
                    )));
                }
            }
            Ok(())
        };
        check_digest(&mut engine, 0)?;
        for (i, env) in envelopes.into_iter().enumerate() {
            engine.accept(env).map_err(|r| ServiceError::CorruptLog { line: i + 1, message: r.message })?;
            check_digest(&mut engine, i as u64 + 1)?;
        }
        engine.finish_batch();

        // Each acknowledged batch held at least one event and advanced the id
        // by one, so this stays ahead of every id issued before the restart.
        let event_count = log.len();
        let snapshot_id = manifest.as_ref().map_or(event_count, |m| m.snapshot_id + (event_count - m.event_count)) + 1;
        let snapshot = build_snapshot(&engine, snapshot_id, event_count, &config);
        let mut writer = Writer { engine, log, snapshot_id, manifest_count: 0, poisoned: false };
        write_manifest(&dir, &mut writer)?;
        Ok(TraceService { dir, config, writer: Mutex::new(writer), current: RwLock::new(Arc::new(snapshot)) })
    }

    pub fn data_dir(&self) -> &Path {
        &self.dir
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.current.read().expect("snapshot lock").clone()
    }

    /// Validate, persist and apply a batch. Each element is decoded on its own
    /// so one malformed envelope never sinks the rest. Returns after the
    /// accepted envelopes are durable and visible.
    pub fn ingest_batch(&self, batch: Vec<serde_json::Value>) -> Result<IngestSummary, ServiceError> {
        let mut writer = self.writer.lock().expect("writer lock");
        if writer.poisoned {
            return Err(ServiceError::Unavailable);
        }
        let mut accepted = Vec::new();
        let mut rejected = Vec::new();
        for (index, value) in batch.into_iter().enumerate() {
            let outcome = serde_json::from_value::<EventEnvelope>(value)
                .map_err(|e| Rejection { index, code: "MalformedEnvelope".into(), message: e.to_string() })
                .and_then(|env| writer.engine.accept(env).map_err(|r| Rejection { index, ..r }));
            match outcome {
                Ok(stored) => accepted.push(stored),
                Err(r) => rejected.push(r),
            }
        }
        if accepted.is_empty() {
            return Ok(IngestSummary { accepted: 0, rejected, snapshot_id: writer.snapshot_id, risk: None });
        }
        if let Err(e) = writer.log.append(&accepted) {
            // The engine already holds events that are not durable; stop writing.
            writer.poisoned = true;
            return Err(e.into());
        }
        let risk = writer.engine.finish_batch();
        writer.snapshot_id += 1;
        let snapshot = build_snapshot(&writer.engine, writer.snapshot_id, writer.log.len(), &self.config);
        *self.current.write().expect("snapshot lock") = Arc::new(snapshot);

        if let Some(r) = risk.as_ref().filter(|r| !r.newly_at_risk.is_empty()) {
            let record = RiskRecord {
                snapshot_id: writer.snapshot_id,
                computed_ms: r.computed_ms,
                assessed_count: r.assessed_count,
                newly_at_risk: r.newly_at_risk.clone(),
            };
            store::append_risk_record(&self.dir, &record)?;
        }
        writer.manifest_count += accepted.len() as u64;
        if writer.manifest_count >= self.config.snapshot_every {
            write_manifest(&self.dir, &mut writer)?;
        }
        Ok(IngestSummary { accepted: accepted.len(), rejected, snapshot_id: writer.snapshot_id, risk })
    }

    pub fn ingest_envelopes(&self, envelopes: &[EventEnvelope]) -> Result<IngestSummary, ServiceError> {
        let values = envelopes.iter().map(|e| serde_json::to_value(e).expect("envelope serializes")).collect();
        self.ingest_batch(values)
    }

    /// Mark an associate reported (or recovered), recompute risk, persist both.
    pub fn report_infection(
        &self,
        associate_hash: AssociateHash,
        report_ms: i64,
        status: InfectionStatus,
    ) -> Result<RiskSummary, ServiceError> {
        let env = EventEnvelope::new(&Payload::InfectionReport(InfectionReport { associate_hash, report_ms, status }), report_ms);
        let summary = self.ingest_envelopes(&[env])?;
        if let Some(r) = summary.rejected.first() {
            return Err(match r.code.as_str() {
                "UnknownAssociate" => ServiceError::UnknownAssociate(associate_hash),
                _ => ServiceError::invalid("report", r.message.clone()),
            });
        }
        let snapshot = self.snapshot();
        let (computed_ms, assessed_count, newly_at_risk) = match summary.risk {
            Some(r) => (r.computed_ms, r.assessed_count, r.newly_at_risk),
            None => (snapshot.clock_ms, snapshot.risk.len(), Vec::new()),
        };
        Ok(RiskSummary { snapshot_id: summary.snapshot_id, computed_ms, assessed_count, newly_at_risk })
    }

    /// Force a manifest write, e.g. on shutdown.
    pub fn checkpoint(&self) -> Result<SnapshotManifest, ServiceError> {
        let mut writer = self.writer.lock().expect("writer lock");
        write_manifest(&self.dir, &mut writer)
    }
}

fn write_manifest(dir: &Path, writer: &mut Writer) -> Result<SnapshotManifest, ServiceError> {
    let manifest = SnapshotManifest {
        snapshot_id: writer.snapshot_id,
        event_count: writer.log.len(),
        created_ms: writer.engine.clock_ms(),
        graph_digest: writer.engine.graph().content_digest(),
    };
    store::write_manifest(dir, &manifest)?;
    writer.manifest_count = 0;
    Ok(manifest)
}

fn build_snapshot(engine: &Engine, snapshot_id: u64, event_count: u64, config: &ServiceConfig) -> Snapshot {
    Snapshot {
        snapshot_id,
        event_count,
        clock_ms: engine.clock_ms(),
        graph: engine.graph().clone(),
        risk: engine.risk().clone(),
        params: *engine.params(),
        default_trace_levels: config.default_trace_levels,
    }
}

fn load_roster(dir: &Path) -> Result<Vec<DeviceSecret>, ServiceError> {
    match fs::File::open(dir.join(store::ROSTER)) {
        Ok(f) => read_roster(f).map_err(|e| ServiceError::Config(format!("{}: {e}", store::ROSTER))),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Vec::new()),
        Err(e) => Err(e.into()),
    }
}

/// `tags.csv`: `tag_id,associate_hash` per line, no header.
fn load_enrollment(dir: &Path) -> Result<Enrollment, ServiceError> {
    let file = match fs::File::open(dir.join(store::TAGS)) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Enrollment::new()),
        Err(e) => return Err(e.into()),
    };
    let bad = |e: String| ServiceError::Config(format!("{}: {e}", store::TAGS));
    let mut enrollment = Enrollment::new();
    for record in csv::ReaderBuilder::new().has_headers(false).from_reader(file).deserialize() {
        let (tag, hash): (String, AssociateHash) = record.map_err(|e| bad(e.to_string()))?;
        enrollment.insert(tag, hash);
    }
    Ok(enrollment)
}
