//! On-disk layout of a data directory:
//!
//! * `events.log`: accepted envelopes, one JSON document per line, append-only
//! * `snapshot.json`: the latest [`SnapshotManifest`], replaced atomically
//! * `risk.jsonl`: one [`RiskRecord`] per risk recomputation
//! * `roster.csv`, `tags.csv`: optional device secrets and tag enrollment

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use proxigraph_core::wire::EventEnvelope;
use proxigraph_core::AssociateHash;
use serde::{Deserialize, Serialize};

use crate::ServiceError;

pub const EVENT_LOG: &str = "events.log";
pub const MANIFEST: &str = "snapshot.json";
pub const RISK_LOG: &str = "risk.jsonl";
pub const ROSTER: &str = "roster.csv";
pub const TAGS: &str = "tags.csv";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotManifest {
    pub snapshot_id: u64,
    /// Number of leading event-log lines the snapshot reflects.
    pub event_count: u64,
    pub created_ms: i64,
    pub graph_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskRecord {
    pub snapshot_id: u64,
    pub computed_ms: i64,
    pub assessed_count: usize,
    pub newly_at_risk: Vec<AssociateHash>,
}

/// Append-only event log. `append` returns only after the bytes are on disk.
#[derive(Debug)]
pub struct EventLog {
    file: File,
    len: u64,
}

impl EventLog {
    /// Open (creating if needed) and read back every complete line. A torn
    /// final line from an interrupted write was never acknowledged, so it is
    /// cut off.
    pub fn open(dir: &Path) -> Result<(Self, Vec<EventEnvelope>), ServiceError> {
        let path = dir.join(EVENT_LOG);
        let mut file = OpenOptions::new().create(true).read(true).append(true).open(&path)?;
        let mut envelopes = Vec::new();
        let mut complete = 0u64;
        let mut reader = BufReader::new(&file);
        let mut line = String::new();
        loop {
            line.clear();
            let n = reader.read_line(&mut line)?;
            if n == 0 || !line.ends_with('\n') {
                break;
            }
            complete += n as u64;
            let env: EventEnvelope = serde_json::from_str(line.trim_end())
                .map_err(|e| ServiceError::CorruptLog { line: envelopes.len() + 1, message: e.to_string() })?;
            envelopes.push(env);
        }
        drop(reader);
        if file.metadata()?.len() > complete {
            file.set_len(complete)?;
            file.sync_data()?;
        }
        file.seek(SeekFrom::End(0))?;
        Ok((EventLog { file, len: envelopes.len() as u64 }, envelopes))
    }

    pub fn append(&mut self, envelopes: &[EventEnvelope]) -> std::io::Result<()> {
        let mut buf = String::new();
        for env in envelopes {
            buf.push_str(&env.to_line());
            buf.push('\n');
        }
        self.file.write_all(buf.as_bytes())?;
        self.file.sync_data()?;
        self.len += envelopes.len() as u64;
        Ok(())
    }

    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

pub fn read_manifest(dir: &Path) -> Result<Option<SnapshotManifest>, ServiceError> {
    match fs::read_to_string(dir.join(MANIFEST)) {
        Ok(text) => serde_json::from_str(&text)
            .map(Some)
            .map_err(|e| ServiceError::ManifestMismatch(format!("unreadable manifest: {e}"))),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(e.into()),
    }
}

/// Write to a temporary file, fsync, then rename over the old manifest.
pub fn write_manifest(dir: &Path, manifest: &SnapshotManifest) -> std::io::Result<()> {
    let tmp: PathBuf = dir.join(format!("{MANIFEST}.tmp"));
    let mut f = File::create(&tmp)?;
    f.write_all(serde_json::to_string_pretty(manifest).expect("manifest serializes").as_bytes())?;
    f.sync_all()?;
    fs::rename(&tmp, dir.join(MANIFEST))?;
    if let Ok(d) = File::open(dir) {
        let _ = d.sync_all();
    }
    Ok(())
}

pub fn append_risk_record(dir: &Path, record: &RiskRecord) -> std::io::Result<()> {
    let mut f = OpenOptions::new().create(true).append(true).open(dir.join(RISK_LOG))?;
    let mut line = serde_json::to_string(record).expect("risk record serializes");
    line.push('\n');
    f.write_all(line.as_bytes())?;
    f.sync_data()
}
