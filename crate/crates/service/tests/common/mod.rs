#![allow(dead_code)]

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use proxigraph_core::graph::MS_PER_DAY;
use proxigraph_core::wire::{EventEnvelope, InfectionReport, InfectionStatus, Payload};
use proxigraph_core::zone::AccessLogEntry;
use proxigraph_core::{Ambience, AssociateHash, Closeness, ProximityEvent};
use proxigraph_service::{ServiceConfig, TraceService};
use proxigraph_testkit::hash;
use rand::Rng;
use serde_json::Value;
use tempfile::TempDir;
use tower::ServiceExt;

pub struct Api {
    pub dir: TempDir,
    pub service: Arc<TraceService>,
    pub router: Router,
}

impl Api {
    pub fn new() -> Self {
        Self::with_console(None)
    }

    pub fn with_console(console: Option<&std::path::Path>) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let service = Arc::new(TraceService::open(dir.path(), ServiceConfig::default()).unwrap());
        let router = proxigraph_service::http::router(service.clone(), console);
        Api { dir, service, router }
    }

    pub async fn call(&self, req: Request<Body>) -> (StatusCode, Vec<u8>) {
        let resp = self.router.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
    }

    pub async fn get(&self, uri: &str) -> (StatusCode, Value) {
        let (status, body) = self.call(Request::get(uri).body(Body::empty()).unwrap()).await;
        (status, serde_json::from_slice(&body).unwrap())
    }

    pub async fn post(&self, uri: &str, body: impl Into<Body>) -> (StatusCode, Value) {
        let req = Request::post(uri).header("content-type", "application/json").body(body.into()).unwrap();
        let (status, body) = self.call(req).await;
        (status, serde_json::from_slice(&body).unwrap())
    }

    pub async fn post_events(&self, envelopes: &[EventEnvelope]) -> (StatusCode, Value) {
        self.post("/v1/events", serde_json::to_vec(envelopes).unwrap()).await
    }
}

pub fn contact(a: AssociateHash, b: AssociateHash, start: i64, minutes: i64, ambience: Ambience) -> EventEnvelope {
    let ev = ProximityEvent::new(a, b, start, start + minutes * 60_000, Closeness::Near, 0.9, ambience);
    EventEnvelope::proximity(&ev, start + minutes * 60_000)
}

pub fn report(who: AssociateHash, at: i64) -> EventEnvelope {
    let r = InfectionReport { associate_hash: who, report_ms: at, status: InfectionStatus::Reported };
    EventEnvelope::new(&Payload::InfectionReport(r), at)
}

pub fn access(who: AssociateHash, zone: &str, entry: i64, exit: i64) -> EventEnvelope {
    let e = AccessLogEntry { associate_hash: who, zone_id: zone.into(), entry_ms: entry, exit_ms: exit };
    EventEnvelope::new(&Payload::AccessLog(e), exit)
}

/// A mixed stream over `people` associates and ten days: contacts, zone
/// visits, reports, exact duplicates and a few invalid envelopes.
pub fn random_stream<R: Rng>(rng: &mut R, len: usize, people: usize) -> Vec<EventEnvelope> {
    let who: Vec<AssociateHash> = (0..people).map(|i| hash(&format!("p{i}"))).collect();
    let mut out: Vec<EventEnvelope> = Vec::new();
    while out.len() < len {
        let a = who[rng.random_range(0..people)];
        let b = who[rng.random_range(0..people)];
        let t = rng.random_range(0..10 * MS_PER_DAY / 60_000) * 60_000;
        let roll: f64 = rng.random();
        let env = if roll < 0.55 {
            let ambience = Ambience::ALL[rng.random_range(0..Ambience::ALL.len())];
            contact(a, b, t, rng.random_range(1..40), ambience)
        } else if roll < 0.8 {
            access(a, ["lab", "cleanroom", "canteen"][rng.random_range(0..3)], t, t + rng.random_range(1..60) * 60_000)
        } else if roll < 0.87 {
            report(a, t)
        } else if roll < 0.95 && !out.is_empty() {
            out[rng.random_range(0..out.len())].clone()
        } else {
            contact(a, b, t, -5, Ambience::Indoor)
        };
        out.push(env);
    }
    out
}
