//! Acceptance suite. Runs every primary criterion at its stated tolerance and
//! time budget, printing one PASS or FAIL line each. Exits non-zero if any
//! criterion fails.

mod common;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use common::{access, contact, report, Api};
use proxigraph_core::graph::{detect_clusters, propagate_risk, trace_contacts, RiskParams, TimeWindow, MS_PER_DAY};
use proxigraph_core::identity::{
    derive_token, epoch_of, hash_identity, resolve_token, write_roster, DeviceSecret, ResolutionTable, TokenBytes,
};
use proxigraph_core::proximity::{
    update_encounter, EncounterParams, EncounterPhase, EncounterState, PipelineConfig, ProximityModel, ProximityVerdict,
};
use proxigraph_core::sim::{
    calibrate_default, label_windows, log_loss, log_loss_gradient, office_scenario, score_detection, train_test_split,
    SimRun, CALIBRATION_AGENTS, CALIBRATION_DURATION_MS, NEAR_THRESHOLD_M, TEST_FRACTION,
};
use proxigraph_core::wire::{EventEnvelope, Payload, ProximityPayload, TokenizedProximity};
use proxigraph_core::zone::{co_occupancy_events, InfraSighting};
use proxigraph_core::{Ambience, AssociateHash};
use proxigraph_service::{ServiceConfig, TraceService};
use proxigraph_testkit::{
    clusters_oracle, co_occupancy_oracle, hash, random_access_logs, risk_oracle, sort_events, trace_oracle, GraphFixture,
    HOUR_MS,
};
use rand::{Rng, SeedableRng};
use rand_chacha::{ChaCha20Rng, ChaCha8Rng};

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------- tokens

fn token_layer() -> Check {
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let owner = |i: usize| hash(&format!("tok-{i}"));

    let per_secret = 100_000;
    for i in 0..3 {
        let s = DeviceSecret::generate(owner(i), 0, &mut rng);
        let distinct: HashSet<TokenBytes> = (0..per_secret as i64).map(|e| derive_token(&s, e).token).collect();
        ensure(distinct.len() == per_secret, || format!("secret {i}: {} distinct of {per_secret}", distinct.len()))?;
    }

    let pairs = 10_000;
    let secrets: Vec<DeviceSecret> = (0..2 * pairs).map(|i| DeviceSecret::generate(owner(i), 0, &mut rng)).collect();
    let epoch = 1_234_567;
    let shared: HashSet<TokenBytes> = secrets.iter().map(|s| derive_token(s, epoch).token).collect();
    ensure(shared.len() == secrets.len(), || format!("{} distinct of {} at one epoch", shared.len(), secrets.len()))?;

    let roster = &secrets[..1_000];
    let observed = 50_000;
    let table = ResolutionTable::around(roster, observed, 1);
    for s in roster {
        for offset in -2..=2i64 {
            let token = derive_token(s, observed + offset);
            let want = (offset.abs() <= 1).then_some(s.owner);
            ensure(table.resolve(&token.token, observed, 1) == want, || format!("offset {offset} for {}", s.owner))?;
        }
    }
    for s in roster.iter().step_by(50) {
        let token = derive_token(s, observed - 1);
        ensure(resolve_token(&token, observed, roster, 1) == Some(s.owner), || "linear resolver disagrees".into())?;
    }

    let ids: HashSet<AssociateHash> =
        (0..100_000).map(|i| hash_identity(&format!("emp{i:06}@corp.example"), &[9; 16]).unwrap().associate_hash).collect();
    ensure(ids.len() == 100_000, || format!("{} distinct associate hashes of 100000", ids.len()))?;

    Ok(format!(
        "3x{per_secret} tokens per secret, {pairs} pairs at epoch {epoch}, 1000-member round trip at skew 1, 1e5 ids: 0 collisions"
    ))
}

// ---------------------------------------------------------------- classifier

fn naive_log_loss(w: &[f64], b: f64, xs: &[[f64; 6]], ys: &[bool]) -> f64 {
    let mut total = 0.0;
    for (x, &y) in xs.iter().zip(ys) {
        let z = b + w.iter().zip(x).map(|(a, v)| a * v).sum::<f64>();
        let (p, q) = (1.0 / (1.0 + (-z).exp()), 1.0 / (1.0 + z.exp()));
        total -= if y { p.ln() } else { q.ln() };
    }
    total / xs.len() as f64
}

fn classifier() -> Check {
    let report = calibrate_default(7).map_err(|e| e.to_string())?;
    ensure(report.test_accuracy >= 0.90, || format!("held-out accuracy {:.4} < 0.90", report.test_accuracy))?;

    let run = SimRun::new(office_scenario(7, CALIBRATION_AGENTS, CALIBRATION_DURATION_MS)).map_err(|e| e.to_string())?;
    let data = label_windows(&run, &PipelineConfig::default(), 0, NEAR_THRESHOLD_M).map_err(|e| e.to_string())?;
    let (train, _) = train_test_split(&data, TEST_FRACTION, 7);
    let xs: Vec<[f64; 6]> = train.iter().map(|l| report.model.standardize(&l.features.as_array())).collect();
    let ys: Vec<bool> = train.iter().map(|l| l.near).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut points = vec![(vec![0.0; 6], 0.0), (report.model.coefficients.clone(), report.model.intercept)];
    for _ in 0..4 {
        points.push(((0..6).map(|_| rng.random_range(-2.0..2.0)).collect(), rng.random_range(-4.0..1.0)));
    }
    let mut worst: f64 = 0.0;
    for (w, b) in &points {
        let direct = log_loss(w, *b, &xs, &ys);
        let naive = naive_log_loss(w, *b, &xs, &ys);
        ensure((direct - naive).abs() <= 1e-9 * naive.abs().max(1.0), || format!("loss {direct} vs {naive}"))?;

        let (gw, gb) = log_loss_gradient(w, *b, &xs, &ys);
        let h = 1e-5;
        let mut analytic = gw.clone();
        analytic.push(gb);
        let mut numeric = Vec::new();
        for j in 0..=6 {
            let shifted = |d: f64| {
                let mut w = w.clone();
                let mut b = *b;
                if j < 6 {
                    w[j] += d;
                } else {
                    b += d;
                }
                log_loss(&w, b, &xs, &ys)
            };
            numeric.push((shifted(h) - shifted(-h)) / (2.0 * h));
        }
        let scale = analytic.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        if scale < 1e-6 {
            // at the optimum the gradient vanishes; compare absolutely
            let abs = analytic.iter().zip(&numeric).fold(0.0f64, |m, (a, n)| m.max((a - n).abs()));
            ensure(abs <= 1e-8, || format!("gradient near optimum off by {abs:e}"))?;
            continue;
        }
        let rel = analytic.iter().zip(&numeric).fold(0.0f64, |m, (a, n)| m.max((a - n).abs())) / scale;
        worst = worst.max(rel);
    }
    ensure(worst <= 1e-5, || format!("gradient relative error {worst:e} > 1e-5"))?;
    Ok(format!(
        "held-out accuracy {:.4} on {} windows (train {:.4}), gradient max relative error {worst:.1e}",
        report.test_accuracy, report.windows, report.train_accuracy
    ))
}

// ---------------------------------------------------------------- detection

fn end_to_end() -> Check {
    let run = SimRun::new(office_scenario(2024, 50, 60 * 60_000)).map_err(|e| e.to_string())?;
    let events = run.detected_events(&ProximityModel::shipped(), &PipelineConfig::default()).map_err(|e| e.to_string())?;
    let score = score_detection(&events, run.ground_truth(), NEAR_THRESHOLD_M, 30_000);
    ensure(score.precision >= 0.85 && score.recall >= 0.85, || {
        format!("precision {:.3}, recall {:.3}", score.precision, score.recall)
    })?;
    Ok(format!(
        "precision {:.3}, recall {:.3} ({} events, {} episodes)",
        score.precision, score.recall, score.events, score.episodes
    ))
}

// ---------------------------------------------------------------- graph

fn graph_oracles() -> Check {
    for seed in 0..500u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = GraphFixture::random(&mut rng, 12, 30);
        let g = f.build();
        let params = RiskParams {
            beta_hop: rng.random_range(0.2..=1.0),
            max_levels: rng.random_range(1..=4),
            ..RiskParams::default()
        };

        let source = f.nodes[rng.random_range(0..f.nodes.len())];
        let levels = rng.random_range(1..=4);
        let window = if rng.random_bool(0.3) {
            TimeWindow::ALL
        } else {
            let (a, b) = (rng.random_range(0..24) * 12 * HOUR_MS, rng.random_range(0..24) * 12 * HOUR_MS);
            TimeWindow::new(a.min(b), a.max(b)).unwrap()
        };
        let trace = trace_contacts(&g, &source, levels, window).map_err(|e| e.to_string())?;
        let mut flat = BTreeMap::new();
        for (k, level) in trace.levels.iter().enumerate() {
            for e in level {
                flat.insert(e.associate_hash, (k, e.via_edge_ids.iter().copied().collect::<BTreeSet<_>>()));
            }
        }
        ensure(flat == trace_oracle(&g, source, levels, window), || format!("trace differs on graph {seed}"))?;

        let risk = propagate_risk(&g, &params, f.now_ms);
        let want = risk_oracle(&g, &params, f.now_ms);
        ensure(risk.len() == want.len(), || format!("risk keys differ on graph {seed}"))?;
        for (h, a) in &risk {
            ensure((a.score - want[h]).abs() <= 1e-9, || format!("graph {seed}: {} vs {}", a.score, want[h]))?;
        }

        let min_weight = [0.0, 0.1, 0.3, 0.6][rng.random_range(0..4)];
        let min_size = rng.random_range(1..=4);
        ensure(
            detect_clusters(&g, &risk, &params, min_weight, min_size)
                == clusters_oracle(&g, &risk, &params, min_weight, min_size),
            || format!("clusters differ on graph {seed}"),
        )?;
    }
    Ok("500 graphs: trace exact, risk within 1e-9, clusters exact".into())
}

// ---------------------------------------------------------------- zones

fn zone_mode() -> Check {
    let logs = random_access_logs(&mut ChaCha8Rng::seed_from_u64(10), 1000, 10, 60);
    let mut got = co_occupancy_events(&logs, 300_000).map_err(|e| e.to_string())?;
    sort_events(&mut got);
    let want = co_occupancy_oracle(&logs, 300_000);
    ensure(got == want, || format!("{} events vs {} from the oracle", got.len(), want.len()))?;
    Ok(format!("1000 intervals, 10 zones: {} events, exact", got.len()))
}

// ---------------------------------------------------------------- service

fn service(rt: &tokio::runtime::Runtime) -> Check {
    // ingestion throughput through the HTTP front end
    let api = Api::new();
    let people: Vec<AssociateHash> = (0..2_000).map(|i| hash(&format!("svc-{i}"))).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let stream: Vec<EventEnvelope> = (0..10_000)
        .map(|i| {
            let a = people[rng.random_range(0..people.len())];
            let t = rng.random_range(0..14 * 24 * 60) * 60_000;
            if i % 4 == 3 {
                access(a, ["lab", "cleanroom", "canteen", "floor-2"][rng.random_range(0..4)], t, t + rng.random_range(5..90) * 60_000)
            } else {
                let mut b = people[rng.random_range(0..people.len())];
                while b == a {
                    b = people[rng.random_range(0..people.len())];
                }
                contact(a, b, t, rng.random_range(1..40), Ambience::ALL[rng.random_range(0..Ambience::ALL.len())])
            }
        })
        .collect();
    let started = Instant::now();
    let mut accepted = 0;
    for batch in stream.chunks(1_000) {
        let (status, body) = rt.block_on(api.post_events(batch));
        ensure(status.is_success(), || format!("ingest returned {status}: {body}"))?;
        accepted += body["accepted"].as_u64().unwrap_or(0);
    }
    let reported = rt.block_on(api.post_events(&[report(people[0], 15 * MS_PER_DAY)])).1;
    accepted += reported["accepted"].as_u64().unwrap_or(0);
    let ingest = started.elapsed();
    ensure(accepted == 10_001, || format!("accepted {accepted} of 10001"))?;
    ensure(ingest < Duration::from_secs(10), || format!("ingest took {ingest:?}"))?;

    // crash and replay: no final checkpoint, a torn write at the tail
    let live = api.service.snapshot();
    let dir = api.dir.path().to_path_buf();
    drop(api.router);
    drop(api.service);
    let log = dir.join(proxigraph_service::store::EVENT_LOG);
    let mut bytes = fs::read(&log).map_err(|e| e.to_string())?;
    bytes.extend_from_slice(br#"{"schema_version":1,"kind":"acc"#);
    fs::write(&log, bytes).map_err(|e| e.to_string())?;
    let replayed = TraceService::open(&dir, ServiceConfig::default()).map_err(|e| e.to_string())?.snapshot();
    ensure(replayed.graph.content_digest() == live.graph.content_digest(), || "replayed digest differs".into())?;
    let edges = |s: &proxigraph_service::Snapshot| s.graph.edges_in(TimeWindow::ALL).cloned().collect::<Vec<_>>();
    ensure(edges(&replayed) == edges(&live), || "replayed edge list differs".into())?;
    ensure(replayed.risk == live.risk && replayed.clock_ms == live.clock_ms, || "replayed risk differs".into())?;
    drop(api.dir);

    // trace latency on a 10k-node, 50k-edge graph
    let api = Api::new();
    let nodes: Vec<AssociateHash> = (0..10_000).map(|i| hash(&format!("big-{i}"))).collect();
    let mut edges = Vec::with_capacity(50_000);
    for round in 0..5 {
        for (i, a) in nodes.iter().enumerate() {
            let mut j = rng.random_range(0..nodes.len() - 1);
            if j >= i {
                j += 1;
            }
            let t = (round * 3 * 24 * 60 + rng.random_range(0..3 * 24 * 60)) * 60_000;
            edges.push(contact(*a, nodes[j], t, rng.random_range(1..30), Ambience::Indoor));
        }
    }
    for batch in edges.chunks(10_000) {
        api.service.ingest_envelopes(batch).map_err(|e| e.to_string())?;
    }
    let snapshot = api.service.snapshot();
    ensure(snapshot.graph.node_count() == 10_000 && snapshot.graph.edge_count() == 50_000, || {
        format!("built {} nodes / {} edges", snapshot.graph.node_count(), snapshot.graph.edge_count())
    })?;
    let mut slowest = Duration::ZERO;
    let mut reached = 0;
    for k in 0..20 {
        let source = nodes[k * 499];
        let started = Instant::now();
        let (status, body) = rt.block_on(api.get(&format!("/v1/trace?source={}", source.to_hex())));
        slowest = slowest.max(started.elapsed());
        ensure(status.is_success(), || format!("trace returned {status}"))?;
        reached = reached.max(body["levels"].as_array().map_or(0, |l| l.iter().map(|x| x.as_array().map_or(0, Vec::len)).sum()));
    }
    ensure(slowest < Duration::from_millis(100), || format!("slowest trace {slowest:?}"))?;

    Ok(format!(
        "10001 events in {:.2} s, replay digest identical, slowest of 20 traces {:.1} ms (up to {reached} contacts)",
        ingest.as_secs_f64(),
        slowest.as_secs_f64() * 1e3
    ))
}

// ---------------------------------------------------------------- privacy

fn scan(dir: &Path, marker: &str, found: &mut Vec<String>) -> std::io::Result<usize> {
    let mut files = 0;
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            files += scan(&path, marker, found)?;
        } else {
            files += 1;
            if String::from_utf8_lossy(&fs::read(&path)?).contains(marker) {
                found.push(path.display().to_string());
            }
        }
    }
    Ok(files)
}

fn privacy(rt: &tokio::runtime::Runtime) -> Check {
    const MARKER: &str = "PLANTED-MARKER";
    let salt = [0x42; 16];
    let mut scenario = office_scenario(99, 16, 20 * 60_000);
    let ids: Vec<String> = (0..scenario.agents.len()).map(|i| format!("{MARKER}-{i:03}@corp.example")).collect();
    for (agent, id) in scenario.agents.iter_mut().zip(&ids) {
        agent.associate_hash = hash_identity(id, &salt).map_err(|e| e.to_string())?.associate_hash;
    }
    let rotation_ms = scenario.rotation_ms;
    let run = SimRun::new(scenario).map_err(|e| e.to_string())?;
    let sim_dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    run.output().write_dir(sim_dir.path()).map_err(|e| e.to_string())?;

    let data = tempfile::tempdir().map_err(|e| e.to_string())?;
    write_roster(run.roster(), fs::File::create(data.path().join("roster.csv")).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let owners = &run.ground_truth().agents;
    let tags: String = owners.iter().enumerate().map(|(i, h)| format!("tag-{i},{}\n", h.to_hex())).collect();
    fs::write(data.path().join("tags.csv"), tags).map_err(|e| e.to_string())?;

    let service = Arc::new(TraceService::open(data.path(), ServiceConfig::default()).map_err(|e| e.to_string())?);
    let router = proxigraph_service::http::router(service.clone(), None);
    let api = Api { dir: data, service, router };

    let secret_of: BTreeMap<AssociateHash, &DeviceSecret> = run.roster().iter().map(|s| (s.owner, s)).collect();
    let mut envelopes = Vec::new();
    for (owner, output) in run.detect(&ProximityModel::shipped(), &PipelineConfig::default()).map_err(|e| e.to_string())? {
        for ev in output.events {
            let peer = if ev.peer_a_hash == owner { ev.peer_b_hash } else { ev.peer_a_hash };
            let epoch = epoch_of(ev.start_ms, rotation_ms).map_err(|e| e.to_string())?;
            let t = TokenizedProximity {
                reporter_hash: owner,
                peer_token: derive_token(secret_of[&peer], epoch).token,
                epoch_index: epoch,
                start_ms: ev.start_ms,
                end_ms: ev.end_ms,
                closeness: ev.closeness,
                peak_confidence: ev.peak_confidence,
                ambience: ev.ambience,
            };
            envelopes.push(EventEnvelope::new(&Payload::Proximity(ProximityPayload::Tokenized(t)), ev.end_ms));
        }
    }
    for entry in run.access_logs() {
        envelopes.push(EventEnvelope::new(&Payload::AccessLog(entry.clone()), entry.exit_ms));
    }
    for (i, t) in [(0usize, 60_000i64), (0, 200_000), (1, 90_000), (1, 230_000)] {
        let s = InfraSighting { tag_id: format!("tag-{i}"), zone_id: "lab".into(), sighted_ms: t };
        envelopes.push(EventEnvelope::new(&Payload::InfraSighting(s), t));
    }
    let (_, body) = rt.block_on(api.post_events(&envelopes));
    ensure(body["rejected"].as_array().is_some_and(Vec::is_empty), || format!("rejections: {}", body["rejected"]))?;
    let patient = owners[0].to_hex();
    let mut responses = vec![body.to_string()];
    let infection = serde_json::json!({"associate_hash": patient, "report_ms": 20 * 60_000}).to_string();
    responses.push(rt.block_on(api.post("/v1/infections", infection)).1.to_string());
    for uri in [format!("/v1/trace?source={patient}&levels=4"), "/v1/risk".into(), "/v1/clusters".into(), "/v1/graph".into()] {
        responses.push(rt.block_on(api.get(&uri)).1.to_string());
    }
    api.service.checkpoint().map_err(|e| e.to_string())?;

    let mut found = Vec::new();
    let files = scan(api.dir.path(), MARKER, &mut found).map_err(|e| e.to_string())?
        + scan(sim_dir.path(), MARKER, &mut found).map_err(|e| e.to_string())?;
    for (i, r) in responses.iter().enumerate() {
        if r.contains(MARKER) {
            found.push(format!("response {i}"));
        }
    }
    ensure(found.is_empty(), || format!("marker found in {found:?}"))?;
    ensure(body["accepted"].as_u64().unwrap_or(0) > 0, || "nothing was ingested".into())?;
    Ok(format!("{} ids, {files} persisted files, {} responses: no marker", ids.len(), responses.len()))
}

// ---------------------------------------------------------------- state machine

fn state_machine() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let mut notices = 0usize;
    for seq in 0..10_000 {
        let params = EncounterParams { consecutive_near: rng.random_range(1..=4), cooldown_ms: rng.random_range(0..600_000) };
        let mut state = EncounterState::idle(TokenBytes([7; 16]), 0);
        let mut now = 0i64;
        let mut last: Option<i64> = None;
        for _ in 0..rng.random_range(1..200) {
            now += rng.random_range(0..120_000);
            let verdict = ProximityVerdict::from_confidence(rng.random_range(0.0..1.0));
            let cooling = state.phase == EncounterPhase::Cooldown && now - state.phase_entered_ms < params.cooldown_ms;
            let (next, notice) = update_encounter(state, &verdict, now, &params);
            if let Some(n) = notice {
                notices += 1;
                ensure(!cooling, || format!("sequence {seq}: notice during cooldown at {now}"))?;
                if let Some(prev) = last {
                    ensure(n.issued_ms - prev >= params.cooldown_ms, || {
                        format!("sequence {seq}: gap {} < {}", n.issued_ms - prev, params.cooldown_ms)
                    })?;
                }
                last = Some(n.issued_ms);
            }
            state = next;
        }
    }
    Ok(format!("10000 sequences, {notices} notices, none in cooldown, every gap >= cooldown"))
}

// ---------------------------------------------------------------- harness

fn main() -> ExitCode {
    let rt = tokio::runtime::Runtime::new().expect("runtime");
    let criteria: Vec<(&str, Duration, Box<dyn FnOnce() -> Check + '_>)> = vec![
        ("token layer", Duration::from_secs(30), Box::new(token_layer)),
        ("classifier", Duration::from_secs(120), Box::new(classifier)),
        ("end-to-end detection", Duration::from_secs(300), Box::new(end_to_end)),
        ("graph oracle equivalence", Duration::from_secs(120), Box::new(graph_oracles)),
        ("zone co-occupancy", Duration::from_secs(10), Box::new(zone_mode)),
        ("service", Duration::MAX, Box::new(|| service(&rt))),
        ("privacy scan", Duration::MAX, Box::new(|| privacy(&rt))),
        ("encounter state machine", Duration::MAX, Box::new(state_machine)),
    ];
    let mut failed = 0;
    for (name, budget, check) in criteria {
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or(p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let elapsed = started.elapsed();
        let outcome = outcome.and_then(|detail| {
            if elapsed <= budget {
                Ok(detail)
            } else {
                Err(format!("{detail}; took {elapsed:.1?}, budget {budget:?}"))
            }
        });
        match outcome {
            Ok(detail) => println!("PASS  {name:<26} {:>7.2} s  {detail}", elapsed.as_secs_f64()),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name:<26} {:>7.2} s  {why}", elapsed.as_secs_f64());
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
