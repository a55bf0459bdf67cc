use std::collections::HashMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::{ChaCha20Rng, ChaCha8Rng};
use rand_distr::StandardNormal;
use serde::Serialize;

use super::{rssi_at_distance, Scenario, SimError, Trajectory};
use crate::event::ProximityEvent;
use crate::identity::{derive_token, epoch_of, write_roster, AssociateHash, DeviceSecret, EpochResolver, TokenBytes};
use crate::proximity::{DevicePipeline, PipelineConfig, PipelineOutput, ProximityModel, RssiSample, RSSI_RANGE};
use crate::zone::{write_access_log, AccessLogEntry};

/// Closest two bodies can get; keeps the path-loss model finite.
const MIN_SEPARATION_M: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TokenScheduleEntry {
    pub owner: AssociateHash,
    pub epoch_index: i64,
    pub token: TokenBytes,
}

/// Exact positions per tick, from which every pairwise distance follows, and
/// whether each agent's radio was on (device carried, inside the geofence and
/// outside device-free zones).
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub period_ms: i64,
    pub ticks: usize,
    pub agents: Vec<AssociateHash>,
    positions: Vec<(f64, f64)>,
    radio_on: Vec<bool>,
}

impl GroundTruth {
    pub fn tick_ms(&self, tick: usize) -> i64 {
        tick as i64 * self.period_ms
    }

    pub fn position(&self, tick: usize, agent: usize) -> (f64, f64) {
        self.positions[tick * self.agents.len() + agent]
    }

    pub fn radio_on(&self, tick: usize, agent: usize) -> bool {
        self.radio_on[tick * self.agents.len() + agent]
    }

    pub fn distance(&self, tick: usize, a: usize, b: usize) -> f64 {
        let (p, q) = (self.position(tick, a), self.position(tick, b));
        (p.0 - q.0).hypot(p.1 - q.1)
    }

    pub fn index_of(&self, hash: &AssociateHash) -> Option<usize> {
        self.agents.iter().position(|a| a == hash)
    }

    /// `timestamp_ms,associate_hash,x_m,y_m,radio_on` rows, tick-major.
    pub fn write_positions<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = BufWriter::new(out);
        writeln!(w, "timestamp_ms,associate_hash,x_m,y_m,radio_on")?;
        for tick in 0..self.ticks {
            for (i, hash) in self.agents.iter().enumerate() {
                let (x, y) = self.position(tick, i);
                writeln!(w, "{},{},{x:.4},{y:.4},{}", self.tick_ms(tick), hash, u8::from(self.radio_on(tick, i)))?;
            }
        }
        w.flush()
    }
}

/// A prepared scenario: trajectories sampled, secrets and offsets drawn.
/// Per-device RSSI streams are generated on demand, each from its own
/// deterministic noise streams, so large scenarios never hold every stream
/// in memory at once.
#[derive(Debug, Clone)]
pub struct SimRun {
    scenario: Scenario,
    truth: GroundTruth,
    /// Device-free zone index per tick and agent.
    restricted: Vec<Option<u16>>,
    roster: Vec<DeviceSecret>,
    secret_of: Vec<Option<usize>>,
    tx_offset_db: Vec<i32>,
    /// Token per agent per epoch, starting at epoch 0.
    tokens: Vec<Vec<TokenBytes>>,
    token_owner: HashMap<TokenBytes, usize>,
}

impl SimRun {
    pub fn new(scenario: Scenario) -> Result<Self, SimError> {
        scenario.validate()?;
        let n = scenario.agents.len();
        let ticks = scenario.ticks();
        let period = scenario.sample_period_ms;
        let trajectories: Vec<Trajectory> = scenario.agents.iter().map(Trajectory::new).collect();
        let ws = &scenario.workspace;
        let device_free: Vec<usize> =
            (0..ws.zones.len()).filter(|&z| !ws.zones[z].zone.personal_devices_allowed).collect();

        let mut positions = Vec::with_capacity(ticks * n);
        let mut restricted = Vec::with_capacity(ticks * n);
        let mut radio_on = Vec::with_capacity(ticks * n);
        for tick in 0..ticks {
            let t = (tick as i64 * period) as f64;
            for (agent, traj) in scenario.agents.iter().zip(&trajectories) {
                let p = traj.position(t);
                let zone = device_free.iter().copied().find(|&z| ws.zones[z].contains(p)).map(|z| z as u16);
                let fenced = ws.geofence.as_ref().is_none_or(|g| g.contains(p));
                positions.push(p);
                restricted.push(zone);
                radio_on.push(agent.device_present && fenced && zone.is_none());
            }
        }

        let mut setup = ChaCha20Rng::seed_from_u64(scenario.seed);
        let (lo, hi) = scenario.tx_offset_range_db;
        let mut roster = Vec::new();
        let mut secret_of = vec![None; n];
        let mut tx_offset_db = vec![0; n];
        for (i, agent) in scenario.agents.iter().enumerate() {
            if agent.device_present {
                secret_of[i] = Some(roster.len());
                roster.push(DeviceSecret::generate(agent.associate_hash, 0, &mut setup));
                tx_offset_db[i] = setup.random_range(lo..=hi);
            }
        }

        let last_epoch = epoch_of(scenario.duration_ms.saturating_sub(1), scenario.rotation_ms)
            .map_err(|e| SimError::InvalidScenario(e.to_string()))?;
        let mut tokens = vec![Vec::new(); n];
        let mut token_owner = HashMap::new();
        for (i, slot) in secret_of.iter().enumerate() {
            if let Some(s) = slot {
                for epoch in 0..=last_epoch {
                    let token = derive_token(&roster[*s], epoch).token;
                    tokens[i].push(token);
                    token_owner.insert(token, i);
                }
            }
        }

        let truth = GroundTruth {
            period_ms: period,
            ticks,
            agents: scenario.agents.iter().map(|a| a.associate_hash).collect(),
            positions,
            radio_on,
        };
        Ok(SimRun { scenario, truth, restricted, roster, secret_of, tx_offset_db, tokens, token_owner })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn ground_truth(&self) -> &GroundTruth {
        &self.truth
    }

    pub fn roster(&self) -> &[DeviceSecret] {
        &self.roster
    }

    pub fn tx_offset_db(&self, agent: usize) -> i32 {
        self.tx_offset_db[agent]
    }

    /// Ground-truth owner of a broadcast token, as an agent index.
    pub fn token_owner(&self, token: &TokenBytes) -> Option<usize> {
        self.token_owner.get(token).copied()
    }

    pub fn has_device(&self, agent: usize) -> bool {
        self.secret_of[agent].is_some()
    }

    /// Everything agent `rx` hears, ordered by time then sender.
    pub fn receiver_stream(&self, rx: usize) -> Vec<RssiSample> {
        let n = self.scenario.agents.len();
        if !self.has_device(rx) {
            return Vec::new();
        }
        let seed = self.scenario.seed;
        let mut noise: Vec<ChaCha8Rng> = (0..n)
            .map(|tx| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream((rx * n + tx) as u64 + 1);
                rng
            })
            .collect();
        let channel = self.scenario.channel;
        let base_tx = channel.tx_power_dbm.round() as i32;
        let mut out = Vec::new();
        for tick in 0..self.truth.ticks {
            if !self.truth.radio_on(tick, rx) {
                continue;
            }
            let t = self.truth.tick_ms(tick);
            let epoch = (t / self.scenario.rotation_ms) as usize;
            for tx in 0..n {
                if tx == rx || !self.truth.radio_on(tick, tx) {
                    continue;
                }
                let d = self.truth.distance(tick, rx, tx).max(MIN_SEPARATION_M);
                let z: f64 = noise[tx].sample(StandardNormal);
                let mut params = channel;
                params.tx_power_dbm += f64::from(self.tx_offset_db[tx]);
                let Ok(Some(rssi)) = rssi_at_distance(d, &params, z * channel.shadow_sigma_db) else {
                    continue;
                };
                out.push(RssiSample {
                    peer_token: self.tokens[tx][epoch],
                    rssi_dbm: (rssi.round() as i32).clamp(*RSSI_RANGE.start(), *RSSI_RANGE.end()),
                    tx_power_dbm: base_tx + self.tx_offset_db[tx],
                    timestamp_ms: t,
                    ambience: self.scenario.ambience,
                });
            }
        }
        out
    }

    /// One interval per contiguous stay in a device-free zone.
    pub fn access_logs(&self) -> Vec<AccessLogEntry> {
        let n = self.scenario.agents.len();
        let period = self.scenario.sample_period_ms;
        let mut out = Vec::new();
        for agent in 0..n {
            let mut open: Option<(u16, usize)> = None;
            for tick in 0..=self.truth.ticks {
                let zone = if tick < self.truth.ticks { self.restricted[tick * n + agent] } else { None };
                if let Some((z, start)) = open {
                    if zone != Some(z) {
                        out.push(AccessLogEntry {
                            associate_hash: self.truth.agents[agent],
                            zone_id: self.scenario.workspace.zones[z as usize].zone.zone_id.clone(),
                            entry_ms: start as i64 * period,
                            exit_ms: tick as i64 * period,
                        });
                        open = None;
                    }
                }
                if open.is_none() {
                    open = zone.map(|z| (z, tick));
                }
            }
        }
        out.sort();
        out
    }

    pub fn token_schedule(&self) -> Vec<TokenScheduleEntry> {
        let mut out = Vec::new();
        for (i, tokens) in self.tokens.iter().enumerate() {
            for (epoch, token) in tokens.iter().enumerate() {
                out.push(TokenScheduleEntry { owner: self.truth.agents[i], epoch_index: epoch as i64, token: *token });
            }
        }
        out
    }

    /// Runs every device's pipeline over its own stream, resolving tokens
    /// against the scenario roster.
    pub fn detect(
        &self,
        model: &ProximityModel,
        config: &PipelineConfig,
    ) -> Result<Vec<(AssociateHash, PipelineOutput)>, SimError> {
        let resolver = EpochResolver::for_span(&self.roster, 0, self.scenario.duration_ms, self.scenario.rotation_ms, 1)
            .map_err(|e| SimError::InvalidScenario(e.to_string()))?;
        let mut out = Vec::new();
        for rx in 0..self.scenario.agents.len() {
            if !self.has_device(rx) {
                continue;
            }
            let own = self.truth.agents[rx];
            let mut pipeline =
                DevicePipeline::new(own, model.clone(), config.clone(), |t: &TokenBytes, ms| resolver.resolve_at(t, ms));
            let result =
                pipeline.process(&self.receiver_stream(rx)).map_err(|e| SimError::InvalidScenario(e.to_string()))?;
            out.push((own, result));
        }
        Ok(out)
    }

    /// All detected events across devices, sorted.
    pub fn detected_events(&self, model: &ProximityModel, config: &PipelineConfig) -> Result<Vec<ProximityEvent>, SimError> {
        let mut events: Vec<ProximityEvent> = self.detect(model, config)?.into_iter().flat_map(|(_, o)| o.events).collect();
        crate::zone::sort_events(&mut events);
        Ok(events)
    }
}

/// Everything a scenario produces, materialized.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioOutput {
    pub streams: Vec<(AssociateHash, Vec<RssiSample>)>,
    pub ground_truth: GroundTruth,
    pub access_logs: Vec<AccessLogEntry>,
    pub token_schedule: Vec<TokenScheduleEntry>,
    pub roster: Vec<DeviceSecret>,
}

pub fn run_scenario(scenario: &Scenario) -> Result<ScenarioOutput, SimError> {
    Ok(SimRun::new(scenario.clone())?.output())
}

impl SimRun {
    /// Materialize every stream, log and schedule of this run.
    pub fn output(&self) -> ScenarioOutput {
        let streams = (0..self.truth.agents.len())
            .filter(|&i| self.has_device(i))
            .map(|i| (self.truth.agents[i], self.receiver_stream(i)))
            .collect();
        ScenarioOutput {
            streams,
            access_logs: self.access_logs(),
            token_schedule: self.token_schedule(),
            roster: self.roster.clone(),
            ground_truth: self.truth.clone(),
        }
    }
}

impl ScenarioOutput {
    /// Writes `rssi.csv`, `positions.csv`, `access_log.csv`, `tokens.csv` and
    /// `roster.csv` into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<(), SimError> {
        fs::create_dir_all(dir)?;
        let mut rssi = BufWriter::new(fs::File::create(dir.join("rssi.csv"))?);
        writeln!(rssi, "receiver_hash,peer_token,rssi_dbm,tx_power_dbm,timestamp_ms,ambience")?;
        for (owner, samples) in &self.streams {
            for s in samples {
                let ambience = serde_json::to_value(s.ambience).expect("enum serializes");
                writeln!(
                    rssi,
                    "{owner},{},{},{},{},{}",
                    s.peer_token,
                    s.rssi_dbm,
                    s.tx_power_dbm,
                    s.timestamp_ms,
                    ambience.as_str().unwrap_or_default()
                )?;
            }
        }
        rssi.flush()?;
        self.ground_truth.write_positions(fs::File::create(dir.join("positions.csv"))?)?;
        write_access_log(&self.access_logs, fs::File::create(dir.join("access_log.csv"))?)
            .map_err(|e| SimError::Io(e.to_string()))?;
        let mut tokens = BufWriter::new(fs::File::create(dir.join("tokens.csv"))?);
        writeln!(tokens, "owner_hash,epoch_index,token")?;
        for t in &self.token_schedule {
            writeln!(tokens, "{},{},{}", t.owner, t.epoch_index, t.token)?;
        }
        tokens.flush()?;
        write_roster(&self.roster, fs::File::create(dir.join("roster.csv"))?)?;
        Ok(())
    }
}
