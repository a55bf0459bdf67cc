//! The default office layout used for calibration and end-to-end scoring.
//!
//! ```text
//!  y=32 +-----------------------------------+---------------+
//!       |  desks: 9 columns x 6 rows        |  lab (no      |
//!       |  4 m apart across, 5 m between    |  devices)     |
//!       |  rows, corridors half-way between |  y >= 22      |
//!       |  rows                       aisle +---------------+
//!       |                             x=37  |  meeting      |
//!       |                                   |  tables (6    |
//!       |                                   |  seats each)  |
//!  y=0  +-----------------------------------+---------------+
//!       x=0                                              x=56
//! ```
//!
//! Agents start at their desk, then repeatedly pick a meeting, a lab visit or
//! desk work. Everyone walks along corridors and the main aisle, so passers-by
//! stay 2.5 m or more from seated colleagues.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Agent, ChannelParams, Scenario, Waypoint, Workspace, ZoneArea};
use crate::event::Ambience;
use crate::identity::{hash_identity, DEFAULT_ROTATION_MS};
use crate::proximity::Geofence;
use crate::zone::ZoneDef;

const WIDTH_M: f64 = 56.0;
const HEIGHT_M: f64 = 32.0;
const AISLE_X: f64 = 37.0;
const TABLES: [(f64, f64); 3] = [(44.0, 5.0), (50.0, 12.0), (44.0, 17.0)];
const SEAT_RADIUS_M: f64 = 0.7;
const LAB: [f64; 4] = [40.0, 22.0, 56.0, 32.0];
const LAB_DOOR: (f64, f64) = (AISLE_X, 27.0);
const MINUTE: i64 = 60_000;

#[derive(Clone, Copy)]
enum Place {
    Desk(usize),
    Seat { table: usize, seat: usize },
    Lab(f64, f64),
}

fn desk(i: usize) -> (f64, f64) {
    let (col, row) = (i % 9, (i / 9) % 6);
    // beyond 54 agents, desks are shared at a 1 m offset
    let shift = (i / 54) as f64;
    (2.0 + 4.0 * col as f64 + shift, 2.0 + 5.0 * row as f64)
}

fn point(place: Place) -> (f64, f64) {
    match place {
        Place::Desk(i) => desk(i),
        Place::Seat { table, seat } => {
            let (cx, cy) = TABLES[table];
            let a = std::f64::consts::TAU * seat as f64 / 6.0;
            (cx + SEAT_RADIUS_M * a.cos(), cy + SEAT_RADIUS_M * a.sin())
        }
        Place::Lab(x, y) => (x, y),
    }
}

/// Where a place joins the aisle network.
fn access(place: Place) -> (f64, f64) {
    match place {
        Place::Desk(i) => {
            let (x, y) = desk(i);
            (x, y + 2.5)
        }
        Place::Seat { table, .. } => (AISLE_X, TABLES[table].1),
        Place::Lab(..) => LAB_DOOR,
    }
}

fn route(from: Place, to: Place) -> Vec<(f64, f64)> {
    let (a, b) = (access(from), access(to));
    let mut path = vec![a, (AISLE_X, a.1), (AISLE_X, b.1), b, point(to)];
    path.dedup();
    path
}

/// A seeded office of `agents` associates for `duration_ms`.
pub fn office_scenario(seed: u64, agents: usize, duration_ms: i64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let salt: [u8; 16] = rng.random();
    let speed = 1.2;
    let mut out = Vec::with_capacity(agents);
    for i in 0..agents {
        let home = Place::Desk(i);
        let (hx, hy) = point(home);
        let mut waypoints = vec![Waypoint::new(hx, hy, rng.random_range(0..10 * MINUTE))];
        let mut at = home;
        let mut t = waypoints[0].dwell_ms as f64;
        while t < duration_ms as f64 {
            let roll: f64 = rng.random();
            let (next, dwell) = if roll < 0.4 {
                let seat = Place::Seat { table: rng.random_range(0..TABLES.len()), seat: rng.random_range(0..6) };
                (seat, rng.random_range(4 * MINUTE..12 * MINUTE))
            } else if roll < 0.55 {
                let lab = Place::Lab(rng.random_range(LAB[0] + 2.0..LAB[2] - 2.0), rng.random_range(LAB[1] + 2.0..LAB[3] - 1.0));
                (lab, rng.random_range(5 * MINUTE..15 * MINUTE))
            } else {
                (home, rng.random_range(5 * MINUTE..15 * MINUTE))
            };
            if matches!((at, next), (Place::Desk(_), Place::Desk(_))) {
                waypoints.last_mut().expect("starts with the desk").dwell_ms += dwell;
                t += dwell as f64;
                continue;
            }
            let mut prev = point(at);
            let mut legs = route(at, next);
            // leave the current place through its own access point first
            legs.insert(0, access(at));
            legs.dedup();
            for (k, p) in legs.iter().enumerate() {
                t += (p.0 - prev.0).hypot(p.1 - prev.1) / speed * 1000.0;
                prev = *p;
                let d = if k + 1 == legs.len() { dwell } else { 0 };
                waypoints.push(Waypoint::new(p.0, p.1, d));
            }
            t += dwell as f64;
            at = next;
        }
        out.push(Agent {
            associate_hash: hash_identity(&format!("associate-{i:04}"), &salt).expect("non-empty id").associate_hash,
            device_present: true,
            speed_mps: speed,
            waypoints,
        });
    }

    Scenario {
        seed,
        duration_ms,
        sample_period_ms: 1000,
        rotation_ms: DEFAULT_ROTATION_MS,
        ambience: Ambience::Indoor,
        tx_offset_range_db: (-8, 4),
        workspace: Workspace {
            width_m: WIDTH_M,
            height_m: HEIGHT_M,
            zones: vec![ZoneArea {
                zone: ZoneDef { zone_id: "lab".into(), personal_devices_allowed: false, capacity: 16 },
                rect: LAB,
            }],
            geofence: Some(Geofence::rectangle(WIDTH_M, HEIGHT_M).expect("positive size")),
        },
        channel: ChannelParams::indoor(),
        agents: out,
    }
}
