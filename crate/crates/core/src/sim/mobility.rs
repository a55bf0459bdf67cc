use super::{Agent, Scenario};

/// One constant-velocity leg; dwells are legs with `from == to`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Leg {
    t0: f64,
    t1: f64,
    from: (f64, f64),
    to: (f64, f64),
}

/// An agent's route as a function of time. After the last dwell the agent
/// stays at its final waypoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    legs: Vec<Leg>,
}

impl Trajectory {
    pub fn new(agent: &Agent) -> Self {
        let mut legs = Vec::with_capacity(agent.waypoints.len() * 2);
        let mut t = 0.0;
        let mut at = match agent.waypoints.first() {
            Some(w) => (w.x, w.y),
            None => return Trajectory { legs },
        };
        for (i, w) in agent.waypoints.iter().enumerate() {
            let target = (w.x, w.y);
            if i > 0 {
                let dist = (target.0 - at.0).hypot(target.1 - at.1);
                let travel = dist / agent.speed_mps * 1000.0;
                if travel > 0.0 {
                    legs.push(Leg { t0: t, t1: t + travel, from: at, to: target });
                    t += travel;
                }
                at = target;
            }
            if w.dwell_ms > 0 {
                legs.push(Leg { t0: t, t1: t + w.dwell_ms as f64, from: at, to: at });
                t += w.dwell_ms as f64;
            }
        }
        if legs.is_empty() {
            legs.push(Leg { t0: 0.0, t1: 0.0, from: at, to: at });
        }
        Trajectory { legs }
    }

    /// Time at which the agent reaches its final waypoint and finishes dwelling.
    pub fn end_ms(&self) -> f64 {
        self.legs.last().map_or(0.0, |l| l.t1)
    }

    pub fn position(&self, t_ms: f64) -> (f64, f64) {
        let i = self.legs.partition_point(|l| l.t1 < t_ms);
        let Some(leg) = self.legs.get(i) else {
            return self.legs.last().map_or((0.0, 0.0), |l| l.to);
        };
        if t_ms <= leg.t0 || leg.t1 <= leg.t0 {
            return leg.from;
        }
        let f = (t_ms - leg.t0) / (leg.t1 - leg.t0);
        (leg.from.0 + f * (leg.to.0 - leg.from.0), leg.from.1 + f * (leg.to.1 - leg.from.1))
    }
}

/// Every agent's position at `t_ms`, in scenario agent order.
pub fn step_mobility(scenario: &Scenario, t_ms: i64) -> Vec<(f64, f64)> {
    scenario.agents.iter().map(|a| Trajectory::new(a).position(t_ms as f64)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::identity::AssociateHash;
    use crate::sim::Waypoint;

    fn agent(waypoints: Vec<Waypoint>) -> Agent {
        Agent { associate_hash: AssociateHash([1; 32]), device_present: true, speed_mps: 1.2, waypoints }
    }

    #[test]
    fn single_waypoint_is_constant() {
        let t = Trajectory::new(&agent(vec![Waypoint::new(3.0, 4.0, 0)]));
        for ms in [0.0, 1.0, 1e9] {
            assert_eq!(t.position(ms), (3.0, 4.0));
        }
    }

    #[test]
    fn straight_leg_kinematics() {
        let t = Trajectory::new(&agent(vec![Waypoint::new(0.0, 0.0, 0), Waypoint::new(12.0, 0.0, 0)]));
        let (x, y) = t.position(5_000.0);
        assert!((x - 6.0).abs() < 1e-12 && y == 0.0);
        assert_eq!(t.position(10_000.0), (12.0, 0.0));
        assert_eq!(t.position(60_000.0), (12.0, 0.0));
    }

    #[test]
    fn dwell_then_move() {
        let t = Trajectory::new(&agent(vec![Waypoint::new(0.0, 0.0, 2_000), Waypoint::new(0.0, 1.2, 500)]));
        assert_eq!(t.position(1_999.0), (0.0, 0.0));
        let (_, y) = t.position(2_500.0);
        assert!((y - 0.6).abs() < 1e-12);
        assert_eq!(t.end_ms(), 3_500.0);
    }
}
