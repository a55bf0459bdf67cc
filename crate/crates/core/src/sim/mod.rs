//! Deterministic workspace simulator.
//!
//! Agents follow waypoint routes across a planar workspace; every device
//! samples the RSSI of every other visible device once per tick through a
//! log-distance path-loss channel with gaussian shadowing. The simulator also
//! records exact pairwise distances (ground truth), access-control intervals
//! for device-free zones, and each device's token schedule.

mod calibrate;
mod channel;
mod family;
mod mobility;
mod run;
mod scenario;
mod scoring;

pub use calibrate::{
    accuracy, calibrate_classifier, calibrate_default, label_windows, log_loss, log_loss_gradient, train_test_split, CalibrationReport, LabeledWindow,
    TrainingConfig, CALIBRATION_AGENTS, CALIBRATION_DURATION_MS, NEAR_THRESHOLD_M, TEST_FRACTION,
};
pub use channel::{rssi_at_distance, ChannelParams};
pub use family::office_scenario;
pub use mobility::{step_mobility, Trajectory};
pub use run::{run_scenario, GroundTruth, ScenarioOutput, SimRun, TokenScheduleEntry};
pub use scenario::{Agent, Scenario, ScenarioFile, Waypoint, Workspace, ZoneArea};
pub use scoring::{episodes, score_detection, DetectionScore, Episode};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("distance must be positive, got {0}")]
    InvalidDistance(f64),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("training data must contain both classes")]
    DegenerateTraining,
    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for SimError {
    fn from(e: std::io::Error) -> Self {
        SimError::Io(e.to_string())
    }
}
