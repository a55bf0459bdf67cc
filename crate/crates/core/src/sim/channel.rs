use serde::{Deserialize, Serialize};

use super::SimError;

/// Log-distance path loss with gaussian shadowing, referenced to 1 m.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelParams {
    pub tx_power_dbm: f64,
    /// Path loss at the 1 m reference distance.
    pub pl0_db: f64,
    /// 2.0 in free space / outdoors, 2.7 for a typical indoor floor.
    pub path_loss_exponent: f64,
    pub shadow_sigma_db: f64,
    /// Samples weaker than this are not received.
    pub detection_floor_dbm: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        ChannelParams::indoor()
    }
}

impl ChannelParams {
    pub fn indoor() -> Self {
        ChannelParams {
            tx_power_dbm: 0.0,
            pl0_db: 40.0,
            path_loss_exponent: 2.7,
            shadow_sigma_db: 4.0,
            detection_floor_dbm: -95.0,
        }
    }

    pub fn outdoor() -> Self {
        ChannelParams { path_loss_exponent: 2.0, ..Self::indoor() }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.path_loss_exponent > 0.0) {
            return Err(SimError::InvalidScenario("path loss exponent must be positive".into()));
        }
        if !(self.shadow_sigma_db >= 0.0) {
            return Err(SimError::InvalidScenario("shadowing sigma must be non-negative".into()));
        }
        Ok(())
    }
}

/// Received power at distance `d_m` with the given shadowing draw (dB), or
/// `None` below the detection floor.
pub fn rssi_at_distance(d_m: f64, params: &ChannelParams, noise_db: f64) -> Result<Option<f64>, SimError> {
    if !(d_m > 0.0) || !d_m.is_finite() {
        return Err(SimError::InvalidDistance(d_m));
    }
    let rssi = params.tx_power_dbm - params.pl0_db - 10.0 * params.path_loss_exponent * d_m.log10() + noise_db;
    Ok((rssi >= params.detection_floor_dbm).then_some(rssi))
}
