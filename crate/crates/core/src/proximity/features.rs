use serde::{Deserialize, Serialize};

use super::{ObservationWindow, ProximityError};

/// Window statistics over tx-power-corrected RSSI. `std_dbm` is the population
/// standard deviation; `slope_dbm_per_s` is the least-squares slope against time
/// in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub mean_dbm: f64,
    pub std_dbm: f64,
    pub min_dbm: f64,
    pub max_dbm: f64,
    pub median_dbm: f64,
    pub slope_dbm_per_s: f64,
    pub sample_count: usize,
}

impl FeatureVector {
    /// The classifier inputs, in model order.
    pub fn as_array(&self) -> [f64; 6] {
        [self.mean_dbm, self.std_dbm, self.min_dbm, self.max_dbm, self.median_dbm, self.slope_dbm_per_s]
    }
}

pub fn extract_features(window: &ObservationWindow, reference_tx_power: i32) -> Result<FeatureVector, ProximityError> {
    let samples = &window.samples;
    if samples.is_empty() {
        return Err(ProximityError::EmptyWindow);
    }
    let t0 = samples[0].timestamp_ms;
    let corrected = |s: &super::RssiSample| f64::from(s.rssi_dbm - (s.tx_power_dbm - reference_tx_power));

    // Single pass: Welford for mean/variance, running co-moment for the slope.
    let mut n = 0.0;
    let mut mean_y = 0.0;
    let mut m2_y = 0.0;
    let mut mean_x = 0.0;
    let mut m2_x = 0.0;
    let mut c_xy = 0.0;
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    let mut values = Vec::with_capacity(samples.len());
    for s in samples {
        let y = corrected(s);
        let x = (s.timestamp_ms - t0) as f64 / 1000.0;
        n += 1.0;
        let dx = x - mean_x;
        let dy = y - mean_y;
        mean_x += dx / n;
        mean_y += dy / n;
        m2_x += dx * (x - mean_x);
        m2_y += dy * (y - mean_y);
        c_xy += dx * (y - mean_y);
        min = min.min(y);
        max = max.max(y);
        values.push(y);
    }

    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    let median = if values.len() % 2 == 1 { values[mid] } else { (values[mid - 1] + values[mid]) / 2.0 };
    let slope = if m2_x > 0.0 { c_xy / m2_x } else { 0.0 };

    Ok(FeatureVector {
        mean_dbm: mean_y,
        std_dbm: (m2_y / n).max(0.0).sqrt(),
        min_dbm: min,
        max_dbm: max,
        median_dbm: median,
        slope_dbm_per_s: slope,
        sample_count: samples.len(),
    })
}
