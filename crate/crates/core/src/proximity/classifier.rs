use serde::{Deserialize, Serialize};

use super::{FeatureVector, ProximityError};

pub const FEATURE_DIM: usize = 6;
pub const FEATURE_NAMES: [&str; FEATURE_DIM] = ["mean", "std", "min", "max", "median", "slope"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Near,
    Far,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProximityVerdict {
    pub class: Verdict,
    /// Near-probability.
    pub confidence: f64,
}

impl ProximityVerdict {
    pub fn from_confidence(confidence: f64) -> Self {
        let class = if confidence >= 0.5 { Verdict::Near } else { Verdict::Far };
        ProximityVerdict { class, confidence }
    }

    pub fn is_near(&self) -> bool {
        self.class == Verdict::Near
    }
}

/// Logistic regression over standardized features. Standardization parameters
/// ship with the coefficients so a model is self-contained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProximityModel {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub feature_mean: Vec<f64>,
    pub feature_scale: Vec<f64>,
    pub reference_tx_power: i32,
}

impl ProximityModel {
    pub fn zeros() -> Self {
        ProximityModel {
            coefficients: vec![0.0; FEATURE_DIM],
            intercept: 0.0,
            feature_mean: vec![0.0; FEATURE_DIM],
            feature_scale: vec![1.0; FEATURE_DIM],
            reference_tx_power: 0,
        }
    }

    /// Coefficients fitted on the default simulated workspace (see
    /// `sim::calibrate_classifier` and the `calibrate` CLI subcommand).
    pub fn shipped() -> Self {
        ProximityModel {
            coefficients: SHIPPED_COEFFICIENTS.to_vec(),
            intercept: SHIPPED_INTERCEPT,
            feature_mean: SHIPPED_MEAN.to_vec(),
            feature_scale: SHIPPED_SCALE.to_vec(),
            reference_tx_power: 0,
        }
    }

    pub fn check(&self) -> Result<(), ProximityError> {
        for len in [self.coefficients.len(), self.feature_mean.len(), self.feature_scale.len()] {
            if len != FEATURE_DIM {
                return Err(ProximityError::ModelMismatch { expected: len, got: FEATURE_DIM });
            }
        }
        Ok(())
    }

    pub fn standardize(&self, raw: &[f64; FEATURE_DIM]) -> [f64; FEATURE_DIM] {
        let mut z = [0.0; FEATURE_DIM];
        for i in 0..FEATURE_DIM {
            z[i] = (raw[i] - self.feature_mean[i]) / self.feature_scale[i];
        }
        z
    }

    pub fn score(&self, standardized: &[f64; FEATURE_DIM]) -> f64 {
        self.intercept + self.coefficients.iter().zip(standardized).map(|(c, x)| c * x).sum::<f64>()
    }
}

pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn classify_proximity(features: &FeatureVector, model: &ProximityModel) -> Result<ProximityVerdict, ProximityError> {
    model.check()?;
    let z = model.standardize(&features.as_array());
    Ok(ProximityVerdict::from_confidence(logistic(model.score(&z))))
}

// Fitted by `proxigraph calibrate --seed 7` on the default 20-agent scenario family.
const SHIPPED_COEFFICIENTS: [f64; FEATURE_DIM] = [
    1.4086057755933203,
    -0.047851207200102844,
    0.7431821163124404,
    0.8824811075599306,
    1.819108359190188,
    -0.1062623839533386,
];
const SHIPPED_INTERCEPT: f64 = -11.205785876393351;
const SHIPPED_MEAN: [f64; FEATURE_DIM] = [
    -71.34858422831222,
    3.7396348686380163,
    -77.51480545730638,
    -65.14620178541827,
    -71.35607209028086,
    -0.007373617960575186,
];
const SHIPPED_SCALE: [f64; FEATURE_DIM] = [
    10.01919671413975,
    1.0345132357321618,
    10.05407770296203,
    10.398791543417225,
    10.071509216336292,
    0.6140625705178306,
];
