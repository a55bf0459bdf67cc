use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{SimError, SimRun};
use crate::proximity::{extract_features, logistic, make_windows, FeatureVector, PipelineConfig, ProximityModel, FEATURE_DIM};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledWindow {
    pub features: FeatureVector,
    pub near: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    /// Clamp the mean-RSSI coefficient at zero after every step so that a
    /// stronger signal never lowers the Near confidence.
    pub monotone_mean: bool,
    pub reference_tx_power: i32,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig { iterations: 2000, learning_rate: 2.0, monotone_mean: true, reference_tx_power: 0 }
    }
}

/// Features of every window each device observes, labeled Near when the
/// true distance to the sender is below `near_threshold_m` on at least half
/// of the window's ticks. Ordered by receiver, then window.
pub fn label_windows(
    run: &SimRun,
    config: &PipelineConfig,
    reference_tx_power: i32,
    near_threshold_m: f64,
) -> Result<Vec<LabeledWindow>, SimError> {
    let truth = run.ground_truth();
    let period = truth.period_ms;
    let mut out = Vec::new();
    for rx in 0..truth.agents.len() {
        let stream = run.receiver_stream(rx);
        let windows = make_windows(&stream, config.window_ms, config.slide_ms)
            .map_err(|e| SimError::InvalidScenario(e.to_string()))?;
        for w in windows {
            let Some(tx) = run.token_owner(&w.peer_token) else { continue };
            let first = (w.window_start_ms + period - 1).div_euclid(period).max(0) as usize;
            let last = ((w.end_ms() + period - 1).div_euclid(period) as usize).min(truth.ticks);
            let ticks = last.saturating_sub(first);
            if ticks == 0 {
                continue;
            }
            let close = (first..last).filter(|&t| truth.distance(t, rx, tx) < near_threshold_m).count();
            let features =
                extract_features(&w, reference_tx_power).map_err(|e| SimError::InvalidScenario(e.to_string()))?;
            out.push(LabeledWindow { features, near: 2 * close >= ticks });
        }
    }
    Ok(out)
}

/// Seeded shuffle, then the first `test_fraction` goes to the test set.
pub fn train_test_split(
    data: &[LabeledWindow],
    test_fraction: f64,
    seed: u64,
) -> (Vec<LabeledWindow>, Vec<LabeledWindow>) {
    let mut shuffled = data.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let cut = ((shuffled.len() as f64) * test_fraction.clamp(0.0, 1.0)).round() as usize;
    let train = shuffled.split_off(cut);
    (train, shuffled)
}

/// Mean cross-entropy of a logistic model over standardized inputs.
pub fn log_loss(weights: &[f64], intercept: f64, xs: &[[f64; FEATURE_DIM]], ys: &[bool]) -> f64 {
    let total: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, &y)| {
            let z = intercept + weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
            // log(1 + e^z) − y·z, stable for either sign of z
            let softplus = if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
            softplus - if y { z } else { 0.0 }
        })
        .sum();
    total / xs.len() as f64
}

/// Analytic gradient of [`log_loss`]: `(d/dw, d/db)`.
pub fn log_loss_gradient(
    weights: &[f64],
    intercept: f64,
    xs: &[[f64; FEATURE_DIM]],
    ys: &[bool],
) -> (Vec<f64>, f64) {
    let mut gw = vec![0.0; weights.len()];
    let mut gb = 0.0;
    for (x, &y) in xs.iter().zip(ys) {
        let z = intercept + weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        let r = logistic(z) - if y { 1.0 } else { 0.0 };
        for (g, v) in gw.iter_mut().zip(x) {
            *g += r * v;
        }
        gb += r;
    }
    let n = xs.len() as f64;
    gw.iter_mut().for_each(|g| *g /= n);
    (gw, gb / n)
}

/// Full-batch gradient descent on standardized features.
pub fn calibrate_classifier(labeled: &[LabeledWindow], config: &TrainingConfig) -> Result<ProximityModel, SimError> {
    let positives = labeled.iter().filter(|l| l.near).count();
    if positives == 0 || positives == labeled.len() {
        return Err(SimError::DegenerateTraining);
    }
    let raw: Vec<[f64; FEATURE_DIM]> = labeled.iter().map(|l| l.features.as_array()).collect();
    let ys: Vec<bool> = labeled.iter().map(|l| l.near).collect();
    let n = raw.len() as f64;

    let mut mean = [0.0; FEATURE_DIM];
    for x in &raw {
        for (m, v) in mean.iter_mut().zip(x) {
            *m += v / n;
        }
    }
    let mut scale = [0.0; FEATURE_DIM];
    for x in &raw {
        for j in 0..FEATURE_DIM {
            scale[j] += (x[j] - mean[j]).powi(2) / n;
        }
    }
    for s in &mut scale {
        *s = if *s > 0.0 { s.sqrt() } else { 1.0 };
    }
    let xs: Vec<[f64; FEATURE_DIM]> =
        raw.iter().map(|x| std::array::from_fn(|j| (x[j] - mean[j]) / scale[j])).collect();

    let mut w = vec![0.0; FEATURE_DIM];
    let mut b = 0.0;
    for _ in 0..config.iterations {
        let (gw, gb) = log_loss_gradient(&w, b, &xs, &ys);
        for (wj, g) in w.iter_mut().zip(&gw) {
            *wj -= config.learning_rate * g;
        }
        b -= config.learning_rate * gb;
        if config.monotone_mean {
            w[0] = w[0].max(0.0);
        }
    }

    Ok(ProximityModel {
        coefficients: w,
        intercept: b,
        feature_mean: mean.to_vec(),
        feature_scale: scale.to_vec(),
        reference_tx_power: config.reference_tx_power,
    })
}

pub const NEAR_THRESHOLD_M: f64 = 2.0;
pub const CALIBRATION_AGENTS: usize = 20;
pub const CALIBRATION_DURATION_MS: i64 = 30 * 60_000;
pub const TEST_FRACTION: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationReport {
    pub seed: u64,
    pub windows: usize,
    pub near_windows: usize,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    /// Accuracy on held-out Near windows only.
    pub test_near_recall: f64,
    pub model: ProximityModel,
}

/// The standard recipe: simulate the default office for `seed`, label every
/// window at 2 m, hold out 30% with a seeded shuffle and fit the rest.
pub fn calibrate_default(seed: u64) -> Result<CalibrationReport, SimError> {
    let run = SimRun::new(super::office_scenario(seed, CALIBRATION_AGENTS, CALIBRATION_DURATION_MS))?;
    let config = TrainingConfig::default();
    let data = label_windows(&run, &PipelineConfig::default(), config.reference_tx_power, NEAR_THRESHOLD_M)?;
    let (train, test) = train_test_split(&data, TEST_FRACTION, seed);
    let model = calibrate_classifier(&train, &config)?;
    let near: Vec<LabeledWindow> = test.iter().copied().filter(|l| l.near).collect();
    Ok(CalibrationReport {
        seed,
        windows: data.len(),
        near_windows: data.iter().filter(|l| l.near).count(),
        train_accuracy: accuracy(&model, &train),
        test_accuracy: accuracy(&model, &test),
        test_near_recall: accuracy(&model, &near),
        model,
    })
}

/// Fraction of windows whose verdict matches the label.
pub fn accuracy(model: &ProximityModel, data: &[LabeledWindow]) -> f64 {
    if data.is_empty() {
        return 1.0;
    }
    let hits = data
        .iter()
        .filter(|l| crate::proximity::classify_proximity(&l.features, model).is_ok_and(|v| v.is_near() == l.near))
        .count();
    hits as f64 / data.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn window(mean: f64, near: bool) -> LabeledWindow {
        LabeledWindow {
            features: FeatureVector {
                mean_dbm: mean,
                std_dbm: 2.0,
                min_dbm: mean - 3.0,
                max_dbm: mean + 3.0,
                median_dbm: mean,
                slope_dbm_per_s: 0.0,
                sample_count: 10,
            },
            near,
        }
    }

    #[test]
    fn separable_set_is_fit_exactly() {
        let data: Vec<_> = (0..40).map(|i| window(-80.0 + f64::from(i), i >= 20)).collect();
        let model = calibrate_classifier(&data, &TrainingConfig::default()).unwrap();
        assert_eq!(accuracy(&model, &data), 1.0);
        assert!(model.coefficients[0] > 0.0);
    }

    #[test]
    fn single_class_is_rejected() {
        let data: Vec<_> = (0..5).map(|i| window(f64::from(i), true)).collect();
        assert_eq!(calibrate_classifier(&data, &TrainingConfig::default()), Err(SimError::DegenerateTraining));
        assert_eq!(calibrate_classifier(&[], &TrainingConfig::default()), Err(SimError::DegenerateTraining));
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let xs: Vec<[f64; FEATURE_DIM]> =
            (0..200).map(|_| std::array::from_fn(|_| rng.random_range(-2.0..2.0))).collect();
        let ys: Vec<bool> = xs.iter().map(|x| x[0] + 0.3 * x[1] + rng.random_range(-0.5..0.5) > 0.0).collect();
        let w: Vec<f64> = (0..FEATURE_DIM).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b = 0.2;
        let (gw, gb) = log_loss_gradient(&w, b, &xs, &ys);
        let h = 1e-6;
        for j in 0..FEATURE_DIM {
            let mut up = w.clone();
            let mut down = w.clone();
            up[j] += h;
            down[j] -= h;
            let fd = (log_loss(&up, b, &xs, &ys) - log_loss(&down, b, &xs, &ys)) / (2.0 * h);
            assert!((fd - gw[j]).abs() <= 1e-5 * gw[j].abs().max(1e-3), "coefficient {j}");
        }
        let fd = (log_loss(&w, b + h, &xs, &ys) - log_loss(&w, b - h, &xs, &ys)) / (2.0 * h);
        assert!((fd - gb).abs() <= 1e-5 * gb.abs().max(1e-3));
    }

    #[test]
    fn split_is_seeded() {
        let data: Vec<_> = (0..100).map(|i| window(f64::from(i), i % 2 == 0)).collect();
        let (a_train, a_test) = train_test_split(&data, 0.3, 1);
        let (b_train, b_test) = train_test_split(&data, 0.3, 1);
        assert_eq!((a_train.len(), a_test.len()), (70, 30));
        assert_eq!(a_test, b_test);
        assert_eq!(a_train, b_train);
        assert_ne!(train_test_split(&data, 0.3, 2).1, a_test);
    }
}
