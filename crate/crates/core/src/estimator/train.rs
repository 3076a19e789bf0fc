//! Desk-scale reference trainer: plain mini-batch gradient descent on the
//! mean-squared error, deterministic in the seed.
//!
//! Targets are standardized during training and the scaling is folded back
//! into the output layer, so the saved model predicts body weights directly.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::grad::{backprop_sample, DropoutMasks};
use super::init::random_weights;
use super::net::forward_trace;
use super::weights::{Architecture, FeatureNorm, ModelWeights, Params};
use super::{raw_features, EstimatorError, DROPOUT_RATE, WINDOW_FRAMES};
use crate::frame::KinematicFrame;
use crate::synthgait;

/// One recorded stream: raw feature rows and per-frame AGRF targets.
#[derive(Debug, Clone)]
pub struct Sequence {
    pub features: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub sequences: Vec<Sequence>,
}

impl Dataset {
    pub fn window_count(&self) -> usize {
        self.sequences
            .iter()
            .map(|s| s.features.len().saturating_sub(WINDOW_FRAMES - 1))
            .sum()
    }

    fn channels(&self) -> Option<usize> {
        self.sequences
            .iter()
            .find_map(|s| s.features.first().map(Vec::len))
    }

    fn validate(&self) -> Result<usize, EstimatorError> {
        let c = self
            .channels()
            .ok_or_else(|| EstimatorError::ShapeMismatch("empty dataset".into()))?;
        for s in &self.sequences {
            if s.features.len() != s.targets.len() {
                return Err(EstimatorError::ShapeMismatch(
                    "feature rows and targets differ in length".into(),
                ));
            }
            if s.features.iter().any(|r| r.len() != c) {
                return Err(EstimatorError::ShapeMismatch("ragged feature rows".into()));
            }
        }
        Ok(c)
    }

    /// Mean and standard deviation (floored at 1e-6) of each channel.
    pub fn feature_norm(&self) -> FeatureNorm {
        let c = self.channels().unwrap_or(0);
        let rows = self.sequences.iter().flat_map(|s| s.features.iter());
        let n = rows.clone().count().max(1) as f64;
        let mut mean = vec![0.0; c];
        for r in rows.clone() {
            mean.iter_mut().zip(r).for_each(|(m, v)| *m += v / n);
        }
        let mut var = vec![0.0; c];
        for r in rows {
            var.iter_mut()
                .zip(r.iter().zip(&mean))
                .for_each(|(s, (v, m))| *s += (v - m) * (v - m) / n);
        }
        FeatureNorm {
            mean,
            scale: var.into_iter().map(|v| v.sqrt().max(1e-6)).collect(),
        }
    }

    /// Normalized windows and the target at each window's last frame.
    fn windows(&self, norm: &FeatureNorm) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut windows = Vec::with_capacity(self.window_count());
        let mut targets = Vec::with_capacity(self.window_count());
        for s in &self.sequences {
            let rows: Vec<Vec<f64>> = s
                .features
                .iter()
                .map(|r| {
                    r.iter()
                        .zip(norm.mean.iter().zip(&norm.scale))
                        .map(|(x, (m, sc))| (x - m) / sc)
                        .collect()
                })
                .collect();
            for end in WINDOW_FRAMES - 1..rows.len() {
                windows.push(rows[end + 1 - WINDOW_FRAMES..=end].concat());
                targets.push(s.targets[end]);
            }
        }
        (windows, targets)
    }
}

/// Builds a dataset from recorded frames and their ground-truth AGRF.
pub fn build_dataset(recordings: &[(Vec<KinematicFrame>, Vec<f64>)]) -> Dataset {
    dataset_from_sequences(recordings.iter().map(|(frames, targets)| {
        (
            frames.iter().map(|f| raw_features(f).to_vec()).collect(),
            targets.clone(),
        )
    }))
}

pub fn dataset_from_sequences(
    seqs: impl IntoIterator<Item = (Vec<Vec<f64>>, Vec<f64>)>,
) -> Dataset {
    Dataset {
        sequences: seqs
            .into_iter()
            .map(|(features, targets)| Sequence { features, targets })
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparams {
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
    /// Dropout rate on the LSTM output during training; `None` disables it.
    pub dropout: Option<f64>,
    pub arch: Architecture,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            lr: 0.02,
            epochs: 12,
            batch: 32,
            seed: 7,
            dropout: Some(DROPOUT_RATE),
            arch: Architecture::FULL,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub weights: ModelWeights,
    /// The model before the first update (same output scaling).
    pub initial_weights: ModelWeights,
    /// Full-dataset MSE in BW², without dropout: entry 0 before training,
    /// entry `e` after epoch `e`.
    pub loss_trace: Vec<f64>,
}

fn finalize(
    mut p: Params,
    arch: Architecture,
    norm: &FeatureNorm,
    t_mean: f64,
    t_scale: f64,
) -> ModelWeights {
    p.dense2_w.iter_mut().for_each(|w| *w *= t_scale);
    p.dense2_b[0] = p.dense2_b[0] * t_scale + t_mean;
    let mut w = ModelWeights {
        arch,
        norm: norm.clone(),
        params: p,
    };
    w.round_to_f32();
    w
}

fn full_loss(arch: &Architecture, p: &Params, windows: &[Vec<f64>], targets: &[f64]) -> f64 {
    windows
        .iter()
        .zip(targets)
        .map(|(w, t)| {
            let e = forward_trace(arch, p, w, None).output - t;
            e * e
        })
        .sum::<f64>()
        / windows.len() as f64
}

pub fn train_reference(
    dataset: &Dataset,
    hp: &Hyperparams,
) -> Result<TrainOutcome, EstimatorError> {
    let channels = dataset.validate()?;
    let arch = hp.arch;
    if arch.input_channels != channels {
        return Err(EstimatorError::ShapeMismatch(format!(
            "dataset has {channels} channels, architecture expects {}",
            arch.input_channels
        )));
    }
    if hp.batch == 0 {
        return Err(EstimatorError::EmptyBatch);
    }
    let norm = dataset.feature_norm();
    let (windows, raw_targets) = dataset.windows(&norm);
    if windows.is_empty() {
        return Err(EstimatorError::EmptyBatch);
    }
    let n = raw_targets.len() as f64;
    let t_mean = raw_targets.iter().sum::<f64>() / n;
    let t_scale = (raw_targets
        .iter()
        .map(|t| (t - t_mean).powi(2))
        .sum::<f64>()
        / n)
        .sqrt()
        .max(1e-9);
    let targets: Vec<f64> = raw_targets.iter().map(|t| (t - t_mean) / t_scale).collect();

    let mut params = random_weights(arch, hp.seed).params;
    let initial_weights = finalize(params.clone(), arch, &norm, t_mean, t_scale);
    let to_bw2 = t_scale * t_scale;
    let mut loss_trace = vec![full_loss(&arch, &params, &windows, &targets) * to_bw2];

    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed ^ 0x5eed_cafe);
    let mut order: Vec<usize> = (0..windows.len()).collect();
    let mut grad = Params::zeros(&arch);
    for epoch in 1..=hp.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(hp.batch) {
            grad.scale(0.0);
            let masks = hp
                .dropout
                .map(|rate| DropoutMasks::sample(rate, chunk.len(), arch.lstm_hidden, &mut rng));
            let m = chunk.len() as f64;
            for (s, &idx) in chunk.iter().enumerate() {
                let mask = masks.as_ref().map(|ms| ms.0[s].as_slice());
                let t = targets[idx];
                backprop_sample(
                    &arch,
                    &params,
                    &windows[idx],
                    mask,
                    |y| 2.0 * (y - t) / m,
                    &mut grad,
                );
            }
            params.add_scaled(&grad, -hp.lr);
        }
        let loss = full_loss(&arch, &params, &windows, &targets) * to_bw2;
        if !loss.is_finite() || !params.all_finite() {
            return Err(EstimatorError::Diverged { epoch });
        }
        loss_trace.push(loss);
    }
    Ok(TrainOutcome {
        weights: finalize(params, arch, &norm, t_mean, t_scale),
        initial_weights,
        loss_trace,
    })
}

/// Profiles and seconds per profile in the synthetic reference training set.
pub const REFERENCE_PROFILES: u64 = 4;
pub const REFERENCE_SECONDS: f64 = 60.0;

/// Trains on the synthetic reference set. With default hyperparameters this
/// reproduces the embedded reference weights.
pub fn train_synthetic(hp: &Hyperparams) -> Result<TrainOutcome, EstimatorError> {
    let recordings = synthgait::training_set(REFERENCE_PROFILES, REFERENCE_SECONDS)
        .expect("reference profiles are valid");
    train_reference(&build_dataset(&recordings), hp)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_dataset() -> Dataset {
        // Target is a linear function of one channel of the latest frame.
        let seq: Vec<Vec<f64>> = (0..200)
            .map(|i| {
                let t = i as f64 * 0.02;
                vec![(3.0 * t).sin(), (5.0 * t).cos(), 0.1 * t]
            })
            .collect();
        let targets = seq.iter().map(|r| 0.05 + 0.04 * r[0]).collect();
        dataset_from_sequences([(seq, targets)])
    }

    fn toy_arch() -> Architecture {
        Architecture {
            input_channels: 3,
            conv_filters: 8,
            kernel: 5,
            lstm_hidden: 6,
            dense1: 4,
        }
    }

    #[test]
    fn zero_epochs_returns_initial_weights() {
        let hp = Hyperparams {
            epochs: 0,
            arch: toy_arch(),
            ..Hyperparams::default()
        };
        let out = train_reference(&toy_dataset(), &hp).unwrap();
        assert_eq!(out.weights, out.initial_weights);
        assert_eq!(out.loss_trace.len(), 1);
    }

    #[test]
    fn training_is_deterministic_and_reduces_loss() {
        let hp = Hyperparams {
            epochs: 15,
            arch: toy_arch(),
            ..Hyperparams::default()
        };
        let a = train_reference(&toy_dataset(), &hp).unwrap();
        let b = train_reference(&toy_dataset(), &hp).unwrap();
        assert_eq!(a.weights, b.weights);
        assert_eq!(a.loss_trace, b.loss_trace);
        let last = *a.loss_trace.last().unwrap();
        assert!(last < 0.25 * a.loss_trace[0], "{:?}", a.loss_trace);
    }

    #[test]
    fn huge_learning_rate_diverges() {
        let hp = Hyperparams {
            epochs: 5,
            lr: 1e6,
            dropout: None,
            arch: toy_arch(),
            ..Hyperparams::default()
        };
        assert!(matches!(
            train_reference(&toy_dataset(), &hp),
            Err(EstimatorError::Diverged { .. })
        ));
    }
}
