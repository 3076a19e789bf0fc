//! Sliding-window CNN-LSTM estimator of paretic AGRF.
//!
//! Each estimate is computed from the current and five previous frames. The
//! window passes through a valid 1-D convolution (ReLU), a single LSTM layer
//! run over the convolution output from a zero state, dropout (training only),
//! a ReLU dense layer and a scalar output.

mod grad;
mod init;
mod latency;
mod net;
mod train;
mod weights;

use std::collections::VecDeque;
use std::time::Instant;

use thiserror::Error;

use crate::frame::{AgrfEstimate, KinematicFrame, SegmentId};

pub use grad::{compute_gradients, finite_difference_check, Batch, DropoutMasks, GradCheck};
pub use init::random_weights;
pub use latency::{measure_latency, LatencyStats};
pub use net::{conv1d_forward, forward_window, lstm_step, ForwardTrace, LstmState};
pub use train::{
    build_dataset, dataset_from_sequences, train_reference, train_synthetic, Dataset, Hyperparams,
    TrainOutcome, REFERENCE_PROFILES, REFERENCE_SECONDS,
};
pub use weights::{
    load_weights, Architecture, FeatureNorm, ModelWeights, Params, BLOB_NAMES, WEIGHTS_MAGIC,
};

/// Frames per inference window.
pub const WINDOW_FRAMES: usize = 6;
/// Free acceleration and angular velocity of each of the seven segments.
pub const FEATURE_CHANNELS: usize = 42;
pub const DROPOUT_RATE: f64 = 0.3;
/// Outputs are clamped into the walking sanity band.
pub const OUTPUT_LIMIT_BW: f64 = 0.999;

static REFERENCE_WEIGHTS: &[u8] = include_bytes!("../../assets/reference.agrfw");

/// Weights produced by [`train_synthetic`] with default hyperparameters.
pub fn reference_weights() -> ModelWeights {
    load_weights(REFERENCE_WEIGHTS).expect("embedded reference weights are valid")
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("bad weight file header: {0}")]
    BadHeader(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("weights contain a non-finite value")]
    NonFiniteWeight,
    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("empty batch")]
    EmptyBatch,
}

/// Raw (unnormalized) 42-channel feature vector of one frame.
pub fn raw_features(frame: &KinematicFrame) -> [f64; FEATURE_CHANNELS] {
    let mut out = [0.0; FEATURE_CHANNELS];
    for id in SegmentId::ALL {
        let s = frame.segment(id);
        let base = id.index() * 6;
        for k in 0..3 {
            out[base + k] = s.free_accel[k] as f64;
            out[base + 3 + k] = s.ang_vel[k] as f64;
        }
    }
    out
}

fn normalize_into(raw: &[f64], norm: &FeatureNorm, out: &mut Vec<f64>) {
    out.clear();
    out.extend(
        raw.iter()
            .zip(norm.mean.iter().zip(&norm.scale))
            .map(|(x, (m, s))| (x - m) / s),
    );
}

/// Per-stream ring buffer of normalized feature vectors.
#[derive(Debug, Clone)]
pub struct InferenceState {
    window: VecDeque<Vec<f64>>,
    frames_seen: u64,
    scratch: Vec<f64>,
}

impl Default for InferenceState {
    fn default() -> Self {
        Self::new()
    }
}

impl InferenceState {
    pub fn new() -> Self {
        InferenceState {
            window: VecDeque::with_capacity(WINDOW_FRAMES),
            frames_seen: 0,
            scratch: Vec::with_capacity(WINDOW_FRAMES * FEATURE_CHANNELS),
        }
    }

    pub fn frames_seen(&self) -> u64 {
        self.frames_seen
    }

    pub fn is_warm(&self) -> bool {
        self.window.len() == WINDOW_FRAMES
    }

    pub fn reset(&mut self) {
        self.window.clear();
        self.frames_seen = 0;
    }
}

/// Pushes one frame and, once six frames are buffered, evaluates the model on
/// the window ending at this frame. Warm-up frames yield `agrf_bw = 0`.
pub fn predict_frame(
    state: &mut InferenceState,
    frame: &KinematicFrame,
    weights: &ModelWeights,
) -> Result<AgrfEstimate, EstimatorError> {
    let started = Instant::now();
    if weights.arch.input_channels != FEATURE_CHANNELS {
        return Err(EstimatorError::ShapeMismatch(format!(
            "model expects {} channels, frames provide {FEATURE_CHANNELS}",
            weights.arch.input_channels
        )));
    }
    let raw = raw_features(frame);
    let mut features = if state.window.len() == WINDOW_FRAMES {
        state.window.pop_front().unwrap()
    } else {
        Vec::with_capacity(FEATURE_CHANNELS)
    };
    normalize_into(&raw, &weights.norm, &mut features);
    state.window.push_back(features);
    state.frames_seen += 1;

    let (agrf_bw, warmed_up) = if state.is_warm() {
        state.scratch.clear();
        for row in &state.window {
            state.scratch.extend_from_slice(row);
        }
        (clamp_output(forward_window(weights, &state.scratch)?), true)
    } else {
        (0.0, false)
    };
    Ok(AgrfEstimate {
        timestamp_us: frame.timestamp_us,
        agrf_bw,
        warmed_up,
        latency_us: started.elapsed().as_micros() as u64,
    })
}

pub(crate) fn clamp_output(y: f64) -> f64 {
    y.clamp(-OUTPUT_LIMIT_BW, OUTPUT_LIMIT_BW)
}

/// Normalized feature matrix of a whole sequence, one row per frame.
pub fn feature_matrix(frames: &[KinematicFrame], norm: &FeatureNorm) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(frames.len());
    for f in frames {
        let mut row = Vec::with_capacity(FEATURE_CHANNELS);
        normalize_into(&raw_features(f), norm, &mut row);
        out.push(row);
    }
    out
}

/// Evaluates every window of a recorded sequence at once: row `i` is
/// estimated from rows `i-5..=i`. Latency fields are zero.
pub fn predict_sequence(
    frames: &[KinematicFrame],
    weights: &ModelWeights,
) -> Result<Vec<AgrfEstimate>, EstimatorError> {
    let features = feature_matrix(frames, &weights.norm);
    let mut out = Vec::with_capacity(frames.len());
    let mut window = Vec::with_capacity(WINDOW_FRAMES * FEATURE_CHANNELS);
    for (i, frame) in frames.iter().enumerate() {
        let (agrf_bw, warmed_up) = if i + 1 >= WINDOW_FRAMES {
            window.clear();
            for row in &features[i + 1 - WINDOW_FRAMES..=i] {
                window.extend_from_slice(row);
            }
            (clamp_output(forward_window(weights, &window)?), true)
        } else {
            (0.0, false)
        };
        out.push(AgrfEstimate {
            timestamp_us: frame.timestamp_us,
            agrf_bw,
            warmed_up,
            latency_us: 0,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_five_frames_are_warm_up() {
        let w = random_weights(Architecture::FULL, 2);
        let mut st = InferenceState::new();
        for i in 0..8u64 {
            let est = predict_frame(&mut st, &KinematicFrame::at_rest(i * 20_000), &w).unwrap();
            if i < 5 {
                assert!(!est.warmed_up);
                assert_eq!(est.agrf_bw, 0.0);
            } else {
                assert!(est.warmed_up);
            }
        }
        assert_eq!(st.frames_seen(), 8);
    }

    #[test]
    fn zero_weights_output_dense2_bias() {
        let mut w = ModelWeights::zeros(Architecture::FULL);
        w.params.dense2_b[0] = 0.0731;
        let mut st = InferenceState::new();
        let mut last = None;
        for i in 0..7u64 {
            let mut f = KinematicFrame::at_rest(i * 20_000);
            f.segments[3].free_accel = [i as f32, -2.0, 0.5];
            last = Some(predict_frame(&mut st, &f, &w).unwrap());
        }
        assert_eq!(last.unwrap().agrf_bw, 0.0731);
    }

    #[test]
    fn channel_count_mismatch_is_reported() {
        let arch = Architecture {
            input_channels: 3,
            ..Architecture::FULL
        };
        let w = ModelWeights::zeros(arch);
        let r = predict_frame(&mut InferenceState::new(), &KinematicFrame::at_rest(0), &w);
        assert!(matches!(r, Err(EstimatorError::ShapeMismatch(_))));
    }
}
