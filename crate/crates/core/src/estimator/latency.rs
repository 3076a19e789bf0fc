use std::time::Instant;

use super::{predict_frame, InferenceState, ModelWeights};
use crate::synthgait::{GaitProfile, Walker};

#[derive(Debug, Clone, PartialEq)]
pub struct LatencyStats {
    pub samples_us: Vec<f64>,
    pub p50_us: f64,
    pub p95_us: f64,
    pub max_us: f64,
}

impl LatencyStats {
    /// Nearest-rank percentiles over the given samples.
    pub fn from_samples(samples_us: Vec<f64>) -> Self {
        let mut sorted = samples_us.clone();
        sorted.sort_by(f64::total_cmp);
        let pick = |q: f64| {
            if sorted.is_empty() {
                return 0.0;
            }
            let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
            sorted[rank - 1]
        };
        LatencyStats {
            p50_us: pick(0.50),
            p95_us: pick(0.95),
            max_us: sorted.last().copied().unwrap_or(0.0),
            samples_us,
        }
    }
}

/// Times `predict_frame` over a replayed synthetic walking stream of
/// `n_frames` frames (intended for `n_frames >= 100`).
pub fn measure_latency(weights: &ModelWeights, n_frames: usize) -> LatencyStats {
    let mut walker = Walker::new(GaitProfile::default(), 0);
    let frames: Vec<_> = (0..n_frames).map(|_| walker.next_frame().frame).collect();
    let mut state = InferenceState::new();
    let mut samples = Vec::with_capacity(n_frames);
    for f in &frames {
        let start = Instant::now();
        let est = predict_frame(&mut state, f, weights);
        let elapsed = start.elapsed().as_secs_f64() * 1e6;
        debug_assert!(est.is_ok());
        samples.push(elapsed);
    }
    LatencyStats::from_samples(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::{random_weights, Architecture};

    #[test]
    fn counts_every_frame() {
        let w = random_weights(Architecture::FULL, 1);
        let stats = measure_latency(&w, 1000);
        assert_eq!(stats.samples_us.len(), 1000);
        assert!(stats.p50_us <= stats.p95_us && stats.p95_us <= stats.max_us);
    }

    #[test]
    fn percentiles_nearest_rank() {
        let s = LatencyStats::from_samples((1..=100).map(f64::from).collect());
        assert_eq!(s.p50_us, 50.0);
        assert_eq!(s.p95_us, 95.0);
        assert_eq!(s.max_us, 100.0);
    }
}
