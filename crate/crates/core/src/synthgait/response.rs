//! Toy participant response to haptic pulses, used to close the loop in
//! simulation. The gains are invented scaffolding, not measured behaviour.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResponseMode {
    Responder,
    Nonresponder,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResponseModel {
    pub mode: ResponseMode,
    /// Multiplicative change of the next stride's peak after a pulse.
    pub gain: f64,
    /// Fraction of the gap to the consolidated level closed per unpulsed stride.
    pub relax_rate: f64,
    /// Fraction of the post-pulse gap absorbed into the consolidated level.
    pub consolidation: f64,
    /// Bounds on the peak, as factors of the initial peak.
    pub min_factor: f64,
    pub max_factor: f64,
}

impl ResponseModel {
    pub fn responder() -> Self {
        ResponseModel {
            mode: ResponseMode::Responder,
            gain: 0.08,
            relax_rate: 0.2,
            consolidation: 0.02,
            min_factor: 0.7,
            max_factor: 1.3,
        }
    }

    pub fn nonresponder() -> Self {
        ResponseModel {
            mode: ResponseMode::Nonresponder,
            gain: -0.01,
            relax_rate: 0.2,
            consolidation: 0.5,
            min_factor: 0.85,
            max_factor: 1.01,
        }
    }

    pub fn for_mode(mode: ResponseMode) -> Self {
        match mode {
            ResponseMode::Responder => Self::responder(),
            ResponseMode::Nonresponder => Self::nonresponder(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResponseState {
    pub initial_peak: f64,
    /// Level the peak relaxes toward without feedback.
    pub consolidated_peak: f64,
    pub current_peak: f64,
}

impl ResponseState {
    pub fn new(initial_peak: f64) -> Self {
        ResponseState {
            initial_peak,
            consolidated_peak: initial_peak,
            current_peak: initial_peak,
        }
    }
}

/// Advances one stride and returns the next stride's peak.
pub fn step_response(model: &ResponseModel, state: &mut ResponseState, pulsed: bool) -> f64 {
    let lo = state.initial_peak * model.min_factor;
    let hi = state.initial_peak * model.max_factor;
    if pulsed {
        state.current_peak = (state.current_peak * (1.0 + model.gain)).clamp(lo, hi);
        state.consolidated_peak = (state.consolidated_peak
            + model.consolidation * (state.current_peak - state.consolidated_peak))
            .clamp(lo, hi);
    } else {
        state.current_peak += model.relax_rate * (state.consolidated_peak - state.current_peak);
    }
    state.current_peak
}
