//! Threshold calibration, faded scheduling and per-stance success detection.

mod schedule;
mod tracker;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use schedule::{schedule_state, FadedSchedule, ScheduleState, MINUTE_US};
pub use tracker::{CompletedStance, StancePeak, StanceTracker};

use crate::frame::AgrfEstimate;
use crate::gaitevents::GaitEvent;

pub const DEFAULT_MULTIPLIER: f64 = 1.05;
/// Baseline peaks below this are treated as non-propulsive artifacts.
pub const MIN_BASELINE_PEAK_BW: f64 = 0.005;
/// Calibrations from fewer stances are marked low-confidence.
pub const MIN_BASELINE_STANCES: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeedbackError {
    #[error("no baseline peaks")]
    EmptyBaseline,
    #[error("no baseline peak reaches {MIN_BASELINE_PEAK_BW} BW")]
    NonPositivePeaks,
    #[error("multiplier must be positive and finite, got {0}")]
    InvalidMultiplier(f64),
    #[error("time {t_s} s lies outside the bout")]
    OutOfBout { t_s: f64 },
    #[error("feedback update before threshold calibration")]
    NoThreshold,
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub baseline_mean_peak: f64,
    pub multiplier: f64,
    pub value: f64,
    /// Peaks that entered the mean.
    pub stances: usize,
    pub low_confidence: bool,
}

pub fn calibrate_threshold(
    baseline_peaks: &[f64],
    multiplier: f64,
) -> Result<Threshold, FeedbackError> {
    if !(multiplier.is_finite() && multiplier > 0.0) {
        return Err(FeedbackError::InvalidMultiplier(multiplier));
    }
    if baseline_peaks.is_empty() {
        return Err(FeedbackError::EmptyBaseline);
    }
    let kept: Vec<f64> = baseline_peaks
        .iter()
        .copied()
        .filter(|p| p.is_finite() && *p >= MIN_BASELINE_PEAK_BW)
        .collect();
    if kept.is_empty() {
        return Err(FeedbackError::NonPositivePeaks);
    }
    let mean = kept.iter().sum::<f64>() / kept.len() as f64;
    Ok(Threshold {
        baseline_mean_peak: mean,
        multiplier,
        value: multiplier * mean,
        stances: kept.len(),
        low_confidence: kept.len() < MIN_BASELINE_STANCES,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriggerCommand {
    pub timestamp_us: u64,
    pub stance_index: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StanceOutcome {
    pub stance_index: u64,
    pub contact_us: u64,
    pub swing_us: u64,
    pub peak_agrf_bw: Option<f64>,
    pub peak_time_us: Option<u64>,
    pub success: bool,
    pub feedback_active: bool,
    pub pulse_sent: bool,
    /// Time the swing-initiation event was emitted and, when `pulse_sent`,
    /// the pulse issued.
    pub trigger_time_us: u64,
    /// One-based schedule minute, when inside a bout.
    pub minute: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeedbackStep {
    pub stance: Option<CompletedStance>,
    pub outcome: Option<StanceOutcome>,
    pub trigger: Option<TriggerCommand>,
}

/// Success detection and pulse gating for one session.
#[derive(Debug, Clone)]
pub struct FeedbackController {
    threshold: Option<Threshold>,
    schedule: FadedSchedule,
    tracker: StanceTracker,
}

impl FeedbackController {
    pub fn new(schedule: FadedSchedule) -> Self {
        FeedbackController {
            threshold: None,
            schedule,
            tracker: StanceTracker::new(),
        }
    }

    pub fn set_threshold(&mut self, t: Threshold) {
        self.threshold = Some(t);
    }

    pub fn threshold(&self) -> Option<&Threshold> {
        self.threshold.as_ref()
    }

    pub fn schedule(&self) -> &FadedSchedule {
        &self.schedule
    }

    /// Drops any open stance (e.g. at a stage boundary).
    pub fn reset_stance(&mut self) {
        self.tracker.reset();
    }

    /// `t_in_bout_us` is the time since the bout started. Outside bouts pass
    /// `None`; stances are still evaluated but never pulsed.
    pub fn update(
        &mut self,
        estimate: &AgrfEstimate,
        event: Option<&GaitEvent>,
        t_in_bout_us: Option<u64>,
    ) -> Result<FeedbackStep, FeedbackError> {
        let threshold = self.threshold.ok_or(FeedbackError::NoThreshold)?;
        let Some(stance) = self.tracker.push(estimate, event) else {
            return Ok(FeedbackStep::default());
        };
        let state = match t_in_bout_us {
            Some(t) => Some(self.schedule.state_at_us(t)?),
            None => None,
        };
        let peak = stance.peak.map(|p| p.agrf_bw);
        let success = peak.is_some_and(|p| p >= threshold.value);
        let active = state.is_some_and(|s| s.active);
        let pulse = success && active;
        let outcome = StanceOutcome {
            stance_index: stance.index,
            contact_us: stance.contact.timestamp_us,
            swing_us: stance.swing.timestamp_us,
            peak_agrf_bw: peak,
            peak_time_us: stance.peak.map(|p| p.timestamp_us),
            success,
            feedback_active: active,
            pulse_sent: pulse,
            trigger_time_us: estimate.timestamp_us,
            minute: state.map(|s| s.minute),
        };
        let trigger = pulse.then_some(TriggerCommand {
            timestamp_us: estimate.timestamp_us,
            stance_index: stance.index,
        });
        Ok(FeedbackStep {
            stance: Some(stance),
            outcome: Some(outcome),
            trigger,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoutSummary {
    pub active_time_s: f64,
    pub success_count: usize,
    pub pulse_count: usize,
}

/// Totals for one bout, `elapsed_us` into it.
pub fn bout_summary(
    outcomes: &[StanceOutcome],
    schedule: &FadedSchedule,
    elapsed_us: u64,
) -> BoutSummary {
    BoutSummary {
        active_time_s: schedule.active_us_within(elapsed_us) as f64 / 1e6,
        success_count: outcomes.iter().filter(|o| o.success).count(),
        pulse_count: outcomes.iter().filter(|o| o.pulse_sent).count(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::Side;
    use crate::gaitevents::EventKind;
    use proptest::prelude::*;

    #[test]
    fn threshold_examples() {
        let t = calibrate_threshold(&[0.08, 0.09, 0.10], DEFAULT_MULTIPLIER).unwrap();
        assert!((t.value - 0.0945).abs() < 1e-12);
        assert!(t.low_confidence);
        let t = calibrate_threshold(&[0.088], DEFAULT_MULTIPLIER).unwrap();
        assert!((t.value - 0.0924).abs() < 1e-12);
        assert_eq!(
            calibrate_threshold(&[], 1.05),
            Err(FeedbackError::EmptyBaseline)
        );
        assert_eq!(
            calibrate_threshold(&[-0.1, 0.0], 1.05),
            Err(FeedbackError::NonPositivePeaks)
        );
    }

    #[test]
    fn artifact_peaks_excluded() {
        let t = calibrate_threshold(&[0.001, 0.09, 0.09], 1.05).unwrap();
        assert_eq!(t.stances, 2);
        assert!((t.baseline_mean_peak - 0.09).abs() < 1e-15);
    }

    fn ev(kind: EventKind, frame: u64) -> GaitEvent {
        GaitEvent {
            kind,
            timestamp_us: frame * 20_000,
            frame_index: frame,
            side: Side::Paretic,
        }
    }

    fn est(frame: u64, v: f64) -> AgrfEstimate {
        AgrfEstimate {
            timestamp_us: frame * 20_000,
            agrf_bw: v,
            warmed_up: true,
            latency_us: 0,
        }
    }

    /// One stance from frame 10 to 40 peaking at `peak`; events arrive with
    /// a 3-frame lag. Returns the step at swing emission.
    fn run_stance(c: &mut FeedbackController, peak: f64, bout_t0: Option<u64>) -> FeedbackStep {
        let mut last = FeedbackStep::default();
        for f in 0..50u64 {
            let v = if (10..=40).contains(&f) {
                peak * (1.0 - ((f as f64 - 35.0) / 6.0).powi(2)).max(0.0)
            } else {
                0.0
            };
            let e = match f {
                13 => Some(ev(EventKind::FootContact, 10)),
                43 => Some(ev(EventKind::SwingInit, 40)),
                _ => None,
            };
            let t = bout_t0.map(|t0| t0 + f * 20_000);
            let step = c.update(&est(f, v), e.as_ref(), t).unwrap();
            if step.outcome.is_some() {
                assert_eq!(f, 43);
                last = step;
            }
        }
        last
    }

    fn calibrated() -> FeedbackController {
        let mut c = FeedbackController::new(FadedSchedule::default());
        c.set_threshold(calibrate_threshold(&[0.08, 0.09, 0.10], 1.05).unwrap());
        c
    }

    #[test]
    fn success_in_active_window_pulses_at_swing() {
        let mut c = calibrated();
        let s = run_stance(&mut c, 0.10, Some(0));
        let o = s.outcome.unwrap();
        assert!(o.success && o.feedback_active && o.pulse_sent);
        assert_eq!(s.trigger.unwrap().timestamp_us, 43 * 20_000);
        assert_eq!(o.peak_time_us, Some(35 * 20_000));
    }

    #[test]
    fn success_in_inactive_window_is_silent() {
        let mut c = calibrated();
        let s = run_stance(&mut c, 0.10, Some(50_000_000));
        let o = s.outcome.unwrap();
        assert!(o.success && !o.feedback_active && !o.pulse_sent);
        assert!(s.trigger.is_none());
    }

    #[test]
    fn just_below_threshold_fails() {
        let mut c = calibrated();
        let thr = c.threshold().unwrap().value;
        let o = run_stance(&mut c, thr * (1.0 - 1e-12), Some(0))
            .outcome
            .unwrap();
        assert!(!o.success && !o.pulse_sent);
        let o = run_stance(&mut c, thr, Some(0)).outcome.unwrap();
        assert!(o.success);
    }

    #[test]
    fn update_requires_threshold() {
        let mut c = FeedbackController::new(FadedSchedule::default());
        assert_eq!(
            c.update(&est(0, 0.0), None, None),
            Err(FeedbackError::NoThreshold)
        );
    }

    #[test]
    fn summary_counts() {
        let s = FadedSchedule::default();
        let z = bout_summary(&[], &s, 0);
        assert_eq!(
            (z.active_time_s, z.success_count, z.pulse_count),
            (0.0, 0, 0)
        );
        assert_eq!(bout_summary(&[], &s, 180_000_000).active_time_s, 90.0);
        let mut c = calibrated();
        let mut outs = Vec::new();
        for t in [0, 10_000_000, 50_000_000] {
            outs.push(run_stance(&mut c, 0.12, Some(t)).outcome.unwrap());
        }
        let b = bout_summary(&outs, &s, 180_000_000);
        assert_eq!((b.success_count, b.pulse_count), (3, 2));
    }

    proptest! {
        #[test]
        fn gating_and_scale_invariance(peaks in prop::collection::vec(0.0f64..0.2, 1..20),
                                       starts in prop::collection::vec(0u64..179_000_000, 1..20),
                                       k in -3i32..4) {
            let scale = 2f64.powi(k);
            let mut a = calibrated();
            let mut b = FeedbackController::new(FadedSchedule::default());
            b.set_threshold(calibrate_threshold(&[0.08 * scale, 0.09 * scale, 0.10 * scale], 1.05).unwrap());
            let mut no_sched = calibrated();
            for (p, t0) in peaks.iter().zip(starts.iter().cycle()) {
                let t0 = (*t0).min(179_000_000);
                let oa = run_stance(&mut a, *p, Some(t0)).outcome.unwrap();
                let ob = run_stance(&mut b, *p * scale, Some(t0)).outcome.unwrap();
                let on = run_stance(&mut no_sched, *p, None).outcome.unwrap();
                prop_assert!(!oa.pulse_sent || (oa.success && oa.feedback_active));
                prop_assert_eq!(oa.success, ob.success);
                prop_assert_eq!(oa.success, on.success);
                prop_assert!(!on.pulse_sent);
            }
        }
    }
}
