use serde::{Deserialize, Serialize};

use super::FeedbackError;

pub const MINUTE_US: u64 = 60_000_000;

/// Per-minute (active, inactive) seconds; active block first in each minute.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FadedSchedule {
    pub minutes: Vec<(u32, u32)>,
}

impl Default for FadedSchedule {
    fn default() -> Self {
        FadedSchedule {
            minutes: vec![(45, 15), (30, 30), (15, 45)],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleState {
    pub active: bool,
    /// One-based.
    pub minute: usize,
}

impl FadedSchedule {
    pub fn validate(&self) -> Result<(), FeedbackError> {
        if self.minutes.is_empty() {
            return Err(FeedbackError::InvalidSchedule("no minutes".into()));
        }
        if self.minutes.iter().any(|(a, i)| a + i != 60) {
            return Err(FeedbackError::InvalidSchedule(
                "each minute must sum to 60 s".into(),
            ));
        }
        if self.minutes.windows(2).any(|w| w[1].0 >= w[0].0) {
            return Err(FeedbackError::InvalidSchedule(
                "active seconds must strictly decrease".into(),
            ));
        }
        Ok(())
    }

    pub fn bout_duration_us(&self) -> u64 {
        self.minutes.len() as u64 * MINUTE_US
    }

    pub fn state_at_us(&self, t_us: u64) -> Result<ScheduleState, FeedbackError> {
        if t_us >= self.bout_duration_us() {
            return Err(FeedbackError::OutOfBout {
                t_s: t_us as f64 / 1e6,
            });
        }
        let m = (t_us / MINUTE_US) as usize;
        let active = t_us % MINUTE_US < self.minutes[m].0 as u64 * 1_000_000;
        Ok(ScheduleState {
            active,
            minute: m + 1,
        })
    }

    pub fn state_at(&self, t_s: f64) -> Result<ScheduleState, FeedbackError> {
        if !(t_s >= 0.0) || !t_s.is_finite() {
            return Err(FeedbackError::OutOfBout { t_s });
        }
        self.state_at_us((t_s * 1e6).round() as u64)
            .map_err(|_| FeedbackError::OutOfBout { t_s })
    }

    /// Scheduled active time in the first `elapsed_us` of a bout.
    pub fn active_us_within(&self, elapsed_us: u64) -> u64 {
        let elapsed = elapsed_us.min(self.bout_duration_us());
        self.minutes
            .iter()
            .enumerate()
            .map(|(m, (a, _))| {
                let start = m as u64 * MINUTE_US;
                let end = start + *a as u64 * 1_000_000;
                end.min(elapsed).saturating_sub(start)
            })
            .sum()
    }
}

/// Free-function form of [`FadedSchedule::state_at`] for the default schedule.
pub fn schedule_state(t_s: f64) -> Result<ScheduleState, FeedbackError> {
    FadedSchedule::default().state_at(t_s)
}
