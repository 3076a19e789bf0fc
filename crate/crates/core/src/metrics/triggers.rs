//! Exploratory trigger metrics of one session.

use serde::{Deserialize, Serialize};

use super::stats::{mean, population_sd};
use crate::session::{ProtocolStage, SessionLog, BOUT_COUNT};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriggerMetrics {
    /// First pulse minus the start of the first feedback bout; `None` when
    /// nothing was triggered.
    pub time_to_first_s: Option<f64>,
    pub total_triggers: u64,
    pub triggers_per_bout: Vec<u64>,
    pub max_consecutive: u64,
    /// Lengths of the maximal runs of successful stances inside active
    /// windows.
    pub runs: Vec<u64>,
    /// Population std over mean of `runs`; `None` without runs.
    pub cv_consecutive: Option<f64>,
    /// Set when there were no triggers or fewer than two runs.
    pub flagged: bool,
}

pub fn trigger_metrics(log: &SessionLog) -> TriggerMetrics {
    let first_bout = log
        .stage_spans()
        .into_iter()
        .find(|(s, _, _)| matches!(s, ProtocolStage::FeedbackBout(_)))
        .map(|(_, start, _)| start);
    let mut triggers_per_bout = vec![0u64; BOUT_COUNT as usize];
    let mut first_pulse = None;
    let mut total = 0;
    for (t_us, bout, _) in log.triggers() {
        first_pulse.get_or_insert(t_us);
        total += 1;
        if let Some(slot) = (bout as usize)
            .checked_sub(1)
            .and_then(|i| triggers_per_bout.get_mut(i))
        {
            *slot += 1;
        }
    }

    let mut runs = Vec::new();
    let mut current = 0u64;
    let mut current_bout = None;
    for (bout, o) in log.outcomes() {
        if current_bout != Some(bout) {
            if current > 0 {
                runs.push(current);
            }
            current = 0;
            current_bout = Some(bout);
        }
        if o.success && o.feedback_active {
            current += 1;
        } else if current > 0 {
            runs.push(current);
            current = 0;
        }
    }
    if current > 0 {
        runs.push(current);
    }

    let as_f64: Vec<f64> = runs.iter().map(|&r| r as f64).collect();
    let cv_consecutive = (!runs.is_empty()).then(|| population_sd(&as_f64) / mean(&as_f64));
    TriggerMetrics {
        time_to_first_s: match (first_pulse, first_bout) {
            (Some(p), Some(b)) => Some(p.saturating_sub(b) as f64 / 1e6),
            _ => None,
        },
        total_triggers: total,
        triggers_per_bout,
        max_consecutive: runs.iter().copied().max().unwrap_or(0),
        flagged: total == 0 || runs.len() < 2,
        runs,
        cv_consecutive,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feedback::StanceOutcome;
    use crate::haptics::Delivery;
    use crate::session::RecordBody;

    /// Log with a bout starting at 10 s and one outcome per pattern entry
    /// (`'S'` success inside an active window, `'s'` success while feedback
    /// is off, anything else a miss).
    fn log_of(bouts: &[&str]) -> SessionLog {
        let mut log = SessionLog::default();
        let mut t = 10_000_000;
        let mut index = 0;
        for (b, pattern) in bouts.iter().enumerate() {
            let bout = b as u8 + 1;
            log.push(
                t,
                RecordBody::Stage {
                    stage: ProtocolStage::FeedbackBout(bout),
                    previous: ProtocolStage::Idle,
                    aborted: false,
                },
            );
            for c in pattern.chars() {
                t += 1_000_000;
                let success = c == 'S' || c == 's';
                let active = c == 'S';
                let o = StanceOutcome {
                    stance_index: index,
                    contact_us: t - 600_000,
                    swing_us: t,
                    peak_agrf_bw: Some(0.1),
                    peak_time_us: Some(t - 300_000),
                    success,
                    feedback_active: active,
                    pulse_sent: success && active,
                    trigger_time_us: t,
                    minute: Some(1),
                };
                log.push(t, RecordBody::Outcome { bout, outcome: o });
                if o.pulse_sent {
                    log.push(
                        t,
                        RecordBody::Trigger {
                            bout,
                            command_seq: index as u16,
                            stance_index: index,
                            delivery: Delivery::Acked,
                        },
                    );
                }
                index += 1;
            }
        }
        log
    }

    #[test]
    fn runs_and_their_spread() {
        let m = trigger_metrics(&log_of(&["SSSxS"]));
        assert_eq!(m.runs, vec![3, 1]);
        assert_eq!(m.cv_consecutive, Some(0.5));
        assert_eq!(m.max_consecutive, 3);
        assert_eq!(m.total_triggers, 4);
        assert_eq!(m.time_to_first_s, Some(1.0));
        assert!(!m.flagged);

        let m = trigger_metrics(&log_of(&["SSSxSSSS", "SSSSSxSSSSSSSSS"]));
        assert_eq!(m.runs, vec![3, 4, 5, 9]);
        assert!((m.cv_consecutive.unwrap() - 5.1875f64.sqrt() / 5.25).abs() < 1e-12);
        assert_eq!(m.triggers_per_bout, vec![7, 14, 0, 0]);
    }

    #[test]
    fn bout_change_and_inactive_windows_break_runs() {
        let m = trigger_metrics(&log_of(&["xSS", "SSS"]));
        assert_eq!(m.runs, vec![2, 3]);
        let m = trigger_metrics(&log_of(&["SSsSS"]));
        assert_eq!(m.runs, vec![2, 2]);
        assert_eq!(m.total_triggers, 4);
    }

    #[test]
    fn sparse_sessions_are_flagged() {
        let m = trigger_metrics(&log_of(&["xxsx"]));
        assert_eq!(
            (m.total_triggers, m.time_to_first_s, m.cv_consecutive),
            (0, None, None)
        );
        assert!(m.flagged);
        let m = trigger_metrics(&log_of(&["xSSSx"]));
        assert_eq!(m.cv_consecutive, Some(0.0));
        assert!(m.flagged);
    }
}
