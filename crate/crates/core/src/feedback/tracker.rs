//! Stance peak extraction. Stream-detected events arrive a few frames after
//! the extremum they report, so recent estimates are buffered and the peak is
//! taken over the reported contact-to-swing span.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::frame::AgrfEstimate;
use crate::gaitevents::{EventKind, GaitEvent};

/// About 2.5 s at 50 Hz, longer than any plausible stance.
const BUFFER_FRAMES: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StancePeak {
    pub agrf_bw: f64,
    pub timestamp_us: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompletedStance {
    pub index: u64,
    pub contact: GaitEvent,
    pub swing: GaitEvent,
    /// Maximum over warmed-up estimates; `None` when there were none.
    pub peak: Option<StancePeak>,
}

#[derive(Debug, Clone, Default)]
pub struct StanceTracker {
    recent: VecDeque<(u64, f64)>,
    open: Option<GaitEvent>,
    completed: u64,
}

impl StanceTracker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn reset(&mut self) {
        self.recent.clear();
        self.open = None;
    }

    pub fn completed(&self) -> u64 {
        self.completed
    }

    pub fn push(
        &mut self,
        estimate: &AgrfEstimate,
        event: Option<&GaitEvent>,
    ) -> Option<CompletedStance> {
        if estimate.warmed_up {
            if self.recent.len() == BUFFER_FRAMES {
                self.recent.pop_front();
            }
            self.recent
                .push_back((estimate.timestamp_us, estimate.agrf_bw));
        }
        let event = event?;
        match event.kind {
            EventKind::FootContact => {
                self.open = Some(*event);
                None
            }
            EventKind::SwingInit => {
                let contact = self.open.take()?;
                let (t0, t1) = (contact.timestamp_us, event.timestamp_us);
                let mut peak: Option<StancePeak> = None;
                for &(t, v) in self.recent.iter().filter(|(t, _)| (t0..=t1).contains(t)) {
                    if peak.map_or(true, |p| v > p.agrf_bw) {
                        peak = Some(StancePeak {
                            agrf_bw: v,
                            timestamp_us: t,
                        });
                    }
                }
                let index = self.completed;
                self.completed += 1;
                Some(CompletedStance {
                    index,
                    contact,
                    swing: *event,
                    peak,
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::Side;

    #[test]
    fn braking_only_stance_reports_least_negative() {
        let mut t = StanceTracker::new();
        let ev = |kind, f: u64| GaitEvent {
            kind,
            timestamp_us: f * 20_000,
            frame_index: f,
            side: Side::Paretic,
        };
        let est = |f: u64, v: f64, warm: bool| AgrfEstimate {
            timestamp_us: f * 20_000,
            agrf_bw: v,
            warmed_up: warm,
            latency_us: 0,
        };
        let mut out = None;
        for f in 0..30u64 {
            let e = match f {
                3 => Some(ev(EventKind::FootContact, 0)),
                23 => Some(ev(EventKind::SwingInit, 20)),
                _ => None,
            };
            // Frame 0 is not warmed up and would otherwise be the peak.
            let v = if f == 0 {
                1.0
            } else {
                -0.1 + 0.001 * (f as f64 - 10.0).abs() * -1.0
            };
            out = out.or(t.push(&est(f, v, f > 0), e.as_ref()));
        }
        let s = out.unwrap();
        let p = s.peak.unwrap();
        assert_eq!(p.timestamp_us, 10 * 20_000);
        assert!((p.agrf_bw + 0.1).abs() < 1e-12);
    }
}
