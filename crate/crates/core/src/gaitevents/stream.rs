//! Causal zig-zag detector. After an event of one kind it tracks the running
//! extreme of the opposite kind; the extreme is emitted once
//! `causal_confirm_frames` subsequent samples fail to exceed it, provided it
//! clears the prominence and separation gates.

use std::collections::VecDeque;

use super::{ApSample, DetectorParams, EventKind, GaitEvent, GaitEventError};
use crate::frame::Side;

#[derive(Debug, Clone)]
struct Search {
    kind: EventKind,
    cand: ApSample,
    /// Opposite extreme the candidate's prominence is measured from.
    reference: f64,
    /// Samples after the candidate.
    after: Vec<ApSample>,
    /// Samples since the candidate that were not stronger than it.
    weaker_run: usize,
}

impl Search {
    fn new(kind: EventKind, cand: ApSample, reference: f64) -> Self {
        Search {
            kind,
            cand,
            reference,
            after: Vec::new(),
            weaker_run: 0,
        }
    }

    /// Returns true when the candidate just became confirmed by direction.
    fn push(&mut self, s: ApSample, reference_if_new: f64, confirm: usize) -> bool {
        if self.kind.stronger(s.value_m, self.cand.value_m) {
            self.cand = s;
            self.reference = reference_if_new;
            self.after.clear();
            self.weaker_run = 0;
            return false;
        }
        // Ties count toward confirmation, matching the offline rule that a
        // plateau resolves to its first sample.
        self.after.push(s);
        self.weaker_run += 1;
        self.weaker_run == confirm
    }
}

#[derive(Debug, Clone)]
enum Mode {
    Empty,
    /// No event yet: both kinds are candidates.
    Either {
        max: Search,
        min: Search,
        prefix_min: f64,
        prefix_max: f64,
    },
    After {
        last: GaitEvent,
        search: Search,
    },
}

#[derive(Debug, Clone)]
pub struct StreamDetector {
    side: Side,
    params: DetectorParams,
    mode: Mode,
    last_ts: Option<u64>,
    pending: VecDeque<GaitEvent>,
}

impl StreamDetector {
    pub fn new(side: Side, params: DetectorParams) -> Result<Self, GaitEventError> {
        params.validate()?;
        Ok(StreamDetector {
            side,
            params,
            mode: Mode::Empty,
            last_ts: None,
            pending: VecDeque::new(),
        })
    }

    pub fn params(&self) -> &DetectorParams {
        &self.params
    }

    /// Forgets all history (e.g. between walking trials).
    pub fn reset(&mut self) {
        self.mode = Mode::Empty;
        self.last_ts = None;
        self.pending.clear();
    }

    pub fn push(&mut self, s: ApSample) -> Result<Option<GaitEvent>, GaitEventError> {
        if let Some(prev) = self.last_ts {
            if s.timestamp_us <= prev {
                return Err(GaitEventError::NonMonotonicTime {
                    previous: prev,
                    current: s.timestamp_us,
                });
            }
        }
        self.last_ts = Some(s.timestamp_us);
        self.feed(s);
        Ok(self.pending.pop_front())
    }

    fn gates_pass(&self, search: &Search, last: Option<&GaitEvent>) -> bool {
        let prominent =
            (search.cand.value_m - search.reference).abs() >= self.params.min_prominence_m;
        let separated = last.map_or(true, |l| {
            (search.cand.timestamp_us.saturating_sub(l.timestamp_us)) as f64
                >= self.params.separation_us()
        });
        prominent && separated
    }

    fn emit(&mut self, search: Search) {
        let event = GaitEvent {
            kind: search.kind,
            timestamp_us: search.cand.timestamp_us,
            frame_index: search.cand.frame_index,
            side: self.side,
        };
        self.pending.push_back(event);
        let mut rest = search.after.into_iter();
        match rest.next() {
            None => {
                // Confirmation needs at least one later sample, so this is
                // unreachable with a positive confirmation count.
                self.mode = Mode::Empty;
            }
            Some(first) => {
                self.mode = Mode::After {
                    last: event,
                    search: Search::new(search.kind.opposite(), first, search.cand.value_m),
                };
                for s in rest {
                    self.feed(s);
                }
            }
        }
    }

    fn feed(&mut self, s: ApSample) {
        let confirm = self.params.causal_confirm_frames;
        match std::mem::replace(&mut self.mode, Mode::Empty) {
            Mode::Empty => {
                self.mode = Mode::Either {
                    max: Search::new(EventKind::FootContact, s, s.value_m),
                    min: Search::new(EventKind::SwingInit, s, s.value_m),
                    prefix_min: s.value_m,
                    prefix_max: s.value_m,
                };
            }
            Mode::Either {
                mut max,
                mut min,
                prefix_min,
                prefix_max,
            } => {
                let max_ready = max.push(s, prefix_min, confirm);
                let min_ready = min.push(s, prefix_max, confirm);
                let prefix_min = prefix_min.min(s.value_m);
                let prefix_max = prefix_max.max(s.value_m);
                let max_ok = max_ready && self.gates_pass(&max, None);
                let min_ok = min_ready && self.gates_pass(&min, None);
                match (max_ok, min_ok) {
                    (true, true) => {
                        // Earlier candidate wins.
                        if max.cand.frame_index <= min.cand.frame_index {
                            self.emit(max)
                        } else {
                            self.emit(min)
                        }
                    }
                    (true, false) => self.emit(max),
                    (false, true) => self.emit(min),
                    (false, false) => {
                        self.mode = Mode::Either {
                            max,
                            min,
                            prefix_min,
                            prefix_max,
                        }
                    }
                }
            }
            Mode::After { last, mut search } => {
                let reference = search.reference;
                let ready = search.push(s, reference, confirm);
                if ready && self.gates_pass(&search, Some(&last)) {
                    self.emit(search);
                } else {
                    self.mode = Mode::After { last, search };
                }
            }
        }
    }
}
