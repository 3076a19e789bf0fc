//! Foot-contact and swing-initiation detection from the AP position of the
//! paretic foot relative to the pelvis. Crests are contacts, troughs are
//! swing initiations.

mod stream;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::{KinematicFrame, SegmentId, Side};

pub use stream::StreamDetector;

/// Stance durations outside this band are flagged as implausible.
pub const PLAUSIBLE_STANCE_MS: (f64, f64) = (200.0, 2000.0);
pub const NORMALIZED_POINTS: usize = 101;
/// Minimum offline signal length (2 s at 50 Hz).
pub const MIN_OFFLINE_SAMPLES: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GaitEventError {
    #[error("signal too short: {samples} samples, need {MIN_OFFLINE_SAMPLES}")]
    SignalTooShort { samples: usize },
    #[error("timestamps not increasing: {current} after {previous}")]
    NonMonotonicTime { previous: u64, current: u64 },
    #[error("span of {frames} frames cannot be normalized")]
    DegenerateSpan { frames: usize },
    #[error("invalid detector parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    FootContact,
    SwingInit,
}

impl EventKind {
    pub fn opposite(self) -> EventKind {
        match self {
            EventKind::FootContact => EventKind::SwingInit,
            EventKind::SwingInit => EventKind::FootContact,
        }
    }

    /// True when `a` is a stronger extremum of this kind than `b`.
    fn stronger(self, a: f64, b: f64) -> bool {
        match self {
            EventKind::FootContact => a > b,
            EventKind::SwingInit => a < b,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaitEvent {
    pub kind: EventKind,
    pub timestamp_us: u64,
    pub frame_index: u64,
    pub side: Side,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorParams {
    pub min_prominence_m: f64,
    pub min_event_separation_ms: f64,
    pub causal_confirm_frames: usize,
}

impl Default for DetectorParams {
    fn default() -> Self {
        DetectorParams {
            min_prominence_m: 0.05,
            min_event_separation_ms: 300.0,
            causal_confirm_frames: 3,
        }
    }
}

impl DetectorParams {
    pub fn validate(&self) -> Result<(), GaitEventError> {
        if !(self.min_prominence_m > 0.0
            && self.min_event_separation_ms > 0.0
            && self.causal_confirm_frames > 0)
        {
            return Err(GaitEventError::InvalidParams(
                "prominence, separation and confirmation must be positive".into(),
            ));
        }
        Ok(())
    }

    fn separation_us(&self) -> f64 {
        self.min_event_separation_ms * 1000.0
    }
}

/// One sample of the AP-relative signal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApSample {
    pub frame_index: u64,
    pub timestamp_us: u64,
    pub value_m: f64,
}

/// Foot X minus pelvis X; anterior positive.
pub fn ap_relative_position(frame: &KinematicFrame, side: Side) -> f64 {
    frame.position(side.foot())[0] - frame.position(SegmentId::Pelvis)[0]
}

pub fn ap_signal(frames: &[KinematicFrame], side: Side, first_index: u64) -> Vec<ApSample> {
    frames
        .iter()
        .enumerate()
        .map(|(i, f)| ApSample {
            frame_index: first_index + i as u64,
            timestamp_us: f.timestamp_us,
            value_m: ap_relative_position(f, side),
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
struct Extremum {
    idx: usize,
    kind: EventKind,
    value: f64,
    prominence: f64,
}

fn find_extrema(x: &[f64], kind: EventKind) -> Vec<Extremum> {
    let n = x.len();
    let mut out = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if kind.stronger(x[i], x[i - 1]) {
            // Plateaus resolve to their first sample.
            let mut j = i;
            while j + 1 < n && x[j + 1] == x[i] {
                j += 1;
            }
            if j + 1 < n && kind.stronger(x[i], x[j + 1]) {
                out.push(Extremum {
                    idx: i,
                    kind,
                    value: x[i],
                    prominence: 0.0,
                });
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    for e in &mut out {
        e.prominence = prominence(x, e.idx, kind);
    }
    out
}

/// Height above the higher of the two bases. A side that runs off the end of
/// the signal without meeting a stronger sample contributes no base.
fn prominence(x: &[f64], i: usize, kind: EventKind) -> f64 {
    let v = x[i];
    let weakest = |range: &mut dyn Iterator<Item = usize>| -> (f64, bool) {
        let mut base = v;
        for j in range {
            if kind.stronger(x[j], v) {
                return (base, true);
            }
            if kind.stronger(base, x[j]) {
                base = x[j];
            }
        }
        (base, false)
    };
    let (left, _) = weakest(&mut (0..i).rev());
    let (right, right_bounded) = weakest(&mut (i + 1..x.len()));
    let left_height = (v - left).abs();
    if right_bounded {
        left_height.min((v - right).abs())
    } else {
        left_height
    }
}

fn enforce_alternation(events: &mut Vec<Extremum>) -> bool {
    let mut changed = false;
    let mut out: Vec<Extremum> = Vec::with_capacity(events.len());
    for e in events.drain(..) {
        match out.last_mut() {
            Some(last) if last.kind == e.kind => {
                changed = true;
                if e.kind.stronger(e.value, last.value) {
                    *last = e;
                }
            }
            _ => out.push(e),
        }
    }
    *events = out;
    changed
}

fn enforce_separation(events: &mut Vec<Extremum>, ts: &[u64], sep_us: f64) -> bool {
    let mut changed = false;
    let mut out: Vec<Extremum> = Vec::with_capacity(events.len());
    for e in events.drain(..) {
        match out.last() {
            Some(last) if ((ts[e.idx] - ts[last.idx]) as f64) < sep_us => changed = true,
            _ => out.push(e),
        }
    }
    *events = out;
    changed
}

/// Non-causal detector over a complete signal.
pub fn detect_events_offline(
    signal: &[ApSample],
    side: Side,
    params: &DetectorParams,
) -> Result<Vec<GaitEvent>, GaitEventError> {
    params.validate()?;
    if signal.len() < MIN_OFFLINE_SAMPLES {
        return Err(GaitEventError::SignalTooShort {
            samples: signal.len(),
        });
    }
    for w in signal.windows(2) {
        if w[1].timestamp_us <= w[0].timestamp_us {
            return Err(GaitEventError::NonMonotonicTime {
                previous: w[0].timestamp_us,
                current: w[1].timestamp_us,
            });
        }
    }
    let x: Vec<f64> = signal.iter().map(|s| s.value_m).collect();
    let ts: Vec<u64> = signal.iter().map(|s| s.timestamp_us).collect();
    let mut ext: Vec<Extremum> = find_extrema(&x, EventKind::FootContact)
        .into_iter()
        .chain(find_extrema(&x, EventKind::SwingInit))
        .filter(|e| e.prominence >= params.min_prominence_m)
        .collect();
    ext.sort_by_key(|e| e.idx);
    loop {
        let a = enforce_alternation(&mut ext);
        let s = enforce_separation(&mut ext, &ts, params.separation_us());
        if !a && !s {
            break;
        }
    }
    Ok(ext
        .into_iter()
        .map(|e| GaitEvent {
            kind: e.kind,
            timestamp_us: ts[e.idx],
            frame_index: signal[e.idx].frame_index,
            side,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StancePhase {
    pub side: Side,
    pub start: GaitEvent,
    pub end: GaitEvent,
    pub duration_ms: f64,
    /// Outside the plausibility band.
    pub flagged: bool,
}

impl StancePhase {
    pub fn frame_span(&self) -> (u64, u64) {
        (self.start.frame_index, self.end.frame_index)
    }
}

/// Pairs each foot contact with the next swing initiation. Unpaired events
/// are dropped.
pub fn segment_stances(events: &[GaitEvent]) -> Vec<StancePhase> {
    events
        .windows(2)
        .filter(|w| w[0].kind == EventKind::FootContact && w[1].kind == EventKind::SwingInit)
        .filter(|w| w[1].timestamp_us > w[0].timestamp_us)
        .map(|w| {
            let duration_ms = (w[1].timestamp_us - w[0].timestamp_us) as f64 / 1000.0;
            StancePhase {
                side: w[0].side,
                start: w[0],
                end: w[1],
                duration_ms,
                flagged: !(PLAUSIBLE_STANCE_MS.0..=PLAUSIBLE_STANCE_MS.1).contains(&duration_ms),
            }
        })
        .collect()
}

/// Linear resampling onto `n_points` uniformly spaced samples.
pub fn time_normalize(series: &[f64], n_points: usize) -> Result<Vec<f64>, GaitEventError> {
    if series.len() < 2 || n_points < 2 {
        return Err(GaitEventError::DegenerateSpan {
            frames: series.len(),
        });
    }
    let last = series.len() - 1;
    let step = last as f64 / (n_points - 1) as f64;
    let mut out = Vec::with_capacity(n_points);
    for i in 0..n_points {
        let pos = i as f64 * step;
        let k = (pos.floor() as usize).min(last - 1);
        let frac = pos - k as f64;
        let v = if frac == 0.0 {
            series[k]
        } else if frac == 1.0 {
            series[k + 1]
        } else {
            series[k] + frac * (series[k + 1] - series[k])
        };
        out.push(v);
    }
    out[n_points - 1] = series[last];
    Ok(out)
}
