//! Per-stance biomechanics, trial aggregates, statistics, trigger metrics and
//! the session report.

mod report;
pub mod special;
mod stats;
mod triggers;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::{AgrfEstimate, KinematicFrame, SegmentId, Side};
use crate::session::{Condition, DistanceRecord, Pose, ProtocolStage, SessionLog, StanceRecord};

pub use report::{
    report, Comparison, ConditionSummary, Metric, MetricSummary, ParticipantReport, Report,
    ReportRecord, REPORT_VERSION,
};
pub use stats::{
    cohens_d, mean, paired_ci, pearson_r, percent_change, population_sd, rm_anova, sample_sd,
    Anova, DVariant, Interval,
};
pub use triggers::{trigger_metrics, TriggerMetrics};

/// Trials with fewer stances are flagged low-confidence.
pub const MIN_TRIAL_STANCES: usize = 5;
/// Minimum pelvis-over-foot height for a meaningful limb angle.
pub const MIN_VERTICAL_SEPARATION_M: f64 = 0.1;
/// Step lengths at or below this are flagged degenerate.
pub const MIN_STEP_LENGTH_M: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("no warmed-up estimates in stance")]
    EmptyStance,
    #[error("pelvis-foot vertical separation {0:.3} m is too small")]
    DegenerateGeometry(f64),
    #[error("segment {0:?} has no valid position")]
    MissingSegment(SegmentId),
    #[error("stage {stage} has {markers} minute markers, need 2")]
    InsufficientMarkers {
        stage: ProtocolStage,
        markers: usize,
    },
    #[error("baseline is zero")]
    ZeroBaseline,
    #[error("degenerate variance")]
    DegenerateVariance,
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("sample lengths differ ({left} vs {right})")]
    LengthMismatch { left: usize, right: usize },
    #[error("confidence level {0} outside (0, 1)")]
    InvalidLevel(f64),
    #[error("incomplete subjects x conditions matrix")]
    IncompleteMatrix,
    #[error("zero error variance")]
    ZeroErrorVariance,
    #[error("session {participant} has no {condition} stances")]
    MissingCondition {
        participant: String,
        condition: String,
    },
    #[error("no sessions")]
    NoSessions,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakAgrf {
    pub agrf_bw: f64,
    /// Index into the stance series.
    pub index: usize,
    pub timestamp_us: u64,
    /// False when the whole stance was braking.
    pub propulsive: bool,
}

/// Maximum warmed-up estimate; ties resolve to the first.
pub fn peak_agrf(series: &[AgrfEstimate]) -> Result<PeakAgrf, MetricsError> {
    let mut best: Option<PeakAgrf> = None;
    for (index, e) in series.iter().enumerate().filter(|(_, e)| e.warmed_up) {
        if best.map_or(true, |b| e.agrf_bw > b.agrf_bw) {
            best = Some(PeakAgrf {
                agrf_bw: e.agrf_bw,
                index,
                timestamp_us: e.timestamp_us,
                propulsive: e.agrf_bw > 0.0,
            });
        }
    }
    best.ok_or(MetricsError::EmptyStance)
}

/// Sagittal angle from vertical of the pelvis-to-foot vector, in degrees,
/// positive with the foot behind the pelvis.
pub fn tla_from_positions(pelvis: [f64; 3], foot: [f64; 3]) -> Result<f64, MetricsError> {
    let dx = pelvis[0] - foot[0];
    let dz = pelvis[2] - foot[2];
    if !(dz >= MIN_VERTICAL_SEPARATION_M) {
        return Err(MetricsError::DegenerateGeometry(dz));
    }
    Ok(dx.atan2(dz).to_degrees())
}

fn position(frame: &KinematicFrame, id: SegmentId) -> Result<[f64; 3], MetricsError> {
    let p = frame.position(id);
    if p.iter().all(|v| v.is_finite()) {
        Ok(p)
    } else {
        Err(MetricsError::MissingSegment(id))
    }
}

pub fn tla_at(frame: &KinematicFrame, side: Side) -> Result<f64, MetricsError> {
    tla_from_positions(
        position(frame, SegmentId::Pelvis)?,
        position(frame, side.foot())?,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLength {
    pub meters: f64,
    pub flagged: bool,
}

fn step_from(lead: [f64; 3], trail: [f64; 3]) -> StepLength {
    let meters = lead[0] - trail[0];
    StepLength {
        meters,
        flagged: meters <= MIN_STEP_LENGTH_M,
    }
}

/// Paretic-minus-nonparetic AP foot position at a paretic foot contact.
pub fn step_length(frame: &KinematicFrame) -> Result<StepLength, MetricsError> {
    Ok(step_from(
        position(frame, SegmentId::FootParetic)?,
        position(frame, SegmentId::FootNonparetic)?,
    ))
}

pub fn step_length_from_pose(pose: &Pose) -> StepLength {
    step_from(pose.foot_paretic, pose.foot_nonparetic)
}

/// Cumulative distance at minute 2 of `stage`, over 120 s.
pub fn gait_speed<'a>(
    distances: impl IntoIterator<Item = &'a DistanceRecord>,
    stage: ProtocolStage,
) -> Result<f64, MetricsError> {
    let markers: Vec<&DistanceRecord> =
        distances.into_iter().filter(|d| d.stage == stage).collect();
    let at_two = markers.iter().rev().find(|d| d.minute == 2);
    match at_two {
        Some(d) if markers.len() >= 2 => Ok(d.meters / 120.0),
        _ => Err(MetricsError::InsufficientMarkers {
            stage,
            markers: markers.len(),
        }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StanceMetrics {
    pub peak_agrf: f64,
    /// Paretic trailing limb angle at the frame of peak AGRF.
    pub tla_deg: f64,
    /// At paretic foot contact.
    pub step_length_m: f64,
}

/// Metrics of one logged stance; `None` for flagged stances or ones missing
/// a peak or pose.
pub fn stance_metrics(s: &StanceRecord) -> Option<StanceMetrics> {
    if s.flagged {
        return None;
    }
    let peak_pose = s.peak_pose?;
    let tla_deg = tla_from_positions(peak_pose.pelvis, peak_pose.foot_paretic).ok()?;
    Some(StanceMetrics {
        peak_agrf: s.peak_agrf_bw?,
        tla_deg,
        step_length_m: step_length_from_pose(&s.contact_pose?).meters,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    /// `None` below two samples.
    pub sd: Option<f64>,
}

impl MeanSd {
    pub fn of(xs: &[f64]) -> Option<MeanSd> {
        if xs.is_empty() {
            return None;
        }
        Some(MeanSd {
            mean: mean(xs),
            sd: (xs.len() >= 2).then(|| sample_sd(xs)),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialAggregate {
    pub condition: Condition,
    pub stances: usize,
    pub low_confidence: bool,
    pub peak_agrf: MeanSd,
    pub tla_deg: MeanSd,
    pub step_length_m: MeanSd,
    /// Mean over the condition's trials of the first-two-minutes speed.
    pub speed_mps: Option<f64>,
    pub samples: Vec<StanceMetrics>,
}

/// Aggregates the stances of every trial of `condition` in `log`. The four
/// feedback bouts pool into one aggregate.
pub fn trial_aggregate(log: &SessionLog, condition: Condition) -> Option<TrialAggregate> {
    let samples: Vec<StanceMetrics> = log
        .stances()
        .filter(|s| s.stage.condition() == Some(condition))
        .filter_map(stance_metrics)
        .collect();
    let column = |f: fn(&StanceMetrics) -> f64| samples.iter().map(f).collect::<Vec<f64>>();
    let peak_agrf = MeanSd::of(&column(|m| m.peak_agrf))?;
    let tla_deg = MeanSd::of(&column(|m| m.tla_deg))?;
    let step_length_m = MeanSd::of(&column(|m| m.step_length_m))?;
    let speeds: Vec<f64> = ProtocolStage::sequence()
        .into_iter()
        .filter(|st| st.condition() == Some(condition))
        .filter_map(|st| gait_speed(log.distances(), st).ok())
        .collect();
    Some(TrialAggregate {
        condition,
        stances: samples.len(),
        low_confidence: samples.len() < MIN_TRIAL_STANCES,
        peak_agrf,
        tla_deg,
        step_length_m,
        speed_mps: (!speeds.is_empty()).then(|| mean(&speeds)),
        samples,
    })
}
