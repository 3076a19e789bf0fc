use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::log::{
    DistanceRecord, DistanceSource, Header, Pose, RecordBody, SessionLog, StanceRecord,
    ThresholdSource, SCHEMA_VERSION,
};
use super::stage::{ProtocolStage, StageDurations, StageEvent, StageMachine};
use super::SessionError;
use crate::estimator::{predict_frame, InferenceState, ModelWeights};
use crate::feedback::{
    bout_summary, calibrate_threshold, CompletedStance, FadedSchedule, FeedbackController,
    StanceOutcome, StanceTracker, Threshold, TriggerCommand,
};
use crate::frame::{AgrfEstimate, BodyParams, KinematicFrame, SegmentId, Side, StreamMonitor};
use crate::gaitevents::{
    ap_relative_position, ApSample, DetectorParams, GaitEvent, StreamDetector,
};
use crate::haptics::{CommandKind, Delivery, HapticCommand, HapticSink, SeqCounter};

/// A stream gap longer than this ends the session.
pub const INGEST_TIMEOUT_US: u64 = 1_000_000;
const POSE_BUFFER_FRAMES: usize = 160;
/// Frame summaries and telemetry run at 10 Hz.
const DECIMATION: u64 = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub participant_id: String,
    pub body: BodyParams,
    pub multiplier: f64,
    pub detector: DetectorParams,
    pub schedule: FadedSchedule,
    pub durations: StageDurations,
    /// Start the protocol on the first frame instead of waiting for the
    /// operator.
    pub auto_start: bool,
    /// Free-form description of the frame source, written to the header.
    pub source: String,
    pub seed: Option<u64>,
    /// Queue telemetry messages for [`Engine::drain_telemetry`].
    pub telemetry: bool,
}

impl SessionConfig {
    pub fn new(participant_id: &str, body: BodyParams) -> Self {
        SessionConfig {
            participant_id: participant_id.to_string(),
            body,
            multiplier: crate::feedback::DEFAULT_MULTIPLIER,
            detector: DetectorParams::default(),
            schedule: FadedSchedule::default(),
            durations: StageDurations::default(),
            auto_start: true,
            source: String::new(),
            seed: None,
            telemetry: false,
        }
    }

    pub fn validate(&self) -> Result<(), SessionError> {
        if !(self.multiplier.is_finite() && self.multiplier > 0.0) {
            return Err(SessionError::Config("multiplier must be positive".into()));
        }
        if !(self.body.mass_kg > 0.0) {
            return Err(SessionError::Config("mass must be positive".into()));
        }
        self.detector.validate()?;
        self.schedule.validate()?;
        if self.schedule.bout_duration_us() != self.durations.bout_s * 1_000_000 {
            return Err(SessionError::Config(
                "schedule length must equal the bout duration".into(),
            ));
        }
        Ok(())
    }
}

/// FNV-1a digest of the serialized weights.
pub fn weights_digest(weights: &ModelWeights) -> String {
    let bytes = weights.to_bytes().unwrap_or_default();
    let mut h: u64 = 0xcbf29ce484222325;
    for b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    format!("{h:016x}")
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepOutput {
    pub estimate: Option<AgrfEstimate>,
    pub event: Option<GaitEvent>,
    pub outcome: Option<StanceOutcome>,
    pub trigger: Option<(TriggerCommand, HapticCommand, Delivery)>,
}

/// Source of frames for [`run_session`].
pub trait FrameSource {
    /// `None` when the source is exhausted.
    fn next_frame(&mut self) -> Option<Result<KinematicFrame, SessionError>>;
}

pub struct VecSource {
    frames: std::vec::IntoIter<KinematicFrame>,
}

impl VecSource {
    pub fn new(frames: Vec<KinematicFrame>) -> Self {
        VecSource {
            frames: frames.into_iter(),
        }
    }
}

impl FrameSource for VecSource {
    fn next_frame(&mut self) -> Option<Result<KinematicFrame, SessionError>> {
        self.frames.next().map(Ok)
    }
}

impl<R: std::io::Read> FrameSource for crate::frame::ReplayReader<R> {
    fn next_frame(&mut self) -> Option<Result<KinematicFrame, SessionError>> {
        self.next().map(|r| r.map_err(SessionError::from))
    }
}

#[derive(Debug, Clone)]
struct WalkState {
    inference: InferenceState,
    detector: StreamDetector,
    tracker: StanceTracker,
    frames: u64,
    path_m: f64,
    last_pelvis: Option<[f64; 3]>,
    next_minute: u32,
    bout_outcomes: Vec<StanceOutcome>,
}

/// Single-threaded session pipeline. Feed frames with [`Engine::step`] and
/// operator messages with [`Engine::handle_control`]; both apply at frame
/// boundaries.
pub struct Engine<S: HapticSink> {
    config: SessionConfig,
    weights: ModelWeights,
    machine: StageMachine,
    log: SessionLog,
    sink: S,
    seq: SeqCounter,
    monitor: StreamMonitor,
    feedback: FeedbackController,
    multiplier: f64,
    baseline_peaks: Vec<f64>,
    walk: WalkState,
    recent_frames: VecDeque<KinematicFrame>,
    recent_outcomes: VecDeque<StanceOutcome>,
    frame_index: u64,
    last_ts: Option<u64>,
    last_estimate: Option<AgrfEstimate>,
    pending_events: Vec<GaitEvent>,
    pending_outcomes: Vec<StanceOutcome>,
    telemetry: Vec<String>,
}

impl<S: HapticSink> Engine<S> {
    pub fn new(
        config: SessionConfig,
        weights: ModelWeights,
        sink: S,
    ) -> Result<Self, SessionError> {
        config.validate()?;
        weights.validate()?;
        let header = Header {
            schema_version: SCHEMA_VERSION,
            participant_id: config.participant_id.clone(),
            mass_kg: config.body.mass_kg,
            paretic_side: config.body.paretic_side,
            multiplier: config.multiplier,
            detector: config.detector,
            schedule: config.schedule.clone(),
            durations: config.durations,
            weights_digest: weights_digest(&weights),
            source: config.source.clone(),
            seed: config.seed,
        };
        let walk = Self::fresh_walk(&config)?;
        Ok(Engine {
            machine: StageMachine::new(config.durations),
            log: SessionLog::new(header, 0),
            sink,
            seq: SeqCounter::default(),
            monitor: StreamMonitor::new(),
            feedback: FeedbackController::new(config.schedule.clone()),
            multiplier: config.multiplier,
            baseline_peaks: Vec::new(),
            walk,
            recent_frames: VecDeque::with_capacity(POSE_BUFFER_FRAMES),
            recent_outcomes: VecDeque::with_capacity(5),
            frame_index: 0,
            last_ts: None,
            last_estimate: None,
            pending_events: Vec::new(),
            pending_outcomes: Vec::new(),
            telemetry: Vec::new(),
            weights,
            config,
        })
    }

    fn fresh_walk(config: &SessionConfig) -> Result<WalkState, SessionError> {
        Ok(WalkState {
            inference: InferenceState::new(),
            detector: StreamDetector::new(Side::Paretic, config.detector)?,
            tracker: StanceTracker::new(),
            frames: 0,
            path_m: 0.0,
            last_pelvis: None,
            next_minute: 1,
            bout_outcomes: Vec::new(),
        })
    }

    pub fn stage(&self) -> ProtocolStage {
        self.machine.stage()
    }

    pub fn machine(&self) -> &StageMachine {
        &self.machine
    }

    pub fn log(&self) -> &SessionLog {
        &self.log
    }

    pub fn into_log(self) -> SessionLog {
        self.log
    }

    pub fn sink(&self) -> &S {
        &self.sink
    }

    pub fn into_parts(self) -> (SessionLog, S) {
        (self.log, self.sink)
    }

    pub fn threshold(&self) -> Option<&Threshold> {
        self.feedback.threshold()
    }

    pub fn multiplier(&self) -> f64 {
        self.multiplier
    }

    pub fn is_complete(&self) -> bool {
        self.machine.stage() == ProtocolStage::Complete
    }

    pub fn drain_telemetry(&mut self) -> Vec<String> {
        std::mem::take(&mut self.telemetry)
    }

    pub fn last_t_us(&self) -> u64 {
        self.last_ts.unwrap_or(0)
    }

    /// Stage a frame at `timestamp_us` would be processed in.
    pub fn upcoming_stage(&self, timestamp_us: u64) -> ProtocolStage {
        let mut m = self.machine.clone();
        if m.stage() == ProtocolStage::Idle {
            if !self.config.auto_start {
                return ProtocolStage::Idle;
            }
            let _ = m.advance(StageEvent::OperatorStart);
            return m.stage();
        }
        m.tick(timestamp_us.saturating_sub(self.last_ts.unwrap_or(timestamp_us)));
        if m.timer_due() {
            let _ = m.advance(StageEvent::StageTimerElapsed);
        }
        m.stage()
    }

    pub(crate) fn transition(
        &mut self,
        event: StageEvent,
        t_us: u64,
    ) -> Result<ProtocolStage, SessionError> {
        let previous = self.machine.stage();
        let elapsed = self.machine.elapsed_us();
        let next = self.machine.advance(event)?;
        if next != previous {
            self.on_exit(previous, elapsed, t_us);
            self.log.push(
                t_us,
                RecordBody::Stage {
                    stage: next,
                    previous,
                    aborted: self.machine.aborted(),
                },
            );
            if next.is_walking() {
                self.walk = Self::fresh_walk(&self.config)?;
                self.feedback.reset_stance();
            }
        }
        Ok(next)
    }

    fn on_exit(&mut self, stage: ProtocolStage, elapsed_us: u64, t_us: u64) {
        match stage {
            ProtocolStage::BaselineControl if self.feedback.threshold().is_none() => {
                match calibrate_threshold(&self.baseline_peaks, self.multiplier) {
                    Ok(t) => {
                        self.feedback.set_threshold(t);
                        self.log.push(
                            t_us,
                            RecordBody::Threshold {
                                threshold: t,
                                source: ThresholdSource::Calibration,
                            },
                        );
                    }
                    Err(e) => {
                        self.log.push(
                            t_us,
                            RecordBody::Error {
                                code: "calibration_failed".into(),
                                message: e.to_string(),
                            },
                        );
                    }
                }
            }
            ProtocolStage::FeedbackBout(n) => {
                let summary =
                    bout_summary(&self.walk.bout_outcomes, &self.config.schedule, elapsed_us);
                self.log
                    .push(t_us, RecordBody::BoutSummary { bout: n, summary });
            }
            _ => {}
        }
    }

    pub(crate) fn fail(&mut self, e: SessionError) -> SessionError {
        let t = self.last_t_us();
        self.log.push(
            t,
            RecordBody::Error {
                code: e.code().into(),
                message: e.to_string(),
            },
        );
        e
    }

    /// Processes one frame.
    pub fn step(&mut self, frame: &KinematicFrame) -> Result<StepOutput, SessionError> {
        if self.is_complete() {
            return Ok(StepOutput::default());
        }
        let ts = frame.timestamp_us;
        if let Err(e) = frame
            .validate()
            .and_then(|_| self.monitor.check(ts).map(|_| ()))
        {
            return Err(self.fail(e.into()));
        }
        let dt = match self.last_ts {
            Some(prev) => {
                let gap = ts - prev;
                if gap > INGEST_TIMEOUT_US {
                    return Err(self.fail(SessionError::IngestLost {
                        last_t_us: prev,
                        gap_us: gap,
                    }));
                }
                gap
            }
            None => 0,
        };
        self.last_ts = Some(ts);
        self.frame_index += 1;
        let frame_index = self.frame_index - 1;

        if self.machine.stage() == ProtocolStage::Idle {
            if !self.config.auto_start {
                self.sink.tick(ts);
                return Ok(StepOutput::default());
            }
            self.transition(StageEvent::OperatorStart, ts)?;
        } else {
            self.machine.tick(dt);
            self.minute_markers(ts);
            if self.machine.timer_due() {
                let d = self.machine.duration_us().unwrap();
                let carry = self.machine.elapsed_us() - d;
                self.transition(StageEvent::StageTimerElapsed, ts - carry)?;
            }
        }
        self.sink.tick(ts);
        let stage = self.machine.stage();
        if !stage.is_walking() || self.machine.paused() {
            return Ok(StepOutput::default());
        }
        self.walking_frame(frame, frame_index, stage)
            .map_err(|e| self.fail(e))
    }

    fn minute_markers(&mut self, ts: u64) {
        let stage = self.machine.stage();
        if !stage.is_walking() {
            return;
        }
        let minutes = self.machine.duration_us().unwrap_or(0) / 60_000_000;
        while (self.walk.next_minute as u64) <= minutes
            && self.machine.elapsed_us() >= self.walk.next_minute as u64 * 60_000_000
        {
            let rec = DistanceRecord {
                stage,
                minute: self.walk.next_minute,
                meters: self.walk.path_m,
                source: DistanceSource::Auto,
            };
            // Auto distances are non-decreasing by construction.
            let _ = self.log.record_distance(ts, rec, &self.config.durations);
            self.walk.next_minute += 1;
        }
    }

    fn pose_at(&self, t_us: u64) -> Option<Pose> {
        self.recent_frames
            .iter()
            .rev()
            .find(|f| f.timestamp_us == t_us)
            .map(pose_of)
    }

    fn walking_frame(
        &mut self,
        frame: &KinematicFrame,
        frame_index: u64,
        stage: ProtocolStage,
    ) -> Result<StepOutput, SessionError> {
        let ts = frame.timestamp_us;
        let pose = pose_of(frame);
        if self.walk.frames % DECIMATION == 0 {
            self.log.push(ts, RecordBody::Frame { stage, pose });
        }
        if let Some(p) = self.walk.last_pelvis {
            self.walk.path_m += (pose.pelvis[0] - p[0]).hypot(pose.pelvis[1] - p[1]);
        }
        self.walk.last_pelvis = Some(pose.pelvis);
        if self.recent_frames.len() == POSE_BUFFER_FRAMES {
            self.recent_frames.pop_front();
        }
        self.recent_frames.push_back(frame.clone());

        let mut out = StepOutput::default();
        let estimate = predict_frame(&mut self.walk.inference, frame, &self.weights)?;
        self.log.push(
            ts,
            RecordBody::Estimate {
                agrf_bw: estimate.agrf_bw,
                warmed_up: estimate.warmed_up,
            },
        );
        out.estimate = Some(estimate);
        self.last_estimate = Some(estimate);

        let sample = ApSample {
            frame_index,
            timestamp_us: ts,
            value_m: ap_relative_position(frame, Side::Paretic),
        };
        let event = self.walk.detector.push(sample)?;
        if let Some(e) = event {
            self.log.push(ts, RecordBody::Event { stage, event: e });
            self.pending_events.push(e);
        }
        out.event = event;

        let bout = stage.bout();
        let (stance, outcome, trigger) = match (bout, self.feedback.threshold().is_some()) {
            (Some(_), true) => {
                let step = self.feedback.update(
                    &estimate,
                    event.as_ref(),
                    Some(self.machine.elapsed_us()),
                )?;
                (step.stance, step.outcome, step.trigger)
            }
            _ => (
                self.walk.tracker.push(&estimate, event.as_ref()),
                None,
                None,
            ),
        };
        if let Some(s) = stance {
            self.log_stance(ts, stage, &s);
        }
        if let Some(o) = outcome {
            let n = bout.unwrap_or(0);
            self.log.push(
                ts,
                RecordBody::Outcome {
                    bout: n,
                    outcome: o,
                },
            );
            self.walk.bout_outcomes.push(o);
            if self.recent_outcomes.len() == 5 {
                self.recent_outcomes.pop_front();
            }
            self.recent_outcomes.push_back(o);
            self.pending_outcomes.push(o);
            out.outcome = Some(o);
        }
        if let Some(t) = trigger {
            let cmd = HapticCommand {
                kind: CommandKind::DoublePulse,
                seq: self.seq.next(),
            };
            let delivery = self.sink.send(cmd, ts);
            self.log.push(
                ts,
                RecordBody::Trigger {
                    bout: bout.unwrap_or(0),
                    command_seq: cmd.seq,
                    stance_index: t.stance_index,
                    delivery,
                },
            );
            if delivery == Delivery::Unreachable {
                self.log.push(
                    ts,
                    RecordBody::Error {
                        code: "device_unreachable".into(),
                        message: format!("command {} not sent", cmd.seq),
                    },
                );
            }
            if self.config.telemetry {
                self.telemetry.push(
                    json!({
                        "type": "trigger",
                        "t": ts as f64 / 1e6,
                        "stance_index": t.stance_index,
                        "seq": cmd.seq,
                        "delivery": delivery,
                    })
                    .to_string(),
                );
            }
            out.trigger = Some((t, cmd, delivery));
        }
        if self.config.telemetry && self.walk.frames % DECIMATION == 0 {
            self.push_telemetry(ts, stage, estimate.agrf_bw);
        }
        self.walk.frames += 1;
        Ok(out)
    }

    fn log_stance(&mut self, ts: u64, stage: ProtocolStage, s: &CompletedStance) {
        if stage == ProtocolStage::BaselineControl {
            if let Some(p) = s.peak {
                self.baseline_peaks.push(p.agrf_bw);
            }
        }
        let duration_ms = (s.swing.timestamp_us - s.contact.timestamp_us) as f64 / 1000.0;
        let rec = StanceRecord {
            stage,
            index: s.index,
            contact_us: s.contact.timestamp_us,
            swing_us: s.swing.timestamp_us,
            duration_ms,
            flagged: !(crate::gaitevents::PLAUSIBLE_STANCE_MS.0
                ..=crate::gaitevents::PLAUSIBLE_STANCE_MS.1)
                .contains(&duration_ms),
            peak_agrf_bw: s.peak.map(|p| p.agrf_bw),
            peak_time_us: s.peak.map(|p| p.timestamp_us),
            peak_pose: s.peak.and_then(|p| self.pose_at(p.timestamp_us)),
            contact_pose: self.pose_at(s.contact.timestamp_us),
        };
        self.log.push(ts, RecordBody::Stance(rec));
    }

    fn push_telemetry(&mut self, ts: u64, stage: ProtocolStage, agrf_bw: f64) {
        let active = stage
            .bout()
            .and_then(|_| {
                self.config
                    .schedule
                    .state_at_us(self.machine.elapsed_us())
                    .ok()
            })
            .map(|s| s.active);
        let events = std::mem::take(&mut self.pending_events);
        let outcomes = std::mem::take(&mut self.pending_outcomes);
        let mut msg = json!({
            "type": "telemetry",
            "t": ts as f64 / 1e6,
            "agrf_bw": agrf_bw,
            "stage": stage,
            "schedule_active": active.unwrap_or(false),
            "threshold": self.feedback.threshold().map(|t| t.value),
        });
        if let Some(e) = events.last() {
            msg["event"] = json!(e);
        }
        if let Some(o) = outcomes.last() {
            msg["outcome"] = json!(o);
        }
        self.telemetry.push(msg.to_string());
    }

    pub(crate) fn recent_outcomes(&self) -> Vec<StanceOutcome> {
        self.recent_outcomes.iter().copied().collect()
    }

    pub(crate) fn set_multiplier(&mut self, m: f64) -> Result<(), SessionError> {
        if self.feedback.threshold().is_some() {
            return Err(SessionError::Rejected(
                "threshold already calibrated".into(),
            ));
        }
        if !(m.is_finite() && m > 0.0) {
            return Err(SessionError::SchemaViolation(
                "multiplier must be positive".into(),
            ));
        }
        self.multiplier = m;
        Ok(())
    }

    pub(crate) fn override_threshold(&mut self, value_bw: f64) -> Result<(), SessionError> {
        let stage = self.machine.stage();
        let before_first_bout = matches!(
            stage,
            ProtocolStage::Idle
                | ProtocolStage::BaselineControl
                | ProtocolStage::DonDevice
                | ProtocolStage::SeatedRest(1)
        );
        if !before_first_bout {
            return Err(SessionError::Rejected(
                "threshold is frozen once bouts begin".into(),
            ));
        }
        if !(value_bw.is_finite() && value_bw > 0.0) {
            return Err(SessionError::SchemaViolation(
                "threshold must be positive".into(),
            ));
        }
        let mean = self
            .feedback
            .threshold()
            .map_or(value_bw / self.multiplier, |t| t.baseline_mean_peak);
        let t = Threshold {
            baseline_mean_peak: mean,
            multiplier: value_bw / mean,
            value: value_bw,
            stances: self.feedback.threshold().map_or(0, |t| t.stances),
            low_confidence: self.feedback.threshold().map_or(true, |t| t.low_confidence),
        };
        self.feedback.set_threshold(t);
        let now = self.last_t_us();
        self.log.push(
            now,
            RecordBody::Threshold {
                threshold: t,
                source: ThresholdSource::Override,
            },
        );
        Ok(())
    }

    pub(crate) fn operator_distance(
        &mut self,
        stage: ProtocolStage,
        minute: u32,
        meters: f64,
    ) -> Result<(), SessionError> {
        let now = self.last_t_us();
        self.log.record_distance(
            now,
            DistanceRecord {
                stage,
                minute,
                meters,
                source: DistanceSource::Operator,
            },
            &self.config.durations,
        )
    }

    pub(crate) fn log_mut(&mut self) -> &mut SessionLog {
        &mut self.log
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }
}

fn pose_of(frame: &KinematicFrame) -> Pose {
    Pose {
        pelvis: frame.position(SegmentId::Pelvis),
        foot_paretic: frame.position(SegmentId::FootParetic),
        foot_nonparetic: frame.position(SegmentId::FootNonparetic),
    }
}

/// Error from [`run_session`] together with the log written up to it.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionFailure {
    pub error: SessionError,
    pub log: SessionLog,
}

impl std::fmt::Display for SessionFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.error.fmt(f)
    }
}

impl std::error::Error for SessionFailure {}

/// Runs the protocol to completion over `source`. A source that ends before
/// the protocol completes is reported as lost ingest.
pub fn run_session<S: HapticSink>(
    config: SessionConfig,
    weights: ModelWeights,
    source: &mut dyn FrameSource,
    sink: S,
) -> Result<SessionLog, SessionFailure> {
    let mut engine = match Engine::new(config, weights, sink) {
        Ok(e) => e,
        Err(error) => {
            return Err(SessionFailure {
                error,
                log: SessionLog::default(),
            })
        }
    };
    while !engine.is_complete() {
        let frame = match source.next_frame() {
            Some(Ok(f)) => f,
            Some(Err(e)) => {
                let error = engine.fail(e);
                return Err(SessionFailure {
                    error,
                    log: engine.into_log(),
                });
            }
            None => {
                let last = engine.last_t_us();
                let error = engine.fail(SessionError::IngestLost {
                    last_t_us: last,
                    gap_us: INGEST_TIMEOUT_US,
                });
                return Err(SessionFailure {
                    error,
                    log: engine.into_log(),
                });
            }
        };
        if let Err(error) = engine.step(&frame) {
            return Err(SessionFailure {
                error,
                log: engine.into_log(),
            });
        }
    }
    Ok(engine.into_log())
}
