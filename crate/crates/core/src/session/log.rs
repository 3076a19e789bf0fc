//! Append-only session log, persisted as one JSON object per line with a
//! `kind` discriminator. Every record carries a strictly increasing `seq`
//! and a non-decreasing `t_us` (stream time).

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::stage::{ProtocolStage, StageDurations};
use super::SessionError;
use crate::feedback::{BoutSummary, FadedSchedule, StanceOutcome, Threshold};
use crate::frame::BodySide;
use crate::gaitevents::{DetectorParams, GaitEvent};
use crate::haptics::Delivery;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub schema_version: u32,
    pub participant_id: String,
    pub mass_kg: f64,
    pub paretic_side: BodySide,
    pub multiplier: f64,
    pub detector: DetectorParams,
    pub schedule: FadedSchedule,
    pub durations: StageDurations,
    /// Hex digest of the weight file in use.
    pub weights_digest: String,
    pub source: String,
    pub seed: Option<u64>,
}

/// Pelvis and foot positions (world frame, meters) at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub pelvis: [f64; 3],
    pub foot_paretic: [f64; 3],
    pub foot_nonparetic: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StanceRecord {
    pub stage: ProtocolStage,
    pub index: u64,
    pub contact_us: u64,
    pub swing_us: u64,
    pub duration_ms: f64,
    pub flagged: bool,
    pub peak_agrf_bw: Option<f64>,
    pub peak_time_us: Option<u64>,
    /// Pose at the frame of peak AGRF.
    pub peak_pose: Option<Pose>,
    /// Pose at the foot-contact frame.
    pub contact_pose: Option<Pose>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceSource {
    /// Pelvis path length.
    Auto,
    Operator,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceRecord {
    pub stage: ProtocolStage,
    pub minute: u32,
    pub meters: f64,
    pub source: DistanceSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdSource {
    Calibration,
    Override,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RecordBody {
    Header(Header),
    Stage {
        stage: ProtocolStage,
        previous: ProtocolStage,
        aborted: bool,
    },
    /// 10 Hz pose summary during walking trials.
    Frame {
        stage: ProtocolStage,
        pose: Pose,
    },
    Estimate {
        agrf_bw: f64,
        warmed_up: bool,
    },
    Event {
        stage: ProtocolStage,
        event: GaitEvent,
    },
    Stance(StanceRecord),
    Outcome {
        bout: u8,
        outcome: StanceOutcome,
    },
    Trigger {
        bout: u8,
        command_seq: u16,
        stance_index: u64,
        delivery: Delivery,
    },
    Threshold {
        threshold: Threshold,
        source: ThresholdSource,
    },
    Distance(DistanceRecord),
    BoutSummary {
        bout: u8,
        summary: BoutSummary,
    },
    Control {
        request: String,
        response: String,
    },
    Error {
        code: String,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub seq: u64,
    pub t_us: u64,
    #[serde(flatten)]
    pub body: RecordBody,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SessionLog {
    records: Vec<LogRecord>,
}

impl SessionLog {
    pub fn new(header: Header, t_us: u64) -> Self {
        let mut log = SessionLog::default();
        log.push(t_us, RecordBody::Header(header));
        log
    }

    pub fn records(&self) -> &[LogRecord] {
        &self.records
    }

    pub fn last_t_us(&self) -> u64 {
        self.records.last().map_or(0, |r| r.t_us)
    }

    /// Appends; `t_us` is clamped so time never runs backwards.
    pub fn push(&mut self, t_us: u64, body: RecordBody) -> &LogRecord {
        let seq = self.records.len() as u64;
        let t_us = t_us.max(self.last_t_us());
        self.records.push(LogRecord { seq, t_us, body });
        self.records.last().unwrap()
    }

    pub fn header(&self) -> Option<&Header> {
        match self.records.first().map(|r| &r.body) {
            Some(RecordBody::Header(h)) => Some(h),
            _ => None,
        }
    }

    /// Appends a distance after checking the minute lies within the stage
    /// and that the cumulative value did not decrease.
    pub fn record_distance(
        &mut self,
        t_us: u64,
        record: DistanceRecord,
        durations: &StageDurations,
    ) -> Result<(), SessionError> {
        let minutes = durations.of(record.stage).map_or(0, |d| d / 60_000_000) as u32;
        if record.minute == 0 || record.minute > minutes || !record.stage.is_walking() {
            return Err(SessionError::InvalidMinute {
                stage: record.stage,
                minute: record.minute,
            });
        }
        if !(record.meters.is_finite() && record.meters >= 0.0) {
            return Err(SessionError::SchemaViolation(
                "distance must be non-negative".into(),
            ));
        }
        // Cumulative: no earlier minute may exceed it, no later minute fall below it.
        let same = |d: &&DistanceRecord| d.stage == record.stage && d.source == record.source;
        let conflict = self.distances().filter(same).find(|d| {
            (d.minute < record.minute && d.meters > record.meters)
                || (d.minute > record.minute && d.meters < record.meters)
        });
        if let Some(d) = conflict {
            return Err(SessionError::NonMonotoneDistance {
                stage: record.stage,
                minute: record.minute,
                previous: d.meters,
                meters: record.meters,
            });
        }
        self.push(t_us, RecordBody::Distance(record));
        Ok(())
    }

    pub fn distances(&self) -> impl Iterator<Item = &DistanceRecord> {
        self.records.iter().filter_map(|r| match &r.body {
            RecordBody::Distance(d) => Some(d),
            _ => None,
        })
    }

    pub fn stances(&self) -> impl Iterator<Item = &StanceRecord> {
        self.records.iter().filter_map(|r| match &r.body {
            RecordBody::Stance(s) => Some(s),
            _ => None,
        })
    }

    pub fn outcomes(&self) -> impl Iterator<Item = (u8, &StanceOutcome)> {
        self.records.iter().filter_map(|r| match &r.body {
            RecordBody::Outcome { bout, outcome } => Some((*bout, outcome)),
            _ => None,
        })
    }

    /// (t_us, bout, stance index) of every trigger.
    pub fn triggers(&self) -> impl Iterator<Item = (u64, u8, u64)> + '_ {
        self.records.iter().filter_map(|r| match &r.body {
            RecordBody::Trigger {
                bout, stance_index, ..
            } => Some((r.t_us, *bout, *stance_index)),
            _ => None,
        })
    }

    /// The threshold in force at the end of the log.
    pub fn threshold(&self) -> Option<&Threshold> {
        self.records
            .iter()
            .filter_map(|r| match &r.body {
                RecordBody::Threshold { threshold, .. } => Some(threshold),
                _ => None,
            })
            .last()
    }

    /// (stage, start, end) spans from the stage records. An open final
    /// stage ends at the last record.
    pub fn stage_spans(&self) -> Vec<(ProtocolStage, u64, u64)> {
        let mut out: Vec<(ProtocolStage, u64, u64)> = Vec::new();
        for r in &self.records {
            if let RecordBody::Stage { stage, .. } = &r.body {
                if let Some(last) = out.last_mut() {
                    last.2 = r.t_us;
                }
                out.push((*stage, r.t_us, r.t_us));
            }
        }
        if let Some(last) = out.last_mut() {
            if last.0 != ProtocolStage::Complete {
                last.2 = self.last_t_us();
            }
        }
        out
    }

    pub fn aborted(&self) -> bool {
        self.records
            .iter()
            .any(|r| matches!(r.body, RecordBody::Stage { aborted: true, .. }))
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<(), SessionError> {
        for r in &self.records {
            let line = serde_json::to_string(r).map_err(|e| SessionError::Io(e.to_string()))?;
            writeln!(out, "{line}").map_err(|e| SessionError::Io(e.to_string()))?;
        }
        out.flush().map_err(|e| SessionError::Io(e.to_string()))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut v = Vec::new();
        self.write_to(&mut v).expect("writing to memory");
        v
    }

    pub fn persist(&self, path: &Path) -> Result<(), SessionError> {
        let f = std::fs::File::create(path).map_err(|e| SessionError::Io(e.to_string()))?;
        self.write_to(std::io::BufWriter::new(f))
    }

    pub fn read_from<R: Read>(input: R) -> Result<Self, SessionError> {
        let corrupt = |line: usize, reason: String| SessionError::CorruptLog { line, reason };
        let mut records: Vec<LogRecord> = Vec::new();
        for (i, line) in BufReader::new(input).lines().enumerate() {
            let n = i + 1;
            let line = line.map_err(|e| corrupt(n, e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let r: LogRecord =
                serde_json::from_str(&line).map_err(|e| corrupt(n, e.to_string()))?;
            match records.last() {
                None => match &r.body {
                    RecordBody::Header(h) if h.schema_version == SCHEMA_VERSION => {}
                    RecordBody::Header(h) => {
                        return Err(corrupt(
                            n,
                            format!("unsupported schema version {}", h.schema_version),
                        ))
                    }
                    _ => return Err(corrupt(n, "first record must be the header".into())),
                },
                Some(prev) => {
                    if r.seq <= prev.seq {
                        return Err(corrupt(n, format!("seq {} after {}", r.seq, prev.seq)));
                    }
                    if r.t_us < prev.t_us {
                        return Err(corrupt(n, format!("time {} after {}", r.t_us, prev.t_us)));
                    }
                    if matches!(r.body, RecordBody::Header(_)) {
                        return Err(corrupt(n, "second header".into()));
                    }
                }
            }
            records.push(r);
        }
        if records.is_empty() {
            return Err(corrupt(0, "empty log".into()));
        }
        Ok(SessionLog { records })
    }

    pub fn load(path: &Path) -> Result<Self, SessionError> {
        let f = std::fs::File::open(path).map_err(|e| SessionError::Io(e.to_string()))?;
        Self::read_from(f)
    }
}
