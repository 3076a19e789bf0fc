//! Kinematic frames, body-weight normalization and the ingest wire formats.
//!
//! A [`KinematicFrame`] is one 50 Hz sample of the seven lower-body segments.
//! World axes are X anterior, Y lateral, Z vertical.
//!
//! Binary record layout (all multi-byte fields little-endian):
//!
//! ```text
//! offset  size  field
//! 0       4     magic, the ASCII bytes "GAIT"
//! 4       1     version (= 1)
//! 5       8     timestamp_us (u64)
//! 13      1     segment_count (= 7)
//! 14      53*7  per segment: id u8, quaternion w,x,y,z f32, free_accel 3xf32,
//!               ang_vel 3xf32, position 3xf32
//! ```
//!
//! Replay files (`.gaitbin`) are a sequence of records, each preceded by its
//! length as a u32.

use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const FRAME_MAGIC: [u8; 4] = *b"GAIT";
pub const FRAME_VERSION: u8 = 1;
pub const SEGMENT_COUNT: usize = 7;
const SEGMENT_BYTES: usize = 1 + 13 * 4;
pub const RECORD_BYTES: usize = 4 + 1 + 8 + 1 + SEGMENT_COUNT * SEGMENT_BYTES;

/// Standard gravity, m/s².
pub const GRAVITY: f64 = 9.80665;
/// Nominal sampling interval at 50 Hz.
pub const FRAME_INTERVAL_US: u64 = 20_000;
/// Inter-frame gaps above this are flagged.
pub const MAX_NOMINAL_GAP_US: u64 = 25_000;
const QUAT_NORM_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FrameError {
    #[error("bad magic bytes {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("truncated frame: need {needed} bytes, got {got}")]
    TruncatedFrame { needed: usize, got: usize },
    #[error("unknown frame version {0}")]
    UnknownVersion(u8),
    #[error("segment count must be 7, got {0}")]
    BadSegmentCount(u8),
    #[error("unknown segment id {0}")]
    UnknownSegment(u8),
    #[error("segment {0:?} appears twice")]
    DuplicateSegment(SegmentId),
    #[error("{0} trailing bytes after record")]
    TrailingBytes(usize),
    #[error("quaternion of {segment:?} has norm {norm}")]
    QuaternionNorm { segment: SegmentId, norm: f64 },
    #[error("non-finite value in {0:?}")]
    NonFinite(SegmentId),
    #[error("non-positive body mass {0} kg")]
    NonPositiveMass(f64),
    #[error("timestamp {current} does not follow {previous}")]
    NonMonotonicTimestamp { previous: u64, current: u64 },
    #[error("csv: {0}")]
    Csv(String),
    #[error("io: {0}")]
    Io(String),
}

impl From<io::Error> for FrameError {
    fn from(e: io::Error) -> Self {
        FrameError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum SegmentId {
    Pelvis = 0,
    ThighParetic = 1,
    ThighNonparetic = 2,
    ShankParetic = 3,
    ShankNonparetic = 4,
    FootParetic = 5,
    FootNonparetic = 6,
}

impl SegmentId {
    pub const ALL: [SegmentId; SEGMENT_COUNT] = [
        SegmentId::Pelvis,
        SegmentId::ThighParetic,
        SegmentId::ThighNonparetic,
        SegmentId::ShankParetic,
        SegmentId::ShankNonparetic,
        SegmentId::FootParetic,
        SegmentId::FootNonparetic,
    ];

    pub fn from_u8(id: u8) -> Option<Self> {
        Self::ALL.get(id as usize).copied()
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            SegmentId::Pelvis => "pelvis",
            SegmentId::ThighParetic => "thigh_paretic",
            SegmentId::ThighNonparetic => "thigh_nonparetic",
            SegmentId::ShankParetic => "shank_paretic",
            SegmentId::ShankNonparetic => "shank_nonparetic",
            SegmentId::FootParetic => "foot_paretic",
            SegmentId::FootNonparetic => "foot_nonparetic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Paretic,
    Nonparetic,
}

impl Side {
    pub fn foot(self) -> SegmentId {
        match self {
            Side::Paretic => SegmentId::FootParetic,
            Side::Nonparetic => SegmentId::FootNonparetic,
        }
    }

    pub fn other(self) -> Side {
        match self {
            Side::Paretic => Side::Nonparetic,
            Side::Nonparetic => Side::Paretic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BodySide {
    Left,
    Right,
}

/// Kinematics of one segment. Stored in single precision, as on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentSample {
    /// Unit quaternion (w, x, y, z).
    pub orientation: [f32; 4],
    /// Free (gravity-removed) acceleration in the world frame, m/s².
    pub free_accel: [f32; 3],
    /// Angular velocity, rad/s.
    pub ang_vel: [f32; 3],
    /// World position, m.
    pub position: [f32; 3],
}

impl SegmentSample {
    pub const REST: SegmentSample = SegmentSample {
        orientation: [1.0, 0.0, 0.0, 0.0],
        free_accel: [0.0; 3],
        ang_vel: [0.0; 3],
        position: [0.0; 3],
    };

    pub fn quaternion_norm(&self) -> f64 {
        self.orientation
            .iter()
            .map(|&q| (q as f64) * (q as f64))
            .sum::<f64>()
            .sqrt()
    }

    fn is_finite(&self) -> bool {
        self.orientation
            .iter()
            .chain(&self.free_accel)
            .chain(&self.ang_vel)
            .chain(&self.position)
            .all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KinematicFrame {
    pub timestamp_us: u64,
    /// Indexed by [`SegmentId::index`].
    pub segments: [SegmentSample; SEGMENT_COUNT],
}

impl KinematicFrame {
    pub fn at_rest(timestamp_us: u64) -> Self {
        KinematicFrame {
            timestamp_us,
            segments: [SegmentSample::REST; SEGMENT_COUNT],
        }
    }

    pub fn segment(&self, id: SegmentId) -> &SegmentSample {
        &self.segments[id.index()]
    }

    pub fn segment_mut(&mut self, id: SegmentId) -> &mut SegmentSample {
        &mut self.segments[id.index()]
    }

    pub fn position(&self, id: SegmentId) -> [f64; 3] {
        let p = self.segment(id).position;
        [p[0] as f64, p[1] as f64, p[2] as f64]
    }

    /// Checks the per-sample invariants (finite values, unit quaternions).
    pub fn validate(&self) -> Result<(), FrameError> {
        for id in SegmentId::ALL {
            let s = self.segment(id);
            if !s.is_finite() {
                return Err(FrameError::NonFinite(id));
            }
            let norm = s.quaternion_norm();
            if (norm - 1.0).abs() > QUAT_NORM_TOLERANCE {
                return Err(FrameError::QuaternionNorm { segment: id, norm });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BodyParams {
    pub mass_kg: f64,
    pub paretic_side: BodySide,
}

impl BodyParams {
    pub fn new(mass_kg: f64, paretic_side: BodySide) -> Result<Self, FrameError> {
        if !(mass_kg > 0.0) {
            return Err(FrameError::NonPositiveMass(mass_kg));
        }
        Ok(BodyParams {
            mass_kg,
            paretic_side,
        })
    }

    pub fn body_weight_n(&self) -> f64 {
        self.mass_kg * GRAVITY
    }
}

/// Converts a force in newtons into body weights.
pub fn newtons_to_bw(force_n: f64, body: &BodyParams) -> Result<f64, FrameError> {
    if !(body.mass_kg > 0.0) {
        return Err(FrameError::NonPositiveMass(body.mass_kg));
    }
    Ok(force_n / body.body_weight_n())
}

/// Per-frame estimator output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgrfEstimate {
    pub timestamp_us: u64,
    /// Anterior positive, braking negative.
    pub agrf_bw: f64,
    pub warmed_up: bool,
    pub latency_us: u64,
}

pub fn encode_frame(frame: &KinematicFrame) -> Result<Vec<u8>, FrameError> {
    frame.validate()?;
    let mut out = Vec::with_capacity(RECORD_BYTES);
    out.extend_from_slice(&FRAME_MAGIC);
    out.push(FRAME_VERSION);
    out.extend_from_slice(&frame.timestamp_us.to_le_bytes());
    out.push(SEGMENT_COUNT as u8);
    for id in SegmentId::ALL {
        let s = frame.segment(id);
        out.push(id as u8);
        for v in s
            .orientation
            .iter()
            .chain(&s.free_accel)
            .chain(&s.ang_vel)
            .chain(&s.position)
        {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    debug_assert_eq!(out.len(), RECORD_BYTES);
    Ok(out)
}

pub fn decode_frame(bytes: &[u8]) -> Result<KinematicFrame, FrameError> {
    let truncated = || FrameError::TruncatedFrame {
        needed: RECORD_BYTES,
        got: bytes.len(),
    };
    if bytes.len() < 4 {
        return Err(truncated());
    }
    let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
    if magic != FRAME_MAGIC {
        return Err(FrameError::BadMagic(magic));
    }
    let version = *bytes.get(4).ok_or_else(truncated)?;
    if version != FRAME_VERSION {
        return Err(FrameError::UnknownVersion(version));
    }
    if bytes.len() < 14 {
        return Err(truncated());
    }
    let timestamp_us = u64::from_le_bytes(bytes[5..13].try_into().unwrap());
    let count = bytes[13];
    if count as usize != SEGMENT_COUNT {
        return Err(FrameError::BadSegmentCount(count));
    }
    if bytes.len() < RECORD_BYTES {
        return Err(truncated());
    }
    if bytes.len() > RECORD_BYTES {
        return Err(FrameError::TrailingBytes(bytes.len() - RECORD_BYTES));
    }

    let mut segments: [Option<SegmentSample>; SEGMENT_COUNT] = [None; SEGMENT_COUNT];
    for chunk in bytes[14..].chunks_exact(SEGMENT_BYTES) {
        let id = SegmentId::from_u8(chunk[0]).ok_or(FrameError::UnknownSegment(chunk[0]))?;
        let mut vals = [0f32; 13];
        for (v, b) in vals.iter_mut().zip(chunk[1..].chunks_exact(4)) {
            *v = f32::from_le_bytes(b.try_into().unwrap());
        }
        let slot = &mut segments[id.index()];
        if slot.is_some() {
            return Err(FrameError::DuplicateSegment(id));
        }
        *slot = Some(SegmentSample {
            orientation: [vals[0], vals[1], vals[2], vals[3]],
            free_accel: [vals[4], vals[5], vals[6]],
            ang_vel: [vals[7], vals[8], vals[9]],
            position: [vals[10], vals[11], vals[12]],
        });
    }
    // Seven distinct ids out of seven slots means every slot is filled.
    let frame = KinematicFrame {
        timestamp_us,
        segments: segments.map(|s| s.expect("all segments present")),
    };
    frame.validate()?;
    Ok(frame)
}

/// Writes length-prefixed records to a `.gaitbin` stream.
pub struct ReplayWriter<W: Write> {
    inner: W,
}

impl<W: Write> ReplayWriter<W> {
    pub fn new(inner: W) -> Self {
        ReplayWriter { inner }
    }

    pub fn write_frame(&mut self, frame: &KinematicFrame) -> Result<(), FrameError> {
        let record = encode_frame(frame)?;
        self.inner.write_all(&(record.len() as u32).to_le_bytes())?;
        self.inner.write_all(&record)?;
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.inner
    }
}

/// Iterates the records of a `.gaitbin` stream.
pub struct ReplayReader<R: Read> {
    inner: R,
}

impl<R: Read> ReplayReader<R> {
    pub fn new(inner: R) -> Self {
        ReplayReader { inner }
    }
}

impl<R: Read> Iterator for ReplayReader<R> {
    type Item = Result<KinematicFrame, FrameError>;

    fn next(&mut self) -> Option<Self::Item> {
        let mut len = [0u8; 4];
        match self.inner.read_exact(&mut len) {
            Ok(()) => {}
            Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return None,
            Err(e) => return Some(Err(e.into())),
        }
        let len = u32::from_le_bytes(len) as usize;
        let mut buf = vec![0u8; len];
        if let Err(e) = self.inner.read_exact(&mut buf) {
            return Some(Err(match e.kind() {
                io::ErrorKind::UnexpectedEof => FrameError::TruncatedFrame {
                    needed: len,
                    got: 0,
                },
                _ => e.into(),
            }));
        }
        Some(decode_frame(&buf))
    }
}

const CSV_FIELDS: [&str; 13] = [
    "qw", "qx", "qy", "qz", "ax", "ay", "az", "gx", "gy", "gz", "px", "py", "pz",
];

/// Column names of the CSV fixture format: `timestamp_us` followed by
/// `<segment>_<field>` for each segment in id order and each of
/// qw qx qy qz ax ay az gx gy gz px py pz.
pub fn csv_header() -> Vec<String> {
    let mut cols = vec!["timestamp_us".to_string()];
    for id in SegmentId::ALL {
        for f in CSV_FIELDS {
            cols.push(format!("{}_{}", id.name(), f));
        }
    }
    cols
}

pub fn write_csv<W: Write>(out: W, frames: &[KinematicFrame]) -> Result<(), FrameError> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| FrameError::Csv(e.to_string());
    w.write_record(csv_header()).map_err(csv_err)?;
    for f in frames {
        f.validate()?;
        let mut row = vec![f.timestamp_us.to_string()];
        for s in &f.segments {
            for v in s
                .orientation
                .iter()
                .chain(&s.free_accel)
                .chain(&s.ang_vel)
                .chain(&s.position)
            {
                row.push(v.to_string());
            }
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<KinematicFrame>, FrameError> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r
        .headers()
        .map_err(|e| FrameError::Csv(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header != csv_header() {
        return Err(FrameError::Csv("unexpected header".into()));
    }
    let mut frames = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| FrameError::Csv(e.to_string()))?;
        let bad = |what: &str| FrameError::Csv(format!("row {}: bad {what}", line + 1));
        let timestamp_us: u64 = rec[0].parse().map_err(|_| bad("timestamp"))?;
        let mut frame = KinematicFrame::at_rest(timestamp_us);
        for id in SegmentId::ALL {
            let base = 1 + id.index() * 13;
            let mut vals = [0f32; 13];
            for (k, v) in vals.iter_mut().enumerate() {
                *v = rec[base + k].parse().map_err(|_| bad(CSV_FIELDS[k]))?;
            }
            *frame.segment_mut(id) = SegmentSample {
                orientation: [vals[0], vals[1], vals[2], vals[3]],
                free_accel: [vals[4], vals[5], vals[6]],
                ang_vel: [vals[7], vals[8], vals[9]],
                position: [vals[10], vals[11], vals[12]],
            };
        }
        frame.validate()?;
        frames.push(frame);
    }
    Ok(frames)
}

/// Stream-level checks: strictly increasing timestamps, gap flagging.
#[derive(Debug, Default, Clone)]
pub struct StreamMonitor {
    last_us: Option<u64>,
    flagged_gaps: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameCheck {
    pub gap_us: Option<u64>,
    /// Gap to the previous frame exceeded 25 ms.
    pub gap_flagged: bool,
}

impl StreamMonitor {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn check(&mut self, timestamp_us: u64) -> Result<FrameCheck, FrameError> {
        let gap_us = match self.last_us {
            Some(prev) if timestamp_us <= prev => {
                return Err(FrameError::NonMonotonicTimestamp {
                    previous: prev,
                    current: timestamp_us,
                })
            }
            Some(prev) => Some(timestamp_us - prev),
            None => None,
        };
        self.last_us = Some(timestamp_us);
        let gap_flagged = gap_us.is_some_and(|g| g > MAX_NOMINAL_GAP_US);
        if gap_flagged {
            self.flagged_gaps += 1;
        }
        Ok(FrameCheck {
            gap_us,
            gap_flagged,
        })
    }

    pub fn flagged_gaps(&self) -> u64 {
        self.flagged_gaps
    }

    pub fn last_timestamp_us(&self) -> Option<u64> {
        self.last_us
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample_frame() -> KinematicFrame {
        let mut f = KinematicFrame::at_rest(1_234_567);
        for id in SegmentId::ALL {
            let k = id.index() as f32;
            let (s, c) = (0.1 * k).sin_cos();
            *f.segment_mut(id) = SegmentSample {
                orientation: [c, 0.0, s, 0.0],
                free_accel: [0.5 * k, -0.25, 9.0],
                ang_vel: [0.0, 1.5 - k, 0.125],
                position: [1.0 + k, 0.1 * k, 0.9],
            };
        }
        f
    }

    #[test]
    fn well_formed_record_round_trips() {
        let f = sample_frame();
        let bytes = encode_frame(&f).unwrap();
        assert_eq!(bytes.len(), RECORD_BYTES);
        assert_eq!(&bytes[..4], b"GAIT");
        let back = decode_frame(&bytes).unwrap();
        assert_eq!(back.timestamp_us, 1_234_567);
        assert_eq!(back, f);
    }

    #[test]
    fn zero_motion_frame_round_trips() {
        let f = KinematicFrame::at_rest(0);
        assert_eq!(decode_frame(&encode_frame(&f).unwrap()).unwrap(), f);
    }

    #[test]
    fn truncated_after_segment_three() {
        let bytes = encode_frame(&sample_frame()).unwrap();
        let cut = 14 + 3 * SEGMENT_BYTES;
        assert!(matches!(
            decode_frame(&bytes[..cut]),
            Err(FrameError::TruncatedFrame { .. })
        ));
    }

    #[test]
    fn corrupted_first_byte_is_bad_magic() {
        let mut bytes = encode_frame(&sample_frame()).unwrap();
        bytes[0] ^= 0xff;
        assert!(matches!(decode_frame(&bytes), Err(FrameError::BadMagic(_))));
    }

    #[test]
    fn version_and_duplicates_rejected() {
        let mut bytes = encode_frame(&sample_frame()).unwrap();
        bytes[4] = 2;
        assert_eq!(decode_frame(&bytes), Err(FrameError::UnknownVersion(2)));

        let mut bytes = encode_frame(&sample_frame()).unwrap();
        // Relabel segment 1 as pelvis.
        bytes[14 + SEGMENT_BYTES] = 0;
        assert_eq!(
            decode_frame(&bytes),
            Err(FrameError::DuplicateSegment(SegmentId::Pelvis))
        );
    }

    #[test]
    fn encode_rejects_non_unit_quaternion() {
        let mut f = sample_frame();
        f.segment_mut(SegmentId::ShankParetic).orientation = [0.9, 0.0, 0.0, 0.0];
        assert!(matches!(
            encode_frame(&f),
            Err(FrameError::QuaternionNorm {
                segment: SegmentId::ShankParetic,
                ..
            })
        ));
    }

    #[test]
    fn body_weight_conversion() {
        let body = BodyParams::new(81.5, BodySide::Left).unwrap();
        assert_eq!(newtons_to_bw(0.0, &body).unwrap(), 0.0);
        assert!((newtons_to_bw(800.0, &body).unwrap() - 1.0009).abs() < 1e-4);
        assert!((newtons_to_bw(70.4, &body).unwrap() - 0.0881).abs() < 1e-4);
        let bad = BodyParams {
            mass_kg: 0.0,
            paretic_side: BodySide::Left,
        };
        assert!(matches!(
            newtons_to_bw(1.0, &bad),
            Err(FrameError::NonPositiveMass(_))
        ));
        assert!(BodyParams::new(-3.0, BodySide::Right).is_err());
    }

    #[test]
    fn stream_monitor_rejects_reordering_and_flags_gaps() {
        let mut m = StreamMonitor::new();
        assert!(!m.check(0).unwrap().gap_flagged);
        assert!(!m.check(20_000).unwrap().gap_flagged);
        assert!(m.check(50_000).unwrap().gap_flagged);
        assert!(m.check(50_000).is_err());
        assert!(m.check(40_000).is_err());
        assert_eq!(m.flagged_gaps(), 1);
    }

    #[test]
    fn replay_and_csv_round_trip() {
        let frames: Vec<_> = (0..5)
            .map(|i| {
                let mut f = sample_frame();
                f.timestamp_us = i * FRAME_INTERVAL_US;
                f
            })
            .collect();
        let mut w = ReplayWriter::new(Vec::new());
        for f in &frames {
            w.write_frame(f).unwrap();
        }
        let bytes = w.into_inner();
        let back: Vec<_> = ReplayReader::new(&bytes[..])
            .collect::<Result<_, _>>()
            .unwrap();
        assert_eq!(back, frames);

        let mut csv_bytes = Vec::new();
        write_csv(&mut csv_bytes, &frames).unwrap();
        assert_eq!(read_csv(&csv_bytes[..]).unwrap(), frames);
    }

    fn arb_unit_quat() -> impl Strategy<Value = [f32; 4]> {
        prop::array::uniform4(-1.0f32..1.0)
            .prop_filter("nonzero", |q| q.iter().map(|v| v * v).sum::<f32>() > 0.01)
            .prop_map(|q| {
                let n = q.iter().map(|v| (*v as f64).powi(2)).sum::<f64>().sqrt();
                q.map(|v| (v as f64 / n) as f32)
            })
    }

    fn arb_segment() -> impl Strategy<Value = SegmentSample> {
        (
            arb_unit_quat(),
            prop::array::uniform3(-50.0f32..50.0),
            prop::array::uniform3(-20.0f32..20.0),
            prop::array::uniform3(-1000.0f32..1000.0),
        )
            .prop_map(
                |(orientation, free_accel, ang_vel, position)| SegmentSample {
                    orientation,
                    free_accel,
                    ang_vel,
                    position,
                },
            )
    }

    proptest! {
        #[test]
        fn encode_decode_is_bijective(ts in any::<u64>(), segs in prop::array::uniform7(arb_segment())) {
            let f = KinematicFrame { timestamp_us: ts, segments: segs };
            let bytes = encode_frame(&f).unwrap();
            let back = decode_frame(&bytes).unwrap();
            prop_assert_eq!(encode_frame(&back).unwrap(), bytes);
            prop_assert_eq!(back, f);
        }

        #[test]
        fn bw_linear_in_force_inverse_in_mass(force in -2000.0f64..2000.0, mass in 20.0f64..200.0, k in 0.1f64..10.0) {
            let b1 = BodyParams::new(mass, BodySide::Left).unwrap();
            let bk = BodyParams::new(mass * k, BodySide::Left).unwrap();
            let base = newtons_to_bw(force, &b1).unwrap();
            prop_assert!((newtons_to_bw(force * k, &b1).unwrap() - k * base).abs() <= 1e-12 * (1.0 + base.abs() * k));
            prop_assert!((newtons_to_bw(force, &bk).unwrap() - base / k).abs() <= 1e-12 * (1.0 + base.abs()));
        }
    }
}
