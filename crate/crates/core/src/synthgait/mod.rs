//! Deterministic synthetic hemiparetic gait.
//!
//! The generator produces kinematic frames together with the ground truth the
//! rest of the engine is tested against: per-frame paretic AGRF, foot-contact
//! and swing-initiation times, and per-stance peaks.
//!
//! Construction, per stride of period `T` with phase `φ ∈ [0, 1)`:
//! - foot position relative to the pelvis (AP) is a piecewise cosine with its
//!   crest at `φ = 0` (foot contact) and trough at `φ = stance_fraction`
//!   (swing initiation);
//! - paretic AGRF during stance is a braking raised-cosine lobe centred at 25%
//!   of stance followed by a propulsive raised-cosine lobe peaking at 85% of
//!   stance, and is zero in swing;
//! - paretic foot (and, weaker, shank) pitch carries a push-off term
//!   proportional to the running AGRF impulse, so the foot's angular velocity
//!   contains the AGRF waveform itself;
//! - accelerations and angular velocities are exact time derivatives of the
//!   positions and angles, plus seeded Gaussian noise.

mod closed_loop;
mod jet;
mod response;

use std::f64::consts::PI;
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::{KinematicFrame, SegmentId, SegmentSample, FRAME_INTERVAL_US};
use crate::gaitevents::EventKind;
use jet::Jet;

pub use closed_loop::{
    closed_loop, ClosedLoopConfig, ClosedLoopRun, SCRIPTED_DON_DEVICE_S, SCRIPTED_PEAK_VARIABILITY,
};
pub use response::{step_response, ResponseMode, ResponseModel, ResponseState};

const DT_S: f64 = FRAME_INTERVAL_US as f64 * 1e-6;
const PELVIS_HEIGHT_M: f64 = 0.92;
const FOOT_HEIGHT_M: f64 = 0.07;
const FOOT_LIFT_M: f64 = 0.06;
const LATERAL_M: f64 = 0.1;
/// Pitch change per unit AGRF impulse (rad per BW·s).
const PUSH_OFF_GAIN: f64 = 30.0;
/// Walks begin three quarters into a stride (mid-swing), so the first foot
/// contact is preceded by a full rise of the AP signal.
const START_PHASE: f64 = 0.75;
const BRAKING_CENTRE: f64 = 0.25;
const BRAKING_HALF_WIDTH: f64 = 0.25;
const PROPULSIVE_CENTRE: f64 = 0.85;
const PROPULSIVE_HALF_WIDTH: f64 = 0.15;
const MAX_PEAK_BW: f64 = 0.3;
const MIN_PEAK_BW: f64 = 0.005;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("bad gait profile: {0}")]
    BadProfile(String),
    #[error("io: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSd {
    pub accel: f64,
    pub gyro: f64,
    pub position: f64,
}

impl NoiseSd {
    pub const NONE: NoiseSd = NoiseSd {
        accel: 0.0,
        gyro: 0.0,
        position: 0.0,
    };
}

impl Default for NoiseSd {
    fn default() -> Self {
        NoiseSd {
            accel: 0.05,
            gyro: 0.02,
            position: 0.0005,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaitProfile {
    pub stride_period_s: f64,
    pub speed_mps: f64,
    /// Crest (and trough) amplitude of the paretic foot's AP position
    /// relative to the pelvis.
    pub stride_amplitude_m: f64,
    /// Fraction of the stride the paretic foot spends in stance.
    pub stance_fraction: f64,
    pub agrf_peak_bw: f64,
    pub braking_peak_bw: f64,
    /// Fractional reduction of the non-paretic excursion; 0 is symmetric.
    pub asymmetry: f64,
    /// Standard deviation of the per-stride peak, as a fraction of the level.
    pub peak_variability: f64,
    /// Mean posterior offset of the feet from the pelvis.
    pub foot_offset_m: f64,
    pub noise: NoiseSd,
    pub seed: u64,
}

impl Default for GaitProfile {
    fn default() -> Self {
        GaitProfile {
            stride_period_s: 1.2,
            speed_mps: 0.64,
            stride_amplitude_m: 0.16,
            stance_fraction: 0.6,
            agrf_peak_bw: 0.088,
            braking_peak_bw: -0.10,
            asymmetry: 0.3,
            peak_variability: 0.0,
            foot_offset_m: 0.05,
            noise: NoiseSd::default(),
            seed: 1,
        }
    }
}

impl GaitProfile {
    pub fn noiseless() -> Self {
        GaitProfile {
            noise: NoiseSd::NONE,
            ..GaitProfile::default()
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::BadProfile(m.to_string()));
        let positive = [
            self.stride_period_s,
            self.speed_mps,
            self.stride_amplitude_m,
        ];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return bad("stride period, speed and amplitude must be positive");
        }
        if !(0.2..=0.9).contains(&self.stance_fraction) {
            return bad("stance fraction must lie in [0.2, 0.9]");
        }
        if !(self.agrf_peak_bw > 0.0 && self.agrf_peak_bw < MAX_PEAK_BW) {
            return bad("propulsive peak must lie in (0, 0.3) BW");
        }
        if !(self.braking_peak_bw <= 0.0 && self.braking_peak_bw > -1.0) {
            return bad("braking peak must lie in (-1, 0] BW");
        }
        if !(0.0..1.0).contains(&self.asymmetry) {
            return bad("asymmetry must lie in [0, 1)");
        }
        let nonneg = [
            self.peak_variability,
            self.foot_offset_m,
            self.noise.accel,
            self.noise.gyro,
            self.noise.position,
        ];
        if nonneg.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return bad("variability, offset and noise must be non-negative");
        }
        Ok(())
    }

    pub fn stance_s(&self) -> f64 {
        self.stance_fraction * self.stride_period_s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthEvent {
    pub kind: EventKind,
    /// Exact event time.
    pub timestamp_us: u64,
    /// Frame nearest to the event.
    pub frame_index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthStance {
    pub stride: u64,
    pub peak_bw: f64,
    pub peak_time_us: u64,
    pub contact_us: u64,
    pub swing_us: u64,
}

/// One generated frame with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSample {
    pub frame: KinematicFrame,
    pub agrf_bw: f64,
    pub walking: bool,
    /// Set on the first frame at or after a paretic foot contact.
    pub stride_started: Option<u64>,
    pub events: Vec<TruthEvent>,
    /// Set when a paretic stance has just completed.
    pub stance: Option<TruthStance>,
}

#[derive(Debug, Clone, Copy)]
struct Walk {
    /// Frames since walk clock zero (the clock starts at `START_PHASE`).
    clock_frames: u64,
    stride: u64,
    stride_peak: Option<f64>,
    x_origin: f64,
}

/// Streaming generator. Frames are produced at 50 Hz; walking can be
/// switched on and off between frames (off = standing still), and the
/// per-stride propulsive level can be changed between strides.
pub struct Walker {
    profile: GaitProfile,
    rng: ChaCha8Rng,
    variability: Option<Normal<f64>>,
    next_timestamp_us: u64,
    frame_index: usize,
    peak_level: f64,
    walk: Option<Walk>,
    start_offset_frames: u64,
    rest_x: f64,
}

fn noisy(rng: &mut ChaCha8Rng, sd: f64) -> f64 {
    if sd > 0.0 {
        Normal::new(0.0, sd).unwrap().sample(rng)
    } else {
        0.0
    }
}

/// Raised cosine lobe: 1 at `u = 0`, 0 for `|u| >= 1`.
fn lobe(u: Jet) -> Jet {
    if u.v.abs() >= 1.0 {
        Jet::constant(0.0)
    } else {
        ((u * PI).cos() + 1.0) * 0.5
    }
}

/// Integral of [`lobe`] in units of its half-width, normalized to 1.
fn lobe_integral(u: Jet) -> Jet {
    if u.v <= -1.0 {
        Jet::constant(0.0)
    } else if u.v >= 1.0 {
        Jet::constant(1.0)
    } else {
        (u + 1.0) * 0.5 + (u * PI).sin() * (1.0 / (2.0 * PI))
    }
}

/// AP excursion shape: +1 at phase 0, -1 at `stance`, cosine in between.
fn excursion(phase: Jet, stance: f64) -> Jet {
    if phase.v < stance {
        (phase * (PI / stance)).cos()
    } else {
        -((phase - stance) * (PI / (1.0 - stance))).cos()
    }
}

fn swing_lift(phase: Jet, stance: f64) -> Jet {
    if phase.v < stance {
        Jet::constant(0.0)
    } else {
        let s = ((phase - stance) * (PI / (1.0 - stance))).sin();
        s * s
    }
}

struct Pose {
    pos: [[Jet; 3]; 7],
    pitch: [Jet; 7],
    agrf: f64,
}

impl Walker {
    pub fn new(profile: GaitProfile, start_us: u64) -> Self {
        let variability = (profile.peak_variability > 0.0)
            .then(|| Normal::new(0.0, profile.peak_variability).unwrap());
        let start_offset_frames = (START_PHASE * profile.stride_period_s / DT_S).round() as u64;
        let mut w = Walker {
            rng: ChaCha8Rng::seed_from_u64(profile.seed),
            variability,
            next_timestamp_us: start_us,
            frame_index: 0,
            peak_level: profile.agrf_peak_bw,
            walk: None,
            start_offset_frames,
            rest_x: 0.0,
            profile,
        };
        w.set_walking(true);
        w
    }

    pub fn profile(&self) -> &GaitProfile {
        &self.profile
    }

    pub fn is_walking(&self) -> bool {
        self.walk.is_some()
    }

    /// Starting a walk resets the walk clock and the pelvis X origin.
    pub fn set_walking(&mut self, walking: bool) {
        match (walking, self.walk.is_some()) {
            (true, false) => {
                self.walk = Some(Walk {
                    clock_frames: self.start_offset_frames,
                    stride: (self.start_offset_frames as f64 * DT_S / self.profile.stride_period_s)
                        .floor() as u64,
                    stride_peak: None,
                    x_origin: 0.0,
                })
            }
            (false, true) => self.walk = None,
            _ => {}
        }
    }

    /// Propulsive peak level for strides whose propulsive phase has not yet
    /// started. Clamped to (0, 0.3) BW.
    pub fn set_peak_level(&mut self, peak_bw: f64) {
        self.peak_level = peak_bw.clamp(MIN_PEAK_BW, MAX_PEAK_BW - 1e-3);
    }

    pub fn peak_level(&self) -> f64 {
        self.peak_level
    }

    fn draw_stride_peak(&mut self) -> f64 {
        let eps = match &self.variability {
            Some(n) => n.sample(&mut self.rng),
            None => 0.0,
        };
        (self.peak_level * (1.0 + eps)).clamp(MIN_PEAK_BW, MAX_PEAK_BW - 1e-3)
    }

    fn pose(&self, tau: f64, stride: u64, peak: f64) -> Pose {
        let p = &self.profile;
        let period = p.stride_period_s;
        let s = p.stance_fraction;
        let t = Jet::variable(tau);
        let cycle = t * (1.0 / period);
        let phase = cycle - stride as f64;
        let phase_n = if phase.v + 0.5 >= 1.0 {
            phase - 0.5
        } else {
            phase + 0.5
        };

        // Paretic AGRF and its running impulse.
        let stance_s = s * period;
        let (agrf, impulse) = if phase.v < s {
            let sigma = phase * (1.0 / s);
            let ub = (sigma - BRAKING_CENTRE) * (1.0 / BRAKING_HALF_WIDTH);
            let up = (sigma - PROPULSIVE_CENTRE) * (1.0 / PROPULSIVE_HALF_WIDTH);
            let f = lobe(ub) * p.braking_peak_bw + lobe(up) * peak;
            let j = lobe_integral(ub) * (stance_s * BRAKING_HALF_WIDTH * p.braking_peak_bw)
                + lobe_integral(up) * (stance_s * PROPULSIVE_HALF_WIDTH * peak);
            (f.v, j)
        } else {
            let end =
                stance_s * (BRAKING_HALF_WIDTH * p.braking_peak_bw + PROPULSIVE_HALF_WIDTH * peak);
            let v = (phase - s) * (1.0 / (1.0 - s));
            (0.0, ((v * PI).cos() + 1.0) * (0.5 * end))
        };

        let n_scale = 1.0 - p.asymmetry;
        let two_pi = 2.0 * PI;
        let x0 = self.walk.map(|w| w.x_origin).unwrap_or(0.0);
        let walk_start = self.start_offset_frames as f64 * DT_S;
        let px = (t - walk_start) * p.speed_mps + (cycle * (2.0 * two_pi)).sin() * 0.01 + x0;
        let pz = (cycle * (2.0 * two_pi)).cos() * 0.015 + PELVIS_HEIGHT_M;
        let py = Jet::constant(0.0);

        let fpx = px - p.foot_offset_m + excursion(phase, s) * p.stride_amplitude_m;
        let fpz = swing_lift(phase, s) * FOOT_LIFT_M + FOOT_HEIGHT_M;
        let fnx = px - p.foot_offset_m + excursion(phase_n, s) * (p.stride_amplitude_m * n_scale);
        let fnz =
            swing_lift(phase_n, s) * (FOOT_LIFT_M * (1.0 - 0.5 * p.asymmetry)) + FOOT_HEIGHT_M;

        let shank = |fx: Jet, fz: Jet, ph: Jet| {
            [
                (px + fx) * 0.5 + (ph * two_pi + 1.0).sin() * 0.03,
                Jet::constant(0.0),
                (pz + fz) * 0.5 - 0.02,
            ]
        };
        let thigh = |fx: Jet, fz: Jet| {
            [
                px * 0.8 + fx * 0.2,
                Jet::constant(0.0),
                pz * 0.75 + fz * 0.25,
            ]
        };
        let lateral = |mut v: [Jet; 3], y: f64| {
            v[1] = Jet::constant(y);
            v
        };

        let pos = [
            [px, py, pz],
            lateral(thigh(fpx, fpz), LATERAL_M),
            lateral(thigh(fnx, fnz), -LATERAL_M),
            lateral(shank(fpx, fpz, phase), LATERAL_M),
            lateral(shank(fnx, fnz, phase_n), -LATERAL_M),
            [fpx, Jet::constant(LATERAL_M), fpz],
            [fnx, Jet::constant(-LATERAL_M), fnz],
        ];
        let k = 1.0 - 0.5 * p.asymmetry;
        let pitch = [
            (cycle * two_pi).sin() * 0.03,
            (phase * two_pi + 0.5).sin() * 0.35,
            (phase_n * two_pi + 0.5).sin() * (0.35 * k),
            (phase * two_pi + 1.2).sin() * 0.45 + impulse * (0.5 * PUSH_OFF_GAIN),
            (phase_n * two_pi + 1.2).sin() * (0.45 * k),
            (phase * two_pi + 2.0).sin() * 0.30 + impulse * PUSH_OFF_GAIN,
            (phase_n * two_pi + 2.0).sin() * (0.30 * k),
        ];
        Pose { pos, pitch, agrf }
    }

    fn frame_from_pose(&mut self, pose: &Pose, timestamp_us: u64) -> KinematicFrame {
        let noise = self.profile.noise;
        let mut frame = KinematicFrame::at_rest(timestamp_us);
        for id in SegmentId::ALL {
            let i = id.index();
            let th = pose.pitch[i].v;
            let mut s = SegmentSample {
                orientation: [(th / 2.0).cos() as f32, 0.0, (th / 2.0).sin() as f32, 0.0],
                ..SegmentSample::REST
            };
            for a in 0..3 {
                let p = pose.pos[i][a];
                s.free_accel[a] = (p.d2 + noisy(&mut self.rng, noise.accel)) as f32;
                s.position[a] = (p.v + noisy(&mut self.rng, noise.position)) as f32;
                let w = if a == 1 { pose.pitch[i].d1 } else { 0.0 };
                s.ang_vel[a] = (w + noisy(&mut self.rng, noise.gyro)) as f32;
            }
            *frame.segment_mut(id) = s;
        }
        frame
    }

    fn rest_frame(&mut self, timestamp_us: u64) -> KinematicFrame {
        let noise = self.profile.noise;
        let x = self.rest_x;
        let mut pos = [[0.0; 3]; 7];
        pos[SegmentId::Pelvis.index()] = [x, 0.0, PELVIS_HEIGHT_M];
        for (id, y) in [
            (SegmentId::FootParetic, LATERAL_M),
            (SegmentId::FootNonparetic, -LATERAL_M),
        ] {
            pos[id.index()] = [x - self.profile.foot_offset_m, y, FOOT_HEIGHT_M];
        }
        for (id, y) in [
            (SegmentId::ShankParetic, LATERAL_M),
            (SegmentId::ShankNonparetic, -LATERAL_M),
        ] {
            pos[id.index()] = [x, y, 0.5 * (PELVIS_HEIGHT_M + FOOT_HEIGHT_M)];
        }
        for (id, y) in [
            (SegmentId::ThighParetic, LATERAL_M),
            (SegmentId::ThighNonparetic, -LATERAL_M),
        ] {
            pos[id.index()] = [x, y, 0.75 * PELVIS_HEIGHT_M + 0.25 * FOOT_HEIGHT_M];
        }
        let mut frame = KinematicFrame::at_rest(timestamp_us);
        for id in SegmentId::ALL {
            let s = frame.segment_mut(id);
            for a in 0..3 {
                s.position[a] = (pos[id.index()][a] + noisy(&mut self.rng, noise.position)) as f32;
                s.free_accel[a] = noisy(&mut self.rng, noise.accel) as f32;
                s.ang_vel[a] = noisy(&mut self.rng, noise.gyro) as f32;
            }
        }
        frame
    }

    pub fn next_frame(&mut self) -> SyntheticSample {
        let timestamp_us = self.next_timestamp_us;
        self.next_timestamp_us += FRAME_INTERVAL_US;
        let frame_index = self.frame_index;
        self.frame_index += 1;

        let Some(mut walk) = self.walk else {
            let frame = self.rest_frame(timestamp_us);
            return SyntheticSample {
                frame,
                agrf_bw: 0.0,
                walking: false,
                stride_started: None,
                events: Vec::new(),
                stance: None,
            };
        };

        let period = self.profile.stride_period_s;
        let s = self.profile.stance_fraction;
        let tau = walk.clock_frames as f64 * DT_S;
        let prev_tau = tau - DT_S;
        // Small guard so frame-aligned events land on their own frame.
        let stride_of = |t: f64| ((t + 1e-9) / period).floor() as u64;
        let stride = stride_of(tau);
        let mut events = Vec::new();
        let mut stance = None;
        let mut stride_started = None;

        let to_us = |t: f64| -> u64 {
            let offset = (t - tau) * 1e6;
            (timestamp_us as f64 + offset).round() as u64
        };
        let nearest = |t: f64| -> usize {
            let off = ((t - tau) / DT_S).round() as i64;
            (frame_index as i64 + off).max(0) as usize
        };

        if stride != walk.stride {
            // Complete the previous stride's stance bookkeeping if its swing
            // initiation fell between the previous frame and this one is
            // handled below; here only the new contact.
            walk.stride = stride;
            walk.stride_peak = None;
            stride_started = Some(stride);
            let t_contact = stride as f64 * period;
            events.push(TruthEvent {
                kind: EventKind::FootContact,
                timestamp_us: to_us(t_contact),
                frame_index: nearest(t_contact),
            });
        }
        let phase = tau / period - stride as f64;
        if walk.stride_peak.is_none() && phase >= 0.5 * s {
            // Lazily committed so the level can still change during early stance.
            walk.stride_peak = Some(self.draw_stride_peak());
        }
        let t_swing = (stride as f64 + s) * period;
        if prev_tau < t_swing - 1e-9 && tau >= t_swing - 1e-9 {
            events.push(TruthEvent {
                kind: EventKind::SwingInit,
                timestamp_us: to_us(t_swing),
                frame_index: nearest(t_swing),
            });
            // A stance only counts when the walk covered its contact.
            let walk_start = self.start_offset_frames as f64 * DT_S;
            let t_contact = stride as f64 * period;
            if t_contact >= walk_start - 1e-9 {
                stance = Some(TruthStance {
                    stride,
                    peak_bw: walk.stride_peak.unwrap_or(self.peak_level),
                    peak_time_us: to_us(t_contact + PROPULSIVE_CENTRE * self.profile.stance_s()),
                    contact_us: to_us(t_contact),
                    swing_us: to_us(t_swing),
                });
            }
        }
        let peak = walk.stride_peak.unwrap_or(self.peak_level);
        self.walk = Some(walk);
        let pose = self.pose(tau, stride, peak);
        let frame = self.frame_from_pose(&pose, timestamp_us);
        self.rest_x = pose.pos[SegmentId::Pelvis.index()][0].v;
        if let Some(w) = self.walk.as_mut() {
            w.clock_frames += 1;
        }
        SyntheticSample {
            frame,
            agrf_bw: pose.agrf,
            walking: true,
            stride_started,
            events,
            stance,
        }
    }
}

/// Frames plus ground truth for a fixed-length walk.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub frames: Vec<KinematicFrame>,
    pub agrf_bw: Vec<f64>,
    pub events: Vec<TruthEvent>,
    pub stances: Vec<TruthStance>,
}

impl Recording {
    /// Line-delimited JSON `.truth` records: one per event and per stance.
    pub fn write_truth<W: Write>(&self, mut out: W) -> Result<(), SynthError> {
        let io = |e: std::io::Error| SynthError::Io(e.to_string());
        for e in &self.events {
            let line = serde_json::json!({"kind": "event", "event": e});
            writeln!(out, "{line}").map_err(io)?;
        }
        for s in &self.stances {
            let line = serde_json::json!({"kind": "stance", "stance": s});
            writeln!(out, "{line}").map_err(io)?;
        }
        Ok(())
    }
}

/// Generates `duration_s` of continuous walking. Timestamps start where the
/// walk clock starts, so foot contacts fall on exact multiples of the stride
/// period.
pub fn generate(profile: &GaitProfile, duration_s: f64) -> Result<Recording, SynthError> {
    profile.validate()?;
    if !(duration_s >= 2.0 * profile.stride_period_s) {
        return Err(SynthError::BadProfile(
            "duration must cover at least two strides".into(),
        ));
    }
    let offset = (START_PHASE * profile.stride_period_s / DT_S).round() as u64;
    let mut walker = Walker::new(*profile, offset * FRAME_INTERVAL_US);
    let n = (duration_s / DT_S).round() as usize;
    let mut rec = Recording {
        frames: Vec::with_capacity(n),
        agrf_bw: Vec::with_capacity(n),
        events: Vec::new(),
        stances: Vec::new(),
    };
    for _ in 0..n {
        let s = walker.next_frame();
        rec.frames.push(s.frame);
        rec.agrf_bw.push(s.agrf_bw);
        rec.events.extend(s.events);
        rec.stances.extend(s.stance);
    }
    Ok(rec)
}

/// A profile whose cadence, speed, peak level and asymmetry vary with the
/// seed. Used to build training and held-out sets.
pub fn varied_profile(seed: u64, peak_variability: f64) -> GaitProfile {
    let k = seed as f64;
    GaitProfile {
        seed,
        stride_period_s: 1.0 + 0.1 * (k % 5.0),
        speed_mps: 0.4 + 0.1 * (k % 6.0),
        agrf_peak_bw: 0.06 + 0.01 * (k % 5.0),
        asymmetry: 0.1 + 0.1 * (k % 4.0),
        peak_variability,
        ..GaitProfile::default()
    }
}

/// Training recordings for the reference estimator: `count` varied
/// profiles of `duration_s` each, seeds starting at 1.
pub fn training_set(
    count: u64,
    duration_s: f64,
) -> Result<Vec<(Vec<KinematicFrame>, Vec<f64>)>, SynthError> {
    (1..=count)
        .map(|seed| {
            generate(&varied_profile(seed, TRAINING_PEAK_VARIABILITY), duration_s)
                .map(|r| (r.frames, r.agrf_bw))
        })
        .collect()
}

/// Relative per-stride peak spread used for training sets.
pub const TRAINING_PEAK_VARIABILITY: f64 = 0.3;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::Side;
    use crate::gaitevents::ap_relative_position;

    #[test]
    fn default_minute_has_fifty_strides() {
        let rec = generate(&GaitProfile::default(), 60.0).unwrap();
        assert_eq!(rec.frames.len(), 3000);
        let contacts = rec
            .events
            .iter()
            .filter(|e| e.kind == EventKind::FootContact)
            .count();
        assert!((49..=51).contains(&contacts), "{contacts}");
        assert!((49..=51).contains(&rec.stances.len()));
        assert!(rec
            .stances
            .iter()
            .all(|s| (s.peak_bw - 0.088).abs() < 1e-12));
    }

    #[test]
    fn noiseless_events_on_stride_multiples() {
        let p = GaitProfile::noiseless();
        let rec = generate(&p, 12.0).unwrap();
        for e in &rec.events {
            let t = e.timestamp_us as f64 * 1e-6;
            let k = t / p.stride_period_s;
            let frac = k - k.floor();
            match e.kind {
                EventKind::FootContact => assert!(frac.min(1.0 - frac) < 1e-9, "{t}"),
                EventKind::SwingInit => assert!((frac - 0.6).abs() < 1e-9),
            }
            assert_eq!(rec.frames[e.frame_index].timestamp_us, e.timestamp_us);
        }
    }

    #[test]
    fn noiseless_symmetric_inertial_channels_are_periodic() {
        let p = GaitProfile {
            asymmetry: 0.0,
            ..GaitProfile::noiseless()
        };
        let rec = generate(&p, 10.0).unwrap();
        let per = 60;
        for i in 0..200 {
            let (a, b) = (&rec.frames[i], &rec.frames[i + per]);
            for id in SegmentId::ALL {
                let (sa, sb) = (a.segment(id), b.segment(id));
                for k in 0..3 {
                    assert!((sa.free_accel[k] - sb.free_accel[k]).abs() < 1e-4);
                    assert!((sa.ang_vel[k] - sb.ang_vel[k]).abs() < 1e-4);
                    assert!((sa.position[k] - sb.position[k]).abs() < 1e-4 || k == 0);
                }
            }
            assert!((rec.agrf_bw[i] - rec.agrf_bw[i + per]).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_speed_is_bad_profile() {
        let p = GaitProfile {
            speed_mps: 0.0,
            ..GaitProfile::default()
        };
        assert!(matches!(generate(&p, 10.0), Err(SynthError::BadProfile(_))));
        assert!(generate(&GaitProfile::default(), 1.0).is_err());
    }

    #[test]
    fn agrf_zero_in_swing_and_peak_in_terminal_stance() {
        let rec = generate(&GaitProfile::noiseless(), 30.0).unwrap();
        let mut swing = false;
        let mut ev = rec.events.iter().peekable();
        for (i, f) in rec.agrf_bw.iter().enumerate() {
            while let Some(e) = ev.peek() {
                if e.frame_index > i {
                    break;
                }
                swing = e.kind == EventKind::SwingInit;
                ev.next();
            }
            if swing {
                assert_eq!(*f, 0.0, "frame {i}");
            }
        }
        let max = rec.agrf_bw.iter().cloned().fold(f64::MIN, f64::max);
        assert!(max <= 0.088 + 1e-12 && max > 0.085);
    }

    #[test]
    fn inertial_channels_integrate_to_positions() {
        // Second differences of position against a Numerov-weighted
        // acceleration, and central differences of pitch against Simpson's
        // rule on angular velocity. The stance/swing junctions carry
        // acceleration jumps, which bound the worst case.
        let rec = generate(&GaitProfile::noiseless(), 8.0).unwrap();
        let dt = DT_S;
        for id in SegmentId::ALL {
            for axis in 0..3 {
                let pos: Vec<f64> = rec
                    .frames
                    .iter()
                    .map(|f| f.segment(id).position[axis] as f64)
                    .collect();
                let acc: Vec<f64> = rec
                    .frames
                    .iter()
                    .map(|f| f.segment(id).free_accel[axis] as f64)
                    .collect();
                let mut errs: Vec<f64> = (1..pos.len() - 1)
                    .map(|i| {
                        let d2 = pos[i + 1] - 2.0 * pos[i] + pos[i - 1];
                        let nu = dt * dt * (acc[i - 1] + 10.0 * acc[i] + acc[i + 1]) / 12.0;
                        (d2 - nu).abs()
                    })
                    .collect();
                errs.sort_by(f64::total_cmp);
                assert!(
                    *errs.last().unwrap() < 1e-3,
                    "{id:?} axis {axis} max {:?}",
                    errs.last()
                );
                assert!(
                    errs[errs.len() / 2] < 2e-6,
                    "{id:?} axis {axis} median {}",
                    errs[errs.len() / 2]
                );
            }
            let ang: Vec<f64> = rec
                .frames
                .iter()
                .map(|f| {
                    let q = f.segment(id).orientation;
                    2.0 * (q[2] as f64).atan2(q[0] as f64)
                })
                .collect();
            let w: Vec<f64> = rec
                .frames
                .iter()
                .map(|f| f.segment(id).ang_vel[1] as f64)
                .collect();
            for i in 1..ang.len() - 1 {
                let simpson = dt / 3.0 * (w[i - 1] + 4.0 * w[i] + w[i + 1]);
                let e = (ang[i + 1] - ang[i - 1] - simpson).abs();
                assert!(e < 1e-3, "{id:?} pitch frame {i} err {e}");
            }
        }
    }

    #[test]
    fn ap_signal_amplitude_matches_profile() {
        let p = GaitProfile::noiseless();
        let rec = generate(&p, 12.0).unwrap();
        let sig: Vec<f64> = rec
            .frames
            .iter()
            .map(|f| ap_relative_position(f, Side::Paretic))
            .collect();
        let max = sig.iter().cloned().fold(f64::MIN, f64::max);
        let min = sig.iter().cloned().fold(f64::MAX, f64::min);
        assert!((max - (p.stride_amplitude_m - p.foot_offset_m)).abs() < 1e-5);
        assert!((min - (-p.stride_amplitude_m - p.foot_offset_m)).abs() < 1e-5);
    }

    #[test]
    fn deterministic_given_seed() {
        let p = GaitProfile {
            peak_variability: 0.1,
            ..GaitProfile::default()
        };
        assert_eq!(generate(&p, 10.0).unwrap(), generate(&p, 10.0).unwrap());
        let q = GaitProfile { seed: 2, ..p };
        assert_ne!(
            generate(&p, 10.0).unwrap().frames,
            generate(&q, 10.0).unwrap().frames
        );
    }
}
