//! The synthetic participant walking the full protocol against the engine,
//! reacting stride by stride to the pulses it receives.

use super::response::{step_response, ResponseMode, ResponseModel, ResponseState};
use super::{GaitProfile, SynthError, Walker};
use crate::estimator::ModelWeights;
use crate::frame::{BodyParams, BodySide};
use crate::haptics::{EmulatorSink, MotorTransition};
use crate::session::{Engine, SessionConfig, SessionError, SessionLog};

#[derive(Debug, Clone)]
pub struct ClosedLoopConfig {
    pub profile: GaitProfile,
    pub response: ResponseModel,
    pub session: SessionConfig,
    /// Safety stop for runaway protocols.
    pub max_frames: u64,
}

#[derive(Debug, Clone)]
pub struct ClosedLoopRun {
    pub log: SessionLog,
    pub device_log: Vec<MotorTransition>,
    pub response: ResponseState,
    pub pulses_received: u64,
}

/// Seconds allowed for donning the armband in scripted sessions.
pub const SCRIPTED_DON_DEVICE_S: u64 = 60;
/// Per-stride peak spread of scripted participants.
pub const SCRIPTED_PEAK_VARIABILITY: f64 = 0.08;

impl ClosedLoopConfig {
    /// A scripted participant with the default gait, walking the default
    /// protocol.
    pub fn scripted(mode: ResponseMode, seed: u64) -> Self {
        let id = match mode {
            ResponseMode::Responder => "responder",
            ResponseMode::Nonresponder => "nonresponder",
        };
        let body = BodyParams {
            mass_kg: 70.0,
            paretic_side: BodySide::Left,
        };
        let mut session = SessionConfig::new(&format!("{id}-{seed}"), body);
        session.durations.don_device_s = Some(SCRIPTED_DON_DEVICE_S);
        session.seed = Some(seed);
        session.source = format!("synthgait:{id}");
        ClosedLoopConfig {
            profile: GaitProfile {
                seed,
                peak_variability: SCRIPTED_PEAK_VARIABILITY,
                ..GaitProfile::default()
            },
            response: ResponseModel::for_mode(mode),
            session,
            max_frames: 200_000,
        }
    }
}

impl From<SynthError> for SessionError {
    fn from(e: SynthError) -> Self {
        SessionError::Config(e.to_string())
    }
}

/// Runs the protocol to completion with an emulated armband. The walker walks
/// exactly during walking trials and stands still otherwise.
pub fn closed_loop(
    cfg: &ClosedLoopConfig,
    weights: ModelWeights,
) -> Result<ClosedLoopRun, SessionError> {
    cfg.profile.validate()?;
    let mut session = cfg.session.clone();
    session.auto_start = true;
    if session.durations.don_device_s.is_none() {
        return Err(SessionError::Config(
            "closed loop needs a timed device-donning stage".into(),
        ));
    }
    let mut engine = Engine::new(session, weights, EmulatorSink::default())?;
    let mut walker = Walker::new(cfg.profile, 0);
    let mut state = ResponseState::new(cfg.profile.agrf_peak_bw);
    let mut pulsed = false;
    let mut pulses = 0;
    let mut next_ts = 0u64;
    let mut frames = 0u64;
    while !engine.is_complete() {
        if frames >= cfg.max_frames {
            return Err(SessionError::Config(format!(
                "protocol not complete after {frames} frames"
            )));
        }
        walker.set_walking(engine.upcoming_stage(next_ts).is_walking());
        let sample = walker.next_frame();
        if sample.stride_started.is_some() {
            let peak = step_response(&cfg.response, &mut state, pulsed);
            walker.set_peak_level(peak);
            pulsed = false;
        }
        next_ts = sample.frame.timestamp_us + crate::frame::FRAME_INTERVAL_US;
        let out = engine.step(&sample.frame)?;
        if out.trigger.is_some() {
            pulsed = true;
            pulses += 1;
        }
        frames += 1;
    }
    let (log, sink) = engine.into_parts();
    Ok(ClosedLoopRun {
        log,
        device_log: sink.device.log().to_vec(),
        response: state,
        pulses_received: pulses,
    })
}
