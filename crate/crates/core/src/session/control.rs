//! Operator control messages: one JSON object per message with a `cmd`
//! field. Every message gets exactly one JSON reply carrying the current
//! status.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::engine::Engine;
use super::log::RecordBody;
use super::stage::{ProtocolStage, StageEvent};
use super::SessionError;
use crate::feedback::StanceOutcome;
use crate::haptics::HapticSink;

#[derive(Debug, Clone, PartialEq)]
pub enum ControlRequest {
    Status,
    Start,
    Pause,
    Resume,
    Abort,
    Advance,
    SetMultiplier(f64),
    SetThreshold(f64),
    /// Operator-entered cumulative distance; stage defaults to the current one.
    Distance {
        minute: u32,
        meters: f64,
        stage: Option<ProtocolStage>,
    },
}

impl ControlRequest {
    pub fn parse(text: &str) -> Result<Self, SessionError> {
        let bad = |m: String| SessionError::SchemaViolation(m);
        let v: Value = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
        let obj = v
            .as_object()
            .ok_or_else(|| bad("message must be an object".into()))?;
        let cmd = obj
            .get("cmd")
            .and_then(Value::as_str)
            .ok_or_else(|| bad("missing string field cmd".into()))?;
        let number = |field: &str| {
            obj.get(field)
                .and_then(Value::as_f64)
                .ok_or_else(|| bad(format!("{cmd} requires numeric field {field}")))
        };
        Ok(match cmd {
            "status" => ControlRequest::Status,
            "start" => ControlRequest::Start,
            "pause" => ControlRequest::Pause,
            "resume" => ControlRequest::Resume,
            "abort" => ControlRequest::Abort,
            "advance" => ControlRequest::Advance,
            "set_multiplier" => ControlRequest::SetMultiplier(number("value")?),
            "set_threshold" => ControlRequest::SetThreshold(number("value")?),
            "distance" => {
                let minute = obj
                    .get("minute")
                    .and_then(Value::as_u64)
                    .ok_or_else(|| bad("distance requires integer field minute".into()))?;
                let stage = match obj.get("stage") {
                    None | Some(Value::Null) => None,
                    Some(Value::String(s)) => Some(s.parse().map_err(bad)?),
                    Some(_) => return Err(bad("stage must be a string".into())),
                };
                ControlRequest::Distance {
                    minute: minute as u32,
                    meters: number("value")?,
                    stage,
                }
            }
            other => return Err(bad(format!("unknown cmd {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusSnapshot {
    pub stage: ProtocolStage,
    pub stage_elapsed_s: f64,
    pub stage_remaining_s: Option<f64>,
    pub paused: bool,
    pub aborted: bool,
    pub threshold: Option<f64>,
    pub multiplier: f64,
    pub outcomes: Vec<StanceOutcome>,
}

impl<S: HapticSink> Engine<S> {
    pub fn status(&self) -> StatusSnapshot {
        let m = self.machine();
        StatusSnapshot {
            stage: m.stage(),
            stage_elapsed_s: m.elapsed_us() as f64 / 1e6,
            stage_remaining_s: m.remaining_us().map(|r| r as f64 / 1e6),
            paused: m.paused(),
            aborted: m.aborted(),
            threshold: self.threshold().map(|t| t.value),
            multiplier: self.multiplier(),
            outcomes: self.recent_outcomes(),
        }
    }

    fn apply(&mut self, req: &ControlRequest) -> Result<(), SessionError> {
        let now = self.last_t_us();
        match req {
            ControlRequest::Status => Ok(()),
            ControlRequest::Start => self.transition(StageEvent::OperatorStart, now).map(|_| ()),
            ControlRequest::Pause => self.transition(StageEvent::OperatorPause, now).map(|_| ()),
            ControlRequest::Resume => self.transition(StageEvent::OperatorResume, now).map(|_| ()),
            ControlRequest::Abort => self.transition(StageEvent::OperatorAbort, now).map(|_| ()),
            ControlRequest::Advance => self
                .transition(StageEvent::OperatorAdvance, now)
                .map(|_| ()),
            ControlRequest::SetMultiplier(m) => self.set_multiplier(*m),
            ControlRequest::SetThreshold(v) => self.override_threshold(*v),
            ControlRequest::Distance {
                minute,
                meters,
                stage,
            } => {
                let stage = stage.unwrap_or(self.stage());
                self.operator_distance(stage, *minute, *meters)
            }
        }
    }

    /// Applies one control message and returns the JSON acknowledgment.
    /// The exchange is logged.
    pub fn handle_control(&mut self, message: &str) -> String {
        let result = ControlRequest::parse(message).and_then(|req| self.apply(&req));
        let mut reply = serde_json::json!({
            "type": "ack",
            "ok": result.is_ok(),
            "status": self.status(),
        });
        if let Err(e) = &result {
            reply["error"] = serde_json::json!({"code": e.code(), "message": e.to_string()});
        }
        let reply = reply.to_string();
        let now = self.last_t_us();
        self.log_mut().push(
            now,
            RecordBody::Control {
                request: message.to_string(),
                response: reply.clone(),
            },
        );
        reply
    }
}
