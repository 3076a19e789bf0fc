//! Protocol stage machine. Time is injected: the machine only advances when
//! told how much time has passed.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::SessionError;

pub const BOUT_COUNT: u8 = 4;
const S: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum ProtocolStage {
    Idle,
    BaselineControl,
    DonDevice,
    /// Rest preceding bout `n` (1-based).
    SeatedRest(u8),
    FeedbackBout(u8),
    PostControl,
    LongRest,
    RetentionControl,
    Complete,
}

/// Walking-trial condition used in analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Baseline,
    DuringFeedback,
    PostFeedback,
    Retention,
}

impl Condition {
    pub const ALL: [Condition; 4] = [
        Condition::Baseline,
        Condition::DuringFeedback,
        Condition::PostFeedback,
        Condition::Retention,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Condition::Baseline => "baseline",
            Condition::DuringFeedback => "during_feedback",
            Condition::PostFeedback => "post_feedback",
            Condition::Retention => "retention",
        }
    }
}

impl ProtocolStage {
    pub fn is_walking(self) -> bool {
        self.condition().is_some()
    }

    pub fn condition(self) -> Option<Condition> {
        match self {
            ProtocolStage::BaselineControl => Some(Condition::Baseline),
            ProtocolStage::FeedbackBout(_) => Some(Condition::DuringFeedback),
            ProtocolStage::PostControl => Some(Condition::PostFeedback),
            ProtocolStage::RetentionControl => Some(Condition::Retention),
            _ => None,
        }
    }

    pub fn bout(self) -> Option<u8> {
        match self {
            ProtocolStage::FeedbackBout(n) => Some(n),
            _ => None,
        }
    }

    pub fn is_rest(self) -> bool {
        matches!(self, ProtocolStage::SeatedRest(_) | ProtocolStage::LongRest)
    }

    /// The fixed successor in protocol order.
    pub fn next(self) -> Option<ProtocolStage> {
        use ProtocolStage::*;
        Some(match self {
            Idle => BaselineControl,
            BaselineControl => DonDevice,
            DonDevice => SeatedRest(1),
            SeatedRest(n) => FeedbackBout(n),
            FeedbackBout(n) if n < BOUT_COUNT => SeatedRest(n + 1),
            FeedbackBout(_) => PostControl,
            PostControl => LongRest,
            LongRest => RetentionControl,
            RetentionControl => Complete,
            Complete => return None,
        })
    }

    /// Every stage from `Idle` to `Complete`.
    pub fn sequence() -> Vec<ProtocolStage> {
        let mut out = vec![ProtocolStage::Idle];
        while let Some(n) = out.last().unwrap().next() {
            out.push(n);
        }
        out
    }
}

impl fmt::Display for ProtocolStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use ProtocolStage::*;
        match self {
            Idle => write!(f, "idle"),
            BaselineControl => write!(f, "baseline_control"),
            DonDevice => write!(f, "don_device"),
            SeatedRest(n) => write!(f, "seated_rest_{n}"),
            FeedbackBout(n) => write!(f, "feedback_bout_{n}"),
            PostControl => write!(f, "post_control"),
            LongRest => write!(f, "long_rest"),
            RetentionControl => write!(f, "retention_control"),
            Complete => write!(f, "complete"),
        }
    }
}

impl FromStr for ProtocolStage {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        ProtocolStage::sequence()
            .into_iter()
            .find(|st| st.to_string() == s)
            .ok_or_else(|| format!("unknown stage {s:?}"))
    }
}

impl From<ProtocolStage> for String {
    fn from(s: ProtocolStage) -> String {
        s.to_string()
    }
}

impl TryFrom<String> for ProtocolStage {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageDurations {
    pub control_s: u64,
    pub bout_s: u64,
    pub seated_rest_s: u64,
    pub long_rest_s: u64,
    /// `None` leaves device donning untimed (operator advances).
    pub don_device_s: Option<u64>,
}

impl Default for StageDurations {
    fn default() -> Self {
        StageDurations {
            control_s: 120,
            bout_s: 180,
            seated_rest_s: 120,
            long_rest_s: 600,
            don_device_s: None,
        }
    }
}

impl StageDurations {
    pub fn of(&self, stage: ProtocolStage) -> Option<u64> {
        use ProtocolStage::*;
        match stage {
            BaselineControl | PostControl | RetentionControl => Some(self.control_s * S),
            FeedbackBout(_) => Some(self.bout_s * S),
            SeatedRest(_) => Some(self.seated_rest_s * S),
            LongRest => Some(self.long_rest_s * S),
            DonDevice => self.don_device_s.map(|d| d * S),
            Idle | Complete => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageEvent {
    StageTimerElapsed,
    OperatorStart,
    OperatorAbort,
    OperatorPause,
    OperatorResume,
    /// Skips a rest or ends device donning.
    OperatorAdvance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageMachine {
    stage: ProtocolStage,
    elapsed_us: u64,
    paused: bool,
    aborted: bool,
    durations: StageDurations,
}

impl StageMachine {
    pub fn new(durations: StageDurations) -> Self {
        StageMachine {
            stage: ProtocolStage::Idle,
            elapsed_us: 0,
            paused: false,
            aborted: false,
            durations,
        }
    }

    pub fn stage(&self) -> ProtocolStage {
        self.stage
    }

    pub fn elapsed_us(&self) -> u64 {
        self.elapsed_us
    }

    pub fn paused(&self) -> bool {
        self.paused
    }

    pub fn aborted(&self) -> bool {
        self.aborted
    }

    pub fn durations(&self) -> &StageDurations {
        &self.durations
    }

    pub fn duration_us(&self) -> Option<u64> {
        self.durations.of(self.stage)
    }

    pub fn remaining_us(&self) -> Option<u64> {
        self.duration_us()
            .map(|d| d.saturating_sub(self.elapsed_us))
    }

    /// Adds stage time unless paused.
    pub fn tick(&mut self, dt_us: u64) {
        if !self.paused && !matches!(self.stage, ProtocolStage::Idle | ProtocolStage::Complete) {
            self.elapsed_us += dt_us;
        }
    }

    pub fn timer_due(&self) -> bool {
        self.duration_us().is_some_and(|d| self.elapsed_us >= d) && !self.paused
    }

    fn enter(&mut self, next: ProtocolStage, carry_us: u64) -> ProtocolStage {
        self.stage = next;
        self.elapsed_us = carry_us;
        next
    }

    pub fn advance(&mut self, event: StageEvent) -> Result<ProtocolStage, SessionError> {
        use ProtocolStage::*;
        let invalid = |s: &StageMachine| SessionError::InvalidTransition {
            stage: s.stage,
            event,
        };
        if self.stage == Complete {
            return Err(invalid(self));
        }
        match event {
            StageEvent::OperatorAbort => {
                self.aborted = true;
                self.paused = false;
                Ok(self.enter(Complete, 0))
            }
            StageEvent::OperatorStart if self.stage == Idle => Ok(self.enter(BaselineControl, 0)),
            StageEvent::OperatorStart if self.stage == DonDevice => {
                Ok(self.enter(SeatedRest(1), 0))
            }
            StageEvent::OperatorPause if self.stage != Idle && !self.paused => {
                self.paused = true;
                Ok(self.stage)
            }
            StageEvent::OperatorResume if self.paused => {
                self.paused = false;
                Ok(self.stage)
            }
            StageEvent::StageTimerElapsed if self.timer_due() => {
                let d = self.duration_us().unwrap();
                let carry = self.elapsed_us - d;
                Ok(self.enter(self.stage.next().unwrap(), carry))
            }
            StageEvent::OperatorAdvance
                if (self.stage.is_rest() || self.stage == DonDevice) && !self.paused =>
            {
                Ok(self.enter(self.stage.next().unwrap(), 0))
            }
            _ => Err(invalid(self)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ProtocolStage::*;

    fn run_timer(m: &mut StageMachine) -> ProtocolStage {
        let d = m.remaining_us().unwrap();
        m.tick(d);
        m.advance(StageEvent::StageTimerElapsed).unwrap()
    }

    #[test]
    fn protocol_order() {
        let seq = ProtocolStage::sequence();
        assert_eq!(seq.len(), 15);
        assert_eq!(seq[3], SeatedRest(1));
        assert_eq!(seq[10], FeedbackBout(4));
        assert_eq!(seq[11], PostControl);
        for s in &seq {
            assert_eq!(s.to_string().parse::<ProtocolStage>().unwrap(), *s);
        }
    }

    #[test]
    fn timed_transitions() {
        let mut m = StageMachine::new(StageDurations::default());
        m.advance(StageEvent::OperatorStart).unwrap();
        assert_eq!(m.duration_us(), Some(120 * S));
        assert_eq!(run_timer(&mut m), DonDevice);
        assert!(m.advance(StageEvent::StageTimerElapsed).is_err());
        assert_eq!(
            m.advance(StageEvent::OperatorAdvance).unwrap(),
            SeatedRest(1)
        );
        for n in 1..=4 {
            assert_eq!(run_timer(&mut m), FeedbackBout(n));
            assert_eq!(m.duration_us(), Some(180 * S));
            let next = run_timer(&mut m);
            assert_eq!(
                next,
                if n < 4 {
                    SeatedRest(n + 1)
                } else {
                    PostControl
                }
            );
        }
        assert_eq!(run_timer(&mut m), LongRest);
        assert_eq!(m.duration_us(), Some(600 * S));
        assert_eq!(run_timer(&mut m), RetentionControl);
        assert_eq!(run_timer(&mut m), Complete);
        assert!(!m.aborted());
    }

    #[test]
    fn timer_not_due_early() {
        let mut m = StageMachine::new(StageDurations::default());
        m.advance(StageEvent::OperatorStart).unwrap();
        m.tick(119 * S);
        assert!(matches!(
            m.advance(StageEvent::StageTimerElapsed),
            Err(SessionError::InvalidTransition { .. })
        ));
    }

    #[test]
    fn pause_freezes_timer() {
        let mut m = StageMachine::new(StageDurations::default());
        m.advance(StageEvent::OperatorStart).unwrap();
        m.tick(10 * S);
        m.advance(StageEvent::OperatorPause).unwrap();
        m.tick(500 * S);
        assert_eq!(m.elapsed_us(), 10 * S);
        assert!(m.advance(StageEvent::OperatorPause).is_err());
        m.advance(StageEvent::OperatorResume).unwrap();
        m.tick(S);
        assert_eq!(m.elapsed_us(), 11 * S);
    }

    #[test]
    fn abort_from_anywhere() {
        for target in 1..14 {
            let mut m = StageMachine::new(StageDurations {
                don_device_s: Some(60),
                ..StageDurations::default()
            });
            m.advance(StageEvent::OperatorStart).unwrap();
            for _ in 1..target {
                run_timer(&mut m);
            }
            assert_eq!(m.advance(StageEvent::OperatorAbort).unwrap(), Complete);
            assert!(m.aborted());
            assert!(m.advance(StageEvent::OperatorAbort).is_err());
        }
    }

    #[test]
    fn walking_trials_cannot_be_skipped() {
        let mut m = StageMachine::new(StageDurations::default());
        m.advance(StageEvent::OperatorStart).unwrap();
        assert!(m.advance(StageEvent::OperatorAdvance).is_err());
    }
}
