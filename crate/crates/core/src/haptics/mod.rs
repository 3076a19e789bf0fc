//! Armband wire protocol and a deterministic software device.
//!
//! Commands are 4 bytes `[0xA5, kind, seq_lo, seq_hi]`; acks are 3 bytes
//! `[0x5A, seq_lo, seq_hi]`.

mod udp;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use udp::{LoopbackEmulator, UdpHapticClient};

pub const COMMAND_MAGIC: u8 = 0xA5;
pub const ACK_MAGIC: u8 = 0x5A;
pub const MOTOR_COUNT: u8 = 2;
/// (on, off) durations of each half of a double pulse.
pub const PULSE_ON_US: u64 = 150_000;
pub const PULSE_OFF_US: u64 = 100_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HapticError {
    #[error("bad ack")]
    BadAck,
    #[error("bad command magic {0:#04x}")]
    BadMagic(u8),
    #[error("unknown command kind {0:#04x}")]
    UnknownKind(u8),
    #[error("command must be 4 bytes, got {0}")]
    BadLength(usize),
    #[error("device unreachable: {0}")]
    DeviceUnreachable(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum CommandKind {
    DoublePulse = 0x01,
    Stop = 0x02,
    Ping = 0x03,
}

impl CommandKind {
    pub const ALL: [CommandKind; 3] = [
        CommandKind::DoublePulse,
        CommandKind::Stop,
        CommandKind::Ping,
    ];

    pub fn from_u8(b: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|k| *k as u8 == b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HapticCommand {
    pub kind: CommandKind,
    pub seq: u16,
}

pub fn encode_command(cmd: HapticCommand) -> [u8; 4] {
    let [lo, hi] = cmd.seq.to_le_bytes();
    [COMMAND_MAGIC, cmd.kind as u8, lo, hi]
}

pub fn decode_command(bytes: &[u8]) -> Result<HapticCommand, HapticError> {
    if bytes.first().is_some_and(|b| *b != COMMAND_MAGIC) {
        return Err(HapticError::BadMagic(bytes[0]));
    }
    if bytes.len() != 4 {
        return Err(HapticError::BadLength(bytes.len()));
    }
    let kind = CommandKind::from_u8(bytes[1]).ok_or(HapticError::UnknownKind(bytes[1]))?;
    Ok(HapticCommand {
        kind,
        seq: u16::from_le_bytes([bytes[2], bytes[3]]),
    })
}

pub fn encode_ack(seq: u16) -> [u8; 3] {
    let [lo, hi] = seq.to_le_bytes();
    [ACK_MAGIC, lo, hi]
}

pub fn decode_ack(bytes: &[u8]) -> Result<u16, HapticError> {
    match bytes {
        [ACK_MAGIC, lo, hi] => Ok(u16::from_le_bytes([*lo, *hi])),
        _ => Err(HapticError::BadAck),
    }
}

/// Wrapping per-session sequence counter.
#[derive(Debug, Clone, Default)]
pub struct SeqCounter {
    next: u16,
}

impl SeqCounter {
    pub fn starting_at(next: u16) -> Self {
        SeqCounter { next }
    }

    pub fn next(&mut self) -> u16 {
        let s = self.next;
        self.next = self.next.wrapping_add(1);
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MotorTransition {
    pub timestamp_us: u64,
    pub motor: u8,
    pub on: bool,
}

/// Software armband keyed by injected time.
#[derive(Debug, Clone, Default)]
pub struct EmulatedDevice {
    log: Vec<MotorTransition>,
    pending: Vec<MotorTransition>,
    motor_on: [bool; MOTOR_COUNT as usize],
    now_us: u64,
}

/// Transition offsets of one double pulse, relative to its start.
pub fn pulse_profile() -> [(u64, bool); 4] {
    let a = PULSE_ON_US;
    let b = a + PULSE_OFF_US;
    [(0, true), (a, false), (b, true), (b + a, false)]
}

impl EmulatedDevice {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn log(&self) -> &[MotorTransition] {
        &self.log
    }

    pub fn motor_on(&self, motor: u8) -> bool {
        self.motor_on[motor as usize]
    }

    /// Applies every scheduled transition due at or before `now_us`.
    pub fn advance_to(&mut self, now_us: u64) {
        let now_us = now_us.max(self.now_us);
        self.pending.sort_by_key(|t| (t.timestamp_us, t.motor));
        let due = self.pending.partition_point(|t| t.timestamp_us <= now_us);
        for t in self.pending.drain(..due) {
            self.motor_on[t.motor as usize] = t.on;
            self.log.push(t);
        }
        self.now_us = now_us;
    }

    fn cancel(&mut self, now_us: u64) {
        self.pending.clear();
        for m in 0..MOTOR_COUNT {
            if self.motor_on[m as usize] {
                self.motor_on[m as usize] = false;
                self.log.push(MotorTransition {
                    timestamp_us: now_us,
                    motor: m,
                    on: false,
                });
            }
        }
    }

    /// Handles one datagram and returns the ack to send back.
    pub fn emulate(&mut self, bytes: &[u8], now_us: u64) -> Result<[u8; 3], HapticError> {
        let cmd = decode_command(bytes)?;
        self.advance_to(now_us);
        let now_us = self.now_us;
        match cmd.kind {
            CommandKind::DoublePulse => {
                // Retrigger restarts the profile rather than interleaving.
                self.cancel(now_us);
                for m in 0..MOTOR_COUNT {
                    for (dt, on) in pulse_profile() {
                        self.pending.push(MotorTransition {
                            timestamp_us: now_us + dt,
                            motor: m,
                            on,
                        });
                    }
                }
                self.advance_to(now_us);
            }
            CommandKind::Stop => self.cancel(now_us),
            CommandKind::Ping => {}
        }
        Ok(encode_ack(cmd.seq))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Delivery {
    Acked,
    /// Datagram sent; no ack seen (the engine never waits for one).
    Unknown,
    /// The send itself failed.
    Unreachable,
}

/// Destination of haptic commands. Implementations must not block.
pub trait HapticSink {
    fn send(&mut self, cmd: HapticCommand, now_us: u64) -> Delivery;
    /// Lets time-driven sinks run scheduled work.
    fn tick(&mut self, _now_us: u64) {}
}

/// In-process emulator sink; acks synchronously.
#[derive(Debug, Clone, Default)]
pub struct EmulatorSink {
    pub device: EmulatedDevice,
    pub sent: Vec<(u64, HapticCommand)>,
}

impl HapticSink for EmulatorSink {
    fn send(&mut self, cmd: HapticCommand, now_us: u64) -> Delivery {
        self.sent.push((now_us, cmd));
        match self
            .device
            .emulate(&encode_command(cmd), now_us)
            .map(|a| decode_ack(&a))
        {
            Ok(Ok(seq)) if seq == cmd.seq => Delivery::Acked,
            _ => Delivery::Unknown,
        }
    }

    fn tick(&mut self, now_us: u64) {
        self.device.advance_to(now_us);
    }
}

/// Sink that drops everything, for analysis-only runs.
#[derive(Debug, Clone, Copy, Default)]
pub struct NullSink;

impl HapticSink for NullSink {
    fn send(&mut self, _cmd: HapticCommand, _now_us: u64) -> Delivery {
        Delivery::Unknown
    }
}
