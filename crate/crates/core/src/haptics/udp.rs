use std::collections::BTreeSet;
use std::io::ErrorKind;
use std::net::{SocketAddr, UdpSocket};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use super::{
    decode_ack, encode_command, Delivery, EmulatedDevice, HapticCommand, HapticError, HapticSink,
};

/// Fire-and-forget datagram client. Acks are collected opportunistically on
/// later sends; the caller never waits for one.
pub struct UdpHapticClient {
    socket: UdpSocket,
    acked: BTreeSet<u16>,
}

impl UdpHapticClient {
    pub fn connect(device: SocketAddr) -> Result<Self, HapticError> {
        let unreachable = |e: std::io::Error| HapticError::DeviceUnreachable(e.to_string());
        let bind: SocketAddr = if device.is_ipv4() {
            "0.0.0.0:0".parse().unwrap()
        } else {
            "[::]:0".parse().unwrap()
        };
        let socket = UdpSocket::bind(bind).map_err(unreachable)?;
        socket.connect(device).map_err(unreachable)?;
        socket.set_nonblocking(true).map_err(unreachable)?;
        Ok(UdpHapticClient {
            socket,
            acked: BTreeSet::new(),
        })
    }

    fn drain_acks(&mut self) {
        let mut buf = [0u8; 16];
        loop {
            match self.socket.recv(&mut buf) {
                Ok(n) => {
                    if let Ok(seq) = decode_ack(&buf[..n]) {
                        self.acked.insert(seq);
                    }
                }
                Err(_) => break,
            }
        }
    }

    /// Sequence numbers acknowledged so far.
    pub fn acked(&mut self) -> &BTreeSet<u16> {
        self.drain_acks();
        &self.acked
    }
}

impl HapticSink for UdpHapticClient {
    fn send(&mut self, cmd: HapticCommand, _now_us: u64) -> Delivery {
        self.drain_acks();
        match self.socket.send(&encode_command(cmd)) {
            Ok(_) => Delivery::Unknown,
            Err(e) if e.kind() == ErrorKind::WouldBlock => Delivery::Unknown,
            Err(_) => Delivery::Unreachable,
        }
    }
}

/// [`EmulatedDevice`] served over loopback UDP on its own thread, timed by
/// the wall clock from construction.
pub struct LoopbackEmulator {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    device: Arc<Mutex<EmulatedDevice>>,
    worker: Option<JoinHandle<()>>,
}

impl LoopbackEmulator {
    pub fn start(port: u16) -> std::io::Result<Self> {
        let socket = UdpSocket::bind(("127.0.0.1", port))?;
        socket.set_read_timeout(Some(Duration::from_millis(20)))?;
        let addr = socket.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let device = Arc::new(Mutex::new(EmulatedDevice::new()));
        let (stop2, device2) = (stop.clone(), device.clone());
        let t0 = Instant::now();
        let worker = std::thread::spawn(move || {
            let mut buf = [0u8; 64];
            while !stop2.load(Ordering::Relaxed) {
                let now = t0.elapsed().as_micros() as u64;
                match socket.recv_from(&mut buf) {
                    Ok((n, from)) => {
                        let ack = device2.lock().unwrap().emulate(&buf[..n], now);
                        if let Ok(ack) = ack {
                            let _ = socket.send_to(&ack, from);
                        }
                    }
                    Err(_) => device2.lock().unwrap().advance_to(now),
                }
            }
        });
        Ok(LoopbackEmulator {
            addr,
            stop,
            device,
            worker: Some(worker),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn snapshot(&self) -> EmulatedDevice {
        self.device.lock().unwrap().clone()
    }

    pub fn shutdown(mut self) -> EmulatedDevice {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
        self.snapshot()
    }
}

impl Drop for LoopbackEmulator {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::haptics::CommandKind;

    #[test]
    fn loopback_acks_and_pulses() {
        let emu = LoopbackEmulator::start(0).unwrap();
        let mut client = UdpHapticClient::connect(emu.addr()).unwrap();
        let d = client.send(
            HapticCommand {
                kind: CommandKind::DoublePulse,
                seq: 42,
            },
            0,
        );
        assert_eq!(d, Delivery::Unknown);
        let deadline = Instant::now() + Duration::from_secs(3);
        while !client.acked().contains(&42) && Instant::now() < deadline {
            std::thread::sleep(Duration::from_millis(5));
        }
        assert!(client.acked().contains(&42));
        std::thread::sleep(Duration::from_millis(500));
        let dev = emu.shutdown();
        assert_eq!(dev.log().len(), 8);
    }
}
