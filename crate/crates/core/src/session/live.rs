//! Live serving: UDP frame ingest, the haptic armband over UDP, and the
//! operator control/telemetry channel over WebSocket.
//!
//! One pipeline thread owns the [`Engine`]. Control connections run on their
//! own threads and reach it through channels; their messages are applied
//! between frames and each receives exactly one reply.

use std::net::{SocketAddr, TcpListener, TcpStream, UdpSocket};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender, TryRecvError};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use tungstenite::{Message, WebSocket};

use super::{Engine, SessionConfig, SessionError, SessionFailure, SessionLog, INGEST_TIMEOUT_US};
use crate::estimator::ModelWeights;
use crate::frame::decode_frame;
use crate::haptics::{Delivery, HapticCommand, HapticSink, NullSink, UdpHapticClient};

const POLL: Duration = Duration::from_millis(5);
const MAX_DATAGRAM: usize = 2048;

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub session: SessionConfig,
    /// UDP address frames arrive on.
    pub ingest: SocketAddr,
    /// TCP address of the WebSocket control channel.
    pub control: SocketAddr,
    /// Armband address; `None` runs without haptics.
    pub device: Option<SocketAddr>,
    /// Where the log is written when the session ends.
    pub log_path: Option<PathBuf>,
}

/// Haptic output of a live session.
pub enum LiveSink {
    Udp(UdpHapticClient),
    Null(NullSink),
}

impl HapticSink for LiveSink {
    fn send(&mut self, cmd: HapticCommand, now_us: u64) -> Delivery {
        match self {
            LiveSink::Udp(c) => c.send(cmd, now_us),
            LiveSink::Null(n) => n.send(cmd, now_us),
        }
    }

    fn tick(&mut self, now_us: u64) {
        match self {
            LiveSink::Udp(c) => c.tick(now_us),
            LiveSink::Null(n) => n.tick(now_us),
        }
    }
}

enum ToPipeline {
    Control { text: String, reply: Sender<String> },
    Subscribe(Sender<String>),
}

pub struct ServeHandle {
    ingest_addr: SocketAddr,
    control_addr: SocketAddr,
    stop: Arc<AtomicBool>,
    pipeline: Option<JoinHandle<Result<SessionLog, SessionFailure>>>,
    acceptor: Option<JoinHandle<()>>,
}

impl ServeHandle {
    pub fn ingest_addr(&self) -> SocketAddr {
        self.ingest_addr
    }

    pub fn control_addr(&self) -> SocketAddr {
        self.control_addr
    }

    /// Asks the pipeline to end; the session is aborted if still running.
    pub fn stop(&self) {
        self.stop.store(true, Ordering::SeqCst);
    }

    /// Blocks until the session ends.
    pub fn wait(mut self) -> Result<SessionLog, SessionFailure> {
        let out = self
            .pipeline
            .take()
            .expect("pipeline joined once")
            .join()
            .unwrap_or_else(|_| panic!("pipeline thread panicked"));
        self.stop.store(true, Ordering::SeqCst);
        if let Some(a) = self.acceptor.take() {
            let _ = a.join();
        }
        out
    }
}

impl Drop for ServeHandle {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
    }
}

/// Binds the sockets and starts the session threads.
pub fn serve(cfg: ServeConfig, weights: ModelWeights) -> Result<ServeHandle, SessionError> {
    let io = |e: std::io::Error| SessionError::Io(e.to_string());
    let sink = match cfg.device {
        Some(addr) => LiveSink::Udp(
            UdpHapticClient::connect(addr)
                .map_err(|e| SessionError::DeviceUnreachable(e.to_string()))?,
        ),
        None => LiveSink::Null(NullSink),
    };
    let mut session = cfg.session.clone();
    session.telemetry = true;
    let engine = Engine::new(session, weights, sink)?;

    let ingest = UdpSocket::bind(cfg.ingest).map_err(io)?;
    ingest.set_read_timeout(Some(POLL)).map_err(io)?;
    let listener = TcpListener::bind(cfg.control).map_err(io)?;
    listener.set_nonblocking(true).map_err(io)?;
    let ingest_addr = ingest.local_addr().map_err(io)?;
    let control_addr = listener.local_addr().map_err(io)?;

    let stop = Arc::new(AtomicBool::new(false));
    let (tx, rx) = mpsc::channel();
    let acceptor = {
        let stop = stop.clone();
        thread::spawn(move || accept_loop(listener, tx, stop))
    };
    let pipeline = {
        let stop = stop.clone();
        let log_path = cfg.log_path.clone();
        thread::spawn(move || {
            let out = pipeline(engine, ingest, rx, &stop);
            if let Some(path) = log_path {
                let log = match &out {
                    Ok(log) => log,
                    Err(f) => &f.log,
                };
                if let Err(e) = log.persist(&path) {
                    return Err(SessionFailure {
                        error: e,
                        log: log.clone(),
                    });
                }
            }
            out
        })
    };
    Ok(ServeHandle {
        ingest_addr,
        control_addr,
        stop,
        pipeline: Some(pipeline),
        acceptor: Some(acceptor),
    })
}

fn pipeline(
    mut engine: Engine<LiveSink>,
    ingest: UdpSocket,
    rx: Receiver<ToPipeline>,
    stop: &AtomicBool,
) -> Result<SessionLog, SessionFailure> {
    let mut subscribers: Vec<Sender<String>> = Vec::new();
    let mut last_frame: Option<Instant> = None;
    let mut buf = [0u8; MAX_DATAGRAM];
    let timeout = Duration::from_micros(INGEST_TIMEOUT_US);
    while !engine.is_complete() {
        if stop.load(Ordering::SeqCst) {
            let _ = engine.handle_control(r#"{"cmd":"abort"}"#);
            break;
        }
        loop {
            match rx.try_recv() {
                Ok(ToPipeline::Control { text, reply }) => {
                    let _ = reply.send(engine.handle_control(&text));
                }
                Ok(ToPipeline::Subscribe(s)) => subscribers.push(s),
                Err(TryRecvError::Empty | TryRecvError::Disconnected) => break,
            }
        }
        match ingest.recv(&mut buf) {
            Ok(n) => match decode_frame(&buf[..n]) {
                Ok(frame) => {
                    last_frame = Some(Instant::now());
                    if let Err(error) = engine.step(&frame) {
                        broadcast(&mut subscribers, &engine.drain_telemetry());
                        return Err(SessionFailure {
                            error,
                            log: engine.into_log(),
                        });
                    }
                }
                Err(e) => {
                    engine.fail(e.into());
                }
            },
            Err(e)
                if matches!(
                    e.kind(),
                    std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut
                ) => {}
            Err(e) => {
                let error = engine.fail(SessionError::Io(e.to_string()));
                return Err(SessionFailure {
                    error,
                    log: engine.into_log(),
                });
            }
        }
        if let Some(t) = last_frame {
            if !engine.is_complete() && t.elapsed() > timeout {
                let error = engine.fail(SessionError::IngestLost {
                    last_t_us: engine.last_t_us(),
                    gap_us: t.elapsed().as_micros() as u64,
                });
                return Err(SessionFailure {
                    error,
                    log: engine.into_log(),
                });
            }
        }
        broadcast(&mut subscribers, &engine.drain_telemetry());
    }
    // Let pending control messages see the final state.
    while let Ok(msg) = rx.try_recv() {
        if let ToPipeline::Control { text, reply } = msg {
            let _ = reply.send(engine.handle_control(&text));
        }
    }
    broadcast(&mut subscribers, &engine.drain_telemetry());
    Ok(engine.into_log())
}

fn broadcast(subscribers: &mut Vec<Sender<String>>, messages: &[String]) {
    if messages.is_empty() {
        return;
    }
    subscribers.retain(|s| messages.iter().all(|m| s.send(m.clone()).is_ok()));
}

fn accept_loop(listener: TcpListener, tx: Sender<ToPipeline>, stop: Arc<AtomicBool>) {
    let mut conns = Vec::new();
    while !stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, _)) => {
                let tx = tx.clone();
                let stop = stop.clone();
                conns.push(thread::spawn(move || {
                    let _ = connection(stream, tx, &stop);
                }));
            }
            Err(_) => thread::sleep(POLL),
        }
    }
    for c in conns {
        let _ = c.join();
    }
}

fn connection(
    stream: TcpStream,
    tx: Sender<ToPipeline>,
    stop: &AtomicBool,
) -> Result<(), tungstenite::Error> {
    stream.set_nonblocking(false)?;
    let mut ws: WebSocket<TcpStream> = tungstenite::accept(stream).map_err(|e| match e {
        tungstenite::HandshakeError::Failure(e) => e,
        tungstenite::HandshakeError::Interrupted(_) => tungstenite::Error::ConnectionClosed,
    })?;
    ws.get_mut().set_read_timeout(Some(POLL))?;
    let (tel_tx, tel_rx) = mpsc::channel();
    if tx.send(ToPipeline::Subscribe(tel_tx)).is_err() {
        return Ok(());
    }
    let mut pipeline_open = true;
    loop {
        if stop.load(Ordering::SeqCst) {
            let _ = ws.close(None);
            let _ = ws.flush();
            return Ok(());
        }
        match ws.read() {
            Ok(Message::Text(text)) => {
                let reply = if pipeline_open {
                    request(&tx, text.to_string())
                } else {
                    None
                };
                let reply = reply.unwrap_or_else(|| {
                    pipeline_open = false;
                    closed_reply()
                });
                ws.send(Message::text(reply))?;
            }
            Ok(Message::Close(_)) => return Ok(()),
            Ok(_) => {}
            Err(tungstenite::Error::Io(e))
                if matches!(
                    e.kind(),
                    std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut
                ) => {}
            Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => {
                return Ok(())
            }
            Err(e) => return Err(e),
        }
        loop {
            match tel_rx.try_recv() {
                Ok(m) => ws.send(Message::text(m))?,
                Err(TryRecvError::Empty) => break,
                Err(TryRecvError::Disconnected) => {
                    pipeline_open = false;
                    break;
                }
            }
        }
    }
}

fn request(tx: &Sender<ToPipeline>, text: String) -> Option<String> {
    let (reply_tx, reply_rx) = mpsc::channel();
    tx.send(ToPipeline::Control {
        text,
        reply: reply_tx,
    })
    .ok()?;
    loop {
        match reply_rx.recv_timeout(Duration::from_secs(1)) {
            Ok(r) => return Some(r),
            Err(RecvTimeoutError::Timeout) => continue,
            Err(RecvTimeoutError::Disconnected) => return None,
        }
    }
}

fn closed_reply() -> String {
    serde_json::json!({
        "type": "ack",
        "ok": false,
        "error": { "code": "session_closed", "message": "session has ended" },
    })
    .to_string()
}
