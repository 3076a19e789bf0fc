use gaitfb::estimator::reference_weights;
use gaitfb::frame::{BodyParams, BodySide, KinematicFrame, FRAME_INTERVAL_US};
use gaitfb::haptics::{EmulatorSink, NullSink};
use gaitfb::session::{
    run_session, Engine, ProtocolStage, RecordBody, SessionConfig, SessionError, SessionLog,
    VecSource,
};
use gaitfb::synthgait::{generate, GaitProfile};
use serde_json::Value;

fn config(id: &str) -> SessionConfig {
    SessionConfig::new(
        id,
        BodyParams {
            mass_kg: 70.0,
            paretic_side: BodySide::Left,
        },
    )
}

fn walk(seconds: f64) -> Vec<KinematicFrame> {
    generate(
        &GaitProfile {
            seed: 4,
            ..GaitProfile::default()
        },
        seconds,
    )
    .unwrap()
    .frames
}

fn reply(engine: &mut Engine<NullSink>, msg: &str) -> Value {
    serde_json::from_str(&engine.handle_control(msg)).unwrap()
}

#[test]
fn exhausted_source_ends_with_ingest_lost() {
    let err = run_session(
        config("p01"),
        reference_weights(),
        &mut VecSource::new(walk(30.0)),
        NullSink,
    )
    .unwrap_err();
    assert!(
        matches!(err.error, SessionError::IngestLost { .. }),
        "{:?}",
        err.error
    );
    let log = &err.log;
    assert!(log.header().is_some());
    assert!(log.stances().count() > 10);
    assert!(log
        .records()
        .iter()
        .any(|r| matches!(&r.body, RecordBody::Error { code, .. } if code == "ingest_lost")));
    assert!(log.threshold().is_none());
}

#[test]
fn stream_gap_ends_the_session() {
    let mut frames = walk(20.0);
    for f in &mut frames[500..] {
        f.timestamp_us += 1_000_000 + FRAME_INTERVAL_US;
    }
    let mut engine = Engine::new(config("p01"), reference_weights(), NullSink).unwrap();
    let mut result = Ok(());
    for f in &frames {
        if let Err(e) = engine.step(f) {
            result = Err(e);
            break;
        }
    }
    match result {
        Err(SessionError::IngestLost { last_t_us, gap_us }) => {
            assert_eq!(last_t_us, frames[499].timestamp_us);
            assert_eq!(gap_us, 1_000_000 + 2 * FRAME_INTERVAL_US);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn non_monotonic_timestamps_are_rejected() {
    let mut frames = walk(5.0);
    frames[40].timestamp_us = frames[39].timestamp_us;
    let err = run_session(
        config("p01"),
        reference_weights(),
        &mut VecSource::new(frames),
        NullSink,
    )
    .unwrap_err();
    assert_eq!(err.error.code(), "frame");
}

#[test]
fn operator_controls() {
    let mut cfg = config("p02");
    cfg.auto_start = false;
    let mut engine = Engine::new(cfg, reference_weights(), NullSink).unwrap();
    let frames = walk(10.0);
    for f in &frames[..50] {
        engine.step(f).unwrap();
    }
    let r = reply(&mut engine, r#"{"cmd":"status"}"#);
    assert_eq!(r["ok"], true);
    assert_eq!(r["status"]["stage"], "idle");

    assert_eq!(
        reply(&mut engine, r#"{"cmd":"start"}"#)["status"]["stage"],
        "baseline_control"
    );
    // Walking trials run on their timers.
    let r = reply(&mut engine, r#"{"cmd":"advance"}"#);
    assert_eq!(r["ok"], false);
    assert_eq!(r["error"]["code"], "invalid_transition");

    let r = reply(&mut engine, r#"{"cmd":"set_multiplier","value":-1}"#);
    assert_eq!(r["ok"], false);
    assert_eq!(
        reply(&mut engine, r#"{"cmd":"set_multiplier","value":1.1}"#)["status"]["multiplier"],
        1.1
    );
    assert_eq!(
        reply(&mut engine, r#"{"cmd":"set_threshold","value":0.09}"#)["status"]["threshold"],
        0.09
    );

    let r = reply(&mut engine, r#"{"cmd":"distance","minute":1,"value":30}"#);
    assert_eq!(r["ok"], true, "{r}");
    let r = reply(&mut engine, r#"{"cmd":"distance","minute":2,"value":20}"#);
    assert_eq!(r["error"]["code"], "non_monotone_distance");
    let r = reply(&mut engine, r#"{"cmd":"distance","minute":3,"value":90}"#);
    assert_eq!(r["error"]["code"], "invalid_minute");

    assert_eq!(
        reply(&mut engine, r#"{"cmd":"pause"}"#)["status"]["paused"],
        true
    );
    for f in &frames[50..100] {
        engine.step(f).unwrap();
    }
    let r = reply(&mut engine, r#"{"cmd":"resume"}"#);
    assert_eq!(r["status"]["paused"], false);
    assert_eq!(
        reply(&mut engine, "garbage")["error"]["code"],
        "schema_violation"
    );

    let r = reply(&mut engine, r#"{"cmd":"abort"}"#);
    assert_eq!(r["status"]["aborted"], true);
    assert!(engine.is_complete());
    let log = engine.into_log();
    assert!(log.aborted());
    let controls = log
        .records()
        .iter()
        .filter(|r| matches!(r.body, RecordBody::Control { .. }))
        .count();
    assert_eq!(controls, 13);
}

#[test]
fn telemetry_is_decimated_json() {
    let mut cfg = config("p03");
    cfg.telemetry = true;
    let mut engine = Engine::new(cfg, reference_weights(), EmulatorSink::default()).unwrap();
    let mut messages = Vec::new();
    for f in walk(10.0) {
        engine.step(&f).unwrap();
        messages.extend(engine.drain_telemetry());
    }
    assert!(!messages.is_empty());
    let parsed: Vec<Value> = messages
        .iter()
        .map(|m| serde_json::from_str(m).unwrap())
        .collect();
    assert!(parsed.iter().all(|v| v["type"].is_string()));
    let ticks = parsed.iter().filter(|v| v["type"] == "telemetry").count();
    assert!((90..=110).contains(&ticks), "{ticks}");
}

#[test]
fn logs_persist_and_reload() {
    let err = run_session(
        config("p04"),
        reference_weights(),
        &mut VecSource::new(walk(15.0)),
        NullSink,
    )
    .unwrap_err();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p04.sessionl");
    err.log.persist(&path).unwrap();
    let back = SessionLog::load(&path).unwrap();
    assert_eq!(back, err.log);
    assert_eq!(back.to_bytes(), err.log.to_bytes());

    let mut text = String::from_utf8(err.log.to_bytes()).unwrap();
    text.push_str("{\"seq\":1,\"t_us\":0,\"kind\":\"error\",\"code\":\"x\",\"message\":\"y\"}\n");
    assert!(matches!(
        SessionLog::read_from(text.as_bytes()),
        Err(SessionError::CorruptLog { .. })
    ));
}

#[test]
fn full_protocol_runs_to_completion() {
    let mut cfg = config("p05");
    cfg.durations.don_device_s = Some(60);
    let frames = walk(2240.0);
    let log = run_session(
        cfg,
        reference_weights(),
        &mut VecSource::new(frames),
        EmulatorSink::default(),
    )
    .unwrap();
    let spans = log.stage_spans();
    assert_eq!(spans.last().unwrap().0, ProtocolStage::Complete);
    let walking: u64 = spans
        .iter()
        .filter(|(s, _, _)| s.is_walking())
        .map(|(_, a, b)| b - a)
        .sum();
    assert_eq!(walking, (3 * 120 + 4 * 180) * 1_000_000);
    assert!(log.threshold().is_some());
    assert!(log.triggers().count() > 0);
    let summaries = log
        .records()
        .iter()
        .filter(|r| matches!(r.body, RecordBody::BoutSummary { .. }))
        .count();
    assert_eq!(summaries, 4);
}
