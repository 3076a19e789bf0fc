use gaitfb::metrics::{report, trial_aggregate, Metric, MetricsError, Report};
use gaitfb::session::{
    Condition, DistanceRecord, DistanceSource, Pose, ProtocolStage, RecordBody, SessionLog,
    StanceRecord,
};

const POSE: Pose = Pose {
    pelvis: [0.25, 0.0, 0.9],
    foot_paretic: [0.0, 0.1, 0.0],
    foot_nonparetic: [0.3, -0.1, 0.0],
};

/// A log with ten stances in every walking stage. Peaks follow a fixed
/// dyadic pattern scaled by `level` and by `gain(condition)`, so pooled
/// means are exact.
fn synthetic_log(level: f64, gain: impl Fn(Condition) -> f64) -> SessionLog {
    let mut log = SessionLog::default();
    let mut t = 0;
    let mut index = 0;
    for stage in ProtocolStage::sequence() {
        log.push(
            t,
            RecordBody::Stage {
                stage,
                previous: ProtocolStage::Idle,
                aborted: false,
            },
        );
        let Some(c) = stage.condition() else { continue };
        for k in 0..10 {
            t += 1_000_000;
            let peak = level * gain(c) * (0.0625 + k as f64 / 256.0);
            log.push(
                t,
                RecordBody::Stance(StanceRecord {
                    stage,
                    index,
                    contact_us: t - 600_000,
                    swing_us: t,
                    duration_ms: 600.0,
                    flagged: false,
                    peak_agrf_bw: Some(peak),
                    peak_time_us: Some(t - 200_000),
                    peak_pose: Some(POSE),
                    contact_pose: Some(POSE),
                }),
            );
            index += 1;
        }
        for (minute, meters) in [(1, 40.0), (2, 80.0 * gain(c))] {
            log.push(
                t,
                RecordBody::Distance(DistanceRecord {
                    stage,
                    minute,
                    meters,
                    source: DistanceSource::Auto,
                }),
            );
        }
    }
    log
}

fn with_header(log: SessionLog, id: &str) -> SessionLog {
    // Trial analysis only needs the participant id from the header; build
    // one through a real session config.
    let cfg = gaitfb::session::SessionConfig::new(
        id,
        gaitfb::frame::BodyParams {
            mass_kg: 70.0,
            paretic_side: gaitfb::frame::BodySide::Left,
        },
    );
    let engine = gaitfb::session::Engine::new(
        cfg,
        gaitfb::estimator::reference_weights(),
        gaitfb::haptics::NullSink,
    )
    .unwrap();
    let mut out = engine.into_log();
    let header_t = out.last_t_us();
    for r in log.records() {
        out.push(r.t_us.max(header_t), r.body.clone());
    }
    out
}

fn participants(gain: impl Fn(Condition) -> f64 + Copy) -> Vec<SessionLog> {
    [("p01", 1.0), ("p02", 0.75), ("p03", 1.25)]
        .iter()
        .map(|(id, level)| with_header(synthetic_log(*level, gain), id))
        .collect()
}

#[test]
fn identical_conditions_give_a_null_report() {
    let r = report(&participants(|_| 1.0)).unwrap();
    assert_eq!(r.participants.len(), 3);
    for p in &r.participants {
        for m in Metric::ALL {
            for c in &Condition::ALL[1..] {
                // Means of repeated non-dyadic values carry rounding error.
                let v = p.change(m, *c).unwrap();
                assert!(v.abs() < 1e-9, "{} {m:?} {c:?} {v}", p.participant_id);
            }
        }
    }
    let peak = r
        .metrics
        .iter()
        .find(|m| m.metric == Metric::PeakAgrf)
        .unwrap();
    for c in &Condition::ALL[1..] {
        let cmp = peak.comparison(*c).unwrap();
        assert_eq!(cmp.percent_change, Some(0.0));
        assert_eq!(cmp.d_pooled, Some(0.0));
        // Zero paired differences have no spread.
        assert_eq!(cmp.d_paired, None);
        assert_eq!(cmp.ci, None);
    }
    assert!(peak.anova.is_none());
}

#[test]
fn uniform_gain_is_recovered() {
    let r = report(&participants(|c| {
        if c == Condition::Retention {
            1.1
        } else {
            1.0
        }
    }))
    .unwrap();
    let peak = r
        .metrics
        .iter()
        .find(|m| m.metric == Metric::PeakAgrf)
        .unwrap();
    let ret = peak.comparison(Condition::Retention).unwrap();
    assert!((ret.percent_change.unwrap() - 10.0).abs() < 1e-9);
    assert!((ret.percent_change_of_means.unwrap() - 10.0).abs() < 1e-9);
    assert!(ret.d_pooled.unwrap() > 0.0);
    let ci = ret.ci.unwrap();
    assert!(ci.lo > 0.0 && ci.hi > ci.lo);
    let speed = r
        .metrics
        .iter()
        .find(|m| m.metric == Metric::SpeedMps)
        .unwrap();
    let s = speed.comparison(Condition::Retention).unwrap();
    assert!((s.percent_change.unwrap() - 10.0).abs() < 1e-9);
    assert_eq!(
        speed
            .comparison(Condition::PostFeedback)
            .unwrap()
            .percent_change,
        Some(0.0)
    );
    let tla = r
        .metrics
        .iter()
        .find(|m| m.metric == Metric::TlaDeg)
        .unwrap();
    assert_eq!(
        tla.comparison(Condition::Retention).unwrap().percent_change,
        Some(0.0)
    );
}

#[test]
fn aggregates_pool_bouts_and_use_minute_two() {
    let log = synthetic_log(1.0, |_| 1.0);
    let during = trial_aggregate(&log, Condition::DuringFeedback).unwrap();
    assert_eq!(during.stances, 40);
    assert!((during.speed_mps.unwrap() - 80.0 / 120.0).abs() < 1e-12);
    let base = trial_aggregate(&log, Condition::Baseline).unwrap();
    assert_eq!(base.stances, 10);
    assert!(!base.low_confidence);
    assert!((base.peak_agrf.mean - 0.080_078_125).abs() < 1e-15);
}

#[test]
fn missing_condition_is_an_error() {
    let mut log = SessionLog::default();
    for r in synthetic_log(1.0, |_| 1.0).records() {
        let retention =
            matches!(&r.body, RecordBody::Stance(s) if s.stage == ProtocolStage::RetentionControl);
        if !retention {
            log.push(r.t_us, r.body.clone());
        }
    }
    let log = with_header(log, "p09");
    match report(&[log]) {
        Err(MetricsError::MissingCondition {
            participant,
            condition,
        }) => {
            assert_eq!(participant, "p09");
            assert_eq!(condition, "retention");
        }
        other => panic!("{other:?}"),
    }
    assert!(matches!(report(&[]), Err(MetricsError::NoSessions)));
}

#[test]
fn single_participant_uses_stance_samples() {
    let logs = participants(|c| {
        if c == Condition::PostFeedback {
            1.05
        } else {
            1.0
        }
    });
    let r = report(&logs[..1]).unwrap();
    let peak = r
        .metrics
        .iter()
        .find(|m| m.metric == Metric::PeakAgrf)
        .unwrap();
    let post = peak.comparison(Condition::PostFeedback).unwrap();
    assert!(post.d_pooled.unwrap() > 0.0);
    assert_eq!((post.d_paired, post.ci), (None, None));
    assert!(peak.anova.is_none());
}

#[test]
fn report_file_round_trips() {
    let r = report(&participants(|c| match c {
        Condition::Baseline => 1.0,
        Condition::DuringFeedback => 1.03,
        Condition::PostFeedback => 1.07,
        Condition::Retention => 1.02,
    }))
    .unwrap();
    let text = r.to_jsonl();
    assert_eq!(text.lines().count(), 1 + 3 + Metric::ALL.len());
    assert!(text.lines().next().unwrap().contains(r#""kind":"header""#));
    let back = Report::read_jsonl(text.as_bytes()).unwrap();
    assert_eq!(back, r);

    let twice = format!("{}{}", text, text.lines().next().unwrap());
    assert!(Report::read_jsonl(twice.as_bytes())
        .unwrap_err()
        .contains("second header"));
    let wrong = text.replacen(r#""version":1"#, r#""version":7"#, 1);
    assert!(Report::read_jsonl(wrong.as_bytes()).is_err());

    let table = r.to_string();
    for m in Metric::ALL {
        assert!(table.contains(m.label()), "{table}");
    }
}
