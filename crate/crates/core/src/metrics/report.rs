//! Group report over one or more sessions: per-condition summaries, changes
//! from baseline, effect sizes, intervals, repeated-measures ANOVA and the
//! trigger metrics of each session.
//!
//! With two or more participants every statistic is computed over the
//! per-participant trial means. With a single participant the pooled effect
//! size falls back to stance-level samples and the paired statistics are
//! omitted.

use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::stats::{
    cohens_d, mean, paired_ci, percent_change, rm_anova, sample_sd, Anova, DVariant, Interval,
};
use super::triggers::{trigger_metrics, TriggerMetrics};
use super::{trial_aggregate, MetricsError, StanceMetrics, TrialAggregate};
use crate::session::{Condition, SessionLog};

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    PeakAgrf,
    TlaDeg,
    StepLengthM,
    SpeedMps,
}

impl Metric {
    pub const ALL: [Metric; 4] = [
        Metric::PeakAgrf,
        Metric::TlaDeg,
        Metric::StepLengthM,
        Metric::SpeedMps,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Metric::PeakAgrf => "Peak AGRF (BW)",
            Metric::TlaDeg => "TLA (deg)",
            Metric::StepLengthM => "Step length (m)",
            Metric::SpeedMps => "Gait speed (m/s)",
        }
    }

    fn trial_value(self, a: &TrialAggregate) -> Option<f64> {
        match self {
            Metric::PeakAgrf => Some(a.peak_agrf.mean),
            Metric::TlaDeg => Some(a.tla_deg.mean),
            Metric::StepLengthM => Some(a.step_length_m.mean),
            Metric::SpeedMps => a.speed_mps,
        }
    }

    fn stance_value(self, m: &StanceMetrics) -> Option<f64> {
        match self {
            Metric::PeakAgrf => Some(m.peak_agrf),
            Metric::TlaDeg => Some(m.tla_deg),
            Metric::StepLengthM => Some(m.step_length_m),
            Metric::SpeedMps => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantChange {
    pub metric: Metric,
    pub condition: Condition,
    pub percent: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantReport {
    pub participant_id: String,
    pub aggregates: Vec<TrialAggregate>,
    pub changes: Vec<ParticipantChange>,
    pub triggers: TriggerMetrics,
}

impl ParticipantReport {
    pub fn aggregate(&self, c: Condition) -> Option<&TrialAggregate> {
        self.aggregates.iter().find(|a| a.condition == c)
    }

    pub fn change(&self, metric: Metric, c: Condition) -> Option<f64> {
        self.changes
            .iter()
            .find(|x| x.metric == metric && x.condition == c)
            .and_then(|x| x.percent)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub condition: Condition,
    pub n: usize,
    pub mean: f64,
    pub sd: Option<f64>,
}

/// A non-baseline condition against baseline. Differences are condition
/// minus baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub condition: Condition,
    /// Mean of the per-participant percent changes.
    pub percent_change: Option<f64>,
    /// Percent change of the group means.
    pub percent_change_of_means: Option<f64>,
    pub d_pooled: Option<f64>,
    pub d_paired: Option<f64>,
    pub ci: Option<Interval>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub metric: Metric,
    pub conditions: Vec<ConditionSummary>,
    pub comparisons: Vec<Comparison>,
    pub anova: Option<Anova>,
}

impl MetricSummary {
    pub fn comparison(&self, c: Condition) -> Option<&Comparison> {
        self.comparisons.iter().find(|x| x.condition == c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub version: u32,
    pub participants: Vec<ParticipantReport>,
    pub metrics: Vec<MetricSummary>,
}

/// One line of a `.report` file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReportRecord {
    Header {
        version: u32,
        participants: Vec<String>,
    },
    Participant(ParticipantReport),
    Metric(MetricSummary),
}

fn participant(log: &SessionLog) -> Result<ParticipantReport, MetricsError> {
    let id = log
        .header()
        .map(|h| h.participant_id.clone())
        .unwrap_or_default();
    let aggregates = Condition::ALL
        .iter()
        .map(|&c| {
            trial_aggregate(log, c).ok_or_else(|| MetricsError::MissingCondition {
                participant: id.clone(),
                condition: c.label().to_string(),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut changes = Vec::new();
    for metric in Metric::ALL {
        let base = metric.trial_value(&aggregates[0]);
        for a in &aggregates[1..] {
            let percent = match (base, metric.trial_value(a)) {
                (Some(b), Some(v)) => percent_change(b, v).ok(),
                _ => None,
            };
            changes.push(ParticipantChange {
                metric,
                condition: a.condition,
                percent,
            });
        }
    }
    Ok(ParticipantReport {
        participant_id: id,
        aggregates,
        changes,
        triggers: trigger_metrics(log),
    })
}

fn summarize(metric: Metric, parts: &[ParticipantReport]) -> MetricSummary {
    // Participants with a value in every condition.
    let rows: Vec<(&ParticipantReport, Vec<f64>)> = parts
        .iter()
        .filter_map(|p| {
            let row: Option<Vec<f64>> =
                p.aggregates.iter().map(|a| metric.trial_value(a)).collect();
            row.map(|r| (p, r))
        })
        .collect();
    let column = |j: usize| rows.iter().map(|(_, r)| r[j]).collect::<Vec<f64>>();
    let conditions = Condition::ALL
        .iter()
        .enumerate()
        .filter(|_| !rows.is_empty())
        .map(|(j, &condition)| {
            let col = column(j);
            ConditionSummary {
                condition,
                n: col.len(),
                mean: mean(&col),
                sd: (col.len() >= 2).then(|| sample_sd(&col)),
            }
        })
        .collect::<Vec<_>>();
    let mut comparisons = Vec::new();
    for (j, &condition) in Condition::ALL.iter().enumerate().skip(1) {
        if rows.is_empty() {
            break;
        }
        let base = column(0);
        let cond = column(j);
        let changes: Vec<f64> = rows
            .iter()
            .filter_map(|(p, _)| p.change(metric, condition))
            .collect();
        let (d_pooled, d_paired, ci) = if rows.len() >= 2 {
            let diffs: Vec<f64> = base.iter().zip(&cond).map(|(b, c)| c - b).collect();
            (
                cohens_d(&base, &cond, DVariant::Pooled).ok(),
                cohens_d(&base, &cond, DVariant::Paired).ok(),
                paired_ci(&diffs, 0.95).ok(),
            )
        } else {
            let p = rows[0].0;
            let samples = |c: Condition| -> Vec<f64> {
                p.aggregate(c)
                    .map(|a| {
                        a.samples
                            .iter()
                            .filter_map(|m| metric.stance_value(m))
                            .collect()
                    })
                    .unwrap_or_default()
            };
            (
                cohens_d(
                    &samples(Condition::Baseline),
                    &samples(condition),
                    DVariant::Pooled,
                )
                .ok(),
                None,
                None,
            )
        };
        comparisons.push(Comparison {
            condition,
            percent_change: (changes.len() == rows.len()).then(|| mean(&changes)),
            percent_change_of_means: percent_change(mean(&base), mean(&cond)).ok(),
            d_pooled,
            d_paired,
            ci,
        });
    }
    let matrix: Vec<Vec<f64>> = rows.iter().map(|(_, r)| r.clone()).collect();
    MetricSummary {
        metric,
        conditions,
        comparisons,
        anova: rm_anova(&matrix).ok(),
    }
}

/// Builds the report over sessions whose logs each cover all four
/// conditions.
pub fn report(sessions: &[SessionLog]) -> Result<Report, MetricsError> {
    if sessions.is_empty() {
        return Err(MetricsError::NoSessions);
    }
    let participants = sessions
        .iter()
        .map(participant)
        .collect::<Result<Vec<_>, _>>()?;
    let metrics = Metric::ALL
        .iter()
        .map(|&m| summarize(m, &participants))
        .collect();
    Ok(Report {
        version: REPORT_VERSION,
        participants,
        metrics,
    })
}

impl Report {
    pub fn records(&self) -> Vec<ReportRecord> {
        let mut out = vec![ReportRecord::Header {
            version: self.version,
            participants: self
                .participants
                .iter()
                .map(|p| p.participant_id.clone())
                .collect(),
        }];
        out.extend(
            self.participants
                .iter()
                .cloned()
                .map(ReportRecord::Participant),
        );
        out.extend(self.metrics.iter().cloned().map(ReportRecord::Metric));
        out
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for r in self.records() {
            serde_json::to_writer(&mut out, &r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Report, String> {
        let mut version = None;
        let mut participants = Vec::new();
        let mut metrics = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line.map_err(|e| e.to_string())?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: ReportRecord =
                serde_json::from_str(&line).map_err(|e| format!("line {}: {e}", i + 1))?;
            match rec {
                ReportRecord::Header { version: v, .. } if version.is_none() => version = Some(v),
                ReportRecord::Header { .. } => {
                    return Err(format!("line {}: second header", i + 1))
                }
                ReportRecord::Participant(p) => participants.push(p),
                ReportRecord::Metric(m) => metrics.push(m),
            }
        }
        let version = version.ok_or("missing header")?;
        if version != REPORT_VERSION {
            return Err(format!("unsupported report version {version}"));
        }
        Ok(Report {
            version,
            participants,
            metrics,
        })
    }
}

fn opt(v: Option<f64>, prec: usize) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.prec$}"))
}

fn digits(m: Metric) -> usize {
    match m {
        Metric::PeakAgrf => 3,
        Metric::TlaDeg => 2,
        Metric::StepLengthM | Metric::SpeedMps => 3,
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Participants: {}", self.participants.len())?;
        writeln!(f)?;
        write!(f, "{:<18}", "Metric")?;
        for c in Condition::ALL {
            write!(f, " {:>18}", c.label())?;
        }
        writeln!(f, " {:>8}", "p")?;
        for m in &self.metrics {
            let prec = digits(m.metric);
            write!(f, "{:<18}", m.metric.label())?;
            for c in Condition::ALL {
                let cell = m.conditions.iter().find(|s| s.condition == c).map_or_else(
                    || "-".to_string(),
                    |s| match s.sd {
                        Some(sd) => format!("{:.prec$} ± {:.prec$}", s.mean, sd),
                        None => format!("{:.prec$}", s.mean),
                    },
                );
                write!(f, " {cell:>18}")?;
            }
            writeln!(f, " {:>8}", opt(m.anova.map(|a| a.p), 4))?;
        }
        writeln!(f)?;
        writeln!(
            f,
            "{:<18} {:<16} {:>9} {:>9} {:>8} {:>8} {:>22}",
            "Metric", "vs baseline", "% change", "% of mean", "d pooled", "d paired", "95% CI"
        )?;
        for m in &self.metrics {
            let prec = digits(m.metric) + 1;
            for c in &m.comparisons {
                let ci = c.ci.map_or_else(
                    || "-".to_string(),
                    |i| format!("[{:.prec$}, {:.prec$}]", i.lo, i.hi),
                );
                writeln!(
                    f,
                    "{:<18} {:<16} {:>9} {:>9} {:>8} {:>8} {:>22}",
                    m.metric.label(),
                    c.condition.label(),
                    opt(c.percent_change, 2),
                    opt(c.percent_change_of_means, 2),
                    opt(c.d_pooled, 3),
                    opt(c.d_paired, 3),
                    ci
                )?;
            }
        }
        writeln!(f)?;
        writeln!(
            f,
            "{:<16} {:>10} {:>8} {:>16} {:>8} {:>6}",
            "Participant", "first (s)", "total", "per bout", "max run", "cv"
        )?;
        for p in &self.participants {
            let t = &p.triggers;
            let per_bout = t
                .triggers_per_bout
                .iter()
                .map(|n| n.to_string())
                .collect::<Vec<_>>()
                .join("/");
            writeln!(
                f,
                "{:<16} {:>10} {:>8} {:>16} {:>8} {:>6}{}",
                p.participant_id,
                opt(t.time_to_first_s, 1),
                t.total_triggers,
                per_bout,
                t.max_consecutive,
                opt(t.cv_consecutive, 3),
                if t.flagged { " *" } else { "" }
            )?;
        }
        Ok(())
    }
}
