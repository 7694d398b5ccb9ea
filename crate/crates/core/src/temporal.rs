//! Heel-strike / lift events and the temporal gait parameters derived from them.

use std::cmp::Ordering;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formats::{self, FormatError, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Foot {
    Left,
    Right,
}

impl Foot {
    pub fn opposite(self) -> Self {
        match self {
            Foot::Left => Foot::Right,
            Foot::Right => Foot::Left,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Foot::Left => "left",
            Foot::Right => "right",
        }
    }
}

impl fmt::Display for Foot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Foot {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "left" | "L" => Ok(Foot::Left),
            "right" | "R" => Ok(Foot::Right),
            other => Err(format!("unknown foot `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    HeelStrike,
    Lift,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::HeelStrike => "heel_strike",
            EventKind::Lift => "lift",
        }
    }
}

impl FromStr for EventKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "heel_strike" => Ok(EventKind::HeelStrike),
            "lift" => Ok(EventKind::Lift),
            other => Err(format!("unknown event kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FootfallEvent {
    pub foot: Foot,
    pub kind: EventKind,
    pub t: f64,
}

impl FootfallEvent {
    pub fn heel_strike(foot: Foot, t: f64) -> Self {
        Self {
            foot,
            kind: EventKind::HeelStrike,
            t,
        }
    }

    pub fn lift(foot: Foot, t: f64) -> Self {
        Self {
            foot,
            kind: EventKind::Lift,
            t,
        }
    }
}

/// Canonical event order: time, then foot (left first), then kind.
pub fn event_order(a: &FootfallEvent, b: &FootfallEvent) -> Ordering {
    a.t.total_cmp(&b.t)
        .then(a.foot.cmp(&b.foot))
        .then(a.kind.cmp(&b.kind))
}

pub fn sort_events(events: &mut [FootfallEvent]) {
    events.sort_by(event_order);
}

/// Polled contact state of one heel sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct FsrTrace {
    pub foot: Foot,
    pub samples: Vec<(f64, bool)>,
}

impl FsrTrace {
    pub fn new(foot: Foot, samples: Vec<(f64, bool)>) -> Result<Self, TemporalError> {
        for (i, w) in samples.windows(2).enumerate() {
            if !(w[1].0 > w[0].0) {
                return Err(TemporalError::Malformed {
                    index: i + 1,
                    reason: format!("{foot} trace time {} does not increase", w[1].0),
                });
            }
        }
        Ok(Self { foot, samples })
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum TemporalError {
    #[error("no lift detected before the end of the trace (open step)")]
    OpenStep,
    #[error("malformed event sequence at index {index}: {reason}")]
    Malformed { index: usize, reason: String },
    #[error("{0}")]
    Argument(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TemporalConfig {
    /// Consecutive non-contact samples that confirm a lift.
    pub count_threshold: usize,
    pub sample_period_s: f64,
    /// Defaults to `(count_threshold - 1) * sample_period_s` when absent.
    pub compensation_s: Option<f64>,
    pub debounce_s: f64,
}

impl Default for TemporalConfig {
    fn default() -> Self {
        Self {
            count_threshold: 100,
            sample_period_s: 0.001,
            compensation_s: None,
            debounce_s: 0.080,
        }
    }
}

impl TemporalConfig {
    pub fn compensation(&self) -> f64 {
        self.compensation_s
            .unwrap_or((self.count_threshold.saturating_sub(1)) as f64 * self.sample_period_s)
    }
}

/// Index of the first sample at or after `t`.
fn first_index_at(trace: &FsrTrace, t: f64) -> usize {
    trace.samples.partition_point(|s| s.0 < t)
}

/// Returns the lift time and the sample index at which the run completed.
fn lift_scan(trace: &FsrTrace, from: usize, count_threshold: usize, compensation: f64) -> Result<(f64, usize), TemporalError> {
    let mut run = 0usize;
    for (i, &(t, contact)) in trace.samples.iter().enumerate().skip(from) {
        if contact {
            run = 0;
            continue;
        }
        run += 1;
        if run == count_threshold {
            return Ok((t - compensation, i));
        }
    }
    Err(TemporalError::OpenStep)
}

/// Lift time following a heel strike: the sample completing the first run of
/// `count_threshold` non-contact samples, minus `compensation`.
pub fn detect_lift(
    trace: &FsrTrace,
    heel_strike_t: f64,
    count_threshold: usize,
    compensation: f64,
) -> Result<f64, TemporalError> {
    if count_threshold == 0 {
        return Err(TemporalError::Argument("count_threshold must be at least 1".into()));
    }
    let start = first_index_at(trace, heel_strike_t);
    if start == trace.samples.len() {
        return Err(TemporalError::Argument(format!(
            "heel strike at {heel_strike_t} s is after the end of the trace"
        )));
    }
    lift_scan(trace, start, count_threshold, compensation).map(|(t, _)| t)
}

/// Heel strikes and lifts of a single trace, in time order.
///
/// A rising edge is only accepted as a heel strike once the previous step
/// has lifted and at least `debounce_s` has elapsed since the last accepted
/// strike. A strike with no lift before the trace ends is emitted alone.
pub fn events_from_trace(trace: &FsrTrace, cfg: &TemporalConfig) -> Result<Vec<FootfallEvent>, TemporalError> {
    if cfg.count_threshold == 0 {
        return Err(TemporalError::Argument("count_threshold must be at least 1".into()));
    }
    let compensation = cfg.compensation();
    let mut out = Vec::new();
    let mut last_strike: Option<f64> = None;
    let mut prev_contact = false;
    let mut i = 0;
    while i < trace.samples.len() {
        let (t, contact) = trace.samples[i];
        let rising = contact && !prev_contact;
        prev_contact = contact;
        if !rising || last_strike.is_some_and(|s| t - s < cfg.debounce_s) {
            i += 1;
            continue;
        }
        out.push(FootfallEvent::heel_strike(trace.foot, t));
        last_strike = Some(t);
        match lift_scan(trace, i, cfg.count_threshold, compensation) {
            Ok((lift, end)) => {
                out.push(FootfallEvent::lift(trace.foot, lift));
                prev_contact = false;
                i = end + 1;
            }
            Err(TemporalError::OpenStep) => break,
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Events of both feet merged in canonical order.
pub fn events_from_traces(
    left: &FsrTrace,
    right: &FsrTrace,
    cfg: &TemporalConfig,
) -> Result<Vec<FootfallEvent>, TemporalError> {
    if left.samples.is_empty() || right.samples.is_empty() {
        return Err(TemporalError::Argument("FSR traces must be nonempty".into()));
    }
    let mut events = events_from_trace(left, cfg)?;
    events.extend(events_from_trace(right, cfg)?);
    sort_events(&mut events);
    Ok(events)
}

/// Temporal parameters of the step that ends with heel strike `step_index`.
/// Fields needing earlier strikes or lifts are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalStep {
    pub step_index: usize,
    pub foot: Foot,
    pub t: f64,
    pub lift_t: Option<f64>,
    pub step_time: Option<f64>,
    pub stride_time: Option<f64>,
    pub gait_cycle_time: Option<f64>,
    pub swing_time: Option<f64>,
    pub standing_time: Option<f64>,
    pub single_support: Option<f64>,
    pub double_support: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkSummary {
    pub n_steps: usize,
    /// Steps per minute; absent with fewer than two heel strikes.
    pub cadence: Option<f64>,
    pub ambulation_time: f64,
}

impl WalkSummary {
    pub fn from_strikes(times: &[f64]) -> Self {
        let n = times.len();
        if n < 2 {
            return Self {
                n_steps: n,
                cadence: None,
                ambulation_time: 0.0,
            };
        }
        let ambulation = times[n - 1] - times[0];
        Self {
            n_steps: n,
            cadence: (ambulation > 0.0).then(|| 60.0 * (n - 1) as f64 / ambulation),
            ambulation_time: ambulation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalAnalysis {
    pub steps: Vec<TemporalStep>,
    pub summary: WalkSummary,
    pub warnings: Vec<String>,
}

/// Table of temporal parameters for one walk.
///
/// Events are sorted first, so input order does not matter. Every lift must
/// follow a heel strike of the same foot and heel strikes must alternate
/// between feet. A strike without a lift leaves the dependent fields empty.
pub fn temporal_params(events: &[FootfallEvent]) -> Result<TemporalAnalysis, TemporalError> {
    let mut events = events.to_vec();
    sort_events(&mut events);

    struct Strike {
        foot: Foot,
        t: f64,
        lift: Option<f64>,
    }
    let mut strikes: Vec<Strike> = Vec::new();
    let mut open: [Option<usize>; 2] = [None, None];
    let mut last_t: [Option<f64>; 2] = [None, None];
    let slot = |f: Foot| f as usize;

    for (index, ev) in events.iter().enumerate() {
        if !ev.t.is_finite() || ev.t < 0.0 {
            return Err(TemporalError::Malformed {
                index,
                reason: format!("time {} is negative or not finite", ev.t),
            });
        }
        let s = slot(ev.foot);
        if last_t[s].is_some_and(|p| ev.t <= p) {
            return Err(TemporalError::Malformed {
                index,
                reason: format!("{} events not strictly increasing at {} s", ev.foot, ev.t),
            });
        }
        last_t[s] = Some(ev.t);
        match ev.kind {
            EventKind::HeelStrike => {
                if strikes.last().is_some_and(|p| p.foot == ev.foot) {
                    return Err(TemporalError::Malformed {
                        index,
                        reason: format!("two consecutive {} heel strikes (feet must alternate)", ev.foot),
                    });
                }
                open[s] = Some(strikes.len());
                strikes.push(Strike {
                    foot: ev.foot,
                    t: ev.t,
                    lift: None,
                });
            }
            EventKind::Lift => match open[s].take() {
                Some(k) => strikes[k].lift = Some(ev.t),
                None => {
                    return Err(TemporalError::Malformed {
                        index,
                        reason: format!("{} lift at {} s without a preceding heel strike", ev.foot, ev.t),
                    })
                }
            },
        }
    }

    let mut steps: Vec<TemporalStep> = Vec::with_capacity(strikes.len());
    let mut warnings = Vec::new();
    for (k, s) in strikes.iter().enumerate() {
        let step_time = k.checked_sub(1).map(|p| s.t - strikes[p].t);
        let (stride_time, standing, swing) = match k.checked_sub(2).map(|p| &strikes[p]) {
            Some(pre) => {
                let stride = s.t - pre.t;
                match pre.lift {
                    Some(lift) => (Some(stride), Some(lift - pre.t), Some(s.t - lift)),
                    None => (Some(stride), None, None),
                }
            }
            None => (None, None, None),
        };
        let opposite_swing = k.checked_sub(1).and_then(|p| steps[p].swing_time);
        let double_support = step_time.zip(opposite_swing).map(|(st, sw)| st - sw);
        if let Some(ds) = double_support {
            if ds < 0.0 {
                warnings.push(format!(
                    "step {k} ({}): negative double support {ds:.6} s (flight phase)",
                    s.foot
                ));
            }
        }
        steps.push(TemporalStep {
            step_index: k,
            foot: s.foot,
            t: s.t,
            lift_t: s.lift,
            step_time,
            stride_time,
            gait_cycle_time: stride_time,
            swing_time: swing,
            standing_time: standing,
            single_support: opposite_swing,
            double_support,
        });
    }
    let times: Vec<f64> = strikes.iter().map(|s| s.t).collect();
    Ok(TemporalAnalysis {
        steps,
        summary: WalkSummary::from_strikes(&times),
        warnings,
    })
}

pub const EVENT_HEADER: [&str; 3] = ["foot", "kind", "t_seconds"];
pub const TRACE_HEADER: [&str; 3] = ["foot", "t_seconds", "contact"];

pub fn events_to_csv(events: &[FootfallEvent]) -> String {
    let mut out = EVENT_HEADER.join(",");
    out.push('\n');
    for e in events {
        out.push_str(&format!("{},{},{:.6}\n", e.foot, e.kind.as_str(), e.t));
    }
    out
}

pub fn events_from_csv(text: &str, name: &str) -> Result<Vec<FootfallEvent>, FormatError> {
    let table = Table::parse(text, name, &EVENT_HEADER)?;
    table
        .rows
        .iter()
        .map(|row| {
            Ok(FootfallEvent {
                foot: table.get(row, 0, "foot")?,
                kind: table.get(row, 1, "kind")?,
                t: table.get(row, 2, "t_seconds")?,
            })
        })
        .collect()
}

pub fn load_events(path: &Path) -> Result<Vec<FootfallEvent>, FormatError> {
    let text = std::fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
    events_from_csv(&text, &path.display().to_string())
}

pub fn traces_to_csv(traces: &[&FsrTrace]) -> String {
    let mut out = TRACE_HEADER.join(",");
    out.push('\n');
    for trace in traces {
        for &(t, c) in &trace.samples {
            out.push_str(&format!("{},{:.6},{}\n", trace.foot, t, u8::from(c)));
        }
    }
    out
}

/// Parses a trace file; rows of each foot are collected in file order.
pub fn traces_from_csv(text: &str, name: &str) -> Result<Vec<FsrTrace>, FormatError> {
    let table = Table::parse(text, name, &TRACE_HEADER)?;
    let mut by_foot: [Vec<(f64, bool)>; 2] = [Vec::new(), Vec::new()];
    for row in &table.rows {
        let foot: Foot = table.get(row, 0, "foot")?;
        let t: f64 = table.get(row, 1, "t_seconds")?;
        let contact = match table.get::<u8>(row, 2, "contact")? {
            0 => false,
            1 => true,
            v => return Err(FormatError::parse(name, row.line, format!("contact must be 0 or 1, got {v}"))),
        };
        let samples = &mut by_foot[foot as usize];
        if samples.last().is_some_and(|p| t <= p.0) {
            return Err(FormatError::parse(name, row.line, format!("{foot} sample time {t} does not increase")));
        }
        samples.push((t, contact));
    }
    let [left, right] = by_foot;
    Ok([(Foot::Left, left), (Foot::Right, right)]
        .into_iter()
        .filter(|(_, s)| !s.is_empty())
        .map(|(foot, samples)| FsrTrace { foot, samples })
        .collect())
}

pub fn load_traces(path: &Path) -> Result<Vec<FsrTrace>, FormatError> {
    let text = std::fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
    traces_from_csv(&text, &path.display().to_string())
}

pub fn write_events(path: &Path, events: &[FootfallEvent]) -> Result<(), FormatError> {
    formats::write_atomic(path, &events_to_csv(events))
}
