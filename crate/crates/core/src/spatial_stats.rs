//! Spatial gait parameters, per-step records and the variation / symmetry metrics.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formats::{self, opt_cell, FormatError, Table};
use crate::geometry::{Frame, WorldPoint};
use crate::scalar::Real;
use crate::temporal::{Foot, TemporalStep};

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("{0}")]
    Argument(String),
    #[error("coefficient of variation undefined: mean is zero")]
    UndefinedCv,
    #[error("symmetry undefined: right + left is zero")]
    UndefinedSymmetry,
}

/// Mounting constants of the wearable pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RigConfig {
    pub foot_length: f64,
    /// Camera height minus marker height; added to the measured vertical component.
    pub initial_height_offset: f64,
    pub theta: f64,
}

impl Default for RigConfig {
    fn default() -> Self {
        Self {
            foot_length: 0.25,
            initial_height_offset: 0.02,
            theta: 0.1,
        }
    }
}

impl RigConfig {
    pub fn validate(&self) -> Result<(), StatsError> {
        if !(self.foot_length.is_finite() && self.foot_length > 0.0) {
            return Err(StatsError::Argument(format!("foot_length must be positive, got {}", self.foot_length)));
        }
        if !(self.initial_height_offset.is_finite() && self.theta.is_finite()) {
            return Err(StatsError::Argument("rig offsets must be finite".into()));
        }
        Ok(())
    }
}

/// Marker of the swinging foot as seen from the striking foot's camera.
#[derive(Debug, Clone, PartialEq)]
pub struct StepObservation<T> {
    pub step_index: usize,
    pub foot: Foot,
    pub marker_ground: WorldPoint<T>,
    pub t: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaitVector<T> {
    pub length: T,
    pub width: T,
    pub height: T,
}

pub fn gait_vector<T: Real>(obs: &StepObservation<T>, cfg: &RigConfig) -> Result<GaitVector<T>, StatsError> {
    let m = &obs.marker_ground;
    if m.frame != Frame::Ground {
        return Err(StatsError::Argument("marker position must be in the ground frame".into()));
    }
    Ok(GaitVector {
        length: m.x,
        width: m.y.abs(),
        height: m.z + T::lit(cfg.initial_height_offset),
    })
}

/// Two consecutive gait lengths plus the foot length; absent for a first step.
pub fn stride_length<T: Real>(gait_len_prev: Option<T>, gait_len_cur: T, foot_length: T) -> Option<T> {
    gait_len_prev.map(|p| p + gait_len_cur + foot_length)
}

pub fn stride_velocity<T: Real>(stride_length: T, stride_time: T) -> Result<T, StatsError> {
    if !(stride_time > T::zero()) {
        return Err(StatsError::Argument(format!("stride time must be positive, got {stride_time}")));
    }
    Ok(stride_length / stride_time)
}

pub fn mean<T: Real>(xs: &[T]) -> T {
    xs.iter().copied().sum::<T>() / T::lit(xs.len() as f64)
}

/// Sample standard deviation (N - 1 denominator).
pub fn sample_sd<T: Real>(xs: &[T]) -> T {
    let m = mean(xs);
    let ss: T = xs.iter().map(|&x| (x - m) * (x - m)).sum();
    (ss / T::lit((xs.len() - 1) as f64)).sqrt()
}

/// `100 * s / mean` in percent.
pub fn coefficient_of_variation<T: Real>(xs: &[T]) -> Result<T, StatsError> {
    if xs.len() < 2 {
        return Err(StatsError::Argument(format!("need at least 2 values, got {}", xs.len())));
    }
    let m = mean(xs);
    if m.abs() <= T::lit(1e-12) {
        return Err(StatsError::UndefinedCv);
    }
    Ok(T::lit(100.0) * sample_sd(xs) / m)
}

/// `2 |r - l| / (r + l) * 100`.
pub fn symmetry<T: Real>(x_right: T, x_left: T) -> Result<T, StatsError> {
    let denom = x_right + x_left;
    if denom == T::zero() {
        return Err(StatsError::UndefinedSymmetry);
    }
    Ok(T::lit(200.0) * (x_right - x_left).abs() / denom)
}

/// Everything known about one step. Missing values are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step_index: usize,
    pub foot: Foot,
    pub t: f64,
    pub gait_length: Option<f64>,
    pub gait_width: Option<f64>,
    pub gait_height: Option<f64>,
    pub stride_length: Option<f64>,
    pub step_time: Option<f64>,
    pub stride_time: Option<f64>,
    pub swing_time: Option<f64>,
    pub standing_time: Option<f64>,
    pub single_support: Option<f64>,
    pub double_support: Option<f64>,
    pub stride_velocity: Option<f64>,
}

impl StepRecord {
    pub fn from_temporal(step: &TemporalStep) -> Self {
        Self {
            step_index: step.step_index,
            foot: step.foot,
            t: step.t,
            gait_length: None,
            gait_width: None,
            gait_height: None,
            stride_length: None,
            step_time: step.step_time,
            stride_time: step.stride_time,
            swing_time: step.swing_time,
            standing_time: step.standing_time,
            single_support: step.single_support,
            double_support: step.double_support,
            stride_velocity: None,
        }
    }

    pub fn gait_cycle_time(&self) -> Option<f64> {
        self.stride_time
    }

    pub fn spatial_absent(&self) -> bool {
        self.gait_length.is_none()
    }
}

/// Fills stride length and velocity from consecutive gait lengths.
pub fn complete_strides(records: &mut [StepRecord], foot_length: f64) {
    for k in 0..records.len() {
        let prev = k.checked_sub(1).and_then(|p| records[p].gait_length);
        let cur = &mut records[k];
        cur.stride_length = cur.gait_length.and_then(|g| stride_length(prev, g, foot_length));
        cur.stride_velocity = match (cur.stride_length, cur.stride_time) {
            (Some(l), Some(t)) => stride_velocity(l, t).ok(),
            _ => None,
        };
    }
}

pub const STEP_HEADER: [&str; 14] = [
    "step_index",
    "foot",
    "t",
    "gait_length",
    "gait_width",
    "gait_height",
    "stride_length",
    "step_time",
    "stride_time",
    "swing_time",
    "standing_time",
    "single_support",
    "double_support",
    "stride_velocity",
];

pub fn records_to_csv(records: &[StepRecord]) -> String {
    let mut out = STEP_HEADER.join(",");
    out.push('\n');
    for r in records {
        let cells = [
            r.step_index.to_string(),
            r.foot.to_string(),
            r.t.to_string(),
            opt_cell(r.gait_length),
            opt_cell(r.gait_width),
            opt_cell(r.gait_height),
            opt_cell(r.stride_length),
            opt_cell(r.step_time),
            opt_cell(r.stride_time),
            opt_cell(r.swing_time),
            opt_cell(r.standing_time),
            opt_cell(r.single_support),
            opt_cell(r.double_support),
            opt_cell(r.stride_velocity),
        ];
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn records_from_csv(text: &str, name: &str) -> Result<Vec<StepRecord>, FormatError> {
    let table = Table::parse(text, name, &STEP_HEADER)?;
    table
        .rows
        .iter()
        .map(|row| {
            let o = |i: usize| table.get_opt::<f64>(row, i, STEP_HEADER[i]);
            Ok(StepRecord {
                step_index: table.get(row, 0, "step_index")?,
                foot: table.get(row, 1, "foot")?,
                t: table.get(row, 2, "t")?,
                gait_length: o(3)?,
                gait_width: o(4)?,
                gait_height: o(5)?,
                stride_length: o(6)?,
                step_time: o(7)?,
                stride_time: o(8)?,
                swing_time: o(9)?,
                standing_time: o(10)?,
                single_support: o(11)?,
                double_support: o(12)?,
                stride_velocity: o(13)?,
            })
        })
        .collect()
}

pub fn load_records(path: &Path) -> Result<Vec<StepRecord>, FormatError> {
    let text = std::fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
    records_from_csv(&text, &path.display().to_string())
}

pub fn write_records(path: &Path, records: &[StepRecord]) -> Result<(), FormatError> {
    formats::write_atomic(path, &records_to_csv(records))
}
