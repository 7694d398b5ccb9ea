//! End-to-end analysis of an observation log: events, clock alignment,
//! triangulation, spatial and temporal parameters, and summary statistics.

mod accuracy;
mod report;
mod studies;

pub use accuracy::{accuracy_percent, drift_study, match_steps, AccuracyEntry, DriftEntry, AccuracyTable, DriftReport, Group, Parameter, ParameterKind};
pub use report::{write_report, REPORT_JSON, REPORT_TEXT, STEPS_CSV};
pub use studies::{accuracy_study, corpus_trials, ident_cycles, long_walk, long_walk_drift, looped, CorpusResult, Trial};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{to_ground, triangulate, Calibration, CalibrationError, GeometryError};
use crate::simulator::{observe, simulate_walk, NoiseModel, ObservationLog, SimError, WalkTrace, WalkerConfig};
use crate::spatial_stats::{coefficient_of_variation, complete_strides, gait_vector, symmetry, RigConfig, StepObservation, StepRecord};
use crate::sync::{align_streams, SyncError};
use crate::temporal::{events_from_trace, temporal_params, Foot, TemporalConfig, TemporalError, WalkSummary};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Format(#[from] crate::formats::FormatError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Simulation(#[from] SimError),
    #[error(transparent)]
    Temporal(#[from] TemporalError),
    #[error(transparent)]
    Sync(#[from] SyncError),
    #[error("{0}")]
    Argument(String),
}

/// Percent coefficient of variation and symmetry for the two tracked series.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SeriesStats {
    pub gait_length: Option<f64>,
    pub stride_velocity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaitReport {
    pub steps: Vec<StepRecord>,
    pub summary: WalkSummary,
    pub variation: SeriesStats,
    pub symmetry: SeriesStats,
    /// Steps after the first whose marker was not detected.
    pub spatial_absent: Vec<usize>,
    pub warnings: Vec<String>,
    pub accuracy: Option<AccuracyTable>,
}

/// Mean over consecutive opposite-foot pairs of the symmetry index.
pub fn series_symmetry(records: &[StepRecord], value: impl Fn(&StepRecord) -> Option<f64>) -> Vec<f64> {
    records
        .windows(2)
        .filter(|w| w[0].foot != w[1].foot)
        .filter_map(|w| {
            let (r, l) = if w[1].foot == Foot::Right { (&w[1], &w[0]) } else { (&w[0], &w[1]) };
            symmetry(value(r)?, value(l)?).ok()
        })
        .collect()
}

fn mean_of(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

fn series_variation(records: &[StepRecord], value: impl Fn(&StepRecord) -> Option<f64>) -> Option<f64> {
    let xs: Vec<f64> = records.iter().filter_map(value).collect();
    coefficient_of_variation(&xs).ok()
}

impl GaitReport {
    /// Summary statistics over the given records.
    pub fn from_records(steps: Vec<StepRecord>, summary: WalkSummary) -> Self {
        let variation = SeriesStats {
            gait_length: series_variation(&steps, |r| r.gait_length),
            stride_velocity: series_variation(&steps, |r| r.stride_velocity),
        };
        let symmetry = SeriesStats {
            gait_length: mean_of(&series_symmetry(&steps, |r| r.gait_length)),
            stride_velocity: mean_of(&series_symmetry(&steps, |r| r.stride_velocity)),
        };
        let spatial_absent = steps.iter().skip(1).filter(|r| r.spatial_absent()).map(|r| r.step_index).collect();
        Self {
            steps,
            summary,
            variation,
            symmetry,
            spatial_absent,
            warnings: Vec::new(),
            accuracy: None,
        }
    }

    /// Ground-truth report of a simulated walk.
    pub fn truth(trace: &WalkTrace) -> Self {
        let times: Vec<f64> = trace.footfalls.iter().map(|f| f.heel_strike_t).collect();
        let mut r = Self::from_records(trace.true_steps.clone(), WalkSummary::from_strikes(&times));
        r.spatial_absent.clear();
        r
    }

    pub fn attach_truth(&mut self, truth: &GaitReport) {
        self.accuracy = Some(AccuracyTable::compare(&[Group::single(self, truth)]));
    }
}

/// Analyses one observation log.
///
/// Heel strikes and lifts come from each device's FSR trace, are mapped onto
/// the reference clock with the logged sync estimates and merged. Each heel
/// strike takes the earliest detected stereo capture of the same foot within
/// the debounce window.
pub fn process(
    log: &ObservationLog,
    calib: &Calibration,
    rig_cfg: &RigConfig,
    temporal_cfg: &TemporalConfig,
) -> Result<GaitReport, PipelineError> {
    calib.validate("calibration")?;
    rig_cfg.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
    let m = &log.manifest;
    if (m.image_width, m.image_height) != (calib.image_width, calib.image_height) {
        return Err(PipelineError::Config(format!(
            "observations are {}x{} px but the calibration is {}x{} px",
            m.image_width, m.image_height, calib.image_width, calib.image_height
        )));
    }
    let rig = calib.rig()?;
    let trace = |foot: Foot| {
        log.trace(foot)
            .ok_or_else(|| PipelineError::Config(format!("observation log has no {foot} FSR trace")))
    };
    let left = events_from_trace(trace(Foot::Left)?, temporal_cfg)?;
    let right = events_from_trace(trace(Foot::Right)?, temporal_cfg)?;
    let events = align_streams(&left, &right, &m.sync.left, &m.sync.right)?;
    let analysis = temporal_params(&events)?;

    let mut warnings = analysis.warnings.clone();
    let mut records: Vec<StepRecord> = analysis.steps.iter().map(StepRecord::from_temporal).collect();
    for rec in records.iter_mut() {
        let offset = m.sync.get(rec.foot).offset_estimate;
        let capture = log
            .stereo
            .iter()
            .filter(|o| o.foot == rec.foot && o.pixels.is_some())
            .filter(|o| ((o.t_device - offset) - rec.t).abs() <= temporal_cfg.debounce_s)
            .min_by(|a, b| a.t_device.total_cmp(&b.t_device));
        let Some((o1, o2)) = capture.and_then(|c| c.pixels) else {
            continue;
        };
        match triangulate(&rig, &o1, &o2) {
            Ok(x) => {
                let obs = StepObservation {
                    step_index: rec.step_index,
                    foot: rec.foot,
                    marker_ground: to_ground(&x, rig_cfg.theta),
                    t: rec.t,
                };
                let g = gait_vector(&obs, rig_cfg).map_err(|e| PipelineError::Argument(e.to_string()))?;
                if g.length < 0.0 {
                    warnings.push(format!("step {}: negative walkway component {:.4} m", rec.step_index, g.length));
                }
                rec.gait_length = Some(g.length);
                rec.gait_width = Some(g.width);
                rec.gait_height = Some(g.height);
            }
            Err(e) => warnings.push(format!("step {}: triangulation rejected: {e}", rec.step_index)),
        }
    }
    complete_strides(&mut records, rig_cfg.foot_length);
    let mut report = GaitReport::from_records(records, analysis.summary);
    report.warnings = warnings;
    Ok(report)
}

/// Everything produced by one simulated trial.
pub struct SimulatedRun {
    pub trace: WalkTrace,
    pub log: ObservationLog,
    pub report: GaitReport,
    pub truth: GaitReport,
}

/// Simulate, observe and analyse one walk; the report carries its accuracy table.
pub fn run_simulated(
    walker: &WalkerConfig,
    calib: &Calibration,
    rig_cfg: &RigConfig,
    noise: &NoiseModel,
    temporal_cfg: &TemporalConfig,
    seed: u64,
) -> Result<SimulatedRun, PipelineError> {
    let trace = simulate_walk(walker)?;
    let log = observe(&trace, calib, rig_cfg, noise, seed)?;
    let mut report = process(&log, calib, rig_cfg, temporal_cfg)?;
    let truth = GaitReport::truth(&trace);
    report.attach_truth(&truth);
    Ok(SimulatedRun {
        trace,
        log,
        report,
        truth,
    })
}

/// Rig constants matching a walker's shoe geometry and a calibration.
pub fn rig_for(walker: &WalkerConfig, calib: &Calibration) -> RigConfig {
    RigConfig {
        foot_length: walker.foot_length,
        initial_height_offset: walker.camera_height - walker.marker_height,
        theta: calib.theta_rad,
    }
}
