//! Sensor observations of a simulated walk and their on-disk layout.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{quantize_us, truncated_normal, SimError, WalkTrace};
use crate::formats::{self, FormatError, Table};
use crate::geometry::{from_ground, Calibration, PixelPoint, WorldPoint};
use crate::spatial_stats::RigConfig;
use crate::sync::{estimate_offset_with, ClockModel, ExchangeConfig, SyncEstimate};
use crate::temporal::{self, Foot, FsrTrace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseModel {
    pub pixel_sigma: f64,
    /// Timing jitter of contact transitions, captures and sync probes.
    pub clock_jitter_sigma: f64,
    pub fsr_double_trigger_prob: f64,
    pub marker_miss_prob: f64,
    /// Camera mounting yaw that creeps away from its calibrated value, rad per step.
    pub yaw_drift_per_step: f64,
    /// Offset and drift of each wearable's clock (their `jitter_sigma` is unused).
    pub left_clock: ClockModel,
    pub right_clock: ClockModel,
    pub sync_probes: usize,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            pixel_sigma: 0.0,
            clock_jitter_sigma: 0.0,
            fsr_double_trigger_prob: 0.0,
            marker_miss_prob: 0.0,
            yaw_drift_per_step: 0.0,
            left_clock: ClockModel::default(),
            right_clock: ClockModel::default(),
            sync_probes: 16,
        }
    }
}

impl NoiseModel {
    /// 0.5 px pixel noise and 1 ms clock jitter.
    pub fn declared() -> Self {
        Self {
            pixel_sigma: 0.5,
            clock_jitter_sigma: 0.001,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        for (name, v) in [
            ("pixel_sigma", self.pixel_sigma),
            ("clock_jitter_sigma", self.clock_jitter_sigma),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(SimError::Argument(format!("{name} must be non-negative, got {v}")));
            }
        }
        for (name, v) in [
            ("fsr_double_trigger_prob", self.fsr_double_trigger_prob),
            ("marker_miss_prob", self.marker_miss_prob),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(SimError::Argument(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        if self.clock_jitter_sigma > 0.003 {
            return Err(SimError::Argument("clock_jitter_sigma above 3 ms would overlap the FSR bounce".into()));
        }
        Ok(())
    }

    fn clock(&self, foot: Foot) -> &ClockModel {
        match foot {
            Foot::Left => &self.left_clock,
            Foot::Right => &self.right_clock,
        }
    }
}

/// One stereo capture; `pixels` is `None` when the marker was not detected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StereoObservation {
    pub step_index: usize,
    pub foot: Foot,
    pub t_device: f64,
    pub pixels: Option<(PixelPoint<f64>, PixelPoint<f64>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyncPair {
    pub left: SyncEstimate,
    pub right: SyncEstimate,
}

impl SyncPair {
    pub fn get(&self, foot: Foot) -> &SyncEstimate {
        match foot {
            Foot::Left => &self.left,
            Foot::Right => &self.right,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationManifest {
    pub calibration_file: String,
    pub rig: RigConfig,
    pub seed: u64,
    pub sample_period_s: f64,
    pub image_width: u32,
    pub image_height: u32,
    pub sync: SyncPair,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationLog {
    pub manifest: ObservationManifest,
    /// Left then right, in device time.
    pub traces: Vec<FsrTrace>,
    pub stereo: Vec<StereoObservation>,
}

pub const STEREO_HEADER: [&str; 8] = ["step_index", "foot", "t_device", "u1", "v1", "u2", "v2", "found"];
pub const MANIFEST_FILE: &str = "manifest.json";
pub const FSR_FILE: &str = "fsr.csv";
pub const STEREO_FILE: &str = "stereo.csv";

impl ObservationLog {
    pub fn trace(&self, foot: Foot) -> Option<&FsrTrace> {
        self.traces.iter().find(|t| t.foot == foot)
    }

    pub fn stereo_to_csv(&self) -> String {
        let mut out = STEREO_HEADER.join(",");
        out.push('\n');
        for o in &self.stereo {
            match &o.pixels {
                Some((a, b)) => out.push_str(&format!(
                    "{},{},{},{},{},{},{},1\n",
                    o.step_index, o.foot, o.t_device, a.u, a.v, b.u, b.v
                )),
                None => out.push_str(&format!("{},{},{},,,,,0\n", o.step_index, o.foot, o.t_device)),
            }
        }
        out
    }

    pub fn stereo_from_csv(text: &str, name: &str) -> Result<Vec<StereoObservation>, FormatError> {
        let table = Table::parse(text, name, &STEREO_HEADER)?;
        table
            .rows
            .iter()
            .map(|row| {
                let found = match table.get::<u8>(row, 7, "found")? {
                    0 => false,
                    1 => true,
                    v => return Err(FormatError::parse(name, row.line, format!("found must be 0 or 1, got {v}"))),
                };
                let pixels = if found {
                    let g = |i: usize| table.get::<f64>(row, i, STEREO_HEADER[i]);
                    Some((PixelPoint::new(g(3)?, g(4)?), PixelPoint::new(g(5)?, g(6)?)))
                } else {
                    None
                };
                Ok(StereoObservation {
                    step_index: table.get(row, 0, "step_index")?,
                    foot: table.get(row, 1, "foot")?,
                    t_device: table.get(row, 2, "t_device")?,
                    pixels,
                })
            })
            .collect()
    }

    pub fn write_dir(&self, dir: &Path) -> Result<(), SimError> {
        std::fs::create_dir_all(dir).map_err(|e| FormatError::io(dir, e))?;
        let manifest = serde_json::to_string_pretty(&self.manifest).expect("manifest serialises") + "\n";
        formats::write_atomic(&dir.join(MANIFEST_FILE), &manifest)?;
        let traces: Vec<&FsrTrace> = self.traces.iter().collect();
        formats::write_atomic(&dir.join(FSR_FILE), &temporal::traces_to_csv(&traces))?;
        formats::write_atomic(&dir.join(STEREO_FILE), &self.stereo_to_csv())?;
        Ok(())
    }

    pub fn read_dir(dir: &Path) -> Result<Self, SimError> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| FormatError::io(&path, e))?;
        let manifest: ObservationManifest = serde_json::from_str(&text).map_err(|e| SimError::Manifest {
            path: path.display().to_string(),
            message: format!("line {}, column {}: {e}", e.line(), e.column()),
        })?;
        let traces = temporal::load_traces(&dir.join(FSR_FILE))?;
        let stereo_path = dir.join(STEREO_FILE);
        let text = std::fs::read_to_string(&stereo_path).map_err(|e| FormatError::io(&stereo_path, e))?;
        let stereo = Self::stereo_from_csv(&text, &stereo_path.display().to_string())?;
        Ok(Self {
            manifest,
            traces,
            stereo,
        })
    }
}

/// Contact intervals of one foot in reference time, with bounce gaps.
fn contact_intervals<R: Rng>(
    trace: &WalkTrace,
    foot: Foot,
    noise: &NoiseModel,
    rng: &mut R,
) -> (Vec<(f64, f64)>, Vec<(usize, f64)>) {
    let mut intervals = Vec::new();
    let mut bounces = Vec::new();
    for f in trace.footfalls.iter().filter(|f| f.foot == foot) {
        let on = f.heel_strike_t + truncated_normal(rng, 0.0, noise.clock_jitter_sigma);
        let off = f.lift_t + truncated_normal(rng, 0.0, noise.clock_jitter_sigma);
        let bounce = rng.random::<f64>() < noise.fsr_double_trigger_prob;
        let second = f.heel_strike_t + rng.random_range(0.020..0.040);
        if bounce {
            intervals.push((on, f.heel_strike_t + 0.010));
            intervals.push((second, off));
            bounces.push((f.index, second));
        } else {
            intervals.push((on, off));
        }
    }
    (intervals, bounces)
}

/// Samples the contact state on the device's own polling grid.
fn sample_trace(foot: Foot, intervals: &[(f64, f64)], clock: &ClockModel, period: f64, end_t: f64) -> FsrTrace {
    let first = (clock.local_time(0.0) / period).ceil().max(0.0) as i64;
    let last = (clock.local_time(end_t) / period).floor() as i64;
    let mut samples = Vec::with_capacity((last - first + 1).max(0) as usize);
    let mut cursor = 0;
    for i in first..=last {
        let tau = quantize_us(i as f64 * period);
        let t = (tau - clock.offset) / (1.0 + clock.drift_rate);
        while cursor < intervals.len() && intervals[cursor].1 <= t {
            cursor += 1;
        }
        let contact = cursor < intervals.len() && intervals[cursor].0 <= t;
        samples.push((tau, contact));
    }
    FsrTrace { foot, samples }
}

/// FSR traces, stereo captures and sync estimates for a walk.
///
/// The camera of footfall `k` is yawed by `rig.theta + k * yaw_drift_per_step`
/// from the walking direction; pixel noise is added to all four coordinates.
pub fn observe(
    trace: &WalkTrace,
    calib: &Calibration,
    rig: &RigConfig,
    noise: &NoiseModel,
    seed: u64,
) -> Result<ObservationLog, SimError> {
    noise.validate()?;
    let stereo_rig = calib.rig()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let period = trace.config.fsr_period_s;

    let mut traces = Vec::new();
    let mut bounces = Vec::new();
    for foot in [Foot::Left, Foot::Right] {
        let (intervals, b) = contact_intervals(trace, foot, noise, &mut rng);
        traces.push(sample_trace(foot, &intervals, noise.clock(foot), period, trace.end_t));
        bounces.extend(b);
    }

    let pixel = Normal::new(0.0, noise.pixel_sigma.max(0.0)).expect("finite sigma");
    let (w, h) = (calib.image_width as f64 - 1.0, calib.image_height as f64 - 1.0);
    let inside = |p: &PixelPoint<f64>| p.u >= 0.0 && p.v >= 0.0 && p.u <= w && p.v <= h;
    let capture = |k: usize, rng: &mut ChaCha8Rng| -> Result<Option<(PixelPoint<f64>, PixelPoint<f64>)>, SimError> {
        let Some(rel) = trace.relative_marker(k) else {
            return Ok(None);
        };
        let theta = rig.theta + noise.yaw_drift_per_step * k as f64;
        let cam = from_ground(&WorldPoint::ground(rel[0], rel[1], rel[2]), theta);
        let jitter = |p: PixelPoint<f64>, rng: &mut ChaCha8Rng| {
            if noise.pixel_sigma > 0.0 {
                PixelPoint::new(p.u + pixel.sample(rng), p.v + pixel.sample(rng))
            } else {
                p
            }
        };
        let missed = rng.random::<f64>() < noise.marker_miss_prob;
        if cam.z <= 0.0 {
            return Ok(None);
        }
        let (a, b) = stereo_rig.project_pair(&cam)?;
        let (a, b) = (jitter(a, rng), jitter(b, rng));
        if missed || !inside(&a) || !inside(&b) {
            return Ok(None);
        }
        Ok(Some((a, b)))
    };
    let mut stereo = Vec::new();
    for f in &trace.footfalls {
        if f.index == 0 {
            continue;
        }
        let clock = noise.clock(f.foot);
        let t = f.heel_strike_t + truncated_normal(&mut rng, 0.0, noise.clock_jitter_sigma);
        stereo.push(StereoObservation {
            step_index: f.index,
            foot: f.foot,
            t_device: quantize_us(clock.local_time(t)),
            pixels: capture(f.index, &mut rng)?,
        });
        if let Some(&(_, second)) = bounces.iter().find(|b| b.0 == f.index) {
            stereo.push(StereoObservation {
                step_index: f.index,
                foot: f.foot,
                t_device: quantize_us(clock.local_time(second)),
                pixels: capture(f.index, &mut rng)?,
            });
        }
    }

    let exchange = ExchangeConfig::default();
    let mut estimate = |clock: &ClockModel| {
        let jittered = ClockModel {
            jitter_sigma: noise.clock_jitter_sigma,
            ..clock.clone()
        };
        estimate_offset_with(&jittered, noise.sync_probes.max(1), &exchange, &mut rng)
    };
    let sync = SyncPair {
        left: estimate(&noise.left_clock),
        right: estimate(&noise.right_clock),
    };

    Ok(ObservationLog {
        manifest: ObservationManifest {
            calibration_file: "calibration.json".into(),
            rig: rig.clone(),
            seed,
            sample_period_s: period,
            image_width: calib.image_width,
            image_height: calib.image_height,
            sync,
        },
        traces,
        stereo,
    })
}
