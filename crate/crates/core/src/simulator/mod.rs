//! Synthetic walker: ground-truth footfalls and gait parameters, and the
//! sensor observations a pair of wearables would record of them.
//!
//! Each foot carries a level stereo camera at mid-foot and a marker on its
//! toe. At every heel strike the striking foot's camera looks back at the
//! other foot's marker. Times live on the FSR sampling grid, so a noiseless
//! walk is recovered exactly by the analysis pipeline.

mod observe;
mod route;

pub use observe::{observe, NoiseModel, ObservationLog, ObservationManifest, StereoObservation, SyncPair};
pub use route::{loop_waypoints, Route};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spatial_stats::{complete_strides, StepRecord};
use crate::temporal::{temporal_params, Foot, FootfallEvent};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("{0}")]
    Argument(String),
    #[error(transparent)]
    Format(#[from] crate::formats::FormatError),
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
    #[error("{path}: {message}")]
    Manifest { path: String, message: String },
}

/// Fractional right-minus-left bias; the right foot gets `1 + a/2`, the left `1 - a/2`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Asymmetry {
    pub gait_length: f64,
    pub gait_width: f64,
    pub gait_height: f64,
    pub stride_time: f64,
}

impl Asymmetry {
    fn factor(a: f64, foot: Foot) -> f64 {
        match foot {
            Foot::Right => 1.0 + 0.5 * a,
            Foot::Left => 1.0 - 0.5 * a,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WalkerConfig {
    pub gait_length_mean: f64,
    pub gait_length_sd: f64,
    pub gait_width_mean: f64,
    pub gait_width_sd: f64,
    /// Elevation of the observed marker above its standing height.
    pub gait_height_mean: f64,
    pub gait_height_sd: f64,
    pub standing_fraction: f64,
    pub stride_time_mean: f64,
    pub stride_time_sd: f64,
    pub foot_length: f64,
    pub camera_height: f64,
    pub marker_height: f64,
    pub asymmetry: Asymmetry,
    pub route: Vec<[f64; 2]>,
    pub corner_radius: f64,
    pub first_strike_s: f64,
    /// Recording continues this long after the last heel strike.
    pub tail_s: f64,
    pub fsr_period_s: f64,
    /// Stop after this many footfalls even if the route continues.
    pub max_steps: Option<usize>,
    pub seed: u64,
}

impl Default for WalkerConfig {
    fn default() -> Self {
        Self {
            gait_length_mean: 0.65,
            gait_length_sd: 0.02,
            gait_width_mean: 0.10,
            gait_width_sd: 0.01,
            gait_height_mean: 0.04,
            gait_height_sd: 0.004,
            standing_fraction: 0.6,
            stride_time_mean: 1.1,
            stride_time_sd: 0.03,
            foot_length: 0.25,
            camera_height: 0.06,
            marker_height: 0.04,
            asymmetry: Asymmetry::default(),
            route: vec![[0.0, 0.0], [7.0, 0.0]],
            corner_radius: 1.5,
            first_strike_s: 0.5,
            tail_s: 0.4,
            fsr_period_s: 0.001,
            max_steps: None,
            seed: 0,
        }
    }
}

impl WalkerConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let positive = [
            ("gait_length_mean", self.gait_length_mean),
            ("gait_width_mean", self.gait_width_mean),
            ("stride_time_mean", self.stride_time_mean),
            ("foot_length", self.foot_length),
            ("fsr_period_s", self.fsr_period_s),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(SimError::Argument(format!("{name} must be positive, got {v}")));
            }
        }
        let non_negative = [
            ("gait_height_mean", self.gait_height_mean),
            ("gait_length_sd", self.gait_length_sd),
            ("gait_width_sd", self.gait_width_sd),
            ("gait_height_sd", self.gait_height_sd),
            ("stride_time_sd", self.stride_time_sd),
            ("first_strike_s", self.first_strike_s),
            ("tail_s", self.tail_s),
            ("corner_radius", self.corner_radius),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return Err(SimError::Argument(format!("{name} must be non-negative, got {v}")));
            }
        }
        if !(self.standing_fraction > 0.0 && self.standing_fraction < 1.0) {
            return Err(SimError::Argument(format!(
                "standing_fraction must lie in (0, 1), got {}",
                self.standing_fraction
            )));
        }
        if self.max_steps.is_some_and(|m| m < 2) {
            return Err(SimError::Argument("max_steps must be at least 2".into()));
        }
        let a = &self.asymmetry;
        for v in [a.gait_length, a.gait_width, a.gait_height, a.stride_time] {
            if !(v.abs() < 1.0) {
                return Err(SimError::Argument(format!("asymmetry must lie in (-1, 1), got {v}")));
            }
        }
        Ok(())
    }

    /// Six synthetic participants with well separated gait signatures.
    pub fn personas() -> Vec<(String, WalkerConfig)> {
        // (length, width, height, stride time, standing fraction, length asymmetry)
        let table = [
            ("p1", 0.58, 0.08, 0.030, 1.00, 0.60, 0.00),
            ("p2", 0.66, 0.12, 0.042, 1.10, 0.62, 0.03),
            ("p3", 0.74, 0.10, 0.036, 1.22, 0.60, -0.02),
            ("p4", 0.62, 0.14, 0.050, 1.16, 0.64, 0.05),
            ("p5", 0.70, 0.07, 0.026, 1.04, 0.58, -0.04),
            ("p6", 0.54, 0.11, 0.046, 1.26, 0.63, 0.02),
        ];
        table
            .iter()
            .enumerate()
            .map(|(i, &(name, len, width, height, stride, standing, asym))| {
                (
                    name.to_string(),
                    WalkerConfig {
                        gait_length_mean: len,
                        gait_length_sd: 0.015,
                        gait_width_mean: width,
                        gait_width_sd: 0.008,
                        gait_height_mean: height,
                        gait_height_sd: 0.003,
                        standing_fraction: standing,
                        stride_time_mean: stride,
                        stride_time_sd: 0.02,
                        asymmetry: Asymmetry {
                            gait_length: asym,
                            ..Asymmetry::default()
                        },
                        seed: 1000 + i as u64,
                        ..WalkerConfig::default()
                    },
                )
            })
            .collect()
    }
}

fn reached_cap(max_steps: Option<usize>, n: usize) -> bool {
    max_steps.is_some_and(|m| n >= m)
}

/// Gaussian draw truncated to `mean ± 3 sd` by rejection.
pub fn truncated_normal<R: Rng>(rng: &mut R, mean: f64, sd: f64) -> f64 {
    if sd <= 0.0 {
        return mean;
    }
    let n = Normal::new(mean, sd).expect("finite sd");
    loop {
        let x = n.sample(rng);
        if (x - mean).abs() <= 3.0 * sd {
            return x;
        }
    }
}

/// Rounds to the nearest microsecond, the resolution of every stored timestamp.
pub fn quantize_us(t: f64) -> f64 {
    (t * 1e6).round() / 1e6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Footfall {
    pub index: usize,
    pub foot: Foot,
    /// Arc length of the heel along the route.
    pub arc: f64,
    pub heading: [f64; 2],
    pub heel: [f64; 3],
    pub tip: [f64; 3],
    pub heel_strike_t: f64,
    pub lift_t: f64,
    /// Elevation of the other foot's marker at this heel strike.
    pub observed_marker_elevation: f64,
}

impl Footfall {
    pub fn camera_position(&self, foot_length: f64, camera_height: f64) -> [f64; 3] {
        [
            self.heel[0] + 0.5 * foot_length * self.heading[0],
            self.heel[1] + 0.5 * foot_length * self.heading[1],
            camera_height,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkTrace {
    pub config: WalkerConfig,
    pub footfalls: Vec<Footfall>,
    pub true_steps: Vec<StepRecord>,
    pub end_t: f64,
}

impl WalkTrace {
    /// Marker of footfall `k - 1` in the measurement frame of footfall `k`:
    /// `x` from the camera back towards the marker, `y` lateral, `z` marker
    /// height minus camera height.
    pub fn relative_marker(&self, k: usize) -> Option<[f64; 3]> {
        let cfg = &self.config;
        let cur = &self.footfalls[k];
        let prev = &self.footfalls[k.checked_sub(1)?];
        let cam = cur.camera_position(cfg.foot_length, cfg.camera_height);
        let marker = [prev.tip[0], prev.tip[1], cfg.marker_height + cur.observed_marker_elevation];
        let rel = [marker[0] - cam[0], marker[1] - cam[1], marker[2] - cam[2]];
        let ex = [-cur.heading[0], -cur.heading[1]];
        let ey = [-ex[1], ex[0]];
        Some([rel[0] * ex[0] + rel[1] * ex[1], rel[0] * ey[0] + rel[1] * ey[1], rel[2]])
    }

    /// Marker position of `foot` at time `t`: at the toe of its latest
    /// footfall while standing, interpolated between toes while swinging.
    pub fn marker_position(&self, foot: Foot, t: f64) -> Option<[f64; 3]> {
        let own: Vec<&Footfall> = self.footfalls.iter().filter(|f| f.foot == foot).collect();
        let h = self.config.marker_height;
        let at = |f: &Footfall| [f.tip[0], f.tip[1], h];
        let first = own.first()?;
        if t < first.heel_strike_t {
            return None;
        }
        for w in own.windows(2) {
            let (a, b) = (w[0], w[1]);
            if t < a.lift_t {
                return Some(at(a));
            }
            if t < b.heel_strike_t {
                let u = (t - a.lift_t) / (b.heel_strike_t - a.lift_t);
                let (pa, pb) = (at(a), at(b));
                return Some([pa[0] + u * (pb[0] - pa[0]), pa[1] + u * (pb[1] - pa[1]), h]);
            }
        }
        own.last().map(|f| at(f))
    }

    pub fn true_events(&self) -> Vec<FootfallEvent> {
        let mut ev = Vec::new();
        for f in &self.footfalls {
            ev.push(FootfallEvent::heel_strike(f.foot, f.heel_strike_t));
            ev.push(FootfallEvent::lift(f.foot, f.lift_t));
        }
        crate::temporal::sort_events(&mut ev);
        ev
    }
}

/// Generates a walk along the configured route.
///
/// The first footfall is a left heel strike at arc length 0. Each later heel
/// lands `gait_length + foot_length / 2` further along the route, so the
/// walkway distance from the striking foot's mid-foot camera to the other
/// toe equals the drawn gait length.
pub fn simulate_walk(cfg: &WalkerConfig) -> Result<WalkTrace, SimError> {
    cfg.validate()?;
    let route = Route::new(&cfg.route, cfg.corner_radius)?;
    if route.length() < cfg.gait_length_mean + 0.5 * cfg.foot_length {
        return Err(SimError::Argument(format!(
            "route length {:.3} m is shorter than one step",
            route.length()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let a = &cfg.asymmetry;
    let period = cfg.fsr_period_s;
    let ticks = |s: f64| (s / period).round() as i64;
    let tick_time = |i: i64| quantize_us(i as f64 * period);

    struct Draw {
        foot: Foot,
        arc: f64,
        width: f64,
        elevation: f64,
        tick: i64,
    }
    let mut draws: Vec<Draw> = Vec::new();
    let mut arc = 0.0;
    let mut tick = ticks(cfg.first_strike_s);
    let mut foot = Foot::Left;
    loop {
        let width = truncated_normal(&mut rng, cfg.gait_width_mean * Asymmetry::factor(a.gait_width, foot), cfg.gait_width_sd);
        let elevation = truncated_normal(
            &mut rng,
            cfg.gait_height_mean * Asymmetry::factor(a.gait_height, foot),
            cfg.gait_height_sd,
        );
        let length = truncated_normal(
            &mut rng,
            cfg.gait_length_mean * Asymmetry::factor(a.gait_length, foot),
            cfg.gait_length_sd,
        );
        let stride = truncated_normal(
            &mut rng,
            cfg.stride_time_mean * Asymmetry::factor(a.stride_time, foot),
            cfg.stride_time_sd,
        );
        if !draws.is_empty() {
            arc += length + 0.5 * cfg.foot_length;
            tick += ticks(0.5 * stride).max(1);
        }
        if arc > route.length() || reached_cap(cfg.max_steps, draws.len()) {
            break;
        }
        draws.push(Draw {
            foot,
            arc,
            width: width.max(0.0),
            elevation,
            tick,
        });
        foot = foot.opposite();
    }
    if draws.len() < 2 {
        return Err(SimError::Argument("route admits fewer than two footfalls".into()));
    }

    let mean_stride = ticks(cfg.stride_time_mean).max(2);
    let n = draws.len();
    let mut footfalls = Vec::with_capacity(n);
    for (k, d) in draws.iter().enumerate() {
        let next2 = draws.get(k + 2).map(|x| x.tick).unwrap_or(d.tick + mean_stride);
        let standing = ((cfg.standing_fraction * (next2 - d.tick) as f64).round() as i64).clamp(1, next2 - d.tick - 1);
        let (pos, heading) = route.pose(d.arc);
        let side = if d.foot == Foot::Left { 1.0 } else { -1.0 };
        let normal = [-heading[1], heading[0]];
        let heel = [
            pos[0] + side * 0.5 * d.width * normal[0],
            pos[1] + side * 0.5 * d.width * normal[1],
            0.0,
        ];
        let tip = [
            heel[0] + cfg.foot_length * heading[0],
            heel[1] + cfg.foot_length * heading[1],
            0.0,
        ];
        footfalls.push(Footfall {
            index: k,
            foot: d.foot,
            arc: d.arc,
            heading,
            heel,
            tip,
            heel_strike_t: tick_time(d.tick),
            lift_t: tick_time(d.tick + standing),
            observed_marker_elevation: d.elevation,
        });
    }
    let end_t = tick_time(draws[n - 1].tick + ticks(cfg.tail_s));
    let mut trace = WalkTrace {
        config: cfg.clone(),
        footfalls,
        true_steps: Vec::new(),
        end_t,
    };
    trace.true_steps = true_records(&trace)?;
    Ok(trace)
}

/// Ground-truth step records from the generated geometry and timing.
fn true_records(trace: &WalkTrace) -> Result<Vec<StepRecord>, SimError> {
    let analysis = temporal_params(&trace.true_events()).map_err(|e| SimError::Argument(e.to_string()))?;
    let mut records: Vec<StepRecord> = analysis.steps.iter().map(StepRecord::from_temporal).collect();
    for (k, rec) in records.iter_mut().enumerate() {
        if let Some(rel) = trace.relative_marker(k) {
            rec.gait_length = Some(rel[0]);
            rec.gait_width = Some(rel[1].abs());
            rec.gait_height = Some(trace.footfalls[k].observed_marker_elevation);
        }
    }
    complete_strides(&mut records, trace.config.foot_length);
    Ok(records)
}
