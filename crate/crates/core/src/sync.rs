//! Clock relationship between the two wearables: offset estimation over a
//! simulated request/response exchange and merging of the two event streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::temporal::{sort_events, EventKind, Foot, FootfallEvent};

/// Round-trip latency measured on the reference hardware, seconds.
pub const DEFAULT_RTT_S: f64 = 0.004169;

#[derive(Debug, Error, PartialEq)]
pub enum SyncError {
    #[error("{0}")]
    Argument(String),
    #[error("alignment failure: {0}")]
    AlignmentFailure(String),
}

/// Device clock relative to the reference: `local = t + offset + drift_rate * t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClockModel {
    pub offset: f64,
    pub drift_rate: f64,
    pub jitter_sigma: f64,
}

impl Default for ClockModel {
    fn default() -> Self {
        Self {
            offset: 0.0,
            drift_rate: 0.0,
            jitter_sigma: 0.0,
        }
    }
}

impl ClockModel {
    pub fn local_time(&self, t: f64) -> f64 {
        t + self.offset + self.drift_rate * t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExchangeConfig {
    pub rtt_mean_s: f64,
    pub probe_spacing_s: f64,
    /// Floor for a single one-way delay (never above half the mean RTT).
    pub min_one_way_s: f64,
}

impl Default for ExchangeConfig {
    fn default() -> Self {
        Self {
            rtt_mean_s: DEFAULT_RTT_S,
            probe_spacing_s: 0.125,
            min_one_way_s: 50e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyncEstimate {
    pub offset_estimate: f64,
    pub rtt_samples: Vec<f64>,
}

impl SyncEstimate {
    /// An estimate that leaves timestamps unchanged.
    pub fn zero() -> Self {
        Self {
            offset_estimate: 0.0,
            rtt_samples: Vec::new(),
        }
    }

    pub fn exact(offset: f64) -> Self {
        Self {
            offset_estimate: offset,
            rtt_samples: Vec::new(),
        }
    }
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn estimate_offset(client: &ClockModel, n_probes: usize, seed: u64) -> SyncEstimate {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    estimate_offset_with(client, n_probes, &ExchangeConfig::default(), &mut rng)
}

/// Simulates `n_probes` exchanges against the reference clock.
///
/// Each probe records the client send/receive stamps and the server's
/// receive/reply stamps; the per-probe offset is the client midpoint minus
/// the server midpoint, and the estimate is the median over probes.
pub fn estimate_offset_with<R: rand::Rng>(
    client: &ClockModel,
    n_probes: usize,
    cfg: &ExchangeConfig,
    rng: &mut R,
) -> SyncEstimate {
    let n = n_probes.max(1);
    let half = 0.5 * cfg.rtt_mean_s;
    let floor = cfg.min_one_way_s.min(half);
    let jitter = Normal::new(0.0, client.jitter_sigma.max(0.0)).expect("finite sigma");
    let mut delay = || {
        let d = if client.jitter_sigma > 0.0 {
            half + jitter.sample(rng)
        } else {
            half
        };
        d.max(floor)
    };
    let mut offsets = Vec::with_capacity(n);
    let mut rtts = Vec::with_capacity(n);
    for k in 0..n {
        let t0 = k as f64 * cfg.probe_spacing_s;
        let up = delay();
        let down = delay();
        let client_send = client.local_time(t0);
        let server_stamp = t0 + up;
        let client_recv = client.local_time(t0 + up + down);
        offsets.push(((client_send - server_stamp) + (client_recv - server_stamp)) * 0.5);
        rtts.push(up + down);
    }
    SyncEstimate {
        offset_estimate: median(&offsets),
        rtt_samples: rtts,
    }
}

fn check_foot(events: &[FootfallEvent], foot: Foot) -> Result<(), SyncError> {
    match events.iter().position(|e| e.foot != foot) {
        Some(i) => Err(SyncError::Argument(format!("{foot} stream contains a {} event at index {i}", events[i].foot))),
        None => Ok(()),
    }
}

/// Maps both device streams onto the reference clock and merges them.
pub fn align_streams(
    left: &[FootfallEvent],
    right: &[FootfallEvent],
    left_est: &SyncEstimate,
    right_est: &SyncEstimate,
) -> Result<Vec<FootfallEvent>, SyncError> {
    check_foot(left, Foot::Left)?;
    check_foot(right, Foot::Right)?;
    let shift = |events: &[FootfallEvent], est: &SyncEstimate| {
        events
            .iter()
            .map(|e| FootfallEvent {
                t: e.t - est.offset_estimate,
                ..*e
            })
            .collect::<Vec<_>>()
    };
    let mut merged = shift(left, left_est);
    merged.extend(shift(right, right_est));
    sort_events(&mut merged);
    validate_interleaving(&merged)?;
    Ok(merged)
}

/// Checks the ordering the temporal analysis relies on.
pub fn validate_interleaving(events: &[FootfallEvent]) -> Result<(), SyncError> {
    let mut last_t = [f64::NEG_INFINITY; 2];
    let mut open = [false; 2];
    let mut last_strike: Option<Foot> = None;
    for (i, e) in events.iter().enumerate() {
        let s = e.foot as usize;
        if e.t < 0.0 {
            return Err(SyncError::AlignmentFailure(format!("event {i} maps to negative time {}", e.t)));
        }
        if e.t <= last_t[s] {
            return Err(SyncError::AlignmentFailure(format!("{} events not increasing at index {i}", e.foot)));
        }
        last_t[s] = e.t;
        match e.kind {
            EventKind::HeelStrike => {
                if last_strike == Some(e.foot) {
                    return Err(SyncError::AlignmentFailure(format!(
                        "heel strikes no longer alternate at index {i} ({} twice)",
                        e.foot
                    )));
                }
                last_strike = Some(e.foot);
                open[s] = true;
            }
            EventKind::Lift => {
                if !open[s] {
                    return Err(SyncError::AlignmentFailure(format!("{} lift without heel strike at index {i}", e.foot)));
                }
                open[s] = false;
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceSync {
    pub device: String,
    pub offset_estimate: f64,
    pub rtt_min: f64,
    pub rtt_median: f64,
    pub rtt_max: f64,
    pub n_probes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyncReport {
    pub devices: Vec<DeviceSync>,
}

impl SyncReport {
    pub fn new(devices: &[(&str, &SyncEstimate)]) -> Self {
        let devices = devices
            .iter()
            .map(|(name, est)| {
                let r = &est.rtt_samples;
                let (min, med, max) = if r.is_empty() {
                    (0.0, 0.0, 0.0)
                } else {
                    (
                        r.iter().copied().fold(f64::INFINITY, f64::min),
                        median(r),
                        r.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                    )
                };
                DeviceSync {
                    device: name.to_string(),
                    offset_estimate: est.offset_estimate,
                    rtt_min: min,
                    rtt_median: med,
                    rtt_max: max,
                    n_probes: r.len(),
                }
            })
            .collect();
        Self { devices }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("sync report serialises")
    }
}
