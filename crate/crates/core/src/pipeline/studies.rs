use super::{drift_study, run_simulated, AccuracyTable, DriftReport, GaitReport, Group, PipelineError, SimulatedRun};
use crate::geometry::Calibration;
use crate::simulator::{loop_waypoints, NoiseModel, WalkerConfig};
use crate::spatial_stats::{RigConfig, StepRecord};
use crate::temporal::TemporalConfig;

/// One trial of a corpus.
#[derive(Debug, Clone)]
pub struct Trial {
    pub participant: String,
    pub walker: WalkerConfig,
    pub seed: u64,
}

/// Straight-walkway trials cycling through the personas until exactly
/// `total_steps` footfalls are scheduled; the last trial is cut short.
pub fn corpus_trials(total_steps: usize, seed: u64) -> Vec<Trial> {
    let personas = WalkerConfig::personas();
    let mut trials = Vec::new();
    let mut scheduled = 0;
    let mut i = 0u64;
    while scheduled < total_steps {
        let (name, base) = &personas[i as usize % personas.len()];
        let trial_seed = seed.wrapping_mul(1_000_003).wrapping_add(i);
        let mut walker = WalkerConfig {
            seed: base.seed.wrapping_mul(7919).wrapping_add(trial_seed),
            ..base.clone()
        };
        let n = match crate::simulator::simulate_walk(&walker) {
            Ok(t) => t.footfalls.len(),
            Err(_) => 0,
        };
        let remaining = total_steps - scheduled;
        if n > remaining {
            if remaining < 2 {
                break;
            }
            walker.max_steps = Some(remaining);
        }
        scheduled += n.min(remaining);
        trials.push(Trial {
            participant: name.clone(),
            walker,
            seed: trial_seed,
        });
        i += 1;
    }
    trials
}

pub struct CorpusResult {
    pub runs: Vec<(String, SimulatedRun)>,
    pub table: AccuracyTable,
    pub total_steps: usize,
}

/// Runs every trial and pools accuracy, grouping variation and symmetry by participant.
pub fn accuracy_study(
    trials: &[Trial],
    calib: &Calibration,
    noise: &NoiseModel,
    temporal_cfg: &TemporalConfig,
) -> Result<CorpusResult, PipelineError> {
    let mut runs = Vec::with_capacity(trials.len());
    for t in trials {
        let rig = super::rig_for(&t.walker, calib);
        runs.push((t.participant.clone(), run_simulated(&t.walker, calib, &rig, noise, temporal_cfg, t.seed)?));
    }
    let mut names: Vec<&String> = runs.iter().map(|(n, _)| n).collect();
    names.sort();
    names.dedup();
    let groups: Vec<Group> = names
        .iter()
        .map(|name| {
            let mine: Vec<&SimulatedRun> = runs.iter().filter(|(n, _)| n == *name).map(|(_, r)| r).collect();
            Group {
                measured: mine.iter().map(|r| &r.report).collect(),
                truth: mine.iter().map(|r| &r.truth).collect(),
            }
        })
        .collect();
    let table = AccuracyTable::compare(&groups);
    let total_steps = runs.iter().map(|(_, r)| r.trace.footfalls.len()).sum();
    Ok(CorpusResult {
        runs,
        table,
        total_steps,
    })
}

/// `base` walking exactly `steps` footfalls around the looped route.
pub fn looped(base: &WalkerConfig, steps: usize, seed: u64) -> WalkerConfig {
    let per_lap = 36.0 / (base.gait_length_mean + 0.5 * base.foot_length);
    let laps = (steps as f64 / per_lap).ceil() as usize + 1;
    WalkerConfig {
        route: loop_waypoints(laps),
        max_steps: Some(steps),
        seed,
        ..base.clone()
    }
}

/// Walker for a long walk of exactly `steps` footfalls around the looped route.
pub fn long_walk(steps: usize, seed: u64) -> WalkerConfig {
    looped(&WalkerConfig::default(), steps, seed)
}

/// Labelled walking cycles for identification: the personas take turns
/// walking `cycle_steps` footfalls until `total_steps` are recorded. Records
/// are the measured pipeline output under `noise`.
pub fn ident_cycles(
    total_steps: usize,
    cycle_steps: usize,
    calib: &Calibration,
    noise: &NoiseModel,
    temporal_cfg: &TemporalConfig,
    seed: u64,
) -> Result<Vec<(String, Vec<StepRecord>)>, PipelineError> {
    if cycle_steps < 2 {
        return Err(PipelineError::Argument("cycles need at least two steps".into()));
    }
    let personas = WalkerConfig::personas();
    let n_cycles = total_steps.div_ceil(cycle_steps);
    let mut out = Vec::with_capacity(n_cycles);
    for i in 0..n_cycles as u64 {
        let (name, base) = &personas[i as usize % personas.len()];
        let run_seed = seed.wrapping_mul(1_000_003).wrapping_add(i);
        let walker = looped(base, cycle_steps, base.seed.wrapping_mul(7919).wrapping_add(run_seed));
        let rig = super::rig_for(&walker, calib);
        let run = run_simulated(&walker, calib, &rig, noise, temporal_cfg, run_seed)?;
        out.push((name.clone(), run.report.steps));
    }
    Ok(out)
}

/// Simulates a long walk and compares the first and last `k` steps.
pub fn long_walk_drift(
    steps: usize,
    k: usize,
    calib: &Calibration,
    rig: &RigConfig,
    noise: &NoiseModel,
    temporal_cfg: &TemporalConfig,
    seed: u64,
) -> Result<(DriftReport, GaitReport), PipelineError> {
    let walker = long_walk(steps, seed);
    let run = run_simulated(&walker, calib, rig, noise, temporal_cfg, seed)?;
    let drift = drift_study(&run.report, &run.truth, k)?;
    Ok((drift, run.report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{from_ground, to_ground, WorldPoint};
    use crate::pipeline::rig_for;
    use crate::spatial_stats::{gait_vector, StepObservation};

    #[test]
    fn corpus_has_exact_step_count() {
        let trials = corpus_trials(710, 0);
        let total: usize = trials
            .iter()
            .map(|t| crate::simulator::simulate_walk(&t.walker).unwrap().footfalls.len())
            .sum();
        assert_eq!(total, 710);
        let names: std::collections::BTreeSet<_> = trials.iter().map(|t| t.participant.as_str()).collect();
        assert_eq!(names.len(), 6);
    }

    #[test]
    fn long_walk_has_requested_steps_and_corners() {
        let w = long_walk(120, 5);
        let t = crate::simulator::simulate_walk(&w).unwrap();
        assert_eq!(t.footfalls.len(), 120);
        let turned = t.footfalls.windows(2).any(|p| (p[0].heading[0] - p[1].heading[0]).abs() > 0.1);
        assert!(turned);
    }

    #[test]
    fn noiseless_long_walk_has_zero_drift() {
        let calib = Calibration::reference();
        let rig = rig_for(&WalkerConfig::default(), &calib);
        let (d, _) = long_walk_drift(120, 10, &calib, &rig, &NoiseModel::default(), &TemporalConfig::default(), 2).unwrap();
        assert_eq!(d.mean_drift, 0.0);
        assert!(d.entries.iter().all(|e| e.delta == Some(0.0)));
    }

    #[test]
    fn yaw_drift_shows_monotone_decline() {
        let calib = Calibration::reference();
        let walker = long_walk(120, 7);
        let rig = rig_for(&walker, &calib);
        let noise = NoiseModel {
            yaw_drift_per_step: 1f64.to_radians() / 100.0,
            ..NoiseModel::default()
        };
        let run = run_simulated(&walker, &calib, &rig, &noise, &TemporalConfig::default(), 7).unwrap();
        // Oracle: rotate the true relative marker by the drifted yaw and back by the nominal one.
        for (k, m) in run.report.steps.iter().enumerate().skip(1) {
            let rel = run.trace.relative_marker(k).unwrap();
            let theta = rig.theta + noise.yaw_drift_per_step * k as f64;
            let seen = to_ground(&from_ground(&WorldPoint::ground(rel[0], rel[1], rel[2]), theta), rig.theta);
            let obs = StepObservation {
                step_index: k,
                foot: m.foot,
                marker_ground: seen,
                t: m.t,
            };
            let g = gait_vector(&obs, &rig).unwrap();
            assert!((m.gait_length.unwrap() - g.length).abs() < 1e-6);
            assert!((m.gait_width.unwrap() - g.width).abs() < 1e-6);
        }
        let d = drift_study(&run.report, &run.truth, 10).unwrap();
        assert!(d.detects_decline(), "{:?}", d.window_accuracy);
        assert!(d.mean_drift > 0.0);

        let noisy = NoiseModel {
            yaw_drift_per_step: 1f64.to_radians() / 100.0,
            ..NoiseModel::declared()
        };
        let (d, _) = long_walk_drift(120, 10, &calib, &rig, &noisy, &TemporalConfig::default(), 8).unwrap();
        assert!(d.detects_decline(), "{:?}", d.window_accuracy);
        assert!(d.trend() < 0.0);
    }
}
