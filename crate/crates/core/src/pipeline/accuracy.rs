use serde::{Deserialize, Serialize};

use super::{series_symmetry, GaitReport, PipelineError};
use crate::spatial_stats::{coefficient_of_variation, StepRecord};

/// Absolute errors at or below this are treated as exact.
pub const RESOLUTION: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parameter {
    GaitLength,
    GaitWidth,
    GaitHeight,
    StrideLength,
    NumberOfSteps,
    Cadence,
    StepTime,
    StrideTime,
    SwingTime,
    StandingTime,
    SingleSupport,
    DoubleSupport,
    GaitCycleTime,
    AmbulationTime,
    StrideVelocity,
    LengthVariation,
    VelocityVariation,
    LengthSymmetry,
    VelocitySymmetry,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParameterKind {
    /// One value per step.
    Step,
    /// One value per walk.
    Walk,
    /// One value per group of walks (variation and symmetry).
    Group,
}

impl Parameter {
    pub const ALL: [Parameter; 19] = [
        Parameter::GaitLength,
        Parameter::GaitWidth,
        Parameter::GaitHeight,
        Parameter::StrideLength,
        Parameter::NumberOfSteps,
        Parameter::Cadence,
        Parameter::StepTime,
        Parameter::StrideTime,
        Parameter::SwingTime,
        Parameter::StandingTime,
        Parameter::SingleSupport,
        Parameter::DoubleSupport,
        Parameter::GaitCycleTime,
        Parameter::AmbulationTime,
        Parameter::StrideVelocity,
        Parameter::LengthVariation,
        Parameter::VelocityVariation,
        Parameter::LengthSymmetry,
        Parameter::VelocitySymmetry,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Parameter::GaitLength => "gait length",
            Parameter::GaitWidth => "gait width",
            Parameter::GaitHeight => "gait height",
            Parameter::StrideLength => "stride length",
            Parameter::NumberOfSteps => "number of steps",
            Parameter::Cadence => "cadence",
            Parameter::StepTime => "step time",
            Parameter::StrideTime => "stride time",
            Parameter::SwingTime => "swing time",
            Parameter::StandingTime => "standing time",
            Parameter::SingleSupport => "single support",
            Parameter::DoubleSupport => "double support",
            Parameter::GaitCycleTime => "gait cycle time",
            Parameter::AmbulationTime => "ambulation time",
            Parameter::StrideVelocity => "stride velocity",
            Parameter::LengthVariation => "gait variation (length)",
            Parameter::VelocityVariation => "gait variation (velocity)",
            Parameter::LengthSymmetry => "gait symmetry (length)",
            Parameter::VelocitySymmetry => "gait symmetry (velocity)",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            Parameter::GaitLength | Parameter::GaitWidth | Parameter::GaitHeight | Parameter::StrideLength => "m",
            Parameter::NumberOfSteps => "steps",
            Parameter::Cadence => "steps/min",
            Parameter::StrideVelocity => "m/s",
            Parameter::LengthVariation
            | Parameter::VelocityVariation
            | Parameter::LengthSymmetry
            | Parameter::VelocitySymmetry => "%",
            _ => "s",
        }
    }

    pub fn kind(self) -> ParameterKind {
        match self {
            Parameter::NumberOfSteps | Parameter::Cadence | Parameter::AmbulationTime => ParameterKind::Walk,
            Parameter::LengthVariation
            | Parameter::VelocityVariation
            | Parameter::LengthSymmetry
            | Parameter::VelocitySymmetry => ParameterKind::Group,
            _ => ParameterKind::Step,
        }
    }

    pub fn step_value(self, r: &StepRecord) -> Option<f64> {
        match self {
            Parameter::GaitLength => r.gait_length,
            Parameter::GaitWidth => r.gait_width,
            Parameter::GaitHeight => r.gait_height,
            Parameter::StrideLength => r.stride_length,
            Parameter::StepTime => r.step_time,
            Parameter::StrideTime => r.stride_time,
            Parameter::SwingTime => r.swing_time,
            Parameter::StandingTime => r.standing_time,
            Parameter::SingleSupport => r.single_support,
            Parameter::DoubleSupport => r.double_support,
            Parameter::GaitCycleTime => r.gait_cycle_time(),
            Parameter::StrideVelocity => r.stride_velocity,
            _ => None,
        }
    }

    /// Value of the parameter for a whole report.
    pub fn report_value(self, r: &GaitReport) -> Option<f64> {
        match self {
            Parameter::NumberOfSteps => Some(r.summary.n_steps as f64),
            Parameter::Cadence => r.summary.cadence,
            Parameter::AmbulationTime => Some(r.summary.ambulation_time),
            Parameter::LengthVariation => r.variation.gait_length,
            Parameter::VelocityVariation => r.variation.stride_velocity,
            Parameter::LengthSymmetry => r.symmetry.gait_length,
            Parameter::VelocitySymmetry => r.symmetry.stride_velocity,
            _ => None,
        }
    }

    /// Value over a group of reports: %CV of the pooled steps, or the mean
    /// symmetry over all consecutive opposite-foot pairs.
    fn group_value(self, reports: &[&GaitReport]) -> Option<f64> {
        let pooled = |p: Parameter| -> Vec<f64> {
            reports.iter().flat_map(|r| r.steps.iter().filter_map(move |s| p.step_value(s))).collect()
        };
        let pairs = |p: Parameter| -> Vec<f64> {
            reports.iter().flat_map(|r| series_symmetry(&r.steps, |s| p.step_value(s))).collect()
        };
        let mean = |xs: Vec<f64>| (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64);
        match self {
            Parameter::LengthVariation => coefficient_of_variation(&pooled(Parameter::GaitLength)).ok(),
            Parameter::VelocityVariation => coefficient_of_variation(&pooled(Parameter::StrideVelocity)).ok(),
            Parameter::LengthSymmetry => mean(pairs(Parameter::GaitLength)),
            Parameter::VelocitySymmetry => mean(pairs(Parameter::StrideVelocity)),
            _ => None,
        }
    }
}

/// `100 * (1 - mean|m - t| / mean(t))` over `(measured, truth)` pairs.
///
/// `None` when there are no pairs or the mean truth is not positive.
pub fn accuracy_percent(pairs: &[(f64, f64)]) -> Option<f64> {
    if pairs.is_empty() {
        return None;
    }
    let n = pairs.len() as f64;
    let err = pairs
        .iter()
        .map(|&(m, t)| {
            let e = (m - t).abs();
            if e <= RESOLUTION {
                0.0
            } else {
                e
            }
        })
        .sum::<f64>()
        / n;
    let truth = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    (truth > 0.0).then(|| 100.0 * (1.0 - err / truth))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyEntry {
    pub parameter: Parameter,
    pub accuracy: Option<f64>,
    pub mean_abs_error: Option<f64>,
    pub mean_truth: Option<f64>,
    pub n: usize,
}

impl AccuracyEntry {
    fn from_pairs(parameter: Parameter, pairs: &[(f64, f64)]) -> Self {
        let n = pairs.len();
        let mean = |f: &dyn Fn(&(f64, f64)) -> f64| (n > 0).then(|| pairs.iter().map(f).sum::<f64>() / n as f64);
        Self {
            parameter,
            accuracy: accuracy_percent(pairs),
            mean_abs_error: mean(&|p| (p.0 - p.1).abs()),
            mean_truth: mean(&|p| p.1),
            n,
        }
    }
}

/// Measured and ground-truth reports that share variation and symmetry
/// statistics, for example all walks of one participant.
pub struct Group<'a> {
    pub measured: Vec<&'a GaitReport>,
    pub truth: Vec<&'a GaitReport>,
}

impl<'a> Group<'a> {
    pub fn single(measured: &'a GaitReport, truth: &'a GaitReport) -> Self {
        Self {
            measured: vec![measured],
            truth: vec![truth],
        }
    }
}

/// Pairs each measured step with the truth step of the same foot closest in time.
pub fn match_steps<'a>(measured: &'a [StepRecord], truth: &'a [StepRecord]) -> Vec<(&'a StepRecord, &'a StepRecord)> {
    const MAX_GAP_S: f64 = 0.1;
    let mut out = Vec::with_capacity(measured.len());
    let mut j = 0;
    for m in measured {
        while j < truth.len() && truth[j].t < m.t - MAX_GAP_S {
            j += 1;
        }
        let best = truth[j..]
            .iter()
            .take_while(|t| t.t <= m.t + MAX_GAP_S)
            .filter(|t| t.foot == m.foot)
            .min_by(|a, b| (a.t - m.t).abs().total_cmp(&(b.t - m.t).abs()));
        if let Some(t) = best {
            out.push((m, t));
        }
    }
    out
}

fn step_pairs(p: Parameter, matched: &[(&StepRecord, &StepRecord)]) -> Vec<(f64, f64)> {
    matched
        .iter()
        .filter_map(|(m, t)| Some((p.step_value(m)?, p.step_value(t)?)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyTable {
    pub entries: Vec<AccuracyEntry>,
}

impl AccuracyTable {
    /// Accuracy of every parameter pooled over all groups.
    pub fn compare(groups: &[Group]) -> Self {
        let mut matched = Vec::new();
        let mut walks = Vec::new();
        for g in groups {
            for (m, t) in g.measured.iter().zip(&g.truth) {
                matched.extend(match_steps(&m.steps, &t.steps));
                walks.push((*m, *t));
            }
        }
        let entries = Parameter::ALL
            .iter()
            .map(|&p| {
                let pairs: Vec<(f64, f64)> = match p.kind() {
                    ParameterKind::Step => step_pairs(p, &matched),
                    ParameterKind::Walk => walks
                        .iter()
                        .filter_map(|(m, t)| Some((p.report_value(m)?, p.report_value(t)?)))
                        .collect(),
                    ParameterKind::Group => groups
                        .iter()
                        .filter_map(|g| Some((p.group_value(&g.measured)?, p.group_value(&g.truth)?)))
                        .collect(),
                };
                AccuracyEntry::from_pairs(p, &pairs)
            })
            .collect();
        Self { entries }
    }

    pub fn get(&self, p: Parameter) -> Option<&AccuracyEntry> {
        self.entries.iter().find(|e| e.parameter == p)
    }

    /// Lowest accuracy and the parameter it belongs to.
    pub fn worst(&self) -> Option<(Parameter, f64)> {
        self.entries
            .iter()
            .filter_map(|e| Some((e.parameter, e.accuracy?)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftEntry {
    pub parameter: Parameter,
    pub start: Option<f64>,
    pub end: Option<f64>,
    /// `end - start`.
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub window: usize,
    pub n_steps: usize,
    pub entries: Vec<DriftEntry>,
    /// Mean of `|delta|` over parameters with both windows defined.
    pub mean_drift: f64,
    /// Mean per-step accuracy over consecutive disjoint windows.
    pub window_accuracy: Vec<f64>,
}

impl DriftReport {
    /// Least-squares slope of `window_accuracy` per window.
    pub fn trend(&self) -> f64 {
        let y = &self.window_accuracy;
        let n = y.len() as f64;
        if y.len() < 2 {
            return 0.0;
        }
        let xm = (n - 1.0) / 2.0;
        let ym = y.iter().sum::<f64>() / n;
        let (mut sxy, mut sxx) = (0.0, 0.0);
        for (i, v) in y.iter().enumerate() {
            let dx = i as f64 - xm;
            sxy += dx * (v - ym);
            sxx += dx * dx;
        }
        sxy / sxx
    }

    /// Mann-Kendall trend statistic of `window_accuracy` (normal
    /// approximation, no tie correction); negative for a falling series.
    pub fn trend_z(&self) -> f64 {
        let y = &self.window_accuracy;
        let n = y.len() as f64;
        let mut s = 0.0;
        for i in 0..y.len() {
            for j in i + 1..y.len() {
                s += (y[j] - y[i]).signum() * f64::from(u8::from(y[j] != y[i]));
            }
        }
        let var = n * (n - 1.0) * (2.0 * n + 5.0) / 18.0;
        if var == 0.0 {
            return 0.0;
        }
        if s > 0.0 {
            (s - 1.0) / var.sqrt()
        } else if s < 0.0 {
            (s + 1.0) / var.sqrt()
        } else {
            0.0
        }
    }

    /// A monotone decline significant at the 5% level.
    pub fn detects_decline(&self) -> bool {
        self.trend_z() < -1.96 && self.window_accuracy.last() < self.window_accuracy.first()
    }
}

fn per_step_parameters() -> impl Iterator<Item = Parameter> {
    Parameter::ALL.into_iter().filter(|p| p.kind() == ParameterKind::Step)
}

fn mean_step_accuracy(matched: &[(&StepRecord, &StepRecord)]) -> f64 {
    let accs: Vec<f64> = per_step_parameters()
        .filter_map(|p| accuracy_percent(&step_pairs(p, matched)))
        .collect();
    accs.iter().sum::<f64>() / accs.len().max(1) as f64
}

/// Per-step parameter accuracy over the first and last `k` steps of a walk.
pub fn drift_study(measured: &GaitReport, truth: &GaitReport, k: usize) -> Result<DriftReport, PipelineError> {
    let n = measured.steps.len();
    if k == 0 {
        return Err(PipelineError::Argument("drift window must be at least one step".into()));
    }
    if n < 2 * k + 20 {
        return Err(PipelineError::Argument(format!(
            "walk of {n} steps is too short for a drift window of {k} (need at least {})",
            2 * k + 20
        )));
    }
    let matched = match_steps(&measured.steps, &truth.steps);
    let in_range = |lo: usize, hi: usize| -> Vec<(&StepRecord, &StepRecord)> {
        matched
            .iter()
            .filter(|(m, _)| (lo..hi).contains(&m.step_index))
            .copied()
            .collect()
    };
    let first = measured.steps[0].step_index;
    let start = in_range(first, first + k);
    let end = in_range(first + n - k, first + n);
    let entries: Vec<DriftEntry> = per_step_parameters()
        .map(|p| {
            let s = accuracy_percent(&step_pairs(p, &start));
            let e = accuracy_percent(&step_pairs(p, &end));
            DriftEntry {
                parameter: p,
                start: s,
                end: e,
                delta: s.zip(e).map(|(s, e)| e - s),
            }
        })
        .collect();
    let deltas: Vec<f64> = entries.iter().filter_map(|e| e.delta).collect();
    let mean_drift = deltas.iter().map(|d| d.abs()).sum::<f64>() / deltas.len().max(1) as f64;
    let window_accuracy = (0..n / k)
        .map(|w| mean_step_accuracy(&in_range(first + w * k, first + (w + 1) * k)))
        .collect();
    Ok(DriftReport {
        window: k,
        n_steps: n,
        entries,
        mean_drift,
        window_accuracy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accuracy_formula() {
        // errors 0.1 and 0.3 on truths 1 and 3: 100 * (1 - 0.2 / 2) = 90.
        let a = accuracy_percent(&[(1.1, 1.0), (2.7, 3.0)]).unwrap();
        assert!((a - 90.0).abs() < 1e-12);
        assert_eq!(accuracy_percent(&[(1.0 + 1e-12, 1.0)]), Some(100.0));
        assert_eq!(accuracy_percent(&[]), None);
        assert_eq!(accuracy_percent(&[(0.1, 0.0)]), None);
    }

    #[test]
    fn every_table_parameter_is_enumerated() {
        let names: Vec<&str> = Parameter::ALL.iter().map(|p| p.name()).collect();
        for expected in [
            "gait length",
            "gait width",
            "gait height",
            "stride length",
            "number of steps",
            "cadence",
            "step time",
            "stride time",
            "swing time",
            "standing time",
            "single support",
            "double support",
            "gait cycle time",
            "ambulation time",
            "stride velocity",
            "gait variation (length)",
            "gait variation (velocity)",
            "gait symmetry (length)",
            "gait symmetry (velocity)",
        ] {
            assert!(names.contains(&expected), "{expected}");
        }
        // Variation and symmetry each cover two series: 15 + 2 = 17 parameters.
        let distinct = Parameter::ALL
            .iter()
            .map(|p| p.name().split(" (").next().unwrap())
            .collect::<std::collections::BTreeSet<_>>();
        assert_eq!(distinct.len(), 17);
    }

    fn rec(i: usize, t: f64, g: f64) -> StepRecord {
        StepRecord {
            step_index: i,
            foot: if i % 2 == 0 { crate::temporal::Foot::Left } else { crate::temporal::Foot::Right },
            t,
            gait_length: Some(g),
            gait_width: None,
            gait_height: None,
            stride_length: None,
            step_time: None,
            stride_time: None,
            swing_time: None,
            standing_time: None,
            single_support: None,
            double_support: None,
            stride_velocity: None,
        }
    }

    #[test]
    fn steps_match_by_foot_and_time() {
        let truth: Vec<StepRecord> = (0..6).map(|i| rec(i, i as f64 * 0.5, 0.6)).collect();
        // Measured walk missing one step; a nearby step of the wrong foot must not match.
        let measured = vec![rec(0, 0.001, 0.6), rec(1, 1.0, 0.6), rec(3, 1.5, 0.6)];
        let m = match_steps(&measured, &truth);
        assert_eq!(m.len(), 2);
        assert_eq!(m[0].1.step_index, 0);
        assert_eq!(m[1].1.step_index, 3);
    }

    #[test]
    fn drift_rejects_short_walks() {
        let steps: Vec<StepRecord> = (0..39).map(|i| rec(i, i as f64 * 0.5, 0.6)).collect();
        let r = GaitReport::from_records(steps, crate::temporal::WalkSummary::from_strikes(&[]));
        assert!(matches!(drift_study(&r, &r, 10), Err(PipelineError::Argument(_))));
        let steps: Vec<StepRecord> = (0..40).map(|i| rec(i, i as f64 * 0.5, 0.6)).collect();
        let r = GaitReport::from_records(steps, crate::temporal::WalkSummary::from_strikes(&[]));
        let d = drift_study(&r, &r, 10).unwrap();
        assert_eq!(d.mean_drift, 0.0);
        assert_eq!(d.window_accuracy, vec![100.0; 4]);
        assert_eq!(d.trend_z(), 0.0);
        assert!(!d.detects_decline());
    }

    #[test]
    fn mann_kendall_statistic() {
        let mk = |y: Vec<f64>| DriftReport {
            window: 1,
            n_steps: y.len(),
            entries: Vec::new(),
            mean_drift: 0.0,
            window_accuracy: y,
        };
        // Strictly falling series of 10: S = -45, var = 10*9*25/18 = 125.
        let d = mk((0..10).map(|i| 100.0 - i as f64).collect());
        assert!((d.trend_z() - (-44.0 / 125f64.sqrt())).abs() < 1e-12);
        assert!(d.detects_decline());
        let d = mk(vec![1.0, 3.0, 2.0, 4.0]);
        assert!(d.trend_z() > 0.0);
        assert!(!d.detects_decline());
    }
}
