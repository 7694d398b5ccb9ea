use std::fmt::Write as _;
use std::path::Path;

use super::{GaitReport, Parameter, PipelineError};
use crate::formats::write_atomic;
use crate::spatial_stats::records_to_csv;

pub const REPORT_TEXT: &str = "report.txt";
pub const REPORT_JSON: &str = "report.json";
pub const STEPS_CSV: &str = "steps.csv";

fn cell(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.digits$}"))
}

impl GaitReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialises");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let w = &mut out;
        writeln!(w, "GAIT REPORT").unwrap();
        writeln!(w, "accuracy = 100 * (1 - mean|measured - truth| / mean(truth))").unwrap();
        writeln!(w).unwrap();
        writeln!(
            w,
            "{:>4} {:>5} {:>10} {:>8} {:>8} {:>8} {:>8} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7}",
            "step", "foot", "t(s)", "len(m)", "wid(m)", "hgt(m)", "strd(m)", "step", "stride", "swing", "stand", "single", "double", "v(m/s)"
        )
        .unwrap();
        for r in &self.steps {
            writeln!(
                w,
                "{:>4} {:>5} {:>10.6} {:>8} {:>8} {:>8} {:>8} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7}{}",
                r.step_index,
                r.foot.as_str(),
                r.t,
                cell(r.gait_length, 4),
                cell(r.gait_width, 4),
                cell(r.gait_height, 4),
                cell(r.stride_length, 4),
                cell(r.step_time, 3),
                cell(r.stride_time, 3),
                cell(r.swing_time, 3),
                cell(r.standing_time, 3),
                cell(r.single_support, 3),
                cell(r.double_support, 3),
                cell(r.stride_velocity, 3),
                if self.spatial_absent.contains(&r.step_index) { "  *" } else { "" }
            )
            .unwrap();
        }
        if !self.spatial_absent.is_empty() {
            writeln!(w, "* marker not detected; spatial values absent").unwrap();
        }
        writeln!(w).unwrap();
        writeln!(w, "SUMMARY").unwrap();
        writeln!(w, "  number of steps            {}", self.summary.n_steps).unwrap();
        writeln!(w, "  cadence (steps/min)        {}", cell(self.summary.cadence, 3)).unwrap();
        writeln!(w, "  ambulation time (s)        {:.6}", self.summary.ambulation_time).unwrap();
        writeln!(w, "  gait variation length (%)  {}", cell(self.variation.gait_length, 3)).unwrap();
        writeln!(w, "  gait variation velocity (%) {}", cell(self.variation.stride_velocity, 3)).unwrap();
        writeln!(w, "  gait symmetry length (%)   {}", cell(self.symmetry.gait_length, 3)).unwrap();
        writeln!(w, "  gait symmetry velocity (%) {}", cell(self.symmetry.stride_velocity, 3)).unwrap();
        let absent: Vec<String> = self.spatial_absent.iter().map(|i| i.to_string()).collect();
        writeln!(
            w,
            "  spatial-absent steps       {}",
            if absent.is_empty() { "none".to_string() } else { absent.join(", ") }
        )
        .unwrap();
        if !self.warnings.is_empty() {
            writeln!(w).unwrap();
            writeln!(w, "WARNINGS").unwrap();
            for msg in &self.warnings {
                writeln!(w, "  {msg}").unwrap();
            }
        }
        if let Some(acc) = &self.accuracy {
            writeln!(w).unwrap();
            writeln!(w, "ACCURACY").unwrap();
            writeln!(w, "  {:<27} {:>9} {:>12} {:>12} {:>5}", "parameter", "acc(%)", "mean |err|", "mean truth", "n").unwrap();
            for e in &acc.entries {
                writeln!(
                    w,
                    "  {:<27} {:>9} {:>12} {:>12} {:>5}",
                    format!("{} ({})", e.parameter.name(), e.parameter.unit()),
                    cell(e.accuracy, 3),
                    cell(e.mean_abs_error, 6),
                    cell(e.mean_truth, 6),
                    e.n
                )
                .unwrap();
            }
        }
        out
    }

    pub fn accuracy_of(&self, p: Parameter) -> Option<f64> {
        self.accuracy.as_ref()?.get(p)?.accuracy
    }
}

/// Writes the text table, the JSON report and the step CSV into `dir`.
pub fn write_report(dir: &Path, report: &GaitReport) -> Result<(), PipelineError> {
    std::fs::create_dir_all(dir).map_err(|e| crate::formats::FormatError::io(dir, e))?;
    write_atomic(&dir.join(REPORT_TEXT), &report.to_text())?;
    write_atomic(&dir.join(REPORT_JSON), &report.to_json())?;
    write_atomic(&dir.join(STEPS_CSV), &records_to_csv(&report.steps))?;
    Ok(())
}
