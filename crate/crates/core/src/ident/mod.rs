//! Participant identification from gait-feature sequences.

mod checkpoint;
mod model;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use model::{GradCheckReport, GroupCheck, IdentModel, Mode, ModelConfig, ParamGroup, Window, GRAD_CHECK_FLOOR, N_FEATURES};
pub use train::{shuffle_labels, train_kfold, train_model, Adam, FeatureScaler, KFoldReport, TrainConfig};

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formats::{write_atomic, FormatError};
use crate::scalar::Real;
use crate::spatial_stats::{coefficient_of_variation, load_records, records_to_csv, symmetry, StepRecord};
use crate::temporal::Foot;

#[derive(Debug, Error)]
pub enum IdentError {
    #[error("{0}")]
    Argument(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Format(#[from] FormatError),
}

pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "gait_height",
    "gait_width",
    "gait_length",
    "length_symmetry",
    "length_variation",
    "step_time",
    "stride_time",
    "swing_time",
    "double_support",
    "velocity",
];

/// Steps in the trailing window used for the per-step length variation.
pub const VARIATION_SPAN: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct GaitSequence {
    pub features: Vec<[f64; N_FEATURES]>,
    pub label: usize,
}

impl GaitSequence {
    /// Feature rows of a walk. Length symmetry pairs each step with the one
    /// before it; length variation is the %CV over the last
    /// [`VARIATION_SPAN`] gait lengths. Steps lacking any feature are dropped.
    pub fn from_records(records: &[StepRecord], label: usize) -> Self {
        let mut features = Vec::with_capacity(records.len());
        for (k, r) in records.iter().enumerate() {
            let sym = k.checked_sub(1).and_then(|p| {
                let prev = &records[p];
                let (right, left) = if r.foot == Foot::Right { (r, prev) } else { (prev, r) };
                symmetry(right.gait_length?, left.gait_length?).ok()
            });
            let var = (k + 1 >= VARIATION_SPAN)
                .then(|| records[k + 1 - VARIATION_SPAN..=k].iter().map(|s| s.gait_length).collect::<Option<Vec<f64>>>())
                .flatten()
                .and_then(|xs| coefficient_of_variation(&xs).ok());
            let row = [
                r.gait_height,
                r.gait_width,
                r.gait_length,
                sym,
                var,
                r.step_time,
                r.stride_time,
                r.swing_time,
                r.double_support,
                r.stride_velocity,
            ];
            if let Some(vals) = row.iter().copied().collect::<Option<Vec<f64>>>() {
                let mut out = [0.0; N_FEATURES];
                out.copy_from_slice(&vals);
                features.push(out);
            }
        }
        Self { features, label }
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }
}

/// Splits a sequence into windows of `window` steps starting every `stride`
/// steps (`None` for non-overlapping). The final short window is
/// zero-padded and its mask marks the padded positions as `false`.
pub fn segment_with_stride<T: Real>(seq: &GaitSequence, window: usize, stride: Option<usize>) -> Result<Vec<Window<T>>, IdentError> {
    if window == 0 {
        return Err(IdentError::Argument("window must be at least one step".into()));
    }
    if seq.is_empty() {
        return Err(IdentError::Argument("cannot segment an empty sequence".into()));
    }
    let stride = stride.unwrap_or(window);
    if stride == 0 {
        return Err(IdentError::Argument("stride must be at least one step".into()));
    }
    let mut out = Vec::new();
    let mut start = 0;
    loop {
        let end = (start + window).min(seq.len());
        let mut x = vec![T::zero(); window * N_FEATURES];
        let mut mask = vec![false; window];
        for (i, row) in seq.features[start..end].iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                x[i * N_FEATURES + j] = T::lit(v);
            }
            mask[i] = true;
        }
        out.push(Window { x, mask, label: seq.label });
        if end == seq.len() {
            break;
        }
        start += stride;
    }
    Ok(out)
}

/// Non-overlapping windows.
pub fn segment<T: Real>(seq: &GaitSequence, window: usize) -> Result<Vec<Window<T>>, IdentError> {
    segment_with_stride(seq, window, None)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub file: String,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub sequences: Vec<DatasetEntry>,
}

pub const DATASET_MANIFEST: &str = "manifest.json";

/// Labelled walking cycles; labels index `names`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub names: Vec<String>,
    pub sequences: Vec<GaitSequence>,
}

impl Dataset {
    /// Builds sequences from labelled step records; label ids follow sorted names.
    pub fn from_records(cycles: &[(String, Vec<StepRecord>)]) -> Self {
        let mut names: Vec<String> = cycles.iter().map(|(n, _)| n.clone()).collect();
        names.sort();
        names.dedup();
        let sequences = cycles
            .iter()
            .map(|(n, recs)| GaitSequence::from_records(recs, names.binary_search(n).expect("name collected")))
            .collect();
        Self { names, sequences }
    }

    /// Reads a dataset directory: `manifest.json` plus one step CSV per cycle.
    pub fn load(dir: &Path) -> Result<Self, IdentError> {
        let path = dir.join(DATASET_MANIFEST);
        let text = std::fs::read_to_string(&path).map_err(|e| FormatError::io(&path, e))?;
        let manifest: DatasetManifest = serde_json::from_str(&text).map_err(|e| {
            FormatError::parse(&path.display().to_string(), e.line() as u64, e.to_string())
        })?;
        let mut cycles = Vec::with_capacity(manifest.sequences.len());
        for entry in &manifest.sequences {
            cycles.push((entry.label.clone(), load_records(&dir.join(&entry.file))?));
        }
        Ok(Self::from_records(&cycles))
    }

    pub fn total_steps(&self) -> usize {
        self.sequences.iter().map(GaitSequence::len).sum()
    }
}

/// Writes labelled cycles as a dataset directory.
pub fn write_dataset(dir: &Path, cycles: &[(String, Vec<StepRecord>)]) -> Result<(), IdentError> {
    std::fs::create_dir_all(dir).map_err(|e| FormatError::io(dir, e))?;
    let mut sequences = Vec::with_capacity(cycles.len());
    for (i, (label, recs)) in cycles.iter().enumerate() {
        let file = format!("cycle_{i:04}.csv");
        write_atomic(&dir.join(&file), &records_to_csv(recs))?;
        sequences.push(DatasetEntry {
            file,
            label: label.clone(),
        });
    }
    let mut json = serde_json::to_string_pretty(&DatasetManifest { sequences }).expect("manifest serialises");
    json.push('\n');
    write_atomic(&dir.join(DATASET_MANIFEST), &json)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(n: usize) -> GaitSequence {
        GaitSequence {
            features: (0..n).map(|i| [i as f64 + 1.0; N_FEATURES]).collect(),
            label: 0,
        }
    }

    #[test]
    fn segment_examples() {
        let w = segment::<f64>(&seq(300), 128).unwrap();
        assert_eq!(w.len(), 3);
        assert_eq!(w[2].real_steps(), 44);
        assert_eq!(w[2].len() - w[2].real_steps(), 84);
        assert!(w[2].x[44 * N_FEATURES..].iter().all(|&v| v == 0.0));

        let w = segment::<f64>(&seq(128), 128).unwrap();
        assert_eq!(w.len(), 1);
        assert!(w[0].mask.iter().all(|&m| m));

        let w = segment::<f64>(&seq(70), 128).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].mask.iter().filter(|m| !**m).count(), 58);
        assert!(!w[0].mask[70] && w[0].mask[69]);
    }

    #[test]
    fn overlapping_windows() {
        let w = segment_with_stride::<f64>(&seq(10), 4, Some(2)).unwrap();
        // starts 0, 2, 4, 6 (the window at 6 reaches the end)
        assert_eq!(w.len(), 4);
        assert_eq!(w[1].x[0], 3.0);
        assert!(segment::<f64>(&seq(0), 4).is_err());
        assert!(segment::<f64>(&seq(3), 0).is_err());
    }

    #[test]
    fn features_follow_documented_order() {
        let walker = crate::simulator::WalkerConfig::default();
        let trace = crate::simulator::simulate_walk(&walker).unwrap();
        let s = GaitSequence::from_records(&trace.true_steps, 3);
        assert!(!s.is_empty());
        // Step 0 has no gait length, so variation is first defined at step VARIATION_SPAN.
        let first_full = VARIATION_SPAN;
        assert_eq!(s.len(), trace.true_steps.len() - first_full);
        let r = &trace.true_steps[first_full];
        let f = s.features[0];
        assert_eq!(f[0], r.gait_height.unwrap());
        assert_eq!(f[1], r.gait_width.unwrap());
        assert_eq!(f[2], r.gait_length.unwrap());
        assert_eq!(f[5], r.step_time.unwrap());
        assert_eq!(f[6], r.stride_time.unwrap());
        assert_eq!(f[7], r.swing_time.unwrap());
        assert_eq!(f[8], r.double_support.unwrap());
        assert_eq!(f[9], r.stride_velocity.unwrap());
        assert!(s.features.iter().flatten().all(|v| v.is_finite()));
    }

    #[test]
    fn dataset_round_trip() {
        let walker = crate::simulator::WalkerConfig::default();
        let trace = crate::simulator::simulate_walk(&walker).unwrap();
        let cycles = vec![("b".to_string(), trace.true_steps.clone()), ("a".to_string(), trace.true_steps.clone())];
        let dir = std::env::temp_dir().join(format!("gaitvision-dataset-{}", std::process::id()));
        write_dataset(&dir, &cycles).unwrap();
        let ds = Dataset::load(&dir).unwrap();
        assert_eq!(ds.names, vec!["a", "b"]);
        assert_eq!(ds.sequences[0].label, 1);
        assert_eq!(ds, Dataset::from_records(&cycles));
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
