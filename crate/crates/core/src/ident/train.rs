use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{segment_with_stride, GaitSequence, IdentError, IdentModel, Mode, ModelConfig, Window, N_FEATURES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub window: usize,
    /// Window start spacing; `None` gives non-overlapping windows.
    pub stride: Option<usize>,
    pub folds: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub dropout: f64,
    pub d_model: usize,
    pub heads: usize,
    pub layers: usize,
    pub d_ff: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            window: 128,
            stride: None,
            folds: 10,
            epochs: 50,
            learning_rate: 1e-3,
            batch_size: 8,
            seed: 0,
            dropout: 0.1,
            d_model: 32,
            heads: 4,
            layers: 2,
            d_ff: 64,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), IdentError> {
        if self.window == 0 {
            return Err(IdentError::Argument("window must be at least one step".into()));
        }
        if self.folds < 2 {
            return Err(IdentError::Argument("at least two folds are required".into()));
        }
        if self.batch_size == 0 {
            return Err(IdentError::Argument("batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(IdentError::Argument("learning_rate must be positive".into()));
        }
        self.model_config(2).validate()
    }

    pub fn model_config(&self, n_classes: usize) -> ModelConfig {
        ModelConfig {
            n_features: N_FEATURES,
            d_model: self.d_model,
            heads: self.heads,
            layers: self.layers,
            d_ff: self.d_ff,
            n_classes,
            max_len: self.window.max(128),
            dropout: self.dropout,
        }
    }
}

pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n_params: usize, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= self.learning_rate * mh / (vh.sqrt() + self.eps);
        }
    }
}

/// Per-feature z-score fitted on training sequences only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler {
    pub mean: [f64; N_FEATURES],
    pub sd: [f64; N_FEATURES],
}

impl FeatureScaler {
    pub fn fit<'a>(seqs: impl IntoIterator<Item = &'a GaitSequence>) -> Self {
        let mut sum = [0.0; N_FEATURES];
        let mut sq = [0.0; N_FEATURES];
        let mut n = 0.0;
        for s in seqs {
            for row in &s.features {
                for j in 0..N_FEATURES {
                    sum[j] += row[j];
                    sq[j] += row[j] * row[j];
                }
                n += 1.0;
            }
        }
        let mut mean = [0.0; N_FEATURES];
        let mut sd = [1.0; N_FEATURES];
        if n > 0.0 {
            for j in 0..N_FEATURES {
                mean[j] = sum[j] / n;
                let var = (sq[j] / n - mean[j] * mean[j]).max(0.0);
                sd[j] = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
            }
        }
        Self { mean, sd }
    }

    pub fn apply(&self, seq: &GaitSequence) -> GaitSequence {
        GaitSequence {
            features: seq
                .features
                .iter()
                .map(|row| std::array::from_fn(|j| (row[j] - self.mean[j]) / self.sd[j]))
                .collect(),
            label: seq.label,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KFoldReport {
    pub fold_accuracy: Vec<f64>,
    pub mean_accuracy: f64,
    /// `confusion[true][predicted]` window counts over all validation folds.
    pub confusion: Vec<Vec<usize>>,
    pub windows: usize,
}

/// Stratified fold index of every sequence: each label's sequences are
/// shuffled and dealt round-robin over the folds.
fn assign_folds(dataset: &[GaitSequence], n_classes: usize, folds: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut fold_of = vec![0; dataset.len()];
    for label in 0..n_classes {
        let mut ids: Vec<usize> = (0..dataset.len()).filter(|&i| dataset[i].label == label).collect();
        ids.shuffle(rng);
        for (k, i) in ids.into_iter().enumerate() {
            fold_of[i] = k % folds;
        }
    }
    fold_of
}

fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

fn windows_of(seqs: &[GaitSequence], cfg: &TrainConfig) -> Result<Vec<Window<f64>>, IdentError> {
    let mut out = Vec::new();
    for s in seqs.iter().filter(|s| !s.is_empty()) {
        out.extend(segment_with_stride::<f64>(s, cfg.window, cfg.stride)?);
    }
    Ok(out)
}

/// Trains a fresh model on `train` windows and returns it.
pub fn train_model(train: &[Window<f64>], n_classes: usize, cfg: &TrainConfig, seed: u64) -> Result<IdentModel<f64>, IdentError> {
    let mut model = IdentModel::<f64>::new(cfg.model_config(n_classes), seed)?;
    let mut adam = Adam::new(model.n_params(), cfg.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<Window<f64>> = chunk.iter().map(|&i| train[i].clone()).collect();
            let (_, grad) = model.loss_and_grad(&batch, Mode::Train, Some(&mut rng))?;
            adam.step(&mut model.params, &grad);
        }
    }
    Ok(model)
}

/// Stratified k-fold cross-validation split by whole walking cycle.
pub fn train_kfold(dataset: &[GaitSequence], cfg: &TrainConfig) -> Result<KFoldReport, IdentError> {
    cfg.validate()?;
    let n_classes = dataset.iter().map(|s| s.label + 1).max().unwrap_or(0);
    if n_classes < 2 {
        return Err(IdentError::Argument("at least two labels are required".into()));
    }
    for label in 0..n_classes {
        let count = dataset.iter().filter(|s| s.label == label && !s.is_empty()).count();
        if count < cfg.folds {
            return Err(IdentError::Argument(format!(
                "label {label} has {count} sequences but {} folds were requested",
                cfg.folds
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let fold_of = assign_folds(dataset, n_classes, cfg.folds, &mut rng);
    let mut confusion = vec![vec![0; n_classes]; n_classes];
    let mut fold_accuracy = Vec::with_capacity(cfg.folds);
    let mut windows = 0;
    for fold in 0..cfg.folds {
        let mut train_seqs = Vec::new();
        let mut val_seqs = Vec::new();
        for (i, s) in dataset.iter().enumerate().filter(|(_, s)| !s.is_empty()) {
            if fold_of[i] == fold {
                val_seqs.push(s);
            } else {
                train_seqs.push(s);
            }
        }
        let scaler = FeatureScaler::fit(train_seqs.iter().copied());
        let scale = |v: &[&GaitSequence]| v.iter().map(|s| scaler.apply(s)).collect::<Vec<_>>();
        let train = windows_of(&scale(&train_seqs), cfg)?;
        let val = windows_of(&scale(&val_seqs), cfg)?;
        let model = train_model(&train, n_classes, cfg, cfg.seed.wrapping_add(1 + fold as u64))?;
        let mut correct = 0;
        for w in &val {
            let pred = argmax(&model.predict(w)?);
            confusion[w.label][pred] += 1;
            if pred == w.label {
                correct += 1;
            }
        }
        windows += val.len();
        fold_accuracy.push(100.0 * correct as f64 / val.len().max(1) as f64);
    }
    let mean_accuracy = fold_accuracy.iter().sum::<f64>() / fold_accuracy.len() as f64;
    Ok(KFoldReport {
        fold_accuracy,
        mean_accuracy,
        confusion,
        windows,
    })
}

/// Copy of `dataset` with labels permuted at random across sequences.
pub fn shuffle_labels(dataset: &[GaitSequence], seed: u64) -> Vec<GaitSequence> {
    let mut labels: Vec<usize> = dataset.iter().map(|s| s.label).collect();
    labels.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    dataset
        .iter()
        .zip(labels)
        .map(|(s, label)| GaitSequence {
            features: s.features.clone(),
            label,
        })
        .collect()
}
