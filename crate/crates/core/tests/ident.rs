use gaitvision::ident::{
    load_checkpoint, save_checkpoint, segment, shuffle_labels, train_kfold, GaitSequence, IdentError, IdentModel, Mode,
    ModelConfig, TrainConfig, Window, CHECKPOINT_VERSION, N_FEATURES,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny() -> ModelConfig {
    ModelConfig {
        d_model: 8,
        heads: 2,
        layers: 1,
        d_ff: 16,
        n_classes: 3,
        max_len: 16,
        dropout: 0.0,
        ..ModelConfig::default()
    }
}

fn random_window(rng: &mut ChaCha8Rng, len: usize, real: usize, classes: usize) -> Window<f64> {
    let mut x = vec![0.0; len * N_FEATURES];
    for v in x.iter_mut().take(real * N_FEATURES) {
        *v = rng.random_range(-2.0..2.0);
    }
    Window {
        x,
        mask: (0..len).map(|i| i < real).collect(),
        label: rng.random_range(0..classes),
    }
}

fn batch(seed: u64, classes: usize) -> Vec<Window<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..3).map(|i| random_window(&mut rng, 12, 12 - 3 * i, classes)).collect()
}

#[test]
fn tiny_model_gradients_match_finite_differences() {
    let model = IdentModel::<f64>::new(tiny(), 1).unwrap();
    let rep = model.grad_check(&batch(2, 3), 1e-5, 300, 3).unwrap();
    assert!(rep.checked >= 200);
    assert!(rep.max_rel_error < 1e-4, "{rep:#?}");
    assert_eq!(rep.groups.len(), model.groups().len());
}

#[test]
fn reference_model_gradients_match_finite_differences() {
    let cfg = ModelConfig {
        dropout: 0.0,
        ..ModelConfig::default()
    };
    let model = IdentModel::<f64>::new(cfg, 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let b: Vec<Window<f64>> = (0..2).map(|_| random_window(&mut rng, 128, 70, 6)).collect();
    let rep = model.grad_check(&b, 1e-5, 400, 6).unwrap();
    for g in &rep.groups {
        assert!(g.max_rel_error < 1e-4, "{} {}", g.name, g.max_rel_error);
    }
}

#[test]
fn zero_input_bias_path_is_exact() {
    // With zero inputs and zero embedding weights the classifier only sees
    // biases; the head bias gradient is p - onehot.
    let model = IdentModel::<f64>::new(tiny(), 7).unwrap();
    let w = Window {
        x: vec![0.0; 4 * N_FEATURES],
        mask: vec![true; 4],
        label: 1,
    };
    let (_, grad) = model.loss_and_grad::<ChaCha8Rng>(std::slice::from_ref(&w), Mode::Eval, None).unwrap();
    let p = model.predict(&w).unwrap();
    let hb = model.group("head.bias").unwrap().range();
    for (k, g) in grad[hb].iter().enumerate() {
        let expected = p[k] - if k == 1 { 1.0 } else { 0.0 };
        assert!((g - expected).abs() < 1e-12);
    }
    let rep = model.grad_check(std::slice::from_ref(&w), 1e-5, 200, 8).unwrap();
    let head = rep.groups.iter().find(|g| g.name == "head.bias").unwrap();
    assert!(head.max_rel_error < 1e-6, "{}", head.max_rel_error);
}

#[test]
fn one_gradient_step_lowers_the_loss() {
    let mut model = IdentModel::<f64>::new(tiny(), 9).unwrap();
    let b = batch(10, 3);
    let (before, grad) = model.loss_and_grad::<ChaCha8Rng>(&b, Mode::Eval, None).unwrap();
    for (p, g) in model.params.iter_mut().zip(&grad) {
        *p -= 1e-2 * g;
    }
    assert!(model.loss(&b).unwrap() < before);
}

#[test]
fn all_padded_window_gives_uniform_prior() {
    let model = IdentModel::<f64>::new(ModelConfig::default(), 11).unwrap();
    let w = Window {
        x: vec![3.0; 128 * N_FEATURES],
        mask: vec![false; 128],
        label: 0,
    };
    let p = model.predict(&w).unwrap();
    for v in p {
        assert!((v - 1.0 / 6.0).abs() < 1e-12);
    }
}

#[test]
fn probabilities_sum_to_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for seed in 0..10 {
        let model = IdentModel::<f64>::new(ModelConfig::default(), seed).unwrap();
        let real = rng.random_range(1..=128);
        let w = random_window(&mut rng, 128, real, 6);
        let s: f64 = model.predict(&w).unwrap().iter().sum();
        assert!((s - 1.0).abs() < 1e-6);
    }
}

#[test]
fn feature_permutation_with_permuted_embedding_is_invariant() {
    let model = IdentModel::<f64>::new(ModelConfig::default(), 13).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let w = random_window(&mut rng, 128, 90, 6);
    let perm = [3, 7, 0, 9, 1, 5, 2, 8, 6, 4];
    let mut pw = w.clone();
    for i in 0..w.len() {
        for (j, &pj) in perm.iter().enumerate() {
            pw.x[i * N_FEATURES + j] = w.x[i * N_FEATURES + pj];
        }
    }
    let mut permuted = model.clone();
    let g = model.group("embed.weight").unwrap().clone();
    let d = g.cols;
    for (j, &pj) in perm.iter().enumerate() {
        for c in 0..d {
            permuted.params[g.offset + j * d + c] = model.params[g.offset + pj * d + c];
        }
    }
    let a = model.predict(&w).unwrap();
    let b = permuted.predict(&pw).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < 1e-6);
    }
}

#[test]
fn padded_values_do_not_matter() {
    let model = IdentModel::<f64>::new(ModelConfig::default(), 15).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let w = random_window(&mut rng, 128, 50, 6);
    let mut noisy = w.clone();
    for v in noisy.x.iter_mut().skip(50 * N_FEATURES) {
        *v = rng.random_range(-1e3..1e3);
    }
    let (a, b) = (model.predict(&w).unwrap(), model.predict(&noisy).unwrap());
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < 1e-6);
    }
}

#[test]
fn attention_rows_are_normalised_and_masked() {
    let model = IdentModel::<f64>::new(ModelConfig::default(), 17).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let w = random_window(&mut rng, 128, 40, 6);
    let layers = model.attention(&w).unwrap();
    assert_eq!(layers.len(), 2);
    for a in &layers {
        for h in 0..4 {
            for i in 0..40 {
                let row = &a[(h * 128 + i) * 128..(h * 128 + i + 1) * 128];
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
                assert!(row[40..].iter().all(|&v| v == 0.0));
            }
        }
    }
}

#[test]
fn shape_errors() {
    let model = IdentModel::<f64>::new(tiny(), 0).unwrap();
    let long = Window {
        x: vec![0.0; 17 * N_FEATURES],
        mask: vec![true; 17],
        label: 0,
    };
    assert!(matches!(model.predict(&long), Err(IdentError::Shape(_))));
    let short = Window {
        x: vec![0.0; 3],
        mask: vec![true; 2],
        label: 0,
    };
    assert!(matches!(model.predict(&short), Err(IdentError::Shape(_))));
    let bad_cfg = ModelConfig {
        d_model: 10,
        heads: 4,
        ..ModelConfig::default()
    };
    assert!(IdentModel::<f64>::new(bad_cfg, 0).is_err());
}

#[test]
fn checkpoint_round_trip_and_version_check() {
    let model = IdentModel::<f64>::new(tiny(), 19).unwrap();
    let bytes = save_checkpoint(&model);
    let back: IdentModel<f64> = load_checkpoint(&bytes).unwrap();
    assert_eq!(back, model);

    let mut wrong = bytes.clone();
    wrong[8..12].copy_from_slice(&(CHECKPOINT_VERSION + 1).to_le_bytes());
    assert!(matches!(load_checkpoint::<f64>(&wrong), Err(IdentError::Checkpoint(_))));
    assert!(load_checkpoint::<f64>(&bytes[..bytes.len() - 3]).is_err());
    assert!(load_checkpoint::<f64>(b"nonsense").is_err());
}

#[test]
fn single_precision_model_runs() {
    let model = IdentModel::<f32>::new(tiny(), 20).unwrap();
    let w = Window {
        x: vec![0.5f32; 8 * N_FEATURES],
        mask: (0..8).map(|i| i < 5).collect(),
        label: 2,
    };
    let s: f32 = model.predict(&w).unwrap().iter().sum();
    assert!((s - 1.0).abs() < 1e-5);
}

fn separable(seed: u64, per_label: usize) -> Vec<GaitSequence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for label in 0..2 {
        for _ in 0..per_label {
            let features = (0..30)
                .map(|_| {
                    let mut row = [0.0; N_FEATURES];
                    for (j, v) in row.iter_mut().enumerate() {
                        *v = 1.0 + 0.01 * j as f64 + rng.random_range(-0.01..0.01);
                    }
                    // gait length means 0.60 and 0.69 with sd 0.01 (means far apart)
                    row[2] = if label == 0 { 0.60 } else { 0.69 } + 0.01 * rng.random_range(-1.0..1.0);
                    row
                })
                .collect();
            out.push(GaitSequence { features, label });
        }
    }
    out
}

fn quick() -> TrainConfig {
    TrainConfig {
        window: 32,
        folds: 3,
        epochs: 60,
        learning_rate: 3e-3,
        d_model: 16,
        heads: 2,
        layers: 1,
        d_ff: 32,
        ..TrainConfig::default()
    }
}

#[test]
fn separable_walkers_are_perfectly_identified() {
    let rep = train_kfold(&separable(21, 6), &quick()).unwrap();
    assert_eq!(rep.mean_accuracy, 100.0, "{rep:?}");
    assert_eq!(rep.confusion[0][1] + rep.confusion[1][0], 0);
    assert_eq!(rep.windows, 12);
}

#[test]
fn training_is_deterministic() {
    let data = separable(22, 4);
    let a = train_kfold(&data, &quick()).unwrap();
    let b = train_kfold(&data, &quick()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn too_few_sequences_per_label() {
    let data = separable(23, 2);
    assert!(matches!(train_kfold(&data, &quick()), Err(IdentError::Argument(_))));
    let one_label: Vec<GaitSequence> = separable(24, 4).into_iter().filter(|s| s.label == 0).collect();
    assert!(train_kfold(&one_label, &quick()).is_err());
}

#[test]
fn shuffled_labels_keep_label_counts() {
    let data = separable(25, 5);
    let s = shuffle_labels(&data, 1);
    let count = |d: &[GaitSequence]| d.iter().filter(|x| x.label == 0).count();
    assert_eq!(count(&data), count(&s));
    assert_ne!(data.iter().map(|x| x.label).collect::<Vec<_>>(), s.iter().map(|x| x.label).collect::<Vec<_>>());
    let w = segment::<f64>(&s[0], 32).unwrap();
    assert_eq!(w[0].label, s[0].label);
}
