// Property suites shared by the `properties` test target and the acceptance
// runner. Every suite runs CASES deterministic random cases.

use gaitvision::geometry::{
    build_rig, dlt_system, from_ground, project, rotate_horizontal, to_ground, triangulate, triangulate_homogeneous,
    Calibration, Extrinsics, Intrinsics, StereoRig, WorldPoint,
};
use gaitvision::ident::{segment, train_kfold, GaitSequence, IdentModel, ModelConfig, TrainConfig, Window, N_FEATURES};
use gaitvision::linalg::rotation_from_axis_angle;
use gaitvision::marker::{detect_center, render_marker, RenderParams};
use gaitvision::pipeline::{rig_for, run_simulated};
use gaitvision::simulator::{simulate_walk, NoiseModel, WalkerConfig};
use gaitvision::spatial_stats::{coefficient_of_variation, stride_length, symmetry};
use gaitvision::sync::{align_streams, SyncEstimate};
use gaitvision::temporal::{events_from_csv, events_to_csv, temporal_params, Foot, FootfallEvent, TemporalConfig};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use rand::seq::SliceRandom;

pub const CASES: u32 = 200;

pub type Suite = (&'static str, fn() -> Result<(), String>);

pub const SUITES: &[Suite] = &[
    ("triangulation round trip", triangulation_round_trip),
    ("dlt residual and unit null vector", dlt_residual),
    ("ground transform inverse", ground_transform_inverse),
    ("homogeneous invariance", homogeneous_invariance),
    ("cv scale invariance", cv_scale_invariance),
    ("symmetry identities", symmetry_identities),
    ("stride length monotone", stride_length_monotone),
    ("temporal identities", temporal_identities),
    ("event order canonical", event_order_canonical),
    ("event csv round trip", event_csv_round_trip),
    ("alignment idempotence", alignment_idempotence),
    ("offset error bound", offset_error_bound),
    ("simulator determinism", simulator_determinism),
    ("flat ground height", flat_ground_height),
    ("noiseless closure", noiseless_closure),
    ("marker translation", marker_translation),
    ("attention masking", attention_masking),
    ("padding invariance", padding_invariance),
    ("training determinism", training_determinism),
];

fn run<S: Strategy>(strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String> {
    let config = Config {
        cases: CASES,
        failure_persistence: None,
        ..Config::default()
    };
    let mut runner = TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

fn random_rig() -> impl Strategy<Value = StereoRig<f64>> {
    (
        500.0..1400.0f64,
        -0.02..0.02f64,
        -0.02..0.02f64,
        -0.02..0.02f64,
        0.04..0.12f64,
        -0.003..0.003f64,
    )
        .prop_map(|(f, a, b, c, baseline, dy)| {
            let k1 = Intrinsics::new(f, f * 1.01, 640.0, 480.0).unwrap();
            let k2 = Intrinsics::new(f * 0.99, f, 636.0, 484.0).unwrap();
            let ext = Extrinsics::new(rotation_from_axis_angle(&[a, b, c]), [-baseline, dy, 0.001]).unwrap();
            build_rig(k1, k2, ext).unwrap()
        })
}

fn point_in_view() -> impl Strategy<Value = WorldPoint<f64>> {
    (0.2..3.0f64, -0.3..0.3f64, -0.3..0.3f64).prop_map(|(z, x, y)| WorldPoint::camera(x * z, y * z, z))
}

fn triangulation_round_trip() -> Result<(), String> {
    run((random_rig(), point_in_view()), |(rig, x)| {
        let (o1, o2) = rig.project_pair(&x).unwrap();
        let back = triangulate(&rig, &o1, &o2).map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert!(back.distance(&x) < 1e-6, "{back:?} vs {x:?}");
        Ok(())
    })
}

fn dlt_residual() -> Result<(), String> {
    run((random_rig(), point_in_view()), |(rig, x)| {
        let p1 = project(rig.projection(0), &x).unwrap();
        let p2 = project(rig.projection(1), &x).unwrap();
        let a = dlt_system(&rig, &[p1.u, p1.v, 1.0], &[p2.u, p2.v, 1.0]);
        let h = x.homogeneous();
        for row in &a {
            let r: f64 = row.iter().zip(&h).map(|(a, b)| a * b).sum();
            prop_assert!(r.abs() < 1e-9, "row residual {r}");
        }
        let t = triangulate_homogeneous(&rig, &[p1.u, p1.v, 1.0], &[p2.u, p2.v, 1.0]).unwrap();
        let n = t.homogeneous.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!((n - 1.0).abs() < 1e-12);
        Ok(())
    })
}

fn ground_transform_inverse() -> Result<(), String> {
    run((-5.0..5.0f64, -5.0..5.0f64, -5.0..5.0f64, -3.2..3.2f64), |(x, y, z, theta)| {
        let p = WorldPoint::camera(x, y, z);
        let g = to_ground(&p, theta);
        let level = to_ground(&p, 0.0);
        let [bx, by] = rotate_horizontal([g.x, g.y], -theta);
        prop_assert!((bx - level.x).abs() < 1e-12 && (by - level.y).abs() < 1e-12 && g.z == level.z);
        prop_assert!(from_ground(&g, theta).distance(&p) < 1e-12);
        Ok(())
    })
}

fn homogeneous_invariance() -> Result<(), String> {
    let lambda = prop_oneof![-1e3..-1e-3f64, 1e-3..1e3f64];
    run((random_rig(), point_in_view(), lambda), |(rig, x, l)| {
        let (o1, o2) = rig.project_pair(&x).unwrap();
        let a = triangulate_homogeneous(&rig, &[o1.u, o1.v, 1.0], &[o2.u, o2.v, 1.0]).unwrap();
        let b = triangulate_homogeneous(&rig, &[l * o1.u, l * o1.v, l], &[l * o2.u, l * o2.v, l]).unwrap();
        prop_assert!(a.point.distance(&b.point) < 1e-9);
        Ok(())
    })
}

fn series() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.1..10.0f64, 2..40).prop_filter("not constant", |xs| {
        xs.iter().any(|&x| (x - xs[0]).abs() > 1e-3)
    })
}

fn cv_scale_invariance() -> Result<(), String> {
    run((series(), 1e-3..1e3f64, 0.5..20.0f64), |(xs, s, shift)| {
        let cv = coefficient_of_variation(&xs).unwrap();
        let scaled: Vec<f64> = xs.iter().map(|x| x * s).collect();
        prop_assert!((coefficient_of_variation(&scaled).unwrap() - cv).abs() < 1e-9 * cv.max(1.0));
        let shifted: Vec<f64> = xs.iter().map(|x| x + shift).collect();
        prop_assert!((coefficient_of_variation(&shifted).unwrap() - cv).abs() > 1e-6);
        Ok(())
    })
}

fn symmetry_identities() -> Result<(), String> {
    run((0.01..10.0f64, 0.01..10.0f64), |(a, b)| {
        prop_assert!((symmetry(a, b).unwrap().abs() - symmetry(b, a).unwrap().abs()).abs() < 1e-12);
        prop_assert_eq!(symmetry(a, a).unwrap(), 0.0);
        Ok(())
    })
}

fn stride_length_monotone() -> Result<(), String> {
    run((0.1..1.0f64, 0.1..1.0f64, 0.1..0.4f64, 1e-6..0.5f64), |(p, c, f, d)| {
        let base = stride_length(Some(p), c, f).unwrap();
        prop_assert!(stride_length(Some(p + d), c, f).unwrap() > base);
        prop_assert!(stride_length(Some(p), c + d, f).unwrap() > base);
        prop_assert!(stride_length(Some(p), c, f + d).unwrap() > base);
        Ok(())
    })
}

fn walker() -> impl Strategy<Value = WalkerConfig> {
    (0.5..0.8f64, 0.9..1.3f64, 0.55..0.68f64, 4.0..10.0f64, any::<u64>()).prop_map(
        |(len, stride, standing, route, seed)| WalkerConfig {
            gait_length_mean: len,
            stride_time_mean: stride,
            standing_fraction: standing,
            route: vec![[0.0, 0.0], [route, 0.0]],
            seed,
            ..WalkerConfig::default()
        },
    )
}

fn temporal_identities() -> Result<(), String> {
    run(walker(), |w| {
        let trace = simulate_walk(&w).unwrap();
        let a = temporal_params(&trace.true_events()).unwrap();
        for (k, s) in a.steps.iter().enumerate() {
            if let (Some(st), Some(sw), Some(sd)) = (s.stride_time, s.swing_time, s.standing_time) {
                prop_assert!((st - sd - sw).abs() < 1e-9);
            }
            prop_assert_eq!(s.gait_cycle_time, s.stride_time);
            if k > 0 {
                prop_assert_eq!(s.single_support, a.steps[k - 1].swing_time);
            }
            if let Some(ds) = s.double_support {
                prop_assert!(ds >= 0.0);
            }
        }
        prop_assert!(a.warnings.is_empty());
        let total: f64 = a.steps.iter().filter_map(|s| s.step_time).sum();
        prop_assert!((total - a.summary.ambulation_time).abs() < 1e-9);
        Ok(())
    })
}

fn event_order_canonical() -> Result<(), String> {
    run((walker(), any::<u64>()), |(w, seed)| {
        let trace = simulate_walk(&w).unwrap();
        let events = trace.true_events();
        let mut shuffled = events.clone();
        shuffled.shuffle(&mut <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed));
        prop_assert_eq!(temporal_params(&shuffled).unwrap(), temporal_params(&events).unwrap());
        Ok(())
    })
}

fn event_csv_round_trip() -> Result<(), String> {
    run(walker(), |w| {
        let events = simulate_walk(&w).unwrap().true_events();
        let back = events_from_csv(&events_to_csv(&events), "events").unwrap();
        prop_assert_eq!(back, events);
        Ok(())
    })
}

fn split(events: &[FootfallEvent], foot: Foot, offset: f64) -> Vec<FootfallEvent> {
    events
        .iter()
        .filter(|e| e.foot == foot)
        .map(|e| FootfallEvent { t: e.t + offset, ..*e })
        .collect()
}

fn alignment_idempotence() -> Result<(), String> {
    run((walker(), -0.5..0.5f64, -0.5..0.5f64), |(w, ol, or)| {
        let events = simulate_walk(&w).unwrap().true_events();
        let (l, r) = (split(&events, Foot::Left, ol + 1.0), split(&events, Foot::Right, or + 1.0));
        let once = align_streams(&l, &r, &SyncEstimate::exact(ol), &SyncEstimate::exact(or)).unwrap();
        let (l2, r2) = (split(&once, Foot::Left, 0.0), split(&once, Foot::Right, 0.0));
        let twice = align_streams(&l2, &r2, &SyncEstimate::zero(), &SyncEstimate::zero()).unwrap();
        prop_assert_eq!(&twice, &once);
        Ok(())
    })
}

fn offset_error_bound() -> Result<(), String> {
    run((walker(), -0.5..0.5f64, -0.5..0.5f64, -0.02..0.02f64, -0.02..0.02f64), |(w, ol, or, el, er)| {
        let events = simulate_walk(&w).unwrap().true_events();
        let truth = temporal_params(&events).unwrap();
        let (l, r) = (split(&events, Foot::Left, ol), split(&events, Foot::Right, or));
        let merged = align_streams(&l, &r, &SyncEstimate::exact(ol + el), &SyncEstimate::exact(or + er)).unwrap();
        let got = temporal_params(&merged).unwrap();
        prop_assert_eq!(got.steps.len(), truth.steps.len());
        for (g, t) in got.steps.iter().zip(&truth.steps) {
            if let (Some(a), Some(b)) = (g.step_time, t.step_time) {
                prop_assert!((a - b).abs() <= el.abs() + er.abs() + 1e-9);
            }
            for (a, b) in [(g.stride_time, t.stride_time), (g.swing_time, t.swing_time), (g.standing_time, t.standing_time)] {
                prop_assert_eq!(a.is_some(), b.is_some());
                if let (Some(a), Some(b)) = (a, b) {
                    prop_assert!((a - b).abs() < 1e-9);
                }
            }
        }
        Ok(())
    })
}

fn simulator_determinism() -> Result<(), String> {
    run(walker(), |w| {
        let a = simulate_walk(&w).unwrap();
        let b = simulate_walk(&w).unwrap();
        prop_assert_eq!(a, b);
        Ok(())
    })
}

fn flat_ground_height() -> Result<(), String> {
    run(walker(), |w| {
        let w = WalkerConfig {
            gait_height_mean: 0.0,
            gait_height_sd: 0.0,
            ..w
        };
        let trace = simulate_walk(&w).unwrap();
        let heights: Vec<f64> = trace.true_steps.iter().filter_map(|s| s.gait_height).collect();
        prop_assert!(!heights.is_empty());
        prop_assert!(heights.iter().all(|h| h.abs() < 1e-12));
        Ok(())
    })
}

fn noiseless_closure() -> Result<(), String> {
    let calib = Calibration::reference();
    run(walker(), |w| {
        let rig = rig_for(&w, &calib);
        let run = run_simulated(&w, &calib, &rig, &NoiseModel::default(), &TemporalConfig::default(), w.seed)
            .map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert_eq!(run.report.steps.len(), run.truth.steps.len());
        for (m, t) in run.report.steps.iter().zip(&run.truth.steps) {
            for (a, b) in [(m.gait_length, t.gait_length), (m.gait_width, t.gait_width), (m.gait_height, t.gait_height)] {
                prop_assert_eq!(a.is_some(), b.is_some());
                if let (Some(a), Some(b)) = (a, b) {
                    prop_assert!((a - b).abs() < 1e-6);
                }
            }
            for (a, b) in [(m.step_time, t.step_time), (m.stride_time, t.stride_time), (m.swing_time, t.swing_time)] {
                prop_assert_eq!(a.is_some(), b.is_some());
                if let (Some(a), Some(b)) = (a, b) {
                    prop_assert!((a - b).abs() < 1e-9);
                }
            }
        }
        Ok(())
    })
}

fn marker_translation() -> Result<(), String> {
    run((50.0..110.0f64, 40.0..80.0f64, -0.35..0.35f64, -8i32..8, -8i32..8, any::<u64>()), |(u, v, rot, du, dv, seed)| {
        let base = RenderParams {
            center_u: u,
            center_v: v,
            rotation: rot,
            noise_sigma: 0.02,
            seed,
            ..RenderParams::default()
        };
        let moved = RenderParams {
            center_u: u + du as f64,
            center_v: v + dv as f64,
            ..base.clone()
        };
        let a = detect_center(&render_marker(&base).unwrap()).center.unwrap();
        let b = detect_center(&render_marker(&moved).unwrap()).center.unwrap();
        prop_assert!((b.u - a.u - du as f64).abs() < 0.1);
        prop_assert!((b.v - a.v - dv as f64).abs() < 0.1);
        Ok(())
    })
}

fn window(real: usize, seed: u64) -> Window<f64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut x = vec![0.0; 128 * N_FEATURES];
    for v in x.iter_mut().take(real * N_FEATURES) {
        *v = rng.random_range(-2.0..2.0);
    }
    Window {
        x,
        mask: (0..128).map(|i| i < real).collect(),
        label: 0,
    }
}

fn attention_masking() -> Result<(), String> {
    let model = IdentModel::<f64>::new(ModelConfig::default(), 3).unwrap();
    run((1usize..=128, any::<u64>()), |(real, seed)| {
        let w = window(real, seed);
        for a in model.attention(&w).unwrap() {
            for h in 0..4 {
                for i in 0..real {
                    let row = &a[(h * 128 + i) * 128..(h * 128 + i + 1) * 128];
                    prop_assert!((row[..real].iter().sum::<f64>() - 1.0).abs() < 1e-6);
                    prop_assert!(row[real..].iter().all(|&v| v == 0.0));
                }
            }
        }
        Ok(())
    })
}

fn padding_invariance() -> Result<(), String> {
    let model = IdentModel::<f64>::new(ModelConfig::default(), 4).unwrap();
    run((0usize..128, any::<u64>(), -1e3..1e3f64), |(real, seed, fill)| {
        let w = window(real, seed);
        let mut junk = w.clone();
        for (k, v) in junk.x.iter_mut().enumerate().skip(real * N_FEATURES) {
            *v = fill + k as f64;
        }
        let (a, b) = (model.predict(&w).unwrap(), model.predict(&junk).unwrap());
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-6);
        }
        Ok(())
    })
}

fn training_determinism() -> Result<(), String> {
    let cfg = TrainConfig {
        window: 8,
        folds: 2,
        epochs: 2,
        d_model: 8,
        heads: 2,
        layers: 1,
        d_ff: 8,
        ..TrainConfig::default()
    };
    run((any::<u64>(), any::<u64>()), |(data_seed, seed)| {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(data_seed);
        let data: Vec<GaitSequence> = (0..6)
            .map(|i| GaitSequence {
                features: (0..10).map(|_| std::array::from_fn(|_| rng.random_range(0.0..1.0))).collect(),
                label: i % 2,
            })
            .collect();
        let cfg = TrainConfig { seed, ..cfg.clone() };
        prop_assert_eq!(train_kfold(&data, &cfg).unwrap(), train_kfold(&data, &cfg).unwrap());
        let w = segment::<f64>(&data[0], 8).unwrap();
        let m = IdentModel::<f64>::new(cfg.model_config(2), seed).unwrap();
        prop_assert_eq!(m.predict(&w[0]).unwrap(), IdentModel::<f64>::new(cfg.model_config(2), seed).unwrap().predict(&w[0]).unwrap());
        Ok(())
    })
}
