use std::fmt::Write as _;
use std::path::Path;

use anyhow::Context;
use gaitvision::geometry::{audit, synthetic_checkerboard, CheckerboardFixture};
use gaitvision::ident::{
    save_checkpoint, segment_with_stride, shuffle_labels, train_kfold, train_model, write_dataset, Dataset,
    FeatureScaler, KFoldReport,
};
use gaitvision::marker::{detect_center, render_marker, Image};
use gaitvision::pipeline::{
    drift_study, ident_cycles, looped, process, run_simulated, write_report, DriftReport, GaitReport,
};
use gaitvision::simulator::ObservationLog;
use serde::Serialize;

use crate::config::CliConfig;
use crate::{Classify, Command, Common, Failure};

pub const LOG_DIR: &str = "log";
pub const TRUTH_DIR: &str = "truth";
pub const REPORT_DIR: &str = "report";
pub const CALIBRATION_FILE: &str = "calibration.json";

fn setup(common: &Common) -> Result<Option<CliConfig>, Failure> {
    let cfg = CliConfig::load(common.config.as_deref()).invalid()?;
    if common.print_config {
        print!("{}", cfg.to_toml());
        return Ok(None);
    }
    std::fs::create_dir_all(&common.out)
        .with_context(|| format!("creating {}", common.out.display()))
        .internal()?;
    Ok(Some(cfg))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    gaitvision::formats::write_atomic(path, text).internal()
}

fn json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serialisable") + "\n"
}

pub fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Simulate { common, ident_dataset } => simulate(&common, ident_dataset),
        Command::Process {
            common,
            log,
            calib,
            truth,
        } => process_log(&common, &log, calib.as_deref(), truth.as_deref()),
        Command::Drift { common } => drift(&common),
        Command::Identify {
            common,
            data,
            shuffle_labels,
            save_model,
        } => identify(&common, &data, shuffle_labels, save_model),
        Command::CalibCheck { common, calib, fixture } => calib_check(&common, calib.as_deref(), fixture.as_deref()),
        Command::RenderMarker { common } => render(&common),
        Command::DetectMarker { common, image } => detect(&common, &image),
    }
}

fn simulate(common: &Common, ident_dataset: bool) -> Result<(), Failure> {
    let Some(cfg) = setup(common)? else { return Ok(()) };
    let calib = cfg.calibration(None).invalid()?;
    if ident_dataset {
        let d = &cfg.dataset;
        let cycles = ident_cycles(d.total_steps, d.cycle_steps, &calib, &cfg.noise, &cfg.temporal, common.seed).invalid()?;
        write_dataset(&common.out, &cycles).internal()?;
        println!("{} cycles written to {}", cycles.len(), common.out.display());
        return Ok(());
    }
    let walker = gaitvision::simulator::WalkerConfig {
        seed: common.seed,
        ..cfg.walker.clone()
    };
    let rig = cfg.rig(&calib);
    let run = run_simulated(&walker, &calib, &rig, &cfg.noise, &cfg.temporal, common.seed).invalid()?;
    run.log.write_dir(&common.out.join(LOG_DIR)).internal()?;
    write_report(&common.out.join(TRUTH_DIR), &run.truth).internal()?;
    write(&common.out.join(CALIBRATION_FILE), &(calib.to_json_pretty() + "\n"))?;
    println!(
        "{} footfalls, log in {}, truth in {}",
        run.trace.footfalls.len(),
        common.out.join(LOG_DIR).display(),
        common.out.join(TRUTH_DIR).display()
    );
    Ok(())
}

fn process_log(common: &Common, log: &Path, calib: Option<&Path>, truth: Option<&Path>) -> Result<(), Failure> {
    let Some(cfg) = setup(common)? else { return Ok(()) };
    let calib = cfg.calibration(calib).invalid()?;
    let obs = ObservationLog::read_dir(log).invalid()?;
    let mut report = process(&obs, &calib, &cfg.rig(&calib), &cfg.temporal).invalid()?;
    if let Some(dir) = truth {
        let path = dir.join(gaitvision::pipeline::REPORT_JSON);
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("reading {}", path.display()))
            .invalid()?;
        let t = GaitReport::from_json(&text)
            .with_context(|| format!("parsing {}", path.display()))
            .invalid()?;
        report.attach_truth(&t);
    }
    write_report(&common.out, &report).internal()?;
    print!("{}", report.to_text());
    Ok(())
}

fn drift_text(d: &DriftReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "DRIFT ({} steps, first and last {} steps)", d.n_steps, d.window);
    let _ = writeln!(s, "{:<22} {:>10} {:>10} {:>10}", "parameter", "start %", "end %", "delta");
    for e in &d.entries {
        let cell = |v: Option<f64>| v.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into());
        let _ = writeln!(s, "{:<22} {:>10} {:>10} {:>10}", e.parameter.name(), cell(e.start), cell(e.end), cell(e.delta));
    }
    let _ = writeln!(s, "mean drift: {:.3}%", d.mean_drift);
    let _ = writeln!(s, "decline detected: {}", if d.detects_decline() { "yes" } else { "no" });
    s
}

fn drift(common: &Common) -> Result<(), Failure> {
    let Some(cfg) = setup(common)? else { return Ok(()) };
    let calib = cfg.calibration(None).invalid()?;
    let walker = looped(&cfg.walker, cfg.drift.steps, common.seed);
    let rig = cfg.rig(&calib);
    let run = run_simulated(&walker, &calib, &rig, &cfg.noise, &cfg.temporal, common.seed).invalid()?;
    let d = drift_study(&run.report, &run.truth, cfg.drift.k).invalid()?;
    write(&common.out.join("drift.json"), &json(&d))?;
    let text = drift_text(&d);
    write(&common.out.join("drift.txt"), &text)?;
    write_report(&common.out.join(REPORT_DIR), &run.report).internal()?;
    print!("{text}");
    Ok(())
}

#[derive(Serialize)]
struct IdentifyOutput<'a> {
    labels: &'a [String],
    shuffled: bool,
    cycles: usize,
    steps: usize,
    kfold: &'a KFoldReport,
}

fn identify_text(names: &[String], rep: &KFoldReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "mean accuracy: {:.2}% over {} folds", rep.mean_accuracy, rep.fold_accuracy.len());
    let folds: Vec<String> = rep.fold_accuracy.iter().map(|a| format!("{a:.1}")).collect();
    let _ = writeln!(s, "fold accuracy: {}", folds.join(" "));
    let _ = writeln!(s, "confusion (rows true, columns predicted, {} windows):", rep.windows);
    let _ = write!(s, "{:>8}", "");
    for n in names {
        let _ = write!(s, "{n:>8}");
    }
    s.push('\n');
    for (n, row) in names.iter().zip(&rep.confusion) {
        let _ = write!(s, "{n:>8}");
        for c in row {
            let _ = write!(s, "{c:>8}");
        }
        s.push('\n');
    }
    s
}

fn identify(common: &Common, data: &Path, shuffle: bool, save_model: bool) -> Result<(), Failure> {
    let Some(cfg) = setup(common)? else { return Ok(()) };
    let ds = Dataset::load(data).invalid()?;
    let mut train_cfg = cfg.train.clone();
    train_cfg.seed = common.seed;
    let seqs = if shuffle { shuffle_labels(&ds.sequences, common.seed) } else { ds.sequences.clone() };
    let rep = train_kfold(&seqs, &train_cfg).invalid()?;
    let out = IdentifyOutput {
        labels: &ds.names,
        shuffled: shuffle,
        cycles: ds.sequences.len(),
        steps: ds.total_steps(),
        kfold: &rep,
    };
    write(&common.out.join("identify.json"), &json(&out))?;
    let text = identify_text(&ds.names, &rep);
    write(&common.out.join("identify.txt"), &text)?;
    if save_model {
        let scaler = FeatureScaler::fit(&seqs);
        let mut windows = Vec::new();
        for s in seqs.iter().filter(|s| !s.is_empty()) {
            windows.extend(segment_with_stride::<f64>(&scaler.apply(s), train_cfg.window, train_cfg.stride).invalid()?);
        }
        let model = train_model(&windows, ds.names.len(), &train_cfg, common.seed).invalid()?;
        std::fs::write(common.out.join("model.ckpt"), save_checkpoint(&model)).internal()?;
        write(&common.out.join("scaler.json"), &json(&scaler))?;
    }
    print!("{text}");
    Ok(())
}

fn calib_check(common: &Common, calib: Option<&Path>, fixture: Option<&Path>) -> Result<(), Failure> {
    let Some(cfg) = setup(common)? else { return Ok(()) };
    let calib = cfg.calibration(calib).invalid()?;
    let fx = match fixture {
        Some(p) => CheckerboardFixture::load(p).invalid()?,
        None => {
            let f = synthetic_checkerboard(&calib, &cfg.fixture, common.seed).invalid()?;
            f.save(&common.out.join("fixture.csv")).internal()?;
            f
        }
    };
    let rep = audit(&calib, &fx).invalid()?;
    write(&common.out.join("audit.json"), &json(&rep))?;
    println!(
        "{} poses, {} corner pairs: RMS {:.4} px, max {:.4} px",
        rep.per_pose.len(),
        fx.world.len(),
        rep.overall.rms,
        rep.overall.max
    );
    Ok(())
}

fn render(common: &Common) -> Result<(), Failure> {
    let Some(cfg) = setup(common)? else { return Ok(()) };
    let params = gaitvision::marker::RenderParams {
        seed: common.seed,
        ..cfg.marker.clone()
    };
    let img = render_marker(&params).invalid()?;
    img.save_pgm(&common.out.join("marker.pgm")).internal()?;
    write(&common.out.join("render.json"), &json(&params))?;
    println!(
        "{}x{} marker at ({}, {}) written to {}",
        params.width,
        params.height,
        params.center_u,
        params.center_v,
        common.out.join("marker.pgm").display()
    );
    Ok(())
}

fn detect(common: &Common, image: &Path) -> Result<(), Failure> {
    let Some(_) = setup(common)? else { return Ok(()) };
    let img = Image::load_pgm(image).invalid()?;
    let det = detect_center(&img);
    write(&common.out.join("detection.json"), &json(&det))?;
    match det.center.filter(|_| det.found) {
        Some(c) => println!("center ({:.3}, {:.3}), confidence {:.3}", c.u, c.v, det.confidence),
        None => println!("no marker found (confidence {:.3})", det.confidence),
    }
    Ok(())
}
