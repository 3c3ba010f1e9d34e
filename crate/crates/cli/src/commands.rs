//! The six workbench commands. Each returns the artifacts it wrote so the
//! run manifest can digest them.

use std::path::{Path, PathBuf};

use sceneenc::data::{build_benchmark, load_dataset, save_dataset, Split, DATASET_MANIFEST};
use sceneenc::trainer::{
    evaluate, load_checkpoint, save_checkpoint, train, EpochRecord, TrainOutcome,
};
use sceneenc::verify::{run_gradient_verification, VerifyOptions, FULL_MODEL_TOLERANCE};

use crate::ablation::run_ablation;
use crate::config::RunConfig;
use crate::error::CliError;
use crate::svg::{line_chart, Series};

pub struct CommandOutcome {
    pub artifacts: Vec<PathBuf>,
    pub resolved: Option<RunConfig>,
}

fn prepare_out_dir(out: Option<&Path>) -> Result<PathBuf, CliError> {
    let out = out.ok_or_else(|| CliError::Config("missing --out directory".into()))?;
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() && !parent.exists() {
            return Err(CliError::Config(format!(
                "output directory parent {} does not exist",
                parent.display()
            )));
        }
    }
    std::fs::create_dir_all(out)
        .map_err(|e| CliError::Config(format!("cannot create {}: {e}", out.display())))?;
    Ok(out.to_path_buf())
}

fn require_data(data: Option<&Path>) -> Result<PathBuf, CliError> {
    data.map(Path::to_path_buf)
        .ok_or_else(|| CliError::Config("missing --data directory".into()))
}

pub fn cmd_gen(config: RunConfig, out: Option<&Path>) -> Result<CommandOutcome, CliError> {
    let out = prepare_out_dir(out)?;
    let dataset = build_benchmark(&config.data, config.train.seed)?;
    save_dataset(&dataset, &out)?;
    log::info!(
        "generated {} scenes ({} train / {} val / {} test) into {}",
        dataset.clouds.len(),
        dataset.indices(Split::Train).len(),
        dataset.indices(Split::Val).len(),
        dataset.indices(Split::Test).len(),
        out.display()
    );
    let mut artifacts: Vec<PathBuf> = (0..dataset.clouds.len())
        .map(|i| out.join(format!("scene_{i:04}.csv")))
        .collect();
    artifacts.push(out.join(DATASET_MANIFEST));
    Ok(CommandOutcome { artifacts, resolved: Some(config) })
}

fn history_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from(
        "epoch,lambda3,train_total,train_cls,train_des,train_rs,val_miou,val_descriptor_f1,val_noise\n",
    );
    for r in history {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.epoch,
            r.lambda3,
            r.train_total,
            r.train_cls,
            r.train_des,
            r.train_rs,
            r.val_miou,
            r.val_descriptor_f1,
            r.val_noise
        ));
    }
    out
}

fn loss_curve_svg(history: &[EpochRecord]) -> String {
    let pick = |f: fn(&EpochRecord) -> f64| -> Vec<(f64, f64)> {
        history.iter().map(|r| (r.epoch as f64, f(r))).collect()
    };
    let series = vec![
        Series { name: "total".into(), points: pick(|r| r.train_total) },
        Series { name: "cls".into(), points: pick(|r| r.train_cls) },
        Series { name: "descriptor".into(), points: pick(|r| r.train_des) },
        Series { name: "region".into(), points: pick(|r| r.train_rs) },
        Series { name: "val mIoU".into(), points: pick(|r| r.val_miou) },
    ];
    line_chart("training curves", "epoch", "loss / mIoU", &series)
}

fn write_train_artifacts(outcome: &TrainOutcome, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let ckpt_path = out.join("checkpoint.bin");
    let best_path = out.join("checkpoint_best.bin");
    let history_path = out.join("history.csv");
    let curve_path = out.join("loss_curve.svg");
    save_checkpoint(&outcome.final_checkpoint, &ckpt_path)?;
    save_checkpoint(&outcome.best_checkpoint, &best_path)?;
    std::fs::write(&history_path, history_csv(&outcome.final_checkpoint.history))?;
    std::fs::write(&curve_path, loss_curve_svg(&outcome.final_checkpoint.history))?;
    Ok(vec![ckpt_path, best_path, history_path, curve_path])
}

pub fn cmd_train(
    config: RunConfig,
    data: Option<&Path>,
    out: Option<&Path>,
) -> Result<CommandOutcome, CliError> {
    let out = prepare_out_dir(out)?;
    let dataset = load_dataset(&require_data(data)?)?;
    let outcome = train(&config.train, &dataset)?;
    let last = outcome.final_checkpoint.history.last().expect("at least one epoch");
    log::info!(
        "training done: final val mIoU {:.4}, best {:.4} at epoch {}",
        last.val_miou,
        outcome.best_checkpoint.history.last().map(|r| r.val_miou).unwrap_or(f64::NAN),
        outcome.best_epoch
    );
    let artifacts = write_train_artifacts(&outcome, &out)?;
    Ok(CommandOutcome { artifacts, resolved: Some(config) })
}

pub fn cmd_eval(
    config: RunConfig,
    data: Option<&Path>,
    out: Option<&Path>,
    checkpoint: Option<&Path>,
    split: Split,
) -> Result<CommandOutcome, CliError> {
    let out = prepare_out_dir(out)?;
    let ckpt_path = checkpoint.map(Path::to_path_buf).unwrap_or_else(|| out.join("checkpoint.bin"));
    let ckpt = load_checkpoint(&ckpt_path)?;
    let dataset = load_dataset(&require_data(data)?)?;
    let report = evaluate(&ckpt, &dataset, split)?;
    let metrics_path = out.join("metrics.csv");
    std::fs::write(&metrics_path, report.to_csv())?;
    log::info!(
        "eval ({:?}): mIoU {:.4}, mcIoU {:.4}, descriptor F1 {:.4}, noise {:.4}, scene encoder {}",
        split,
        report.iou.miou,
        report.iou.mciou,
        report.descriptor.micro.f1,
        report.noise,
        if report.scene_encoder_active { "active" } else { "bypassed" }
    );
    println!("{}", report.to_csv());
    Ok(CommandOutcome { artifacts: vec![metrics_path], resolved: Some(config) })
}

pub fn cmd_ablate(
    config: RunConfig,
    data: Option<&Path>,
    out: Option<&Path>,
    threads: usize,
) -> Result<CommandOutcome, CliError> {
    let out = prepare_out_dir(out)?;
    let dataset = load_dataset(&require_data(data)?)?;
    let seeds: Vec<u64> = (0..config.ablation_seeds)
        .map(|i| sceneenc::seeding::mix(config.train.seed, 0xAB1A7E ^ i as u64))
        .collect();
    let table = run_ablation(&dataset, &config.train, config.data.confusable_pair, &seeds, threads)?;
    let csv_path = out.join("ablation.csv");
    let svg_path = out.join("ablation_bars.svg");
    std::fs::write(&csv_path, table.to_csv())?;
    std::fs::write(&svg_path, table.to_bar_svg())?;
    println!("{}", table.to_csv());
    Ok(CommandOutcome { artifacts: vec![csv_path, svg_path], resolved: Some(config) })
}

pub struct GradcheckFlags {
    pub no_stop_gradient: bool,
    pub self_test: bool,
}

pub fn cmd_gradcheck(
    config: RunConfig,
    out: Option<&Path>,
    seed: Option<u64>,
    flags: &GradcheckFlags,
) -> Result<CommandOutcome, CliError> {
    let opts = VerifyOptions {
        seed: seed.unwrap_or(config.train.seed),
        stop_gradient: !flags.no_stop_gradient,
        fault_relu: flags.self_test,
        ..VerifyOptions::default()
    };
    let started = std::time::Instant::now();
    let report = run_gradient_verification(&opts);
    let elapsed = started.elapsed();

    let mut text = String::new();
    text.push_str("loss,group,params,max_rel_error\n");
    for case in &report.cases {
        text.push_str(&format!(
            "{},{},{},{:.3e}\n",
            case.loss, case.group, case.params_checked, case.max_rel_error
        ));
    }
    text.push_str(&format!("worst,,,{:.3e}\n", report.worst()));
    print!("{text}");
    println!("elapsed: {:.2}s", elapsed.as_secs_f64());

    if flags.no_stop_gradient {
        println!(
            "info: stop-gradient disabled; descriptor head ∂cls mass = {:.3e} (nonzero expected)",
            report.scene_head_cls_adjoint_mass
        );
    } else {
        println!(
            "descriptor head ∂cls adjoints exactly zero: {}",
            report.scene_head_cls_adjoint_zero
        );
    }

    let mut artifacts = Vec::new();
    if let Some(out) = out {
        let out = prepare_out_dir(Some(out))?;
        let path = out.join("gradcheck_report.csv");
        std::fs::write(&path, &text)?;
        artifacts.push(path);
    }

    if flags.self_test {
        return match report.first_failure(FULL_MODEL_TOLERANCE) {
            Some(case) => Err(CliError::Verification(format!(
                "self-test: corrupted relu backward detected ({} / {} rel err {:.3e})",
                case.loss, case.group, case.max_rel_error
            ))),
            None => Err(CliError::Verification(
                "self-test failed: the corrupted relu backward went undetected".into(),
            )),
        };
    }

    let structural_pass = if flags.no_stop_gradient {
        report.worst() <= FULL_MODEL_TOLERANCE
    } else {
        report.passed(FULL_MODEL_TOLERANCE)
    };
    if structural_pass {
        println!("gradcheck: PASS (worst {:.3e} <= {FULL_MODEL_TOLERANCE:?})", report.worst());
        Ok(CommandOutcome { artifacts, resolved: Some(config) })
    } else if let Some(case) = report.first_failure(FULL_MODEL_TOLERANCE) {
        Err(CliError::Verification(format!(
            "gradcheck: FAIL at {} / {}: rel err {:.3e} > {FULL_MODEL_TOLERANCE}",
            case.loss, case.group, case.max_rel_error
        )))
    } else {
        Err(CliError::Verification(
            "gradcheck: FAIL — descriptor head receives classification gradient despite stop-gradient"
                .into(),
        ))
    }
}

pub fn cmd_report(data: Option<&Path>, out: Option<&Path>) -> Result<CommandOutcome, CliError> {
    let data = require_data(data)?;
    let out = prepare_out_dir(out)?;
    let mut artifacts = Vec::new();
    let mut found = false;

    let history_path = data.join("history.csv");
    if history_path.exists() {
        found = true;
        let text = std::fs::read_to_string(&history_path)?;
        let history = parse_history(&text)?;
        let path = out.join("loss_curve.svg");
        std::fs::write(&path, loss_curve_svg(&history))?;
        if let Some(last) = history.last() {
            println!(
                "history: {} epochs, final val mIoU {:.4}, descriptor F1 {:.4}, noise {:.4}",
                history.len(),
                last.val_miou,
                last.val_descriptor_f1,
                last.val_noise
            );
        }
        artifacts.push(path);
    }

    let ablation_path = data.join("ablation.csv");
    if ablation_path.exists() {
        found = true;
        let text = std::fs::read_to_string(&ablation_path)?;
        let bars = parse_ablation_bars(&text)?;
        let path = out.join("ablation_bars.svg");
        std::fs::write(&path, crate::svg::bar_chart("ablation cells (test mIoU)", "mIoU", &bars))?;
        print!("{text}");
        artifacts.push(path);
    }

    let metrics_path = data.join("metrics.csv");
    if metrics_path.exists() {
        found = true;
        print!("{}", std::fs::read_to_string(&metrics_path)?);
    }

    if !found {
        return Err(CliError::Config(format!(
            "nothing to report in {} (no history.csv, ablation.csv, or metrics.csv)",
            data.display()
        )));
    }
    Ok(CommandOutcome { artifacts, resolved: None })
}

fn parse_history(text: &str) -> Result<Vec<EpochRecord>, CliError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 9 {
            return Err(CliError::Config(format!("history.csv line {}: expected 9 fields", i + 1)));
        }
        let num = |s: &str| -> Result<f64, CliError> {
            s.parse().map_err(|_| CliError::Config(format!("history.csv line {}: bad number {s}", i + 1)))
        };
        out.push(EpochRecord {
            epoch: num(f[0])? as usize,
            lambda3: num(f[1])?,
            train_total: num(f[2])?,
            train_cls: num(f[3])?,
            train_des: num(f[4])?,
            train_rs: num(f[5])?,
            val_miou: num(f[6])?,
            val_descriptor_f1: num(f[7])?,
            val_noise: num(f[8])?,
        });
    }
    Ok(out)
}

fn parse_ablation_bars(text: &str) -> Result<Vec<crate::svg::Bar>, CliError> {
    let mut bars = Vec::new();
    for line in text.lines() {
        if line.starts_with('#') || line.starts_with("cell,") || line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() < 5 {
            continue;
        }
        let value: f64 = f[3].parse().unwrap_or(f64::NAN);
        let stddev: f64 = f[4].parse().unwrap_or(0.0);
        bars.push(crate::svg::Bar { label: format!("{}/{}", f[0], f[1]), value, stddev });
    }
    if bars.is_empty() {
        return Err(CliError::Config("ablation.csv holds no result rows".into()));
    }
    Ok(bars)
}
