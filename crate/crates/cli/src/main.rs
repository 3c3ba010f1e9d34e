use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sceneenc_cli::commands::{
    cmd_ablate, cmd_eval, cmd_gen, cmd_gradcheck, cmd_report, cmd_train, CommandOutcome,
    GradcheckFlags,
};
use sceneenc_cli::config::RunConfig;
use sceneenc_cli::manifest::{digest_file, now_ms, write_manifest, RunManifest};
use sceneenc_cli::CliError;

/// Scene-aware point-cloud segmentation workbench.
#[derive(Parser)]
#[command(name = "sceneenc", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// JSON run configuration; all fields optional, defaults are the
    /// standard benchmark
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset directory (holds dataset_manifest.json)
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output directory for artifacts
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed override
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (ablation cells run in parallel; each run stays
    /// single-threaded and deterministic)
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Strict published loss formulation: descriptor loss over present
    /// classes only and region loss divided by the selected count only
    #[arg(long)]
    paper_exact: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic labeled benchmark
    Gen(CommonArgs),
    /// Train on a generated dataset
    Train(CommonArgs),
    /// Evaluate a checkpoint on a dataset split
    Eval(EvalArgs),
    /// Train the feature-toggle grid and emit the comparison table
    Ablate(CommonArgs),
    /// Verify analytic gradients against central differences
    Gradcheck(GradcheckArgs),
    /// Re-render plots and summaries from run artifacts
    Report(CommonArgs),
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Checkpoint file (defaults to <out>/checkpoint.bin)
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Split to evaluate: train, val, or test
    #[arg(long, default_value = "test")]
    split: String,
}

#[derive(Args)]
struct GradcheckArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Disable the stop-gradient between descriptor and masking (debug)
    #[arg(long)]
    no_stop_gradient: bool,
    /// Corrupt one backward rule on purpose and verify the checker trips
    #[arg(long)]
    self_test: bool,
}

fn parse_split(s: &str) -> Result<sceneenc::data::Split, CliError> {
    match s {
        "train" => Ok(sceneenc::data::Split::Train),
        "val" => Ok(sceneenc::data::Split::Val),
        "test" => Ok(sceneenc::data::Split::Test),
        other => Err(CliError::Config(format!("unknown split `{other}`"))),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(
        env_logger::Env::new().filter_or("SCENEENC_LOG", "info"),
    )
    .format_timestamp(None)
    .init();

    let cli = Cli::parse();
    let started = now_ms();
    let (name, common) = match &cli.command {
        Command::Gen(c) => ("gen", c.clone()),
        Command::Train(c) => ("train", c.clone()),
        Command::Eval(e) => ("eval", e.common.clone()),
        Command::Ablate(c) => ("ablate", c.clone()),
        Command::Gradcheck(g) => ("gradcheck", g.common.clone()),
        Command::Report(c) => ("report", c.clone()),
    };

    let result = run(&cli.command);

    let (status, exit_code, outcome) = match &result {
        Ok(outcome) => ("ok".to_string(), 0, Some(outcome)),
        Err(e) => (format!("error: {e}"), e.exit_code(), None),
    };
    let manifest = RunManifest {
        command: name.to_string(),
        seed: common.seed.unwrap_or(0),
        threads: common.threads,
        config_path: common.config.as_ref().map(|p| p.display().to_string()),
        data_dir: common.data.as_ref().map(|p| p.display().to_string()),
        out_dir: common.out.as_ref().map(|p| p.display().to_string()),
        resolved_config: outcome.and_then(|o| o.resolved.clone()),
        started_unix_ms: started,
        finished_unix_ms: now_ms(),
        status,
        exit_code,
        artifacts: outcome
            .map(|o| o.artifacts.iter().filter_map(|p| digest_file(p)).collect())
            .unwrap_or_default(),
    };
    write_manifest(&manifest, common.out.as_deref());

    match result {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(command: &Command) -> Result<CommandOutcome, CliError> {
    match command {
        Command::Gen(c) => {
            let mut config = RunConfig::load(c.config.as_deref())?;
            config.apply_overrides(c.seed, c.paper_exact);
            cmd_gen(config, c.out.as_deref())
        }
        Command::Train(c) => {
            let mut config = RunConfig::load(c.config.as_deref())?;
            config.apply_overrides(c.seed, c.paper_exact);
            cmd_train(config, c.data.as_deref(), c.out.as_deref())
        }
        Command::Eval(e) => {
            let c = &e.common;
            let mut config = RunConfig::load(c.config.as_deref())?;
            config.apply_overrides(c.seed, c.paper_exact);
            let split = parse_split(&e.split)?;
            cmd_eval(config, c.data.as_deref(), c.out.as_deref(), e.checkpoint.as_deref(), split)
        }
        Command::Ablate(c) => {
            let mut config = RunConfig::load(c.config.as_deref())?;
            config.apply_overrides(c.seed, c.paper_exact);
            cmd_ablate(config, c.data.as_deref(), c.out.as_deref(), c.threads)
        }
        Command::Gradcheck(g) => {
            let c = &g.common;
            let mut config = RunConfig::load(c.config.as_deref())?;
            config.apply_overrides(c.seed, c.paper_exact);
            let flags =
                GradcheckFlags { no_stop_gradient: g.no_stop_gradient, self_test: g.self_test };
            cmd_gradcheck(config, c.out.as_deref(), c.seed, &flags)
        }
        Command::Report(c) => cmd_report(c.data.as_deref(), c.out.as_deref()),
    }
}
