//! Command-line entry point. Settings resolve in order: built-in defaults,
//! then the config file (`--config` or `$MICROFLOW_CONFIG`), then one flag
//! per config key (`--delta-t-ms`, `--m-history`, `--mu`, ...).

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Arg, ArgAction, Command};
use microflow::files;
use microflow::stages::{self, Ctx};
use microflow_core::config::{RunConfig, CONFIG_KEYS};

fn build_command() -> Command {
    let mut cmd = Command::new("microflow")
        .about("Tick-level order-flow factor mining pipeline")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .arg(
            Arg::new("config")
                .long("config")
                .value_name("PATH")
                .global(true)
                .help("Config file (flat key = value); falls back to $MICROFLOW_CONFIG"),
        );
    for key in CONFIG_KEYS {
        let flag: &'static str =
            Box::leak(key.replace('_', "-").into_boxed_str());
        cmd = cmd.arg(
            Arg::new(*key)
                .long(flag)
                .value_name("VALUE")
                .global(true)
                .action(ArgAction::Set)
                .help_heading("Config overrides"),
        );
    }
    for stage in stages::STAGES {
        cmd = cmd.subcommand(Command::new(*stage).about(stage_about(stage)));
    }
    cmd.subcommand(Command::new("run-all").about("Run every stage in order"))
}

fn stage_about(stage: &str) -> &'static str {
    match stage {
        "gen-data" => "Generate the synthetic order-flow dataset with anomaly labels",
        "replay" => "Replay order flow into transaction logs",
        "segment" => "Split days into fixed windows and dump per-window counts",
        "train-context" => "Train the recurrent book generators",
        "train-svdd" => "Train the attention extractor under the hypersphere objective",
        "extract" => "Extract per-window features with the frozen models",
        "select" => "Rank windows by uniqueness and select the top fraction",
        "baselines" => "Compute rule-based baseline selections",
        "evaluate" => "Fit prediction heads, run the execution policy, write metrics.json",
        _ => "",
    }
}

fn resolve_config(matches: &clap::ArgMatches) -> Result<RunConfig> {
    let mut cfg = match matches
        .get_one::<String>("config")
        .cloned()
        .or_else(|| std::env::var("MICROFLOW_CONFIG").ok())
    {
        Some(path) => files::load_config(&PathBuf::from(&path))
            .with_context(|| format!("loading config {path}"))?,
        None => RunConfig::default(),
    };
    for key in CONFIG_KEYS {
        if let Some(value) = matches.get_one::<String>(key) {
            cfg.set(key, value).map_err(|e| anyhow::anyhow!("--{}: {e}", key.replace('_', "-")))?;
        }
    }
    cfg.validate().map_err(|e| anyhow::anyhow!("{e}"))?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let matches = build_command().get_matches();
    let (stage, _) = matches.subcommand().expect("subcommand required");
    let run = || -> Result<()> {
        let cfg = resolve_config(&matches)?;
        let ctx = Ctx::new(cfg)?;
        if stage == "run-all" {
            stages::run_all(&ctx)
        } else {
            stages::run_stage(&ctx, stage)
        }
    };
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("microflow: stage {stage} failed: {e:#}");
            ExitCode::FAILURE
        }
    }
}
