//! `mmreach` command line: demonstrations, pretraining, training, evaluation,
//! ablation presets and heatmap export.
//!
//! Configuration is a JSON document (see `show-config` for the defaults).
//! Individual keys can be overridden with `--set path.to.key=value` or with
//! environment variables `MMREACH_<KEY>`, nested keys joined by `__`
//! (`MMREACH_AGENT__HIERARCHY=flat`). Unknown keys are rejected.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 malformed configuration or
//! arguments, 3 missing checkpoint.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use mmreach::demos::{generate_demos, save_demos, DemoConfig, DemoManifest};
use mmreach::policy::{Hierarchy, ManagerReward};
use mmreach::sim2d::{EnvId, EnvLayout};
use mmreach::trainer::metrics::{read_eval_log, write_eval_log, MetricsRow, MetricsWriter};
use mmreach::trainer::{self, write_heatmap, DemoVariant, EvalSummary, Heatmap, RunConfig, TrainError, Trainer};

const ENV_PREFIX: &str = "MMREACH_";

#[derive(Parser)]
#[command(
    name = "mmreach",
    version,
    about = "Predictive-reachability embodiment selection for a planar mobile manipulator",
    after_help = "Any config key can also be set through MMREACH_<KEY> environment variables, nested keys joined by `__` (MMREACH_AGENT__HIERARCHY=flat).\nExit codes: 1 runtime failure, 2 malformed configuration, 3 missing checkpoint."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// JSON run configuration; defaults apply to absent keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set agent.hierarchy=flat` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate scripted demonstrations as `<out>.jsonl` plus a manifest.
    DemoGen {
        /// empty, obstacle-base, obstacle-arm or room.
        #[arg(long, default_value = "empty")]
        env: String,
        #[arg(long, default_value_t = 50)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output stem; writes `<out>.jsonl` and `<out>.manifest.json`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Pretrain the world model and codec on demonstrations and save a checkpoint.
    Pretrain {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Full runs, one output directory per seed.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// A seed or an inclusive range `A..B`.
        #[arg(long)]
        seed: Option<String>,
        /// Parent directory; each run writes `seed_<N>/` below it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint: summary, metrics row, evaluation log and heatmap.
    Eval {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Checkpoint directory written by `train` or `pretrain`.
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 20)]
        episodes: usize,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a named preset: progress-vs-exploration, flat, de, dg, no, modified.
    Ablate {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// progress-vs-exploration, flat, de, dg, no or modified.
        #[arg(long)]
        preset: String,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Rebuild the arm-selection heatmap from an evaluation log.
    ExportHeatmap {
        /// Evaluation log (`eval_log.jsonl` or `final_eval_log.jsonl`).
        #[arg(long)]
        log: PathBuf,
        /// Layout the log was recorded in; sets the bounds and the blocked sector.
        #[arg(long, default_value = "empty")]
        env: String,
        /// Cell size in metres.
        #[arg(long, default_value_t = 0.1)]
        resolution: f64,
        /// Output directory for `heatmap.csv` and `heatmap.pgm`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the effective configuration after overrides.
    ShowConfig {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

#[derive(Debug)]
enum CliError {
    Config(String),
    MissingCheckpoint(String),
    Other(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Other(e)
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        if e.is_missing_checkpoint() {
            CliError::MissingCheckpoint(e.to_string())
        } else if let TrainError::Config(m) = e {
            CliError::Config(m)
        } else {
            CliError::Other(e.into())
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn parse_env(s: &str) -> Result<EnvId> {
    s.parse().map_err(|e: mmreach::sim2d::SimError| CliError::Config(e.to_string()))
}

/// Literal JSON when it parses, otherwise a string.
fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// Sets `path` in `doc`; the path must exist in `shape` (the serialized defaults).
fn apply_override(doc: &mut Value, shape: &Value, path: &[String], value: Value, origin: &str) -> Result<()> {
    let mut target = doc;
    let mut known = shape;
    for (i, key) in path.iter().enumerate() {
        known = known.get(key).ok_or_else(|| CliError::Config(format!("{origin}: unknown key `{}`", path[..=i].join("."))))?;
        if !target.is_object() {
            *target = Value::Object(Default::default());
        }
        let obj = target.as_object_mut().expect("object");
        if i + 1 == path.len() {
            obj.insert(key.clone(), value);
            return Ok(());
        }
        target = obj.entry(key.clone()).or_insert_with(|| known.clone());
    }
    Err(CliError::Config(format!("{origin}: empty key")))
}

fn load_config(args: &ConfigArgs) -> Result<RunConfig> {
    let mut doc = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            // Parse once as a typed config so diagnostics carry the line.
            serde_json::from_str::<RunConfig>(&text).map_err(|e| CliError::Config(format!("{}: line {} column {}: {e}", p.display(), e.line(), e.column())))?;
            serde_json::from_str::<Value>(&text).map_err(|e| CliError::Config(format!("{}: line {} column {}: {e}", p.display(), e.line(), e.column())))?
        }
        None => Value::Object(Default::default()),
    };
    let shape = serde_json::to_value(RunConfig::default()).expect("defaults serialize");
    let mut env: Vec<(String, String)> = std::env::vars().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
    env.sort();
    for (k, v) in env {
        let path: Vec<String> = k[ENV_PREFIX.len()..].split("__").map(|s| s.to_lowercase()).collect();
        apply_override(&mut doc, &shape, &path, parse_value(&v), &k)?;
    }
    for o in &args.overrides {
        let (k, v) = o.split_once('=').ok_or_else(|| CliError::Config(format!("--set `{o}`: expected KEY=VALUE")))?;
        let path: Vec<String> = k.split('.').map(str::to_string).collect();
        apply_override(&mut doc, &shape, &path, parse_value(v), &format!("--set {k}"))?;
    }
    let origin = args.config.as_ref().map_or("config".to_string(), |p| p.display().to_string());
    let cfg: RunConfig = serde_json::from_value(doc).map_err(|e| CliError::Config(format!("{origin}: {e}")))?;
    cfg.validate().map_err(|e| CliError::Config(format!("{origin}: {e}")))?;
    Ok(cfg)
}

fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let bad = || CliError::Config(format!("--seed `{s}`: expected N or A..B"));
    match s.split_once("..") {
        Some((a, b)) => {
            let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
            if a > b {
                return Err(bad());
            }
            Ok((a..=b).collect())
        }
        None => Ok(vec![s.trim().parse().map_err(|_| bad())?]),
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> anyhow::Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn train_one(cfg: RunConfig, out: &Path) -> Result<()> {
    let seed = cfg.seed;
    let s = trainer::run(cfg, out)?;
    println!(
        "seed {seed}: {} env steps, success {:.3}, arm-near-goal {}, first-arm {} -> {}",
        s.env_steps,
        s.final_eval.success_rate,
        fmt_opt(s.final_eval.arm_near_goal),
        fmt_opt(s.final_eval.first_arm_ratio),
        out.display()
    );
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("-".into(), |v| format!("{v:.3}"))
}

/// Named ablation: the variants it runs, each with its own configuration.
fn preset(name: &str, base: &RunConfig) -> Result<Vec<(&'static str, RunConfig)>> {
    let with = |f: &dyn Fn(&mut RunConfig)| {
        let mut c = base.clone();
        f(&mut c);
        c
    };
    Ok(match name {
        "progress-vs-exploration" => vec![
            ("progress", with(&|c| c.agent.manager_reward = ManagerReward::Progress)),
            ("exploration", with(&|c| c.agent.manager_reward = ManagerReward::Exploration)),
        ],
        "flat" => vec![("full", with(&|c| c.agent.hierarchy = Hierarchy::Full)), ("flat", with(&|c| c.agent.hierarchy = Hierarchy::Flat))],
        "de" => vec![("de", with(&|c| c.demo_variant = DemoVariant::DemoAsExperience))],
        "dg" => vec![("dg", with(&|c| c.demo_variant = DemoVariant::DemoAsGoal))],
        "no" => vec![("no", with(&|c| c.demo_variant = DemoVariant::NoDemo))],
        "modified" => vec![("modified", with(&|c| c.agent.modified = true))],
        other => return Err(CliError::Config(format!("unknown preset `{other}` (progress-vs-exploration, flat, de, dg, no, modified)"))),
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::DemoGen { env, count, seed, out } => {
            let env = parse_env(&env)?;
            let demos = generate_demos(&EnvLayout::builtin(env), seed, count, &DemoConfig::default()).map_err(anyhow::Error::from)?;
            save_demos(&out, env, &demos).map_err(anyhow::Error::from)?;
            let m = DemoManifest::summarize(env, &demos);
            println!("{} demonstrations for {env}: {} successful, mean length {:.1}", m.episodes, m.successes, m.mean_length);
        }
        Command::Pretrain { cfg, seed, out } => {
            let mut c = load_config(&cfg)?;
            c.seed = seed.unwrap_or(c.seed);
            let demos = c.load_or_generate_demos()?;
            let t = Trainer::new(c.clone(), demos)?;
            std::fs::create_dir_all(&out).map_err(anyhow::Error::from)?;
            std::fs::write(out.join("config.json"), c.to_json()).map_err(anyhow::Error::from)?;
            t.save_checkpoint(&out.join("checkpoint"))?;
            write_json(&out.join("pretrain.json"), &t.pretrain)?;
            if let Some(p) = t.pretrain {
                println!("pretrained {} steps: loss {:.4} -> {:.4}", p.steps, p.initial_loss, p.final_loss);
            }
        }
        Command::Train { cfg, seed, out } => {
            let c = load_config(&cfg)?;
            let seeds = match seed {
                Some(s) => parse_seeds(&s)?,
                None => vec![c.seed],
            };
            for s in seeds {
                train_one(RunConfig { seed: s, ..c.clone() }, &out.join(format!("seed_{s}")))?;
            }
        }
        Command::Eval { cfg, checkpoint, episodes, seed, out } => {
            let mut c = load_config(&cfg)?;
            c.seed = seed.unwrap_or(c.seed);
            let mut t = Trainer::from_checkpoint(c.clone(), &checkpoint)?;
            let eps = t.evaluate(episodes)?;
            let summary = EvalSummary::of(&eps);
            std::fs::create_dir_all(&out).map_err(anyhow::Error::from)?;
            let steps: Vec<_> = eps.iter().flat_map(|e| e.steps.iter().cloned()).collect();
            let mut log = BufWriter::new(File::create(out.join("eval_log.jsonl")).map_err(anyhow::Error::from)?);
            write_eval_log(&mut log, &steps)?;
            log.flush().map_err(anyhow::Error::from)?;
            let row = MetricsRow {
                eval_episodes: Some(summary.episodes),
                success_rate: Some(summary.success_rate),
                arm_near_goal: summary.arm_near_goal,
                first_arm_ratio: summary.first_arm_ratio,
                l_rew: Some(t.wm.l_rew()),
                ..Default::default()
            };
            let mut w = MetricsWriter::new(File::create(out.join("metrics.csv")).map_err(anyhow::Error::from)?);
            w.write(&row)?;
            write_json(&out.join("eval_summary.json"), &summary)?;
            let heat = Heatmap::from_steps(t.layout.bounds, c.heatmap_resolution, &steps);
            write_heatmap(&heat, &out)?;
            println!(
                "{} episodes: success {:.3}, arm-near-goal {}, first-arm {}, blocked-sector share {:.3}",
                summary.episodes,
                summary.success_rate,
                fmt_opt(summary.arm_near_goal),
                fmt_opt(summary.first_arm_ratio),
                heat.sector_fraction(&t.layout)
            );
        }
        Command::Ablate { cfg, preset: name, seed, out } => {
            let mut c = load_config(&cfg)?;
            c.seed = seed.unwrap_or(c.seed);
            for (label, variant) in preset(&name, &c)? {
                train_one(variant, &out.join(&name).join(label))?;
            }
        }
        Command::ExportHeatmap { log, env, resolution, out } => {
            let env = parse_env(&env)?;
            if !(resolution > 0.0) {
                return Err(CliError::Config("--resolution must be positive".into()));
            }
            let f = File::open(&log).with_context(|| format!("opening {}", log.display()))?;
            let steps = read_eval_log(BufReader::new(f))?;
            let layout = EnvLayout::builtin(env);
            let heat = Heatmap::from_steps(layout.bounds, resolution, &steps);
            std::fs::create_dir_all(&out).map_err(anyhow::Error::from)?;
            write_heatmap(&heat, &out)?;
            println!("{} arm selections, blocked-sector share {:.3}", heat.total(), heat.sector_fraction(&layout));
        }
        Command::ShowConfig { cfg } => {
            print!("{}", load_config(&cfg)?.to_json());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(m)) => {
            eprintln!("error: malformed configuration: {m}");
            ExitCode::from(2)
        }
        Err(CliError::MissingCheckpoint(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
        Err(CliError::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
