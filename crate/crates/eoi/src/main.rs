//! Command-line front end: single runs, preset sweeps over arms and seeds,
//! aggregation into curves, checkpoint evaluation and debugging dumps.
//!
//! Exit codes: 0 on success, 2 on configuration errors, 3 on runtime errors
//! (corrupt data, I/O, structural failures).

use clap::{Args, Parser, Subcommand};
use eoi::config::TrainConfig;
use eoi::envs::{Env, EnvKind};
use eoi::manifest::RunManifest;
use eoi::presets::{alpha_sweep_runs, preset, PresetRun};
use eoi::report::aggregate_preset;
use eoi::trainer::{train_cached, Trainer};
use eoi::{Error, Result};
use std::fs;
use std::io::Write as IoWrite;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

#[derive(Parser)]
#[command(name = "eoi", version, about = "Multi-agent RL with identity-classifier intrinsic rewards")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

/// Config file plus flag overrides shared by train and dump-probe.
#[derive(Args)]
struct ConfigArgs {
    /// Key=value config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Environment: pacmen, sparse-pacmen, windy, firefighters.
    #[arg(long)]
    env: Option<String>,
    /// Learner: qmix or actor-critic.
    #[arg(long)]
    learner: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    episodes: Option<usize>,
    /// Intrinsic reward weight.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Extra overrides as section.key=value, repeatable.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train one run and write metrics, heatmaps and checkpoints.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Run directory (reused if it already holds this exact config).
        #[arg(long, default_value = "runs/manual")]
        out: PathBuf,
    },
    /// Greedy evaluation of a finished run's checkpoints.
    Eval {
        /// Run directory containing manifest.txt and checkpoints/.
        run_dir: PathBuf,
        /// Number of greedy episodes.
        #[arg(long, default_value_t = 20)]
        episodes: usize,
    },
    /// Train every arm and seed of a named preset, then aggregate.
    Sweep {
        /// One of: fig4-pacmen, fig4-windy, fig7-sameinit, fig9-alpha-sweep,
        /// fig11-sparse, firefighters.
        preset: String,
        /// Root output directory; runs land in <out>/<preset>/<arm>/<seed>.
        #[arg(long, default_value = "runs")]
        out: PathBuf,
        /// Comma-separated alpha grid (fig9-alpha-sweep only).
        #[arg(long)]
        alphas: Option<String>,
    },
    /// Aggregate <preset-dir>/<arm>/<seed>/metrics.csv into curves.
    Report {
        preset_dir: PathBuf,
        /// Also write the long-format CSV here.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Roll fresh episodes through a run's checkpoints and dump classifier
    /// probabilities per buffered observation.
    DumpProbe {
        /// Run directory containing manifest.txt and checkpoints/.
        run_dir: PathBuf,
        /// Episodes to roll into the probe buffer.
        #[arg(long, default_value_t = 5)]
        episodes: usize,
        /// Output CSV path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print initial grid states as ASCII.
    EnvsRender {
        /// Single environment; all four when omitted.
        #[arg(long)]
        env: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli.cmd) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn run(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Train { cfg, out } => cmd_train(&cfg, &out),
        Cmd::Eval { run_dir, episodes } => cmd_eval(&run_dir, episodes),
        Cmd::Sweep { preset, out, alphas } => cmd_sweep(&preset, &out, alphas.as_deref()),
        Cmd::Report { preset_dir, csv } => cmd_report(&preset_dir, csv.as_deref()),
        Cmd::DumpProbe {
            run_dir,
            episodes,
            out,
        } => cmd_dump_probe(&run_dir, episodes, out.as_deref()),
        Cmd::EnvsRender { env, seed } => cmd_envs_render(env.as_deref(), seed),
    }
}

/// Merge a config file with flag overrides, in flag order after the file.
fn build_config(args: &ConfigArgs) -> Result<TrainConfig> {
    let text = match &args.config {
        Some(path) => fs::read_to_string(path)?,
        None => String::new(),
    };
    let mut overrides: Vec<(String, String)> = Vec::new();
    let mut push = |key: &str, value: String| overrides.push((key.to_string(), value));
    if let Some(v) = &args.env {
        push("env.kind", v.clone());
    }
    if let Some(v) = &args.learner {
        push("learner.kind", v.clone());
    }
    if let Some(v) = args.seed {
        push("train.seed", v.to_string());
    }
    if let Some(v) = args.episodes {
        push("train.episodes", v.to_string());
    }
    if let Some(v) = args.alpha {
        push("intrinsic.alpha", v.to_string());
    }
    if let Some(v) = args.batch_size {
        push("learner.batch_size", v.to_string());
    }
    for pair in &args.set {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set '{pair}' must look like section.key=value")))?;
        overrides.push((key.trim().to_string(), value.trim().to_string()));
    }
    TrainConfig::parse(&text, &overrides)
}

fn cmd_train(args: &ConfigArgs, out: &Path) -> Result<()> {
    let cfg = build_config(args)?;
    let (outcome, reused) = train_cached(&cfg, out)?;
    if reused {
        eprintln!("reusing finished run in {}", out.display());
    }
    if let Some(last) = outcome.rows.last() {
        println!(
            "episodes={} eval_reward={:.3} intrinsic={:.3} seconds={:.1}",
            last.episode, last.env_reward_mean, last.intrinsic_reward_mean, last.seconds
        );
    }
    Ok(())
}

fn cmd_eval(run_dir: &Path, episodes: usize) -> Result<()> {
    let manifest = RunManifest::read(run_dir)?;
    let mut cfg = manifest.config;
    cfg.eval_episodes = episodes;
    let mut trainer = Trainer::new(&cfg)?;
    trainer.load_checkpoints(&run_dir.join("checkpoints"))?;
    let summary = trainer.evaluate(0)?;
    println!(
        "episodes={episodes} mean_reward={:.4} std_reward={:.4} mean_intrinsic={:.4}",
        summary.mean_reward, summary.std_reward, summary.mean_intrinsic
    );
    Ok(())
}

fn worker_pool_size(n_runs: usize) -> Result<usize> {
    let threads = match std::env::var("EOI_THREADS") {
        Ok(v) => v
            .parse::<usize>()
            .ok()
            .filter(|&t| t >= 1)
            .ok_or_else(|| {
                Error::Config(format!("EOI_THREADS must be a positive integer, got '{v}'"))
            })?,
        Err(_) => std::thread::available_parallelism().map_or(1, |p| p.get()),
    };
    Ok(threads.min(n_runs.max(1)))
}

fn cmd_sweep(name: &str, out_root: &Path, alphas: Option<&str>) -> Result<()> {
    let runs: Vec<PresetRun> = match alphas {
        Some(list) => {
            if name != "fig9-alpha-sweep" {
                return Err(Error::Config(
                    "--alphas only applies to fig9-alpha-sweep".into(),
                ));
            }
            let grid: Vec<f64> = list
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Config(format!("bad alpha '{s}' in --alphas")))
                })
                .collect::<Result<_>>()?;
            alpha_sweep_runs(&grid)?
        }
        None => preset(name)?,
    };
    let preset_dir = out_root.join(name);
    fs::create_dir_all(&preset_dir)?;

    let threads = worker_pool_size(runs.len())?;
    eprintln!("sweep {name}: {} runs on {threads} workers", runs.len());
    let next = AtomicUsize::new(0);
    let failures: Mutex<Vec<(String, Error)>> = Mutex::new(Vec::new());
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(run) = runs.get(i) else { break };
                let dir = preset_dir.join(&run.arm).join(run.seed.to_string());
                match train_cached(&run.cfg, &dir) {
                    Ok((outcome, reused)) => {
                        let tail = outcome.rows.last().map_or(0.0, |r| r.env_reward_mean);
                        eprintln!(
                            "done {}/{} ({}) final_reward={tail:.3}",
                            run.arm,
                            run.seed,
                            if reused { "reused" } else { "trained" },
                        );
                    }
                    Err(e) => {
                        eprintln!("failed {}/{}: {e}", run.arm, run.seed);
                        failures
                            .lock()
                            .unwrap()
                            .push((format!("{}/{}", run.arm, run.seed), e));
                    }
                }
            });
        }
    });
    let failures = failures.into_inner().unwrap();
    if let Some((label, e)) = failures.into_iter().next() {
        return Err(Error::Corrupt(format!("run {label} failed: {e}")));
    }
    cmd_report(&preset_dir, Some(&preset_dir.join("summary.csv")))
}

fn cmd_report(preset_dir: &Path, csv: Option<&Path>) -> Result<()> {
    let report = aggregate_preset(preset_dir)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    if let Some(path) = csv {
        fs::write(path, report.long_csv())?;
        eprintln!("wrote {}", path.display());
    }
    print!("{}", report.summary_table());
    Ok(())
}

fn cmd_dump_probe(run_dir: &Path, episodes: usize, out: Option<&Path>) -> Result<()> {
    let manifest = RunManifest::read(run_dir)?;
    let mut cfg = manifest.config;
    // Rolling probe episodes must not trigger learner updates.
    cfg.warmup_transitions = usize::MAX;
    let mut trainer = Trainer::new(&cfg)?;
    trainer.load_checkpoints(&run_dir.join("checkpoints"))?;
    for _ in 0..episodes {
        trainer.run_episode()?;
    }
    let n = cfg.n_agents();
    let obs_dim = trainer
        .buffer
        .get(0)
        .samples
        .first()
        .map_or(0, |s| s.anchor.len());
    let mut text = String::from("agent");
    for d in 0..obs_dim {
        text.push_str(&format!(",obs_{d}"));
    }
    for i in 0..n {
        text.push_str(&format!(",p_{i}"));
    }
    text.push('\n');
    for idx in 0..trainer.buffer.len() {
        for sample in &trainer.buffer.get(idx).samples {
            let probs = trainer.classifier.predict(sample.anchor.view())?;
            text.push_str(&sample.label.to_string());
            for v in sample.anchor.iter() {
                text.push_str(&format!(",{v}"));
            }
            for v in probs.iter() {
                text.push_str(&format!(",{v}"));
            }
            text.push('\n');
        }
    }
    match out {
        Some(path) => fs::write(path, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn cmd_envs_render(env: Option<&str>, seed: u64) -> Result<()> {
    let kinds: Vec<EnvKind> = match env {
        Some(name) => vec![EnvKind::parse(name)?],
        None => vec![
            EnvKind::PacMen,
            EnvKind::SparsePacMen,
            EnvKind::WindyMaze,
            EnvKind::Firefighters,
        ],
    };
    for kind in kinds {
        let mut env = Env::new(kind, kind.default_horizon(), true);
        env.reset(seed);
        println!("== {} ==", kind.name());
        print!("{}", env.render());
        println!();
    }
    Ok(())
}
