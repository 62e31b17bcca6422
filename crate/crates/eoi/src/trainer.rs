//! The closed training loop: episode rollout with interleaved updates,
//! balanced classifier batches, intrinsic-reward recomputation at sample
//! time, alpha/epsilon schedules, periodic deterministic evaluation, and
//! artifact output (metrics CSV, occupancy heatmaps, checkpoints).
//!
//! Randomness is split into purpose-specific streams so that ablation arms
//! differing only in the intrinsic machinery consume identical environment,
//! exploration and replay randomness: a degenerate intrinsic config then
//! follows the vanilla baseline's parameter trajectory bit for bit.

use crate::actor_critic::{AcCfg, AcLearner};
use crate::classifier::{sample_positive, Classifier, ClassifierSample, LossParts};
use crate::config::{AlphaSchedule, IntrinsicMode, LearnerKind, TrainConfig};
use crate::envs::{occupancy_heatmap, Env, Pos, OBS_DIM};
use crate::manifest::RunManifest;
use crate::nnkit::checkpoint::{load_file, save_file, TensorDict};
use crate::nnkit::Mlp;
use crate::qmix::{QmixCfg, QmixLearner};
use crate::replay::{BatchData, ReplayBuffer, Transition};
use crate::seeds::{episode_seed, stream_rng, Stream};
use crate::{Error, Result};
use ndarray::{Array1, Array2};
use rand_chacha::ChaCha8Rng;
use std::fs;
use std::io::{BufWriter, Write as IoWrite};
use std::path::{Path, PathBuf};
use std::time::Instant;

pub const METRICS_HEADER: &str = "episode,env_reward_mean,env_reward_std,intrinsic_reward_mean,classifier_accuracy,classifier_entropy,alpha,seconds";

/// Either learner behind one dispatch point.
pub enum Learner {
    Qmix(QmixLearner),
    ActorCritic(AcLearner),
}

impl Learner {
    /// Greedy joint action: argmax action values, or the policy mode.
    pub fn greedy(&self, obs: &[Array1<f64>]) -> Result<Vec<usize>> {
        match self {
            Learner::Qmix(l) => l.greedy(obs),
            Learner::ActorCritic(l) => l.greedy(obs),
        }
    }

    pub fn to_tensors(&self) -> TensorDict {
        match self {
            Learner::Qmix(l) => l.to_tensors(),
            Learner::ActorCritic(l) => l.to_tensors(),
        }
    }
}

/// One line of the metrics CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub episode: usize,
    pub env_reward_mean: f64,
    pub env_reward_std: f64,
    pub intrinsic_reward_mean: f64,
    pub classifier_accuracy: f64,
    pub classifier_entropy: f64,
    pub alpha: f64,
    pub seconds: f64,
}

impl MetricsRow {
    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{:.3}",
            self.episode,
            self.env_reward_mean,
            self.env_reward_std,
            self.intrinsic_reward_mean,
            self.classifier_accuracy,
            self.classifier_entropy,
            self.alpha,
            self.seconds
        )
    }

    pub fn parse(line: &str) -> Result<MetricsRow> {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(Error::Corrupt(format!(
                "metrics row has {} fields, expected 8: {line}",
                fields.len()
            )));
        }
        let num = |i: usize| {
            fields[i]
                .parse::<f64>()
                .map_err(|_| Error::Corrupt(format!("bad metrics number '{}'", fields[i])))
        };
        Ok(MetricsRow {
            episode: fields[0]
                .parse()
                .map_err(|_| Error::Corrupt(format!("bad episode index '{}'", fields[0])))?,
            env_reward_mean: num(1)?,
            env_reward_std: num(2)?,
            intrinsic_reward_mean: num(3)?,
            classifier_accuracy: num(4)?,
            classifier_entropy: num(5)?,
            alpha: num(6)?,
            seconds: num(7)?,
        })
    }
}

/// Read back a metrics CSV: header line, then one row per evaluation.
pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == METRICS_HEADER => {}
        _ => {
            return Err(Error::Corrupt(format!(
                "{}: missing metrics header",
                path.display()
            )))
        }
    }
    lines.map(MetricsRow::parse).collect()
}

/// Intrinsic weight at an episode index: constant, or linearly annealed to
/// zero across the episode budget.
pub fn alpha_at(episode: usize, cfg: &TrainConfig) -> f64 {
    match cfg.alpha_schedule {
        AlphaSchedule::Constant => cfg.alpha,
        AlphaSchedule::LinearToZero => {
            let frac = episode as f64 / cfg.episodes as f64;
            (cfg.alpha * (1.0 - frac)).max(0.0)
        }
    }
}

/// Exploration rate: linear from epsilon_start to epsilon_final over the
/// first epsilon_decay_fraction of the episode budget, flat afterwards.
pub fn epsilon_at(episode: usize, cfg: &TrainConfig) -> f64 {
    let span = cfg.epsilon_decay_fraction * cfg.episodes as f64;
    let frac = episode as f64 / span;
    if !(frac < 1.0) {
        return cfg.epsilon_final;
    }
    cfg.epsilon_start + (cfg.epsilon_final - cfg.epsilon_start) * frac
}

pub struct EvalSummary {
    pub mean_reward: f64,
    pub std_reward: f64,
    pub mean_intrinsic: f64,
    pub heatmaps: Vec<Array2<u32>>,
}

pub struct Trainer {
    pub cfg: TrainConfig,
    pub learner: Learner,
    pub classifier: Classifier,
    pub buffer: ReplayBuffer,
    pub episode: usize,
    pub last_classifier_loss: LossParts,
    env: Env,
    eval_env: Env,
    explore_rng: ChaCha8Rng,
    replay_rng: ChaCha8Rng,
    class_batch_rng: ChaCha8Rng,
    positive_rng: ChaCha8Rng,
    critic_rng: ChaCha8Rng,
    env_steps: u64,
    updates: u64,
}

impl Trainer {
    pub fn new(cfg: &TrainConfig) -> Result<Trainer> {
        cfg.validate()?;
        let n = cfg.n_agents();
        let env = Env::new(cfg.env, cfg.horizon as u32, cfg.include_position);
        let eval_env = Env::new(cfg.env, cfg.horizon as u32, cfg.include_position);
        let n_actions = cfg.env.n_actions();
        let learner = match cfg.learner {
            LearnerKind::Qmix => Learner::Qmix(QmixLearner::new(
                n,
                OBS_DIM,
                n_actions,
                QmixCfg {
                    gamma: cfg.gamma,
                    lr: cfg.qmix_lr,
                    ivf_lr: cfg.ivf_lr,
                    hidden: cfg.hidden,
                    embed: cfg.mixer_embed,
                    target_sync_interval: cfg.target_sync_interval,
                    shared_init: cfg.shared_init,
                    weight_decay: cfg.weight_decay,
                    grad_clip: cfg.grad_clip,
                },
                cfg.seed,
            )),
            LearnerKind::ActorCritic => Learner::ActorCritic(AcLearner::new(
                n,
                OBS_DIM,
                n_actions,
                AcCfg {
                    gamma: cfg.gamma,
                    actor_lr: cfg.actor_lr,
                    critic_lr: cfg.critic_lr,
                    hidden: cfg.hidden,
                    entropy_coef: cfg.entropy_coef,
                    target_sync_interval: cfg.target_sync_interval,
                    shared_init: cfg.shared_init,
                    weight_decay: cfg.weight_decay,
                    grad_clip: cfg.grad_clip,
                },
                cfg.seed,
            )),
        };
        let mut class_rng = stream_rng(cfg.seed, Stream::InitClassifier);
        let classifier = Classifier::new(OBS_DIM, cfg.hidden, n, cfg.classifier_lr, &mut class_rng);
        Ok(Trainer {
            learner,
            classifier,
            buffer: ReplayBuffer::new(cfg.buffer_capacity),
            episode: 0,
            last_classifier_loss: LossParts {
                total: 0.0,
                ce: 0.0,
                pd: 0.0,
                mi: 0.0,
            },
            env,
            eval_env,
            explore_rng: stream_rng(cfg.seed, Stream::Explore),
            replay_rng: stream_rng(cfg.seed, Stream::Replay),
            class_batch_rng: stream_rng(cfg.seed, Stream::ClassifierBatch),
            positive_rng: stream_rng(cfg.seed, Stream::Positive),
            critic_rng: stream_rng(cfg.seed, Stream::CriticTarget),
            env_steps: 0,
            updates: 0,
            cfg: cfg.clone(),
        })
    }

    pub fn update_count(&self) -> u64 {
        self.updates
    }

    /// One training episode: act, store transitions (environmental reward
    /// only) with per-agent classifier samples, and run interleaved updates
    /// once the replay buffer passes the warm-up size.
    pub fn run_episode(&mut self) -> Result<f64> {
        let n = self.cfg.n_agents();
        let seed = episode_seed(self.cfg.seed, Stream::Env, self.episode as u64);
        let mut obs = self.env.reset(seed);
        let mut histories: Vec<Vec<Array1<f64>>> =
            obs.iter().map(|o| vec![o.clone()]).collect();
        let eps = epsilon_at(self.episode, &self.cfg);
        let mut ep_return = 0.0;
        for t in 0..self.cfg.horizon {
            let actions = match &self.learner {
                Learner::Qmix(l) => l.act(&obs, eps, &mut self.explore_rng)?,
                Learner::ActorCritic(l) => l.act(&obs, &mut self.explore_rng)?,
            };
            let out = self.env.step(&actions)?;
            ep_return += out.reward;
            let samples: Vec<ClassifierSample> = (0..n)
                .map(|i| {
                    let (positive, positive_valid) = sample_positive(
                        &histories[i],
                        t,
                        self.cfg.positive_window,
                        &mut self.positive_rng,
                    );
                    ClassifierSample {
                        anchor: obs[i].clone(),
                        label: i,
                        positive,
                        positive_valid,
                    }
                })
                .collect();
            self.buffer.push(Transition {
                obs: std::mem::take(&mut obs),
                actions,
                reward: out.reward,
                next_obs: out.obs.clone(),
                done: out.done,
                samples,
            });
            for (h, o) in histories.iter_mut().zip(out.obs.iter()) {
                h.push(o.clone());
            }
            obs = out.obs;
            self.env_steps += 1;
            if self.buffer.len() >= self.cfg.warmup_transitions
                && self.env_steps % self.cfg.update_interval as u64 == 0
            {
                self.update_once()?;
            }
        }
        self.episode += 1;
        Ok(ep_return)
    }

    /// One alternation: a classifier step on a balanced batch, then a
    /// learner step on a uniformly sampled batch whose intrinsic rewards are
    /// recomputed under the current classifier.
    pub fn update_once(&mut self) -> Result<()> {
        let n = self.cfg.n_agents();
        let alpha = alpha_at(self.episode, &self.cfg);
        if self.cfg.intrinsic_mode != IntrinsicMode::None {
            let batch = self.buffer.sample_balanced_classifier_batch(
                self.cfg.batch_size,
                n,
                &mut self.class_batch_rng,
            )?;
            self.last_classifier_loss =
                self.classifier
                    .train_batch(&batch, self.cfg.beta1, self.cfg.beta2)?;
        }
        let idx = self.buffer.sample_indices(self.cfg.batch_size, &mut self.replay_rng);
        let batch = BatchData::from_indices(&self.buffer, &idx)?;
        let intrinsic = match self.cfg.intrinsic_mode.reward_mode() {
            Some(mode) => Some(batch.recompute_intrinsic(&self.classifier, mode)?),
            None => None,
        };
        match &mut self.learner {
            Learner::Qmix(l) => {
                l.update(&batch, intrinsic.as_ref(), alpha)?;
            }
            Learner::ActorCritic(l) => {
                l.update(&batch, intrinsic.as_ref(), alpha, &mut self.critic_rng)?;
            }
        }
        self.updates += 1;
        Ok(())
    }

    /// Deterministic greedy evaluation: fixed per-eval-point seeds, no
    /// exploration, no learning. Returns reward statistics, the mean
    /// intrinsic reward over visited observations, and per-agent occupancy
    /// grids.
    pub fn evaluate(&mut self, eval_index: usize) -> Result<EvalSummary> {
        let n = self.cfg.n_agents();
        let mode = self.cfg.intrinsic_mode.reward_mode();
        let mut returns = Vec::with_capacity(self.cfg.eval_episodes);
        let mut intrinsic_sum = 0.0;
        let mut intrinsic_count = 0usize;
        let mut pos_logs: Vec<Vec<Pos>> = Vec::new();
        for e in 0..self.cfg.eval_episodes {
            let seed = episode_seed(
                self.cfg.seed,
                Stream::EvalEnv,
                (eval_index * self.cfg.eval_episodes + e) as u64,
            );
            let mut obs = self.eval_env.reset(seed);
            pos_logs.push(self.eval_env.state().positions.clone());
            let mut ret = 0.0;
            loop {
                if let Some(m) = mode {
                    for (i, o) in obs.iter().enumerate() {
                        intrinsic_sum += self.classifier.intrinsic_reward(i, o.view(), m)?;
                        intrinsic_count += 1;
                    }
                }
                let actions = self.learner.greedy(&obs)?;
                let out = self.eval_env.step(&actions)?;
                ret += out.reward;
                pos_logs.push(self.eval_env.state().positions.clone());
                obs = out.obs;
                if out.done {
                    break;
                }
            }
            returns.push(ret);
        }
        let m = returns.len() as f64;
        let mean = returns.iter().sum::<f64>() / m;
        let var = returns.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / m;
        let map = self.eval_env.map();
        Ok(EvalSummary {
            mean_reward: mean,
            std_reward: var.sqrt(),
            mean_intrinsic: if intrinsic_count > 0 {
                intrinsic_sum / intrinsic_count as f64
            } else {
                0.0
            },
            heatmaps: occupancy_heatmap(n, map.width, map.height, &pos_logs),
        })
    }

    /// Classifier accuracy (argmax = label) and mean prediction entropy on a
    /// balanced probe batch; zeros when the intrinsic machinery is off.
    pub fn classifier_probe(&mut self) -> Result<(f64, f64)> {
        if self.cfg.intrinsic_mode == IntrinsicMode::None || self.buffer.is_empty() {
            return Ok((0.0, 0.0));
        }
        let batch = self.buffer.sample_balanced_classifier_batch(
            self.cfg.batch_size,
            self.cfg.n_agents(),
            &mut self.class_batch_rng,
        )?;
        let report = self.classifier.report(&batch)?;
        let correct: u64 = (0..self.cfg.n_agents())
            .map(|i| report.confusion[[i, i]])
            .sum();
        let total: u64 = report.confusion.iter().sum();
        Ok((correct as f64 / total as f64, report.mean_entropy))
    }

    /// Replace learner and classifier parameters with the ones saved under a
    /// run's `checkpoints/` directory.
    pub fn load_checkpoints(&mut self, dir: &Path) -> Result<()> {
        let dict = load_file(&dir.join("learner.bin"))?;
        let n = self.cfg.n_agents();
        let n_actions = self.cfg.env.n_actions();
        self.learner = match &self.learner {
            Learner::Qmix(l) => Learner::Qmix(QmixLearner::from_tensors(
                &dict,
                n,
                OBS_DIM,
                n_actions,
                l.cfg,
            )?),
            Learner::ActorCritic(l) => Learner::ActorCritic(AcLearner::from_tensors(
                &dict,
                n,
                OBS_DIM,
                n_actions,
                l.cfg,
            )?),
        };
        let dict = load_file(&dir.join("classifier.bin"))?;
        self.classifier.net = Mlp::from_tensors(&dict, "classifier", OBS_DIM, self.cfg.hidden, n)?;
        Ok(())
    }
}

pub struct TrainOutcome {
    pub rows: Vec<MetricsRow>,
    pub final_heatmaps: Vec<Array2<u32>>,
    pub out_dir: PathBuf,
}

/// Run the full training loop, writing metrics.csv, heatmaps/ and
/// checkpoints/ under `out_dir`.
pub fn train(cfg: &TrainConfig, out_dir: &Path) -> Result<TrainOutcome> {
    fs::create_dir_all(out_dir.join("heatmaps"))?;
    fs::create_dir_all(out_dir.join("checkpoints"))?;
    let mut trainer = Trainer::new(cfg)?;
    let metrics_path = out_dir.join("metrics.csv");
    let mut file = BufWriter::new(fs::File::create(&metrics_path)?);
    writeln!(file, "{METRICS_HEADER}")?;

    let start = Instant::now();
    let mut rows: Vec<MetricsRow> = Vec::new();
    let mut final_heatmaps = Vec::new();
    for ep in 0..cfg.episodes {
        trainer.run_episode()?;
        let last = ep + 1 == cfg.episodes;
        if (ep + 1) % cfg.eval_interval == 0 || last {
            let summary = trainer.evaluate(rows.len())?;
            let (accuracy, entropy) = trainer.classifier_probe()?;
            let row = MetricsRow {
                episode: ep + 1,
                env_reward_mean: summary.mean_reward,
                env_reward_std: summary.std_reward,
                intrinsic_reward_mean: summary.mean_intrinsic,
                classifier_accuracy: accuracy,
                classifier_entropy: entropy,
                alpha: alpha_at(ep, cfg),
                seconds: start.elapsed().as_secs_f64(),
            };
            writeln!(file, "{}", row.csv())?;
            file.flush()?;
            for (i, grid) in summary.heatmaps.iter().enumerate() {
                let path = out_dir
                    .join("heatmaps")
                    .join(format!("ep{:06}_agent{i}.csv", ep + 1));
                write_heatmap(&path, grid)?;
            }
            rows.push(row);
            if last {
                final_heatmaps = summary.heatmaps;
            }
        }
    }

    save_file(&out_dir.join("checkpoints/learner.bin"), &trainer.learner.to_tensors())?;
    let mut class_dict = TensorDict::new();
    class_dict.extend(trainer.classifier.net.to_tensors("classifier"));
    save_file(&out_dir.join("checkpoints/classifier.bin"), &class_dict)?;

    Ok(TrainOutcome {
        rows,
        final_heatmaps,
        out_dir: out_dir.to_path_buf(),
    })
}

/// Train into `out_dir`, or reuse it when it already holds a finished run of
/// the exact same config. The manifest is written before training starts so
/// a partial directory is identifiable; partial or mismatched directories
/// are retrained from scratch. Returns the outcome and whether it was reused.
pub fn train_cached(cfg: &TrainConfig, out_dir: &Path) -> Result<(TrainOutcome, bool)> {
    let manifest = RunManifest::new(cfg);
    if let Some(outcome) = load_finished_run(cfg, &manifest, out_dir)? {
        return Ok((outcome, true));
    }
    fs::create_dir_all(out_dir)?;
    manifest.write(out_dir)?;
    Ok((train(cfg, out_dir)?, false))
}

/// A completed, hash-matching run directory, or None if absent or unusable.
fn load_finished_run(
    cfg: &TrainConfig,
    manifest: &RunManifest,
    out_dir: &Path,
) -> Result<Option<TrainOutcome>> {
    let found = match RunManifest::read(out_dir) {
        Ok(m) => m,
        Err(_) => return Ok(None),
    };
    if found.config_sha256 != manifest.config_sha256 {
        return Ok(None);
    }
    let rows = match read_metrics(&out_dir.join("metrics.csv")) {
        Ok(rows) => rows,
        Err(_) => return Ok(None),
    };
    if rows.last().map(|r| r.episode) != Some(cfg.episodes) {
        return Ok(None);
    }
    for name in ["learner.bin", "classifier.bin"] {
        if !out_dir.join("checkpoints").join(name).is_file() {
            return Ok(None);
        }
    }
    let mut final_heatmaps = Vec::new();
    for i in 0..cfg.n_agents() {
        let path = out_dir
            .join("heatmaps")
            .join(format!("ep{:06}_agent{i}.csv", cfg.episodes));
        match read_heatmap(&path) {
            Ok(grid) => final_heatmaps.push(grid),
            Err(_) => return Ok(None),
        }
    }
    Ok(Some(TrainOutcome {
        rows,
        final_heatmaps,
        out_dir: out_dir.to_path_buf(),
    }))
}

/// Grid as CSV: one line per y row, x columns left to right.
fn write_heatmap(path: &Path, grid: &Array2<u32>) -> Result<()> {
    let (w, h) = grid.dim();
    let mut s = String::new();
    for y in 0..h {
        for x in 0..w {
            if x > 0 {
                s.push(',');
            }
            s.push_str(&grid[[x, y]].to_string());
        }
        s.push('\n');
    }
    fs::write(path, s)?;
    Ok(())
}

/// Read back a heatmap CSV into a grid indexed `[x, y]`.
pub fn read_heatmap(path: &Path) -> Result<Array2<u32>> {
    let text = fs::read_to_string(path)?;
    let rows: Vec<Vec<u32>> = text
        .lines()
        .map(|line| {
            line.split(',')
                .map(|f| {
                    f.parse::<u32>()
                        .map_err(|_| Error::Corrupt(format!("bad heatmap cell '{f}'")))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let h = rows.len();
    let w = rows.first().map_or(0, Vec::len);
    if h == 0 || w == 0 || rows.iter().any(|r| r.len() != w) {
        return Err(Error::Corrupt(format!(
            "{}: ragged or empty heatmap",
            path.display()
        )));
    }
    let mut grid = Array2::zeros((w, h));
    for (y, row) in rows.iter().enumerate() {
        for (x, &v) in row.iter().enumerate() {
            grid[[x, y]] = v;
        }
    }
    Ok(grid)
}
