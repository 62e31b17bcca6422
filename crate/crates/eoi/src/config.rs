//! Training configuration: sectioned key=value text format, per-task
//! defaults, flag overrides, and validation.
//!
//! The format is deliberately plain: `[section]` headers, one `key = value`
//! per line, `#` comments. Unknown sections or keys are hard errors naming
//! the offender, so typos cannot silently fall back to defaults.

use crate::classifier::RewardMode;
use crate::envs::EnvKind;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LearnerKind {
    Qmix,
    ActorCritic,
}

impl LearnerKind {
    pub fn name(&self) -> &'static str {
        match self {
            LearnerKind::Qmix => "qmix",
            LearnerKind::ActorCritic => "actor-critic",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "qmix" => Ok(LearnerKind::Qmix),
            "actor-critic" => Ok(LearnerKind::ActorCritic),
            other => Err(Error::Config(format!(
                "unknown learner kind '{other}' (expected qmix or actor-critic)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntrinsicMode {
    Eoi,
    Diayn,
    None,
}

impl IntrinsicMode {
    pub fn name(&self) -> &'static str {
        match self {
            IntrinsicMode::Eoi => "eoi",
            IntrinsicMode::Diayn => "diayn",
            IntrinsicMode::None => "none",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "eoi" => Ok(IntrinsicMode::Eoi),
            "diayn" => Ok(IntrinsicMode::Diayn),
            "none" => Ok(IntrinsicMode::None),
            other => Err(Error::Config(format!(
                "unknown intrinsic mode '{other}' (expected eoi, diayn or none)"
            ))),
        }
    }

    pub fn reward_mode(&self) -> Option<RewardMode> {
        match self {
            IntrinsicMode::Eoi => Some(RewardMode::Eoi),
            IntrinsicMode::Diayn => Some(RewardMode::Diayn),
            IntrinsicMode::None => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlphaSchedule {
    Constant,
    LinearToZero,
}

impl AlphaSchedule {
    pub fn name(&self) -> &'static str {
        match self {
            AlphaSchedule::Constant => "constant",
            AlphaSchedule::LinearToZero => "linear-to-zero",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(AlphaSchedule::Constant),
            "linear-to-zero" => Ok(AlphaSchedule::LinearToZero),
            other => Err(Error::Config(format!(
                "unknown alpha schedule '{other}' (expected constant or linear-to-zero)"
            ))),
        }
    }
}

/// Everything one training run needs; serializes to the sectioned text
/// format and back without loss.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub env: EnvKind,
    pub horizon: usize,
    pub include_position: bool,

    pub learner: LearnerKind,
    pub gamma: f64,
    pub hidden: usize,
    pub qmix_lr: f64,
    pub ivf_lr: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub entropy_coef: f64,
    pub mixer_embed: usize,
    pub target_sync_interval: u64,
    pub weight_decay: f64,
    pub grad_clip: f64,
    pub shared_init: bool,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub update_interval: usize,
    pub warmup_transitions: usize,
    pub epsilon_start: f64,
    pub epsilon_final: f64,
    pub epsilon_decay_fraction: f64,

    pub intrinsic_mode: IntrinsicMode,
    pub alpha: f64,
    pub alpha_schedule: AlphaSchedule,
    pub beta1: f64,
    pub beta2: f64,
    pub positive_window: usize,
    pub classifier_lr: f64,

    pub episodes: usize,
    pub seed: u64,
    pub eval_interval: usize,
    pub eval_episodes: usize,
}

impl TrainConfig {
    /// Per-task, per-learner defaults: gamma 0.98, horizon by task, alpha
    /// 0.05 for the value-factorization learner and 0.2 for actor-critic,
    /// beta1 0.04, beta2 0.1, positive window 4, batch 128, buffer 2e4,
    /// classifier/actor lr 1e-3, critic/qmix lr 1e-4.
    pub fn defaults(env: EnvKind, learner: LearnerKind) -> TrainConfig {
        let alpha = match learner {
            LearnerKind::Qmix => 0.05,
            LearnerKind::ActorCritic => 0.2,
        };
        TrainConfig {
            env,
            horizon: env.default_horizon() as usize,
            include_position: true,
            learner,
            gamma: 0.98,
            hidden: 128,
            qmix_lr: 1e-4,
            ivf_lr: 1e-4,
            actor_lr: 1e-3,
            critic_lr: 1e-4,
            entropy_coef: 0.01,
            mixer_embed: 32,
            target_sync_interval: 200,
            weight_decay: 0.0,
            grad_clip: 0.0,
            shared_init: false,
            batch_size: 128,
            buffer_capacity: 20_000,
            update_interval: 1,
            warmup_transitions: 1280,
            epsilon_start: 1.0,
            epsilon_final: 0.05,
            epsilon_decay_fraction: 0.5,
            intrinsic_mode: IntrinsicMode::Eoi,
            alpha,
            alpha_schedule: AlphaSchedule::Constant,
            beta1: 0.04,
            beta2: 0.1,
            positive_window: 4,
            classifier_lr: 1e-3,
            episodes: 20_000,
            seed: 0,
            eval_interval: 100,
            eval_episodes: 20,
        }
    }

    pub fn n_agents(&self) -> usize {
        self.env.n_agents()
    }

    /// Parse the text format plus `section.key=value` overrides. Defaults
    /// come from the (env, learner) pair, which may itself be set by the
    /// file or the overrides; every other key then lands on top.
    pub fn parse(text: &str, overrides: &[(String, String)]) -> Result<TrainConfig> {
        let mut pairs = parse_pairs(text)?;
        for (k, v) in overrides {
            let (section, key) = k.split_once('.').ok_or_else(|| {
                Error::Config(format!("override '{k}' must look like section.key"))
            })?;
            pairs.push((section.to_string(), key.to_string(), v.clone()));
        }

        let mut env = EnvKind::PacMen;
        let mut learner = LearnerKind::Qmix;
        for (section, key, value) in &pairs {
            match (section.as_str(), key.as_str()) {
                ("env", "kind") => env = EnvKind::parse(value)?,
                ("learner", "kind") => learner = LearnerKind::parse(value)?,
                _ => {}
            }
        }
        let mut cfg = TrainConfig::defaults(env, learner);
        for (section, key, value) in &pairs {
            cfg.set(section, key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Apply one key; unknown section/key or a malformed value is an error
    /// naming the key.
    pub fn set(&mut self, section: &str, key: &str, value: &str) -> Result<()> {
        let full = format!("{section}.{key}");
        let bad = |what: &str| Error::Config(format!("{full}: invalid {what} '{value}'"));
        macro_rules! num {
            ($t:ty, $what:expr) => {
                value.parse::<$t>().map_err(|_| bad($what))?
            };
        }
        match (section, key) {
            ("env", "kind") => self.env = EnvKind::parse(value)?,
            ("env", "horizon") => self.horizon = num!(usize, "step count"),
            ("env", "include_position") => self.include_position = num!(bool, "boolean"),

            ("learner", "kind") => self.learner = LearnerKind::parse(value)?,
            ("learner", "gamma") => self.gamma = num!(f64, "number"),
            ("learner", "hidden") => self.hidden = num!(usize, "width"),
            ("learner", "qmix_lr") => self.qmix_lr = num!(f64, "rate"),
            ("learner", "ivf_lr") => self.ivf_lr = num!(f64, "rate"),
            ("learner", "actor_lr") => self.actor_lr = num!(f64, "rate"),
            ("learner", "critic_lr") => self.critic_lr = num!(f64, "rate"),
            ("learner", "entropy_coef") => self.entropy_coef = num!(f64, "number"),
            ("learner", "mixer_embed") => self.mixer_embed = num!(usize, "width"),
            ("learner", "weight_decay") => self.weight_decay = num!(f64, "number"),
            ("learner", "grad_clip") => self.grad_clip = num!(f64, "number"),
            ("learner", "target_sync_interval") => {
                self.target_sync_interval = num!(u64, "interval")
            }
            ("learner", "shared_init") => self.shared_init = num!(bool, "boolean"),
            ("learner", "batch_size") => self.batch_size = num!(usize, "size"),
            ("learner", "buffer_capacity") => self.buffer_capacity = num!(usize, "size"),
            ("learner", "update_interval") => self.update_interval = num!(usize, "interval"),
            ("learner", "warmup_transitions") => {
                self.warmup_transitions = num!(usize, "size")
            }
            ("learner", "epsilon_start") => self.epsilon_start = num!(f64, "number"),
            ("learner", "epsilon_final") => self.epsilon_final = num!(f64, "number"),
            ("learner", "epsilon_decay_fraction") => {
                self.epsilon_decay_fraction = num!(f64, "number")
            }

            ("intrinsic", "mode") => self.intrinsic_mode = IntrinsicMode::parse(value)?,
            ("intrinsic", "alpha") => self.alpha = num!(f64, "number"),
            ("intrinsic", "alpha_schedule") => {
                self.alpha_schedule = AlphaSchedule::parse(value)?
            }
            ("intrinsic", "beta1") => self.beta1 = num!(f64, "number"),
            ("intrinsic", "beta2") => self.beta2 = num!(f64, "number"),
            ("intrinsic", "positive_window") => {
                self.positive_window = num!(usize, "window")
            }
            ("intrinsic", "classifier_lr") => self.classifier_lr = num!(f64, "rate"),

            ("train", "episodes") => self.episodes = num!(usize, "count"),
            ("train", "seed") => self.seed = num!(u64, "seed"),
            ("train", "eval_interval") => self.eval_interval = num!(usize, "interval"),
            ("train", "eval_episodes") => self.eval_episodes = num!(usize, "count"),

            _ => return Err(Error::Config(format!("unknown config key '{full}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_agents();
        if self.batch_size == 0 || self.batch_size % n != 0 {
            return Err(Error::Config(format!(
                "learner.batch_size {} must be a positive multiple of the {n} agents \
                 so classifier batches can be balanced",
                self.batch_size
            )));
        }
        for (name, v) in [
            ("learner.gamma", self.gamma),
            ("learner.qmix_lr", self.qmix_lr),
            ("learner.ivf_lr", self.ivf_lr),
            ("learner.actor_lr", self.actor_lr),
            ("learner.critic_lr", self.critic_lr),
            ("learner.entropy_coef", self.entropy_coef),
            ("learner.weight_decay", self.weight_decay),
            ("learner.grad_clip", self.grad_clip),
            ("intrinsic.alpha", self.alpha),
            ("intrinsic.beta1", self.beta1),
            ("intrinsic.beta2", self.beta2),
            ("intrinsic.classifier_lr", self.classifier_lr),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if self.gamma > 1.0 {
            return Err(Error::Config(format!("learner.gamma {} must be <= 1", self.gamma)));
        }
        for (name, v) in [
            ("learner.epsilon_start", self.epsilon_start),
            ("learner.epsilon_final", self.epsilon_final),
            ("learner.epsilon_decay_fraction", self.epsilon_decay_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must be in [0, 1], got {v}")));
            }
        }
        for (name, v) in [
            ("env.horizon", self.horizon),
            ("learner.hidden", self.hidden),
            ("learner.mixer_embed", self.mixer_embed),
            ("learner.buffer_capacity", self.buffer_capacity),
            ("learner.update_interval", self.update_interval),
            ("intrinsic.positive_window", self.positive_window),
            ("train.episodes", self.episodes),
            ("train.eval_interval", self.eval_interval),
            ("train.eval_episodes", self.eval_episodes),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be >= 1")));
            }
        }
        if self.target_sync_interval == 0 {
            return Err(Error::Config("learner.target_sync_interval must be >= 1".into()));
        }
        if self.buffer_capacity < self.batch_size {
            return Err(Error::Config(format!(
                "learner.buffer_capacity {} is smaller than the batch size {}",
                self.buffer_capacity, self.batch_size
            )));
        }
        Ok(())
    }

    /// Canonical serialization; `parse(to_text(c), [])` reproduces `c`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let kv = |s: &mut String, k: &str, v: String| {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        };
        s.push_str("[env]\n");
        kv(&mut s, "kind", self.env.name().to_string());
        kv(&mut s, "horizon", self.horizon.to_string());
        kv(&mut s, "include_position", self.include_position.to_string());
        s.push_str("\n[learner]\n");
        kv(&mut s, "kind", self.learner.name().to_string());
        kv(&mut s, "gamma", self.gamma.to_string());
        kv(&mut s, "hidden", self.hidden.to_string());
        kv(&mut s, "qmix_lr", self.qmix_lr.to_string());
        kv(&mut s, "ivf_lr", self.ivf_lr.to_string());
        kv(&mut s, "actor_lr", self.actor_lr.to_string());
        kv(&mut s, "critic_lr", self.critic_lr.to_string());
        kv(&mut s, "entropy_coef", self.entropy_coef.to_string());
        kv(&mut s, "mixer_embed", self.mixer_embed.to_string());
        kv(&mut s, "weight_decay", self.weight_decay.to_string());
        kv(&mut s, "grad_clip", self.grad_clip.to_string());
        kv(&mut s, "target_sync_interval", self.target_sync_interval.to_string());
        kv(&mut s, "shared_init", self.shared_init.to_string());
        kv(&mut s, "batch_size", self.batch_size.to_string());
        kv(&mut s, "buffer_capacity", self.buffer_capacity.to_string());
        kv(&mut s, "update_interval", self.update_interval.to_string());
        kv(&mut s, "warmup_transitions", self.warmup_transitions.to_string());
        kv(&mut s, "epsilon_start", self.epsilon_start.to_string());
        kv(&mut s, "epsilon_final", self.epsilon_final.to_string());
        kv(&mut s, "epsilon_decay_fraction", self.epsilon_decay_fraction.to_string());
        s.push_str("\n[intrinsic]\n");
        kv(&mut s, "mode", self.intrinsic_mode.name().to_string());
        kv(&mut s, "alpha", self.alpha.to_string());
        kv(&mut s, "alpha_schedule", self.alpha_schedule.name().to_string());
        kv(&mut s, "beta1", self.beta1.to_string());
        kv(&mut s, "beta2", self.beta2.to_string());
        kv(&mut s, "positive_window", self.positive_window.to_string());
        kv(&mut s, "classifier_lr", self.classifier_lr.to_string());
        s.push_str("\n[train]\n");
        kv(&mut s, "episodes", self.episodes.to_string());
        kv(&mut s, "seed", self.seed.to_string());
        kv(&mut s, "eval_interval", self.eval_interval.to_string());
        kv(&mut s, "eval_episodes", self.eval_episodes.to_string());
        s
    }
}

/// Split the text into (section, key, value) triples in file order.
fn parse_pairs(text: &str) -> Result<Vec<(String, String, String)>> {
    let mut out = Vec::new();
    let mut section: Option<String> = None;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| Error::Config(format!("line {}: unterminated section header", lineno + 1)))?
                .trim();
            if name.is_empty() {
                return Err(Error::Config(format!("line {}: empty section name", lineno + 1)));
            }
            section = Some(name.to_string());
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("line {}: expected key = value, got '{line}'", lineno + 1))
        })?;
        let section = section
            .clone()
            .ok_or_else(|| Error::Config(format!("line {}: key before any [section]", lineno + 1)))?;
        out.push((section, key.trim().to_string(), value.trim().to_string()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pacmen_qmix_defaults_match_table() {
        let c = TrainConfig::defaults(EnvKind::PacMen, LearnerKind::Qmix);
        assert_eq!(c.alpha, 0.05);
        assert_eq!(c.beta1, 0.04);
        assert_eq!(c.beta2, 0.1);
        assert_eq!(c.positive_window, 4);
        assert_eq!(c.horizon, 30);
        assert_eq!(c.gamma, 0.98);
        assert_eq!(c.batch_size, 128);
        assert_eq!(c.buffer_capacity, 20_000);
        assert_eq!(c.classifier_lr, 1e-3);
        assert_eq!(c.qmix_lr, 1e-4);
    }

    #[test]
    fn actor_critic_defaults_match_table() {
        let c = TrainConfig::defaults(EnvKind::PacMen, LearnerKind::ActorCritic);
        assert_eq!(c.alpha, 0.2);
        assert_eq!(c.actor_lr, 1e-3);
        assert_eq!(c.critic_lr, 1e-4);
    }

    #[test]
    fn horizons_follow_the_task() {
        assert_eq!(TrainConfig::defaults(EnvKind::WindyMaze, LearnerKind::Qmix).horizon, 15);
        assert_eq!(TrainConfig::defaults(EnvKind::Firefighters, LearnerKind::Qmix).horizon, 20);
        assert_eq!(TrainConfig::defaults(EnvKind::SparsePacMen, LearnerKind::Qmix).horizon, 30);
    }

    #[test]
    fn round_trip_is_lossless_for_all_pairs() {
        for env in [
            EnvKind::PacMen,
            EnvKind::SparsePacMen,
            EnvKind::WindyMaze,
            EnvKind::Firefighters,
        ] {
            for learner in [LearnerKind::Qmix, LearnerKind::ActorCritic] {
                let c = TrainConfig::defaults(env, learner);
                let parsed = TrainConfig::parse(&c.to_text(), &[]).unwrap();
                assert_eq!(c, parsed);
            }
        }
    }

    #[test]
    fn empty_config_uses_defaults_for_selected_pair() {
        let overrides = vec![
            ("env.kind".to_string(), "pacmen".to_string()),
            ("learner.kind".to_string(), "qmix".to_string()),
        ];
        let c = TrainConfig::parse("", &overrides).unwrap();
        assert_eq!(c, TrainConfig::defaults(EnvKind::PacMen, LearnerKind::Qmix));
    }

    #[test]
    fn learner_kind_switch_switches_alpha_default() {
        let overrides = vec![("learner.kind".to_string(), "actor-critic".to_string())];
        let c = TrainConfig::parse("", &overrides).unwrap();
        assert_eq!(c.alpha, 0.2);
        // But an explicit alpha wins over the pair default.
        let overrides = vec![
            ("learner.kind".to_string(), "actor-critic".to_string()),
            ("intrinsic.alpha".to_string(), "0.5".to_string()),
        ];
        let c = TrainConfig::parse("", &overrides).unwrap();
        assert_eq!(c.alpha, 0.5);
    }

    #[test]
    fn unknown_key_is_an_error_naming_the_key() {
        let err = TrainConfig::parse("[learner]\nlearning_rate = 3\n", &[]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("learner.learning_rate"), "{msg}");
        let err = TrainConfig::parse("[mystery]\nx = 1\n", &[]).unwrap_err();
        assert!(err.to_string().contains("mystery.x"), "{err}");
    }

    #[test]
    fn malformed_lines_are_errors() {
        assert!(TrainConfig::parse("[env\nkind = pacmen\n", &[]).is_err());
        assert!(TrainConfig::parse("kind = pacmen\n", &[]).is_err());
        assert!(TrainConfig::parse("[env]\njust some words\n", &[]).is_err());
        assert!(TrainConfig::parse("[intrinsic]\nalpha = abc\n", &[]).is_err());
    }

    #[test]
    fn comments_and_blanks_are_ignored() {
        let text = "# top comment\n\n[intrinsic]\n# alpha next\nalpha = 0.07\n\n";
        let c = TrainConfig::parse(text, &[]).unwrap();
        assert_eq!(c.alpha, 0.07);
    }

    #[test]
    fn unbalanced_batch_size_is_rejected_at_startup() {
        // Pac-Men has 4 agents; 130 cannot be split evenly across them.
        let overrides = vec![("learner.batch_size".to_string(), "130".to_string())];
        let err = TrainConfig::parse("", &overrides).unwrap_err();
        assert!(err.to_string().contains("batch_size"), "{err}");
        // 128 splits as 32 per agent and is accepted.
        let overrides = vec![("learner.batch_size".to_string(), "128".to_string())];
        assert!(TrainConfig::parse("", &overrides).is_ok());
    }

    #[test]
    fn out_of_range_values_are_rejected() {
        for (k, v) in [
            ("learner.gamma", "1.5"),
            ("learner.gamma", "-0.1"),
            ("learner.epsilon_start", "2"),
            ("intrinsic.alpha", "-1"),
            ("intrinsic.positive_window", "0"),
            ("train.episodes", "0"),
            ("learner.buffer_capacity", "64"),
        ] {
            let overrides = vec![(k.to_string(), v.to_string())];
            assert!(
                TrainConfig::parse("", &overrides).is_err(),
                "{k}={v} should be rejected"
            );
        }
    }

    #[test]
    fn last_value_wins_within_a_file() {
        let text = "[intrinsic]\nalpha = 0.1\nalpha = 0.3\n";
        let c = TrainConfig::parse(text, &[]).unwrap();
        assert_eq!(c.alpha, 0.3);
    }

    #[test]
    fn overrides_apply_after_the_file() {
        let text = "[intrinsic]\nalpha = 0.1\n";
        let overrides = vec![("intrinsic.alpha".to_string(), "0.9".to_string())];
        let c = TrainConfig::parse(text, &overrides).unwrap();
        assert_eq!(c.alpha, 0.9);
    }
}
