//! Experiment presets: ablation arms and seed sweeps for each standard
//! experiment, with desk-scale episode budgets per task.
//!
//! Arms in one preset differ only in the intrinsic settings (mode, alpha,
//! beta1, beta2) or, for the same-init study, the shared_init flag; the
//! environment, learner and budget stay fixed so curves are comparable.

use crate::config::{IntrinsicMode, LearnerKind, TrainConfig};
use crate::envs::EnvKind;
use crate::{Error, Result};

/// Ablation arms from weakest to strongest intrinsic machinery.
pub const ABLATION_ARMS: [&str; 5] = ["baseline", "eoi", "eoi-pd", "eoi-mi", "eoi-pd-mi"];

pub const PRESET_NAMES: [&str; 7] = [
    "fig4-pacmen",
    "fig4-windy",
    "fig7-sameinit",
    "fig9-alpha-sweep",
    "fig11-sparse",
    "firefighters",
    "acceptance",
];

/// Alpha grid for the sensitivity sweep; overridable from the CLI.
pub const DEFAULT_ALPHA_GRID: [f64; 4] = [0.01, 0.05, 0.2, 0.5];

#[derive(Debug, Clone)]
pub struct PresetRun {
    pub arm: String,
    pub seed: u64,
    pub cfg: TrainConfig,
}

/// Desk-scale budgets: episode counts sized so a full seed finishes in
/// minutes on one CPU core, with updates spread across episode steps.
fn apply_budget(cfg: &mut TrainConfig) {
    match cfg.env {
        EnvKind::WindyMaze => {
            cfg.episodes = 3000;
            cfg.update_interval = 5;
        }
        EnvKind::PacMen => {
            cfg.episodes = 3000;
            cfg.update_interval = 10;
        }
        EnvKind::SparsePacMen => {
            cfg.episodes = 3000;
            cfg.update_interval = 10;
        }
        EnvKind::Firefighters => {
            cfg.episodes = 3000;
            cfg.update_interval = 7;
        }
    }
    cfg.eval_interval = 100;
    cfg.eval_episodes = 20;
}

/// One named configuration arm on the (env, learner) pair.
pub fn arm_config(env: EnvKind, learner: LearnerKind, arm: &str) -> Result<TrainConfig> {
    let mut cfg = TrainConfig::defaults(env, learner);
    apply_budget(&mut cfg);
    match arm {
        "baseline" => {
            cfg.intrinsic_mode = IntrinsicMode::None;
            cfg.alpha = 0.0;
            cfg.beta1 = 0.0;
            cfg.beta2 = 0.0;
        }
        "eoi" => {
            cfg.beta1 = 0.0;
            cfg.beta2 = 0.0;
        }
        "eoi-pd" => {
            cfg.beta2 = 0.0;
        }
        "eoi-mi" => {
            cfg.beta1 = 0.0;
        }
        "eoi-pd-mi" => {}
        "diayn" => {
            cfg.intrinsic_mode = IntrinsicMode::Diayn;
            cfg.beta1 = 0.0;
            cfg.beta2 = 0.0;
        }
        other => {
            return Err(Error::Config(format!(
                "unknown arm '{other}' (expected one of {ABLATION_ARMS:?} or diayn)"
            )))
        }
    }
    Ok(cfg)
}

/// Intrinsic-weight sensitivity sweep on the actor-critic learner; the grid
/// is a parameter so the CLI can override it.
pub fn alpha_sweep_runs(grid: &[f64]) -> Result<Vec<PresetRun>> {
    let mut out = Vec::new();
    for &alpha in grid {
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(Error::Config(format!("alpha grid value {alpha} out of range")));
        }
        for seed in 0..5 {
            let mut cfg = arm_config(EnvKind::PacMen, LearnerKind::ActorCritic, "eoi-pd-mi")?;
            cfg.alpha = alpha;
            cfg.seed = seed;
            out.push(PresetRun {
                arm: format!("alpha-{alpha}"),
                seed,
                cfg,
            });
        }
    }
    Ok(out)
}

/// Five seeds of one arm with the env and learner folded into the arm name,
/// so runs from different environments can share one flat directory.
fn tagged(
    env: EnvKind,
    learner: LearnerKind,
    arm: &str,
    shared: bool,
) -> Result<Vec<PresetRun>> {
    let mut out = Vec::new();
    for seed in 0..5 {
        let mut cfg = arm_config(env, learner, arm)?;
        cfg.shared_init = shared;
        cfg.seed = seed;
        let suffix = if shared { "-sameinit" } else { "" };
        out.push(PresetRun {
            arm: format!("{}-{}-{arm}{suffix}", env.name(), learner.name()),
            seed,
            cfg,
        });
    }
    Ok(out)
}

/// Deduplicated run matrix behind the headline checks in the acceptance
/// test: baseline convergence and intrinsic uplift on the windy maze, the
/// ablation ordering, room specialization, initialization robustness and
/// reward timing on Pac-Men, the sparse-reward comparison, and the
/// firefighter local optimum.
pub fn acceptance_runs() -> Result<Vec<PresetRun>> {
    use EnvKind::*;
    use LearnerKind::*;
    let mut out = Vec::new();
    for (env, learner, arm, shared) in [
        (WindyMaze, Qmix, "baseline", false),
        (WindyMaze, ActorCritic, "baseline", false),
        (WindyMaze, Qmix, "eoi-pd-mi", false),
        (PacMen, Qmix, "baseline", false),
        (PacMen, Qmix, "eoi", false),
        (PacMen, Qmix, "eoi-pd-mi", false),
        (PacMen, Qmix, "eoi", true),
        (PacMen, Qmix, "eoi-pd-mi", true),
        (SparsePacMen, Qmix, "eoi-pd-mi", false),
        (SparsePacMen, Qmix, "diayn", false),
        (Firefighters, Qmix, "baseline", false),
        (Firefighters, ActorCritic, "baseline", false),
        (Firefighters, Qmix, "eoi-pd-mi", false),
    ] {
        out.extend(tagged(env, learner, arm, shared)?);
    }
    Ok(out)
}

fn runs(
    env: EnvKind,
    learner: LearnerKind,
    arms: &[&str],
    seeds: u64,
) -> Result<Vec<PresetRun>> {
    let mut out = Vec::new();
    for &arm in arms {
        for seed in 0..seeds {
            let mut cfg = arm_config(env, learner, arm)?;
            cfg.seed = seed;
            out.push(PresetRun {
                arm: arm.to_string(),
                seed,
                cfg,
            });
        }
    }
    Ok(out)
}

/// The full run matrix of one named preset.
pub fn preset(name: &str) -> Result<Vec<PresetRun>> {
    match name {
        "fig4-pacmen" => runs(EnvKind::PacMen, LearnerKind::Qmix, &ABLATION_ARMS, 5),
        "fig4-windy" => runs(EnvKind::WindyMaze, LearnerKind::Qmix, &ABLATION_ARMS, 10),
        "fig7-sameinit" => {
            let mut out = Vec::new();
            for arm in ["eoi", "eoi-pd-mi"] {
                for shared in [false, true] {
                    for seed in 0..5 {
                        let mut cfg = arm_config(EnvKind::PacMen, LearnerKind::Qmix, arm)?;
                        cfg.shared_init = shared;
                        cfg.seed = seed;
                        let name = if shared {
                            format!("{arm}-sameinit")
                        } else {
                            arm.to_string()
                        };
                        out.push(PresetRun {
                            arm: name,
                            seed,
                            cfg,
                        });
                    }
                }
            }
            Ok(out)
        }
        "fig9-alpha-sweep" => alpha_sweep_runs(&DEFAULT_ALPHA_GRID),
        "fig11-sparse" => {
            let mut out = runs(EnvKind::SparsePacMen, LearnerKind::Qmix, &["eoi-pd-mi"], 5)?;
            out.extend(runs(EnvKind::SparsePacMen, LearnerKind::Qmix, &["diayn"], 5)?);
            Ok(out)
        }
        "firefighters" => runs(
            EnvKind::Firefighters,
            LearnerKind::Qmix,
            &["baseline", "eoi-pd-mi"],
            5,
        ),
        "acceptance" => acceptance_runs(),
        other => Err(Error::Config(format!(
            "unknown preset '{other}' (expected one of {PRESET_NAMES:?})"
        ))),
    }
}
