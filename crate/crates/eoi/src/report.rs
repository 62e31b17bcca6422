//! Aggregation of finished runs into per-arm learning curves.
//!
//! A preset directory holds `<arm>/<seed>/metrics.csv` for every run. The
//! aggregator averages each metrics column across seeds at matching episode
//! indices and summarizes final performance per arm. Unreadable or
//! inconsistent seed directories are excluded with a warning instead of
//! failing the whole report.

use crate::trainer::{read_metrics, MetricsRow};
use crate::{Error, Result};
use std::fmt::Write as FmtWrite;
use std::fs;
use std::path::Path;

/// Number of trailing evaluations averaged for the headline score.
pub const TAIL_EVALS: usize = 10;

/// Per-arm curves averaged over seeds, plus headline scores.
#[derive(Debug, Clone)]
pub struct ArmSummary {
    pub arm: String,
    pub n_seeds: usize,
    pub episodes: Vec<usize>,
    pub env_reward_mean: Vec<f64>,
    pub env_reward_std: Vec<f64>,
    pub intrinsic_mean: Vec<f64>,
    pub intrinsic_std: Vec<f64>,
    /// Mean and std across seeds of each seed's last-evaluation reward.
    pub final_reward: (f64, f64),
    /// Mean and std across seeds of each seed's tail-window reward average.
    pub tail_reward: (f64, f64),
}

#[derive(Debug, Clone)]
pub struct Report {
    pub arms: Vec<ArmSummary>,
    pub warnings: Vec<String>,
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64;
    (mean, var.sqrt())
}

/// Average environmental reward over the last `k` evaluations of one run.
pub fn tail_mean(rows: &[MetricsRow], k: usize) -> f64 {
    let tail = &rows[rows.len().saturating_sub(k)..];
    if tail.is_empty() {
        return 0.0;
    }
    tail.iter().map(|r| r.env_reward_mean).sum::<f64>() / tail.len() as f64
}

/// Aggregate every `<arm>/<seed>` run under a preset directory.
pub fn aggregate_preset(preset_dir: &Path) -> Result<Report> {
    let mut warnings = Vec::new();
    let mut arms = Vec::new();
    for arm_dir in sorted_subdirs(preset_dir)? {
        let arm = dir_name(&arm_dir);
        if let Some(summary) = aggregate_arm(&arm, &arm_dir, &mut warnings)? {
            arms.push(summary);
        }
    }
    if arms.is_empty() {
        return Err(Error::Corrupt(format!(
            "{}: no usable runs found",
            preset_dir.display()
        )));
    }
    Ok(Report { arms, warnings })
}

fn aggregate_arm(
    arm: &str,
    arm_dir: &Path,
    warnings: &mut Vec<String>,
) -> Result<Option<ArmSummary>> {
    let mut seed_rows: Vec<Vec<MetricsRow>> = Vec::new();
    for seed_dir in sorted_subdirs(arm_dir)? {
        let label = format!("{arm}/{}", dir_name(&seed_dir));
        let rows = match read_metrics(&seed_dir.join("metrics.csv")) {
            Ok(rows) if !rows.is_empty() => rows,
            Ok(_) => {
                warnings.push(format!("{label}: empty metrics, excluded"));
                continue;
            }
            Err(e) => {
                warnings.push(format!("{label}: {e}, excluded"));
                continue;
            }
        };
        if let Some(reference) = seed_rows.first() {
            let same_grid = reference.len() == rows.len()
                && reference
                    .iter()
                    .zip(&rows)
                    .all(|(a, b)| a.episode == b.episode);
            if !same_grid {
                warnings.push(format!(
                    "{label}: evaluation episodes disagree with the first seed, excluded"
                ));
                continue;
            }
        }
        seed_rows.push(rows);
    }
    if seed_rows.is_empty() {
        warnings.push(format!("{arm}: no usable seeds, arm skipped"));
        return Ok(None);
    }

    let episodes: Vec<usize> = seed_rows[0].iter().map(|r| r.episode).collect();
    let mut env_reward_mean = Vec::with_capacity(episodes.len());
    let mut env_reward_std = Vec::with_capacity(episodes.len());
    let mut intrinsic_mean = Vec::with_capacity(episodes.len());
    let mut intrinsic_std = Vec::with_capacity(episodes.len());
    for i in 0..episodes.len() {
        let rewards: Vec<f64> = seed_rows.iter().map(|s| s[i].env_reward_mean).collect();
        let intrinsics: Vec<f64> = seed_rows
            .iter()
            .map(|s| s[i].intrinsic_reward_mean)
            .collect();
        let (m, s) = mean_std(&rewards);
        env_reward_mean.push(m);
        env_reward_std.push(s);
        let (m, s) = mean_std(&intrinsics);
        intrinsic_mean.push(m);
        intrinsic_std.push(s);
    }
    let finals: Vec<f64> = seed_rows
        .iter()
        .map(|s| s.last().unwrap().env_reward_mean)
        .collect();
    let tails: Vec<f64> = seed_rows.iter().map(|s| tail_mean(s, TAIL_EVALS)).collect();
    Ok(Some(ArmSummary {
        arm: arm.to_string(),
        n_seeds: seed_rows.len(),
        episodes,
        env_reward_mean,
        env_reward_std,
        intrinsic_mean,
        intrinsic_std,
        final_reward: mean_std(&finals),
        tail_reward: mean_std(&tails),
    }))
}

impl Report {
    /// Long-format CSV: one row per (arm, evaluation episode).
    pub fn long_csv(&self) -> String {
        let mut s = String::from(
            "arm,n_seeds,episode,env_reward_mean,env_reward_std,intrinsic_mean,intrinsic_std\n",
        );
        for a in &self.arms {
            for i in 0..a.episodes.len() {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{}",
                    a.arm,
                    a.n_seeds,
                    a.episodes[i],
                    a.env_reward_mean[i],
                    a.env_reward_std[i],
                    a.intrinsic_mean[i],
                    a.intrinsic_std[i]
                );
            }
        }
        s
    }

    /// Fixed-width text table of headline scores per arm.
    pub fn summary_table(&self) -> String {
        let mut s = format!(
            "{:<22} {:>6} {:>20} {:>20}\n",
            "arm", "seeds", "final reward", "last-10-eval reward"
        );
        for a in &self.arms {
            let _ = writeln!(
                s,
                "{:<22} {:>6} {:>12.3} ±{:>5.3} {:>12.3} ±{:>5.3}",
                a.arm,
                a.n_seeds,
                a.final_reward.0,
                a.final_reward.1,
                a.tail_reward.0,
                a.tail_reward.1
            );
        }
        s
    }
}

fn sorted_subdirs(dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            out.push(path);
        }
    }
    // Numeric names (seed directories) sort numerically, others lexically.
    out.sort_by_key(|p| {
        let name = dir_name(p);
        (name.parse::<u64>().ok(), name)
    });
    Ok(out)
}

fn dir_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}
