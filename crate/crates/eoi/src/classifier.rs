//! Agent-identity classifier and the intrinsic rewards derived from it.
//!
//! The classifier maps an observation to a distribution over agents. Its
//! per-agent probability is the intrinsic reward that makes agents seek
//! observations only they tend to produce. Training minimizes supervised
//! cross-entropy plus two regularizers: a positive-distance term tying each
//! observation's prediction to a recent observation of the same agent
//! (target detached), and the prediction entropy, whose minimization under
//! balanced labels maximizes the mutual information between identity and
//! observation.

use crate::nnkit::{
    cross_entropy_grad, entropy_1d, entropy_grad, softmax_1d, softmax_rows, AdamCfg, AdamState,
    Mlp, ParamVector, EPS_NUM,
};
use crate::{Error, Result};
use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;

/// How a prediction is turned into a reward scalar.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RewardMode {
    /// p(agent | obs) in [0, 1].
    Eoi,
    /// log(p(agent | obs) + eps) - log(1/n), zero for a uniform prediction.
    Diayn,
}

/// One training example: the observation, who produced it, and a recent
/// observation of the same agent from the same episode. `positive_valid` is
/// false only for the first step of an episode, which has no history.
#[derive(Debug, Clone)]
pub struct ClassifierSample {
    pub anchor: Array1<f64>,
    pub label: usize,
    pub positive: Array1<f64>,
    pub positive_valid: bool,
}

/// Loss components of one training step.
#[derive(Debug, Clone, Copy)]
pub struct LossParts {
    pub total: f64,
    pub ce: f64,
    pub pd: f64,
    pub mi: f64,
}

#[derive(Debug, Clone)]
pub struct Discriminability {
    pub mean_correct_prob: f64,
    pub mean_entropy: f64,
    /// confusion[true_label][argmax_prediction]
    pub confusion: Array2<u64>,
}

pub struct Classifier {
    pub net: Mlp,
    pub opt: AdamState,
    pub n_agents: usize,
}

impl Classifier {
    pub fn new(obs_dim: usize, hidden: usize, n_agents: usize, lr: f64, rng: &mut impl Rng) -> Self {
        let net = Mlp::new(obs_dim, hidden, n_agents, rng);
        let opt = AdamState::new(net.param_count(), AdamCfg::with_lr(lr));
        Classifier { net, opt, n_agents }
    }

    /// All-zero weights: predicts the uniform distribution everywhere.
    pub fn zeros(obs_dim: usize, hidden: usize, n_agents: usize, lr: f64) -> Self {
        let net = Mlp::zeros(obs_dim, hidden, n_agents);
        let opt = AdamState::new(net.param_count(), AdamCfg::with_lr(lr));
        Classifier { net, opt, n_agents }
    }

    pub fn obs_dim(&self) -> usize {
        self.net.in_dim()
    }

    /// Distribution over agents for one observation.
    pub fn predict(&self, obs: ArrayView1<f64>) -> Result<Array1<f64>> {
        let logits = self.net.forward_one(obs)?;
        Ok(softmax_1d(logits.view()))
    }

    /// Row-wise predictions.
    pub fn predict_rows(&self, obs: ndarray::ArrayView2<f64>) -> Result<Array2<f64>> {
        let logits = self.net.forward_nograd(obs)?;
        Ok(softmax_rows(logits.view()))
    }

    pub fn intrinsic_reward(
        &self,
        agent: usize,
        obs: ArrayView1<f64>,
        mode: RewardMode,
    ) -> Result<f64> {
        assert!(agent < self.n_agents, "agent index {agent}");
        let p = self.predict(obs)?;
        Ok(match mode {
            RewardMode::Eoi => p[agent],
            RewardMode::Diayn => (p[agent] + EPS_NUM).ln() - (1.0 / self.n_agents as f64).ln(),
        })
    }

    /// One Adam step on the combined objective. The batch must be balanced:
    /// exactly batch_size / n samples per label, so the empirical label
    /// entropy stays constant and the entropy term is a mutual-information
    /// bound rather than a label-prior collapse.
    pub fn train_batch(
        &mut self,
        batch: &[ClassifierSample],
        beta1: f64,
        beta2: f64,
    ) -> Result<LossParts> {
        self.train_batch_weighted(batch, 1.0, beta1, beta2)
    }

    /// `train_batch` with an explicit weight on the supervised term. The
    /// weight exists so tests can isolate the regularizers; training always
    /// uses 1.0.
    pub fn train_batch_weighted(
        &mut self,
        batch: &[ClassifierSample],
        ce_weight: f64,
        beta1: f64,
        beta2: f64,
    ) -> Result<LossParts> {
        let n = self.n_agents;
        let b = batch.len();
        if b == 0 || b % n != 0 {
            return Err(Error::Shape(format!(
                "classifier batch of {b} cannot be balanced over {n} labels"
            )));
        }
        let mut counts = vec![0usize; n];
        for s in batch {
            if s.label >= n {
                return Err(Error::Shape(format!("label {} out of range", s.label)));
            }
            counts[s.label] += 1;
        }
        if counts.iter().any(|&c| c != b / n) {
            return Err(Error::Shape(format!(
                "unbalanced classifier batch: per-label counts {counts:?}"
            )));
        }

        let obs_dim = self.obs_dim();
        let mut x = Array2::zeros((b, obs_dim));
        let mut y = Array2::zeros((b, n));
        for (i, s) in batch.iter().enumerate() {
            if s.anchor.len() != obs_dim {
                return Err(Error::Shape(format!(
                    "anchor width {} vs observation width {obs_dim}",
                    s.anchor.len()
                )));
            }
            x.row_mut(i).assign(&s.anchor);
            y[[i, s.label]] = 1.0;
        }

        let (logits, tape) = self.net.forward(x.view())?;
        let probs = softmax_rows(logits.view());

        let (loss_ce, dz_ce) = cross_entropy_grad(probs.view(), y.view());
        let mut dz = dz_ce;
        dz.mapv_inplace(|v| v * ce_weight);

        // Positive-distance term over the valid samples only; the target is
        // the network's own prediction on the positive, held constant.
        let valid: Vec<usize> = (0..b).filter(|&i| batch[i].positive_valid).collect();
        let mut loss_pd = 0.0;
        if beta1 > 0.0 && !valid.is_empty() {
            let mut xp = Array2::zeros((valid.len(), obs_dim));
            let mut p_anchor = Array2::zeros((valid.len(), n));
            for (row, &i) in valid.iter().enumerate() {
                if batch[i].positive.len() != obs_dim {
                    return Err(Error::Shape(format!(
                        "positive width {} vs observation width {obs_dim}",
                        batch[i].positive.len()
                    )));
                }
                xp.row_mut(row).assign(&batch[i].positive);
                p_anchor.row_mut(row).assign(&probs.row(i));
            }
            let targets = self.predict_rows(xp.view())?;
            let (l, dz_pd) = cross_entropy_grad(p_anchor.view(), targets.view());
            loss_pd = l;
            // Scatter the valid-subset gradient back to full batch rows.
            for (row, &i) in valid.iter().enumerate() {
                let mut dst = dz.row_mut(i);
                dst.scaled_add(beta1, &dz_pd.row(row));
            }
        }

        let (loss_mi, dz_mi) = entropy_grad(probs.view());
        if beta2 > 0.0 {
            dz.scaled_add(beta2, &dz_mi);
        }

        let (grads, _) = self.net.backward(&tape, dz.view())?;
        self.opt.step(&mut self.net, &grads.flat())?;

        let total = ce_weight * loss_ce + beta1 * loss_pd + beta2 * loss_mi;
        Ok(LossParts {
            total,
            ce: loss_ce,
            pd: loss_pd,
            mi: loss_mi,
        })
    }

    /// Accuracy-style diagnostics over a sample set.
    pub fn report(&self, samples: &[ClassifierSample]) -> Result<Discriminability> {
        if samples.is_empty() {
            return Err(Error::Shape("discriminability report of zero samples".into()));
        }
        let n = self.n_agents;
        let mut confusion = Array2::zeros((n, n));
        let mut correct_prob = 0.0;
        let mut entropy = 0.0;
        for s in samples {
            let p = self.predict(s.anchor.view())?;
            correct_prob += p[s.label];
            entropy += entropy_1d(p.view());
            let argmax = p
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            confusion[[s.label, argmax]] += 1;
        }
        let m = samples.len() as f64;
        Ok(Discriminability {
            mean_correct_prob: correct_prob / m,
            mean_entropy: entropy / m,
            confusion,
        })
    }
}

/// Draw the positive for step `t` of one agent's episode: a uniform sample
/// from the last `window` steps strictly before `t`. The first step has no
/// history; the anchor itself is returned, flagged invalid.
pub fn sample_positive(
    history: &[Array1<f64>],
    t: usize,
    window: usize,
    rng: &mut impl Rng,
) -> (Array1<f64>, bool) {
    assert!(t < history.len(), "step {t} beyond history");
    if t == 0 {
        return (history[0].clone(), false);
    }
    let lo = t.saturating_sub(window);
    let idx = rng.random_range(lo..t);
    (history[idx].clone(), true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds::{stream_rng, Stream};

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    fn random_obs(dim: usize, rng: &mut impl Rng) -> Array1<f64> {
        Array1::from_shape_fn(dim, |_| rng.random_range(0.0..1.0))
    }

    fn sample(anchor: Array1<f64>, label: usize) -> ClassifierSample {
        ClassifierSample {
            positive: anchor.clone(),
            anchor,
            label,
            positive_valid: true,
        }
    }

    #[test]
    fn zero_net_predicts_uniform_and_pure() {
        let c = Classifier::zeros(10, 8, 4, 1e-3);
        let obs = Array1::from_elem(10, 0.3);
        let p = c.predict(obs.view()).unwrap();
        for v in p.iter() {
            close(*v, 0.25, 1e-12);
        }
        close(p.sum(), 1.0, 1e-6);
        assert_eq!(p, c.predict(obs.view()).unwrap());
    }

    #[test]
    fn predict_rejects_wrong_width() {
        let c = Classifier::zeros(10, 8, 4, 1e-3);
        let obs = Array1::zeros(9);
        assert!(c.predict(obs.view()).is_err());
    }

    #[test]
    fn intrinsic_reward_analytic_limits() {
        let c = Classifier::zeros(6, 8, 4, 1e-3);
        let obs = Array1::zeros(6);
        close(
            c.intrinsic_reward(0, obs.view(), RewardMode::Eoi).unwrap(),
            0.25,
            1e-12,
        );
        close(
            c.intrinsic_reward(0, obs.view(), RewardMode::Diayn).unwrap(),
            0.0,
            1e-6,
        );
    }

    fn overfit_two_point_classifier() -> (Classifier, Array1<f64>, Array1<f64>) {
        let mut rng = stream_rng(100, Stream::InitClassifier);
        let o0 = random_obs(12, &mut rng);
        let o1 = random_obs(12, &mut rng);
        let mut c = Classifier::new(12, 128, 2, 1e-3, &mut rng);
        let batch = vec![sample(o0.clone(), 0), sample(o1.clone(), 1)];
        for _ in 0..200 {
            c.train_batch(&batch, 0.0, 0.0).unwrap();
        }
        (c, o0, o1)
    }

    #[test]
    fn overfits_two_fixed_observations() {
        let (c, o0, o1) = overfit_two_point_classifier();
        assert!(c.predict(o0.view()).unwrap()[0] > 0.95);
        assert!(c.predict(o1.view()).unwrap()[1] > 0.95);
        // Near-perfect prediction drives EOI reward toward 1 and DIAYN toward ln 2.
        let eoi = c.intrinsic_reward(0, o0.view(), RewardMode::Eoi).unwrap();
        assert!(eoi > 0.95 && eoi <= 1.0);
        let diayn = c.intrinsic_reward(0, o0.view(), RewardMode::Diayn).unwrap();
        assert!(diayn > 0.9 * 2f64.ln());
    }

    #[test]
    fn train_batch_rejects_unbalanced_batches() {
        let mut rng = stream_rng(101, Stream::InitClassifier);
        let mut c = Classifier::new(5, 8, 2, 1e-3, &mut rng);
        let batch = vec![
            sample(random_obs(5, &mut rng), 0),
            sample(random_obs(5, &mut rng), 0),
        ];
        assert!(matches!(
            c.train_batch(&batch, 0.0, 0.0),
            Err(Error::Shape(_))
        ));
        // Odd size cannot balance two labels.
        let batch3 = vec![
            sample(random_obs(5, &mut rng), 0),
            sample(random_obs(5, &mut rng), 1),
            sample(random_obs(5, &mut rng), 1),
        ];
        assert!(c.train_batch(&batch3, 0.0, 0.0).is_err());
    }

    #[test]
    fn zero_betas_reduce_to_supervised_ce() {
        let mut rng = stream_rng(102, Stream::InitClassifier);
        let mut c = Classifier::new(5, 8, 2, 1e-3, &mut rng);
        let batch = vec![
            sample(random_obs(5, &mut rng), 0),
            sample(random_obs(5, &mut rng), 1),
        ];
        let parts = c.train_batch(&batch, 0.0, 0.0).unwrap();
        close(parts.total, parts.ce, 1e-12);
        assert_eq!(parts.pd * 0.0, 0.0);
    }

    #[test]
    fn perfect_predictions_give_near_zero_loss() {
        let (mut c, o0, o1) = overfit_two_point_classifier();
        let batch = vec![sample(o0, 0), sample(o1, 1)];
        let parts = c.train_batch(&batch, 0.04, 0.1).unwrap();
        assert!(parts.total < 0.1, "total {}", parts.total);
    }

    #[test]
    fn sample_positive_window_semantics() {
        let mut rng = stream_rng(103, Stream::Positive);
        let history: Vec<Array1<f64>> =
            (0..12).map(|i| Array1::from_elem(1, i as f64)).collect();

        let (p, valid) = sample_positive(&history, 0, 4, &mut rng);
        assert!(!valid);
        assert_eq!(p[0], 0.0);

        for _ in 0..200 {
            let (p, valid) = sample_positive(&history, 2, 4, &mut rng);
            assert!(valid);
            assert!(p[0] == 0.0 || p[0] == 1.0);
        }
    }

    /// Monte-Carlo check: at t=10 with a window of 4, steps 6..9 are drawn
    /// uniformly (0.25 each within 1%).
    #[test]
    fn sample_positive_uniform_frequency() {
        let mut rng = stream_rng(104, Stream::Positive);
        let history: Vec<Array1<f64>> =
            (0..12).map(|i| Array1::from_elem(1, i as f64)).collect();
        let trials = 100_000;
        let mut counts = [0u32; 4];
        for _ in 0..trials {
            let (p, _) = sample_positive(&history, 10, 4, &mut rng);
            let step = p[0] as usize;
            assert!((6..10).contains(&step), "step {step} outside window");
            counts[step - 6] += 1;
        }
        for c in counts {
            let freq = c as f64 / trials as f64;
            assert!((freq - 0.25).abs() <= 0.01, "frequency {freq}");
        }
    }

    /// Full-objective gradient against central finite differences on a tiny
    /// network, including detached positives and some invalid ones.
    #[test]
    fn train_objective_gradient_matches_finite_differences() {
        let mut rng = stream_rng(105, Stream::InitClassifier);
        let n = 3;
        let obs_dim = 6;
        let mut c = Classifier::new(obs_dim, 8, n, 1e-3, &mut rng);
        let mut batch = Vec::new();
        for i in 0..6 {
            let mut s = sample(random_obs(obs_dim, &mut rng), i % n);
            s.positive = random_obs(obs_dim, &mut rng);
            s.positive_valid = i % 2 == 0;
            batch.push(s);
        }
        let (beta1, beta2) = (0.04, 0.1);

        // The positive-distance targets are detached, so the loss surface
        // being differentiated keeps them frozen at the base parameters.
        let valid_idx: Vec<usize> = (0..batch.len()).filter(|&i| batch[i].positive_valid).collect();
        let frozen_targets = {
            let mut xp = Array2::zeros((valid_idx.len(), obs_dim));
            for (row, &i) in valid_idx.iter().enumerate() {
                xp.row_mut(row).assign(&batch[i].positive);
            }
            c.predict_rows(xp.view()).unwrap()
        };

        // Loss as a pure function of parameters (one Adam-free evaluation).
        let loss_of = |c: &Classifier| -> f64 {
            let b = batch.len();
            let mut x = Array2::zeros((b, obs_dim));
            let mut y = Array2::zeros((b, n));
            for (i, s) in batch.iter().enumerate() {
                x.row_mut(i).assign(&s.anchor);
                y[[i, s.label]] = 1.0;
            }
            let probs = c.predict_rows(x.view()).unwrap();
            let (ce, _) = cross_entropy_grad(probs.view(), y.view());
            let mut pa = Array2::zeros((valid_idx.len(), n));
            for (row, &i) in valid_idx.iter().enumerate() {
                pa.row_mut(row).assign(&probs.row(i));
            }
            let (pd, _) = cross_entropy_grad(pa.view(), frozen_targets.view());
            let (mi, _) = entropy_grad(probs.view());
            ce + beta1 * pd + beta2 * mi
        };

        // Analytic gradient: replicate train_batch's backward without stepping.
        let b = batch.len();
        let mut x = Array2::zeros((b, obs_dim));
        let mut y = Array2::zeros((b, n));
        for (i, s) in batch.iter().enumerate() {
            x.row_mut(i).assign(&s.anchor);
            y[[i, s.label]] = 1.0;
        }
        let (logits, tape) = c.net.forward(x.view()).unwrap();
        let probs = softmax_rows(logits.view());
        let (_, mut dz) = cross_entropy_grad(probs.view(), y.view());
        let valid: Vec<usize> = (0..b).filter(|&i| batch[i].positive_valid).collect();
        let mut xp = Array2::zeros((valid.len(), obs_dim));
        let mut pa = Array2::zeros((valid.len(), n));
        for (row, &i) in valid.iter().enumerate() {
            xp.row_mut(row).assign(&batch[i].positive);
            pa.row_mut(row).assign(&probs.row(i));
        }
        let targets = c.predict_rows(xp.view()).unwrap();
        let (_, dz_pd) = cross_entropy_grad(pa.view(), targets.view());
        for (row, &i) in valid.iter().enumerate() {
            let mut dst = dz.row_mut(i);
            dst.scaled_add(beta1, &dz_pd.row(row));
        }
        let (_, dz_mi) = entropy_grad(probs.view());
        dz.scaled_add(beta2, &dz_mi);
        let (grads, _) = c.net.backward(&tape, dz.view()).unwrap();
        let flat = grads.flat();

        let base = c.net.flat_params();
        let h = 1e-4;
        for k in 0..base.len() {
            let mut plus = base.clone();
            plus[k] += h;
            c.net.set_flat_params(&plus);
            let lp = loss_of(&c);
            let mut minus = base.clone();
            minus[k] -= h;
            c.net.set_flat_params(&minus);
            let lm = loss_of(&c);
            c.net.set_flat_params(&base);
            let fd = (lp - lm) / (2.0 * h);
            let tol = 1e-4 * fd.abs().max(flat[k].abs()).max(1e-6);
            assert!(
                (fd - flat[k]).abs() <= tol,
                "param {k}: fd {fd} vs analytic {}",
                flat[k]
            );
        }
    }

    /// With the supervised term disabled and beta2 > 0, repeated training on
    /// a fixed batch never increases the mean prediction entropy.
    #[test]
    fn entropy_regularizer_is_monotone_on_fixed_batch() {
        let mut rng = stream_rng(106, Stream::InitClassifier);
        let mut c = Classifier::new(8, 16, 2, 1e-3, &mut rng);
        let batch = vec![
            sample(random_obs(8, &mut rng), 0),
            sample(random_obs(8, &mut rng), 1),
        ];
        let mut prev = f64::INFINITY;
        for step in 0..100 {
            let parts = c.train_batch_weighted(&batch, 0.0, 0.0, 0.1).unwrap();
            assert!(
                parts.mi <= prev + 1e-9,
                "entropy rose at step {step}: {} -> {}",
                prev,
                parts.mi
            );
            prev = parts.mi;
        }
    }

    #[test]
    fn report_on_zero_net_is_uniform() {
        let c = Classifier::zeros(6, 8, 4, 1e-3);
        let mut rng = stream_rng(107, Stream::InitClassifier);
        let samples: Vec<ClassifierSample> = (0..20)
            .map(|i| sample(random_obs(6, &mut rng), i % 4))
            .collect();
        let rep = c.report(&samples).unwrap();
        close(rep.mean_correct_prob, 0.25, 1e-9);
        close(rep.mean_entropy, 4f64.ln(), 1e-6);
        // Rows sum to the per-label sample counts.
        for l in 0..4 {
            let row_sum: u64 = (0..4).map(|j| rep.confusion[[l, j]]).sum();
            assert_eq!(row_sum, 5);
        }
    }

    #[test]
    fn report_on_overfit_net_is_sharp() {
        let (c, o0, o1) = overfit_two_point_classifier();
        let samples = vec![sample(o0, 0), sample(o1, 1)];
        let rep = c.report(&samples).unwrap();
        assert!(rep.mean_correct_prob > 0.95);
        assert!(rep.mean_entropy < 0.2);
        assert_eq!(rep.confusion[[0, 0]], 1);
        assert_eq!(rep.confusion[[1, 1]], 1);
    }
}
