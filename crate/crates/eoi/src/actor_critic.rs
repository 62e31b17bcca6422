//! Centralized-critic actor-critic learner: per-agent softmax policies with
//! per-agent critics that see every observation plus one-hot actions of the
//! other agents.
//!
//! The intrinsic channel enters exactly once, as a reward shaping term in the
//! critic target y_i = r + alpha p(i|o_i) + gamma (1-done) E_{a'~pi_i} Qbar_i.
//! The policy gradient is the counterfactual-baseline form: the advantage
//! subtracts the policy-weighted mean of the critic row and is treated as a
//! constant by the gradient. Batches reuse stored actions without importance
//! correction, a known bias accepted for simplicity.

use crate::nnkit::checkpoint::TensorDict;
use crate::nnkit::{
    entropy_grad, softmax_1d, softmax_rows, AdamCfg, AdamState, Mlp, MlpGrads, ParamVector,
};
use crate::qmix::greedy_action;
use crate::replay::BatchData;
use crate::seeds::{stream_rng, Stream};
use crate::{Error, Result};
use ndarray::{s, Array1, Array2, ArrayView1};
use rand::Rng;

#[derive(Debug, Clone, Copy)]
pub struct AcCfg {
    pub gamma: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub hidden: usize,
    pub entropy_coef: f64,
    pub target_sync_interval: u64,
    pub shared_init: bool,
    pub weight_decay: f64,
    pub grad_clip: f64,
}

impl AcCfg {
    pub fn table_defaults() -> Self {
        AcCfg {
            gamma: 0.98,
            actor_lr: 1e-3,
            critic_lr: 1e-4,
            hidden: 128,
            entropy_coef: 0.01,
            target_sync_interval: 200,
            shared_init: false,
            weight_decay: 0.0,
            grad_clip: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AcLosses {
    pub critic_loss: f64,
    pub policy_loss: f64,
    pub mean_entropy: f64,
}

pub struct PolicyComputation {
    pub loss: f64,
    pub mean_entropy: f64,
    pub grads: Vec<MlpGrads>,
    /// Per agent: (batch, |A|) advantage rows, already detached.
    pub advantages: Vec<Array2<f64>>,
}

pub struct AcLearner {
    pub policies: Vec<Mlp>,
    policy_opts: Vec<AdamState>,
    pub critics: Vec<Mlp>,
    pub critic_targets: Vec<Mlp>,
    critic_opts: Vec<AdamState>,
    pub cfg: AcCfg,
    n_agents: usize,
    n_actions: usize,
    update_count: u64,
}

impl AcLearner {
    pub fn new(n_agents: usize, obs_dim: usize, n_actions: usize, cfg: AcCfg, run_seed: u64) -> Self {
        let adam = |lr: f64, count: usize| {
            let mut c = AdamCfg::with_lr(lr);
            c.weight_decay = cfg.weight_decay;
            c.grad_clip = cfg.grad_clip;
            AdamState::new(count, c)
        };
        let critic_in = n_agents * obs_dim + (n_agents - 1) * n_actions;
        let policies: Vec<Mlp> = (0..n_agents)
            .map(|i| {
                let stream = if cfg.shared_init { 0 } else { i as u64 };
                let mut rng = stream_rng(run_seed, Stream::InitAgent(stream));
                Mlp::new(obs_dim, cfg.hidden, n_actions, &mut rng)
            })
            .collect();
        let critics: Vec<Mlp> = (0..n_agents)
            .map(|i| {
                let stream = if cfg.shared_init { 0 } else { i as u64 };
                let mut rng = stream_rng(run_seed, Stream::InitCritic(stream));
                Mlp::new(critic_in, cfg.hidden, n_actions, &mut rng)
            })
            .collect();
        let policy_opts = policies.iter().map(|p| adam(cfg.actor_lr, p.param_count())).collect();
        let critic_opts = critics.iter().map(|c| adam(cfg.critic_lr, c.param_count())).collect();
        AcLearner {
            policies,
            policy_opts,
            critic_targets: critics.clone(),
            critics,
            critic_opts,
            cfg,
            n_agents,
            n_actions,
            update_count: 0,
        }
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn update_count(&self) -> u64 {
        self.update_count
    }

    /// Action distribution of one agent at one observation.
    pub fn action_probs(&self, agent: usize, obs: ArrayView1<f64>) -> Result<Array1<f64>> {
        Ok(softmax_1d(self.policies[agent].forward_one(obs)?.view()))
    }

    /// Categorical sample; returns (action, log-probability of that action).
    pub fn sample_action(
        &self,
        agent: usize,
        obs: ArrayView1<f64>,
        rng: &mut impl Rng,
    ) -> Result<(usize, f64)> {
        let p = self.action_probs(agent, obs)?;
        let a = sample_categorical(p.view(), rng);
        Ok((a, p[a].ln()))
    }

    /// Joint stochastic action.
    pub fn act(&self, obs: &[Array1<f64>], rng: &mut impl Rng) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(self.n_agents);
        for (i, o) in obs.iter().enumerate() {
            out.push(self.sample_action(i, o.view(), rng)?.0);
        }
        Ok(out)
    }

    /// Joint mode action (evaluation: zero-temperature limit of the softmax).
    pub fn greedy(&self, obs: &[Array1<f64>]) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(self.n_agents);
        for (i, o) in obs.iter().enumerate() {
            let p = self.action_probs(i, o.view())?;
            out.push(greedy_action(p.view()));
        }
        Ok(out)
    }

    /// Critic input for agent i: [all observations | one-hot actions of the
    /// other agents in ascending agent order].
    fn critic_input(
        &self,
        state: &Array2<f64>,
        actions: &[Vec<usize>],
        agent: usize,
    ) -> Array2<f64> {
        let b = state.nrows();
        let a = self.n_actions;
        let mut input = Array2::zeros((b, state.ncols() + (self.n_agents - 1) * a));
        input.slice_mut(s![.., ..state.ncols()]).assign(state);
        let mut col = state.ncols();
        for j in 0..self.n_agents {
            if j == agent {
                continue;
            }
            for row in 0..b {
                input[[row, col + actions[j][row]]] = 1.0;
            }
            col += a;
        }
        input
    }

    /// Shaped-target critic gradients with the next joint action fixed by the
    /// caller; pure so tests can finite-difference through it.
    fn critic_grads(
        &self,
        batch: &BatchData,
        intrinsic: Option<&Array2<f64>>,
        alpha: f64,
        next_actions: &[Vec<usize>],
    ) -> Result<(f64, Vec<MlpGrads>)> {
        if let Some(p) = intrinsic {
            if p.dim() != (batch.len, self.n_agents) {
                return Err(Error::Shape(format!(
                    "intrinsic matrix {:?} for batch ({}, {})",
                    p.dim(),
                    batch.len,
                    self.n_agents
                )));
            }
        }
        let b = batch.len;
        let mut total = 0.0;
        let mut grads = Vec::with_capacity(self.n_agents);
        for i in 0..self.n_agents {
            // Bootstrap: expectation of the target critic under the current
            // policy at the next observation.
            let next_input = self.critic_input(&batch.next_state, next_actions, i);
            let qn = self.critic_targets[i].forward_nograd(next_input.view())?;
            let pn = softmax_rows(self.policies[i].forward_nograd(batch.next_obs[i].view())?.view());
            let input = self.critic_input(&batch.state, &batch.actions, i);
            let (q, tape) = self.critics[i].forward(input.view())?;

            let mut d_q = Array2::zeros((b, self.n_actions));
            let mut loss = 0.0;
            for row in 0..b {
                let not_done = if batch.done[row] { 0.0 } else { 1.0 };
                let v_next: f64 = pn.row(row).dot(&qn.row(row));
                let shaped = batch.rewards[row]
                    + alpha * intrinsic.map_or(0.0, |p| p[[row, i]]);
                let y = shaped + self.cfg.gamma * not_done * v_next;
                let a = batch.actions[i][row];
                let delta = q[[row, a]] - y;
                loss += delta * delta;
                d_q[[row, a]] = 2.0 * delta / b as f64;
            }
            total += loss / b as f64;
            let (g, _) = self.critics[i].backward(&tape, d_q.view())?;
            grads.push(g);
        }
        Ok((total / self.n_agents as f64, grads))
    }

    /// One critic regression step toward r + alpha p + gamma (1-done) E[Qbar].
    /// The next joint action (for the other agents' slots of the target
    /// input) is sampled from the current policies using `rng`.
    pub fn critic_update(
        &mut self,
        batch: &BatchData,
        intrinsic: Option<&Array2<f64>>,
        alpha: f64,
        rng: &mut impl Rng,
    ) -> Result<f64> {
        let next_actions = self.sample_next_actions(batch, rng)?;
        let (loss, grads) = self.critic_grads(batch, intrinsic, alpha, &next_actions)?;
        for i in 0..self.n_agents {
            self.critic_opts[i].step(&mut self.critics[i], &grads[i].flat())?;
        }
        Ok(loss)
    }

    fn sample_next_actions(&self, batch: &BatchData, rng: &mut impl Rng) -> Result<Vec<Vec<usize>>> {
        let mut out = Vec::with_capacity(self.n_agents);
        for i in 0..self.n_agents {
            let probs = softmax_rows(self.policies[i].forward_nograd(batch.next_obs[i].view())?.view());
            let mut acts = Vec::with_capacity(batch.len);
            for row in 0..batch.len {
                acts.push(sample_categorical(probs.row(row), rng));
            }
            out.push(acts);
        }
        Ok(out)
    }

    /// Counterfactual-baseline policy gradients. Pure; advantages are
    /// returned so tests can freeze them for finite differencing.
    pub fn policy_grads(&self, batch: &BatchData) -> Result<PolicyComputation> {
        let b = batch.len;
        let mut total_loss = 0.0;
        let mut total_entropy = 0.0;
        let mut grads = Vec::with_capacity(self.n_agents);
        let mut advantages = Vec::with_capacity(self.n_agents);
        for i in 0..self.n_agents {
            let (logits, tape) = self.policies[i].forward(batch.obs[i].view())?;
            let probs = softmax_rows(logits.view());
            let input = self.critic_input(&batch.state, &batch.actions, i);
            let q = self.critics[i].forward_nograd(input.view())?;

            // A(a) = Q(a) - sum_a' pi(a') Q(a'), detached everywhere.
            let mut adv = Array2::zeros((b, self.n_actions));
            for row in 0..b {
                let v: f64 = probs.row(row).dot(&q.row(row));
                for a in 0..self.n_actions {
                    adv[[row, a]] = q[[row, a]] - v;
                }
            }

            // -mean log pi(a_taken) A(a_taken): d logits = A (pi - onehot)/B.
            let mut d_logits = Array2::zeros((b, self.n_actions));
            for row in 0..b {
                let a = batch.actions[i][row];
                let adv_a = adv[[row, a]];
                total_loss -= (probs[[row, a]] + crate::nnkit::EPS_NUM).ln() * adv_a / b as f64;
                for k in 0..self.n_actions {
                    let onehot = if k == a { 1.0 } else { 0.0 };
                    d_logits[[row, k]] = adv_a * (probs[[row, k]] - onehot) / b as f64;
                }
            }
            let (mean_h, d_h) = entropy_grad(probs.view());
            total_entropy += mean_h;
            total_loss -= self.cfg.entropy_coef * mean_h;
            d_logits.scaled_add(-self.cfg.entropy_coef, &d_h);

            let (g, _) = self.policies[i].backward(&tape, d_logits.view())?;
            grads.push(g);
            advantages.push(adv);
        }
        let n = self.n_agents as f64;
        Ok(PolicyComputation {
            loss: total_loss / n,
            mean_entropy: total_entropy / n,
            grads,
            advantages,
        })
    }

    /// One policy-gradient step per agent against the current critics.
    pub fn policy_update(&mut self, batch: &BatchData) -> Result<(f64, f64)> {
        let pc = self.policy_grads(batch)?;
        for i in 0..self.n_agents {
            self.policy_opts[i].step(&mut self.policies[i], &pc.grads[i].flat())?;
        }
        Ok((pc.loss, pc.mean_entropy))
    }

    /// Full learner update: critic regression on the shaped target, then the
    /// policy step, then the periodic hard target sync.
    pub fn update(
        &mut self,
        batch: &BatchData,
        intrinsic: Option<&Array2<f64>>,
        alpha: f64,
        rng: &mut impl Rng,
    ) -> Result<AcLosses> {
        let critic_loss = self.critic_update(batch, intrinsic, alpha, rng)?;
        let (policy_loss, mean_entropy) = self.policy_update(batch)?;
        self.update_count += 1;
        if self.update_count % self.cfg.target_sync_interval == 0 {
            self.sync_targets();
        }
        Ok(AcLosses {
            critic_loss,
            policy_loss,
            mean_entropy,
        })
    }

    pub fn sync_targets(&mut self) {
        self.critic_targets = self.critics.clone();
    }

    pub fn to_tensors(&self) -> TensorDict {
        let mut dict = TensorDict::new();
        for (i, p) in self.policies.iter().enumerate() {
            dict.extend(p.to_tensors(&format!("policy{i}")));
        }
        for (i, c) in self.critics.iter().enumerate() {
            dict.extend(c.to_tensors(&format!("critic{i}")));
        }
        dict
    }

    pub fn from_tensors(
        dict: &TensorDict,
        n_agents: usize,
        obs_dim: usize,
        n_actions: usize,
        cfg: AcCfg,
    ) -> Result<AcLearner> {
        let mut learner = AcLearner::new(n_agents, obs_dim, n_actions, cfg, 0);
        let critic_in = n_agents * obs_dim + (n_agents - 1) * n_actions;
        for i in 0..n_agents {
            learner.policies[i] =
                Mlp::from_tensors(dict, &format!("policy{i}"), obs_dim, cfg.hidden, n_actions)?;
            learner.critics[i] =
                Mlp::from_tensors(dict, &format!("critic{i}"), critic_in, cfg.hidden, n_actions)?;
        }
        learner.sync_targets();
        Ok(learner)
    }
}

/// Draw an index from one probability row.
pub fn sample_categorical(p: ArrayView1<f64>, rng: &mut impl Rng) -> usize {
    let r: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &v) in p.iter().enumerate() {
        acc += v;
        if r < acc {
            return i;
        }
    }
    p.len() - 1
}
