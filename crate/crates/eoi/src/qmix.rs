//! Value-factorization learner: per-agent action-value networks, a monotonic
//! state-conditioned mixing network, target copies of everything, and the
//! intrinsic value function (IVF) path.
//!
//! The intrinsic channel never touches the mixed TD target. Each agent has a
//! scalar IVF head taking (observation, full action-value vector); it is
//! regressed toward classifier probability + discounted bootstrap, and the
//! behaviour networks additionally ascend the IVF output through its
//! action-value input (IVF parameters frozen there), weighted by alpha.

use crate::nnkit::checkpoint::TensorDict;
use crate::nnkit::{
    elu, elu_prime, AdamCfg, AdamState, Linear, LinearGrads, Mlp, MlpGrads, ParamVector,
};
use crate::replay::BatchData;
use crate::seeds::{stream_rng, Stream};
use crate::{Error, Result};
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;

pub const MIXER_EMBED: usize = 32;

/// Monotonic mixer: Q_tot = |w2(s)|' * elu(|W1(s)|' q + b1(s)) + b2(s).
/// Every weight actually multiplied with a q value passes through an
/// absolute value, which is what guarantees dQ_tot/dq_i >= 0.
#[derive(Debug, Clone)]
pub struct MixingNet {
    pub hyper_w1: Linear,
    pub hyper_b1: Linear,
    pub hyper_w2: Linear,
    pub hyper_b2_hidden: Linear,
    pub hyper_b2_out: Linear,
    pub n_agents: usize,
    pub embed: usize,
}

pub struct MixerTape {
    s: Array2<f64>,
    q: Array2<f64>,
    hw1: Array2<f64>,
    z: Array2<f64>,
    el: Array2<f64>,
    hw2: Array2<f64>,
    h: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct MixerGrads {
    pub hyper_w1: LinearGrads,
    pub hyper_b1: LinearGrads,
    pub hyper_w2: LinearGrads,
    pub hyper_b2_hidden: LinearGrads,
    pub hyper_b2_out: LinearGrads,
}

impl MixingNet {
    pub fn new(state_dim: usize, n_agents: usize, embed: usize, rng: &mut impl Rng) -> Self {
        MixingNet {
            hyper_w1: Linear::new(state_dim, n_agents * embed, rng),
            hyper_b1: Linear::new(state_dim, embed, rng),
            hyper_w2: Linear::new(state_dim, embed, rng),
            hyper_b2_hidden: Linear::new(state_dim, embed, rng),
            hyper_b2_out: Linear::new(embed, 1, rng),
            n_agents,
            embed,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.hyper_w1.in_dim()
    }

    /// q: (B, n) chosen action values; state: (B, state_dim) -> Q_tot (B).
    pub fn forward(&self, q: ArrayView2<f64>, state: ArrayView2<f64>) -> Result<(Array1<f64>, MixerTape)> {
        if q.ncols() != self.n_agents {
            return Err(Error::Shape(format!(
                "mixer got {} q values for {} agents",
                q.ncols(),
                self.n_agents
            )));
        }
        let b = q.nrows();
        let e = self.embed;
        let hw1 = self.hyper_w1.forward(state)?;
        let hb1 = self.hyper_b1.forward(state)?;
        let hw2 = self.hyper_w2.forward(state)?;
        let mut h = self.hyper_b2_hidden.forward(state)?;
        h.mapv_inplace(|v| v.max(0.0));
        let b2 = self.hyper_b2_out.forward(h.view())?;

        let mut z = hb1;
        for row in 0..b {
            for j in 0..e {
                let mut acc = z[[row, j]];
                for i in 0..self.n_agents {
                    acc += q[[row, i]] * hw1[[row, i * e + j]].abs();
                }
                z[[row, j]] = acc;
            }
        }
        let el = z.mapv(elu);
        let mut q_tot = Array1::zeros(b);
        for row in 0..b {
            let mut acc = b2[[row, 0]];
            for j in 0..e {
                acc += hw2[[row, j]].abs() * el[[row, j]];
            }
            q_tot[row] = acc;
        }
        Ok((
            q_tot,
            MixerTape {
                s: state.to_owned(),
                q: q.to_owned(),
                hw1,
                z,
                el,
                hw2,
                h,
            },
        ))
    }

    pub fn forward_nograd(&self, q: ArrayView2<f64>, state: ArrayView2<f64>) -> Result<Array1<f64>> {
        Ok(self.forward(q, state)?.0)
    }

    /// Backward from dL/dQ_tot; returns hypernetwork gradients and dL/dq.
    pub fn backward(&self, tape: &MixerTape, d_qtot: ArrayView1<f64>) -> Result<(MixerGrads, Array2<f64>)> {
        let b = tape.q.nrows();
        let e = self.embed;
        let n = self.n_agents;
        if d_qtot.len() != b {
            return Err(Error::Shape(format!(
                "mixer backward: {} grads for batch {b}",
                d_qtot.len()
            )));
        }
        let sign = |v: f64| {
            if v > 0.0 {
                1.0
            } else if v < 0.0 {
                -1.0
            } else {
                0.0
            }
        };

        // b2 path: q_tot += hyper_b2_out(relu(hyper_b2_hidden(s))).
        let d_b2 = d_qtot.insert_axis(Axis(1)).to_owned();
        let (g_b2_out, mut dh) = self.hyper_b2_out.backward(tape.h.view(), d_b2.view())?;
        dh.zip_mut_with(&tape.h, |g, &a| {
            if a <= 0.0 {
                *g = 0.0;
            }
        });
        let (g_b2_hidden, _) = self.hyper_b2_hidden.backward(tape.s.view(), dh.view())?;

        // w2 path: q_tot += sum_j |hw2_j| el_j.
        let mut d_hw2 = Array2::zeros((b, e));
        let mut d_el = Array2::zeros((b, e));
        for row in 0..b {
            let g = d_qtot[row];
            for j in 0..e {
                d_hw2[[row, j]] = g * tape.el[[row, j]] * sign(tape.hw2[[row, j]]);
                d_el[[row, j]] = g * tape.hw2[[row, j]].abs();
            }
        }
        let (g_w2, _) = self.hyper_w2.backward(tape.s.view(), d_hw2.view())?;

        // Through the ELU into z.
        let mut dz = d_el;
        dz.zip_mut_with(&tape.z, |g, &z| *g *= elu_prime(z));

        // b1 is additive in z.
        let (g_b1, _) = self.hyper_b1.backward(tape.s.view(), dz.view())?;

        // W1 path: z_j += q_i |hw1_{ij}|.
        let mut d_hw1 = Array2::zeros((b, n * e));
        let mut d_q = Array2::zeros((b, n));
        for row in 0..b {
            for i in 0..n {
                let mut acc = 0.0;
                for j in 0..e {
                    let w = tape.hw1[[row, i * e + j]];
                    acc += dz[[row, j]] * w.abs();
                    d_hw1[[row, i * e + j]] = dz[[row, j]] * tape.q[[row, i]] * sign(w);
                }
                d_q[[row, i]] = acc;
            }
        }
        let (g_w1, _) = self.hyper_w1.backward(tape.s.view(), d_hw1.view())?;

        Ok((
            MixerGrads {
                hyper_w1: g_w1,
                hyper_b1: g_b1,
                hyper_w2: g_w2,
                hyper_b2_hidden: g_b2_hidden,
                hyper_b2_out: g_b2_out,
            },
            d_q,
        ))
    }
}

impl ParamVector for MixingNet {
    fn param_count(&self) -> usize {
        self.hyper_w1.param_count()
            + self.hyper_b1.param_count()
            + self.hyper_w2.param_count()
            + self.hyper_b2_hidden.param_count()
            + self.hyper_b2_out.param_count()
    }
    fn for_each_param_mut(&mut self, f: &mut dyn FnMut(&mut f64)) {
        self.hyper_w1.for_each_param_mut(f);
        self.hyper_b1.for_each_param_mut(f);
        self.hyper_w2.for_each_param_mut(f);
        self.hyper_b2_hidden.for_each_param_mut(f);
        self.hyper_b2_out.for_each_param_mut(f);
    }
}

impl MixerGrads {
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for g in [
            &self.hyper_w1,
            &self.hyper_b1,
            &self.hyper_w2,
            &self.hyper_b2_hidden,
            &self.hyper_b2_out,
        ] {
            out.extend(g.w.iter());
            out.extend(g.b.iter());
        }
        out
    }
}

/// Epsilon-greedy over one action-value vector; ties go to the lowest index.
pub fn epsilon_greedy(q: ArrayView1<f64>, eps: f64, rng: &mut impl Rng) -> usize {
    debug_assert!((0.0..=1.0).contains(&eps));
    if eps > 0.0 && rng.random::<f64>() < eps {
        rng.random_range(0..q.len())
    } else {
        greedy_action(q)
    }
}

pub fn greedy_action(q: ArrayView1<f64>) -> usize {
    let mut best = 0;
    for i in 1..q.len() {
        if q[i] > q[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy)]
pub struct QmixCfg {
    pub gamma: f64,
    pub lr: f64,
    pub ivf_lr: f64,
    pub hidden: usize,
    pub embed: usize,
    pub target_sync_interval: u64,
    /// All per-agent networks start from identical weights when set.
    pub shared_init: bool,
    pub weight_decay: f64,
    pub grad_clip: f64,
}

impl QmixCfg {
    pub fn table_defaults() -> Self {
        QmixCfg {
            gamma: 0.98,
            lr: 1e-4,
            ivf_lr: 1e-4,
            hidden: 128,
            embed: MIXER_EMBED,
            target_sync_interval: 200,
            shared_init: false,
            weight_decay: 0.0,
            grad_clip: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QmixLosses {
    pub td_loss: f64,
    pub ivf_loss: f64,
    pub mean_ivf_value: f64,
}

pub struct TdComputation {
    pub loss: f64,
    pub agent_grads: Vec<MlpGrads>,
    pub mixer_grads: MixerGrads,
}

pub struct QmixLearner {
    pub agents: Vec<Mlp>,
    pub agent_targets: Vec<Mlp>,
    agent_opts: Vec<AdamState>,
    pub mixer: MixingNet,
    pub mixer_target: MixingNet,
    mixer_opt: AdamState,
    pub ivf: Vec<Mlp>,
    pub ivf_targets: Vec<Mlp>,
    ivf_opts: Vec<AdamState>,
    pub cfg: QmixCfg,
    n_agents: usize,
    obs_dim: usize,
    n_actions: usize,
    update_count: u64,
}

impl QmixLearner {
    pub fn new(
        n_agents: usize,
        obs_dim: usize,
        n_actions: usize,
        cfg: QmixCfg,
        run_seed: u64,
    ) -> Self {
        let adam = |lr: f64, count: usize| {
            let mut c = AdamCfg::with_lr(lr);
            c.weight_decay = cfg.weight_decay;
            c.grad_clip = cfg.grad_clip;
            AdamState::new(count, c)
        };
        let agents: Vec<Mlp> = (0..n_agents)
            .map(|i| {
                let stream = if cfg.shared_init { 0 } else { i as u64 };
                let mut rng = stream_rng(run_seed, Stream::InitAgent(stream));
                Mlp::new(obs_dim, cfg.hidden, n_actions, &mut rng)
            })
            .collect();
        let ivf: Vec<Mlp> = (0..n_agents)
            .map(|i| {
                let stream = if cfg.shared_init { 0 } else { i as u64 };
                let mut rng = stream_rng(run_seed, Stream::InitIvf(stream));
                Mlp::new(obs_dim + n_actions, cfg.hidden, 1, &mut rng)
            })
            .collect();
        let mut mixer_rng = stream_rng(run_seed, Stream::InitMixer);
        let mixer = MixingNet::new(n_agents * obs_dim, n_agents, cfg.embed, &mut mixer_rng);
        let agent_opts = agents.iter().map(|a| adam(cfg.lr, a.param_count())).collect();
        let ivf_opts = ivf.iter().map(|v| adam(cfg.ivf_lr, v.param_count())).collect();
        let mixer_opt = adam(cfg.lr, mixer.param_count());
        QmixLearner {
            agent_targets: agents.clone(),
            agents,
            agent_opts,
            mixer_target: mixer.clone(),
            mixer,
            mixer_opt,
            ivf_targets: ivf.clone(),
            ivf,
            ivf_opts,
            cfg,
            n_agents,
            obs_dim,
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

    /// Action-value vector of one agent for one observation.
    pub fn individual_q(&self, agent: usize, obs: ArrayView1<f64>) -> Result<Array1<f64>> {
        self.agents[agent].forward_one(obs)
    }

    /// Epsilon-greedy joint action.
    pub fn act(&self, obs: &[Array1<f64>], eps: f64, rng: &mut impl Rng) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(self.n_agents);
        for (i, o) in obs.iter().enumerate() {
            let q = self.individual_q(i, o.view())?;
            out.push(epsilon_greedy(q.view(), eps, rng));
        }
        Ok(out)
    }

    pub fn greedy(&self, obs: &[Array1<f64>]) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(self.n_agents);
        for (i, o) in obs.iter().enumerate() {
            let q = self.individual_q(i, o.view())?;
            out.push(greedy_action(q.view()));
        }
        Ok(out)
    }

    /// TD loss of the mixed value and its gradients. Pure: no parameters are
    /// touched, so tests can finite-difference through it.
    pub fn td_grads(&self, batch: &BatchData) -> Result<TdComputation> {
        let b = batch.len;
        let n = self.n_agents;

        // Online side: chosen action values through the mixer.
        let mut tapes = Vec::with_capacity(n);
        let mut q_all = Vec::with_capacity(n);
        let mut chosen = Array2::zeros((b, n));
        for i in 0..n {
            let (q, tape) = self.agents[i].forward(batch.obs[i].view())?;
            for row in 0..b {
                chosen[[row, i]] = q[[row, batch.actions[i][row]]];
            }
            tapes.push(tape);
            q_all.push(q);
        }
        let (q_tot, mix_tape) = self.mixer.forward(chosen.view(), batch.state.view())?;

        // Target side: per-agent greedy actions from target nets, mixed by
        // the target mixer.
        let mut next_chosen = Array2::zeros((b, n));
        for i in 0..n {
            let qn = self.agent_targets[i].forward_nograd(batch.next_obs[i].view())?;
            for row in 0..b {
                next_chosen[[row, i]] = qn[[row, greedy_action(qn.row(row))]];
            }
        }
        let q_tot_next = self
            .mixer_target
            .forward_nograd(next_chosen.view(), batch.next_state.view())?;

        let mut loss = 0.0;
        let mut d_qtot = Array1::zeros(b);
        for row in 0..b {
            let not_done = if batch.done[row] { 0.0 } else { 1.0 };
            let y = batch.rewards[row] + self.cfg.gamma * not_done * q_tot_next[row];
            let delta = q_tot[row] - y;
            loss += delta * delta;
            d_qtot[row] = 2.0 * delta / b as f64;
        }
        loss /= b as f64;

        let (mixer_grads, d_chosen) = self.mixer.backward(&mix_tape, d_qtot.view())?;
        let mut agent_grads = Vec::with_capacity(n);
        for i in 0..n {
            let mut dq = Array2::zeros((b, self.n_actions));
            for row in 0..b {
                dq[[row, batch.actions[i][row]]] = d_chosen[[row, i]];
            }
            let (g, _) = self.agents[i].backward(&tapes[i], dq.view())?;
            agent_grads.push(g);
        }
        Ok(TdComputation {
            loss,
            agent_grads,
            mixer_grads,
        })
    }

    /// Gradient of mean_b Q^p_i(o_i, Q^a_i(o_i)) w.r.t. theta_i, per agent:
    /// the chain rule flows through the IVF's action-value input while IVF
    /// parameters stay frozen. Returns (mean IVF value, ascent gradients).
    pub fn aux_grads(&self, batch: &BatchData) -> Result<(f64, Vec<MlpGrads>)> {
        let b = batch.len;
        let mut grads = Vec::with_capacity(self.n_agents);
        let mut mean_value = 0.0;
        for i in 0..self.n_agents {
            let (q, q_tape) = self.agents[i].forward(batch.obs[i].view())?;
            let input = concat_cols(batch.obs[i].view(), q.view());
            let (v, ivf_tape) = self.ivf[i].forward(input.view())?;
            mean_value += v.sum() / b as f64;
            let d_v = Array2::from_elem((b, 1), 1.0 / b as f64);
            let (_ivf_grads_unused, d_input) = self.ivf[i].backward(&ivf_tape, d_v.view())?;
            let d_q = d_input.slice(s![.., self.obs_dim..]).to_owned();
            let (g, _) = self.agents[i].backward(&q_tape, d_q.view())?;
            grads.push(g);
        }
        Ok((mean_value / self.n_agents as f64, grads))
    }

    /// Regress each IVF toward classifier probability + discounted target
    /// bootstrap. Only IVF parameters move. `intrinsic` is (batch, n) of
    /// freshly recomputed p values.
    pub fn ivf_update(&mut self, batch: &BatchData, intrinsic: &Array2<f64>) -> Result<f64> {
        if intrinsic.dim() != (batch.len, self.n_agents) {
            return Err(Error::Shape(format!(
                "intrinsic matrix {:?} for batch ({}, {})",
                intrinsic.dim(),
                batch.len,
                self.n_agents
            )));
        }
        let b = batch.len;
        let mut total = 0.0;
        for i in 0..self.n_agents {
            // Online value at (o, Q^a(o)).
            let q = self.agents[i].forward_nograd(batch.obs[i].view())?;
            let input = concat_cols(batch.obs[i].view(), q.view());
            let (v, tape) = self.ivf[i].forward(input.view())?;

            // Bootstrap from targets at (o', Qbar^a(o')).
            let qn = self.agent_targets[i].forward_nograd(batch.next_obs[i].view())?;
            let input_next = concat_cols(batch.next_obs[i].view(), qn.view());
            let vn = self.ivf_targets[i].forward_nograd(input_next.view())?;

            let mut d_v = Array2::zeros((b, 1));
            let mut loss = 0.0;
            for row in 0..b {
                let not_done = if batch.done[row] { 0.0 } else { 1.0 };
                let y = intrinsic[[row, i]] + self.cfg.gamma * not_done * vn[[row, 0]];
                let delta = v[[row, 0]] - y;
                loss += delta * delta;
                d_v[[row, 0]] = 2.0 * delta / b as f64;
            }
            total += loss / b as f64;
            let (grads, _) = self.ivf[i].backward(&tape, d_v.view())?;
            self.ivf_opts[i].step(&mut self.ivf[i], &grads.flat())?;
        }
        Ok(total / self.n_agents as f64)
    }

    /// One full learner update: optional IVF regression, then the TD step
    /// with the combined gradient (TD descent minus alpha times IVF ascent).
    ///
    /// Forward passes are shared across the three objectives and the two
    /// per-agent backwards collapse into one (backward is linear in the
    /// output gradient), which roughly halves the per-update network math
    /// relative to composing `ivf_update`, `td_grads` and `aux_grads`.
    pub fn update(
        &mut self,
        batch: &BatchData,
        intrinsic: Option<&Array2<f64>>,
        alpha: f64,
    ) -> Result<QmixLosses> {
        let b = batch.len;
        let n = self.n_agents;
        if let Some(p) = intrinsic {
            if p.dim() != (b, n) {
                return Err(Error::Shape(format!(
                    "intrinsic matrix {:?} for batch ({b}, {n})",
                    p.dim()
                )));
            }
        }

        // Online and target forwards, shared below by the TD objective, the
        // intrinsic value regression and the identity-value ascent.
        let mut q_all = Vec::with_capacity(n);
        let mut tapes = Vec::with_capacity(n);
        let mut qn_all = Vec::with_capacity(n);
        for i in 0..n {
            let (q, tape) = self.agents[i].forward(batch.obs[i].view())?;
            q_all.push(q);
            tapes.push(tape);
            qn_all.push(self.agent_targets[i].forward_nograd(batch.next_obs[i].view())?);
        }

        // Mixed TD error on the chosen action values.
        let mut chosen = Array2::zeros((b, n));
        let mut next_chosen = Array2::zeros((b, n));
        for i in 0..n {
            for row in 0..b {
                chosen[[row, i]] = q_all[i][[row, batch.actions[i][row]]];
                next_chosen[[row, i]] = qn_all[i][[row, greedy_action(qn_all[i].row(row))]];
            }
        }
        let (q_tot, mix_tape) = self.mixer.forward(chosen.view(), batch.state.view())?;
        let q_tot_next = self
            .mixer_target
            .forward_nograd(next_chosen.view(), batch.next_state.view())?;
        let mut td_loss = 0.0;
        let mut d_qtot = Array1::zeros(b);
        for row in 0..b {
            let not_done = if batch.done[row] { 0.0 } else { 1.0 };
            let y = batch.rewards[row] + self.cfg.gamma * not_done * q_tot_next[row];
            let delta = q_tot[row] - y;
            td_loss += delta * delta;
            d_qtot[row] = 2.0 * delta / b as f64;
        }
        td_loss /= b as f64;
        let (mixer_grads, d_chosen) = self.mixer.backward(&mix_tape, d_qtot.view())?;

        // Regress each IVF toward intrinsic reward plus discounted bootstrap,
        // then take the ascent direction through the refreshed network's
        // action-value input (IVF parameters frozen there).
        let mut ivf_loss = 0.0;
        let mut mean_ivf = 0.0;
        let mut d_q_aux: Vec<Option<Array2<f64>>> = vec![None; n];
        if let Some(p) = intrinsic {
            for i in 0..n {
                let input = concat_cols(batch.obs[i].view(), q_all[i].view());
                let (v, tape) = self.ivf[i].forward(input.view())?;
                let input_next = concat_cols(batch.next_obs[i].view(), qn_all[i].view());
                let vn = self.ivf_targets[i].forward_nograd(input_next.view())?;
                let mut d_v = Array2::zeros((b, 1));
                let mut loss = 0.0;
                for row in 0..b {
                    let not_done = if batch.done[row] { 0.0 } else { 1.0 };
                    let y = p[[row, i]] + self.cfg.gamma * not_done * vn[[row, 0]];
                    let delta = v[[row, 0]] - y;
                    loss += delta * delta;
                    d_v[[row, 0]] = 2.0 * delta / b as f64;
                }
                ivf_loss += loss / b as f64;
                let (grads, _) = self.ivf[i].backward(&tape, d_v.view())?;
                self.ivf_opts[i].step(&mut self.ivf[i], &grads.flat())?;

                if alpha > 0.0 {
                    let (v2, tape2) = self.ivf[i].forward(input.view())?;
                    mean_ivf += v2.sum() / b as f64;
                    let d_v2 = Array2::from_elem((b, 1), 1.0 / b as f64);
                    let (_, d_input) = self.ivf[i].backward(&tape2, d_v2.view())?;
                    d_q_aux[i] = Some(d_input.slice(s![.., self.obs_dim..]).to_owned());
                }
            }
            ivf_loss /= n as f64;
            if alpha > 0.0 {
                mean_ivf /= n as f64;
            }
        }

        // One backward per agent with the combined output gradient.
        for i in 0..n {
            let mut dq = Array2::zeros((b, self.n_actions));
            for row in 0..b {
                dq[[row, batch.actions[i][row]]] = d_chosen[[row, i]];
            }
            if let Some(aux) = &d_q_aux[i] {
                dq.scaled_add(-alpha, aux);
            }
            let (g, _) = self.agents[i].backward(&tapes[i], dq.view())?;
            self.agent_opts[i].step(&mut self.agents[i], &g.flat())?;
        }
        self.mixer_opt.step(&mut self.mixer, &mixer_grads.flat())?;
        self.update_count += 1;
        if self.update_count % self.cfg.target_sync_interval == 0 {
            self.sync_targets();
        }
        Ok(QmixLosses {
            td_loss,
            ivf_loss,
            mean_ivf_value: mean_ivf,
        })
    }

    /// The same update as the composition of the named pieces; kept as the
    /// oracle for the fused fast path.
    #[cfg(test)]
    fn update_reference(
        &mut self,
        batch: &BatchData,
        intrinsic: Option<&Array2<f64>>,
        alpha: f64,
    ) -> Result<QmixLosses> {
        let mut ivf_loss = 0.0;
        let mut mean_ivf = 0.0;
        if let Some(p) = intrinsic {
            ivf_loss = self.ivf_update(batch, p)?;
        }
        let td = self.td_grads(batch)?;
        let mut agent_grads = td.agent_grads;
        if intrinsic.is_some() && alpha > 0.0 {
            let (mv, aux) = self.aux_grads(batch)?;
            mean_ivf = mv;
            for (g, a) in agent_grads.iter_mut().zip(aux.iter()) {
                g.add_scaled(a, -alpha);
            }
        }
        for i in 0..self.n_agents {
            self.agent_opts[i].step(&mut self.agents[i], &agent_grads[i].flat())?;
        }
        self.mixer_opt.step(&mut self.mixer, &td.mixer_grads.flat())?;
        self.update_count += 1;
        if self.update_count % self.cfg.target_sync_interval == 0 {
            self.sync_targets();
        }
        Ok(QmixLosses {
            td_loss: td.loss,
            ivf_loss,
            mean_ivf_value: mean_ivf,
        })
    }

    /// Hard-copy all online networks into their targets.
    pub fn sync_targets(&mut self) {
        self.agent_targets = self.agents.clone();
        self.mixer_target = self.mixer.clone();
        self.ivf_targets = self.ivf.clone();
    }

    pub fn to_tensors(&self) -> TensorDict {
        let mut dict = TensorDict::new();
        for (i, a) in self.agents.iter().enumerate() {
            dict.extend(a.to_tensors(&format!("agent{i}")));
        }
        for (i, v) in self.ivf.iter().enumerate() {
            dict.extend(v.to_tensors(&format!("ivf{i}")));
        }
        for (name, l) in [
            ("mixer.hyper_w1", &self.mixer.hyper_w1),
            ("mixer.hyper_b1", &self.mixer.hyper_b1),
            ("mixer.hyper_w2", &self.mixer.hyper_w2),
            ("mixer.hyper_b2_hidden", &self.mixer.hyper_b2_hidden),
            ("mixer.hyper_b2_out", &self.mixer.hyper_b2_out),
        ] {
            dict.extend(l.to_tensors(name));
        }
        dict
    }

    /// Rebuild from a tensor dictionary; targets are synced to the loaded
    /// online networks.
    pub fn from_tensors(
        dict: &TensorDict,
        n_agents: usize,
        obs_dim: usize,
        n_actions: usize,
        cfg: QmixCfg,
    ) -> Result<QmixLearner> {
        let mut learner = QmixLearner::new(n_agents, obs_dim, n_actions, cfg, 0);
        for i in 0..n_agents {
            learner.agents[i] =
                Mlp::from_tensors(dict, &format!("agent{i}"), obs_dim, cfg.hidden, n_actions)?;
            learner.ivf[i] = Mlp::from_tensors(
                dict,
                &format!("ivf{i}"),
                obs_dim + n_actions,
                cfg.hidden,
                1,
            )?;
        }
        let sd = n_agents * obs_dim;
        learner.mixer.hyper_w1 =
            Linear::from_tensors(dict, "mixer.hyper_w1", sd, n_agents * cfg.embed)?;
        learner.mixer.hyper_b1 = Linear::from_tensors(dict, "mixer.hyper_b1", sd, cfg.embed)?;
        learner.mixer.hyper_w2 = Linear::from_tensors(dict, "mixer.hyper_w2", sd, cfg.embed)?;
        learner.mixer.hyper_b2_hidden =
            Linear::from_tensors(dict, "mixer.hyper_b2_hidden", sd, cfg.embed)?;
        learner.mixer.hyper_b2_out = Linear::from_tensors(dict, "mixer.hyper_b2_out", cfg.embed, 1)?;
        learner.sync_targets();
        Ok(learner)
    }
}

/// [a | b] along columns.
fn concat_cols(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Array2<f64> {
    assert_eq!(a.nrows(), b.nrows());
    let mut out = Array2::zeros((a.nrows(), a.ncols() + b.ncols()));
    out.slice_mut(s![.., ..a.ncols()]).assign(&a);
    out.slice_mut(s![.., a.ncols()..]).assign(&b);
    out
}
