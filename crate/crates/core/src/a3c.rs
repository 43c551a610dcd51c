//! Asynchronous advantage actor-critic.
//!
//! Workers own a private environment and a local copy of the policy-value
//! network. After each rollout of at most `t_max` steps they compute
//! actor-critic gradients locally and apply them to [`SharedParams`], whose
//! update is a single locked read-modify-write with a shared RMSProp state.

use std::collections::VecDeque;
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::neural::{copy_params, Activation, Activations, Mlp, NetSpec, OptState, OptimizerKind, ParamTensors};
use crate::rl::sample_categorical;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorkerConfig {
    pub n_workers: usize,
    pub t_max: usize,
    pub gamma: f64,
    pub entropy_coeff: f64,
    pub value_loss_coeff: f64,
    pub learning_rate: f64,
    /// Global gradient-norm clip applied before each shared update.
    pub max_grad_norm: f64,
}

impl Default for WorkerConfig {
    fn default() -> Self {
        Self {
            n_workers: 3,
            t_max: 5,
            gamma: 1.0,
            entropy_coeff: 0.01,
            value_loss_coeff: 0.5,
            learning_rate: 5e-4,
            max_grad_norm: 40.0,
        }
    }
}

impl WorkerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_workers == 0 || self.t_max == 0 {
            return Err(Error::Config("n_workers and t_max must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config("gamma must lie in [0,1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyValueOutput {
    pub pi: Vec<f64>,
    pub v: f64,
}

/// Rectifier trunk feeding a softmax policy head and a linear value head.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyValueNet {
    pub trunk: Mlp,
    pub policy: Mlp,
    pub value: Mlp,
}

pub struct PolicyValueCache {
    trunk: Activations,
    policy: Activations,
    value: Activations,
}

impl PolicyValueNet {
    pub fn new<R: Rng + ?Sized>(input: usize, hidden: &[usize], n_actions: usize, rng: &mut R) -> Result<Self> {
        if hidden.is_empty() {
            return Err(Error::Config("policy-value trunk needs a hidden layer".into()));
        }
        let mut sizes = vec![input];
        sizes.extend_from_slice(hidden);
        let trunk = Mlp::new(
            &NetSpec {
                layer_sizes: sizes,
                activations: vec![Activation::Relu; hidden.len()],
                init_scale: 1.0,
            },
            rng,
        )?;
        let h = *hidden.last().expect("non-empty");
        let policy = Mlp::new(
            &NetSpec::mlp(h, &[], n_actions, Activation::Softmax).with_init_scale(0.1),
            rng,
        )?;
        let value = Mlp::new(&NetSpec::mlp(h, &[], 1, Activation::Identity), rng)?;
        Ok(Self { trunk, policy, value })
    }

    pub fn input_len(&self) -> usize {
        self.trunk.input_len()
    }

    pub fn n_actions(&self) -> usize {
        self.policy.output_len()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            trunk: self.trunk.zeros_like(),
            policy: self.policy.zeros_like(),
            value: self.value.zeros_like(),
        }
    }

    fn forward(&self, s: &[f64]) -> Result<PolicyValueCache> {
        let trunk = self.trunk.forward(s)?;
        let policy = self.policy.forward(trunk.output())?;
        let value = self.value.forward(trunk.output())?;
        Ok(PolicyValueCache { trunk, policy, value })
    }

    pub fn evaluate(&self, s: &[f64]) -> Result<PolicyValueOutput> {
        let c = self.forward(s)?;
        Ok(PolicyValueOutput {
            pi: c.policy.output().to_vec(),
            v: c.value.output()[0],
        })
    }

    fn backward_into(&self, c: &PolicyValueCache, d_pi: &[f64], d_v: f64, grads: &mut Self) -> Result<()> {
        let hp = self
            .policy
            .backward_into(&c.policy, d_pi, &mut grads.policy, true)?
            .unwrap_or_default();
        let hv = self
            .value
            .backward_into(&c.value, &[d_v], &mut grads.value, true)?
            .unwrap_or_default();
        let dh: Vec<f64> = hp.iter().zip(&hv).map(|(a, b)| a + b).collect();
        self.trunk.backward_into(&c.trunk, &dh, &mut grads.trunk, false)?;
        Ok(())
    }
}

impl ParamTensors for PolicyValueNet {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut t = self.trunk.tensors();
        t.extend(self.policy.tensors());
        t.extend(self.value.tensors());
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut t = self.trunk.tensors_mut();
        t.extend(self.policy.tensors_mut());
        t.extend(self.value.tensors_mut());
        t
    }
}

/// Stacks the last three observation frames and appends injected features.
///
/// The first call fixes the frame and feature lengths; later calls with other
/// lengths are rejected.
#[derive(Debug, Clone)]
pub struct StateEncoder {
    frames: usize,
    history: VecDeque<Vec<f64>>,
    frame_len: Option<usize>,
    feature_len: Option<usize>,
}

pub const STACKED_FRAMES: usize = 3;

impl Default for StateEncoder {
    fn default() -> Self {
        Self::new(STACKED_FRAMES)
    }
}

impl StateEncoder {
    pub fn new(frames: usize) -> Self {
        Self {
            frames,
            history: VecDeque::with_capacity(frames),
            frame_len: None,
            feature_len: None,
        }
    }

    /// Forgets the frame history (start of an episode); lengths stay fixed.
    pub fn reset(&mut self) {
        self.history.clear();
    }

    pub fn encoded_len(frame_len: usize, feature_len: usize) -> usize {
        STACKED_FRAMES * frame_len + feature_len
    }

    pub fn encode(&mut self, frame: &[f64], features: Option<&[f64]>) -> Result<Vec<f64>> {
        let feat = features.unwrap_or(&[]);
        let frame_len = *self.frame_len.get_or_insert(frame.len());
        let feature_len = *self.feature_len.get_or_insert(feat.len());
        if frame.len() != frame_len || feat.len() != feature_len {
            return Err(Error::LengthDrift {
                expected: self.frames * frame_len + feature_len,
                got: self.frames * frame.len() + feat.len(),
            });
        }
        if self.history.len() == self.frames {
            self.history.pop_back();
        }
        self.history.push_front(frame.to_vec());
        let mut out = vec![0.0; self.frames * frame_len + feature_len];
        for (i, f) in self.history.iter().enumerate() {
            out[i * frame_len..(i + 1) * frame_len].copy_from_slice(f);
        }
        out[self.frames * frame_len..].copy_from_slice(feat);
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub s: Vec<f64>,
    pub a: usize,
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub steps: Vec<Step>,
    /// `V(s_T)` of the state after the last step, 0 when it was terminal.
    pub bootstrap: f64,
    pub terminal: bool,
}

impl Trajectory {
    /// n-step bootstrapped returns for each step.
    pub fn returns(&self, gamma: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.steps.len()];
        let mut acc = self.bootstrap;
        for (i, st) in self.steps.iter().enumerate().rev() {
            acc = st.r + gamma * acc;
            out[i] = acc;
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct ActorCriticGrads {
    pub grads: PolicyValueNet,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
}

/// Gradient of
/// `Σ_t −log π(a_t|s_t)·Â_t − β·H(π(·|s_t)) + c_v·(R_t − V(s_t))²`
/// with `Â_t = R_t − V(s_t)` held constant in the policy term.
pub fn actor_critic_grads(traj: &Trajectory, net: &PolicyValueNet, cfg: &WorkerConfig) -> Result<ActorCriticGrads> {
    if traj.steps.is_empty() {
        return Err(Error::Config("empty trajectory".into()));
    }
    let returns = traj.returns(cfg.gamma);
    let mut grads = net.zeros_like();
    let (mut policy_loss, mut value_loss, mut entropy) = (0.0, 0.0, 0.0);
    for (st, &ret) in traj.steps.iter().zip(&returns) {
        let c = net.forward(&st.s)?;
        let pi = c.policy.output();
        let v = c.value.output()[0];
        if st.a >= pi.len() {
            return Err(Error::shape("trajectory action", pi.len(), st.a));
        }
        let adv = ret - v;
        policy_loss -= pi[st.a].ln() * adv;
        value_loss += (ret - v).powi(2);
        let h: f64 = -pi.iter().map(|p| p * p.ln()).sum::<f64>();
        entropy += h;

        let d_pi: Vec<f64> = pi
            .iter()
            .enumerate()
            .map(|(j, &p)| {
                let pg = if j == st.a { -adv / p } else { 0.0 };
                pg + cfg.entropy_coeff * (p.ln() + 1.0)
            })
            .collect();
        let d_v = -2.0 * cfg.value_loss_coeff * (ret - v);
        net.backward_into(&c, &d_pi, d_v, &mut grads)?;
    }
    Ok(ActorCriticGrads {
        grads,
        policy_loss,
        value_loss,
        entropy,
    })
}

struct Shared {
    params: PolicyValueNet,
    opt: OptState,
    version: u64,
}

/// Global parameters with a version counter; the optimizer state is shared too.
pub struct SharedParams {
    inner: Mutex<Shared>,
}

impl SharedParams {
    pub fn new(params: PolicyValueNet, learning_rate: f64) -> Self {
        Self {
            inner: Mutex::new(Shared {
                params,
                opt: OptState::new(OptimizerKind::rmsprop(learning_rate)),
                version: 0,
            }),
        }
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Shared> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn snapshot(&self) -> (PolicyValueNet, u64) {
        let g = self.lock();
        (g.params.clone(), g.version)
    }

    /// Copies the current parameters into `local`; returns their version.
    pub fn sync_into(&self, local: &mut PolicyValueNet) -> u64 {
        let g = self.lock();
        copy_params(local, &g.params);
        g.version
    }

    pub fn version(&self) -> u64 {
        self.lock().version
    }

    /// Atomically applies one RMSProp step; returns the new version.
    pub fn apply_update(&self, grads: &PolicyValueNet) -> Result<u64> {
        let mut g = self.lock();
        let Shared { params, opt, version } = &mut *g;
        opt.step(params, grads)?;
        *version += 1;
        Ok(*version)
    }
}

/// Environment seen by a worker: an encoded state, discrete actions, and an
/// automatic reset after terminal steps.
pub trait EpisodicEnv {
    fn state(&self) -> &[f64];
    fn n_actions(&self) -> usize;
    /// Returns `(reward, done)`; when `done` the environment has already reset.
    fn step(&mut self, action: usize) -> (f64, bool);
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UpdateStats {
    pub version: u64,
    pub steps: usize,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
}

pub struct Worker<E> {
    pub id: usize,
    pub env: E,
    local: PolicyValueNet,
    rng: ChaCha8Rng,
    cfg: WorkerConfig,
}

impl<E: EpisodicEnv> Worker<E> {
    pub fn new(id: usize, env: E, template: &PolicyValueNet, cfg: WorkerConfig, seed: u64) -> Self {
        Self {
            id,
            env,
            local: template.clone(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            cfg,
        }
    }

    /// Up to `t_max` steps sampled from the local policy.
    pub fn rollout(&mut self) -> Result<Trajectory> {
        let mut traj = Trajectory::default();
        for _ in 0..self.cfg.t_max {
            let s = self.env.state().to_vec();
            let out = self.local.evaluate(&s)?;
            let a = sample_categorical(&out.pi, &mut self.rng);
            let (r, done) = self.env.step(a);
            traj.steps.push(Step { s, a, r });
            if done {
                traj.terminal = true;
                return Ok(traj);
            }
        }
        traj.bootstrap = self.local.evaluate(self.env.state())?.v;
        Ok(traj)
    }

    /// Snapshot, roll out, differentiate, publish.
    pub fn train_step(&mut self, shared: &SharedParams) -> Result<UpdateStats> {
        shared.sync_into(&mut self.local);
        let traj = self.rollout()?;
        let mut g = actor_critic_grads(&traj, &self.local, &self.cfg)?;
        g.grads.clip_norm(self.cfg.max_grad_norm);
        let version = shared.apply_update(&g.grads)?;
        Ok(UpdateStats {
            version,
            steps: traj.steps.len(),
            policy_loss: g.policy_loss,
            value_loss: g.value_loss,
            entropy: g.entropy,
        })
    }
}

/// Runs workers in a fixed round-robin order on the calling thread: one
/// admissible serialization of the asynchronous schedule, and reproducible.
pub fn train_round_robin<E: EpisodicEnv>(
    shared: &SharedParams,
    workers: &mut [Worker<E>],
    rounds: usize,
) -> Result<Vec<UpdateStats>> {
    let mut stats = Vec::with_capacity(rounds * workers.len());
    for _ in 0..rounds {
        for w in workers.iter_mut() {
            stats.push(w.train_step(shared)?);
        }
    }
    Ok(stats)
}

/// One OS thread per worker, each performing `updates_per_worker` updates.
pub fn train_threaded<E: EpisodicEnv + Send>(
    shared: &SharedParams,
    workers: Vec<Worker<E>>,
    updates_per_worker: usize,
) -> Result<Vec<Worker<E>>> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = workers
            .into_iter()
            .map(|mut w| {
                scope.spawn(move || -> Result<Worker<E>> {
                    for _ in 0..updates_per_worker {
                        w.train_step(shared)?;
                    }
                    Ok(w)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker thread panicked"))
            .collect()
    })
}
