//! Value-based learning vocabulary: returns, TD targets, tabular Q-learning,
//! dueling aggregation, Boltzmann / ε-greedy exploration, replay memory and
//! the DQN loss with its gradient.

use rand::Rng;

use crate::error::{Error, Result};
use crate::neural::{Activation, Activations, Mlp, NetSpec, ParamTensors};

/// `R_t = Σ_{t' ≥ t} γ^{t'−t} r_{t'}` for every step.
pub fn discounted_return(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for (i, r) in rewards.iter().enumerate().rev() {
        acc = r + gamma * acc;
        out[i] = acc;
    }
    out
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// How the next-state value of a TD target is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TargetMode<'a> {
    /// `max_a' Q_target(s', a')`.
    Max,
    /// `Q_target(s', argmax_a' Q_online(s', a'))`, given the online values.
    Double(&'a [f64]),
}

pub fn td_target(r: f64, gamma: f64, q_next: &[f64], mode: TargetMode<'_>, done: bool) -> f64 {
    if done || q_next.is_empty() {
        return r;
    }
    let next = match mode {
        TargetMode::Max => q_next.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        TargetMode::Double(online) => q_next[argmax(online)],
    };
    r + gamma * next
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TabularTransition {
    pub s: usize,
    pub a: usize,
    pub r: f64,
    pub s_next: usize,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    pub n_states: usize,
    pub n_actions: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn new(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            values: vec![0.0; n_states * n_actions],
        }
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.n_actions + a]
    }

    pub fn set(&mut self, s: usize, a: usize, v: f64) {
        self.values[s * self.n_actions + a] = v;
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.n_actions..(s + 1) * self.n_actions]
    }

    /// `Q(s,a) += α (y − Q(s,a))` with the max-mode TD target.
    pub fn q_learning_update(&mut self, t: &TabularTransition, alpha: f64, gamma: f64) {
        let y = td_target(t.r, gamma, self.row(t.s_next), TargetMode::Max, t.done);
        let q = self.get(t.s, t.a);
        self.set(t.s, t.a, q + alpha * (y - q));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DuelingMode {
    /// `Q = V + A − max A`.
    Max,
    /// `Q = V + A − mean A`.
    Mean,
}

pub fn dueling_combine(v: f64, adv: &[f64], mode: DuelingMode) -> Vec<f64> {
    let baseline = match mode {
        DuelingMode::Max => adv.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        DuelingMode::Mean => adv.iter().sum::<f64>() / adv.len() as f64,
    };
    adv.iter().map(|a| v + a - baseline).collect()
}

/// `A(s,a) = Q(s,a) − V(s)`.
pub fn advantage(q: &[f64], v: f64) -> Vec<f64> {
    q.iter().map(|x| x - v).collect()
}

/// `P(a) ∝ exp(q_a / τ)`, evaluated with the maximum subtracted first.
pub fn boltzmann_probs(q: &[f64], tau: f64) -> Vec<f64> {
    debug_assert!(tau > 0.0);
    let m = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = q.iter().map(|x| ((x - m) / tau).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

/// Draws an index from a categorical distribution.
pub fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(0)
}

/// Linear interpolation from `start` to `end` over `steps`, then flat.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearSchedule {
    pub start: f64,
    pub end: f64,
    pub steps: u64,
}

impl LinearSchedule {
    pub fn constant(v: f64) -> Self {
        Self {
            start: v,
            end: v,
            steps: 0,
        }
    }

    pub fn value(&self, t: u64) -> f64 {
        if self.steps == 0 || t >= self.steps {
            return self.end;
        }
        let frac = t as f64 / self.steps as f64;
        self.start + (self.end - self.start) * frac
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExplorationPolicy {
    Boltzmann(LinearSchedule),
    EpsilonGreedy(LinearSchedule),
}

impl ExplorationPolicy {
    pub fn validate(&self) -> Result<()> {
        match self {
            ExplorationPolicy::Boltzmann(s) if s.start <= 0.0 || s.end <= 0.0 => {
                Err(Error::Config("Boltzmann temperature must stay positive".into()))
            }
            ExplorationPolicy::EpsilonGreedy(s)
                if !(0.0..=1.0).contains(&s.start) || !(0.0..=1.0).contains(&s.end) =>
            {
                Err(Error::Config("ε must lie in [0,1]".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn select<R: Rng + ?Sized>(&self, q: &[f64], t: u64, rng: &mut R) -> usize {
        match self {
            ExplorationPolicy::Boltzmann(s) => sample_categorical(&boltzmann_probs(q, s.value(t)), rng),
            ExplorationPolicy::EpsilonGreedy(s) => {
                if rng.random::<f64>() < s.value(t) {
                    rng.random_range(0..q.len())
                } else {
                    argmax(q)
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub s: Vec<f64>,
    pub a: usize,
    pub r: f64,
    pub s_next: Vec<f64>,
    pub done: bool,
}

/// Fixed-capacity ring buffer with uniform sampling.
#[derive(Debug, Clone)]
pub struct ReplayMemory<T> {
    capacity: usize,
    items: Vec<T>,
    next: usize,
}

impl<T> ReplayMemory<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            items: Vec::new(),
            next: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Inserts, overwriting the oldest entry when full.
    pub fn push(&mut self, item: T) {
        if self.items.len() < self.capacity {
            self.items.push(item);
        } else {
            self.items[self.next] = item;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn get(&self, slot: usize) -> Option<&T> {
        self.items.get(slot)
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.items.iter()
    }

    /// `n` slot indices drawn uniformly with replacement.
    pub fn sample_indices<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<usize> {
        if self.items.is_empty() {
            return Vec::new();
        }
        (0..n).map(|_| rng.random_range(0..self.items.len())).collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<&T> {
        self.sample_indices(n, rng)
            .into_iter()
            .map(|i| &self.items[i])
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RlSettings {
    pub gamma: f64,
    /// Online → target copy period, in updates.
    pub target_sync: u64,
    pub batch_size: usize,
}

impl Default for RlSettings {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            target_sync: 500,
            batch_size: 32,
        }
    }
}

/// A differentiable action-value function usable by [`dqn_loss_and_grad`].
/// Gradients are stored in a value of the same type.
pub trait QFunction: ParamTensors + Clone {
    type Cache;

    fn input_len(&self) -> usize;
    fn n_actions(&self) -> usize;
    fn q_forward(&self, s: &[f64]) -> Result<(Vec<f64>, Self::Cache)>;
    fn q_backward_into(&self, cache: &Self::Cache, dq: &[f64], grads: &mut Self) -> Result<()>;
    fn zero_grads(&self) -> Self;

    fn q_values(&self, s: &[f64]) -> Result<Vec<f64>> {
        Ok(self.q_forward(s)?.0)
    }
}

impl QFunction for Mlp {
    type Cache = Activations;

    fn input_len(&self) -> usize {
        Mlp::input_len(self)
    }

    fn n_actions(&self) -> usize {
        self.output_len()
    }

    fn q_forward(&self, s: &[f64]) -> Result<(Vec<f64>, Activations)> {
        let acts = self.forward(s)?;
        Ok((acts.output().to_vec(), acts))
    }

    fn q_backward_into(&self, cache: &Activations, dq: &[f64], grads: &mut Mlp) -> Result<()> {
        self.backward_into(cache, dq, grads, false).map(|_| ())
    }

    fn zero_grads(&self) -> Self {
        self.zeros_like()
    }
}

/// Shared trunk with separate value (`β`) and advantage (`α`) streams.
#[derive(Debug, Clone, PartialEq)]
pub struct DuelingNet {
    pub trunk: Mlp,
    pub value: Mlp,
    pub advantage: Mlp,
    pub mode: DuelingMode,
}

pub struct DuelingCache {
    trunk: Activations,
    value: Activations,
    advantage: Activations,
}

impl DuelingNet {
    /// Rectifier trunk `input → hidden…`, then linear heads of sizes 1 and `n_actions`.
    pub fn new<R: Rng + ?Sized>(
        input: usize,
        hidden: &[usize],
        n_actions: usize,
        mode: DuelingMode,
        rng: &mut R,
    ) -> Result<Self> {
        if hidden.is_empty() {
            return Err(Error::Config("dueling trunk needs at least one hidden layer".into()));
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
        let value = Mlp::new(&NetSpec::mlp(h, &[], 1, Activation::Identity), rng)?;
        let advantage = Mlp::new(&NetSpec::mlp(h, &[], n_actions, Activation::Identity), rng)?;
        Ok(Self {
            trunk,
            value,
            advantage,
            mode,
        })
    }
}

impl ParamTensors for DuelingNet {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut t = self.trunk.tensors();
        t.extend(self.value.tensors());
        t.extend(self.advantage.tensors());
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut t = self.trunk.tensors_mut();
        t.extend(self.value.tensors_mut());
        t.extend(self.advantage.tensors_mut());
        t
    }
}

impl QFunction for DuelingNet {
    type Cache = DuelingCache;

    fn input_len(&self) -> usize {
        self.trunk.input_len()
    }

    fn n_actions(&self) -> usize {
        self.advantage.output_len()
    }

    fn q_forward(&self, s: &[f64]) -> Result<(Vec<f64>, DuelingCache)> {
        let trunk = self.trunk.forward(s)?;
        let value = self.value.forward(trunk.output())?;
        let advantage = self.advantage.forward(trunk.output())?;
        let q = dueling_combine(value.output()[0], advantage.output(), self.mode);
        Ok((
            q,
            DuelingCache {
                trunk,
                value,
                advantage,
            },
        ))
    }

    fn q_backward_into(&self, cache: &DuelingCache, dq: &[f64], grads: &mut DuelingNet) -> Result<()> {
        let n = dq.len();
        let total: f64 = dq.iter().sum();
        let da: Vec<f64> = match self.mode {
            DuelingMode::Mean => dq.iter().map(|g| g - total / n as f64).collect(),
            DuelingMode::Max => {
                let star = argmax(cache.advantage.output());
                dq.iter()
                    .enumerate()
                    .map(|(j, g)| if j == star { g - total } else { *g })
                    .collect()
            }
        };
        let hv = self
            .value
            .backward_into(&cache.value, &[total], &mut grads.value, true)?
            .unwrap_or_default();
        let ha = self
            .advantage
            .backward_into(&cache.advantage, &da, &mut grads.advantage, true)?
            .unwrap_or_default();
        let dh: Vec<f64> = hv.iter().zip(&ha).map(|(a, b)| a + b).collect();
        self.trunk.backward_into(&cache.trunk, &dh, &mut grads.trunk, false)?;
        Ok(())
    }

    fn zero_grads(&self) -> Self {
        Self {
            trunk: self.trunk.zeros_like(),
            value: self.value.zeros_like(),
            advantage: self.advantage.zeros_like(),
            mode: self.mode,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetKind {
    Max,
    Double,
}

/// Mean squared TD error over `batch` and its gradient with respect to the
/// online parameters. Targets come from `target` and are held constant.
pub fn dqn_loss_and_grad<N: QFunction>(
    net: &N,
    target: &N,
    batch: &[&Transition],
    gamma: f64,
    kind: TargetKind,
) -> Result<(f64, N)> {
    if batch.is_empty() {
        return Err(Error::Config("empty batch".into()));
    }
    let mut grads = net.zero_grads();
    let mut loss = 0.0;
    let n = batch.len() as f64;
    for t in batch {
        let y = if t.done {
            t.r
        } else {
            let q_next = target.q_values(&t.s_next)?;
            match kind {
                TargetKind::Max => td_target(t.r, gamma, &q_next, TargetMode::Max, false),
                TargetKind::Double => {
                    let online_next = net.q_values(&t.s_next)?;
                    td_target(t.r, gamma, &q_next, TargetMode::Double(&online_next), false)
                }
            }
        };
        let (q, cache) = net.q_forward(&t.s)?;
        if t.a >= q.len() {
            return Err(Error::shape("transition action", q.len(), t.a));
        }
        let err = q[t.a] - y;
        loss += err * err / n;
        let mut dq = vec![0.0; q.len()];
        dq[t.a] = 2.0 * err / n;
        net.q_backward_into(&cache, &dq, &mut grads)?;
    }
    Ok((loss, grads))
}
