//! Arbitration between the knowledge action and the learned action.
//!
//! A small DQN reads the one-hot codes of both proposals and may output any
//! action, including one neither module proposed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::Action;
use crate::error::{Error, Result};
use crate::neural::{Activation, Mlp, NetSpec, OptState, OptimizerKind};
use crate::rl::{
    argmax, boltzmann_probs, dqn_loss_and_grad, sample_categorical, LinearSchedule, QFunction, ReplayMemory,
    TargetKind, Transition,
};

pub const PAIR_LEN: usize = 2 * Action::COUNT;

/// One-hot code of `a1` followed by one-hot code of `a2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndicatorPair(pub [f64; PAIR_LEN]);

impl IndicatorPair {
    pub fn encode(a1: Action, a2: Action) -> Self {
        let mut v = [0.0; PAIR_LEN];
        v[a1.index()] = 1.0;
        v[Action::COUNT + a2.index()] = 1.0;
        IndicatorPair(v)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Temperature-`tau` Boltzmann draw over the network's Q-values.
pub fn select<R: Rng + ?Sized>(net: &Mlp, input: &[f64], tau: f64, rng: &mut R) -> Result<Action> {
    if tau <= 0.0 {
        return Err(Error::Config("temperature must be positive".into()));
    }
    let q = net.q_values(input)?;
    let idx = sample_categorical(&boltzmann_probs(&q, tau), rng);
    Action::from_index(idx).ok_or_else(|| Error::shape("selector output", Action::COUNT, q.len()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectorConfig {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub replay_capacity: usize,
    pub batch_size: usize,
    pub gamma: f64,
    pub target_sync: u64,
    pub tau: LinearSchedule,
    /// Appended feature length; 0 keeps the input to the two indicators.
    pub feature_len: usize,
    pub seed: u64,
}

impl Default for SelectorConfig {
    fn default() -> Self {
        Self {
            hidden: vec![50, 50],
            learning_rate: 2.5e-4,
            replay_capacity: 1_000_000,
            batch_size: 32,
            gamma: 1.0,
            target_sync: 500,
            tau: LinearSchedule {
                start: 1.0,
                end: 0.1,
                steps: 50_000,
            },
            feature_len: 0,
            seed: 0,
        }
    }
}

impl SelectorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.replay_capacity < self.batch_size {
            return Err(Error::Config("selector replay must hold a batch".into()));
        }
        if self.tau.start <= 0.0 || self.tau.end <= 0.0 {
            return Err(Error::Config("selector temperature must stay positive".into()));
        }
        if self.target_sync == 0 {
            return Err(Error::Config("target_sync must be positive".into()));
        }
        Ok(())
    }

    pub fn input_len(&self) -> usize {
        PAIR_LEN + self.feature_len
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UpdateOutcome {
    /// Replay held fewer transitions than a batch.
    Skipped,
    Trained { loss: f64 },
}

#[derive(Debug, Clone)]
pub struct Selector {
    online: Mlp,
    target: Mlp,
    opt: OptState,
    memory: ReplayMemory<Transition>,
    cfg: SelectorConfig,
    rng: ChaCha8Rng,
    steps: u64,
    updates: u64,
}

impl Selector {
    pub fn new(cfg: SelectorConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let online = Mlp::new(
            &NetSpec::mlp(cfg.input_len(), &cfg.hidden, Action::COUNT, Activation::Identity),
            &mut rng,
        )?;
        Ok(Self {
            target: online.clone(),
            online,
            opt: OptState::new(OptimizerKind::rmsprop(cfg.learning_rate)),
            memory: ReplayMemory::new(cfg.replay_capacity),
            cfg,
            rng,
            steps: 0,
            updates: 0,
        })
    }

    pub fn config(&self) -> &SelectorConfig {
        &self.cfg
    }

    pub fn online(&self) -> &Mlp {
        &self.online
    }

    pub fn online_mut(&mut self) -> &mut Mlp {
        &mut self.online
    }

    pub fn memory_len(&self) -> usize {
        self.memory.len()
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn tau(&self) -> f64 {
        self.cfg.tau.value(self.steps)
    }

    /// Network input: the indicator pair, then the features when configured.
    pub fn input(&self, a1: Action, a2: Action, features: Option<&[f64]>) -> Result<Vec<f64>> {
        let mut v = IndicatorPair::encode(a1, a2).as_slice().to_vec();
        let feats = features.unwrap_or(&[]);
        if self.cfg.feature_len > 0 {
            if feats.len() != self.cfg.feature_len {
                return Err(Error::shape("selector features", self.cfg.feature_len, feats.len()));
            }
            v.extend_from_slice(feats);
        }
        Ok(v)
    }

    /// Boltzmann choice at the scheduled temperature, or the greedy action.
    pub fn choose(&mut self, input: &[f64], explore: bool) -> Result<Action> {
        if explore {
            let tau = self.tau();
            select(&self.online, input, tau, &mut self.rng)
        } else {
            let q = self.online.q_values(input)?;
            Ok(Action::from_index(argmax(&q)).expect("six outputs"))
        }
    }

    /// Stores a transition, then trains once if the replay holds a batch.
    pub fn remember(&mut self, t: Transition) -> Result<UpdateOutcome> {
        if t.s.len() != self.cfg.input_len() || t.s_next.len() != self.cfg.input_len() {
            return Err(Error::shape("selector transition", self.cfg.input_len(), t.s.len()));
        }
        self.memory.push(t);
        self.steps += 1;
        self.update()
    }

    pub fn update(&mut self) -> Result<UpdateOutcome> {
        if self.memory.len() < self.cfg.batch_size {
            return Ok(UpdateOutcome::Skipped);
        }
        let idx = self.memory.sample_indices(self.cfg.batch_size, &mut self.rng);
        let batch: Vec<&Transition> = idx.iter().map(|&i| self.memory.get(i).expect("sampled slot")).collect();
        let (loss, grads) = dqn_loss_and_grad(&self.online, &self.target, &batch, self.cfg.gamma, TargetKind::Max)?;
        self.opt.step(&mut self.online, &grads)?;
        self.updates += 1;
        if self.updates % self.cfg.target_sync == 0 {
            self.target = self.online.clone();
        }
        Ok(UpdateOutcome::Trained { loss })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShareStats {
    pub share_a1: f64,
    pub share_a2: f64,
    pub share_other: f64,
}

/// How often the executed action came from each module. When both proposed
/// it, the step counts half to each.
pub fn selection_share_stats(log: &[(Action, Action, Action)]) -> Result<ShareStats> {
    if log.is_empty() {
        return Err(Error::Config("empty selection log".into()));
    }
    let (mut s1, mut s2, mut other) = (0.0, 0.0, 0.0);
    for &(a1, a2, chosen) in log {
        match (chosen == a1, chosen == a2) {
            (true, true) => {
                s1 += 0.5;
                s2 += 0.5;
            }
            (true, false) => s1 += 1.0,
            (false, true) => s2 += 1.0,
            (false, false) => other += 1.0,
        }
    }
    let n = log.len() as f64;
    Ok(ShareStats {
        share_a1: s1 / n,
        share_a2: s2 / n,
        share_other: other / n,
    })
}
