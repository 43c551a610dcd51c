//! Deciders wired to percepts.
//!
//! Every variant implements [`Learner`]: it proposes an action for the current
//! percept and is told which action was executed and what it earned. In
//! DRL-EK the executed action is the selector's, so both inner learners learn
//! from actions they did not necessarily propose.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use drlek_core::a3c::{actor_critic_grads, PolicyValueNet, SharedParams, Step, Trajectory, WorkerConfig};
use drlek_core::env::Action;
use drlek_core::knowledge::{MetaLearner, Plan, Planner};
use drlek_core::neural::{OptState, OptimizerKind, ParamTensors};
use drlek_core::rl::{argmax, dqn_loss_and_grad, sample_categorical, LinearSchedule, QFunction, ReplayMemory, TargetKind, Transition};
use drlek_core::selector::{selection_share_stats, Selector, ShareStats, UpdateOutcome};
use drlek_core::Result;

use crate::pipeline::{Percept, Perception};

pub trait Learner {
    fn begin_episode(&mut self);
    fn propose(&mut self, p: &Percept, training: bool) -> Result<Action>;
    fn feedback(&mut self, executed: Action, reward: f64, done: bool, training: bool) -> Result<()>;

    /// Selection shares of the current episode, when the learner arbitrates.
    fn shares(&self) -> Option<ShareStats> {
        None
    }
}

fn action(i: usize) -> Action {
    Action::from_index(i).expect("index below Action::COUNT")
}

pub struct RandomAgent {
    rng: ChaCha8Rng,
}

impl RandomAgent {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Learner for RandomAgent {
    fn begin_episode(&mut self) {}

    fn propose(&mut self, _: &Percept, _: bool) -> Result<Action> {
        Ok(action(self.rng.random_range(0..Action::COUNT)))
    }

    fn feedback(&mut self, _: Action, _: f64, _: bool, _: bool) -> Result<()> {
        Ok(())
    }
}

pub struct PlannerAgent {
    planner: Planner,
    plan: Plan,
    pub fallbacks: usize,
}

impl PlannerAgent {
    pub fn new(planner: Planner) -> Self {
        Self {
            planner,
            plan: Plan::default(),
            fallbacks: 0,
        }
    }
}

impl Learner for PlannerAgent {
    fn begin_episode(&mut self) {
        self.plan = Plan::default();
    }

    fn propose(&mut self, p: &Percept, _: bool) -> Result<Action> {
        let (d, plan) = self.planner.decide(p.detections, &self.plan);
        self.plan = plan;
        self.fallbacks += d.fallback as usize;
        Ok(d.action)
    }

    fn feedback(&mut self, _: Action, _: f64, _: bool, _: bool) -> Result<()> {
        Ok(())
    }
}

/// Holds `(s, a, r)` until the next state is known.
#[derive(Default)]
struct PendingTransition {
    current: Vec<f64>,
    pending: Option<(Vec<f64>, usize, f64)>,
}

impl PendingTransition {
    /// Completes the waiting transition with `s` as its successor.
    fn advance(&mut self, s: Vec<f64>) -> Option<Transition> {
        let t = self.pending.take().map(|(ps, a, r)| Transition {
            s: ps,
            a,
            r,
            s_next: s.clone(),
            done: false,
        });
        self.current = s;
        t
    }

    fn record(&mut self, a: Action, r: f64, done: bool) -> Option<Transition> {
        if done {
            Some(Transition {
                s: self.current.clone(),
                a: a.index(),
                r,
                s_next: self.current.clone(),
                done: true,
            })
        } else {
            self.pending = Some((self.current.clone(), a.index(), r));
            None
        }
    }

    fn clear(&mut self) {
        self.pending = None;
    }
}

pub struct MetaAgent {
    learner: MetaLearner,
    perception: Perception,
    buf: PendingTransition,
    eval_epsilon: f64,
    rng: ChaCha8Rng,
}

impl MetaAgent {
    pub fn new(learner: MetaLearner, perception: Perception, eval_epsilon: f64, seed: u64) -> Self {
        Self {
            learner,
            perception,
            buf: PendingTransition::default(),
            eval_epsilon,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn learner(&self) -> &MetaLearner {
        &self.learner
    }

    /// Feature vector of the latest percept.
    pub fn current_features(&self) -> &[f64] {
        &self.buf.current
    }
}

impl Learner for MetaAgent {
    fn begin_episode(&mut self) {
        self.perception.begin_episode();
        self.buf.clear();
    }

    fn propose(&mut self, p: &Percept, training: bool) -> Result<Action> {
        let s = self.perception.encode(p)?;
        if let Some(t) = self.buf.advance(s) {
            if training {
                self.learner.remember(t)?;
            }
        }
        let s = &self.buf.current;
        if training {
            self.learner.decide(s, true)
        } else if self.rng.random::<f64>() < self.eval_epsilon {
            Ok(action(self.rng.random_range(0..Action::COUNT)))
        } else {
            self.learner.decide(s, false)
        }
    }

    fn feedback(&mut self, executed: Action, reward: f64, done: bool, training: bool) -> Result<()> {
        if let Some(t) = self.buf.record(executed, reward, done) {
            if training {
                self.learner.remember(t)?;
            }
        }
        Ok(())
    }
}

/// Sparse copy of a mostly-zero state, to keep large replays small.
#[derive(Debug, Clone)]
struct SparseState {
    len: usize,
    idx: Vec<u32>,
    val: Vec<f64>,
}

impl SparseState {
    fn from_dense(x: &[f64]) -> Self {
        let (idx, val) = x
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| (i as u32, *v))
            .unzip();
        Self { len: x.len(), idx, val }
    }

    fn to_dense(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.len];
        for (&i, &v) in self.idx.iter().zip(&self.val) {
            x[i as usize] = v;
        }
        x
    }
}

#[derive(Debug, Clone)]
struct SparseTransition {
    s: SparseState,
    a: usize,
    r: f64,
    s_next: SparseState,
    done: bool,
}

#[derive(Debug, Clone)]
pub struct DqnSetup {
    pub target: TargetKind,
    pub learning_rate: f64,
    pub replay: usize,
    pub batch_size: usize,
    pub gamma: f64,
    pub train_every: u64,
    pub learn_start: usize,
    pub target_sync: u64,
    pub epsilon: LinearSchedule,
    pub eval_epsilon: f64,
}

/// Value-based baseline over the raw observation stack.
pub struct DqnAgent<N: QFunction> {
    online: N,
    target: N,
    opt: OptState,
    memory: ReplayMemory<SparseTransition>,
    setup: DqnSetup,
    perception: Perception,
    buf: PendingTransition,
    rng: ChaCha8Rng,
    steps: u64,
    updates: u64,
}

impl<N: QFunction> DqnAgent<N> {
    pub fn new(net: N, setup: DqnSetup, perception: Perception, seed: u64) -> Self {
        Self {
            target: net.clone(),
            online: net,
            opt: OptState::new(OptimizerKind::adam(setup.learning_rate)),
            memory: ReplayMemory::new(setup.replay),
            setup,
            perception,
            buf: PendingTransition::default(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            steps: 0,
            updates: 0,
        }
    }

    fn remember(&mut self, t: Transition) -> Result<()> {
        self.memory.push(SparseTransition {
            s: SparseState::from_dense(&t.s),
            a: t.a,
            r: t.r,
            s_next: SparseState::from_dense(&t.s_next),
            done: t.done,
        });
        self.steps += 1;
        if self.steps % self.setup.train_every != 0 || self.memory.len() < self.setup.learn_start.max(self.setup.batch_size) {
            return Ok(());
        }
        let batch: Vec<Transition> = self
            .memory
            .sample(self.setup.batch_size, &mut self.rng)
            .into_iter()
            .map(|t| Transition {
                s: t.s.to_dense(),
                a: t.a,
                r: t.r,
                s_next: t.s_next.to_dense(),
                done: t.done,
            })
            .collect();
        let refs: Vec<&Transition> = batch.iter().collect();
        let (_, grads) = dqn_loss_and_grad(&self.online, &self.target, &refs, self.setup.gamma, self.setup.target)?;
        self.opt.step(&mut self.online, &grads)?;
        self.updates += 1;
        if self.updates % self.setup.target_sync == 0 {
            self.target = self.online.clone();
        }
        Ok(())
    }
}

impl<N: QFunction> Learner for DqnAgent<N> {
    fn begin_episode(&mut self) {
        self.perception.begin_episode();
        self.buf.clear();
    }

    fn propose(&mut self, p: &Percept, training: bool) -> Result<Action> {
        let s = self.perception.encode(p)?;
        if let Some(t) = self.buf.advance(s) {
            if training {
                self.remember(t)?;
            }
        }
        let eps = if training {
            self.setup.epsilon.value(self.steps)
        } else {
            self.setup.eval_epsilon
        };
        if self.rng.random::<f64>() < eps {
            return Ok(action(self.rng.random_range(0..Action::COUNT)));
        }
        Ok(action(argmax(&self.online.q_values(&self.buf.current)?)))
    }

    fn feedback(&mut self, executed: Action, reward: f64, done: bool, training: bool) -> Result<()> {
        if let Some(t) = self.buf.record(executed, reward, done) {
            if training {
                self.remember(t)?;
            }
        }
        Ok(())
    }
}

/// Single-stream actor-critic: one worker fed by the main loop.
pub struct A3cAgent {
    shared: SharedParams,
    local: PolicyValueNet,
    cfg: WorkerConfig,
    perception: Perception,
    current: Vec<f64>,
    steps: Vec<Step>,
    rng: ChaCha8Rng,
}

impl A3cAgent {
    pub fn new(shared: SharedParams, cfg: WorkerConfig, perception: Perception, seed: u64) -> Self {
        let (local, _) = shared.snapshot();
        Self {
            shared,
            local,
            cfg,
            perception,
            current: Vec::new(),
            steps: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn flush(&mut self, bootstrap: f64, terminal: bool) -> Result<()> {
        if self.steps.is_empty() {
            return Ok(());
        }
        let traj = Trajectory {
            steps: std::mem::take(&mut self.steps),
            bootstrap,
            terminal,
        };
        let mut g = actor_critic_grads(&traj, &self.local, &self.cfg)?;
        g.grads.clip_norm(self.cfg.max_grad_norm);
        self.shared.apply_update(&g.grads)?;
        self.shared.sync_into(&mut self.local);
        Ok(())
    }
}

impl Learner for A3cAgent {
    fn begin_episode(&mut self) {
        self.perception.begin_episode();
        self.steps.clear();
    }

    fn propose(&mut self, p: &Percept, training: bool) -> Result<Action> {
        let s = self.perception.encode(p)?;
        if training && self.steps.len() >= self.cfg.t_max {
            let v = self.local.evaluate(&s)?.v;
            self.flush(v, false)?;
        }
        let out = self.local.evaluate(&s)?;
        self.current = s;
        Ok(action(sample_categorical(&out.pi, &mut self.rng)))
    }

    fn feedback(&mut self, executed: Action, reward: f64, done: bool, training: bool) -> Result<()> {
        if !training {
            return Ok(());
        }
        self.steps.push(Step {
            s: std::mem::take(&mut self.current),
            a: executed.index(),
            r: reward,
        });
        if done {
            self.flush(0.0, true)?;
        }
        Ok(())
    }
}

/// Knowledge decider and RL module proposing, the selector arbitrating.
pub struct DrlEkAgent {
    knowledge: MetaAgent,
    rl: A3cAgent,
    selector: Selector,
    append_features: bool,
    input: Vec<f64>,
    chosen: usize,
    pending: Option<(Vec<f64>, usize, f64)>,
    log: Vec<(Action, Action, Action)>,
}

impl DrlEkAgent {
    pub fn new(knowledge: MetaAgent, rl: A3cAgent, selector: Selector) -> Self {
        let append_features = selector.config().feature_len > 0;
        Self {
            knowledge,
            rl,
            selector,
            append_features,
            input: Vec::new(),
            chosen: 0,
            pending: None,
            log: Vec::new(),
        }
    }

    fn remember(&mut self, t: Transition) -> Result<UpdateOutcome> {
        self.selector.remember(t)
    }
}

impl Learner for DrlEkAgent {
    fn begin_episode(&mut self) {
        self.knowledge.begin_episode();
        self.rl.begin_episode();
        self.pending = None;
        self.log.clear();
    }

    fn propose(&mut self, p: &Percept, training: bool) -> Result<Action> {
        let a1 = self.knowledge.propose(p, training)?;
        let a2 = self.rl.propose(p, training)?;
        let feats = self.append_features.then(|| self.knowledge.current_features());
        let x = self.selector.input(a1, a2, feats)?;
        if let Some((s, a, r)) = self.pending.take() {
            if training {
                self.remember(Transition {
                    s,
                    a,
                    r,
                    s_next: x.clone(),
                    done: false,
                })?;
            }
        }
        let chosen = self.selector.choose(&x, training)?;
        self.input = x;
        self.chosen = chosen.index();
        self.log.push((a1, a2, chosen));
        Ok(chosen)
    }

    fn feedback(&mut self, executed: Action, reward: f64, done: bool, training: bool) -> Result<()> {
        self.knowledge.feedback(executed, reward, done, training)?;
        self.rl.feedback(executed, reward, done, training)?;
        if training {
            let s = std::mem::take(&mut self.input);
            if done {
                self.remember(Transition {
                    s: s.clone(),
                    a: self.chosen,
                    r: reward,
                    s_next: s,
                    done: true,
                })?;
            } else {
                self.pending = Some((s, self.chosen, reward));
            }
        }
        Ok(())
    }

    fn shares(&self) -> Option<ShareStats> {
        selection_share_stats(&self.log).ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sparse_round_trip() {
        let x = vec![0.0, 1.5, 0.0, -2.0, 0.0];
        let s = SparseState::from_dense(&x);
        assert_eq!(s.idx, vec![1, 3]);
        assert_eq!(s.to_dense(), x);
    }

    #[test]
    fn pending_transitions_chain() {
        let mut b = PendingTransition::default();
        assert!(b.advance(vec![1.0]).is_none());
        assert!(b.record(Action::Jump, 0.5, false).is_none());
        let t = b.advance(vec![2.0]).unwrap();
        assert_eq!((t.s, t.a, t.r, t.s_next, t.done), (vec![1.0], 3, 0.5, vec![2.0], false));
        let t = b.record(Action::TurnLeft, -1.0, true).unwrap();
        assert_eq!((t.s, t.a, t.done), (vec![2.0], 0, true));
    }
}
