//! Independent checks shared by the core integration tests and the
//! acceptance run: central finite differences, value iteration, and the
//! algebraic identities of the Q-value helpers.

#![allow(dead_code)]

use drlek_core::a3c::{actor_critic_grads, PolicyValueNet, Step, Trajectory, WorkerConfig};
use drlek_core::env::Action;
use drlek_core::knowledge::{MetaConfig, MetaLearner};
use drlek_core::neural::{Activation, Mlp, NetSpec, ParamTensors};
use drlek_core::rl::{
    advantage, argmax, boltzmann_probs, dqn_loss_and_grad, dueling_combine, DuelingMode, DuelingNet, QFunction,
    QTable, TabularTransition, TargetKind, Transition,
};
use drlek_core::selector::IndicatorPair;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;
/// Smallest |pre-activation| allowed at a rectifier, so that no ±FD_STEP
/// perturbation can cross a kink.
const KINK_MARGIN: f64 = 1e-3;
/// Smallest gap between the two best online Q-values at a double-Q argmax.
const ARGMAX_MARGIN: f64 = 1e-3;

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Largest relative error between `analytic` and central differences of `loss`
/// over every parameter of `p`.
pub fn fd_max_rel_err<P, F>(p: &P, analytic: &P, loss: F) -> f64
where
    P: ParamTensors + Clone,
    F: Fn(&P) -> f64,
{
    let an: Vec<f64> = analytic.tensors().concat();
    let mut q = p.clone();
    let mut worst: f64 = 0.0;
    let mut k = 0;
    for t in 0..q.tensors().len() {
        for i in 0..q.tensors()[t].len() {
            let orig = q.tensors()[t][i];
            q.tensors_mut()[t][i] = orig + FD_STEP;
            let up = loss(&q);
            q.tensors_mut()[t][i] = orig - FD_STEP;
            let down = loss(&q);
            q.tensors_mut()[t][i] = orig;
            worst = worst.max(rel_err(an[k], (up - down) / (2.0 * FD_STEP)));
            k += 1;
        }
    }
    assert_eq!(k, an.len(), "gradient container shape");
    worst
}

fn relu_margin(net: &Mlp, x: &[f64]) -> f64 {
    let acts = net.forward(x).expect("input fits");
    net.layers
        .iter()
        .zip(&acts.pre)
        .filter(|(l, _)| l.activation == Activation::Relu)
        .flat_map(|(_, z)| z.iter().map(|v| v.abs()))
        .fold(f64::INFINITY, f64::min)
}

fn argmax_gap(q: &[f64]) -> f64 {
    let best = argmax(q);
    q.iter()
        .enumerate()
        .filter(|&(i, _)| i != best)
        .map(|(_, v)| q[best] - v)
        .fold(f64::INFINITY, f64::min)
}

fn hidden_sizes(rng: &mut ChaCha8Rng) -> Vec<usize> {
    (0..rng.random_range(1..=2)).map(|_| rng.random_range(2..=16)).collect()
}

fn vector(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Forward/backward of plain nets with linear or softmax heads, under a
/// random linear functional of the output.
pub fn mlp_gradients(n_nets: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for i in 0..n_nets {
        let head = if i % 2 == 0 { Activation::Identity } else { Activation::Softmax };
        let (net, x) = loop {
            let input = rng.random_range(1..=8);
            let output = rng.random_range(2..=6);
            let net = Mlp::new(&NetSpec::mlp(input, &hidden_sizes(&mut rng), output, head), &mut rng).unwrap();
            let x = vector(&mut rng, input);
            if relu_margin(&net, &x) > KINK_MARGIN {
                break (net, x);
            }
        };
        let w = vector(&mut rng, net.output_len());
        let (grads, _) = net.backward(&net.forward(&x).unwrap(), &w).unwrap();
        let loss = |n: &Mlp| n.predict(&x).unwrap().iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
        worst = worst.max(fd_max_rel_err(&net, &grads, loss));
    }
    worst
}

fn random_batch(rng: &mut ChaCha8Rng, input: usize, n_actions: usize) -> Vec<Transition> {
    (0..rng.random_range(1..=4))
        .map(|_| Transition {
            s: vector(rng, input),
            a: rng.random_range(0..n_actions),
            r: rng.random_range(-1.0..1.0),
            s_next: vector(rng, input),
            done: rng.random_bool(0.3),
        })
        .collect()
}

/// Mean squared TD loss of plain Q-networks, alternating max and double targets.
pub fn dqn_gradients(n_nets: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for i in 0..n_nets {
        let kind = if i % 2 == 0 { TargetKind::Max } else { TargetKind::Double };
        let (net, target, batch) = loop {
            let input = rng.random_range(1..=8);
            let actions = rng.random_range(2..=6);
            let hidden = hidden_sizes(&mut rng);
            let spec = NetSpec::mlp(input, &hidden, actions, Activation::Identity);
            let net = Mlp::new(&spec, &mut rng).unwrap();
            let target = Mlp::new(&spec, &mut rng).unwrap();
            let batch = random_batch(&mut rng, input, actions);
            let ok = batch.iter().all(|t| {
                relu_margin(&net, &t.s) > KINK_MARGIN
                    && (kind == TargetKind::Max || argmax_gap(&net.predict(&t.s_next).unwrap()) > ARGMAX_MARGIN)
            });
            if ok {
                break (net, target, batch);
            }
        };
        let refs: Vec<&Transition> = batch.iter().collect();
        let (_, grads) = dqn_loss_and_grad(&net, &target, &refs, 0.9, kind).unwrap();
        let loss = |n: &Mlp| dqn_loss_and_grad(n, &target, &refs, 0.9, kind).unwrap().0;
        worst = worst.max(fd_max_rel_err(&net, &grads, loss));
    }
    worst
}

/// Combined actor-critic loss with the advantage held at its unperturbed value.
pub fn actor_critic_gradients(n_nets: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..n_nets {
        let (net, traj) = loop {
            let input = rng.random_range(1..=8);
            let actions = rng.random_range(2..=6);
            let net = PolicyValueNet::new(input, &hidden_sizes(&mut rng), actions, &mut rng).unwrap();
            let steps: Vec<Step> = (0..rng.random_range(1..=4))
                .map(|_| Step {
                    s: vector(&mut rng, input),
                    a: rng.random_range(0..actions),
                    r: rng.random_range(-1.0..1.0),
                })
                .collect();
            let terminal = rng.random_bool(0.5);
            let traj = Trajectory {
                steps,
                bootstrap: if terminal { 0.0 } else { rng.random_range(-1.0..1.0) },
                terminal,
            };
            if traj.steps.iter().all(|st| relu_margin(&net.trunk, &st.s) > KINK_MARGIN) {
                break (net, traj);
            }
        };
        let cfg = WorkerConfig {
            gamma: 0.9,
            ..WorkerConfig::default()
        };
        let analytic = actor_critic_grads(&traj, &net, &cfg).unwrap().grads;
        let returns = traj.returns(cfg.gamma);
        let adv: Vec<f64> = traj
            .steps
            .iter()
            .zip(&returns)
            .map(|(st, r)| r - net.evaluate(&st.s).unwrap().v)
            .collect();
        let loss = |n: &PolicyValueNet| {
            let mut l = 0.0;
            for ((st, ret), a_hat) in traj.steps.iter().zip(&returns).zip(&adv) {
                let out = n.evaluate(&st.s).unwrap();
                let neg_entropy: f64 = out.pi.iter().map(|p| p * p.ln()).sum();
                l += -out.pi[st.a].ln() * a_hat + cfg.entropy_coeff * neg_entropy
                    + cfg.value_loss_coeff * (ret - out.v).powi(2);
            }
            l
        };
        worst = worst.max(fd_max_rel_err(&net, &analytic, loss));
    }
    worst
}

/// The meta learner's dueling double-Q loss, taken from a learner whose
/// online and target networks have already drifted apart.
pub fn meta_update_gradients(n_nets: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for i in 0..n_nets {
        let (learner, batch) = loop {
            let input = rng.random_range(1..=8);
            let mut cfg = MetaConfig::new(input);
            cfg.hidden = hidden_sizes(&mut rng);
            cfg.gamma = 0.9;
            cfg.learning_rate = 1e-2;
            cfg.seed = seed.wrapping_mul(1000) + i as u64;
            let mut learner = MetaLearner::new(cfg).unwrap();
            let warmup = random_batch(&mut rng, input, Action::COUNT);
            let refs: Vec<&Transition> = warmup.iter().collect();
            for _ in 0..3 {
                learner.update_on(&refs).unwrap();
            }
            let batch = random_batch(&mut rng, input, Action::COUNT);
            let net = learner.online();
            let ok = batch.iter().all(|t| {
                relu_margin(&net.trunk, &t.s) > KINK_MARGIN
                    && relu_margin(&net.trunk, &t.s_next) > KINK_MARGIN
                    && argmax_gap(&net.q_values(&t.s_next).unwrap()) > ARGMAX_MARGIN
            });
            if ok {
                break (learner, batch);
            }
        };
        let refs: Vec<&Transition> = batch.iter().collect();
        let gamma = learner.config().gamma;
        let target = learner.target();
        let (_, grads) = dqn_loss_and_grad(learner.online(), target, &refs, gamma, TargetKind::Double).unwrap();
        let loss = |n: &DuelingNet| dqn_loss_and_grad(n, target, &refs, gamma, TargetKind::Double).unwrap().0;
        worst = worst.max(fd_max_rel_err(learner.online(), &grads, loss));
    }
    worst
}

/// Deterministic MDP: `next[s][a]`, `reward[s][a]`, `done[s][a]`.
#[derive(Debug, Clone)]
pub struct DetMdp {
    pub next: Vec<Vec<usize>>,
    pub reward: Vec<Vec<f64>>,
    pub done: Vec<Vec<bool>>,
}

impl DetMdp {
    pub fn random(rng: &mut ChaCha8Rng, n_states: usize, n_actions: usize) -> Self {
        let mut mdp = Self {
            next: vec![vec![0; n_actions]; n_states],
            reward: vec![vec![0.0; n_actions]; n_states],
            done: vec![vec![false; n_actions]; n_states],
        };
        for s in 0..n_states {
            for a in 0..n_actions {
                mdp.next[s][a] = rng.random_range(0..n_states);
                mdp.reward[s][a] = rng.random_range(-1.0..1.0);
                mdp.done[s][a] = rng.random_bool(0.2);
            }
        }
        mdp
    }

    pub fn n_states(&self) -> usize {
        self.next.len()
    }

    pub fn n_actions(&self) -> usize {
        self.next[0].len()
    }

    /// Optimal action values by value iteration to machine precision.
    pub fn value_iteration(&self, gamma: f64) -> Vec<Vec<f64>> {
        let (ns, na) = (self.n_states(), self.n_actions());
        let mut v = vec![0.0; ns];
        loop {
            let q: Vec<Vec<f64>> = (0..ns)
                .map(|s| {
                    (0..na)
                        .map(|a| {
                            let cont = if self.done[s][a] { 0.0 } else { v[self.next[s][a]] };
                            self.reward[s][a] + gamma * cont
                        })
                        .collect()
                })
                .collect();
            let nv: Vec<f64> = q.iter().map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max)).collect();
            let delta = nv.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            v = nv;
            if delta < 1e-14 {
                return q;
            }
        }
    }

    pub fn transition(&self, s: usize, a: usize) -> TabularTransition {
        TabularTransition {
            s,
            a,
            r: self.reward[s][a],
            s_next: self.next[s][a],
            done: self.done[s][a],
        }
    }
}

/// Largest |Q − Q*| after repeated Q-learning sweeps over random MDPs with
/// 2 to 6 states.
pub fn tabular_value_iteration_gap(n_mdps: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gamma = 0.9;
    let mut worst: f64 = 0.0;
    for _ in 0..n_mdps {
        let (ns, na) = (rng.random_range(2..=6), rng.random_range(2..=4));
        let mdp = DetMdp::random(&mut rng, ns, na);
        let q_star = mdp.value_iteration(gamma);
        let mut table = QTable::new(mdp.n_states(), mdp.n_actions());
        for _ in 0..2000 {
            for s in 0..mdp.n_states() {
                for a in 0..mdp.n_actions() {
                    table.q_learning_update(&mdp.transition(s, a), 0.5, gamma);
                }
            }
        }
        for (s, row) in q_star.iter().enumerate() {
            for (a, q) in row.iter().enumerate() {
                worst = worst.max((table.get(s, a) - q).abs());
            }
        }
    }
    worst
}

/// Two states coded by two features. From the first, action 0 leads to the
/// second with no reward and every other action ends the episode with a
/// small reward; from the second, one action pays 1 and the rest pay 0.1.
pub fn two_feature_mdp() -> (DetMdp, [[f64; 2]; 2]) {
    let n = Action::COUNT;
    let mdp = DetMdp {
        next: vec![vec![1; n], vec![1; n]],
        reward: vec![
            (0..n).map(|a| 0.1 * a as f64).collect(),
            (0..n).map(|a| if a == 3 { 1.0 } else { 0.1 }).collect(),
        ],
        done: vec![(0..n).map(|a| a != 0).collect(), vec![true; n]],
    };
    (mdp, [[1.0, 0.0], [0.0, 1.0]])
}

/// Number of updates until the meta learner's greedy policy equals the
/// value-iteration policy on [`two_feature_mdp`] and still does at the end
/// of `budget` updates. `None` when it never settles.
pub fn meta_policy_convergence(budget: usize, seed: u64) -> Option<usize> {
    let (mdp, feats) = two_feature_mdp();
    let gamma = 0.9;
    let optimal: Vec<usize> = mdp.value_iteration(gamma).iter().map(|row| argmax(row)).collect();
    let mut cfg = MetaConfig::new(2);
    cfg.hidden = vec![16, 16];
    cfg.gamma = gamma;
    cfg.target_sync = 25;
    cfg.seed = seed;
    let mut learner = MetaLearner::new(cfg).unwrap();
    let batch: Vec<Transition> = (0..mdp.n_states())
        .flat_map(|s| (0..mdp.n_actions()).map(move |a| (s, a)))
        .map(|(s, a)| Transition {
            s: feats[s].to_vec(),
            a,
            r: mdp.reward[s][a],
            s_next: feats[mdp.next[s][a]].to_vec(),
            done: mdp.done[s][a],
        })
        .collect();
    let refs: Vec<&Transition> = batch.iter().collect();
    let greedy = |l: &MetaLearner| -> Vec<usize> { feats.iter().map(|f| argmax(&l.q_values(f).unwrap())).collect() };
    let mut since = None;
    for u in 1..=budget {
        learner.update_on(&refs).unwrap();
        if greedy(&learner) == optimal {
            since.get_or_insert(u);
        } else {
            since = None;
        }
    }
    since
}

/// Largest deviation of the mean-mode dueling head under `A → A + c`, and
/// whether dyadic inputs (exact in binary) give bit-identical outputs.
pub fn dueling_shift_invariance(trials: usize, seed: u64) -> (f64, bool) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut exact = true;
    for _ in 0..trials {
        let n = rng.random_range(2..=6);
        let v = rng.random_range(-5.0..5.0);
        let adv = vector(&mut rng, n);
        let c = rng.random_range(-10.0..10.0);
        let shifted: Vec<f64> = adv.iter().map(|a| a + c).collect();
        let (q0, q1) = (dueling_combine(v, &adv, DuelingMode::Mean), dueling_combine(v, &shifted, DuelingMode::Mean));
        worst = worst.max(q0.iter().zip(&q1).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));

        let dy = |r: &mut ChaCha8Rng| r.random_range(-64i32..64) as f64 / 8.0;
        let v = dy(&mut rng);
        let adv: Vec<f64> = (0..4).map(|_| dy(&mut rng)).collect();
        let c = dy(&mut rng);
        let shifted: Vec<f64> = adv.iter().map(|a| a + c).collect();
        exact &= dueling_combine(v, &adv, DuelingMode::Mean) == dueling_combine(v, &shifted, DuelingMode::Mean);
    }
    (worst, exact)
}

/// Largest error of `advantage(combine(v, A), v) = A − mean A`.
pub fn advantage_round_trip(trials: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let n = rng.random_range(1..=6);
        let v = rng.random_range(-5.0..5.0);
        let adv = vector(&mut rng, n);
        let m = adv.iter().sum::<f64>() / n as f64;
        let back = advantage(&dueling_combine(v, &adv, DuelingMode::Mean), v);
        worst = worst.max(back.iter().zip(&adv).map(|(b, a)| (b - (a - m)).abs()).fold(0.0, f64::max));
    }
    worst
}

/// (largest |Σp − 1|, largest change under `q → q + c`) over random inputs.
pub fn boltzmann_identities(trials: usize, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut norm, mut shift): (f64, f64) = (0.0, 0.0);
    for _ in 0..trials {
        let n = rng.random_range(1..=8);
        let q: Vec<f64> = (0..n).map(|_| rng.random_range(-50.0..50.0)).collect();
        let tau = 10f64.powf(rng.random_range(-2.0..1.0));
        let c = rng.random_range(-100.0..100.0);
        let p = boltzmann_probs(&q, tau);
        let shifted: Vec<f64> = q.iter().map(|x| x + c).collect();
        let ps = boltzmann_probs(&shifted, tau);
        norm = norm.max((p.iter().sum::<f64>() - 1.0).abs());
        shift = shift.max(p.iter().zip(&ps).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
    }
    (norm, shift)
}

/// Number of distinct codes over all 36 ordered action pairs.
pub fn distinct_pair_codes() -> usize {
    let mut codes: Vec<Vec<u64>> = Action::ALL
        .iter()
        .flat_map(|&a| Action::ALL.iter().map(move |&b| IndicatorPair::encode(a, b)))
        .map(|p| p.as_slice().iter().map(|x| x.to_bits()).collect())
        .collect();
    codes.sort();
    codes.dedup();
    codes.len()
}
