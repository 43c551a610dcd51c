//! Experiment runs, episode logs and summary statistics.

use std::cell::RefCell;
use std::fmt::Write as _;
use std::path::Path;
use std::rc::Rc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use drlek_core::a3c::{EpisodicEnv, PolicyValueNet, SharedParams, Worker, WorkerConfig};
use drlek_core::detector::DetectorConfig;
use drlek_core::env::{food_kinds, Action};
use drlek_core::features::{FeatureFilter, ObjectScoreTable};
use drlek_core::knowledge::{MetaConfig, MetaLearner, Planner, RuleSet};
use drlek_core::rl::{DuelingMode, DuelingNet, LinearSchedule, TargetKind};
use drlek_core::neural::{Activation, Mlp, NetSpec};
use drlek_core::selector::{Selector, SelectorConfig, ShareStats};

use crate::agents::{A3cAgent, DqnAgent, DqnSetup, DrlEkAgent, Learner, MetaAgent, PlannerAgent, RandomAgent};
use crate::config::{ExperimentConfig, Variant};
use crate::pipeline::{Game, Injection, Perception, PerceptionSpec};
use crate::HarnessError;

pub const CSV_HEADER: &str = "episode,seed,reward,steps,share_a1,share_a2,share_other,wall_ms";

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub seed: u64,
    pub reward: f64,
    pub steps: usize,
    pub shares: Option<ShareStats>,
    pub wall_ms: u64,
}

/// Append-only episode log. Training episodes come first, evaluation last.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsLog {
    pub records: Vec<EpisodeRecord>,
}

impl MetricsLog {
    pub fn push(&mut self, r: EpisodeRecord) {
        self.records.push(r);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.reward).collect()
    }

    /// Last `n` records (all of them when shorter).
    pub fn tail(&self, n: usize) -> &[EpisodeRecord] {
        &self.records[self.records.len().saturating_sub(n)..]
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(64 * (self.records.len() + 1));
        s.push_str(CSV_HEADER);
        s.push('\n');
        for r in &self.records {
            let _ = write!(s, "{},{},{},{},", r.episode, r.seed, r.reward, r.steps);
            match r.shares {
                Some(sh) => {
                    let _ = write!(s, "{},{},{},", sh.share_a1, sh.share_a2, sh.share_other);
                }
                None => s.push_str(",,,"),
            }
            let _ = writeln!(s, "{}", r.wall_ms);
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self, HarnessError> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == CSV_HEADER => {}
            _ => return Err(HarnessError::Csv { line: 1, msg: "missing header".into() }),
        }
        let mut log = MetricsLog::default();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |msg: &str| HarnessError::Csv { line: i + 1, msg: msg.to_string() };
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 8 {
                return Err(bad("expected 8 fields"));
            }
            let num = |j: usize| f[j].parse::<f64>().map_err(|_| bad("bad number"));
            let int = |j: usize| f[j].parse::<u64>().map_err(|_| bad("bad integer"));
            let shares = if f[4].is_empty() {
                None
            } else {
                Some(ShareStats {
                    share_a1: num(4)?,
                    share_a2: num(5)?,
                    share_other: num(6)?,
                })
            };
            log.push(EpisodeRecord {
                episode: int(0)? as usize,
                seed: int(1)?,
                reward: num(2)?,
                steps: int(3)? as usize,
                shares,
                wall_ms: int(7)?,
            });
        }
        Ok(log)
    }

    pub fn write(&self, path: &Path) -> Result<(), HarnessError> {
        std::fs::write(path, self.to_csv()).map_err(|e| HarnessError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_csv(&text)
    }
}

/// Trailing mean; early points average what is available. A window covering
/// the whole series yields the global mean everywhere.
pub fn moving_average(xs: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    if window >= xs.len() {
        let m = mean(xs);
        return vec![m; xs.len()];
    }
    let mut out = Vec::with_capacity(xs.len());
    let mut acc = 0.0;
    for i in 0..xs.len() {
        acc += xs[i];
        if i >= window {
            acc -= xs[i - window];
        }
        out.push(acc / (i + 1).min(window) as f64);
    }
    out
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (0 for fewer than two points).
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Least-squares slope of `ys` against `0, 1, 2, …`.
pub fn slope(ys: &[f64]) -> f64 {
    let n = ys.len() as f64;
    if ys.len() < 2 {
        return 0.0;
    }
    let mx = (n - 1.0) / 2.0;
    let my = mean(ys);
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, y) in ys.iter().enumerate() {
        let dx = i as f64 - mx;
        sxy += dx * (y - my);
        sxx += dx * dx;
    }
    sxy / sxx
}

/// Step-weighted mean shares over consecutive windows of episodes that carry telemetry.
pub fn share_windows(records: &[EpisodeRecord], window: usize) -> Vec<ShareStats> {
    let with: Vec<(&ShareStats, f64)> = records
        .iter()
        .filter_map(|r| r.shares.as_ref().map(|s| (s, r.steps as f64)))
        .collect();
    with.chunks(window.max(1))
        .map(|c| {
            let w: f64 = c.iter().map(|(_, n)| n).sum();
            let avg = |f: fn(&ShareStats) -> f64| c.iter().map(|(s, n)| f(s) * n).sum::<f64>() / w;
            ShareStats {
                share_a1: avg(|s| s.share_a1),
                share_a2: avg(|s| s.share_a2),
                share_other: avg(|s| s.share_other),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub variant: String,
    pub mean: f64,
    pub std: f64,
}

/// Mean and standard deviation of the last `tail` rewards of each log.
pub fn compare_table(logs: &[(String, MetricsLog)], tail: usize) -> Result<Vec<CompareRow>, HarnessError> {
    logs.iter()
        .map(|(name, log)| {
            if log.is_empty() {
                return Err(HarnessError::Invalid(format!("log for `{name}` is empty")));
            }
            let r: Vec<f64> = log.tail(tail).iter().map(|r| r.reward).collect();
            Ok(CompareRow {
                variant: name.clone(),
                mean: mean(&r),
                std: std_dev(&r),
            })
        })
        .collect()
}

pub fn compare_csv(rows: &[CompareRow]) -> String {
    let mut s = String::from("variant,mean,std\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{}", r.variant, r.mean, r.std);
    }
    s
}

// Seed streams derived from the run seed.
const TRAIN_LAYOUTS: u64 = 1;
const EVAL_LAYOUTS: u64 = 2;
const DETECTOR: u64 = 3;
const AGENT: u64 = 4;
const WORKERS: u64 = 16;

fn sub_seed(seed: u64, stream: u64) -> u64 {
    use rand::Rng;
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r.random()
}

struct Parts<'a> {
    cfg: &'a ExperimentConfig,
    seed: u64,
    table: ObjectScoreTable,
}

impl<'a> Parts<'a> {
    fn new(cfg: &'a ExperimentConfig, seed: u64) -> Self {
        Self {
            cfg,
            seed,
            table: cfg.score_table(),
        }
    }

    fn mv(&self) -> f64 {
        self.cfg.world.max_visible_distance
    }

    fn detector(&self, stream: u64) -> DetectorConfig {
        self.cfg.detector(sub_seed(self.seed, DETECTOR + stream))
    }

    fn rl_perception(&self, injection: Injection) -> Perception {
        Perception::new(PerceptionSpec {
            injection,
            occupancy: true,
            k: self.cfg.k,
            mask: self.cfg.a3c.mask,
            filter: FeatureFilter {
                max_distance: f64::INFINITY,
                ..FeatureFilter::meta_default(self.mv())
            },
            table: self.table.clone(),
        })
    }

    /// Near half, confident and close detections, confusable kinds untracked.
    fn meta_perception(&self, k: usize) -> Perception {
        let mut table = self.table.clone();
        for p in &self.detector(0).confusion_pairs {
            table.untrack(p.a);
            table.untrack(p.b);
        }
        Perception::new(PerceptionSpec {
            injection: Injection::Area,
            occupancy: false,
            k,
            mask: self.cfg.meta.mask,
            filter: FeatureFilter::meta_default(self.mv()),
            table,
        })
    }

    fn occupancy_len(&self) -> usize {
        self.cfg.world.occupancy_len()
    }

    fn planner(&self) -> Result<Planner, HarnessError> {
        let rules = match &self.cfg.rules {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| HarnessError::io(p, e))?;
                RuleSet::parse(&text)?
            }
            None => RuleSet::default_rules(),
        };
        let mut planner = Planner::new(rules, food_kinds(self.cfg.world.n_food_kinds), self.cfg.world.geometry())?;
        planner.scores = self.table.clone();
        Ok(planner)
    }

    fn meta(&self, k: usize, hidden: &[usize]) -> Result<MetaAgent, HarnessError> {
        let m = &self.cfg.meta;
        let perception = self.meta_perception(k);
        let learner = MetaLearner::new(MetaConfig {
            input_len: perception.input_len(0),
            hidden: hidden.to_vec(),
            learning_rate: m.learning_rate,
            batch_size: m.batch_size,
            replay_capacity: m.replay,
            gamma: self.cfg.gamma,
            target_sync: m.target_sync,
            train_every: m.train_every,
            learn_start: m.learn_start,
            epsilon: LinearSchedule {
                start: 1.0,
                end: m.eps_end,
                steps: self.cfg.anneal_steps(),
            },
            seed: sub_seed(self.seed, AGENT),
            ..MetaConfig::new(0)
        })?;
        Ok(MetaAgent::new(learner, perception, self.cfg.eval_epsilon, sub_seed(self.seed, AGENT + 1)))
    }

    fn worker_config(&self) -> WorkerConfig {
        let a = &self.cfg.a3c;
        WorkerConfig {
            n_workers: a.workers,
            t_max: a.t_max,
            gamma: self.cfg.gamma,
            entropy_coeff: a.entropy_coeff,
            value_loss_coeff: a.value_loss_coeff,
            learning_rate: a.learning_rate,
            ..WorkerConfig::default()
        }
    }

    fn policy_value(&self, perception: &Perception) -> Result<PolicyValueNet, HarnessError> {
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(self.seed, AGENT + 2));
        Ok(PolicyValueNet::new(
            perception.input_len(self.occupancy_len()),
            &self.cfg.a3c.hidden,
            Action::COUNT,
            &mut rng,
        )?)
    }

    fn dqn(&self, dueling: bool) -> Result<Box<dyn Learner>, HarnessError> {
        let perception = self.rl_perception(Injection::None);
        let input = perception.input_len(self.occupancy_len());
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(self.seed, AGENT + 2));
        let m = &self.cfg.meta;
        let setup = DqnSetup {
            target: if dueling { TargetKind::Double } else { TargetKind::Max },
            learning_rate: self.cfg.dqn.learning_rate,
            replay: self.cfg.dqn.replay,
            batch_size: m.batch_size,
            gamma: self.cfg.gamma,
            train_every: m.train_every,
            learn_start: m.learn_start,
            target_sync: m.target_sync,
            epsilon: LinearSchedule {
                start: 1.0,
                end: m.eps_end,
                steps: self.cfg.anneal_steps(),
            },
            eval_epsilon: self.cfg.eval_epsilon,
        };
        let seed = sub_seed(self.seed, AGENT);
        let hidden = &self.cfg.dqn.hidden;
        Ok(if dueling {
            let net = DuelingNet::new(input, hidden, Action::COUNT, DuelingMode::Mean, &mut rng)?;
            Box::new(DqnAgent::new(net, setup, perception, seed))
        } else {
            let net = Mlp::new(&NetSpec::mlp(input, hidden, Action::COUNT, Activation::Identity), &mut rng)?;
            Box::new(DqnAgent::new(net, setup, perception, seed))
        })
    }

    fn drl_ek(&self) -> Result<DrlEkAgent, HarnessError> {
        let knowledge = self.meta(self.cfg.k, &self.cfg.meta.hidden)?;
        let perception = self.rl_perception(Injection::Area);
        let net = self.policy_value(&perception)?;
        let wc = self.worker_config();
        let rl = A3cAgent::new(SharedParams::new(net, wc.learning_rate), wc, perception, sub_seed(self.seed, AGENT + 3));
        let s = &self.cfg.selector;
        let selector = Selector::new(SelectorConfig {
            hidden: s.hidden.clone(),
            learning_rate: s.learning_rate,
            replay_capacity: s.replay,
            batch_size: s.batch_size,
            gamma: s.gamma.unwrap_or(self.cfg.gamma),
            target_sync: s.target_sync,
            tau: LinearSchedule {
                start: s.tau_start,
                end: s.tau_end,
                steps: self.cfg.anneal_steps(),
            },
            feature_len: if s.append_features { knowledge_len(self.cfg.k) } else { 0 },
            seed: sub_seed(self.seed, AGENT + 4),
        })?;
        Ok(DrlEkAgent::new(knowledge, rl, selector))
    }
}

fn knowledge_len(k: usize) -> usize {
    drlek_core::features::HISTORY_FRAMES * k * k
}

/// Plays one episode; the game must be freshly reset.
fn play_episode(
    game: &mut Game,
    agent: &mut dyn Learner,
    training: bool,
    index: usize,
    seed: u64,
    wall: bool,
) -> Result<EpisodeRecord, HarnessError> {
    let start = Instant::now();
    agent.begin_episode();
    let mut steps = 0;
    loop {
        let a = agent.propose(&game.percept(), training)?;
        let out = game.step(a);
        steps += 1;
        agent.feedback(a, out.reward, out.done, training)?;
        if out.done {
            break;
        }
    }
    Ok(EpisodeRecord {
        episode: index,
        seed,
        reward: game.world().cum_reward,
        steps,
        shares: agent.shares(),
        wall_ms: if wall { start.elapsed().as_millis() as u64 } else { 0 },
    })
}

fn play_phase(
    parts: &Parts,
    agent: &mut dyn Learner,
    training: bool,
    episodes: usize,
    log: &mut MetricsLog,
) -> Result<(), HarnessError> {
    let stream = if training { TRAIN_LAYOUTS } else { EVAL_LAYOUTS };
    let mut game = Game::new(&parts.cfg.world, parts.detector(stream), sub_seed(parts.seed, stream))?;
    for i in 0..episodes {
        if i > 0 {
            game.reset()?;
        }
        let idx = log.len();
        log.push(play_episode(&mut game, agent, training, idx, parts.seed, parts.cfg.record_wall_time)?);
    }
    Ok(())
}

/// Worker environment for the multi-worker actor-critic baselines.
struct WorkerEnv {
    game: Game,
    perception: Perception,
    state: Vec<f64>,
    episode_start: Instant,
    done_log: Rc<RefCell<Vec<(f64, usize, u64)>>>,
    wall: bool,
}

impl WorkerEnv {
    fn new(game: Game, mut perception: Perception, done_log: Rc<RefCell<Vec<(f64, usize, u64)>>>, wall: bool) -> Self {
        perception.begin_episode();
        let state = perception.encode(&game.percept()).expect("fixed feature lengths");
        Self {
            game,
            perception,
            state,
            episode_start: Instant::now(),
            done_log,
            wall,
        }
    }
}

impl EpisodicEnv for WorkerEnv {
    fn state(&self) -> &[f64] {
        &self.state
    }

    fn n_actions(&self) -> usize {
        Action::COUNT
    }

    fn step(&mut self, a: usize) -> (f64, bool) {
        let out = self.game.step(Action::from_index(a).expect("policy over six actions"));
        if out.done {
            let w = self.game.world();
            let ms = if self.wall { self.episode_start.elapsed().as_millis() as u64 } else { 0 };
            self.done_log.borrow_mut().push((w.cum_reward, w.step_count, ms));
            self.game.reset().expect("validated world config");
            self.perception.begin_episode();
            self.episode_start = Instant::now();
        }
        self.state = self.perception.encode(&self.game.percept()).expect("fixed feature lengths");
        (out.reward, out.done)
    }
}

/// Workers take turns in a fixed order until `episodes` have finished.
fn train_a3c(parts: &Parts, injection: Injection, log: &mut MetricsLog) -> Result<SharedParams, HarnessError> {
    let probe = parts.rl_perception(injection);
    let net = parts.policy_value(&probe)?;
    let wc = parts.worker_config();
    wc.validate()?;
    let shared = SharedParams::new(net.clone(), wc.learning_rate);
    let done_log = Rc::new(RefCell::new(Vec::new()));
    let mut workers = Vec::with_capacity(wc.n_workers);
    for w in 0..wc.n_workers as u64 {
        let stream = WORKERS + w;
        let game = Game::new(&parts.cfg.world, parts.detector(stream), sub_seed(parts.seed, stream))?;
        let env = WorkerEnv::new(game, parts.rl_perception(injection), done_log.clone(), parts.cfg.record_wall_time);
        workers.push(Worker::new(w as usize, env, &net, wc, sub_seed(parts.seed, AGENT + 8 + w)));
    }
    'outer: loop {
        for w in workers.iter_mut() {
            w.train_step(&shared)?;
            if done_log.borrow().len() >= parts.cfg.episodes {
                break 'outer;
            }
        }
    }
    for &(reward, steps, wall_ms) in done_log.borrow().iter().take(parts.cfg.episodes) {
        let idx = log.len();
        log.push(EpisodeRecord {
            episode: idx,
            seed: parts.seed,
            reward,
            steps,
            shares: None,
            wall_ms,
        });
    }
    Ok(shared)
}

/// Trains (when the variant learns) for `cfg.episodes`, then evaluates for
/// `cfg.eval_episodes` on a separate layout stream shared by all variants.
pub fn run_experiment(cfg: &ExperimentConfig, seed: u64) -> Result<MetricsLog, HarnessError> {
    cfg.validate()?;
    let parts = Parts::new(cfg, seed);
    let mut log = MetricsLog::default();
    let mut agent: Box<dyn Learner> = match cfg.variant {
        Variant::Random => Box::new(RandomAgent::new(sub_seed(seed, AGENT))),
        Variant::Planner => Box::new(PlannerAgent::new(parts.planner()?)),
        Variant::Meta => Box::new(parts.meta(cfg.k, &cfg.meta.hidden)?),
        Variant::Dqn => parts.dqn(false)?,
        Variant::DuelingDdqn => parts.dqn(true)?,
        Variant::DrlEk => Box::new(parts.drl_ek()?),
        Variant::A3c | Variant::A3cPresence | Variant::A3cArea => {
            let injection = match cfg.variant {
                Variant::A3c => Injection::None,
                Variant::A3cPresence => Injection::Presence,
                _ => Injection::Area,
            };
            let shared = train_a3c(&parts, injection, &mut log)?;
            let wc = parts.worker_config();
            let mut agent = A3cAgent::new(shared, wc, parts.rl_perception(injection), sub_seed(seed, AGENT + 3));
            play_phase(&parts, &mut agent, false, cfg.eval_episodes, &mut log)?;
            return Ok(log);
        }
    };
    play_phase(&parts, agent.as_mut(), true, cfg.episodes, &mut log)?;
    play_phase(&parts, agent.as_mut(), false, cfg.eval_episodes, &mut log)?;
    Ok(log)
}

/// Runs every `(config, seed)` job, spreading them over the available cores.
pub fn run_many(jobs: &[(ExperimentConfig, u64)]) -> Vec<Result<MetricsLog, HarnessError>> {
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(jobs.len().max(1));
    if threads <= 1 {
        return jobs.iter().map(|(c, s)| run_experiment(c, *s)).collect();
    }
    let next = std::sync::atomic::AtomicUsize::new(0);
    let results: Vec<std::sync::Mutex<Option<Result<MetricsLog, HarnessError>>>> =
        jobs.iter().map(|_| std::sync::Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                let Some((c, s)) = jobs.get(i) else { break };
                *results[i].lock().unwrap_or_else(|e| e.into_inner()) = Some(run_experiment(c, *s));
            });
        }
    });
    results
        .into_iter()
        .map(|m| m.into_inner().unwrap_or_else(|e| e.into_inner()).expect("every job ran"))
        .collect()
}
