//! Knowledge-based deciders.
//!
//! [`Planner`] applies hand-written rules to the current detections and keeps
//! a short plan of turns and steps toward a rewarding target. [`MetaLearner`]
//! is a dueling double DQN whose only input is the filtered feature stack.

use std::collections::VecDeque;
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::detector::Detection;
use crate::env::{Action, FoodKind, HealthClass, ObjectKind, ObstacleKind, PlaneBox, PlaneGeometry};
use crate::error::{Error, Result};
use crate::features::{ObjectScoreTable, DEFAULT_MIN_CONFIDENCE};
use crate::neural::{OptState, OptimizerKind, ADAM_LR};
use crate::rl::{
    argmax, dqn_loss_and_grad, DuelingMode, DuelingNet, ExplorationPolicy, LinearSchedule, QFunction, ReplayMemory,
    TargetKind, Transition,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RegionLabel {
    Left,
    Center,
    Right,
    /// Center band but far away.
    Other,
}

impl RegionLabel {
    pub const ALL: [RegionLabel; 4] = [RegionLabel::Left, RegionLabel::Center, RegionLabel::Right, RegionLabel::Other];

    pub fn name(self) -> &'static str {
        match self {
            RegionLabel::Left => "left",
            RegionLabel::Center => "center",
            RegionLabel::Right => "right",
            RegionLabel::Other => "other",
        }
    }
}

/// Boxes with `cy` at or below this line are near.
pub const NEAR_CY: f64 = 0.5;

pub fn region_of(b: &PlaneBox) -> RegionLabel {
    if b.cx < 1.0 / 3.0 {
        RegionLabel::Left
    } else if b.cx > 2.0 / 3.0 {
        RegionLabel::Right
    } else if b.cy >= NEAR_CY {
        RegionLabel::Center
    } else {
        RegionLabel::Other
    }
}

/// Small bit set over the six actions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub struct ActionSet(u8);

impl ActionSet {
    pub const EMPTY: ActionSet = ActionSet(0);
    pub const ALL: ActionSet = ActionSet((1 << Action::COUNT) - 1);

    pub fn of(actions: &[Action]) -> Self {
        actions.iter().fold(Self::EMPTY, |s, &a| s.with(a))
    }

    pub fn with(self, a: Action) -> Self {
        ActionSet(self.0 | 1 << a.index())
    }

    pub fn contains(self, a: Action) -> bool {
        self.0 & (1 << a.index()) != 0
    }

    pub fn union(self, other: ActionSet) -> Self {
        ActionSet(self.0 | other.0)
    }

    pub fn complement(self) -> Self {
        ActionSet(!self.0 & Self::ALL.0)
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = Action> {
        Action::ALL.into_iter().filter(move |&a| self.contains(a))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Subject {
    Kind(usize),
    Class(HealthClass),
    Obstacle(ObstacleKind),
}

impl Subject {
    pub fn matches(self, kind: ObjectKind, kinds: &[FoodKind]) -> bool {
        match (self, kind) {
            (Subject::Kind(k), ObjectKind::Food(f)) => k == f,
            (Subject::Class(c), ObjectKind::Food(f)) => kinds.get(f).is_some_and(|fk| fk.class == c),
            (Subject::Obstacle(o), ObjectKind::Obstacle(p)) => o == p,
            _ => false,
        }
    }
}

impl fmt::Display for Subject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Subject::Kind(k) => write!(f, "food{k}"),
            Subject::Class(c) => f.write_str(c.name()),
            Subject::Obstacle(o) => f.write_str(o.name()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Rule {
    pub subject: Subject,
    pub region: RegionLabel,
    pub forbidden: ActionSet,
}

impl Rule {
    pub fn fires(&self, dets: &[&Detection], kinds: &[FoodKind]) -> bool {
        dets.iter()
            .any(|d| self.subject.matches(d.kind, kinds) && region_of(&d.bbox) == self.region)
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let actions: Vec<&str> = self.forbidden.iter().map(Action::name).collect();
        write!(f, "forbid {} when {} in {}", actions.join(","), self.subject, self.region.name())
    }
}

pub const DEFAULT_RULES: &str = include_str!("../rules/default.rules");

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RuleSet {
    rules: Vec<Rule>,
}

fn parse_subject(tok: &str) -> std::result::Result<Subject, String> {
    if let Some(id) = tok.strip_prefix("food") {
        return id
            .parse::<usize>()
            .map(Subject::Kind)
            .map_err(|_| format!("bad food kind `{tok}`"));
    }
    if let Ok(c) = tok.parse::<HealthClass>() {
        return Ok(Subject::Class(c));
    }
    tok.parse::<ObstacleKind>()
        .map(Subject::Obstacle)
        .map_err(|_| format!("unknown subject `{tok}`"))
}

fn parse_rule(line: &str) -> std::result::Result<Rule, String> {
    let toks: Vec<&str> = line.split_whitespace().collect();
    match toks.as_slice() {
        ["forbid", actions, "when", subject, "in", region] => {
            let mut forbidden = ActionSet::EMPTY;
            for a in actions.split(',') {
                forbidden = forbidden.with(a.parse::<Action>()?);
            }
            if forbidden == ActionSet::ALL {
                return Err("a rule may not forbid every action".into());
            }
            let region = RegionLabel::ALL
                .into_iter()
                .find(|r| r.name() == *region)
                .ok_or_else(|| format!("unknown region `{region}`"))?;
            Ok(Rule {
                subject: parse_subject(subject)?,
                region,
                forbidden,
            })
        }
        _ => Err("expected `forbid <actions> when <subject> in <region>`".into()),
    }
}

impl RuleSet {
    pub fn new(rules: Vec<Rule>) -> Self {
        Self { rules }
    }

    /// Parses the rules text; errors carry 1-based line numbers.
    pub fn parse(text: &str) -> Result<Self> {
        let mut rules = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let rule = parse_rule(line).map_err(|msg| Error::RuleParse { line: i + 1, msg })?;
            rules.push(rule);
        }
        Ok(Self { rules })
    }

    pub fn default_rules() -> Self {
        Self::parse(DEFAULT_RULES).expect("shipped rules parse")
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    /// Rejects `foodN` subjects outside the kind table.
    pub fn check_kinds(&self, n_kinds: usize) -> Result<()> {
        for r in &self.rules {
            if let Subject::Kind(k) = r.subject {
                if k >= n_kinds {
                    return Err(Error::Config(format!("rule `{r}` names kind {k} of {n_kinds}")));
                }
            }
        }
        Ok(())
    }

    /// Union of the forbidden sets of all firing rules.
    pub fn forbidden(&self, dets: &[&Detection], kinds: &[FoodKind]) -> ActionSet {
        self.rules
            .iter()
            .filter(|r| r.fires(dets, kinds))
            .fold(ActionSet::EMPTY, |acc, r| acc.union(r.forbidden))
    }
}

/// Total order over the actions, most preferred first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PriorityList([Action; Action::COUNT]);

impl Default for PriorityList {
    fn default() -> Self {
        PriorityList([
            Action::MoveStraight,
            Action::TurnLeft,
            Action::TurnRight,
            Action::Jump,
            Action::Crouch,
            Action::MoveBack,
        ])
    }
}

impl PriorityList {
    pub fn new(order: &[Action]) -> Result<Self> {
        if order.len() != Action::COUNT || ActionSet::of(order) != ActionSet::ALL {
            return Err(Error::Config("priority list must be a permutation of the actions".into()));
        }
        let mut arr = [Action::TurnLeft; Action::COUNT];
        arr.copy_from_slice(order);
        Ok(PriorityList(arr))
    }

    pub fn head(&self) -> Action {
        self.0[0]
    }

    pub fn order(&self) -> &[Action] {
        &self.0
    }

    pub fn first_allowed(&self, forbidden: ActionSet) -> Option<Action> {
        self.0.iter().copied().find(|&a| !forbidden.contains(a))
    }
}

/// The detection that motivated a plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Justification {
    pub kind: usize,
    pub region: RegionLabel,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Plan {
    pub queue: VecDeque<Action>,
    pub justification: Option<Justification>,
}

impl Plan {
    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TurnAndSteps {
    pub turn: Action,
    pub n_turn: usize,
    pub n_steps: usize,
}

impl TurnAndSteps {
    pub fn to_actions(self) -> VecDeque<Action> {
        std::iter::repeat_n(self.turn, self.n_turn)
            .chain(std::iter::repeat_n(Action::MoveStraight, self.n_steps))
            .collect()
    }
}

/// Heading change in 45° turns, then the distance in cells. `cx = 0.5` needs no turn.
pub fn estimate_turn_and_steps(target: &PlaneBox, geometry: &PlaneGeometry) -> TurnAndSteps {
    let bearing = geometry.bearing_deg(target.cx);
    let n_turn = (bearing.abs() / 45.0).round() as usize;
    let turn = if bearing < 0.0 { Action::TurnLeft } else { Action::TurnRight };
    let n_steps = (geometry.distance_for_cy(target.cy).round() as usize).max(1);
    TurnAndSteps { turn, n_turn, n_steps }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlannerDecision {
    pub action: Action,
    pub replanned: bool,
    /// Every action was forbidden; the priority head was used anyway.
    pub fallback: bool,
}

#[derive(Debug, Clone)]
pub struct Planner {
    pub rules: RuleSet,
    pub prio: PriorityList,
    pub scores: ObjectScoreTable,
    pub kinds: Vec<FoodKind>,
    pub geometry: PlaneGeometry,
    pub min_confidence: f64,
}

impl Planner {
    pub fn new(rules: RuleSet, kinds: Vec<FoodKind>, geometry: PlaneGeometry) -> Result<Self> {
        rules.check_kinds(kinds.len())?;
        Ok(Self {
            rules,
            prio: PriorityList::default(),
            scores: ObjectScoreTable::by_health(&kinds),
            kinds,
            geometry,
            min_confidence: DEFAULT_MIN_CONFIDENCE,
        })
    }

    fn obstacle_ahead(dets: &[&Detection], o: ObstacleKind) -> bool {
        dets.iter()
            .any(|d| d.kind == ObjectKind::Obstacle(o) && region_of(&d.bbox) == RegionLabel::Center)
    }

    /// The action actually executed for a planned `a`, if any: a blocked step
    /// becomes a jump or crouch when the matching obstacle is ahead.
    fn admissible(a: Action, dets: &[&Detection], forbidden: ActionSet) -> Option<Action> {
        let needs = match a {
            Action::Jump => Some(ObstacleKind::LowBarrier),
            Action::Crouch => Some(ObstacleKind::Overhang),
            _ => None,
        };
        if needs.is_some_and(|o| !Self::obstacle_ahead(dets, o)) {
            return None;
        }
        if !forbidden.contains(a) {
            return Some(a);
        }
        if a != Action::MoveStraight {
            return None;
        }
        [(ObstacleKind::LowBarrier, Action::Jump), (ObstacleKind::Overhang, Action::Crouch)]
            .into_iter()
            .find(|&(o, alt)| Self::obstacle_ahead(dets, o) && !forbidden.contains(alt))
            .map(|(_, alt)| alt)
    }

    /// Nearest rewarding food: largest `cy`, then most central.
    fn target<'a>(&self, dets: &[&'a Detection]) -> Option<(&'a Detection, usize)> {
        let mut best: Option<(&Detection, usize)> = None;
        for d in dets {
            let ObjectKind::Food(k) = d.kind else { continue };
            if k >= self.scores.n_kinds() || !self.scores.is_tracked(k) || self.scores.score(k) <= 0.0 {
                continue;
            }
            let better = match best {
                None => true,
                Some((b, _)) => {
                    d.bbox.cy > b.bbox.cy
                        || (d.bbox.cy == b.bbox.cy && (d.bbox.cx - 0.5).abs() < (b.bbox.cx - 0.5).abs())
                }
            };
            if better {
                best = Some((d, k));
            }
        }
        best
    }

    pub fn decide(&self, detections: &[Detection], plan: &Plan) -> (PlannerDecision, Plan) {
        let dets: Vec<&Detection> = detections
            .iter()
            .filter(|d| d.confidence >= self.min_confidence)
            .collect();
        let forbidden = self.rules.forbidden(&dets, &self.kinds);

        if let Some(&head) = plan.queue.front() {
            let still_seen = plan
                .justification
                .is_none_or(|j| dets.iter().any(|d| d.kind == ObjectKind::Food(j.kind) && region_of(&d.bbox) == j.region));
            if still_seen {
                if let Some(action) = Self::admissible(head, &dets, forbidden) {
                    let mut rest = plan.clone();
                    rest.queue.pop_front();
                    let decision = PlannerDecision {
                        action,
                        replanned: false,
                        fallback: false,
                    };
                    return (decision, rest);
                }
            }
        }

        if forbidden == ActionSet::ALL {
            let decision = PlannerDecision {
                action: self.prio.head(),
                replanned: true,
                fallback: true,
            };
            return (decision, Plan::default());
        }

        if let Some((t, kind)) = self.target(&dets) {
            let mut queue = estimate_turn_and_steps(&t.bbox, &self.geometry).to_actions();
            let head = queue.pop_front().expect("at least one step");
            if let Some(action) = Self::admissible(head, &dets, forbidden) {
                let plan = Plan {
                    queue,
                    justification: Some(Justification {
                        kind,
                        region: region_of(&t.bbox),
                    }),
                };
                let decision = PlannerDecision {
                    action,
                    replanned: true,
                    fallback: false,
                };
                return (decision, plan);
            }
        }

        let action = self.prio.first_allowed(forbidden).expect("some action survives");
        let decision = PlannerDecision {
            action,
            replanned: true,
            fallback: false,
        };
        (decision, Plan::default())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetaConfig {
    pub input_len: usize,
    pub n_actions: usize,
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub replay_capacity: usize,
    pub gamma: f64,
    /// Online → target copy period, in updates.
    pub target_sync: u64,
    /// One update per this many stored transitions.
    pub train_every: u64,
    /// Transitions stored before the first update.
    pub learn_start: usize,
    pub epsilon: LinearSchedule,
    pub seed: u64,
}

impl MetaConfig {
    pub fn new(input_len: usize) -> Self {
        Self {
            input_len,
            n_actions: Action::COUNT,
            hidden: vec![100; 3],
            learning_rate: ADAM_LR,
            batch_size: 32,
            replay_capacity: 100_000,
            gamma: 1.0,
            target_sync: 500,
            train_every: 4,
            learn_start: 500,
            epsilon: LinearSchedule {
                start: 1.0,
                end: 0.05,
                steps: 50_000,
            },
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.replay_capacity < self.batch_size {
            return Err(Error::Config("replay capacity must hold a batch".into()));
        }
        if self.train_every == 0 || self.target_sync == 0 {
            return Err(Error::Config("train_every and target_sync must be positive".into()));
        }
        ExplorationPolicy::EpsilonGreedy(self.epsilon).validate()
    }
}

/// Dueling double DQN over meta features.
#[derive(Debug, Clone)]
pub struct MetaLearner {
    online: DuelingNet,
    target: DuelingNet,
    opt: OptState,
    memory: ReplayMemory<Transition>,
    cfg: MetaConfig,
    rng: ChaCha8Rng,
    steps: u64,
    updates: u64,
}

impl MetaLearner {
    pub fn new(cfg: MetaConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let online = DuelingNet::new(cfg.input_len, &cfg.hidden, cfg.n_actions, DuelingMode::Mean, &mut rng)?;
        Ok(Self {
            target: online.clone(),
            online,
            opt: OptState::new(OptimizerKind::adam(cfg.learning_rate)),
            memory: ReplayMemory::new(cfg.replay_capacity),
            cfg,
            rng,
            steps: 0,
            updates: 0,
        })
    }

    pub fn config(&self) -> &MetaConfig {
        &self.cfg
    }

    pub fn online(&self) -> &DuelingNet {
        &self.online
    }

    pub fn online_mut(&mut self) -> &mut DuelingNet {
        &mut self.online
    }

    pub fn target(&self) -> &DuelingNet {
        &self.target
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn memory_len(&self) -> usize {
        self.memory.len()
    }

    pub fn epsilon(&self) -> f64 {
        self.cfg.epsilon.value(self.steps)
    }

    pub fn q_values(&self, features: &[f64]) -> Result<Vec<f64>> {
        self.online.q_values(features)
    }

    /// ε-greedy over the dueling Q-values, greedy when `explore` is false.
    pub fn decide(&mut self, features: &[f64], explore: bool) -> Result<Action> {
        let q = self.q_values(features)?;
        let idx = if explore {
            ExplorationPolicy::EpsilonGreedy(self.cfg.epsilon).select(&q, self.steps, &mut self.rng)
        } else {
            argmax(&q)
        };
        Ok(Action::from_index(idx).expect("n_actions matches the action set"))
    }

    /// Stores a transition and trains on schedule; returns the loss when an update ran.
    pub fn remember(&mut self, t: Transition) -> Result<Option<f64>> {
        if t.s.len() != self.cfg.input_len || t.s_next.len() != self.cfg.input_len {
            return Err(Error::shape("meta transition", self.cfg.input_len, t.s.len()));
        }
        self.memory.push(t);
        self.steps += 1;
        if self.steps % self.cfg.train_every == 0 && self.memory.len() >= self.cfg.learn_start.max(self.cfg.batch_size)
        {
            return self.update().map(Some);
        }
        Ok(None)
    }

    /// One update on a uniformly sampled batch.
    pub fn update(&mut self) -> Result<f64> {
        if self.memory.len() < self.cfg.batch_size {
            return Err(Error::Config("replay holds fewer transitions than a batch".into()));
        }
        let idx = self.memory.sample_indices(self.cfg.batch_size, &mut self.rng);
        let batch: Vec<Transition> = idx
            .into_iter()
            .map(|i| self.memory.get(i).expect("sampled slot").clone())
            .collect();
        let refs: Vec<&Transition> = batch.iter().collect();
        self.update_on(&refs)
    }

    /// Double-Q targets through the dueling head, an Adam step, periodic target sync.
    pub fn update_on(&mut self, batch: &[&Transition]) -> Result<f64> {
        let (loss, grads) = dqn_loss_and_grad(&self.online, &self.target, batch, self.cfg.gamma, TargetKind::Double)?;
        self.opt.step(&mut self.online, &grads)?;
        self.updates += 1;
        if self.updates % self.cfg.target_sync == 0 {
            self.target = self.online.clone();
        }
        Ok(loss)
    }
}
