//! Flat `key=value` experiment configuration.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use drlek_core::detector::DetectorConfig;
use drlek_core::env::{food_kinds, WorldConfig};
use drlek_core::features::{ObjectScoreTable, RegionMask};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}:{line}: {msg}")]
    Line { path: String, line: usize, msg: String },
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    Random,
    Planner,
    Meta,
    Dqn,
    DuelingDdqn,
    A3c,
    A3cPresence,
    A3cArea,
    DrlEk,
}

impl Variant {
    pub const ALL: [Variant; 9] = [
        Variant::Random,
        Variant::Planner,
        Variant::Meta,
        Variant::Dqn,
        Variant::DuelingDdqn,
        Variant::A3c,
        Variant::A3cPresence,
        Variant::A3cArea,
        Variant::DrlEk,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Random => "random",
            Variant::Planner => "planner",
            Variant::Meta => "meta",
            Variant::Dqn => "dqn",
            Variant::DuelingDdqn => "dueling_ddqn",
            Variant::A3c => "a3c",
            Variant::A3cPresence => "a3c_presence",
            Variant::A3cArea => "a3c_area",
            Variant::DrlEk => "drl_ek",
        }
    }

    /// Variants without parameters skip the training phase.
    pub fn learns(self) -> bool {
        !matches!(self, Variant::Random | Variant::Planner)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| format!("unknown variant `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct A3cSettings {
    pub workers: usize,
    pub t_max: usize,
    pub entropy_coeff: f64,
    pub value_loss_coeff: f64,
    pub learning_rate: f64,
    pub hidden: Vec<usize>,
    /// Plane band scored for injected area features.
    pub mask: RegionMask,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetaSettings {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub target_sync: u64,
    pub train_every: u64,
    pub learn_start: usize,
    pub replay: usize,
    pub eps_end: f64,
    /// Plane band scored for the meta features.
    pub mask: RegionMask,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectorSettings {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub target_sync: u64,
    pub replay: usize,
    pub tau_start: f64,
    pub tau_end: f64,
    /// Discount for the arbitration DQN; `None` uses the run's `gamma`.
    pub gamma: Option<f64>,
    pub append_features: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DqnSettings {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub replay: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub k: Vec<usize>,
    pub layers: Vec<usize>,
    pub sizes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub variant: Variant,
    pub episodes: usize,
    pub eval_episodes: usize,
    pub seeds: Vec<u64>,
    pub k: usize,
    pub out_dir: PathBuf,
    pub window: usize,
    pub gamma: f64,
    /// Share of the training steps over which ε and τ are annealed.
    pub explore_fraction: f64,
    /// ε used by value-based learners during evaluation.
    pub eval_epsilon: f64,
    pub record_wall_time: bool,
    pub rules: Option<PathBuf>,
    pub world: WorldConfig,
    pub fp_rate: f64,
    pub p_miss: f64,
    /// `score.<kind>` overrides; `None` untracks the kind.
    pub scores: Vec<(usize, Option<f64>)>,
    pub a3c: A3cSettings,
    pub meta: MetaSettings,
    pub selector: SelectorSettings,
    pub dqn: DqnSettings,
    pub sweep: SweepGrid,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            variant: Variant::DrlEk,
            episodes: 5000,
            eval_episodes: 200,
            seeds: vec![0],
            k: 3,
            out_dir: PathBuf::from("runs"),
            window: 50,
            gamma: 1.0,
            explore_fraction: 0.5,
            eval_epsilon: 0.05,
            record_wall_time: false,
            rules: None,
            world: WorldConfig::default(),
            fp_rate: drlek_core::detector::DEFAULT_FP_RATE,
            p_miss: drlek_core::detector::DEFAULT_P_MISS,
            scores: Vec::new(),
            a3c: A3cSettings {
                workers: 3,
                t_max: 5,
                entropy_coeff: 0.01,
                value_loss_coeff: 0.5,
                learning_rate: 5e-4,
                hidden: vec![128, 64],
                mask: RegionMask::Full,
            },
            meta: MetaSettings {
                hidden: vec![100; 3],
                learning_rate: 1e-3,
                batch_size: 32,
                target_sync: 500,
                train_every: 4,
                learn_start: 500,
                replay: 100_000,
                eps_end: 0.05,
                mask: RegionMask::Full,
            },
            selector: SelectorSettings {
                hidden: vec![50, 50],
                learning_rate: 1e-3,
                batch_size: 32,
                target_sync: 500,
                replay: 1_000_000,
                tau_start: 0.05,
                tau_end: 0.005,
                gamma: Some(0.9),
                append_features: true,
            },
            dqn: DqnSettings {
                hidden: vec![128, 64],
                learning_rate: 2.5e-4,
                replay: 50_000,
            },
            sweep: SweepGrid {
                k: vec![2, 3, 4],
                layers: vec![1, 2, 3],
                sizes: vec![50, 100, 200],
            },
        }
    }
}

fn parse<T: FromStr>(v: &str) -> Result<T, String> {
    v.parse::<T>().map_err(|_| format!("bad value `{v}`"))
}

fn parse_list<T: FromStr>(v: &str) -> Result<Vec<T>, String> {
    v.split(',').map(|s| parse(s.trim())).collect()
}

fn parse_mask(v: &str) -> Result<RegionMask, String> {
    match v {
        "full" => Ok(RegionMask::Full),
        "bottom_half" => Ok(RegionMask::BottomHalf),
        _ => Err(format!("bad mask `{v}` (full or bottom_half)")),
    }
}

fn parse_bool(v: &str) -> Result<bool, String> {
    match v {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(format!("bad boolean `{v}`")),
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse_str(&text, &path.display().to_string())
    }

    /// Parses config text on top of the defaults; `origin` labels errors.
    pub fn parse_str(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| ConfigError::Line {
                path: origin.to_string(),
                line: i + 1,
                msg,
            };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err("expected key=value".into()))?;
            cfg.set(k.trim(), v.trim()).map_err(err)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<(), String> {
        if let Some(kind) = key.strip_prefix("score.") {
            let kind: usize = parse(kind)?;
            let score = if v == "off" { None } else { Some(parse(v)?) };
            self.scores.push((kind, score));
            return Ok(());
        }
        match key {
            "variant" => self.variant = v.parse()?,
            "episodes" => self.episodes = parse(v)?,
            "eval_episodes" => self.eval_episodes = parse(v)?,
            "seeds" => self.seeds = parse_list(v)?,
            "k" => self.k = parse(v)?,
            "out_dir" => self.out_dir = PathBuf::from(v),
            "window" => self.window = parse(v)?,
            "gamma" => self.gamma = parse(v)?,
            "explore_fraction" => self.explore_fraction = parse(v)?,
            "eval_epsilon" => self.eval_epsilon = parse(v)?,
            "record_wall_time" => self.record_wall_time = parse_bool(v)?,
            "rules" => self.rules = Some(PathBuf::from(v)),
            "world.grid_w" => self.world.grid_w = parse(v)?,
            "world.grid_h" => self.world.grid_h = parse(v)?,
            "world.n_food_items" => self.world.n_food_items = parse(v)?,
            "world.n_food_kinds" => self.world.n_food_kinds = parse(v)?,
            "world.n_obstacles" => self.world.n_obstacles = parse(v)?,
            "world.obstacle_len" => self.world.obstacle_len = parse(v)?,
            "world.episode_len" => self.world.episode_len = parse(v)?,
            "world.fov_depth" => self.world.fov_depth = parse(v)?,
            "world.fov_halfwidth" => self.world.fov_halfwidth = parse(v)?,
            "detector.fp_rate" => self.fp_rate = parse(v)?,
            "detector.p_miss" => self.p_miss = parse(v)?,
            "a3c.workers" => self.a3c.workers = parse(v)?,
            "a3c.t_max" => self.a3c.t_max = parse(v)?,
            "a3c.entropy_coeff" => self.a3c.entropy_coeff = parse(v)?,
            "a3c.value_loss_coeff" => self.a3c.value_loss_coeff = parse(v)?,
            "a3c.lr" => self.a3c.learning_rate = parse(v)?,
            "a3c.hidden" => self.a3c.hidden = parse_list(v)?,
            "meta.hidden" => self.meta.hidden = parse_list(v)?,
            "meta.lr" => self.meta.learning_rate = parse(v)?,
            "meta.batch" => self.meta.batch_size = parse(v)?,
            "meta.target_sync" => self.meta.target_sync = parse(v)?,
            "meta.train_every" => self.meta.train_every = parse(v)?,
            "meta.learn_start" => self.meta.learn_start = parse(v)?,
            "meta.replay" => self.meta.replay = parse(v)?,
            "meta.eps_end" => self.meta.eps_end = parse(v)?,
            "meta.mask" => self.meta.mask = parse_mask(v)?,
            "a3c.mask" => self.a3c.mask = parse_mask(v)?,
            "selector.hidden" => self.selector.hidden = parse_list(v)?,
            "selector.lr" => self.selector.learning_rate = parse(v)?,
            "selector.batch" => self.selector.batch_size = parse(v)?,
            "selector.target_sync" => self.selector.target_sync = parse(v)?,
            "selector.replay" => self.selector.replay = parse(v)?,
            "selector.tau_start" => self.selector.tau_start = parse(v)?,
            "selector.tau_end" => self.selector.tau_end = parse(v)?,
            "selector.gamma" => self.selector.gamma = Some(parse(v)?),
            "selector.append_features" => self.selector.append_features = parse_bool(v)?,
            "dqn.hidden" => self.dqn.hidden = parse_list(v)?,
            "dqn.lr" => self.dqn.learning_rate = parse(v)?,
            "dqn.replay" => self.dqn.replay = parse(v)?,
            "sweep.k" => self.sweep.k = parse_list(v)?,
            "sweep.layers" => self.sweep.layers = parse_list(v)?,
            "sweep.sizes" => self.sweep.sizes = parse_list(v)?,
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.seeds.is_empty() {
            return bad("at least one seed is required");
        }
        if self.episodes == 0 {
            return bad("episodes must be at least 1");
        }
        if self.k == 0 || self.window == 0 {
            return bad("k and window must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.eval_epsilon) {
            return bad("gamma and eval_epsilon must lie in [0,1]");
        }
        if !(0.0..=1.0).contains(&self.explore_fraction) {
            return bad("explore_fraction must lie in [0,1]");
        }
        self.world.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.detector(0)
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if let Some(&(k, _)) = self.scores.iter().find(|(k, _)| *k >= self.world.n_food_kinds) {
            return Err(ConfigError::Invalid(format!("score.{k} names an unknown kind")));
        }
        Ok(())
    }

    pub fn detector(&self, seed: u64) -> DetectorConfig {
        let mut d = DetectorConfig::calibrated(self.world.n_food_kinds, seed);
        d.fp_rate = self.fp_rate;
        d.p_miss = vec![self.p_miss; self.world.n_food_kinds];
        d
    }

    /// Health-based scores with the `score.*` overrides applied.
    pub fn score_table(&self) -> ObjectScoreTable {
        let mut t = ObjectScoreTable::by_health(&food_kinds(self.world.n_food_kinds));
        for &(k, s) in &self.scores {
            match s {
                Some(s) => t.set_score(k, s),
                None => t.untrack(k),
            }
        }
        t
    }

    /// Environment steps in the training phase.
    pub fn training_steps(&self) -> u64 {
        (self.episodes * self.world.episode_len) as u64
    }

    pub fn anneal_steps(&self) -> u64 {
        ((self.training_steps() as f64) * self.explore_fraction).round() as u64
    }
}
