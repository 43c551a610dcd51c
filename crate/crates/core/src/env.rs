//! Partially observable food-gathering gridworld.
//!
//! The agent walks an arena scattered with food items of several kinds and a
//! handful of obstacle segments. It sees only a forward wedge of cells, and
//! every visible object is additionally projected onto a synthetic `[0,1]²`
//! image plane so that downstream perception can work with boxes instead of
//! pixels.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// The six agent actions with a stable `0..6` encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    TurnLeft = 0,
    TurnRight = 1,
    Crouch = 2,
    Jump = 3,
    MoveStraight = 4,
    MoveBack = 5,
}

impl Action {
    pub const COUNT: usize = 6;
    pub const ALL: [Action; 6] = [
        Action::TurnLeft,
        Action::TurnRight,
        Action::Crouch,
        Action::Jump,
        Action::MoveStraight,
        Action::MoveBack,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::TurnLeft => "turn_left",
            Action::TurnRight => "turn_right",
            Action::Crouch => "crouch",
            Action::Jump => "jump",
            Action::MoveStraight => "move_straight",
            Action::MoveBack => "move_back",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Action {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Action::ALL
            .iter()
            .copied()
            .find(|a| a.name() == s)
            .ok_or_else(|| format!("unknown action `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ObstacleKind {
    /// Blocks every movement and line of sight.
    Wall,
    /// Can only be jumped over.
    LowBarrier,
    /// Can only be passed while crouching.
    Overhang,
}

impl ObstacleKind {
    pub const ALL: [ObstacleKind; 3] = [
        ObstacleKind::Wall,
        ObstacleKind::LowBarrier,
        ObstacleKind::Overhang,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ObstacleKind::Wall => "wall",
            ObstacleKind::LowBarrier => "low_barrier",
            ObstacleKind::Overhang => "overhang",
        }
    }

    pub fn index(self) -> usize {
        match self {
            ObstacleKind::Wall => 0,
            ObstacleKind::LowBarrier => 1,
            ObstacleKind::Overhang => 2,
        }
    }
}

impl FromStr for ObstacleKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        ObstacleKind::ALL
            .iter()
            .copied()
            .find(|o| o.name() == s)
            .ok_or_else(|| format!("unknown obstacle type `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HealthClass {
    Healthy,
    Unhealthy,
    Neutral,
}

impl HealthClass {
    pub fn name(self) -> &'static str {
        match self {
            HealthClass::Healthy => "healthy",
            HealthClass::Unhealthy => "unhealthy",
            HealthClass::Neutral => "neutral",
        }
    }
}

impl FromStr for HealthClass {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "healthy" => Ok(HealthClass::Healthy),
            "unhealthy" => Ok(HealthClass::Unhealthy),
            "neutral" => Ok(HealthClass::Neutral),
            _ => Err(format!("unknown health class `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FoodKind {
    pub id: usize,
    pub reward: f64,
    pub class: HealthClass,
}

/// Builds the reward table for `n` kinds.
///
/// Rewards are an evenly spaced lattice over `[-2, 2]` without zero (zero is
/// included only when `n` is odd), sorted ascending, so they sum to zero. The
/// top quarter of kinds is healthy, the bottom quarter unhealthy.
pub fn food_kinds(n: usize) -> Vec<FoodKind> {
    let half = n / 2;
    let mut rewards = Vec::with_capacity(n);
    if half > 0 {
        let step = 2.0 / half as f64;
        for j in (1..=half).rev() {
            rewards.push(-step * j as f64);
        }
        if n % 2 == 1 {
            rewards.push(0.0);
        }
        for j in 1..=half {
            rewards.push(step * j as f64);
        }
    } else if n == 1 {
        rewards.push(0.0);
    }
    let quarter = n / 4;
    rewards
        .into_iter()
        .enumerate()
        .map(|(id, reward)| {
            let class = if id < quarter {
                HealthClass::Unhealthy
            } else if id >= n - quarter {
                HealthClass::Healthy
            } else {
                HealthClass::Neutral
            };
            FoodKind { id, reward, class }
        })
        .collect()
}

/// Anything that can show up in a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ObjectKind {
    Food(usize),
    Obstacle(ObstacleKind),
}

/// Mapping between distances in cells and boxes on the synthetic image plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneGeometry {
    pub max_visible_distance: f64,
    /// Box side length at distance 1; sides scale as `box_scale / distance`.
    pub box_scale: f64,
    /// Half of the horizontal field of view, in degrees.
    pub half_fov_deg: f64,
}

impl PlaneGeometry {
    /// `cy = 1 - distance / max_visible_distance`.
    pub fn cy_for_distance(&self, distance: f64) -> f64 {
        1.0 - distance / self.max_visible_distance
    }

    /// Inverse of [`cy_for_distance`](Self::cy_for_distance).
    pub fn distance_for_cy(&self, cy: f64) -> f64 {
        (1.0 - cy) * self.max_visible_distance
    }

    /// Bearing in degrees (negative = left) of a plane x coordinate.
    pub fn bearing_deg(&self, cx: f64) -> f64 {
        (cx - 0.5) * 2.0 * self.half_fov_deg
    }
}

/// Axis-aligned box on the image plane, given by center and size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl PlaneBox {
    pub fn is_inside_unit(&self) -> bool {
        const EPS: f64 = 1e-12;
        self.w > 0.0
            && self.h > 0.0
            && self.cx - self.w / 2.0 >= -EPS
            && self.cx + self.w / 2.0 <= 1.0 + EPS
            && self.cy - self.h / 2.0 >= -EPS
            && self.cy + self.h / 2.0 <= 1.0 + EPS
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn iou(&self, other: &PlaneBox) -> f64 {
        let ix = ((self.cx + self.w / 2.0).min(other.cx + other.w / 2.0)
            - (self.cx - self.w / 2.0).max(other.cx - other.w / 2.0))
        .max(0.0);
        let iy = ((self.cy + self.h / 2.0).min(other.cy + other.h / 2.0)
            - (self.cy - self.h / 2.0).max(other.cy - other.h / 2.0))
        .max(0.0);
        let inter = ix * iy;
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }

    /// Moves the center so the box lies inside the unit square.
    pub fn clamped(mut self) -> PlaneBox {
        self.w = self.w.min(1.0);
        self.h = self.h.min(1.0);
        self.cx = self.cx.clamp(self.w / 2.0, 1.0 - self.w / 2.0);
        self.cy = self.cy.clamp(self.h / 2.0, 1.0 - self.h / 2.0);
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldConfig {
    pub grid_w: usize,
    pub grid_h: usize,
    pub n_food_items: usize,
    pub n_food_kinds: usize,
    pub n_obstacles: usize,
    /// Cells per obstacle segment.
    pub obstacle_len: usize,
    pub episode_len: usize,
    pub fov_depth: usize,
    pub fov_halfwidth: usize,
    pub max_visible_distance: f64,
    pub box_scale: f64,
    pub rng_seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            grid_w: 40,
            grid_h: 40,
            n_food_items: 200,
            n_food_kinds: 20,
            n_obstacles: 4,
            obstacle_len: 4,
            episode_len: 70,
            fov_depth: 5,
            fov_halfwidth: 3,
            max_visible_distance: 6.0,
            box_scale: 0.2,
            rng_seed: 0,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.grid_w == 0 || self.grid_h == 0 {
            return bad("grid dimensions must be positive");
        }
        if self.n_food_items > 0 && self.n_food_kinds == 0 {
            return bad("food items require at least one food kind");
        }
        if self.n_food_kinds > 256 {
            return bad("at most 256 food kinds are supported");
        }
        if self.n_food_kinds > 0 && self.n_food_items % self.n_food_kinds != 0 {
            return bad("n_food_items must be divisible by n_food_kinds");
        }
        if self.episode_len == 0 {
            return bad("episode_len must be positive");
        }
        if self.fov_depth == 0 {
            return bad("fov_depth must be at least 1");
        }
        if self.n_obstacles > 0 && self.obstacle_len == 0 {
            return bad("obstacle_len must be at least 1");
        }
        if !(self.max_visible_distance > 0.0) || !(self.box_scale > 0.0) {
            return bad("max_visible_distance and box_scale must be positive");
        }
        let needed = self.n_food_items + self.n_obstacles * self.obstacle_len + 1;
        let cells = self.grid_w * self.grid_h;
        if needed > cells {
            return Err(Error::Placement {
                what: "world contents",
                free: cells,
                needed,
            });
        }
        Ok(())
    }

    pub fn geometry(&self) -> PlaneGeometry {
        PlaneGeometry {
            max_visible_distance: self.max_visible_distance,
            box_scale: self.box_scale,
            half_fov_deg: 45.0,
        }
    }

    pub fn fov_width(&self) -> usize {
        2 * self.fov_halfwidth + 1
    }

    /// One-hot channels: empty, wall, low barrier, overhang, then one per food kind.
    pub fn channels(&self) -> usize {
        4 + self.n_food_kinds
    }

    pub fn occupancy_len(&self) -> usize {
        self.fov_depth * self.fov_width() * self.channels()
    }
}

/// Eight compass headings, 45° apart, clockwise from north (y grows southward).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Heading(u8);

impl Heading {
    const DIRS: [(i32, i32); 8] = [
        (0, -1),
        (1, -1),
        (1, 0),
        (1, 1),
        (0, 1),
        (-1, 1),
        (-1, 0),
        (-1, -1),
    ];

    pub fn new(i: u8) -> Heading {
        Heading(i % 8)
    }

    pub fn index(self) -> u8 {
        self.0
    }

    pub fn forward(self) -> (i32, i32) {
        Self::DIRS[self.0 as usize]
    }

    /// Unit step to the agent's right.
    pub fn right(self) -> (i32, i32) {
        Self::DIRS[((self.0 + 2) % 8) as usize]
    }

    pub fn turned_left(self) -> Heading {
        Heading((self.0 + 7) % 8)
    }

    pub fn turned_right(self) -> Heading {
        Heading((self.0 + 1) % 8)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Obstacle {
    pub kind: ObstacleKind,
    pub cells: Vec<(i32, i32)>,
}

/// Object visible in the current frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedObject {
    pub kind: ObjectKind,
    pub bbox: PlaneBox,
    pub distance: f64,
    /// World cell the object occupies (possibly outside the arena for border walls).
    pub cell: (i32, i32),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub depth: usize,
    pub width: usize,
    pub channels: usize,
    /// Row-major `depth × width × channels` one-hot tensor.
    pub occupancy: Vec<f64>,
    pub visible_objects: Vec<ProjectedObject>,
}

impl Observation {
    pub fn cell(&self, d: usize, col: usize) -> &[f64] {
        let start = (d * self.width + col) * self.channels;
        &self.occupancy[start..start + self.channels]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub done: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Cell {
    Free,
    Food(u8),
    Obstacle(ObstacleKind),
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    config: WorldConfig,
    kinds: Vec<FoodKind>,
    cells: Vec<Cell>,
    obstacles: Vec<Obstacle>,
    pub agent_pos: (i32, i32),
    pub heading: Heading,
    pub step_count: usize,
    pub cum_reward: f64,
}

impl WorldState {
    /// Builds a fresh episode from `config`, seeded by `config.rng_seed`.
    pub fn reset(config: &WorldConfig) -> Result<WorldState> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
        let (w, h) = (config.grid_w as i32, config.grid_h as i32);
        let mut cells = vec![Cell::Free; config.grid_w * config.grid_h];
        let idx = |x: i32, y: i32| (y * w + x) as usize;

        let mut obstacles = Vec::with_capacity(config.n_obstacles);
        for _ in 0..config.n_obstacles {
            let kind = ObstacleKind::ALL[rng.random_range(0..3)];
            let len = config.obstacle_len as i32;
            let mut placed = None;
            for _ in 0..1000 {
                let horizontal = rng.random_bool(0.5);
                let (span_w, span_h) = if horizontal { (len, 1) } else { (1, len) };
                if span_w > w || span_h > h {
                    break;
                }
                let x0 = rng.random_range(0..=w - span_w);
                let y0 = rng.random_range(0..=h - span_h);
                let seg: Vec<(i32, i32)> = (0..len)
                    .map(|i| if horizontal { (x0 + i, y0) } else { (x0, y0 + i) })
                    .collect();
                if seg.iter().all(|&(x, y)| cells[idx(x, y)] == Cell::Free) {
                    placed = Some(seg);
                    break;
                }
            }
            let seg = placed.ok_or(Error::Placement {
                what: "obstacle",
                free: cells.iter().filter(|c| **c == Cell::Free).count(),
                needed: config.obstacle_len,
            })?;
            for &(x, y) in &seg {
                cells[idx(x, y)] = Cell::Obstacle(kind);
            }
            obstacles.push(Obstacle { kind, cells: seg });
        }

        let mut free: Vec<usize> = (0..cells.len())
            .filter(|&i| cells[i] == Cell::Free)
            .collect();
        if free.len() < config.n_food_items + 1 {
            return Err(Error::Placement {
                what: "food and agent",
                free: free.len(),
                needed: config.n_food_items + 1,
            });
        }
        free.shuffle(&mut rng);
        let per_kind = if config.n_food_kinds == 0 {
            0
        } else {
            config.n_food_items / config.n_food_kinds
        };
        for (n, &cell) in free.iter().take(config.n_food_items).enumerate() {
            cells[cell] = Cell::Food((n / per_kind) as u8);
        }
        let agent_cell = free[config.n_food_items];
        let agent_pos = ((agent_cell % config.grid_w) as i32, (agent_cell / config.grid_w) as i32);
        let heading = Heading::new(rng.random_range(0..8));

        Ok(WorldState {
            config: config.clone(),
            kinds: food_kinds(config.n_food_kinds),
            cells,
            obstacles,
            agent_pos,
            heading,
            step_count: 0,
            cum_reward: 0.0,
        })
    }

    pub fn config(&self) -> &WorldConfig {
        &self.config
    }

    pub fn kinds(&self) -> &[FoodKind] {
        &self.kinds
    }

    pub fn obstacles(&self) -> &[Obstacle] {
        &self.obstacles
    }

    pub fn is_done(&self) -> bool {
        self.step_count >= self.config.episode_len
    }

    fn in_bounds(&self, (x, y): (i32, i32)) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.config.grid_w && (y as usize) < self.config.grid_h
    }

    fn cell(&self, p: (i32, i32)) -> Cell {
        if self.in_bounds(p) {
            self.cells[p.1 as usize * self.config.grid_w + p.0 as usize]
        } else {
            Cell::Obstacle(ObstacleKind::Wall)
        }
    }

    /// Food kind at `p`, if any.
    pub fn food_at(&self, p: (i32, i32)) -> Option<usize> {
        match self.cell(p) {
            Cell::Food(k) => Some(k as usize),
            _ => None,
        }
    }

    /// Obstacle at `p`; cells outside the arena count as walls.
    pub fn obstacle_at(&self, p: (i32, i32)) -> Option<ObstacleKind> {
        match self.cell(p) {
            Cell::Obstacle(o) => Some(o),
            _ => None,
        }
    }

    /// All remaining food as `(cell, kind)` pairs.
    pub fn food_cells(&self) -> Vec<((i32, i32), usize)> {
        let w = self.config.grid_w;
        self.cells
            .iter()
            .enumerate()
            .filter_map(|(i, c)| match c {
                Cell::Food(k) => Some((((i % w) as i32, (i / w) as i32), *k as usize)),
                _ => None,
            })
            .collect()
    }

    /// Test hook: overwrite one arena cell.
    pub fn set_cell(&mut self, p: (i32, i32), content: Option<ObjectKind>) {
        assert!(self.in_bounds(p), "cell {p:?} outside the arena");
        let i = p.1 as usize * self.config.grid_w + p.0 as usize;
        self.cells[i] = match content {
            None => Cell::Free,
            Some(ObjectKind::Food(k)) => Cell::Food(k as u8),
            Some(ObjectKind::Obstacle(o)) => Cell::Obstacle(o),
        };
    }

    /// Test hook: clear every food item and obstacle.
    pub fn clear(&mut self) {
        self.cells.iter_mut().for_each(|c| *c = Cell::Free);
        self.obstacles.clear();
    }

    fn walkable(&self, p: (i32, i32)) -> bool {
        matches!(self.cell(p), Cell::Free | Cell::Food(_))
    }

    fn offset(p: (i32, i32), d: (i32, i32), n: i32) -> (i32, i32) {
        (p.0 + d.0 * n, p.1 + d.1 * n)
    }

    /// Advances the world one step. Blocked moves are no-ops with reward 0;
    /// stepping a finished episode does nothing.
    pub fn step(&mut self, action: Action) -> StepOutcome {
        if self.is_done() {
            return StepOutcome {
                reward: 0.0,
                done: true,
            };
        }
        let f = self.heading.forward();
        let target = match action {
            Action::TurnLeft => {
                self.heading = self.heading.turned_left();
                None
            }
            Action::TurnRight => {
                self.heading = self.heading.turned_right();
                None
            }
            Action::MoveStraight => {
                let t = Self::offset(self.agent_pos, f, 1);
                self.walkable(t).then_some(t)
            }
            Action::MoveBack => {
                let t = Self::offset(self.agent_pos, f, -1);
                self.walkable(t).then_some(t)
            }
            Action::Crouch => {
                let t = Self::offset(self.agent_pos, f, 1);
                let ok = self.walkable(t)
                    || self.cell(t) == Cell::Obstacle(ObstacleKind::Overhang);
                ok.then_some(t)
            }
            Action::Jump => {
                let mid = Self::offset(self.agent_pos, f, 1);
                let land = Self::offset(self.agent_pos, f, 2);
                let over = self.walkable(mid)
                    || self.cell(mid) == Cell::Obstacle(ObstacleKind::LowBarrier);
                (over && self.walkable(land)).then_some(land)
            }
        };

        let mut reward = 0.0;
        if let Some(t) = target {
            self.agent_pos = t;
            let i = t.1 as usize * self.config.grid_w + t.0 as usize;
            if let Cell::Food(k) = self.cells[i] {
                reward = self.kinds[k as usize].reward;
                self.cells[i] = Cell::Free;
            }
        }
        self.step_count += 1;
        self.cum_reward += reward;
        StepOutcome {
            reward,
            done: self.is_done(),
        }
    }

    fn ego_to_world(&self, d: i32, l: i32) -> (i32, i32) {
        let f = self.heading.forward();
        let r = self.heading.right();
        (
            self.agent_pos.0 + d * f.0 + l * r.0,
            self.agent_pos.1 + d * f.1 + l * r.1,
        )
    }

    /// True when no wall lies strictly between the agent and the egocentric
    /// cell `(d, l)` (depth ahead, lateral offset to the right).
    pub fn line_of_sight_clear(&self, d: i32, l: i32) -> bool {
        let n = 4 * d.abs().max(l.abs()).max(1);
        for i in 1..n {
            let t = i as f64 / n as f64;
            let rd = (d as f64 * t).round() as i32;
            let rl = (l as f64 * t).round() as i32;
            if (rd, rl) == (0, 0) || (rd, rl) == (d, l) {
                continue;
            }
            if self.cell(self.ego_to_world(rd, rl)) == Cell::Obstacle(ObstacleKind::Wall) {
                return false;
            }
        }
        true
    }

    /// Egocentric view: the forward wedge `1 ≤ d ≤ fov_depth`,
    /// `|l| ≤ min(d, fov_halfwidth)`, with walls occluding what lies behind.
    pub fn observe(&self) -> Observation {
        let cfg = &self.config;
        let (depth, width, channels) = (cfg.fov_depth, cfg.fov_width(), cfg.channels());
        let hw = cfg.fov_halfwidth as i32;
        let geom = cfg.geometry();
        let mut occupancy = vec![0.0; depth * width * channels];
        let mut visible_objects = Vec::new();

        for d in 1..=depth as i32 {
            for l in -hw..=hw {
                if l.abs() > d || !self.line_of_sight_clear(d, l) {
                    continue;
                }
                let world = self.ego_to_world(d, l);
                let cell = self.cell(world);
                let ch = match cell {
                    Cell::Free => 0,
                    Cell::Obstacle(o) => 1 + o.index(),
                    Cell::Food(k) => 4 + k as usize,
                };
                let col = (l + hw) as usize;
                occupancy[((d as usize - 1) * width + col) * channels + ch] = 1.0;

                let kind = match cell {
                    Cell::Free => continue,
                    Cell::Food(k) => ObjectKind::Food(k as usize),
                    Cell::Obstacle(o) => ObjectKind::Obstacle(o),
                };
                let distance = ((d * d + l * l) as f64).sqrt();
                if distance > geom.max_visible_distance {
                    continue;
                }
                let bearing = (l as f64).atan2(d as f64).to_degrees();
                let side = geom.box_scale / distance;
                let bbox = PlaneBox {
                    cx: 0.5 + bearing / (2.0 * geom.half_fov_deg),
                    cy: geom.cy_for_distance(distance),
                    w: side,
                    h: side,
                }
                .clamped();
                visible_objects.push(ProjectedObject {
                    kind,
                    bbox,
                    distance,
                    cell: world,
                });
            }
        }

        Observation {
            depth,
            width,
            channels,
            occupancy,
            visible_objects,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn empty_world() -> WorldState {
        let cfg = WorldConfig {
            grid_w: 12,
            grid_h: 12,
            n_food_items: 0,
            n_obstacles: 0,
            ..WorldConfig::default()
        };
        let mut s = WorldState::reset(&cfg).unwrap();
        s.agent_pos = (6, 6);
        s.heading = Heading::new(0);
        s
    }

    #[test]
    fn default_reset_places_paper_counts() {
        let cfg = WorldConfig {
            rng_seed: 7,
            ..WorldConfig::default()
        };
        let s = WorldState::reset(&cfg).unwrap();
        assert_eq!(s.food_cells().len(), 200);
        assert_eq!(s.obstacles().len(), 4);
        assert!(s.obstacle_at(s.agent_pos).is_none());
        assert!(s.food_at(s.agent_pos).is_none());
        assert_eq!(s.step_count, 0);
    }

    #[test]
    fn reset_is_seeded() {
        let cfg = WorldConfig::default();
        assert_eq!(WorldState::reset(&cfg).unwrap(), WorldState::reset(&cfg).unwrap());
        let other = WorldConfig {
            rng_seed: 1,
            ..cfg.clone()
        };
        assert_ne!(WorldState::reset(&cfg).unwrap(), WorldState::reset(&other).unwrap());
    }

    #[test]
    fn zero_food_gives_empty_map() {
        let cfg = WorldConfig {
            n_food_items: 0,
            ..WorldConfig::default()
        };
        assert!(WorldState::reset(&cfg).unwrap().food_cells().is_empty());
    }

    #[test]
    fn reset_rejects_overfull_grid() {
        let cfg = WorldConfig {
            grid_w: 5,
            grid_h: 5,
            ..WorldConfig::default()
        };
        assert!(matches!(WorldState::reset(&cfg), Err(Error::Placement { .. })));
        let uneven = WorldConfig {
            n_food_items: 199,
            ..WorldConfig::default()
        };
        assert!(matches!(WorldState::reset(&uneven), Err(Error::Config(_))));
    }

    #[test]
    fn kinds_are_zero_mean_and_bounded() {
        let kinds = food_kinds(20);
        let sum: f64 = kinds.iter().map(|k| k.reward).sum();
        assert!(sum.abs() < 1e-12);
        assert!(kinds.iter().all(|k| (-2.0..=2.0).contains(&k.reward)));
        assert!(kinds.iter().all(|k| k.reward != 0.0));
        assert_eq!(kinds.iter().filter(|k| k.class == HealthClass::Healthy).count(), 5);
        assert_eq!(kinds.iter().filter(|k| k.class == HealthClass::Unhealthy).count(), 5);
        assert!((kinds[19].reward - 2.0).abs() < 1e-12);
        assert!((kinds[0].reward + 2.0).abs() < 1e-12);
        assert!(kinds[15..].iter().all(|k| k.class == HealthClass::Healthy));
        let odd: f64 = food_kinds(7).iter().map(|k| k.reward).sum();
        assert!(odd.abs() < 1e-12);
    }

    #[test]
    fn action_encoding_is_stable() {
        for (i, a) in Action::ALL.iter().enumerate() {
            assert_eq!(a.index(), i);
            assert_eq!(Action::from_index(i), Some(*a));
            assert_eq!(a.name().parse::<Action>().unwrap(), *a);
        }
        assert_eq!(Action::from_index(6), None);
    }

    #[test]
    fn stepping_onto_food_collects_it() {
        let mut s = empty_world();
        s.set_cell((6, 5), Some(ObjectKind::Food(19)));
        let out = s.step(Action::MoveStraight);
        assert_eq!(out.reward, 2.0);
        assert_eq!(s.agent_pos, (6, 5));
        assert_eq!(s.food_at((6, 5)), None);
        assert_eq!(s.cum_reward, 2.0);
    }

    #[test]
    fn wall_blocks_movement() {
        let mut s = empty_world();
        s.set_cell((6, 5), Some(ObjectKind::Obstacle(ObstacleKind::Wall)));
        let out = s.step(Action::MoveStraight);
        assert_eq!((out.reward, s.agent_pos), (0.0, (6, 6)));
        assert_eq!(s.step(Action::Jump).reward, 0.0);
        assert_eq!(s.agent_pos, (6, 6));
    }

    #[test]
    fn arena_border_blocks_movement() {
        let mut s = empty_world();
        s.agent_pos = (6, 0);
        s.step(Action::MoveStraight);
        assert_eq!(s.agent_pos, (6, 0));
    }

    #[test]
    fn jump_clears_low_barrier_and_crouch_clears_overhang() {
        let mut s = empty_world();
        s.set_cell((6, 5), Some(ObjectKind::Obstacle(ObstacleKind::LowBarrier)));
        s.step(Action::MoveStraight);
        assert_eq!(s.agent_pos, (6, 6));
        s.step(Action::Crouch);
        assert_eq!(s.agent_pos, (6, 6));
        s.step(Action::Jump);
        assert_eq!(s.agent_pos, (6, 4));

        s.set_cell((6, 3), Some(ObjectKind::Obstacle(ObstacleKind::Overhang)));
        s.step(Action::MoveStraight);
        assert_eq!(s.agent_pos, (6, 4));
        s.step(Action::Jump);
        assert_eq!(s.agent_pos, (6, 4));
        s.step(Action::Crouch);
        assert_eq!(s.agent_pos, (6, 3));
    }

    #[test]
    fn turns_rotate_by_45_degrees() {
        let mut s = empty_world();
        s.step(Action::TurnRight);
        assert_eq!(s.heading.forward(), (1, -1));
        s.step(Action::MoveStraight);
        assert_eq!(s.agent_pos, (7, 5));
        s.step(Action::TurnLeft);
        s.step(Action::TurnLeft);
        assert_eq!(s.heading.forward(), (-1, -1));
        s.step(Action::MoveBack);
        assert_eq!(s.agent_pos, (8, 6));
    }

    #[test]
    fn horizon_ends_episode() {
        let mut s = empty_world();
        s.step_count = s.config().episode_len - 1;
        assert!(s.step(Action::Crouch).done);
        assert!(s.is_done());
        assert_eq!(s.step(Action::MoveStraight), StepOutcome { reward: 0.0, done: true });
        assert_eq!(s.step_count, s.config().episode_len);
    }

    #[test]
    fn empty_view_is_all_background() {
        let s = empty_world();
        let obs = s.observe();
        assert!(obs.visible_objects.is_empty());
        for d in 0..obs.depth {
            for col in 0..obs.width {
                let cell = obs.cell(d, col);
                let l = col as i32 - 3;
                let inside = l.abs() <= d as i32 + 1;
                let active: f64 = cell.iter().sum();
                assert_eq!(active, if inside { 1.0 } else { 0.0 });
                if inside {
                    assert_eq!(cell[0], 1.0);
                }
            }
        }
    }

    #[test]
    fn objects_behind_are_invisible() {
        let mut s = empty_world();
        s.set_cell((6, 8), Some(ObjectKind::Food(3)));
        assert!(s.observe().visible_objects.is_empty());
        s.set_cell((6, 4), Some(ObjectKind::Food(3)));
        assert_eq!(s.observe().visible_objects.len(), 1);
    }

    #[test]
    fn box_height_halves_with_doubled_distance() {
        let mut s = empty_world();
        s.set_cell((6, 4), Some(ObjectKind::Food(3)));
        s.set_cell((6, 2), Some(ObjectKind::Food(3)));
        let obs = s.observe();
        let near = obs.visible_objects.iter().find(|o| o.distance == 2.0).unwrap();
        let far = obs.visible_objects.iter().find(|o| o.distance == 4.0).unwrap();
        assert!((far.bbox.h - near.bbox.h / 2.0).abs() < 1e-12);
        assert!((near.bbox.cx - 0.5).abs() < 1e-12);
        assert!((near.bbox.cy - (1.0 - 2.0 / 6.0)).abs() < 1e-12);
        assert!(far.bbox.cy < near.bbox.cy);
    }

    #[test]
    fn walls_occlude_what_is_behind() {
        let mut s = empty_world();
        s.set_cell((6, 5), Some(ObjectKind::Obstacle(ObstacleKind::Wall)));
        s.set_cell((6, 3), Some(ObjectKind::Food(10)));
        let obs = s.observe();
        assert!(obs
            .visible_objects
            .iter()
            .all(|o| o.kind != ObjectKind::Food(10)));
        assert!(obs
            .visible_objects
            .iter()
            .any(|o| o.kind == ObjectKind::Obstacle(ObstacleKind::Wall)));
        // Low barriers do not occlude.
        s.set_cell((6, 5), Some(ObjectKind::Obstacle(ObstacleKind::LowBarrier)));
        assert!(s
            .observe()
            .visible_objects
            .iter()
            .any(|o| o.kind == ObjectKind::Food(10)));
    }

    #[test]
    fn lateral_offset_moves_box_center() {
        let mut s = empty_world();
        s.set_cell((4, 3), Some(ObjectKind::Food(1)));
        s.set_cell((8, 3), Some(ObjectKind::Food(2)));
        let obs = s.observe();
        let left = obs.visible_objects.iter().find(|o| o.kind == ObjectKind::Food(1)).unwrap();
        let right = obs.visible_objects.iter().find(|o| o.kind == ObjectKind::Food(2)).unwrap();
        assert!(left.bbox.cx < 0.5 && right.bbox.cx > 0.5);
        assert!((left.bbox.cx + right.bbox.cx - 1.0).abs() < 1e-12);
    }
}
