//! Knowledge-derived features computed from detections: a presence flag per
//! tracked food kind, and a `k × k` grid of summed object scores with a short
//! frame history.

use std::collections::VecDeque;

use crate::detector::Detection;
use crate::env::{FoodKind, HealthClass, ObjectKind};
use crate::error::{Error, Result};

/// Hand-assigned importance of each food kind.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectScoreTable {
    scores: Vec<f64>,
    tracked: Vec<bool>,
}

pub const HEALTHY_SCORE: f64 = 5.0;
pub const UNHEALTHY_SCORE: f64 = -15.0;

impl ObjectScoreTable {
    /// Table over `n_kinds` kinds with nothing tracked.
    pub fn empty(n_kinds: usize) -> Self {
        Self {
            scores: vec![0.0; n_kinds],
            tracked: vec![false; n_kinds],
        }
    }

    /// Tracks healthy and unhealthy kinds with the +5 / −15 scores.
    pub fn by_health(kinds: &[FoodKind]) -> Self {
        let mut table = Self::empty(kinds.len());
        for k in kinds {
            match k.class {
                HealthClass::Healthy => table.set_score(k.id, HEALTHY_SCORE),
                HealthClass::Unhealthy => table.set_score(k.id, UNHEALTHY_SCORE),
                HealthClass::Neutral => {}
            }
        }
        table
    }

    /// Like [`by_health`](Self::by_health) but every kind is tracked, neutral ones with score 0.
    pub fn all_tracked(kinds: &[FoodKind]) -> Self {
        let mut table = Self::by_health(kinds);
        table.tracked.iter_mut().for_each(|t| *t = true);
        table
    }

    pub fn set_score(&mut self, kind: usize, score: f64) {
        self.scores[kind] = score;
        self.tracked[kind] = true;
    }

    pub fn untrack(&mut self, kind: usize) {
        self.scores[kind] = 0.0;
        self.tracked[kind] = false;
    }

    pub fn score(&self, kind: usize) -> f64 {
        self.scores.get(kind).copied().unwrap_or(0.0)
    }

    pub fn is_tracked(&self, kind: usize) -> bool {
        self.tracked.get(kind).copied().unwrap_or(false)
    }

    pub fn tracked_kinds(&self) -> Vec<usize> {
        (0..self.tracked.len()).filter(|&k| self.tracked[k]).collect()
    }

    pub fn n_kinds(&self) -> usize {
        self.scores.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PresenceVector(pub Vec<bool>);

impl PresenceVector {
    pub fn to_features(&self) -> Vec<f64> {
        self.0.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }
}

/// One flag per tracked kind (in kind order): did any detection carry that label?
pub fn presence(dets: &[Detection], table: &ObjectScoreTable) -> PresenceVector {
    let tracked = table.tracked_kinds();
    let mut flags = vec![false; tracked.len()];
    for d in dets {
        if let ObjectKind::Food(k) = d.kind {
            if let Ok(pos) = tracked.binary_search(&k) {
                flags[pos] = true;
            }
        }
    }
    PresenceVector(flags)
}

/// Which vertical band of the image plane is scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionMask {
    Full,
    /// Only `cy ≥ 0.5`, the near half of the view.
    BottomHalf,
}

impl RegionMask {
    fn top(self) -> f64 {
        match self {
            RegionMask::Full => 0.0,
            RegionMask::BottomHalf => 0.5,
        }
    }

    pub fn contains(self, cy: f64) -> bool {
        cy >= self.top()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureFilter {
    pub min_confidence: f64,
    /// Farthest estimated distance (cells) still scored.
    pub max_distance: f64,
    /// Plane scale used to turn a box's `cy` into a distance estimate.
    pub max_visible_distance: f64,
}

pub const DEFAULT_MIN_CONFIDENCE: f64 = 0.25;

impl FeatureFilter {
    /// Keeps everything.
    pub fn permissive(max_visible_distance: f64) -> Self {
        Self {
            min_confidence: 0.0,
            max_distance: f64::INFINITY,
            max_visible_distance,
        }
    }

    /// Confidence at least 0.25 and no farther than 3/4 of the view range.
    pub fn meta_default(max_visible_distance: f64) -> Self {
        Self {
            min_confidence: DEFAULT_MIN_CONFIDENCE,
            max_distance: 0.75 * max_visible_distance,
            max_visible_distance,
        }
    }

    pub fn permits(&self, d: &Detection) -> bool {
        let distance = (1.0 - d.bbox.cy) * self.max_visible_distance;
        d.confidence >= self.min_confidence && distance <= self.max_distance
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AreaGrid {
    pub k: usize,
    pub mask: RegionMask,
    /// Row-major, row 0 at the top of the scored band.
    pub scores: Vec<f64>,
}

impl AreaGrid {
    pub fn zeros(k: usize, mask: RegionMask) -> Self {
        Self {
            k,
            mask,
            scores: vec![0.0; k * k],
        }
    }
}

/// Index of the band cell containing `t ∈ [0,1]`; a point on a border goes
/// to the lower-index cell.
fn band_index(t: f64, k: usize) -> usize {
    let i = (t * k as f64).ceil() as isize - 1;
    i.clamp(0, k as isize - 1) as usize
}

/// Sums `table[kind]` of every surviving detection into the cell holding its
/// box center. The grid partitions the band selected by `mask`.
pub fn area_scores(
    dets: &[Detection],
    k: usize,
    table: &ObjectScoreTable,
    filter: &FeatureFilter,
    mask: RegionMask,
) -> Result<AreaGrid> {
    if k == 0 {
        return Err(Error::Config("area grid needs k ≥ 1".into()));
    }
    let mut grid = AreaGrid::zeros(k, mask);
    let top = mask.top();
    for d in dets {
        let ObjectKind::Food(kind) = d.kind else {
            continue;
        };
        if !table.is_tracked(kind) || !filter.permits(d) || !mask.contains(d.bbox.cy) {
            continue;
        }
        let col = band_index(d.bbox.cx, k);
        let row = band_index((d.bbox.cy - top) / (1.0 - top), k);
        grid.scores[row * k + col] += table.score(kind);
    }
    Ok(grid)
}

/// Current area grid plus the two previous ones.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStack {
    k: usize,
    frames: VecDeque<Vec<f64>>,
}

pub const HISTORY_FRAMES: usize = 3;

impl FeatureStack {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            frames: VecDeque::with_capacity(HISTORY_FRAMES),
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        HISTORY_FRAMES * self.k * self.k
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn reset(&mut self) {
        self.frames.clear();
    }

    pub fn push(&mut self, grid: &AreaGrid) -> Result<()> {
        if grid.k != self.k {
            return Err(Error::shape("feature stack k", self.k, grid.k));
        }
        if self.frames.len() == HISTORY_FRAMES {
            self.frames.pop_back();
        }
        self.frames.push_front(grid.scores.clone());
        Ok(())
    }

    /// `[current, t−1, t−2]`, zero-filled where history is missing.
    pub fn flatten(&self) -> Vec<f64> {
        let cells = self.k * self.k;
        let mut out = vec![0.0; HISTORY_FRAMES * cells];
        for (i, f) in self.frames.iter().enumerate() {
            out[i * cells..(i + 1) * cells].copy_from_slice(f);
        }
        out
    }
}
