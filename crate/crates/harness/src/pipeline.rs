//! World, detector and feature extraction for one agent stream.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use drlek_core::a3c::StateEncoder;
use drlek_core::detector::{Detection, Detector, DetectorConfig};
use drlek_core::env::{Action, Observation, StepOutcome, WorldConfig, WorldState};
use drlek_core::features::{
    area_scores, presence, FeatureFilter, FeatureStack, ObjectScoreTable, RegionMask, UNHEALTHY_SCORE,
};
use drlek_core::Result;

/// What the deciders see at one step.
#[derive(Debug, Clone, Copy)]
pub struct Percept<'a> {
    pub occupancy: &'a [f64],
    pub detections: &'a [Detection],
}

/// A world that draws a fresh layout per episode from its own seed stream,
/// and is observed through the noisy detector after every step.
pub struct Game {
    world_cfg: WorldConfig,
    world: WorldState,
    detector: Detector,
    layouts: ChaCha8Rng,
    obs: Observation,
    dets: Vec<Detection>,
}

impl Game {
    pub fn new(world_cfg: &WorldConfig, detector: DetectorConfig, layout_seed: u64) -> Result<Self> {
        let mut layouts = ChaCha8Rng::seed_from_u64(layout_seed);
        let world_cfg = WorldConfig {
            rng_seed: layouts.random(),
            ..world_cfg.clone()
        };
        let world = WorldState::reset(&world_cfg)?;
        let mut detector = Detector::new(detector)?;
        let obs = world.observe();
        let dets = detector.detect(&obs.visible_objects);
        Ok(Self {
            world_cfg,
            world,
            detector,
            layouts,
            obs,
            dets,
        })
    }

    /// Starts the next episode on a new layout.
    pub fn reset(&mut self) -> Result<()> {
        self.world_cfg.rng_seed = self.layouts.random();
        self.world = WorldState::reset(&self.world_cfg)?;
        self.refresh();
        Ok(())
    }

    fn refresh(&mut self) {
        self.obs = self.world.observe();
        self.dets = self.detector.detect(&self.obs.visible_objects);
    }

    pub fn step(&mut self, a: Action) -> StepOutcome {
        let out = self.world.step(a);
        if !out.done {
            self.refresh();
        }
        out
    }

    pub fn percept(&self) -> Percept<'_> {
        Percept {
            occupancy: &self.obs.occupancy,
            detections: &self.dets,
        }
    }

    pub fn world(&self) -> &WorldState {
        &self.world
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Injection {
    None,
    Presence,
    Area,
}

#[derive(Debug, Clone)]
pub struct PerceptionSpec {
    pub injection: Injection,
    /// Stack raw occupancy frames in front of the features.
    pub occupancy: bool,
    pub k: usize,
    pub mask: RegionMask,
    pub filter: FeatureFilter,
    pub table: ObjectScoreTable,
}

/// Turns percepts into network inputs, keeping the frame histories.
#[derive(Debug, Clone)]
pub struct Perception {
    spec: PerceptionSpec,
    stack: FeatureStack,
    encoder: StateEncoder,
}

/// Area scores are divided by this before entering a network.
pub const AREA_SCALE: f64 = -UNHEALTHY_SCORE;

impl Perception {
    pub fn new(spec: PerceptionSpec) -> Self {
        Self {
            stack: FeatureStack::new(spec.k),
            encoder: StateEncoder::default(),
            spec,
        }
    }

    pub fn spec(&self) -> &PerceptionSpec {
        &self.spec
    }

    pub fn begin_episode(&mut self) {
        self.stack.reset();
        self.encoder.reset();
    }

    pub fn feature_len(&self) -> usize {
        match self.spec.injection {
            Injection::None => 0,
            Injection::Presence => self.spec.table.tracked_kinds().len(),
            Injection::Area => self.stack.len(),
        }
    }

    pub fn input_len(&self, occupancy_len: usize) -> usize {
        if self.spec.occupancy {
            StateEncoder::encoded_len(occupancy_len, self.feature_len())
        } else {
            self.feature_len()
        }
    }

    /// Injected features only; advances the area history.
    pub fn features(&mut self, p: &Percept) -> Result<Vec<f64>> {
        let s = &self.spec;
        match s.injection {
            Injection::None => Ok(Vec::new()),
            Injection::Presence => {
                let dets: Vec<Detection> = p
                    .detections
                    .iter()
                    .filter(|d| s.filter.permits(d))
                    .cloned()
                    .collect();
                Ok(presence(&dets, &s.table).to_features())
            }
            Injection::Area => {
                let grid = area_scores(p.detections, s.k, &s.table, &s.filter, s.mask)?;
                self.stack.push(&grid)?;
                Ok(self.stack.flatten().into_iter().map(|x| x / AREA_SCALE).collect())
            }
        }
    }

    pub fn encode(&mut self, p: &Percept) -> Result<Vec<f64>> {
        let feats = self.features(p)?;
        if self.spec.occupancy {
            let f = (!feats.is_empty()).then_some(feats.as_slice());
            self.encoder.encode(p.occupancy, f)
        } else {
            Ok(feats)
        }
    }
}
