//! Noisy object detector standing in for a trained vision model.
//!
//! True objects are dropped with a per-kind miss probability, their boxes are
//! jittered and their labels may be swapped inside a confusion pair. Spurious
//! food detections arrive as a Poisson process at uniform plane positions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::env::{Action, ObjectKind, PlaneBox, ProjectedObject, WorldConfig, WorldState};
use crate::error::{Error, Result};

/// Where a detection came from. Features never look at this.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    /// Index into the truth list handed to [`Detector::detect`].
    Truth(usize),
    Spurious,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub kind: ObjectKind,
    pub bbox: PlaneBox,
    pub confidence: f64,
    pub origin: Origin,
}

/// Clamped normal law for confidence scores in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceLaw {
    pub mean: f64,
    pub std: f64,
}

impl ConfidenceLaw {
    fn draw(&self, z: f64) -> f64 {
        (self.mean + self.std * z).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfusionPair {
    pub a: usize,
    pub b: usize,
    pub p_swap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorConfig {
    /// Miss probability per food kind.
    pub p_miss: Vec<f64>,
    pub obstacle_p_miss: f64,
    /// Expected spurious food detections per frame.
    pub fp_rate: f64,
    pub confusion_pairs: Vec<ConfusionPair>,
    pub true_confidence: ConfidenceLaw,
    pub spurious_confidence: ConfidenceLaw,
    /// Box jitter as a fraction of the box side.
    pub box_jitter: f64,
    pub rng_seed: u64,
}

/// Miss probability of the shipped calibration.
pub const DEFAULT_P_MISS: f64 = 0.12;
/// Spurious rate of the shipped calibration, tuned against the default world
/// so that false positives make up 68.3% of food detection errors.
pub const DEFAULT_FP_RATE: f64 = 0.67;

impl DetectorConfig {
    /// Shipped calibration for `n_kinds` food kinds.
    pub fn calibrated(n_kinds: usize, rng_seed: u64) -> Self {
        let confusion_pairs = if n_kinds >= 20 {
            vec![ConfusionPair {
                a: 4,
                b: 15,
                p_swap: 0.1,
            }]
        } else {
            Vec::new()
        };
        Self {
            p_miss: vec![DEFAULT_P_MISS; n_kinds],
            obstacle_p_miss: 0.0,
            fp_rate: DEFAULT_FP_RATE,
            confusion_pairs,
            true_confidence: ConfidenceLaw {
                mean: 0.75,
                std: 0.15,
            },
            spurious_confidence: ConfidenceLaw {
                mean: 0.35,
                std: 0.15,
            },
            box_jitter: 0.05,
            rng_seed,
        }
    }

    /// Perfect detector: every object reported with its exact box.
    pub fn noiseless(n_kinds: usize, rng_seed: u64) -> Self {
        Self {
            p_miss: vec![0.0; n_kinds],
            obstacle_p_miss: 0.0,
            fp_rate: 0.0,
            confusion_pairs: Vec::new(),
            true_confidence: ConfidenceLaw {
                mean: 1.0,
                std: 0.0,
            },
            spurious_confidence: ConfidenceLaw {
                mean: 0.5,
                std: 0.0,
            },
            box_jitter: 0.0,
            rng_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if !self.p_miss.iter().all(|&p| prob(p)) || !prob(self.obstacle_p_miss) {
            return Err(Error::Config("miss probabilities must lie in [0,1]".into()));
        }
        if !(self.fp_rate >= 0.0) || !self.fp_rate.is_finite() {
            return Err(Error::Config("fp_rate must be finite and non-negative".into()));
        }
        for pair in &self.confusion_pairs {
            if !prob(pair.p_swap) || pair.a >= self.p_miss.len() || pair.b >= self.p_miss.len() {
                return Err(Error::Config(format!("invalid confusion pair {pair:?}")));
            }
        }
        if self.box_jitter < 0.0 {
            return Err(Error::Config("box_jitter must be non-negative".into()));
        }
        Ok(())
    }

    pub fn n_kinds(&self) -> usize {
        self.p_miss.len()
    }

    fn partner(&self, kind: usize) -> Option<(usize, f64)> {
        self.confusion_pairs.iter().find_map(|p| {
            if p.a == kind {
                Some((p.b, p.p_swap))
            } else if p.b == kind {
                Some((p.a, p.p_swap))
            } else {
                None
            }
        })
    }
}

/// Stateful detector: the configuration plus its seed stream.
#[derive(Debug, Clone)]
pub struct Detector {
    cfg: DetectorConfig,
    rng: ChaCha8Rng,
}

impl Detector {
    pub fn new(cfg: DetectorConfig) -> Result<Self> {
        cfg.validate()?;
        let rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
        Ok(Self { cfg, rng })
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.cfg
    }

    /// Runs the noise model over one frame of ground truth.
    ///
    /// Every truth object consumes the same number of draws whatever the
    /// probabilities are, so two configurations sharing a seed see the same
    /// underlying noise.
    pub fn detect(&mut self, truth: &[ProjectedObject]) -> Vec<Detection> {
        let cfg = &self.cfg;
        let rng = &mut self.rng;
        let mut out = Vec::with_capacity(truth.len() + 2);

        for (i, obj) in truth.iter().enumerate() {
            let u_miss: f64 = rng.random();
            let u_swap: f64 = rng.random();
            let z: [f64; 5] = std::array::from_fn(|_| StandardNormal.sample(rng));

            let p_miss = match obj.kind {
                ObjectKind::Food(k) => cfg.p_miss.get(k).copied().unwrap_or(0.0),
                ObjectKind::Obstacle(_) => cfg.obstacle_p_miss,
            };
            if u_miss < p_miss {
                continue;
            }
            let kind = match obj.kind {
                ObjectKind::Food(k) => match cfg.partner(k) {
                    Some((other, p)) if u_swap < p => ObjectKind::Food(other),
                    _ => obj.kind,
                },
                other => other,
            };
            let j = cfg.box_jitter;
            let b = obj.bbox;
            let bbox = PlaneBox {
                cx: b.cx + j * b.w * z[0],
                cy: b.cy + j * b.h * z[1],
                w: b.w * (j * z[2]).exp(),
                h: b.h * (j * z[3]).exp(),
            }
            .clamped();
            out.push(Detection {
                kind,
                bbox,
                confidence: cfg.true_confidence.draw(z[4]),
                origin: Origin::Truth(i),
            });
        }

        let n_kinds = cfg.n_kinds();
        if cfg.fp_rate > 0.0 && n_kinds > 0 {
            let n_spurious = Poisson::new(cfg.fp_rate)
                .map(|p| p.sample(rng) as usize)
                .unwrap_or(0);
            for _ in 0..n_spurious {
                let kind = ObjectKind::Food(rng.random_range(0..n_kinds));
                let side = rng.random_range(0.03..0.2);
                let bbox = PlaneBox {
                    cx: rng.random_range(side / 2.0..=1.0 - side / 2.0),
                    cy: rng.random_range(side / 2.0..=1.0 - side / 2.0),
                    w: side,
                    h: side,
                };
                let z: f64 = StandardNormal.sample(rng);
                out.push(Detection {
                    kind,
                    bbox,
                    confidence: cfg.spurious_confidence.draw(z),
                    origin: Origin::Spurious,
                });
            }
        }
        out
    }
}

/// Minimum IoU for a detection to count as finding a truth object.
pub const MATCH_IOU: f64 = 0.5;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MatchCounts {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

/// Greedy matching of food detections to food truth: detections in order of
/// decreasing confidence claim the unmatched same-label truth object with the
/// highest IoU, if that IoU reaches [`MATCH_IOU`]. Obstacles are ignored.
///
/// Returns the counts plus, per detection, whether it was matched.
pub fn match_frame(truth: &[ProjectedObject], dets: &[Detection]) -> (MatchCounts, Vec<bool>) {
    let mut order: Vec<usize> = (0..dets.len())
        .filter(|&i| matches!(dets[i].kind, ObjectKind::Food(_)))
        .collect();
    order.sort_by(|&a, &b| dets[b].confidence.total_cmp(&dets[a].confidence).then(a.cmp(&b)));
    let mut claimed = vec![false; truth.len()];
    let mut matched = vec![false; dets.len()];
    let mut counts = MatchCounts::default();

    for i in order {
        let det = &dets[i];
        let best = truth
            .iter()
            .enumerate()
            .filter(|(t, obj)| !claimed[*t] && obj.kind == det.kind)
            .map(|(t, obj)| (t, obj.bbox.iou(&det.bbox)))
            .filter(|&(_, iou)| iou >= MATCH_IOU)
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));
        match best {
            Some((t, _)) => {
                claimed[t] = true;
                matched[i] = true;
                counts.true_positives += 1;
            }
            None => counts.false_positives += 1,
        }
    }
    counts.false_negatives = truth
        .iter()
        .enumerate()
        .filter(|(t, obj)| matches!(obj.kind, ObjectKind::Food(_)) && !claimed[*t])
        .count();
    (counts, matched)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorMix {
    pub fp_share: f64,
    pub fn_share: f64,
    pub counts: MatchCounts,
    /// Precision per food kind; `None` when the kind was never detected.
    pub per_kind_precision: Vec<Option<f64>>,
}

impl ErrorMix {
    pub fn total_errors(&self) -> usize {
        self.counts.false_positives + self.counts.false_negatives
    }
}

/// Runs the detector over `n_frames` frames drawn from `sampler` and reports
/// which share of the errors are false positives versus false negatives.
/// With zero errors both shares are reported as 0.
pub fn measure_error_mix<F>(cfg: &DetectorConfig, n_frames: usize, mut sampler: F) -> Result<ErrorMix>
where
    F: FnMut(usize) -> Vec<ProjectedObject>,
{
    if n_frames == 0 {
        return Err(Error::Config("n_frames must be at least 1".into()));
    }
    let mut detector = Detector::new(cfg.clone())?;
    let n_kinds = cfg.n_kinds();
    let mut counts = MatchCounts::default();
    let mut tp_kind = vec![0usize; n_kinds];
    let mut det_kind = vec![0usize; n_kinds];

    for frame in 0..n_frames {
        let truth = sampler(frame);
        let dets = detector.detect(&truth);
        let (c, matched) = match_frame(&truth, &dets);
        counts.true_positives += c.true_positives;
        counts.false_positives += c.false_positives;
        counts.false_negatives += c.false_negatives;
        for (d, m) in dets.iter().zip(&matched) {
            if let ObjectKind::Food(k) = d.kind {
                if k < n_kinds {
                    det_kind[k] += 1;
                    tp_kind[k] += usize::from(*m);
                }
            }
        }
    }

    let errors = counts.false_positives + counts.false_negatives;
    let (fp_share, fn_share) = if errors == 0 {
        (0.0, 0.0)
    } else {
        (
            counts.false_positives as f64 / errors as f64,
            counts.false_negatives as f64 / errors as f64,
        )
    };
    let per_kind_precision = tp_kind
        .iter()
        .zip(&det_kind)
        .map(|(&tp, &n)| (n > 0).then(|| tp as f64 / n as f64))
        .collect();
    Ok(ErrorMix {
        fp_share,
        fn_share,
        counts,
        per_kind_precision,
    })
}

/// Frame source for calibration: a uniform-random walker in fresh worlds,
/// one world per episode with consecutive seeds.
pub struct RandomWalkFrames {
    config: WorldConfig,
    state: WorldState,
    rng: ChaCha8Rng,
    episode: u64,
}

impl RandomWalkFrames {
    pub fn new(config: &WorldConfig, seed: u64) -> Result<Self> {
        let config = WorldConfig {
            rng_seed: seed,
            ..config.clone()
        };
        let state = WorldState::reset(&config)?;
        Ok(Self {
            config,
            state,
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_f4a3),
            episode: 0,
        })
    }

    pub fn next_frame(&mut self) -> Vec<ProjectedObject> {
        if self.state.is_done() {
            self.episode += 1;
            let cfg = WorldConfig {
                rng_seed: self.config.rng_seed.wrapping_add(self.episode),
                ..self.config.clone()
            };
            self.state = WorldState::reset(&cfg).expect("config validated at construction");
        }
        let frame = self.state.observe().visible_objects;
        let a = Action::ALL[self.rng.random_range(0..Action::COUNT)];
        self.state.step(a);
        frame
    }
}
