//! Meta-learner grid over area count, hidden-layer count and layer size.

use std::fmt::Write as _;

use crate::config::{ExperimentConfig, Variant};
use crate::experiment::{mean, run_experiment, std_dev};
use crate::HarnessError;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub k: usize,
    pub layers: usize,
    pub size: usize,
    /// Over the evaluation episodes of every seed.
    pub mean: f64,
    pub std: f64,
}

/// One meta-learner run per grid point and seed, scored on its evaluation tail.
pub fn run_sweep(base: &ExperimentConfig) -> Result<Vec<SweepRow>, HarnessError> {
    let g = &base.sweep;
    let mut rows = Vec::new();
    for &k in &g.k {
        for &layers in &g.layers {
            for &size in &g.sizes {
                let mut cfg = base.clone();
                cfg.variant = Variant::Meta;
                cfg.k = k;
                cfg.meta.hidden = vec![size; layers];
                let mut rewards = Vec::new();
                for &seed in &base.seeds {
                    let log = run_experiment(&cfg, seed)?;
                    rewards.extend(log.tail(cfg.eval_episodes).iter().map(|r| r.reward));
                }
                rows.push(SweepRow {
                    k,
                    layers,
                    size,
                    mean: mean(&rewards),
                    std: std_dev(&rewards),
                });
            }
        }
    }
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("areas,k,layers,size,mean,std\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{},{},{}", r.k * r.k, r.k, r.layers, r.size, r.mean, r.std);
    }
    s
}
