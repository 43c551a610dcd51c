use drlek_core::detector::{measure_error_mix, DetectorConfig, RandomWalkFrames};
use drlek_core::env::{Action, PlaneBox, WorldConfig, WorldState};
use drlek_core::knowledge::{region_of, RegionLabel, RuleSet, DEFAULT_RULES};
use drlek_core::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn default_world_holds_200_food_items_and_4_obstacles() {
    for seed in 0..20 {
        let w = WorldState::reset(&WorldConfig { rng_seed: seed, ..WorldConfig::default() }).unwrap();
        assert_eq!((w.food_cells().len(), w.obstacles().len()), (200, 4));
    }
}

#[test]
fn same_seed_same_trajectory() {
    let run = |seed: u64| {
        let mut w = WorldState::reset(&WorldConfig { rng_seed: seed, ..WorldConfig::default() }).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut trace = Vec::new();
        while !w.is_done() {
            let o = w.step(Action::from_index(rng.random_range(0..6)).unwrap());
            trace.push((o.reward.to_bits(), w.agent_pos, w.heading.index()));
        }
        trace
    };
    assert_eq!(run(3), run(3));
    assert_ne!(run(3), run(4));
}

#[test]
fn episodes_end_after_the_configured_length() {
    let cfg = WorldConfig::default();
    let mut w = WorldState::reset(&cfg).unwrap();
    let mut n = 0;
    while !w.is_done() {
        w.step(Action::MoveStraight);
        n += 1;
    }
    assert_eq!(n, cfg.episode_len);
}

#[test]
fn random_walk_reward_is_near_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut total = 0.0;
    let episodes = 300;
    for e in 0..episodes {
        let mut w = WorldState::reset(&WorldConfig { rng_seed: 1000 + e, ..WorldConfig::default() }).unwrap();
        while !w.is_done() {
            total += w.step(Action::from_index(rng.random_range(0..6)).unwrap()).reward;
        }
    }
    let mean = total / episodes as f64;
    assert!(mean.abs() <= 0.3, "{mean}");
}

#[test]
fn calibrated_detector_errors_are_mostly_false_positives() {
    let world = WorldConfig::default();
    let mut walk = RandomWalkFrames::new(&world, 0).unwrap();
    let mix = measure_error_mix(&DetectorConfig::calibrated(world.n_food_kinds, 0), 10_000, |_| walk.next_frame()).unwrap();
    assert!((mix.fp_share - 0.683).abs() <= 0.05, "{mix:?}");
    assert!((mix.fp_share + mix.fn_share - 1.0).abs() < 1e-12);
}

#[test]
fn shipped_rules_parse() {
    let rules = RuleSet::parse(DEFAULT_RULES).unwrap();
    assert_eq!(rules.len(), 43);
    rules.check_kinds(WorldConfig::default().n_food_kinds).unwrap();
}

#[test]
fn malformed_rule_lines_are_reported_by_number() {
    let text = "# header\nforbid jump when wall in center\n\nforbid fly when wall in left\n";
    match RuleSet::parse(text) {
        Err(Error::RuleParse { line, .. }) => assert_eq!(line, 4),
        other => panic!("{other:?}"),
    }
    for bad in ["forbid jump when wall", "forbid jump when lava in left", "forbid jump when wall in up", "allow jump when wall in left"] {
        match RuleSet::parse(&format!("\n\n{bad}\n")) {
            Err(Error::RuleParse { line, .. }) => assert_eq!(line, 3, "{bad}"),
            other => panic!("{bad}: {other:?}"),
        }
    }
}

#[test]
fn regions_follow_the_box_centre() {
    let at = |cx, cy| region_of(&PlaneBox { cx, cy, w: 0.1, h: 0.1 });
    assert_eq!(at(0.1, 0.9), RegionLabel::Left);
    assert_eq!(at(0.9, 0.1), RegionLabel::Right);
    assert_eq!(at(0.5, 0.7), RegionLabel::Center);
    assert_eq!(at(0.5, 0.2), RegionLabel::Other);
}
