#[path = "support/oracles.rs"]
mod oracles;

use drlek_core::rl::{boltzmann_probs, dueling_combine, DuelingMode};

#[test]
fn dueling_mean_head_ignores_advantage_shifts() {
    let (worst, exact) = oracles::dueling_shift_invariance(500, 5);
    assert!(exact);
    assert!(worst < 1e-12, "{worst:e}");
}

#[test]
fn max_head_is_also_shift_invariant_and_pins_the_best_action() {
    let q = dueling_combine(2.0, &[1.0, 3.0, -1.0], DuelingMode::Max);
    assert_eq!(q, vec![0.0, 2.0, -2.0]);
}

#[test]
fn advantage_round_trip() {
    let e = oracles::advantage_round_trip(500, 6);
    assert!(e < 1e-12, "{e:e}");
}

#[test]
fn boltzmann_normalizes_and_ignores_shifts() {
    let (norm, shift) = oracles::boltzmann_identities(2000, 7);
    assert!(norm < 1e-9, "{norm:e}");
    assert!(shift < 1e-9, "{shift:e}");
    let p = boltzmann_probs(&[1.0, 0.0], 1.0);
    assert!((p[0] - 0.7311).abs() < 1e-4 && (p[1] - 0.2689).abs() < 1e-4);
}

#[test]
fn all_pairs_have_distinct_codes() {
    assert_eq!(oracles::distinct_pair_codes(), 36);
}
