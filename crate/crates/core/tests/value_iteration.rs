#[path = "support/oracles.rs"]
mod oracles;

use drlek_core::rl::{argmax, td_target, QTable, TabularTransition, TargetMode};

#[test]
fn two_state_chain_reaches_the_fixed_point() {
    // 0 --a0--> 1 (r=0), 0 --a1--> end (r=0.5), 1 --a0--> end (r=1), 1 --a1--> 0 (r=0)
    let ts = [
        TabularTransition { s: 0, a: 0, r: 0.0, s_next: 1, done: false },
        TabularTransition { s: 0, a: 1, r: 0.5, s_next: 0, done: true },
        TabularTransition { s: 1, a: 0, r: 1.0, s_next: 1, done: true },
        TabularTransition { s: 1, a: 1, r: 0.0, s_next: 0, done: false },
    ];
    let mut q = QTable::new(2, 2);
    for _ in 0..500 {
        for t in &ts {
            q.q_learning_update(t, 0.3, 0.9);
        }
    }
    let expect = [[0.9, 0.5], [1.0, 0.81]];
    for s in 0..2 {
        for a in 0..2 {
            assert!((q.get(s, a) - expect[s][a]).abs() < 1e-6, "Q({s},{a}) = {}", q.get(s, a));
        }
    }
}

#[test]
fn random_small_mdps_match_value_iteration() {
    let gap = oracles::tabular_value_iteration_gap(40, 11);
    assert!(gap < 1e-6, "{gap:e}");
}

#[test]
fn double_target_uses_the_online_argmax() {
    let q_next = [2.0, 5.0, 0.0];
    let online = [9.0, 1.0, 1.0];
    assert_eq!(argmax(&online), 0);
    assert_eq!(td_target(1.0, 1.0, &q_next, TargetMode::Double(&online), false), 3.0);
    assert_eq!(td_target(1.0, 1.0, &q_next, TargetMode::Max, false), 6.0);
}

#[test]
fn meta_learner_finds_the_optimal_policy() {
    let (mdp, _) = oracles::two_feature_mdp();
    let policy: Vec<usize> = mdp.value_iteration(0.9).iter().map(|r| argmax(r)).collect();
    assert_eq!(policy, vec![0, 3]);
    for seed in 0..3 {
        let at = oracles::meta_policy_convergence(2000, seed);
        assert!(at.is_some(), "seed {seed} never settled on the optimal policy");
    }
}
