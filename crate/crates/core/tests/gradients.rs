#[path = "support/oracles.rs"]
mod oracles;

const NETS: usize = 50;
const TOL: f64 = 1e-4;

#[test]
fn mlp_backward_matches_finite_differences() {
    let e = oracles::mlp_gradients(NETS, 1);
    assert!(e < TOL, "max relative error {e:e}");
}

#[test]
fn dqn_loss_gradient_matches_finite_differences() {
    let e = oracles::dqn_gradients(NETS, 2);
    assert!(e < TOL, "max relative error {e:e}");
}

#[test]
fn actor_critic_gradient_matches_finite_differences() {
    let e = oracles::actor_critic_gradients(NETS, 3);
    assert!(e < TOL, "max relative error {e:e}");
}

#[test]
fn meta_update_gradient_matches_finite_differences() {
    let e = oracles::meta_update_gradients(NETS, 4);
    assert!(e < TOL, "max relative error {e:e}");
}

#[test]
fn oracle_detects_a_wrong_gradient() {
    use drlek_core::neural::{Activation, Mlp, NetSpec, ParamTensors};
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let net = Mlp::new(&NetSpec::mlp(3, &[4], 2, Activation::Identity), &mut rng).unwrap();
    let x = [0.3, -0.2, 0.9];
    let (mut g, _) = net.backward(&net.forward(&x).unwrap(), &[1.0, 0.0]).unwrap();
    g.scale(1.01);
    let e = oracles::fd_max_rel_err(&net, &g, |n: &Mlp| n.predict(&x).unwrap()[0]);
    assert!(e > 5e-3, "{e}");
}
