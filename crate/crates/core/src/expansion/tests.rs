use ndarray::{array, Array1, Array2};
use proptest::prelude::*;

use super::*;
use crate::diffcore::Layer;
use crate::rng::seeded;

struct Bowl {
    center: Array1<f64>,
}

impl ActionCritic for Bowl {
    fn q_and_grad(&self, _s: ArrayView2<f64>, a: ArrayView2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
        let diff = &a - &self.center;
        Ok((diff.map(|v| -v * v).sum_axis(Axis(1)), diff * -2.0))
    }
}

/// Actor whose output ignores inputs: mean `mu`, raw log-std `log_std`.
/// Raw output giving `log_std`; values outside the range saturate.
fn raw_for(log_std: f64) -> f64 {
    let u = 2.0 * (log_std - LOG_STD_MIN) / (LOG_STD_MAX - LOG_STD_MIN) - 1.0;
    if u <= -1.0 {
        -50.0
    } else if u >= 1.0 {
        50.0
    } else {
        u.atanh()
    }
}

fn fixed_actor(state_dim: usize, mu: &[f64], log_std: &[f64]) -> ExpansionActor {
    let d = mu.len();
    let bias: Vec<f64> = mu.iter().copied().chain(log_std.iter().map(|&l| raw_for(l))).collect();
    let net = NetParams::new(
        vec![Layer {
            weight: Array2::zeros((2 * d, state_dim + d)),
            bias: Array1::from(bias),
        }],
        Activation::Identity,
    )
    .unwrap();
    ExpansionActor::new(net, state_dim, d).unwrap()
}

#[test]
fn concentration_limit() {
    let actor = fixed_actor(1, &[0.3, -0.2], &[-20.0, -20.0]);
    let s = array![[0.0]];
    let a_data = array![[0.0, 0.0]];
    let (_, log_std) = actor.mean_log_std(s.view(), a_data.view()).unwrap();
    assert_eq!(log_std, array![[LOG_STD_MIN, LOG_STD_MIN]]);
    let (a, lp) = actor_sample(&actor, s.view(), a_data.view(), &mut seeded(0)).unwrap();
    assert!((a[[0, 0]] - 0.3).abs() < 0.05 && (a[[0, 1]] + 0.2).abs() < 0.05);
    assert!(lp[0] > 5.0);
}

#[test]
fn standard_normal_normalizer() {
    let actor = fixed_actor(0, &[0.0, 0.0, 0.0], &[0.0, 0.0, 0.0]);
    let lp = actor_log_prob(&actor, Array2::zeros((1, 0)).view(), array![[0.5, 0.5, 0.5]].view(), array![[0.0, 0.0, 0.0]].view())
        .unwrap();
    assert!((lp[0] + 1.5 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-9);
}

#[test]
fn sample_mean_concentrates() {
    let actor = fixed_actor(0, &[0.4], &[(0.5f64).ln()]);
    let n = 10_000;
    let (a, _) = actor_sample(&actor, Array2::zeros((n, 0)).view(), Array2::zeros((n, 1)).view(), &mut seeded(1)).unwrap();
    let mean = a.mean().unwrap();
    assert!((mean - 0.4).abs() < 3.0 * 0.5 / 100.0);
}

#[test]
fn dual_fixed_point_has_zero_gradient() {
    let dual = DualTemp::new(2, 0.3, AdamConfig::default()).unwrap();
    assert_eq!(dual.target(), -1.0);
    assert_eq!(dual.alpha_grad(-1.0), 0.0);
    // Entropy above target (low log-density) shrinks alpha.
    let mut d = dual.clone();
    d.update(-3.0).unwrap();
    assert!(d.alpha() < dual.alpha());
    let mut d = dual.clone();
    d.update(1.0).unwrap();
    assert!(d.alpha() > dual.alpha());
    assert!(DualTemp::new(2, 0.0, AdamConfig::default()).is_err());
}

#[test]
fn quadratic_bowl_pulls_mean_toward_optimum() {
    let mut actor = fixed_actor(0, &[-0.5, 0.1], &[-1.0, -1.0]);
    let critic = Bowl { center: array![0.6, 0.6] };
    let mut dual = DualTemp::new(2, 1e-12, AdamConfig::default()).unwrap();
    dual.log_alpha = f64::NEG_INFINITY;
    let n = 64;
    let s = Array2::zeros((n, 0));
    let a_data = Array2::zeros((n, 2));
    let out = actor_loss(&actor, &critic, &dual, s.view(), a_data.view(), &mut seeded(2)).unwrap();
    let before = actor.mean_log_std(s.view(), a_data.view()).unwrap().0.row(0).to_owned();
    let mut g = out.grads.clone();
    g.scale(-0.05);
    let mut params = actor.net_mut().params_mut();
    for (p, gs) in params.iter_mut().zip(g.slices()) {
        for (x, y) in p.iter_mut().zip(gs) {
            *x += y;
        }
    }
    drop(params);
    let after = actor.mean_log_std(s.view(), a_data.view()).unwrap().0.row(0).to_owned();
    let dist = |m: &Array1<f64>| (m - &critic.center).map(|v| v * v).sum().sqrt();
    assert!(dist(&after) < dist(&before));
}

#[test]
fn actor_gradient_matches_finite_differences() {
    let mut rng = seeded(3);
    let actor = ExpansionActor::mlp(2, 2, &[8], Activation::Tanh, &mut rng).unwrap();
    let critic = Bowl { center: array![0.2, -0.3] };
    let dual = DualTemp::new(2, 0.4, AdamConfig::default()).unwrap();
    let s = randn(&mut rng, 5, 2);
    let a_data = randn(&mut rng, 5, 2);
    let z = randn(&mut rng, 5, 2);
    let out = actor_loss_with(&actor, &critic, &dual, s.view(), a_data.view(), z.view()).unwrap();
    let analytic = out.grads.slices().concat();
    let h = 1e-6;
    let mut idx = 0;
    for k in 0..actor.net().params().len() {
        for j in 0..actor.net().params()[k].len() {
            let mut p = actor.clone();
            p.net_mut().params_mut()[k][j] += h;
            let mut m = actor.clone();
            m.net_mut().params_mut()[k][j] -= h;
            let lp = actor_loss_with(&p, &critic, &dual, s.view(), a_data.view(), z.view()).unwrap().loss;
            let lm = actor_loss_with(&m, &critic, &dual, s.view(), a_data.view(), z.view()).unwrap().loss;
            let err = crate::diffcore::gradcheck::rel_err(analytic[idx], (lp - lm) / (2.0 * h));
            assert!(err < 1e-4, "param {k}/{j}: {err}");
            idx += 1;
        }
    }
}

#[test]
fn saturated_log_std_gets_no_gradient() {
    let actor = fixed_actor(0, &[0.0], &[5.0]);
    let critic = Bowl { center: array![0.5] };
    let dual = DualTemp::new(1, 1.0, AdamConfig::default()).unwrap();
    let out = actor_loss(&actor, &critic, &dual, Array2::zeros((8, 0)).view(), Array2::zeros((8, 1)).view(), &mut seeded(4)).unwrap();
    assert_eq!(out.grads.layers[0].bias[1], 0.0);
    assert!(out.grads.layers[0].bias[0] != 0.0);
}

#[test]
fn entropy_tuned_training_on_bowl() {
    let mut rng = seeded(5);
    let center = array![0.6, -0.4];
    let critic = Bowl { center: center.clone() };
    let mut actor = ExpansionActor::mlp(2, 2, &[32, 32], Activation::Gelu, &mut rng).unwrap();
    let cfg = AdamConfig {
        learning_rate: 1e-3,
        ..AdamConfig::default()
    };
    let mut adam = AdamState::for_net(actor.net(), cfg);
    let mut dual = DualTemp::new(2, 1.0, cfg).unwrap();
    let n = 128;
    let mut recent = Vec::new();
    for step in 0..4000 {
        let s = randn(&mut rng, n, 2);
        let a_data = randn(&mut rng, n, 2).mapv(|v| (0.3 * v).clamp(-1.0, 1.0));
        let out = actor_loss(&actor, &critic, &dual, s.view(), a_data.view(), &mut rng).unwrap();
        adam.step(actor.net_mut(), &out.grads).unwrap();
        dual.update(out.mean_log_pi).unwrap();
        assert!(dual.alpha() > 0.0);
        if step >= 3500 {
            recent.push(out.mean_log_pi);
        }
    }
    let s = randn(&mut rng, 256, 2);
    let a_data = randn(&mut rng, 256, 2).mapv(|v| (0.3 * v).clamp(-1.0, 1.0));
    let (mu, _) = actor.mean_log_std(s.view(), a_data.view()).unwrap();
    let err = (mu.mean_axis(Axis(0)).unwrap() - &center).map(|v| v * v).sum().sqrt();
    assert!(err < 0.05, "mean error {err}");
    let mean_lp = recent.iter().sum::<f64>() / recent.len() as f64;
    assert!((mean_lp + 1.0).abs() < 0.5, "mean log pi {mean_lp}");
}

#[test]
fn make_target_clips() {
    let actor = fixed_actor(0, &[1.5, -0.2], &[0.0, 0.0]);
    let s = Array2::zeros((1, 0));
    let a = array![[0.0, 0.0]];
    let t = make_target::<crate::rng::MeamRng>(&actor, s.view(), a.view(), None).unwrap();
    assert_eq!(t, array![[1.0, -0.2]]);
    let inner = fixed_actor(0, &[0.3, -0.2], &[0.0, 0.0]);
    let t = make_target::<crate::rng::MeamRng>(&inner, s.view(), a.view(), None).unwrap();
    assert_eq!(t, array![[0.3, -0.2]]);
    let wide = fixed_actor(0, &[0.0, 0.0], &[2.0, 2.0]);
    let mut rng = seeded(6);
    for _ in 0..50 {
        let t = make_target(&wide, s.view(), a.view(), Some(&mut rng)).unwrap();
        assert!(t.iter().all(|v| (-1.0..=1.0).contains(v)));
    }
}

#[test]
fn mix_batch_endpoints_and_rate() {
    let actor = fixed_actor(1, &[0.9, 0.9], &[0.0, 0.0]);
    let mut rng = seeded(7);
    let n = 100_000;
    let s = randn(&mut rng, n, 1);
    let a = randn(&mut rng, n, 2).mapv(|v| v.clamp(-1.0, 1.0));
    let m0 = mix_batch(s.view(), a.view(), &actor, 0.0, false, &mut seeded(8)).unwrap();
    assert_eq!(m0.actions, a);
    assert!(m0.replaced.iter().all(|r| !r));
    let m1 = mix_batch(s.view(), a.view(), &actor, 1.0, false, &mut seeded(8)).unwrap();
    assert!(m1.actions.rows().into_iter().all(|r| r[0] == 0.9 && r[1] == 0.9));
    let m = mix_batch(s.view(), a.view(), &actor, 0.2, false, &mut seeded(9)).unwrap();
    assert!((m.replaced_fraction() - 0.2).abs() < 0.004, "fraction {}", m.replaced_fraction());
    for (i, r) in m.replaced.iter().enumerate() {
        if *r {
            assert_eq!(m.actions.row(i), array![0.9, 0.9]);
        } else {
            assert_eq!(m.actions.row(i), a.row(i));
        }
    }
    assert!(mix_batch(s.view(), a.view(), &actor, 1.5, false, &mut seeded(9)).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn targets_stay_in_bounds(seed in 0u64..10_000, scale in 0.1f64..20.0) {
        let mut rng = seeded(seed);
        let mut actor = ExpansionActor::mlp(2, 2, &[8], Activation::Gelu, &mut rng).unwrap();
        for p in actor.net_mut().params_mut() {
            for v in p.iter_mut() {
                *v *= scale;
            }
        }
        let s = randn(&mut rng, 16, 2);
        let a = randn(&mut rng, 16, 2);
        let t = make_target::<crate::rng::MeamRng>(&actor, s.view(), a.view(), None).unwrap();
        prop_assert!(t.iter().all(|v| (-1.0..=1.0).contains(v)));
        let t = make_target(&actor, s.view(), a.view(), Some(&mut rng)).unwrap();
        prop_assert!(t.iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn alpha_stays_positive(grads in proptest::collection::vec(-50.0f64..50.0, 1..200)) {
        let mut dual = DualTemp::new(3, 0.5, AdamConfig { learning_rate: 0.1, ..AdamConfig::default() }).unwrap();
        for g in grads {
            dual.update(g).unwrap();
            prop_assert!(dual.alpha() > 0.0);
        }
    }
}

#[test]
fn log_std_stays_in_range_and_recovers() {
    assert_eq!(squash_log_std(-60.0), LOG_STD_MIN);
    assert_eq!(squash_log_std(60.0), LOG_STD_MAX);
    assert!((squash_log_std(0.0) - (LOG_STD_MIN + LOG_STD_MAX) / 2.0).abs() < 1e-15);
    // Near the upper bound the gradient is small but not zero, so a falling
    // temperature can pull the spread back down.
    let actor = fixed_actor(0, &[0.0], &[1.9]);
    let critic = Bowl { center: array![0.0] };
    let dual = DualTemp::new(1, 1e-6, AdamConfig::default()).unwrap();
    let out = actor_loss(&actor, &critic, &dual, Array2::zeros((64, 0)).view(), Array2::zeros((64, 1)).view(), &mut seeded(2)).unwrap();
    assert!(out.grads.layers[0].bias[1] > 0.0);
}
