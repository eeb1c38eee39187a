use std::f64::consts::PI;

use ndarray::Array2;
use rand::Rng;

use super::*;
use crate::rng::seeded;

#[test]
fn bandit_dataset_stays_in_behavior_ball() {
    let ds = gen_bandit_dataset(1000, 3).unwrap();
    assert_eq!(ds.len(), 1000);
    let mut min_opt = f64::INFINITY;
    for row in ds.actions.outer_iter() {
        let a = [row[0], row[1]];
        let db = ((a[0] + 0.5).powi(2) + (a[1] + 0.5).powi(2)).sqrt();
        assert!(db <= 0.25, "{db}");
        min_opt = min_opt.min(((a[0] - 0.6).powi(2) + (a[1] - 0.6).powi(2)).sqrt());
        assert!(!ZeroSupportBandit::in_optimal(&a));
    }
    assert!(min_opt > 0.15);
    assert!(ds.rewards.iter().all(|&r| r == 0.3));
    assert!(ds.dones.iter().all(|&d| d == 1.0));
}

#[test]
fn bandit_balls_are_disjoint() {
    let c = (ZeroSupportBandit::OPTIMAL_CENTER[0] - ZeroSupportBandit::BEHAVIOR_CENTER[0]).hypot(
        ZeroSupportBandit::OPTIMAL_CENTER[1] - ZeroSupportBandit::BEHAVIOR_CENTER[1],
    );
    assert!(c > ZeroSupportBandit::OPTIMAL_RADIUS + ZeroSupportBandit::BEHAVIOR_RADIUS);
}

#[test]
fn dataset_generation_is_byte_identical() {
    for name in ENV_NAMES {
        let a = gen_dataset(name, 50, 7).unwrap().to_csv();
        let b = gen_dataset(name, 50, 7).unwrap().to_csv();
        assert_eq!(a, b, "{name}");
        assert_ne!(a, gen_dataset(name, 50, 8).unwrap().to_csv(), "{name}");
    }
}

#[test]
fn csv_round_trip_is_exact() {
    for name in ENV_NAMES {
        let ds = gen_dataset(name, 40, 11).unwrap();
        let text = ds.to_csv();
        let back = Dataset::from_csv(&text).unwrap();
        assert_eq!(back, ds, "{name}");
        assert_eq!(back.to_csv(), text);
        let cols = text.lines().nth(1).unwrap().split(',').count();
        assert_eq!(cols, 2 * ds.d_s + ds.d_a + 2);
    }
}

#[test]
fn csv_layout() {
    let ds = gen_bandit_dataset(2, 5).unwrap();
    let text = ds.to_csv();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "# meam-dataset v1 d_s=2 d_a=2 rows=2 seed=5");
    assert_eq!(lines.next().unwrap(), "s0,s1,a0,a1,r,sp0,sp1,done");
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[4], "3.00000000e-1");
    assert_eq!(row[7], "1");
}

#[test]
fn csv_parser_accepts_general_floats_and_reports_errors() {
    let text = "# meam-dataset v1 d_s=1 d_a=1 rows=1 seed=0\ns0,a0,r,sp0,done\n0.5,-1,1e-3,2.,0\n";
    let ds = Dataset::from_csv(text).unwrap();
    assert_eq!(ds.actions[[0, 0]], -1.0);
    assert_eq!(ds.rewards[0], 1e-3);
    let bad_cols = "# meam-dataset v1 d_s=1 d_a=1 rows=1 seed=0\ns0,a0,r,sp0,done\n0.5,-1,0\n";
    assert!(matches!(Dataset::from_csv(bad_cols), Err(crate::MeamError::Format(m)) if m.contains("line 3")));
    let bad_rows = "# meam-dataset v1 d_s=1 d_a=1 rows=2 seed=0\ns0,a0,r,sp0,done\n0.5,-1,1,2,0\n";
    assert!(Dataset::from_csv(bad_rows).is_err());
    assert!(Dataset::from_csv("s0,a0\n").is_err());
}

#[test]
fn dataset_file_io() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("d.csv");
    let ds = gen_maze_dataset(3, 1).unwrap();
    ds.save(&p).unwrap();
    assert_eq!(Dataset::load(&p).unwrap(), ds);
}

#[test]
fn push_gather_concat() {
    let mut ds = Dataset::empty(1, 2, 0);
    ds.push(&[0.1], &[1.0, 2.0], 0.5, &[0.2], false).unwrap();
    ds.push(&[0.3], &[3.0, 4.0], -1.0, &[0.4], true).unwrap();
    assert!(ds.push(&[0.3], &[3.0], -1.0, &[0.4], true).is_err());
    let g = ds.gather(&[1, 1, 0]);
    assert_eq!(g.actions.row(0).to_vec(), vec![3.0, 4.0]);
    assert_eq!(g.dones.to_vec(), vec![1.0, 1.0, 0.0]);
    assert_eq!(ds.concat(&g).unwrap().len(), 5);
    assert!(ds.concat(&Dataset::empty(2, 2, 0)).is_err());
}

#[test]
fn maze_behavior_hits_forty_percent() {
    let rate = behavior_success_rate(1000, 2024).unwrap();
    assert!((rate - 0.40).abs() <= 0.05, "{rate}");
}

#[test]
fn maze_dataset_shape() {
    let ds = gen_maze_dataset(200, 4).unwrap();
    assert!(ds.len() <= 200 * 50);
    assert_eq!(ds.dones.iter().filter(|&&d| d == 1.0).count(), 200);
    assert!(ds.actions.iter().all(|a| (-1.0..=1.0).contains(a)));
    assert!(ds.rewards.iter().all(|&r| r == 0.0 || r == -1.0));
    // Episode lengths never exceed the horizon.
    let mut len = 0;
    for &d in ds.dones.iter() {
        len += 1;
        assert!(len <= 50);
        if d == 1.0 {
            len = 0;
        }
    }
}

#[test]
fn wall_blocks_direct_path() {
    let env = SparseMaze2D::default();
    let st = env.step(&[-0.05, 0.0, 0.6, 0.0], &[1.0, 0.0]);
    assert_eq!(&st.next_state[..2], &[-0.05, 0.0]);
    assert_eq!(st.reward, -1.0);
    let below = env.step(&[-0.05, -0.7, 0.6, 0.0], &[1.0, 0.0]);
    assert!((below.next_state[0] - 0.05).abs() < 1e-12);
    assert!(SparseMaze2D::crosses_wall([0.0, -0.7], [0.0, -0.4]));
    assert!(!SparseMaze2D::crosses_wall([0.0, -0.7], [0.05, -0.6]));
}

#[test]
fn maze_goal_is_terminal_with_zero_reward() {
    let env = SparseMaze2D::default();
    let st = env.step(&[0.52, 0.0, 0.6, 0.0], &[1.0, 0.0]);
    assert!(st.done && st.success);
    assert_eq!(st.reward, 0.0);
}

#[test]
fn oracle_bandit_policies() {
    let env = ZeroSupportBandit;
    let mut rng = seeded(1);
    let best = eval_policy(&env, |s| Ok(Array2::from_shape_fn((s.nrows(), 2), |_| 0.6)), 200, &mut rng).unwrap();
    assert_eq!(best.success_rate, 1.0);
    assert_eq!((best.ci_lo, best.ci_hi), (1.0, 1.0));
    assert_eq!(best.mean_return, 1.0);
    let beh = eval_policy(&env, |s| Ok(Array2::from_shape_fn((s.nrows(), 2), |_| -0.5)), 200, &mut rng).unwrap();
    assert_eq!(beh.success_rate, 0.0);
    assert!((beh.mean_return - 0.3).abs() < 1e-12);
}

#[test]
fn random_bandit_policy_matches_area_ratio() {
    let env = ZeroSupportBandit;
    let mut rng = seeded(2);
    let mut prng = seeded(3);
    let n = 200_000;
    let stats = eval_policy(
        &env,
        |s| Ok(Array2::from_shape_fn((s.nrows(), 2), |_| prng.gen_range(-1.0..=1.0))),
        n,
        &mut rng,
    )
    .unwrap();
    let expected = PI * 0.15f64.powi(2) / 4.0;
    // Binomial standard error at n = 2e5 is ~3e-4.
    assert!((stats.success_rate - expected).abs() < 1.2e-3, "{}", stats.success_rate);
    assert!(stats.ci_lo <= stats.success_rate && stats.success_rate <= stats.ci_hi);
}

#[test]
fn maze_scripted_detour_succeeds() {
    let env = SparseMaze2D::default();
    let mut rng = seeded(9);
    let stats = eval_policy(
        &env,
        |s| {
            Ok(Array2::from_shape_fn((s.nrows(), 2), |(i, j)| {
                let p = [s[[i, 0]], s[[i, 1]]];
                let target = if p[0] < 0.0 { [0.05, -0.7] } else { [0.6, 0.0] };
                let d = [target[0] - p[0], target[1] - p[1]];
                let n = d[0].hypot(d[1]);
                d[j] / n
            }))
        },
        50,
        &mut rng,
    )
    .unwrap();
    assert_eq!(stats.success_rate, 1.0);
    assert!(stats.mean_return > -30.0);
}

#[test]
fn bootstrap_interval_brackets_mean() {
    let vals: Vec<f64> = (0..100).map(|i| if i % 4 == 0 { 1.0 } else { 0.0 }).collect();
    let (lo, hi) = bootstrap_ci(&vals, 2000, 0.95, &mut seeded(0));
    assert!(lo < 0.25 && hi > 0.25);
    // Normal approximation: 0.25 +- 1.96 * sqrt(0.25 * 0.75 / 100) = [0.165, 0.335].
    assert!((lo - 0.165).abs() < 0.03 && (hi - 0.335).abs() < 0.03, "{lo} {hi}");
}

#[test]
fn three_mode_data_frequencies() {
    let ds = gen_three_mode_dataset(20_000, 1).unwrap();
    let mut counts = [0usize; 3];
    for &a in ds.actions.iter() {
        counts[ThreeModeBandit::mode_of(a).unwrap()] += 1;
    }
    for (c, w) in counts.iter().zip(ThreeModeBandit::WEIGHTS) {
        assert!((*c as f64 / 20_000.0 - w).abs() < 0.015);
    }
    assert!(ds.rewards.iter().all(|&r| r == 1.0));
}

#[test]
fn gmm_moments() {
    let ds = Gmm2Mode::dataset(20_000, 2).unwrap();
    let pos: Vec<f64> = ds.actions.iter().copied().filter(|&a| a > 0.0).collect();
    let frac = pos.len() as f64 / 20_000.0;
    assert!((frac - 0.5).abs() < 0.02);
    let m = pos.iter().sum::<f64>() / pos.len() as f64;
    assert!((m - 0.6).abs() < 0.01);
}

#[test]
fn unknown_env_is_config_error() {
    assert!(matches!(make_env("cartpole"), Err(crate::MeamError::Config(_))));
    assert!(gen_dataset("cartpole", 1, 0).is_err());
    assert!(gen_bandit_dataset(0, 0).is_err());
    for name in ENV_NAMES {
        assert_eq!(make_env(name).unwrap().name(), name);
    }
}

mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn maze_positions_bounded_and_wall_respected(
            x in -1.0f64..1.0, y in -1.0f64..1.0,
            ax in -3.0f64..3.0, ay in -3.0f64..3.0,
        ) {
            let env = SparseMaze2D::default();
            let st = env.step(&[x, y, 0.6, 0.0], &[ax, ay]);
            let q = [st.next_state[0], st.next_state[1]];
            prop_assert!(q.iter().all(|v| (-1.0..=1.0).contains(v)));
            prop_assert!(st.reward == 0.0 || st.reward == -1.0);
            if !SparseMaze2D::crosses_wall([x, y], [x, y]) {
                prop_assert!(q == [x, y] || !SparseMaze2D::crosses_wall([x, y], q));
            }
            prop_assert_eq!(env.step(&[x, y, 0.6, 0.0], &[ax, ay]), st);
        }

        #[test]
        fn bandit_step_is_pure(s0 in -1.0f64..1.0, a0 in -2.0f64..2.0, a1 in -2.0f64..2.0) {
            let env = ZeroSupportBandit;
            let st = env.step(&[s0, 0.0], &[a0, a1]);
            prop_assert!(st.done);
            prop_assert_eq!(st.success, st.reward == 1.0);
            prop_assert_eq!(env.step(&[s0, 0.0], &[a0, a1]), st);
        }
    }
}
