use ndarray::Array2;
use proptest::prelude::*;
use rand::Rng;

use super::suite::{random_problem, reference_problem};
use super::*;
use crate::rng::{randn, seeded};

#[test]
fn densities_normalize() {
    let d = GridDensity::from_fn(201, |x| (-x * x * 3.0).exp()).unwrap();
    assert!((d.total() - 1.0).abs() < 1e-12);
    assert!(GridDensity::from_fn(11, |_| 0.0).is_err());
    assert!(GridDensity::from_unnormalized(vec![0.0, 1.0], vec![1.0, -1.0]).is_err());
    assert!(GridDensity::from_unnormalized(vec![0.0, 1.0, 3.0], vec![1.0; 3]).is_err());
}

#[test]
fn tilt_params_formulas() {
    let p = TiltParams::new(1.0, 1.0, 2.0).unwrap();
    assert_eq!(p.delta(), 0.5);
    assert!((1.0 / p.kappa() - 1.0 / (2.0 * 2.0)).abs() < 1e-15);
    let p = TiltParams::new(1.0, 0.01, 1.0).unwrap();
    assert!((p.delta() - 0.01 / 1.01).abs() < 1e-15);
    assert!((p.delta() - 0.009_900_990_099).abs() < 1e-12);
    assert!(TiltParams::new(0.0, 1.0, 1.0).is_err());
    assert!(TiltParams::new(1.0, -1.0, 1.0).is_err());
}

#[test]
fn constant_critic_gives_tempered_prior() {
    let (mix, _) = reference_problem(201).unwrap();
    let p = TiltParams::new(0.8, 2.0, 1.0).unwrap();
    let pi = tilted_closed_form(&mix, &vec![3.0; 201], &p).unwrap();
    let expect = GridDensity::from_unnormalized(mix.grid().to_vec(), mix.mass().iter().map(|m| m.powf(p.delta())).collect()).unwrap();
    assert!(tv_distance(&pi, &expect).unwrap() < 1e-12);
}

#[test]
fn closed_form_is_stationary() {
    let (mix, q) = reference_problem(201).unwrap();
    let p = TiltParams::new(0.8, 1.0, 0.5).unwrap();
    let closed = tilted_closed_form(&mix, &q, &p).unwrap();
    assert!(optimality_residual(&closed, &mix, &q, &p).unwrap() < 1e-10);
    let opt = FixedPointOptions {
        tol: 1e-10,
        ..FixedPointOptions::default()
    };
    let (_, iters) = md_fixed_point(&mix, &q, &p, &opt, Some(&closed)).unwrap();
    assert_eq!(iters, 0);
}

#[test]
fn fixed_point_matches_closed_form_reference() {
    let (mix, q) = reference_problem(201).unwrap();
    let p = TiltParams::new(1.0, 1.0, 1.0).unwrap();
    let (fp, _) = md_fixed_point(&mix, &q, &p, &FixedPointOptions::default(), None).unwrap();
    let closed = tilted_closed_form(&mix, &q, &p).unwrap();
    assert!(tv_distance(&fp, &closed).unwrap() < 1e-8);
    // The suggested fixed damping also works when the map coefficient is 1.
    let half = FixedPointOptions {
        damping: Some(0.5),
        ..FixedPointOptions::default()
    };
    let (fp, _) = md_fixed_point(&mix, &q, &p, &half, None).unwrap();
    assert!(tv_distance(&fp, &closed).unwrap() < 1e-8);
}

#[test]
fn uniform_prior_without_reward_stays_uniform() {
    let mix = GridDensity::uniform(101).unwrap();
    let p = TiltParams::new(0.5, 3.0, 1.0).unwrap();
    let (fp, _) = md_fixed_point(&mix, &vec![0.0; 101], &p, &FixedPointOptions::default(), None).unwrap();
    assert!(tv_distance(&fp, &mix).unwrap() < 1e-14);
}

#[test]
fn non_convergence_is_reported() {
    let (mix, q) = reference_problem(101).unwrap();
    let p = TiltParams::new(1.0, 0.1, 1.0).unwrap();
    let opt = FixedPointOptions {
        damping: Some(0.5),
        max_iters: 50,
        tol: 1e-12,
    };
    match md_fixed_point(&mix, &q, &p, &opt, None) {
        Err(crate::MeamError::Convergence { iterations, residual }) => {
            assert_eq!(iterations, 50);
            assert!(residual > 1e-12);
        }
        other => panic!("expected a convergence error, got {other:?}"),
    }
    let bad = FixedPointOptions {
        damping: Some(0.0),
        ..FixedPointOptions::default()
    };
    assert!(md_fixed_point(&mix, &q, &p, &bad, None).is_err());
}

#[test]
fn random_configurations_agree() {
    let (tv, res) = fixed_point_sweep(4, 9, 201).unwrap();
    assert!(tv < 1e-8, "tv {tv}");
    assert!(res < 1e-10, "residual {res}");
}

#[test]
fn flattening_grows_with_entropy_weight() {
    let (mix, _) = reference_problem(201).unwrap();
    let uni = GridDensity::uniform(201).unwrap();
    let zero = vec![0.0; 201];
    let tvs: Vec<f64> = [10.0, 1.0, 0.1]
        .iter()
        .map(|&eta| {
            let p = TiltParams::new(1.0, eta, 1.0).unwrap();
            tv_distance(&tilted_closed_form(&mix, &zero, &p).unwrap(), &uni).unwrap()
        })
        .collect();
    // eta = 10, 1, 0.1 means entropy weight 1/eta = 0.1, 1, 10.
    assert!(tvs[0] > tvs[1] && tvs[1] > tvs[2], "{tvs:?}");
}

#[test]
fn smoothed_fixed_point_is_self_consistent() {
    let (mix, q) = reference_problem(201).unwrap();
    let p = TiltParams::new(0.8, 1.0, 1.0).unwrap();
    let (pi, _) = smoothed_fixed_point(&mix, &q, &p, 0.1, &FixedPointOptions::default()).unwrap();
    assert!(smoothed_residual(&pi, &mix, &q, &p, 0.1).unwrap() < 1e-8);
    assert!((pi.total() - 1.0).abs() < 1e-12);
}

#[test]
fn small_sigma_recovers_closed_form() {
    let (mix, q) = reference_problem(801).unwrap();
    let p = TiltParams::new(1.0, 1.0, 1.0).unwrap();
    let (pi, _) = smoothed_fixed_point(&mix, &q, &p, 0.01, &FixedPointOptions::default()).unwrap();
    let closed = tilted_closed_form(&mix, &q, &p).unwrap();
    let tv = tv_distance(&pi, &closed).unwrap();
    assert!(tv < 0.05, "tv {tv}");
}

#[test]
fn large_sigma_boosts_isolated_minor_mode() {
    // A narrow, rare mode away from the main one. Smoothing spreads its mass,
    // so the inverse smoothed density rewards it more than the exact entropy.
    let mix = GridDensity::from_fn(201, |x| {
        0.9 * (-0.5 * ((x + 0.4) / 0.15).powi(2)).exp() + 0.02 * (-0.5 * ((x - 0.5) / 0.03).powi(2)).exp() + 1e-3
    })
    .unwrap();
    let q = vec![0.0; 201];
    let p = TiltParams::new(1.0, 1.0, 1.0).unwrap();
    let (smooth, _) = smoothed_fixed_point(&mix, &q, &p, 0.3, &FixedPointOptions::default()).unwrap();
    let closed = tilted_closed_form(&mix, &q, &p).unwrap();
    let minor: Vec<bool> = mix.grid().iter().map(|&x| (x - 0.5).abs() < 0.1).collect();
    assert!(smooth.mass_on(&minor) > closed.mass_on(&minor));
    assert!(closed.mass_on(&minor) > mix.mass_on(&minor));
}

#[test]
fn coarse_grid_rejected_for_smoothing() {
    let (mix, q) = reference_problem(51).unwrap();
    let p = TiltParams::new(1.0, 1.0, 1.0).unwrap();
    assert!(smoothed_fixed_point(&mix, &q, &p, 0.01, &FixedPointOptions::default()).is_err());
}

#[test]
fn smoothing_preserves_uniform() {
    let uni = GridDensity::uniform(201).unwrap();
    let s = smooth_density(&uni, 0.2).unwrap();
    assert!(tv_distance(&s, &uni).unwrap() < 1e-12);
}

#[test]
fn gradient_identity_holds() {
    let mut rng = seeded(0);
    assert!(prop1_gradient_identity(&mut rng, 1, 8, None).unwrap() < 1e-12);
    assert!(prop1_gradient_identity(&mut rng, 1000, 8, None).unwrap() < 1e-12);
    assert!(prop1_gradient_identity(&mut rng, 10, 8, Some(1.0)).unwrap() < 1e-12);
    assert!(prop1_gradient_identity(&mut rng, 0, 8, None).is_err());
}

#[test]
fn tv_examples() {
    let uni = GridDensity::uniform(2001).unwrap();
    assert_eq!(tv_distance(&uni, &uni).unwrap(), 0.0);
    let tri = GridDensity::from_fn(2001, |x| 1.0 - x.abs()).unwrap();
    assert!((tv_distance(&uni, &tri).unwrap() - 0.25).abs() < 1e-3);
    let a = GridDensity::from_fn(101, |x| if x < 0.0 { 1.0 } else { 0.0 }).unwrap();
    let b = GridDensity::from_fn(101, |x| if x > 0.0 { 1.0 } else { 0.0 }).unwrap();
    assert!((tv_distance(&a, &b).unwrap() - 1.0).abs() < 1e-15);
    assert!(tv_distance(&uni, &GridDensity::uniform(11).unwrap()).is_err());
}

#[test]
fn knn_entropy_references() {
    let mut rng = seeded(1);
    let g = randn(&mut rng, 10_000, 1);
    let hg = knn_entropy(g.view(), 3).unwrap();
    assert!((hg - 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln()).abs() < 0.05, "{hg}");
    let u = Array2::from_shape_simple_fn((10_000, 1), || rng.gen::<f64>());
    assert!(knn_entropy(u.view(), 3).unwrap().abs() < 0.05);
    let g2 = &g * 2.0;
    let shift = knn_entropy(g2.view(), 3).unwrap() - hg;
    assert!((shift - 2f64.ln()).abs() < 0.05);
    let g2d = randn(&mut rng, 3000, 2);
    let h2 = knn_entropy(g2d.view(), 3).unwrap();
    assert!((h2 - (2.0 * std::f64::consts::PI * std::f64::consts::E).ln()).abs() < 0.1, "{h2}");
    let dup = Array2::zeros((10, 1));
    assert!(knn_entropy(dup.view(), 3).unwrap().is_finite());
    assert!(knn_entropy(g.view(), 0).is_err());
}

#[test]
fn one_dimensional_fast_path_matches_brute_force() {
    let mut rng = seeded(2);
    let x = randn(&mut rng, 300, 1);
    let fast = super::kth_distances_1d(x.column(0).to_vec(), 4);
    let mut sorted = x.column(0).to_vec();
    sorted.sort_by(f64::total_cmp);
    let sorted_view = Array2::from_shape_vec((300, 1), sorted).unwrap();
    let brute = super::kth_distances(sorted_view.view(), 4);
    for (a, b) in fast.iter().zip(&brute) {
        assert!((a - b).abs() < 1e-14);
    }
}

#[test]
fn suite_passes() {
    let results = run_theory_suite(0).unwrap();
    for r in &results {
        assert!(r.passed, "{} = {} (want {})", r.name, r.value, r.condition);
    }
}

proptest! {
    #[test]
    fn delta_in_unit_interval(lambda in 1e-6f64..=1.0, eta in 1e-4f64..1e4, beta in 1e-3f64..1e3) {
        let p = TiltParams::new(lambda, eta, beta).unwrap();
        prop_assert!(p.delta() > 0.0 && p.delta() < 1.0);
        prop_assert!(p.kappa() > 0.0);
    }

    #[test]
    fn closed_form_always_stationary(seed in 0u64..500) {
        let mut rng = seeded(seed);
        let (mix, q) = random_problem(&mut rng, 101).unwrap();
        let p = TiltParams::new(rng.gen_range(0.1..1.0), rng.gen_range(0.1..10.0), rng.gen_range(0.2..5.0)).unwrap();
        let closed = tilted_closed_form(&mix, &q, &p).unwrap();
        prop_assert!(optimality_residual(&closed, &mix, &q, &p).unwrap() < 1e-9);
    }

    #[test]
    fn tv_is_bounded_and_symmetric(seed in 0u64..500) {
        let mut rng = seeded(seed);
        let (a, _) = random_problem(&mut rng, 101).unwrap();
        let (b, _) = random_problem(&mut rng, 101).unwrap();
        let ab = tv_distance(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(ab, tv_distance(&b, &a).unwrap());
    }
}
