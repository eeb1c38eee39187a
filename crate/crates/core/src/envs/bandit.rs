use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::dataset::Dataset;
use super::{clip_action, Env, Step};
use crate::error::{MeamError, Result};
use crate::rng::seeded;

/// Contextual bandit whose best actions lie outside the data support.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ZeroSupportBandit;

impl ZeroSupportBandit {
    pub const BEHAVIOR_CENTER: [f64; 2] = [-0.5, -0.5];
    pub const BEHAVIOR_RADIUS: f64 = 0.25;
    pub const OPTIMAL_CENTER: [f64; 2] = [0.6, 0.6];
    pub const OPTIMAL_RADIUS: f64 = 0.15;

    fn dist(a: &[f64], c: [f64; 2]) -> f64 {
        ((a[0] - c[0]).powi(2) + (a[1] - c[1]).powi(2)).sqrt()
    }

    pub fn in_optimal(a: &[f64]) -> bool {
        Self::dist(a, Self::OPTIMAL_CENTER) <= Self::OPTIMAL_RADIUS
    }

    pub fn in_behavior(a: &[f64]) -> bool {
        Self::dist(a, Self::BEHAVIOR_CENTER) <= Self::BEHAVIOR_RADIUS
    }

    pub fn reward(a: &[f64]) -> f64 {
        if Self::in_optimal(a) {
            1.0
        } else if Self::in_behavior(a) {
            0.3
        } else {
            0.0
        }
    }
}

impl Env for ZeroSupportBandit {
    fn name(&self) -> &'static str {
        "bandit-zs"
    }
    fn state_dim(&self) -> usize {
        2
    }
    fn action_dim(&self) -> usize {
        2
    }
    fn horizon(&self) -> usize {
        1
    }
    fn reset(&self, rng: &mut dyn rand::RngCore) -> Vec<f64> {
        vec![rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)]
    }
    fn step(&self, state: &[f64], action: &[f64]) -> Step {
        let a = clip_action(action);
        Step {
            next_state: state.to_vec(),
            reward: Self::reward(&a),
            done: true,
            success: Self::in_optimal(&a),
        }
    }
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        return Err(MeamError::Usage("dataset size must be at least 1".into()));
    }
    Ok(())
}

/// Actions uniform in the behavior ball. The radius is shrunk by 1e-6
/// relative so that rounding to the on-disk precision stays inside the ball.
pub fn gen_bandit_dataset(n: usize, seed: u64) -> Result<Dataset> {
    check_n(n)?;
    let env = ZeroSupportBandit;
    let mut rng = seeded(seed);
    let mut ds = Dataset::empty(2, 2, seed);
    let c = ZeroSupportBandit::BEHAVIOR_CENTER;
    let r_max = ZeroSupportBandit::BEHAVIOR_RADIUS * (1.0 - 1e-6);
    for _ in 0..n {
        let s = env.reset(&mut rng);
        let rad = r_max * rng.gen::<f64>().sqrt();
        let ang = rng.gen_range(0.0..2.0 * PI);
        let a = [c[0] + rad * ang.cos(), c[1] + rad * ang.sin()];
        let a = [super::dataset::quantize(a[0]), super::dataset::quantize(a[1])];
        let st = env.step(&s, &a);
        ds.push(&s, &a, st.reward, &st.next_state, st.done)?;
    }
    ds.quantize();
    Ok(ds)
}

/// One-dimensional bandit with three equally rewarded action modes that the
/// data visits with unequal frequencies.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ThreeModeBandit;

impl ThreeModeBandit {
    pub const CENTERS: [f64; 3] = [-0.6, 0.0, 0.6];
    pub const RADIUS: f64 = 0.1;
    /// Data frequencies of the three modes.
    pub const WEIGHTS: [f64; 3] = [0.7, 0.2, 0.1];
    /// Half-width of the uniform data spread around each center.
    pub const SPREAD: f64 = 0.05;

    /// Index of the mode containing `a`, if any.
    pub fn mode_of(a: f64) -> Option<usize> {
        Self::CENTERS.iter().position(|c| (a - c).abs() <= Self::RADIUS)
    }
}

impl Env for ThreeModeBandit {
    fn name(&self) -> &'static str {
        "bandit-3mode"
    }
    fn state_dim(&self) -> usize {
        1
    }
    fn action_dim(&self) -> usize {
        1
    }
    fn horizon(&self) -> usize {
        1
    }
    fn reset(&self, rng: &mut dyn rand::RngCore) -> Vec<f64> {
        vec![rng.gen_range(-1.0..=1.0)]
    }
    fn step(&self, state: &[f64], action: &[f64]) -> Step {
        let a = clip_action(action);
        let hit = Self::mode_of(a[0]).is_some();
        Step {
            next_state: state.to_vec(),
            reward: if hit { 1.0 } else { 0.0 },
            done: true,
            success: hit,
        }
    }
}

pub fn gen_three_mode_dataset(n: usize, seed: u64) -> Result<Dataset> {
    check_n(n)?;
    let env = ThreeModeBandit;
    let mut rng = seeded(seed);
    let mut ds = Dataset::empty(1, 1, seed);
    for _ in 0..n {
        let s = env.reset(&mut rng);
        let u: f64 = rng.gen();
        let k = if u < ThreeModeBandit::WEIGHTS[0] {
            0
        } else if u < ThreeModeBandit::WEIGHTS[0] + ThreeModeBandit::WEIGHTS[1] {
            1
        } else {
            2
        };
        let a = [ThreeModeBandit::CENTERS[k] + rng.gen_range(-ThreeModeBandit::SPREAD..=ThreeModeBandit::SPREAD)];
        let st = env.step(&s, &a);
        ds.push(&s, &a, st.reward, &st.next_state, st.done)?;
    }
    ds.quantize();
    Ok(ds)
}

/// Two-mode 1D Gaussian mixture used as a pure density-fitting target. The
/// state is a constant zero and every reward is zero.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Gmm2Mode;

impl Gmm2Mode {
    pub const MEANS: [f64; 2] = [-0.6, 0.6];
    pub const STD: f64 = 0.1;

    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> f64 {
        let m = if rng.gen::<bool>() { Self::MEANS[1] } else { Self::MEANS[0] };
        m + Normal::new(0.0, Self::STD).expect("valid std").sample(rng)
    }

    pub fn dataset(n: usize, seed: u64) -> Result<Dataset> {
        check_n(n)?;
        let mut rng = seeded(seed);
        let mut ds = Dataset::empty(1, 1, seed);
        for _ in 0..n {
            ds.push(&[0.0], &[Self::sample(&mut rng)], 0.0, &[0.0], true)?;
        }
        ds.quantize();
        Ok(ds)
    }
}

impl Env for Gmm2Mode {
    fn name(&self) -> &'static str {
        "gmm-2mode"
    }
    fn state_dim(&self) -> usize {
        1
    }
    fn action_dim(&self) -> usize {
        1
    }
    fn horizon(&self) -> usize {
        1
    }
    fn reset(&self, _rng: &mut dyn rand::RngCore) -> Vec<f64> {
        vec![0.0]
    }
    fn step(&self, state: &[f64], _action: &[f64]) -> Step {
        Step {
            next_state: state.to_vec(),
            reward: 0.0,
            done: true,
            success: false,
        }
    }
}
