use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::dataset::Dataset;
use super::{clip_action, Env, Step};
use crate::error::{MeamError, Result};
use crate::rng::seeded;

/// 2D point navigation with a vertical wall between start and goal.
///
/// The wall is the segment `x = 0, y in [WALL_Y_LO, 1]`; the only way
/// through is underneath it. A move whose segment touches the wall is
/// cancelled and the agent stays put.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMaze2D {
    pub start: [f64; 2],
    /// Half-width of the uniform jitter around `start` at reset.
    pub start_jitter: f64,
    pub goal: [f64; 2],
    pub goal_radius: f64,
    pub step_size: f64,
    pub horizon: usize,
}

impl Default for SparseMaze2D {
    fn default() -> Self {
        Self {
            start: [-0.6, 0.0],
            start_jitter: 0.1,
            goal: [0.6, 0.0],
            goal_radius: 0.1,
            step_size: 0.1,
            horizon: 50,
        }
    }
}

impl SparseMaze2D {
    pub const WALL_X: f64 = 0.0;
    pub const WALL_Y_LO: f64 = -0.5;
    pub const WALL_Y_HI: f64 = 1.0;

    /// Whether the straight move from `p` to `q` touches the wall.
    pub fn crosses_wall(p: [f64; 2], q: [f64; 2]) -> bool {
        let (x0, x1) = (p[0] - Self::WALL_X, q[0] - Self::WALL_X);
        let in_span = |y: f64| (Self::WALL_Y_LO..=Self::WALL_Y_HI).contains(&y);
        if x0 == x1 {
            if x0 != 0.0 {
                return false;
            }
            let (lo, hi) = (p[1].min(q[1]), p[1].max(q[1]));
            return hi >= Self::WALL_Y_LO && lo <= Self::WALL_Y_HI;
        }
        if x0 * x1 > 0.0 {
            return false;
        }
        let frac = x0 / (x0 - x1);
        in_span(p[1] + frac * (q[1] - p[1]))
    }

    pub fn position(state: &[f64]) -> [f64; 2] {
        [state[0], state[1]]
    }

    pub fn at_goal(&self, pos: [f64; 2]) -> bool {
        ((pos[0] - self.goal[0]).powi(2) + (pos[1] - self.goal[1]).powi(2)).sqrt() <= self.goal_radius
    }
}

impl Env for SparseMaze2D {
    fn name(&self) -> &'static str {
        "maze-sparse"
    }
    fn state_dim(&self) -> usize {
        4
    }
    fn action_dim(&self) -> usize {
        2
    }
    fn horizon(&self) -> usize {
        self.horizon
    }
    fn reset(&self, rng: &mut dyn rand::RngCore) -> Vec<f64> {
        let j = self.start_jitter;
        vec![
            self.start[0] + rng.gen_range(-j..=j),
            self.start[1] + rng.gen_range(-j..=j),
            self.goal[0],
            self.goal[1],
        ]
    }
    fn step(&self, state: &[f64], action: &[f64]) -> Step {
        let a = clip_action(action);
        let p = Self::position(state);
        let cand = [
            (p[0] + self.step_size * a[0]).clamp(-1.0, 1.0),
            (p[1] + self.step_size * a[1]).clamp(-1.0, 1.0),
        ];
        let q = if Self::crosses_wall(p, cand) { p } else { cand };
        let success = self.at_goal(q);
        Step {
            next_state: vec![q[0], q[1], state[2], state[3]],
            reward: if success { 0.0 } else { -1.0 },
            done: success,
            success,
        }
    }
}

/// Route taken by the scripted behavior controller for one episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BehaviorRoute {
    /// Heads straight for the goal and stalls against the wall.
    Direct,
    /// Passes under the wall through a waypoint, then heads for the goal.
    Detour,
}

impl BehaviorRoute {
    /// Probability of the detour route.
    pub const DETOUR_PROB: f64 = 0.4;
    pub const WAYPOINT: [f64; 2] = [0.0, -0.7];
    pub const NOISE_STD: f64 = 0.3;
}

/// Rolls out one behavior episode, pushing its transitions. Returns whether
/// the goal was reached.
fn behavior_episode<R: Rng + ?Sized>(env: &SparseMaze2D, ds: &mut Dataset, rng: &mut R) -> Result<bool> {
    let route = if rng.gen::<f64>() < BehaviorRoute::DETOUR_PROB {
        BehaviorRoute::Detour
    } else {
        BehaviorRoute::Direct
    };
    let noise = Normal::new(0.0, BehaviorRoute::NOISE_STD).expect("valid std");
    let mut state = env.reset(&mut &mut *rng);
    let mut waypoint_done = route == BehaviorRoute::Direct;
    for t in 0..env.horizon {
        let p = SparseMaze2D::position(&state);
        let wp = BehaviorRoute::WAYPOINT;
        if !waypoint_done && ((p[0] - wp[0]).powi(2) + (p[1] - wp[1]).powi(2)).sqrt() <= 0.1 {
            waypoint_done = true;
        }
        let target = if waypoint_done { env.goal } else { wp };
        let d = [target[0] - p[0], target[1] - p[1]];
        let norm = (d[0] * d[0] + d[1] * d[1]).sqrt().max(1e-12);
        let a = [
            super::dataset::quantize((d[0] / norm + noise.sample(rng)).clamp(-1.0, 1.0)),
            super::dataset::quantize((d[1] / norm + noise.sample(rng)).clamp(-1.0, 1.0)),
        ];
        let st = env.step(&state, &a);
        let last = st.done || t + 1 == env.horizon;
        ds.push(&state, &a, st.reward, &st.next_state, last)?;
        if st.done {
            return Ok(true);
        }
        state = st.next_state;
    }
    Ok(false)
}

/// Episodes from a noisy waypoint-following controller. Terminal rows are
/// flagged on reaching the goal or at the horizon.
pub fn gen_maze_dataset(n_episodes: usize, seed: u64) -> Result<Dataset> {
    if n_episodes == 0 {
        return Err(MeamError::Usage("need at least one episode".into()));
    }
    let env = SparseMaze2D::default();
    let mut rng = seeded(seed);
    let mut ds = Dataset::empty(4, 2, seed);
    for _ in 0..n_episodes {
        behavior_episode(&env, &mut ds, &mut rng)?;
    }
    ds.quantize();
    Ok(ds)
}

/// Success fraction of the behavior controller over `n` episodes.
pub fn behavior_success_rate(n: usize, seed: u64) -> Result<f64> {
    let env = SparseMaze2D::default();
    let mut rng = seeded(seed);
    let mut ds = Dataset::empty(4, 2, seed);
    let mut hits = 0;
    for _ in 0..n {
        hits += behavior_episode(&env, &mut ds, &mut rng)? as usize;
    }
    Ok(hits as f64 / n as f64)
}
