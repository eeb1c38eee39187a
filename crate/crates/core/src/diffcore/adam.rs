use crate::error::{shape_err, MeamError, Result};

use super::net::{NetGrads, NetParams};

/// Adam hyperparameters plus the global gradient-norm clip threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global L2 clip threshold; `f64::INFINITY` disables clipping.
    pub clip_norm: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: 1.0,
        }
    }
}

/// Moment buffers for one parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

/// What happened during one optimizer step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamStepInfo {
    /// Global gradient norm before clipping.
    pub grad_norm: f64,
    pub clipped: bool,
}

impl AdamState {
    pub fn new(num_params: usize, config: AdamConfig) -> Self {
        Self {
            config,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            step: 0,
        }
    }

    pub fn for_net(net: &NetParams, config: AdamConfig) -> Self {
        Self::new(net.num_params(), config)
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.v
    }

    /// Applies one update to a network.
    pub fn step(&mut self, params: &mut NetParams, grads: &NetGrads) -> Result<AdamStepInfo> {
        let grad_slices = grads.slices();
        let mut param_slices = params.params_mut();
        if grad_slices.len() != param_slices.len()
            || grad_slices.iter().zip(&param_slices).any(|(g, p)| g.len() != p.len())
        {
            return Err(shape_err("adam gradients", "parameter layout", "mismatched layout"));
        }
        self.update(&mut param_slices, &grad_slices)
    }

    /// Applies one update to a flat parameter vector.
    pub fn step_flat(&mut self, params: &mut [f64], grads: &[f64]) -> Result<AdamStepInfo> {
        if params.len() != grads.len() {
            return Err(shape_err("adam gradients", params.len(), grads.len()));
        }
        self.update(&mut [params], &[grads])
    }

    fn update(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<AdamStepInfo> {
        let total: usize = grads.iter().map(|g| g.len()).sum();
        if total != self.m.len() {
            return Err(shape_err("adam moment buffers", self.m.len(), total));
        }
        let next_step = self.step + 1;
        let sq: f64 = grads.iter().flat_map(|g| g.iter()).map(|g| g * g).sum();
        if !sq.is_finite() {
            return Err(MeamError::Training {
                step: next_step,
                msg: "non-finite gradient".into(),
            });
        }
        let grad_norm = sq.sqrt();
        let cfg = self.config;
        let clipped = grad_norm > cfg.clip_norm;
        let scale = if clipped { cfg.clip_norm / grad_norm } else { 1.0 };

        self.step = next_step;
        let bc1 = 1.0 - cfg.beta1.powf(self.step as f64);
        let bc2 = 1.0 - cfg.beta2.powf(self.step as f64);
        let mut k = 0;
        for (p_slice, g_slice) in params.iter_mut().zip(grads) {
            for (p, &g) in p_slice.iter_mut().zip(g_slice.iter()) {
                let g = g * scale;
                let m = &mut self.m[k];
                let v = &mut self.v[k];
                *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
                *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.eps);
                k += 1;
            }
        }
        Ok(AdamStepInfo { grad_norm, clipped })
    }
}
