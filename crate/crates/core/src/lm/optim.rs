use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LrSchedule {
    Constant,
    /// Half-cosine decay from the base rate to zero over `total_steps`.
    Cosine { total_steps: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Global gradient-norm clip applied before the moment updates.
    pub clip_norm: Option<f64>,
    pub schedule: LrSchedule,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.99,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
            clip_norm: Some(1.0),
            schedule: LrSchedule::Constant,
        }
    }
}

impl AdamWConfig {
    pub fn lr_at(&self, global_step: usize) -> f64 {
        match self.schedule {
            LrSchedule::Constant => self.lr,
            LrSchedule::Cosine { total_steps } => {
                let t = global_step.min(total_steps) as f64 / total_steps.max(1) as f64;
                0.5 * self.lr * (1.0 + (std::f64::consts::PI * t).cos())
            }
        }
    }
}

/// Moment estimates for one optimizer run. `schedule_offset` positions
/// local step 0 on the global schedule, so fresh per-round state still
/// follows one decay curve across rounds.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub config: AdamWConfig,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step_count: usize,
    pub schedule_offset: usize,
}

impl OptimizerState {
    pub fn new(config: AdamWConfig, n_params: usize, schedule_offset: usize) -> Self {
        Self {
            config,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            step_count: 0,
            schedule_offset,
        }
    }

    pub fn current_lr(&self) -> f64 {
        self.config.lr_at(self.schedule_offset + self.step_count)
    }
}

pub(crate) fn l2_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// One AdamW update in place. `grad` is clipped in place when a clip norm
/// is configured.
pub fn adamw_step(params: &mut [f64], grad: &mut [f64], state: &mut OptimizerState) {
    assert_eq!(params.len(), grad.len(), "gradient length must match parameters");
    assert_eq!(params.len(), state.m.len(), "optimizer state length must match parameters");
    let cfg = state.config;
    if let Some(max) = cfg.clip_norm {
        let norm = l2_norm(grad);
        if norm > max {
            let s = max / norm;
            grad.iter_mut().for_each(|g| *g *= s);
        }
    }
    let lr = state.current_lr();
    state.step_count += 1;
    let t = state.step_count as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for (((w, &g), m), v) in params
        .iter_mut()
        .zip(grad.iter())
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *w -= lr * (m_hat / (v_hat.sqrt() + cfg.eps) + cfg.weight_decay * *w);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(lr: f64, wd: f64) -> AdamWConfig {
        AdamWConfig {
            lr,
            weight_decay: wd,
            ..AdamWConfig::default()
        }
    }

    #[test]
    fn zero_grad_zero_decay_is_identity() {
        let mut w = vec![0.3, -1.2, 4.0];
        let before = w.clone();
        let mut g = vec![0.0; 3];
        let mut st = OptimizerState::new(cfg(0.1, 0.0), 3, 0);
        adamw_step(&mut w, &mut g, &mut st);
        assert_eq!(w, before);
        assert_eq!(st.step_count, 1);
    }

    #[test]
    fn gradient_norm_five_scaled_by_a_fifth() {
        let mut w = vec![0.0, 0.0];
        let mut g = vec![3.0, 4.0];
        let mut st = OptimizerState::new(cfg(0.1, 0.0), 2, 0);
        adamw_step(&mut w, &mut g, &mut st);
        assert!((g[0] - 0.6).abs() < 1e-15 && (g[1] - 0.8).abs() < 1e-15);
        assert!((st.m[0] - 0.01 * 0.6).abs() < 1e-15);
        assert!((st.v[1] - 0.001 * 0.64).abs() < 1e-15);
    }

    #[test]
    fn single_scalar_step_matches_hand_computation() {
        // m = 0.01, v = 0.001; bias-corrected m_hat = 1, v_hat = 1;
        // update = -0.1 * 1 / (1 + 1e-8).
        let mut w = vec![0.0];
        let mut g = vec![1.0];
        let mut st = OptimizerState::new(cfg(0.1, 0.0), 1, 0);
        adamw_step(&mut w, &mut g, &mut st);
        assert!((st.m[0] - 0.01).abs() < 1e-15);
        assert!((st.v[0] - 0.001).abs() < 1e-15);
        let expected = -0.1 / (1.0 + 1e-8);
        assert!((w[0] - expected).abs() < 1e-15, "{}", w[0]);
    }

    #[test]
    fn decoupled_weight_decay() {
        let mut w = vec![2.0];
        let mut g = vec![0.0];
        let mut st = OptimizerState::new(cfg(0.1, 0.01), 1, 0);
        adamw_step(&mut w, &mut g, &mut st);
        assert!((w[0] - (2.0 - 0.1 * 0.01 * 2.0)).abs() < 1e-15);
    }

    #[test]
    fn cosine_schedule_endpoints() {
        let c = AdamWConfig {
            lr: 1.0,
            schedule: LrSchedule::Cosine { total_steps: 100 },
            ..AdamWConfig::default()
        };
        assert_eq!(c.lr_at(0), 1.0);
        assert!((c.lr_at(50) - 0.5).abs() < 1e-12);
        assert!(c.lr_at(100).abs() < 1e-12);
        assert!(c.lr_at(30) > c.lr_at(31));
    }
}
