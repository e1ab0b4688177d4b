//! Adam optimizer over flat parameter slices.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> AdamConfig {
        AdamConfig { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moment estimates for one parameter group.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, n: usize) -> Adam {
        Adam { config, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    /// One update with learning rate `lr` (overrides the configured rate,
    /// for schedules).
    pub fn step_with_lr(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let AdamConfig { beta1, beta2, eps, .. } = self.config;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + eps);
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        let lr = self.config.lr;
        self.step_with_lr(params, grads, lr);
    }
}

/// Checks that the mean loss of each block of `window` iterations is no
/// larger than the previous block's mean plus `abs_tol + rel_tol * prev`.
/// A trailing partial block is ignored.
pub fn windows_non_increasing(losses: &[f64], window: usize, abs_tol: f64, rel_tol: f64) -> bool {
    if window == 0 {
        return true;
    }
    let means: Vec<f64> = losses.chunks_exact(window).map(|c| c.iter().sum::<f64>() / window as f64).collect();
    means.windows(2).all(|m| m[1] <= m[0] + abs_tol + rel_tol * m[0].abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_quadratic() {
        let mut p = vec![3.0, -2.0];
        let mut opt = Adam::new(AdamConfig::with_lr(0.05), 2);
        for _ in 0..2000 {
            let g: Vec<f64> = p.iter().map(|x| 2.0 * (x - 1.0)).collect();
            opt.step(&mut p, &g);
        }
        assert!(p.iter().all(|x| (x - 1.0).abs() < 1e-3), "{p:?}");
    }

    #[test]
    fn first_step_is_lr_sized() {
        let mut p = vec![0.0];
        let mut opt = Adam::new(AdamConfig::with_lr(0.01), 1);
        opt.step(&mut p, &[123.0]);
        assert!((p[0] + 0.01).abs() < 1e-9);
    }

    #[test]
    fn window_trend() {
        let falling: Vec<f64> = (0..100).map(|i| 1.0 / (1.0 + i as f64)).collect();
        assert!(windows_non_increasing(&falling, 10, 0.0, 0.0));
        let mut bumpy = falling.clone();
        bumpy[55] = 5.0;
        assert!(!windows_non_increasing(&bumpy, 10, 1e-6, 0.0));
        assert!(windows_non_increasing(&bumpy, 10, 1.0, 0.0));
    }
}
