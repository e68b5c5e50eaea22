use super::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NadamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for NadamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-7,
        }
    }
}

/// Nesterov-accelerated Adam.
///
/// With bias-corrected moments `m̂`, `v̂` the step is
/// `θ ← θ − lr·(β1·m̂ + (1−β1)·g/(1−β1ᵗ)) / (√v̂ + ε)`.
#[derive(Debug, Clone)]
pub struct Nadam<F> {
    pub config: NadamConfig,
    m: Vec<Vec<F>>,
    v: Vec<Vec<F>>,
    t: u64,
}

impl<F: Real> Nadam<F> {
    pub fn new(config: NadamConfig) -> Self {
        Self {
            config,
            m: Vec::new(),
            v: Vec::new(),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: Vec<&mut [F]>, grads: &[Vec<F>]) {
        assert_eq!(params.len(), grads.len(), "one gradient per parameter tensor");
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| vec![F::zero(); g.len()]).collect();
            self.v = self.m.clone();
        }
        self.t += 1;
        let c = self.config;
        let t = self.t as i32;
        let b1 = F::from_f64_lossy(c.beta1);
        let b2 = F::from_f64_lossy(c.beta2);
        let one = F::one();
        let bias1 = F::from_f64_lossy(1.0 - c.beta1.powi(t));
        let bias2 = F::from_f64_lossy(1.0 - c.beta2.powi(t));
        let lr = F::from_f64_lossy(c.lr);
        let eps = F::from_f64_lossy(c.eps);
        for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = b1 * m[i] + (one - b1) * gi;
                v[i] = b2 * v[i] + (one - b2) * gi * gi;
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                let nesterov = b1 * m_hat + (one - b1) * gi / bias1;
                p[i] -= lr * nesterov / (v_hat.sqrt() + eps);
            }
        }
    }
}
