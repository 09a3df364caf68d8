use super::{NnError, Param, Scalar};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment accumulators for one parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Moments<T> {
    pub first: Vec<T>,
    pub second: Vec<T>,
}

/// Adam with bias-corrected moments.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<T> {
    pub config: AdamConfig,
    step: u64,
    moments: Vec<Moments<T>>,
}

impl<T: Scalar> Adam<T> {
    /// Zeroed accumulators shaped like `params`, in order.
    pub fn new(config: AdamConfig, params: &[&Param<T>]) -> Self {
        let moments = params
            .iter()
            .map(|p| Moments {
                first: vec![T::zero(); p.len()],
                second: vec![T::zero(); p.len()],
            })
            .collect();
        Self {
            config,
            step: 0,
            moments,
        }
    }

    pub fn from_parts(config: AdamConfig, step: u64, moments: Vec<Moments<T>>) -> Self {
        Self { config, step, moments }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> &[Moments<T>] {
        &self.moments
    }

    /// Applies one update from the accumulated gradients in `params`.
    pub fn step(&mut self, params: &mut [&mut Param<T>]) -> Result<(), NnError> {
        if params.len() != self.moments.len() {
            return Err(NnError::ShapeMismatch(format!(
                "optimizer tracks {} tensors, got {}",
                self.moments.len(),
                params.len()
            )));
        }
        for (p, m) in params.iter().zip(&self.moments) {
            if p.value.len() != m.first.len() || p.grad.len() != p.value.len() {
                return Err(NnError::ShapeMismatch(format!(
                    "{}: {} values, {} grads, optimizer state {}",
                    p.name,
                    p.value.len(),
                    p.grad.len(),
                    m.first.len()
                )));
            }
        }
        self.step += 1;
        let cfg = self.config;
        let t = self.step as i32;
        let lr = T::lit(cfg.lr);
        let (b1, b2) = (T::lit(cfg.beta1), T::lit(cfg.beta2));
        let c1 = T::one() - T::lit(cfg.beta1.powi(t));
        let c2 = T::one() - T::lit(cfg.beta2.powi(t));
        let eps = T::lit(cfg.eps);
        for (p, m) in params.iter_mut().zip(&mut self.moments) {
            for i in 0..p.value.len() {
                let g = p.grad[i];
                let m1 = b1 * m.first[i] + (T::one() - b1) * g;
                let m2 = b2 * m.second[i] + (T::one() - b2) * g * g;
                m.first[i] = m1;
                m.second[i] = m2;
                let update = lr * (m1 / c1) / ((m2 / c2).sqrt() + eps);
                p.value[i] = p.value[i] - update;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = Param::<f32>::filled("w", &[3], 0.7);
        let mut opt = Adam::new(AdamConfig::default(), &[&p]);
        opt.step(&mut [&mut p]).unwrap();
        assert_eq!(p.value, vec![0.7; 3]);
        assert_eq!(opt.step_count(), 1);
    }

    #[test]
    fn single_step_hand_computed() {
        // m = 0.5*0.2 + 0.5*0.4 = 0.3; v = 0.999*0.01 + 0.001*0.16 = 0.01015
        // m_hat = 0.3/(1-0.25) = 0.4; v_hat = 0.01015/(1-0.998001) = 5.07753876...
        let cfg = AdamConfig {
            lr: 0.1,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        };
        let mut p = Param::<f64>::filled("w", &[1], 1.0);
        p.grad[0] = 0.4;
        let moments = vec![Moments {
            first: vec![0.2],
            second: vec![0.01],
        }];
        let mut opt = Adam::from_parts(cfg, 1, moments);
        opt.step(&mut [&mut p]).unwrap();
        let v_hat: f64 = 0.01015 / (1.0 - 0.999f64.powi(2));
        let want = 1.0 - 0.1 * 0.4 / (v_hat.sqrt() + 1e-8);
        assert!((p.value[0] - want).abs() < 1e-15, "{} vs {want}", p.value[0]);
        assert!((p.value[0] - 0.982248_f64).abs() < 1e-6);
    }

    #[test]
    fn shape_mismatch() {
        let p = Param::<f32>::zeros("w", &[3]);
        let mut q = Param::<f32>::zeros("q", &[4]);
        let mut opt = Adam::new(AdamConfig::default(), &[&p]);
        assert!(matches!(opt.step(&mut [&mut q]), Err(NnError::ShapeMismatch(_))));
    }
}
