use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction over a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(num_params: usize, config: AdamConfig) -> Self {
        Self {
            config,
            first_moment: vec![0.0; num_params],
            second_moment: vec![0.0; num_params],
            step: 0,
        }
    }

    /// Applies one update in place. On error nothing is modified.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        let n = self.first_moment.len();
        if params.len() != n || grads.len() != n {
            return Err(Error::Dimension(format!(
                "adam state holds {n} moments, got {} params and {} grads",
                params.len(),
                grads.len()
            )));
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!(
                "gradient component {i} is {}",
                grads[i]
            )));
        }

        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            eps,
        } = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);

        for i in 0..n {
            let g = grads[i];
            let m = beta1 * self.first_moment[i] + (1.0 - beta1) * g;
            let v = beta2 * self.second_moment[i] + (1.0 - beta2) * g * g;
            self.first_moment[i] = m;
            self.second_moment[i] = v;
            let m_hat = m / bc1;
            let v_hat = v / bc2;
            params[i] -= learning_rate * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut adam = AdamState::new(3, AdamConfig::default());
        let mut p = vec![1.0, -2.0, 0.5];
        adam.step(&mut p, &[0.0; 3]).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
        assert_eq!(adam.step, 1);
    }

    #[test]
    fn first_step_with_unit_gradient() {
        // -lr / (1 + eps) = -0.00099999999000000001 (exact arithmetic)
        let mut adam = AdamState::new(1, AdamConfig::default());
        let mut p = vec![0.0];
        adam.step(&mut p, &[1.0]).unwrap();
        assert!((p[0] + 0.000_999_999_99).abs() < 1e-18);
    }

    #[test]
    fn constant_gradient_moves_against_sign() {
        let mut adam = AdamState::new(2, AdamConfig::default());
        let mut p = vec![0.0, 0.0];
        for k in 1..=500 {
            adam.step(&mut p, &[2.5, -0.3]).unwrap();
            assert_eq!(adam.step, k);
        }
        assert!(p[0] < -0.4 && p[1] > 0.4, "{p:?}");
    }

    #[test]
    fn non_finite_gradient_is_rejected_with_index() {
        let mut adam = AdamState::new(3, AdamConfig::default());
        let mut p = vec![0.0; 3];
        let err = adam.step(&mut p, &[0.0, f64::NAN, 1.0]).unwrap_err();
        assert!(err.to_string().contains("component 1"), "{err}");
        assert_eq!(adam.step, 0);
        assert_eq!(p, vec![0.0; 3]);
    }

    #[test]
    fn shape_mismatch() {
        let mut adam = AdamState::new(2, AdamConfig::default());
        assert!(adam.step(&mut [0.0; 3], &[0.0; 3]).is_err());
    }
}
