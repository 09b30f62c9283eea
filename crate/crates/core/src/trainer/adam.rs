use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Adam moments with bias correction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step_count: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            first_moment: vec![0.0; len],
            second_moment: vec![0.0; len],
            step_count: 0,
        }
    }

    /// One update `θ ← θ − α m̂ / (sqrt(v̂) + eps)`. Betas may be zero here,
    /// which gives `θ ← θ − α g / (|g| + eps)`.
    pub fn step(
        &mut self,
        theta: &mut [f64],
        grad: &[f64],
        alpha: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
    ) -> Result<()> {
        if theta.len() != self.first_moment.len() || grad.len() != theta.len() {
            return Err(Error::Dimension(format!(
                "adam state of length {} given theta {} and gradient {}",
                self.first_moment.len(),
                theta.len(),
                grad.len()
            )));
        }
        if !((0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2)) {
            return Err(Error::Domain(format!(
                "betas must lie in [0, 1), got {beta1}, {beta2}"
            )));
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for i in 0..theta.len() {
            let g = grad[i];
            let m = beta1 * self.first_moment[i] + (1.0 - beta1) * g;
            let v = beta2 * self.second_moment[i] + (1.0 - beta2) * g * g;
            self.first_moment[i] = m;
            self.second_moment[i] = v;
            theta[i] -= alpha * (m / c1) / ((v / c2).sqrt() + eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bowl_grad(x: &[f64], h: &[f64]) -> Vec<f64> {
        x.iter().zip(h).map(|(a, c)| a * c).collect()
    }

    #[test]
    fn zero_betas_normalize_each_coordinate() {
        let mut s = AdamState::new(3);
        let mut th = vec![1.0, -2.0, 0.5];
        let g = [4.0, -0.25, 0.0];
        s.step(&mut th, &g, 0.1, 0.0, 0.0, 1e-8).unwrap();
        let expect = [
            1.0 - 0.1 * 4.0 / (4.0 + 1e-8),
            -2.0 + 0.1 * 0.25 / (0.25 + 1e-8),
            0.5,
        ];
        for (a, b) in th.iter().zip(expect) {
            assert_eq!(*a, b);
        }
    }

    #[test]
    fn zero_betas_descend_a_quadratic_bowl() {
        // With β1 = β2 = 0 the step is α g / (|g| + eps): sign-like far from
        // the minimum, plain gradient descent with rate α/eps once |g| << eps.
        let h = [1.0, 3.0, 0.5, 2.0];
        let mut x = vec![2.0, -1.0, 3.0, -0.5];
        let mut s = AdamState::new(4);
        for _ in 0..5000 {
            let g = bowl_grad(&x, &h);
            s.step(&mut x, &g, 0.01, 0.0, 0.0, 0.05).unwrap();
        }
        let g = bowl_grad(&x, &h);
        assert!(crate::linalg::norm(&g) < 1e-8, "{g:?}");
    }

    #[test]
    fn standard_adam_converges_on_a_bowl() {
        let h = [1.0, 3.0, 0.5, 2.0];
        let mut x = vec![2.0, -1.0, 3.0, -0.5];
        let mut s = AdamState::new(4);
        for _ in 0..20_000 {
            let g = bowl_grad(&x, &h);
            s.step(&mut x, &g, 0.01, 0.9, 0.999, 1e-8).unwrap();
        }
        assert!(crate::linalg::norm(&bowl_grad(&x, &h)) < 1e-3);
    }

    #[test]
    fn zero_learning_rate_leaves_theta_alone() {
        let mut s = AdamState::new(2);
        let mut th = vec![0.3, -0.7];
        s.step(&mut th, &[1.0, 2.0], 0.0, 0.9, 0.999, 1e-8).unwrap();
        assert_eq!(th, vec![0.3, -0.7]);
        assert_eq!(s.step_count, 1);
    }

    #[test]
    fn first_step_has_unit_scale() {
        let mut s = AdamState::new(1);
        let mut th = vec![0.0];
        s.step(&mut th, &[123.0], 0.01, 0.9, 0.999, 1e-8).unwrap();
        assert!((th[0] + 0.01).abs() < 1e-12);
    }

    #[test]
    fn rejects_mismatched_lengths_and_bad_betas() {
        let mut s = AdamState::new(2);
        assert!(s
            .step(&mut [0.0; 3], &[0.0; 3], 0.1, 0.9, 0.9, 1e-8)
            .is_err());
        assert!(s
            .step(&mut [0.0; 2], &[0.0; 2], 0.1, 1.0, 0.9, 1e-8)
            .is_err());
    }
}
