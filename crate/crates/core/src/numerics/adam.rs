use serde::{Deserialize, Serialize};

use super::Real;
use crate::error::{Error, Result};

/// Adam hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }
}

/// Moment accumulators for a list of parameter buffers.
///
/// Buffer shapes are fixed by the first update; later updates must match.
#[derive(Clone, Debug)]
pub struct AdamState<T> {
    config: AdamConfig,
    step: u64,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
}

impl<T: Real> AdamState<T> {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected update, `params ← params − lr·m̂/(√v̂ + ε)`.
    pub fn step(&mut self, params: &mut [&mut [T]], grads: &[&[T]]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} parameter buffers but {} gradient buffers",
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != g.len() {
                return Err(Error::ShapeMismatch(format!(
                    "buffer {i}: {} parameters but {} gradients",
                    p.len(),
                    g.len()
                )));
            }
        }
        if self.step == 0 && self.first.is_empty() {
            self.first = grads.iter().map(|g| vec![T::zero(); g.len()]).collect();
            self.second = self.first.clone();
        } else if self.first.len() != grads.len()
            || self.first.iter().zip(grads).any(|(m, g)| m.len() != g.len())
        {
            return Err(Error::ShapeMismatch("gradients do not match optimizer state".into()));
        }

        self.step += 1;
        let b1 = T::lit(self.config.beta1);
        let b2 = T::lit(self.config.beta2);
        let one = T::one();
        let lr = T::lit(self.config.learning_rate);
        let eps = T::lit(self.config.epsilon);
        let t = self.step as i32;
        let c1 = one - b1.powi(t);
        let c2 = one - b2.powi(t);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            for (((p, &g), m), v) in p.iter_mut().zip(g.iter()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = b1 * *m + (one - b1) * g;
                *v = b2 * *v + (one - b2) * g * g;
                let mhat = *m / c1;
                let vhat = *v / c2;
                *p -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut state = AdamState::<f64>::new(AdamConfig::default());
        let mut p = vec![1.0, -2.0];
        state.step(&mut [&mut p], &[&[0.0, 0.0]]).unwrap();
        assert_eq!(p, vec![1.0, -2.0]);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut state = AdamState::<f64>::new(AdamConfig::with_learning_rate(0.1));
        let mut p = vec![0.5];
        state.step(&mut [&mut p], &[&[1.0]]).unwrap();
        // m̂ = 1, v̂ = 1 after bias correction
        assert!((p[0] - (0.5 - 0.1 / (1.0 + 1e-8))).abs() < 1e-15);
        assert!((0.5 - p[0] - 0.1).abs() < 1e-6);
    }

    #[test]
    fn updates_are_deterministic() {
        let run = || {
            let mut state = AdamState::<f64>::new(AdamConfig::with_learning_rate(0.01));
            let mut p = vec![0.1, 0.2, 0.3];
            for k in 0..5 {
                let g = [0.3 * k as f64, -1.0, 0.25];
                state.step(&mut [&mut p], &[&g]).unwrap();
            }
            p
        };
        let a = run();
        let b = run();
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut state = AdamState::<f64>::new(AdamConfig::default());
        let mut p = vec![0.0; 2];
        assert!(state.step(&mut [&mut p], &[&[1.0]]).is_err());
        state.step(&mut [&mut p], &[&[1.0, 1.0]]).unwrap();
        let mut q = vec![0.0; 3];
        assert!(state.step(&mut [&mut q], &[&[1.0, 1.0, 1.0]]).is_err());
    }
}
