//! Bias-corrected Adam over any [`Parameterized`] model.

use crate::error::{Error, Result};
use crate::nn::Parameterized;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new<M: Parameterized>(model: &M, learning_rate: f64) -> Self {
        let shapes: Vec<usize> = model.param_slices().iter().map(|(_, s)| s.len()).collect();
        Self {
            learning_rate,
            beta1: BETA1,
            beta2: BETA2,
            epsilon: EPSILON,
            step: 0,
            first_moment: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            second_moment: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &[Vec<f64>] {
        &self.first_moment
    }

    pub fn second_moment(&self) -> &[Vec<f64>] {
        &self.second_moment
    }

    /// Applies one update in place and returns the largest absolute parameter change.
    pub fn step<M: Parameterized>(&mut self, params: &mut M, grads: &M) -> Result<f64> {
        let g_slices = grads.param_slices();
        let p_slices = params.param_slices_mut();
        if p_slices.len() != self.first_moment.len() || g_slices.len() != p_slices.len() {
            return Err(Error::invalid("adam: parameter, gradient and state tensor counts differ"));
        }
        for (((_, p), (_, g)), m) in p_slices.iter().zip(g_slices.iter()).zip(self.first_moment.iter()) {
            if p.len() != g.len() || p.len() != m.len() {
                return Err(Error::invalid("adam: tensor shapes differ"));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let mut max_update: f64 = 0.0;
        for (((_, p), (_, g)), (m, v)) in p_slices
            .into_iter()
            .zip(g_slices)
            .zip(self.first_moment.iter_mut().zip(self.second_moment.iter_mut()))
        {
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                let delta = self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
                p[i] -= delta;
                max_update = max_update.max(delta.abs());
            }
        }
        Ok(max_update)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, Clone, PartialEq)]
    struct Vector(Vec<f64>);

    impl Parameterized for Vector {
        fn param_slices(&self) -> Vec<(&'static str, &[f64])> {
            vec![("v", &self.0)]
        }
        fn param_slices_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
            vec![("v", &mut self.0)]
        }
    }

    #[test]
    fn first_step_moves_by_learning_rate_against_gradient_sign() {
        let mut p = Vector(vec![1.0, -2.0, 0.5]);
        let g = Vector(vec![3.0, -0.01, 1e3]);
        let mut adam = AdamState::new(&p, 0.01);
        let max = adam.step(&mut p, &g).unwrap();
        let expected = [1.0 - 0.01, -2.0 + 0.01, 0.5 - 0.01];
        for (a, b) in p.0.iter().zip(expected) {
            assert!((a - b).abs() < 1e-7);
        }
        assert!(max <= 0.01);
    }

    #[test]
    fn zero_gradient_keeps_params_and_decays_moments() {
        let mut p = Vector(vec![1.0]);
        let mut adam = AdamState::new(&p, 0.1);
        adam.step(&mut p, &Vector(vec![2.0])).unwrap();
        let before = p.clone();
        let (m0, v0) = (adam.first_moment()[0][0], adam.second_moment()[0][0]);
        // Zero gradient still applies the momentum term, so check with a fresh state too.
        let mut fresh = AdamState::new(&p, 0.1);
        let mut q = p.clone();
        fresh.step(&mut q, &Vector(vec![0.0])).unwrap();
        assert_eq!(q, before);
        adam.step(&mut p, &Vector(vec![0.0])).unwrap();
        assert_eq!(adam.first_moment()[0][0], 0.9 * m0);
        assert_eq!(adam.second_moment()[0][0], 0.999 * v0);
    }

    #[test]
    fn quadratic_trace_matches_hand_computation() {
        // f(x) = (x − 3)², g = 2(x − 3); scalar re-derivation of every update.
        let lr = 0.05;
        let mut p = Vector(vec![0.0]);
        let mut adam = AdamState::new(&p, lr);
        let (mut x, mut m, mut v) = (0.0f64, 0.0f64, 0.0f64);
        for t in 1..=10 {
            let g = 2.0 * (x - 3.0);
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            x -= lr * mh / (vh.sqrt() + 1e-8);
            let grad = Vector(vec![2.0 * (p.0[0] - 3.0)]);
            adam.step(&mut p, &grad).unwrap();
            assert!((p.0[0] - x).abs() < 1e-10, "step {t}");
        }
        assert_eq!(adam.step_count(), 10);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut p = Vector(vec![1.0, 2.0]);
        let mut adam = AdamState::new(&p, 0.1);
        assert!(adam.step(&mut p, &Vector(vec![1.0])).is_err());
    }
}
