use crate::network::Network;

/// Adaptive-moment gradient descent.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(net: &Network, learning_rate: f64, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        Self {
            learning_rate,
            beta1,
            beta2,
            epsilon,
            step: 0,
            m: net.zero_gradients(),
            v: net.zero_gradients(),
        }
    }

    pub fn steps_taken(&self) -> i32 {
        self.step
    }

    /// Applies one update from gradients in parameter declaration order.
    pub fn step(&mut self, net: &mut Network, grads: &[Vec<f64>]) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for (((param, g), m), v) in net
            .params_mut()
            .into_iter()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for i in 0..param.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let update = self.learning_rate * (m[i] / c1) / ((v[i] / c2).sqrt() + self.epsilon);
                param[i] -= update;
            }
        }
    }
}
