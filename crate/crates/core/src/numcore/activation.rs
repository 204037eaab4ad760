use super::Tensor;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(x),
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the input `x` and output `y = f(x)`.
    #[inline]
    pub fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
        }
    }

    pub fn forward(self, input: &Tensor) -> Result<Tensor> {
        input.check_finite("activation input")?;
        let data = input.data().iter().map(|&x| self.apply(x)).collect();
        Ok(Tensor::from_parts(input.shape().to_vec(), data))
    }

    /// Gradient with respect to the input, given the forward input and output.
    pub fn backward(self, input: &Tensor, output: &Tensor, upstream: &Tensor) -> Result<Tensor> {
        input.ensure_same_shape(output, "activation output")?;
        input.ensure_same_shape(upstream, "activation upstream gradient")?;
        let data = input
            .data()
            .iter()
            .zip(output.data())
            .zip(upstream.data())
            .map(|((&x, &y), &g)| g * self.derivative(x, y))
            .collect();
        Ok(Tensor::from_parts(input.shape().to_vec(), data))
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
