use super::loss::mse_loss_grad;
use crate::error::Result;
use crate::network::Network;
use crate::numcore::{GradCheckable, Tensor};

/// Full-network training loss on fixed data, exposed to the gradient checker.
/// Dropout is disabled so the loss is a deterministic function of the weights.
#[derive(Debug, Clone)]
pub struct NetworkLossProbe {
    pub network: Network,
    pub input: Tensor,
    pub target: Tensor,
    pub region_start: usize,
    offsets: Vec<usize>,
}

impl NetworkLossProbe {
    pub fn new(network: Network, input: Tensor, target: Tensor, region_start: usize) -> Self {
        let mut offsets = vec![0];
        for p in network.param_views() {
            offsets.push(offsets.last().unwrap() + p.values.len());
        }
        Self {
            network,
            input,
            target,
            region_start,
            offsets,
        }
    }

    fn locate(&self, index: usize) -> (usize, usize) {
        let array = self.offsets.partition_point(|&o| o <= index) - 1;
        (array, index - self.offsets[array])
    }
}

impl GradCheckable for NetworkLossProbe {
    fn num_params(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    fn param(&self, index: usize) -> f64 {
        let (a, i) = self.locate(index);
        self.network.param_views()[a].values[i]
    }

    fn set_param(&mut self, index: usize, value: f64) {
        let (a, i) = self.locate(index);
        self.network.params_mut()[a][i] = value;
    }

    fn loss(&self) -> Result<f64> {
        let y = self.network.forward(&self.input, false, 0)?;
        mse_loss_grad(&y, &self.target, self.region_start).map(|(l, _)| l)
    }

    fn gradient(&self) -> Result<Vec<f64>> {
        let (y, cache) = self.network.forward_cached(&self.input, false, 0)?;
        let (_, dy) = mse_loss_grad(&y, &self.target, self.region_start)?;
        Ok(self.network.backward(&cache, &dy)?.flatten())
    }
}
