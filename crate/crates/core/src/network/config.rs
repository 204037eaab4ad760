use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_BLOCK_WIDTHS: [usize; 9] = [512, 256, 256, 128, 128, 256, 256, 256, 512];
pub const DEFAULT_DILATIONS: [usize; 9] = [1, 2, 4, 8, 16, 32, 64, 128, 256];

/// Declarative network topology.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    /// Number of electrical signals fed to the network.
    pub input_channels: usize,
    /// Number of disaggregated loads `K`.
    pub output_loads: usize,
    #[serde(default = "default_block_widths")]
    pub block_widths: Vec<usize>,
    #[serde(default = "default_filter_length")]
    pub filter_length: usize,
    #[serde(default = "default_dilations")]
    pub dilations: Vec<usize>,
    #[serde(default = "default_dropout")]
    pub dropout_rate: f64,
    #[serde(default = "default_dense_width")]
    pub input_dense_width: usize,
    /// Input channel multiplied by the output mask.
    #[serde(default)]
    pub mask_input_channel: usize,
}

fn default_block_widths() -> Vec<usize> {
    DEFAULT_BLOCK_WIDTHS.to_vec()
}

fn default_dilations() -> Vec<usize> {
    DEFAULT_DILATIONS.to_vec()
}

fn default_filter_length() -> usize {
    2
}

fn default_dropout() -> f64 {
    0.1
}

fn default_dense_width() -> usize {
    512
}

impl NetworkConfig {
    /// Full-size topology: 512-wide input layer, nine blocks with dilations
    /// 1…256, filter length 2, 10% dropout.
    pub fn new(input_channels: usize, output_loads: usize) -> Self {
        Self {
            input_channels,
            output_loads,
            block_widths: default_block_widths(),
            filter_length: default_filter_length(),
            dilations: default_dilations(),
            dropout_rate: default_dropout(),
            input_dense_width: default_dense_width(),
            mask_input_channel: 0,
        }
    }

    /// Uniform-width stack of `blocks` blocks with dilations `1, 2, 4, …`.
    pub fn uniform(
        input_channels: usize,
        output_loads: usize,
        width: usize,
        blocks: usize,
    ) -> Self {
        Self {
            input_channels,
            output_loads,
            block_widths: vec![width; blocks],
            filter_length: 2,
            dilations: (0..blocks).map(|i| 1 << i).collect(),
            dropout_rate: default_dropout(),
            input_dense_width: width,
            mask_input_channel: 0,
        }
    }

    pub fn with_mask_channel(mut self, channel: usize) -> Self {
        self.mask_input_channel = channel;
        self
    }

    pub fn with_dropout(mut self, rate: f64) -> Self {
        self.dropout_rate = rate;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.block_widths.len() != self.dilations.len() {
            return fail(format!(
                "block_widths has {} entries but dilations has {}",
                self.block_widths.len(),
                self.dilations.len()
            ));
        }
        if self.input_channels == 0 {
            return fail("input_channels must be >= 1".into());
        }
        if self.output_loads == 0 {
            return fail("output_loads must be >= 1".into());
        }
        if self.filter_length == 0 {
            return fail("filter_length must be >= 1".into());
        }
        if self.input_dense_width == 0 {
            return fail("input_dense_width must be >= 1".into());
        }
        if let Some(i) = self.block_widths.iter().position(|&w| w == 0) {
            return fail(format!("block_widths[{i}] must be >= 1"));
        }
        if let Some(i) = self.dilations.iter().position(|&m| m == 0) {
            return fail(format!("dilations[{i}] must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return fail(format!(
                "dropout_rate must lie in [0, 1), got {}",
                self.dropout_rate
            ));
        }
        if self.mask_input_channel >= self.input_channels {
            return fail(format!(
                "mask_input_channel {} out of range for {} input channels",
                self.mask_input_channel, self.input_channels
            ));
        }
        Ok(())
    }

    /// `1 + Σ Mᵢ·(N−1)` over the block stack.
    pub fn receptive_field(&self) -> usize {
        1 + self
            .dilations
            .iter()
            .map(|m| m * self.filter_length.saturating_sub(1))
            .sum::<usize>()
    }

    /// Width of the skip concatenation feeding the mask head.
    pub fn skip_width(&self) -> usize {
        self.input_dense_width + self.block_widths.iter().sum::<usize>()
    }

    /// Trainable parameter count implied by the topology (no validation).
    pub fn parameter_count(&self) -> usize {
        let dense = |i: usize, o: usize| if o == 0 { 0 } else { i * o + o };
        let mut total = dense(self.input_channels, self.input_dense_width);
        let mut width = self.input_dense_width;
        for &w in &self.block_widths {
            // filter and gate convolutions
            total += 2 * (self.filter_length * width * w + w);
            width = w;
        }
        total + dense(self.skip_width(), self.output_loads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_receptive_field_is_512() {
        assert_eq!(NetworkConfig::new(4, 20).receptive_field(), 512);
    }

    #[test]
    fn small_receptive_fields() {
        let mut c = NetworkConfig::uniform(1, 1, 4, 1);
        assert_eq!(c.receptive_field(), 2);
        c = NetworkConfig::uniform(1, 1, 4, 4);
        assert_eq!(c.dilations, vec![1, 2, 4, 8]);
        assert_eq!(c.receptive_field(), 16);
    }

    #[test]
    fn default_parameter_count() {
        let c = NetworkConfig::new(4, 20);
        assert_eq!(c.skip_width(), 3072);
        assert_eq!(c.parameter_count(), 3_280_404);
        let rel = (3_280_404.0 - 3_250_000.0) / 3_250_000.0_f64;
        assert!(rel.abs() < 0.03);
    }

    #[test]
    fn parameter_deltas() {
        let base = NetworkConfig::new(4, 20).parameter_count();
        assert_eq!(NetworkConfig::new(5, 20).parameter_count() - base, 512);
        assert_eq!(NetworkConfig::new(4, 21).parameter_count() - base, 3073);
    }

    #[test]
    fn empty_topology_has_no_parameters() {
        let c = NetworkConfig {
            input_channels: 4,
            output_loads: 0,
            block_widths: vec![],
            filter_length: 2,
            dilations: vec![],
            dropout_rate: 0.0,
            input_dense_width: 0,
            mask_input_channel: 0,
        };
        assert_eq!(c.parameter_count(), 0);
    }

    #[test]
    fn validation_errors() {
        let mut c = NetworkConfig::new(2, 3);
        c.dilations.pop();
        assert!(c.validate().unwrap_err().to_string().contains("dilations"));
        let c = NetworkConfig::new(2, 3).with_mask_channel(2);
        assert!(c.validate().is_err());
        let c = NetworkConfig::new(2, 3).with_dropout(1.0);
        assert!(c.validate().is_err());
        assert!(NetworkConfig::new(2, 3).validate().is_ok());
    }

    #[test]
    fn toml_defaults_fill_in() {
        let c: NetworkConfig = toml::from_str("input_channels = 4\noutput_loads = 20\n").unwrap();
        assert_eq!(c, NetworkConfig::new(4, 20));
    }
}
