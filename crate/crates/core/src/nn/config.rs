//! Network architecture description and the shape-chain check.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Input spatial extent (microphone count), 15 x 15.
    pub input_hw: usize,
    /// Input channels (lag axis), 24.
    pub input_channels: usize,
    pub conv_channels: [usize; 3],
    pub kernel: usize,
    pub pools: [usize; 3],
    pub fc_widths: [usize; 2],
    pub classes: usize,
    pub leaky_slope: f64,
    pub dropout_rate: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            input_hw: 15,
            input_channels: 24,
            conv_channels: [16, 16, 16],
            kernel: 3,
            pools: [2, 2, 3],
            fc_widths: [128, 128],
            classes: 72,
            leaky_slope: 0.01,
            dropout_rate: 0.5,
        }
    }
}

impl ModelConfig {
    /// Spatial extent after each pooling stage. "Same" convolutions keep the
    /// extent; each pool divides by its size (floor).
    pub fn stage_extents(&self) -> [usize; 4] {
        let mut e = [self.input_hw, 0, 0, 0];
        for s in 0..3 {
            e[s + 1] = e[s] / self.pools[s];
        }
        e
    }

    /// Validates the 15 -> 7 -> 3 -> 1 shape chain.
    pub fn validate(&self) -> Result<()> {
        if self.kernel % 2 == 0 {
            return Err(Error::BadModelConfig(
                "kernel must be odd for same padding".into(),
            ));
        }
        let e = self.stage_extents();
        for s in 0..3 {
            if e[s + 1] == 0 {
                return Err(Error::BadModelConfig(format!(
                    "stage {}: pooling {}x{} collapses a {}x{} input to zero",
                    s + 1,
                    self.pools[s],
                    self.pools[s],
                    e[s],
                    e[s]
                )));
            }
        }
        if e[3] != 1 {
            return Err(Error::BadModelConfig(format!(
                "shape chain does not reduce to 1x1 (ends at {}x{})",
                e[3], e[3]
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::BadModelConfig("dropout rate must be in [0, 1)".into()));
        }
        Ok(())
    }

    /// Learnable parameter count implied by the config (conv + dense weights
    /// and biases plus batch-norm scale/shift; running stats excluded).
    pub fn param_count(&self) -> usize {
        let k2 = self.kernel * self.kernel;
        let mut n = 0;
        let mut cin = self.input_channels;
        for &cout in &self.conv_channels {
            n += cout * cin * k2 + cout; // conv w + b
            n += 2 * cout; // bn gamma + beta
            cin = cout;
        }
        let mut width = self.conv_channels[2]; // flatten of 1x1 spatial
        for &fc in &self.fc_widths {
            n += fc * width + fc;
            width = fc;
        }
        n + self.classes * width + self.classes
    }
}
