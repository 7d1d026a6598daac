use serde::{Deserialize, Serialize};

use crate::cells::CellFlavor;

/// Shape of the encoder-decoder stack.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StackConfig {
    pub num_layers: usize,
    pub hidden_channels: usize,
    pub kernel_size: usize,
    pub input_channels: usize,
    pub in_len: usize,
    pub out_len: usize,
    pub flavor: CellFlavor,
    /// Width of the additive attention's hidden layer.
    pub attention_dim: usize,
}

impl Default for StackConfig {
    fn default() -> Self {
        StackConfig {
            num_layers: 2,
            hidden_channels: 16,
            kernel_size: 3,
            input_channels: 3,
            in_len: 12,
            out_len: 3,
            flavor: CellFlavor::Cascaded,
            attention_dim: 16,
        }
    }
}

impl StackConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.num_layers == 0 {
            v.push("model.num_layers must be >= 1".into());
        }
        if self.hidden_channels == 0 {
            v.push("model.hidden_channels must be >= 1".into());
        }
        if self.kernel_size % 2 == 0 {
            v.push(format!("model.kernel_size must be odd, got {}", self.kernel_size));
        }
        if self.input_channels == 0 {
            v.push("model.input_channels must be >= 1".into());
        }
        if self.in_len == 0 {
            v.push("model.in_len must be >= 1".into());
        }
        if self.out_len == 0 {
            v.push("model.out_len must be >= 1".into());
        }
        if self.attention_dim == 0 {
            v.push("model.attention_dim must be >= 1".into());
        }
        v
    }
}
