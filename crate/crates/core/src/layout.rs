//! Parameter layout: how a flat weight vector slices into named layers.
//!
//! Each entry describes one linear block stored as an augmented row-major
//! matrix of shape `rows x (cols + 1)`: every row holds the incoming weights
//! of one output neuron followed by its bias slot. Layers without a bias
//! keep the slot as a zero placeholder so per-layer feature width is uniform.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub name: String,
    /// Output neurons (rows of the augmented matrix).
    pub rows: usize,
    /// Incoming connections per neuron, bias excluded.
    pub cols: usize,
    pub has_bias: bool,
}

impl LayerSpec {
    /// Feature width of one node: incoming weights plus the bias slot.
    pub fn feature_width(&self) -> usize {
        self.cols + 1
    }

    pub fn param_count(&self) -> usize {
        self.rows * self.feature_width()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamLayout {
    pub layers: Vec<LayerSpec>,
}

impl ParamLayout {
    pub fn new(layers: Vec<LayerSpec>) -> ParamLayout {
        ParamLayout { layers }
    }

    pub fn total_params(&self) -> usize {
        self.layers.iter().map(LayerSpec::param_count).sum()
    }

    /// Total graph nodes: one per output neuron across all layers.
    pub fn node_count(&self) -> usize {
        self.layers.iter().map(|l| l.rows).sum()
    }

    /// Flat offset of the given layer's block within the weight vector.
    pub fn offset(&self, layer: usize) -> usize {
        self.layers[..layer].iter().map(LayerSpec::param_count).sum()
    }

    pub fn find(&self, name: &str) -> Option<(usize, &LayerSpec)> {
        self.layers.iter().enumerate().find(|(_, l)| l.name == name)
    }
}
