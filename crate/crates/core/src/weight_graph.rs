//! Weight graph: the flat weight vector viewed as a set of neuron nodes.
//!
//! Every output neuron of every linear block becomes one node whose feature
//! is its incoming weight row concatenated with its bias (width D_in + 1;
//! bias-less layers keep a zero placeholder so the width stays uniform per
//! layer). The reorganization is a bijection: `from_graph . to_graph` is the
//! identity, bitwise.

use crate::error::{Error, Result};
use crate::layout::ParamLayout;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct WeightNode {
    pub layer: usize,
    pub row: usize,
    /// Incoming weights ++ bias, length D_in + 1.
    pub feature: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightGraph {
    pub nodes: Vec<WeightNode>,
    pub layout: ParamLayout,
}

impl WeightGraph {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Nodes of one layer as a dense (D_out x (D_in+1)) matrix.
    pub fn layer_features(&self, layer: usize) -> Tensor {
        let spec = &self.layout.layers[layer];
        let width = spec.feature_width();
        let mut data = Vec::with_capacity(spec.rows * width);
        for node in self.nodes.iter().filter(|n| n.layer == layer) {
            data.extend_from_slice(&node.feature);
        }
        Tensor::from_vec(vec![spec.rows, width], data).expect("layer rows complete")
    }
}

/// Reorganize a flat weight vector into its graph view.
pub fn to_graph(theta: &Tensor, layout: &ParamLayout) -> Result<WeightGraph> {
    if theta.numel() != layout.total_params() {
        return Err(Error::Shape {
            op: "to_graph",
            detail: format!("theta has {} params, layout wants {}", theta.numel(), layout.total_params()),
        });
    }
    let data = theta.data();
    let mut nodes = Vec::with_capacity(layout.node_count());
    let mut offset = 0;
    for (li, spec) in layout.layers.iter().enumerate() {
        let width = spec.feature_width();
        for row in 0..spec.rows {
            let feature = data[offset..offset + width].to_vec();
            offset += width;
            nodes.push(WeightNode { layer: li, row, feature });
        }
    }
    Ok(WeightGraph { nodes, layout: layout.clone() })
}

/// Exact inverse of `to_graph`.
pub fn from_graph(graph: &WeightGraph, layout: &ParamLayout) -> Result<Tensor> {
    if graph.layout != *layout {
        return Err(Error::Shape {
            op: "from_graph",
            detail: "graph layout differs from requested layout".into(),
        });
    }
    if graph.node_count() != layout.node_count() {
        return Err(Error::Shape {
            op: "from_graph",
            detail: format!("graph has {} nodes, layout wants {}", graph.node_count(), layout.node_count()),
        });
    }
    let mut data = Vec::with_capacity(layout.total_params());
    for node in &graph.nodes {
        data.extend_from_slice(&node.feature);
    }
    Tensor::from_vec(vec![layout.total_params()], data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbone::{init_weights, BackboneConfig};
    use crate::layout::LayerSpec;

    #[test]
    fn linear_layer_becomes_one_node_per_output() {
        // a 4x3 layer with bias: 4 nodes, features of length 4
        let layout = ParamLayout::new(vec![LayerSpec {
            name: "lin".into(),
            rows: 4,
            cols: 3,
            has_bias: true,
        }]);
        let theta = Tensor::from_fn(vec![16], |i| i as f64);
        let graph = to_graph(&theta, &layout).unwrap();
        assert_eq!(graph.node_count(), 4);
        assert_eq!(graph.nodes[0].feature, vec![0.0, 1.0, 2.0, 3.0]);
        assert_eq!(graph.nodes[3].feature, vec![12.0, 13.0, 14.0, 15.0]);
    }

    #[test]
    fn gru_block_node_arithmetic() {
        // fused gate block at H=8: 24 nodes of feature length 18
        let config = BackboneConfig::categorical(3, 32, 8).unwrap();
        let layout = config.layout();
        let theta = Tensor::zeros(vec![layout.total_params()]);
        let graph = to_graph(&theta, &layout).unwrap();
        let gru_nodes: Vec<_> = graph.nodes.iter().filter(|n| n.layer == 1).collect();
        assert_eq!(gru_nodes.len(), 24);
        assert!(gru_nodes.iter().all(|n| n.feature.len() == 18));
        assert_eq!(graph.node_count(), 8 + 24 + 32);
    }

    #[test]
    fn node_count_independent_of_dimension() {
        let a = BackboneConfig::categorical(2, 32, 8).unwrap().layout();
        let b = BackboneConfig::categorical(10, 32, 8).unwrap().layout();
        assert_eq!(a.node_count(), b.node_count());
    }

    #[test]
    fn roundtrip_is_bitwise_identity() {
        let config = BackboneConfig::categorical(2, 8, 4).unwrap();
        let weights = init_weights(&config, 17);
        let graph = to_graph(&weights.theta, &weights.layout).unwrap();
        let back = from_graph(&graph, &weights.layout).unwrap();
        assert_eq!(back.data(), weights.theta.data());
    }

    #[test]
    fn perturbing_one_node_changes_exactly_its_slice() {
        let config = BackboneConfig::categorical(2, 8, 4).unwrap();
        let weights = init_weights(&config, 18);
        let mut graph = to_graph(&weights.theta, &weights.layout).unwrap();
        let target = 14; // some node in the gru block
        graph.nodes[target].feature[2] += 0.5;
        let back = from_graph(&graph, &weights.layout).unwrap();
        let diffs: Vec<usize> = back
            .data()
            .iter()
            .zip(weights.theta.data())
            .enumerate()
            .filter(|(_, (a, b))| a != b)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(diffs.len(), 1);
        // the changed flat index lies inside node 14's slice
        let width = weights.layout.layers[1].feature_width();
        let node_in_layer = target - weights.layout.layers[0].rows;
        let expected = weights.layout.offset(1) + node_in_layer * width + 2;
        assert_eq!(diffs[0], expected);
    }

    #[test]
    fn zero_theta_zero_features() {
        let config = BackboneConfig::categorical(2, 8, 4).unwrap();
        let layout = config.layout();
        let graph = to_graph(&Tensor::zeros(vec![layout.total_params()]), &layout).unwrap();
        assert!(graph.nodes.iter().all(|n| n.feature.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn length_mismatch_rejected() {
        let config = BackboneConfig::categorical(2, 8, 4).unwrap();
        let layout = config.layout();
        assert!(to_graph(&Tensor::zeros(vec![3]), &layout).is_err());
    }
}
