//! Small shared building blocks for models on the tape.

use crate::error::Result;
use crate::tape::{NodeId, Tape};
use crate::tensor::Tensor;

/// Split an augmented (rows x (cols+1)) matrix node into its weight part
/// (rows x cols) and bias row (1 x rows).
pub fn aug_views(tape: &mut Tape, aug: NodeId) -> Result<(NodeId, NodeId)> {
    let shape = tape.value(aug).shape().to_vec();
    let (rows, width) = (shape[0], shape[1]);
    let w = tape.slice(aug, 1, 0, width - 1)?;
    let b = tape.slice(aug, 1, width - 1, 1)?;
    let b = tape.reshape(b, vec![1, rows])?;
    Ok((w, b))
}

/// x (n x cols) through an augmented matrix: x W^T + b.
pub fn linear(tape: &mut Tape, x: NodeId, aug: NodeId) -> Result<NodeId> {
    let (w, b) = aug_views(tape, aug)?;
    let y = tape.matmul_nt(x, w)?;
    tape.add_row(y, b)
}

/// Sinusoidal encoding of a scalar time: `[sin(w_j t), cos(w_j t)]` for
/// `count/2` frequencies with periods `2*scale / j`.
pub fn time_features(t: f64, count: usize, scale: f64) -> Tensor {
    let pairs = count / 2;
    Tensor::from_fn(vec![1, count], |i| {
        let j = (i / 2 + 1) as f64;
        let angle = std::f64::consts::PI * j * t / scale;
        if i % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}

/// Broadcast a (1 x c) row to (rows x c) on the tape via an outer product
/// with a ones column; keeps the engine free of extra broadcast ops.
pub fn tile_row(tape: &mut Tape, row: NodeId, rows: usize) -> Result<NodeId> {
    let ones = tape.leaf(Tensor::full(vec![rows, 1], 1.0));
    tape.matmul(ones, row)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_applies_weights_and_bias() {
        let mut tape = Tape::new();
        // 2 outputs, 1 input: y = [2x + 1, -x]
        let aug = tape.leaf(Tensor::from_vec(vec![2, 2], vec![2.0, 1.0, -1.0, 0.0]).unwrap());
        let x = tape.leaf(Tensor::from_vec(vec![1, 1], vec![3.0]).unwrap());
        let y = linear(&mut tape, x, aug).unwrap();
        assert_eq!(tape.value(y).data(), &[7.0, -3.0]);
    }

    #[test]
    fn time_features_bounded_and_deterministic() {
        let a = time_features(3.7, 8, 10.0);
        let b = time_features(3.7, 8, 10.0);
        assert_eq!(a, b);
        assert!(a.data().iter().all(|v| v.abs() <= 1.0));
        assert_eq!(a.numel(), 8);
    }

    #[test]
    fn tile_row_repeats() {
        let mut tape = Tape::new();
        let row = tape.leaf(Tensor::from_vec(vec![1, 2], vec![5.0, -1.0]).unwrap());
        let tiled = tile_row(&mut tape, row, 3).unwrap();
        assert_eq!(tape.value(tiled).shape(), &[3, 2]);
        assert_eq!(tape.value(tiled).row(2), &[5.0, -1.0]);
    }
}
