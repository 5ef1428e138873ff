//! Dense probability tables over small discrete product spaces.

use crate::error::{Error, Result};

pub const MAX_TABLE_CELLS: usize = 1_000_000;

/// Normalized histogram over `[0, dims[0]) x ... x [0, dims[d-1])`,
/// row-major (last dimension fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct ProbTable {
    dims: Vec<usize>,
    probs: Vec<f64>,
}

impl ProbTable {
    pub fn new(dims: Vec<usize>, probs: Vec<f64>) -> Result<ProbTable> {
        let cells: usize = dims.iter().product();
        if cells != probs.len() {
            return Err(Error::Shape {
                op: "prob_table",
                detail: format!("dims {:?} = {} cells, got {}", dims, cells, probs.len()),
            });
        }
        Ok(ProbTable { dims, probs })
    }

    /// Check that `dims` fits in a dense table.
    pub fn check_size(dims: &[usize]) -> Result<usize> {
        let mut cells: usize = 1;
        for &d in dims {
            cells = cells.saturating_mul(d);
        }
        if cells > MAX_TABLE_CELLS {
            return Err(Error::Config(format!(
                "state space {:?} has {cells} cells (> {MAX_TABLE_CELLS}); use sample-based metrics"
            , dims)));
        }
        Ok(cells)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn cells(&self) -> usize {
        self.probs.len()
    }

    pub fn flat_index(&self, state: &[usize]) -> usize {
        debug_assert_eq!(state.len(), self.dims.len());
        let mut idx = 0;
        for (&s, &d) in state.iter().zip(&self.dims) {
            debug_assert!(s < d);
            idx = idx * d + s;
        }
        idx
    }

    pub fn prob(&self, state: &[usize]) -> f64 {
        self.probs[self.flat_index(state)]
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Error if mass deviates from 1 by more than `tol`.
    pub fn check_normalized(&self, tol: f64) -> Result<()> {
        let total = self.total();
        if (total - 1.0).abs() > tol {
            return Err(Error::Numeric(format!("table mass {total} is not 1 (tol {tol})")));
        }
        Ok(())
    }

    /// Total variation distance; both tables must share dims.
    pub fn tv_distance(&self, other: &ProbTable) -> Result<f64> {
        if self.dims != other.dims {
            return Err(Error::Shape {
                op: "tv_distance",
                detail: format!("{:?} vs {:?}", self.dims, other.dims),
            });
        }
        Ok(self.probs.iter().zip(&other.probs).map(|(&a, &b)| (a - b).abs()).sum::<f64>() / 2.0)
    }

    /// Marginal over a single coordinate.
    pub fn marginal(&self, coord: usize) -> Vec<f64> {
        let d = self.dims[coord];
        let mut out = vec![0.0; d];
        let mut state = vec![0usize; self.dims.len()];
        for (idx, &p) in self.probs.iter().enumerate() {
            // decode row-major index
            let mut rest = idx;
            for c in (0..self.dims.len()).rev() {
                state[c] = rest % self.dims[c];
                rest /= self.dims[c];
            }
            out[state[coord]] += p;
        }
        out
    }
}
