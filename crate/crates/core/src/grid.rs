use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::transforms::unravel;

/// Tensor-product midpoint rule on `[0, pi]^n`.
///
/// Nodes along an axis with `N` points are `x_i = (2i+1) pi / (2N)`; every
/// node carries the cell weight `pi^n / prod N_a`. Flat node order is
/// row-major with axis 0 varying slowest.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MidpointGrid {
    counts: Vec<usize>,
}

impl MidpointGrid {
    pub fn new(counts: Vec<usize>) -> Result<Self> {
        if !(2..=3).contains(&counts.len()) {
            return Err(Error::InvalidSize(format!(
                "grid must be 2D or 3D, got {} axes",
                counts.len()
            )));
        }
        if counts.contains(&0) {
            return Err(Error::InvalidSize(format!(
                "grid point counts must be positive: {counts:?}"
            )));
        }
        Ok(Self { counts })
    }

    pub fn uniform(dim: usize, n: usize) -> Result<Self> {
        Self::new(vec![n; dim])
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn weight(&self) -> f64 {
        PI.powi(self.dim() as i32) / self.len() as f64
    }

    pub fn nodes(&self, axis: usize) -> Vec<f64> {
        let n = self.counts[axis];
        (0..n)
            .map(|i| (2 * i + 1) as f64 * PI / (2 * n) as f64)
            .collect()
    }

    /// All nodes as a flat `len * dim` array.
    pub fn points(&self) -> Vec<f64> {
        let dim = self.dim();
        let axes: Vec<Vec<f64>> = (0..dim).map(|a| self.nodes(a)).collect();
        let mut idx = vec![0; dim];
        let mut out = Vec::with_capacity(self.len() * dim);
        for flat in 0..self.len() {
            unravel(flat, &self.counts, &mut idx);
            out.extend(idx.iter().enumerate().map(|(a, &i)| axes[a][i]));
        }
        out
    }

    /// Midpoint quadrature of a function of position.
    pub fn integrate(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        let dim = self.dim();
        let pts = self.points();
        pts.chunks(dim).map(f).sum::<f64>() * self.weight()
    }
}
