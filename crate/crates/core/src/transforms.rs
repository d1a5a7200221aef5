//! Orthonormal type-II discrete sine and cosine transforms.
//!
//! Applied to samples taken at the midpoint nodes `x_i = (2i+1)pi/(2N)`, the
//! rows of these matrices are (scaled) values of `sin(k x_i)` and `cos(k x_i)`,
//! which is what makes them usable as a trigonometric quadrature engine.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{Error, Result};
use crate::exec::Execution;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TransformKind {
    /// DST-II.
    Dst2,
    /// DCT-II.
    Cst2,
}

/// Dense `n x n` transform matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformMatrix {
    n: usize,
    kind: TransformKind,
    entries: Vec<f64>,
}

impl TransformMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> TransformKind {
        self.kind
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries[row * self.n + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.entries[row * self.n..(row + 1) * self.n]
    }

    /// Scaling `sqrt(2/n) * sigma_row` applied to the raw trigonometric value of `row`.
    pub fn row_scale(&self, row: usize) -> f64 {
        row_scale(self.n, self.kind, row)
    }

    /// `max |M M^T - I|`.
    pub fn orthonormality_defect(&self) -> f64 {
        let n = self.n;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let dot: f64 = self
                    .row(i)
                    .iter()
                    .zip(self.row(j))
                    .map(|(a, b)| a * b)
                    .sum();
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }
}

fn row_scale(n: usize, kind: TransformKind, row: usize) -> f64 {
    let base = (2.0 / n as f64).sqrt();
    let sigma = match kind {
        TransformKind::Dst2 if row == n - 1 => FRAC_1_SQRT_2,
        TransformKind::Cst2 if row == 0 => FRAC_1_SQRT_2,
        _ => 1.0,
    };
    base * sigma
}

/// Builds the orthonormal DST-II / DCT-II matrix of size `n`.
pub fn build_transform(n: usize, kind: TransformKind) -> Result<TransformMatrix> {
    if n == 0 {
        return Err(Error::InvalidSize(
            "transform size must be at least 1".into(),
        ));
    }
    let mut entries = Vec::with_capacity(n * n);
    for i in 0..n {
        let scale = row_scale(n, kind, i);
        for j in 0..n {
            let phase = PI / n as f64 * (j as f64 + 0.5);
            let v = match kind {
                TransformKind::Dst2 => (phase * (i + 1) as f64).sin(),
                TransformKind::Cst2 => (phase * i as f64).cos(),
            };
            entries.push(scale * v);
        }
    }
    Ok(TransformMatrix { n, kind, entries })
}

/// Dense real tensor, row-major with axis 0 varying slowest.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleGrid {
    dims: Vec<usize>,
    values: Vec<f64>,
}

impl SampleGrid {
    pub fn new(dims: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let expected: usize = dims.iter().product();
        if dims.is_empty() || expected != values.len() {
            return Err(Error::ShapeMismatch(format!(
                "dims {dims:?} need {expected} values, got {}",
                values.len()
            )));
        }
        Ok(Self { dims, values })
    }

    pub fn zeros(dims: Vec<usize>) -> Self {
        let len = dims.iter().product();
        Self {
            dims,
            values: vec![0.0; len],
        }
    }

    pub fn from_fn(dims: Vec<usize>, mut f: impl FnMut(&[usize]) -> f64) -> Self {
        let len: usize = dims.iter().product();
        let mut idx = vec![0usize; dims.len()];
        let mut values = Vec::with_capacity(len);
        for flat in 0..len {
            unravel(flat, &dims, &mut idx);
            values.push(f(&idx));
        }
        Self { dims, values }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.values[ravel(idx, &self.dims)]
    }
}

pub(crate) fn ravel(idx: &[usize], dims: &[usize]) -> usize {
    idx.iter().zip(dims).fold(0, |acc, (&i, &d)| acc * d + i)
}

pub(crate) fn unravel(mut flat: usize, dims: &[usize], out: &mut [usize]) {
    for a in (0..dims.len()).rev() {
        out[a] = flat % dims[a];
        flat /= dims[a];
    }
}

/// Applies a `rows x dims[axis]` row-major matrix along `axis` of a tensor.
///
/// Returns the new tensor data, whose shape is `dims` with `dims[axis]`
/// replaced by `rows`. Each output entry is a fixed-order dot product.
pub(crate) fn contract_axis(
    data: &[f64],
    dims: &[usize],
    axis: usize,
    matrix: &[f64],
    rows: usize,
    exec: Execution,
) -> Vec<f64> {
    let cols = dims[axis];
    debug_assert_eq!(matrix.len(), rows * cols);
    let outer: usize = dims[..axis].iter().product();
    let inner: usize = dims[axis + 1..].iter().product();
    let mut out = vec![0.0; outer * rows * inner];
    if out.is_empty() {
        return out;
    }
    // One work item per output row `(o, r)`, so every axis pass can be split.
    let chunk_rows = (4096 / (cols * inner).max(1)).max(1);
    exec.for_each_chunk_mut(&mut out, inner, chunk_rows, |first, dst| {
        for (n, dst_row) in dst.chunks_mut(inner).enumerate() {
            let item = first + n;
            let (o, r) = (item / rows, item % rows);
            let src = &data[o * cols * inner..(o + 1) * cols * inner];
            let mrow = &matrix[r * cols..(r + 1) * cols];
            for (j, &m) in mrow.iter().enumerate() {
                if m == 0.0 {
                    continue;
                }
                let src_row = &src[j * inner..(j + 1) * inner];
                for (d, s) in dst_row.iter_mut().zip(src_row) {
                    *d += m * s;
                }
            }
        }
    });
    out
}

fn check_kinds(samples: &SampleGrid, kinds: &[TransformKind]) -> Result<()> {
    if kinds.len() != samples.rank() {
        return Err(Error::ShapeMismatch(format!(
            "{} transform kinds for a rank-{} tensor",
            kinds.len(),
            samples.rank()
        )));
    }
    Ok(())
}

/// Applies the per-axis transforms as successive axis passes.
pub fn apply_separable(
    samples: &SampleGrid,
    kinds: &[TransformKind],
    exec: Execution,
) -> Result<SampleGrid> {
    check_kinds(samples, kinds)?;
    let mut data = samples.values.clone();
    for (axis, &kind) in kinds.iter().enumerate() {
        let n = samples.dims[axis];
        let m = build_transform(n, kind)?;
        data = contract_axis(&data, &samples.dims, axis, &m.entries, n, exec);
    }
    SampleGrid::new(samples.dims.clone(), data)
}

/// Reference implementation: every output coefficient is a full multi-index sum.
pub fn naive_apply(samples: &SampleGrid, kinds: &[TransformKind]) -> Result<SampleGrid> {
    check_kinds(samples, kinds)?;
    let mats = kinds
        .iter()
        .zip(&samples.dims)
        .map(|(&kind, &n)| build_transform(n, kind))
        .collect::<Result<Vec<_>>>()?;
    let dims = samples.dims.clone();
    let rank = dims.len();
    let mut src_idx = vec![0usize; rank];
    let out = SampleGrid::from_fn(dims.clone(), |out_idx| {
        let mut acc = 0.0;
        for (flat, &v) in samples.values.iter().enumerate() {
            unravel(flat, &dims, &mut src_idx);
            let mut w = v;
            for a in 0..rank {
                w *= mats[a].get(out_idx[a], src_idx[a]);
            }
            acc += w;
        }
        acc
    });
    Ok(out)
}
