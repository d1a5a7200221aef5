//! Candidate field `E = xi * N(x)`: a tanh multilayer perceptron multiplied by
//! a diagonal polynomial cutoff that kills the tangential trace on the boundary.
//!
//! The forward pass propagates the input Jacobian alongside activations, so the
//! curl is exact. The reverse pass differentiates through both the values and
//! the Jacobian, giving exact parameter gradients of any functional of
//! `(E, curl E)` sampled at a batch of points.

use std::f64::consts::PI;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::residual::{curl_dim, FieldSamples};

/// Hidden layer widths used when a configuration does not override them.
pub const DEFAULT_HIDDEN: [usize; 5] = [20; 5];

/// `[dim, 20, 20, 20, 20, 20, dim]`.
pub fn default_architecture(dim: usize) -> Vec<usize> {
    let mut w = vec![dim];
    w.extend(DEFAULT_HIDDEN);
    w.push(dim);
    w
}

/// Weights and biases of the network, stored in one flat vector.
///
/// Layer `j` maps width `widths[j]` to `widths[j+1]`; its weight matrix is
/// row-major `widths[j+1] x widths[j]` and is followed by its bias.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    widths: Vec<usize>,
    offsets: Vec<usize>,
    data: Vec<f64>,
}

impl MlpParams {
    pub fn zeros(widths: &[usize]) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::InvalidSize(
                "network needs at least an input and an output layer".into(),
            ));
        }
        let dim = widths[0];
        if !(2..=3).contains(&dim) || *widths.last().unwrap() != dim {
            return Err(Error::InvalidSize(format!(
                "input and output widths must both equal the dimension (2 or 3): {widths:?}"
            )));
        }
        if widths.contains(&0) {
            return Err(Error::InvalidSize(format!(
                "zero-width layer in {widths:?}"
            )));
        }
        let mut offsets = vec![0];
        for pair in widths.windows(2) {
            let prev = *offsets.last().unwrap();
            offsets.push(prev + pair[1] * pair[0] + pair[1]);
        }
        let len = *offsets.last().unwrap();
        Ok(Self {
            widths: widths.to_vec(),
            offsets,
            data: vec![0.0; len],
        })
    }

    pub fn from_flat(widths: &[usize], data: Vec<f64>) -> Result<Self> {
        let mut p = Self::zeros(widths)?;
        if data.len() != p.data.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} parameters for architecture {widths:?} (needs {})",
                data.len(),
                p.data.len()
            )));
        }
        p.data = data;
        Ok(p)
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn dim(&self) -> usize {
        self.widths[0]
    }

    /// Number of weight layers (hidden layers plus the output layer).
    pub fn layer_count(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn weight(&self, layer: usize) -> &[f64] {
        let start = self.offsets[layer];
        &self.data[start..start + self.widths[layer + 1] * self.widths[layer]]
    }

    pub fn bias(&self, layer: usize) -> &[f64] {
        let start = self.offsets[layer] + self.widths[layer + 1] * self.widths[layer];
        &self.data[start..self.offsets[layer + 1]]
    }

    pub fn weight_mut(&mut self, layer: usize) -> &mut [f64] {
        let start = self.offsets[layer];
        let len = self.widths[layer + 1] * self.widths[layer];
        &mut self.data[start..start + len]
    }

    pub fn bias_mut(&mut self, layer: usize) -> &mut [f64] {
        let start = self.offsets[layer] + self.widths[layer + 1] * self.widths[layer];
        let end = self.offsets[layer + 1];
        &mut self.data[start..end]
    }

    fn layer_offset(&self, layer: usize) -> usize {
        self.offsets[layer]
    }
}

/// Glorot-uniform weights `U(-l, l)` with `l = sqrt(6 / (fan_in + fan_out))`, zero biases.
pub fn init_params(seed: u64, widths: &[usize]) -> Result<MlpParams> {
    let mut p = MlpParams::zeros(widths)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for layer in 0..p.layer_count() {
        let limit = glorot_limit(widths[layer], widths[layer + 1]);
        for w in p.weight_mut(layer) {
            *w = rng.gen_range(-limit..limit);
        }
    }
    Ok(p)
}

pub fn glorot_limit(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// `g(t) = t (pi - t)`, positive on `(0, pi)` and zero at both ends.
fn bump(t: f64) -> f64 {
    t * (PI - t)
}

fn bump_derivative(t: f64) -> f64 {
    PI - 2.0 * t
}

/// Diagonal cutoff: component `c` is the product of `g` over every axis except `c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CutoffField {
    dim: usize,
}

impl CutoffField {
    pub fn new(dim: usize) -> Result<Self> {
        if !(2..=3).contains(&dim) {
            return Err(Error::InvalidSize(format!("cutoff dimension {dim}")));
        }
        Ok(Self { dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Diagonal entries `xi_c(p)` and their gradients `d xi_c / d x_i`.
    pub fn eval(&self, p: &[f64]) -> ([f64; 3], [[f64; 3]; 3]) {
        let n = self.dim;
        let mut g = [0.0; 3];
        let mut dg = [0.0; 3];
        for a in 0..n {
            g[a] = bump(p[a]);
            dg[a] = bump_derivative(p[a]);
        }
        let mut xi = [0.0; 3];
        let mut grad = [[0.0; 3]; 3];
        for c in 0..n {
            xi[c] = (0..n).filter(|&a| a != c).map(|a| g[a]).product();
            for i in (0..n).filter(|&i| i != c) {
                grad[c][i] = (0..n)
                    .filter(|&a| a != c)
                    .map(|a| if a == i { dg[a] } else { g[a] })
                    .product();
            }
        }
        (xi, grad)
    }
}

/// Network plus cutoff.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateField {
    pub params: MlpParams,
    pub cutoff: CutoffField,
}

/// Per-point buffers for the forward and reverse passes.
struct Workspace {
    /// Activations per layer boundary, `a[0]` is the input.
    a: Vec<Vec<f64>>,
    /// Input tangents of the activations, `dim` vectors per boundary.
    da: Vec<Vec<Vec<f64>>>,
    /// Input tangents of the pre-activations per weight layer.
    dz: Vec<Vec<Vec<f64>>>,
    abar: Vec<f64>,
    dabar: Vec<Vec<f64>>,
    zbar: Vec<f64>,
    dzbar: Vec<Vec<f64>>,
}

impl Workspace {
    fn new(widths: &[usize]) -> Self {
        let dim = widths[0];
        let maxw = *widths.iter().max().unwrap();
        Self {
            a: widths.iter().map(|&w| vec![0.0; w]).collect(),
            da: widths.iter().map(|&w| vec![vec![0.0; w]; dim]).collect(),
            dz: widths[1..]
                .iter()
                .map(|&w| vec![vec![0.0; w]; dim])
                .collect(),
            abar: vec![0.0; maxw],
            dabar: vec![vec![0.0; maxw]; dim],
            zbar: vec![0.0; maxw],
            dzbar: vec![vec![0.0; maxw]; dim],
        }
    }
}

/// Output of one point: `E`, `d_i E_c` (row `c`), and the raw network values.
#[derive(Debug, Clone, Copy)]
struct PointEval {
    e: [f64; 3],
    de: [[f64; 3]; 3],
}

fn matvec(w: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    for (o, row) in out.iter_mut().zip(w.chunks_exact(cols)) {
        *o = row.iter().zip(x).map(|(a, b)| a * b).sum();
    }
}

fn curl_from_jacobian(dim: usize, de: &[[f64; 3]; 3], out: &mut [f64]) {
    if dim == 2 {
        out[0] = de[0][1] - de[1][0];
    } else {
        out[0] = de[2][1] - de[1][2];
        out[1] = de[0][2] - de[2][0];
        out[2] = de[1][0] - de[0][1];
    }
}

impl CandidateField {
    pub fn new(params: MlpParams) -> Result<Self> {
        let cutoff = CutoffField::new(params.dim())?;
        Ok(Self { params, cutoff })
    }

    pub fn dim(&self) -> usize {
        self.params.dim()
    }

    /// Raw network output `N(p)`.
    pub fn network(&self, p: &[f64]) -> Vec<f64> {
        let mut ws = Workspace::new(self.params.widths());
        self.forward_point(p, &mut ws);
        ws.a.last().unwrap().clone()
    }

    fn forward_point(&self, p: &[f64], ws: &mut Workspace) -> PointEval {
        let params = &self.params;
        let dim = params.dim();
        let layers = params.layer_count();
        ws.a[0].copy_from_slice(&p[..dim]);
        for i in 0..dim {
            ws.da[0][i]
                .iter_mut()
                .enumerate()
                .for_each(|(j, v)| *v = (i == j) as u8 as f64);
        }
        for l in 0..layers {
            let w = params.weight(l);
            let b = params.bias(l);
            let (prev, next) = ws.a.split_at_mut(l + 1);
            let (aprev, anext) = (&prev[l], &mut next[0]);
            matvec(w, aprev, anext);
            for (v, bb) in anext.iter_mut().zip(b) {
                *v += bb;
            }
            let (dprev, dnext) = ws.da.split_at_mut(l + 1);
            for i in 0..dim {
                matvec(w, &dprev[l][i], &mut ws.dz[l][i]);
            }
            let hidden = l + 1 < layers;
            if hidden {
                for v in anext.iter_mut() {
                    *v = v.tanh();
                }
            }
            for i in 0..dim {
                let dz = &ws.dz[l][i];
                for (j, d) in dnext[0][i].iter_mut().enumerate() {
                    *d = if hidden {
                        (1.0 - anext[j] * anext[j]) * dz[j]
                    } else {
                        dz[j]
                    };
                }
            }
        }
        let n_out = &ws.a[layers];
        let (xi, dxi) = self.cutoff.eval(p);
        let mut out = PointEval {
            e: [0.0; 3],
            de: [[0.0; 3]; 3],
        };
        for c in 0..dim {
            out.e[c] = xi[c] * n_out[c];
            for i in 0..dim {
                out.de[c][i] = dxi[c][i] * n_out[c] + xi[c] * ws.da[layers][i][c];
            }
        }
        out
    }

    /// Accumulates into `grad` the parameter gradient of `sum_c ebar_c E_c + sum_m cbar_m (curl E)_m`
    /// at one point. Must follow `forward_point` on the same point and workspace.
    fn backward_point(
        &self,
        p: &[f64],
        ebar: &[f64],
        cbar: &[f64],
        ws: &mut Workspace,
        grad: &mut [f64],
    ) {
        let params = &self.params;
        let dim = params.dim();
        let layers = params.layer_count();
        let mut debar = [[0.0; 3]; 3];
        if dim == 2 {
            debar[0][1] += cbar[0];
            debar[1][0] -= cbar[0];
        } else {
            debar[2][1] += cbar[0];
            debar[1][2] -= cbar[0];
            debar[0][2] += cbar[1];
            debar[2][0] -= cbar[1];
            debar[1][0] += cbar[2];
            debar[0][1] -= cbar[2];
        }
        let (xi, dxi) = self.cutoff.eval(p);
        // Output layer is linear: adjoints of N and its Jacobian are those of z.
        let wout = params.widths[layers];
        for c in 0..dim {
            let mut nbar = ebar[c] * xi[c];
            for i in 0..dim {
                nbar += debar[c][i] * dxi[c][i];
                ws.dzbar[i][c] = debar[c][i] * xi[c];
            }
            ws.zbar[c] = nbar;
        }
        debug_assert_eq!(wout, dim);

        for l in (0..layers).rev() {
            let rows = params.widths[l + 1];
            let cols = params.widths[l];
            let off = params.layer_offset(l);
            let aprev = &ws.a[l];
            let daprev = &ws.da[l];
            {
                let gw = &mut grad[off..off + rows * cols];
                for r in 0..rows {
                    let zb = ws.zbar[r];
                    let row = &mut gw[r * cols..(r + 1) * cols];
                    for (g, a) in row.iter_mut().zip(aprev) {
                        *g += zb * a;
                    }
                    for i in 0..dim {
                        let dzb = ws.dzbar[i][r];
                        if dzb != 0.0 {
                            for (g, d) in row.iter_mut().zip(&daprev[i]) {
                                *g += dzb * d;
                            }
                        }
                    }
                }
                let gb = &mut grad[off + rows * cols..off + rows * cols + rows];
                for (g, zb) in gb.iter_mut().zip(&ws.zbar[..rows]) {
                    *g += zb;
                }
            }
            if l == 0 {
                break;
            }
            let w = params.weight(l);
            for j in 0..cols {
                ws.abar[j] = 0.0;
                for i in 0..dim {
                    ws.dabar[i][j] = 0.0;
                }
            }
            for r in 0..rows {
                let row = &w[r * cols..(r + 1) * cols];
                let zb = ws.zbar[r];
                for (ab, wv) in ws.abar[..cols].iter_mut().zip(row) {
                    *ab += wv * zb;
                }
                for i in 0..dim {
                    let dzb = ws.dzbar[i][r];
                    for (ab, wv) in ws.dabar[i][..cols].iter_mut().zip(row) {
                        *ab += wv * dzb;
                    }
                }
            }
            // Back through tanh of layer l-1: a = tanh(z), da = (1 - a^2) dz.
            let a = &ws.a[l];
            let dz = &ws.dz[l - 1];
            for j in 0..cols {
                let s1 = 1.0 - a[j] * a[j];
                let s2 = -2.0 * a[j] * s1;
                let mut zb = ws.abar[j] * s1;
                for i in 0..dim {
                    zb += ws.dabar[i][j] * s2 * dz[i][j];
                }
                ws.zbar[j] = zb;
                for i in 0..dim {
                    ws.dzbar[i][j] = ws.dabar[i][j] * s1;
                }
            }
        }
    }

    /// `E` at a batch of points (flat `len * dim`).
    pub fn forward(&self, points: &[f64], exec: Execution) -> Vec<f64> {
        self.forward_with_curl(points, exec).values
    }

    /// `E` and `curl E` at a batch of points.
    pub fn forward_with_curl(&self, points: &[f64], exec: Execution) -> FieldSamples {
        let dim = self.dim();
        let cd = curl_dim(dim);
        let len = points.len() / dim;
        let mut packed = vec![0.0; len * (dim + cd)];
        exec.for_each_chunk_mut(&mut packed, dim + cd, 64, |first, block| {
            let mut ws = Workspace::new(self.params.widths());
            for (n, out) in block.chunks_exact_mut(dim + cd).enumerate() {
                let i = first + n;
                let ev = self.forward_point(&points[i * dim..(i + 1) * dim], &mut ws);
                out[..dim].copy_from_slice(&ev.e[..dim]);
                curl_from_jacobian(dim, &ev.de, &mut out[dim..]);
            }
        });
        let mut s = FieldSamples::zeros(dim, len);
        for (i, rec) in packed.chunks_exact(dim + cd).enumerate() {
            s.values[i * dim..(i + 1) * dim].copy_from_slice(&rec[..dim]);
            s.curls[i * cd..(i + 1) * cd].copy_from_slice(&rec[dim..]);
        }
        s
    }

    /// Parameter gradient of `sum_p (ebar_p . E(p) + cbar_p . curl E(p))`.
    pub fn pullback(
        &self,
        points: &[f64],
        ebar: &[f64],
        cbar: &[f64],
        exec: Execution,
    ) -> Result<Vec<f64>> {
        let dim = self.dim();
        let cd = curl_dim(dim);
        let len = points.len() / dim;
        if ebar.len() != len * dim || cbar.len() != len * cd {
            return Err(Error::ShapeMismatch(format!(
                "adjoints ({}, {}) for {len} points",
                ebar.len(),
                cbar.len()
            )));
        }
        Ok(exec.sum_chunks(len, 64, self.params.len(), |range, acc| {
            let mut ws = Workspace::new(self.params.widths());
            for i in range {
                let p = &points[i * dim..(i + 1) * dim];
                let eb = &ebar[i * dim..(i + 1) * dim];
                let cb = &cbar[i * cd..(i + 1) * cd];
                if eb.iter().chain(cb).all(|&v| v == 0.0) {
                    continue;
                }
                self.forward_point(p, &mut ws);
                self.backward_point(p, eb, cb, &mut ws, acc);
            }
        }))
    }
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"DFRM";
const CHECKPOINT_VERSION: u32 = 1;

/// `DFRM | version u32 | layer count u32 | widths u32[count + 1] | (W_j, b_j)*`,
/// little-endian, where the layer count is the number of weight layers.
pub fn write_checkpoint(path: &Path, params: &MlpParams) -> Result<()> {
    let mut buf = Vec::with_capacity(16 + params.len() * 8);
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(params.layer_count() as u32).to_le_bytes());
    for &w in params.widths() {
        buf.extend_from_slice(&(w as u32).to_le_bytes());
    }
    for v in params.as_slice() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<MlpParams> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |reason: String| Error::format(path, reason);
    let u32_at = |at: usize| -> Option<u32> {
        bytes
            .get(at..at + 4)
            .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    };
    if bytes.len() < 12 || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(bad("missing DFRM header".into()));
    }
    let version = u32_at(4).unwrap();
    if version != CHECKPOINT_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let layers = u32_at(8).unwrap() as usize;
    if layers == 0 || layers > 1024 {
        return Err(bad(format!("implausible layer count {layers}")));
    }
    let widths = (0..=layers)
        .map(|i| u32_at(12 + 4 * i).map(|w| w as usize))
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| bad("truncated widths".into()))?;
    let mut params = MlpParams::zeros(&widths).map_err(|e| bad(e.to_string()))?;
    let start = 12 + 4 * (layers + 1);
    let body = &bytes[start..];
    if body.len() != params.len() * 8 {
        return Err(bad(format!(
            "expected {} parameter bytes, found {}",
            params.len() * 8,
            body.len()
        )));
    }
    for (dst, chunk) in params.as_mut_slice().iter_mut().zip(body.chunks_exact(8)) {
        *dst = f64::from_le_bytes(chunk.try_into().unwrap());
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_points(dim: usize, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n * dim)
            .map(|_| rng.gen_range(0.05..PI - 0.05))
            .collect()
    }

    #[test]
    fn architecture_validation() {
        assert!(MlpParams::zeros(&[2]).is_err());
        assert!(MlpParams::zeros(&[2, 4, 3]).is_err());
        assert!(MlpParams::zeros(&[4, 4, 4]).is_err());
        assert!(MlpParams::zeros(&[2, 0, 2]).is_err());
        let p = MlpParams::zeros(&default_architecture(2)).unwrap();
        assert_eq!(p.len(), (2 * 20 + 20) + 4 * (20 * 20 + 20) + (20 * 2 + 2));
        assert_eq!(p.layer_count(), 6);
    }

    #[test]
    fn zero_network_is_zero_field() {
        let f = CandidateField::new(MlpParams::zeros(&[3, 5, 3]).unwrap()).unwrap();
        let s = f.forward_with_curl(&random_points(3, 10, 1), Execution::Sequential);
        assert!(s.values.iter().chain(&s.curls).all(|&v| v == 0.0));
    }

    #[test]
    fn two_layer_recursion_by_hand() {
        let mut p = MlpParams::zeros(&[2, 3, 2]).unwrap();
        p.bias_mut(0).copy_from_slice(&[0.2, -0.5, 1.0]);
        p.weight_mut(1)
            .copy_from_slice(&[1.0, 2.0, 0.5, -1.0, 0.0, 3.0]);
        p.bias_mut(1).copy_from_slice(&[0.1, -0.2]);
        let f = CandidateField::new(p).unwrap();
        let t = [0.2f64.tanh(), (-0.5f64).tanh(), 1.0f64.tanh()];
        let n = [
            t[0] + 2.0 * t[1] + 0.5 * t[2] + 0.1,
            -t[0] + 3.0 * t[2] - 0.2,
        ];
        let pt = [0.7, 2.1];
        let e = f.forward(&pt, Execution::Sequential);
        let xi = [bump(pt[1]), bump(pt[0])];
        assert!((e[0] - xi[0] * n[0]).abs() < 1e-14);
        assert!((e[1] - xi[1] * n[1]).abs() < 1e-14);
        // N is constant, so curl = d_y(xi_1 N_1) - d_x(xi_2 N_2).
        let c = f.forward_with_curl(&pt, Execution::Sequential).curls[0];
        let expected = bump_derivative(pt[1]) * n[0] - bump_derivative(pt[0]) * n[1];
        assert!((c - expected).abs() < 1e-13);
    }

    #[test]
    fn tangential_trace_vanishes_on_the_boundary() {
        let f = CandidateField::new(init_params(3, &[3, 8, 8, 3]).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let face = rng.gen_range(0..3);
            let mut p: Vec<f64> = (0..3).map(|_| rng.gen_range(0.0..PI)).collect();
            p[face] = if rng.gen_bool(0.5) { 0.0 } else { PI };
            let e = f.forward(&p, Execution::Sequential);
            for c in (0..3).filter(|&c| c != face) {
                assert_eq!(e[c], 0.0);
            }
        }
    }

    #[test]
    fn curl_matches_central_differences() {
        for dim in [2, 3] {
            let widths = [dim, 6, 5, dim];
            let f = CandidateField::new(init_params(11, &widths).unwrap()).unwrap();
            let pts = random_points(dim, 20, 5);
            let s = f.forward_with_curl(&pts, Execution::Sequential);
            let h = 1e-5;
            let cd = curl_dim(dim);
            for (i, p) in pts.chunks(dim).enumerate() {
                let d = |c: usize, a: usize| {
                    let mut pp = p.to_vec();
                    pp[a] += h;
                    let up = f.forward(&pp, Execution::Sequential)[c];
                    pp[a] -= 2.0 * h;
                    let dn = f.forward(&pp, Execution::Sequential)[c];
                    (up - dn) / (2.0 * h)
                };
                let fd: Vec<f64> = if dim == 2 {
                    vec![d(0, 1) - d(1, 0)]
                } else {
                    vec![d(2, 1) - d(1, 2), d(0, 2) - d(2, 0), d(1, 0) - d(0, 1)]
                };
                for m in 0..cd {
                    let exact = s.curls[i * cd + m];
                    let err = (exact - fd[m]).abs() / exact.abs().max(fd[m].abs()).max(1e-3);
                    assert!(err < 1e-6, "dim {dim} point {i}: {exact} vs {}", fd[m]);
                }
            }
        }
    }

    #[test]
    fn pullback_matches_finite_differences() {
        for dim in [2, 3] {
            let widths = [dim, 4, 4, dim];
            let params = init_params(21, &widths).unwrap();
            let pts = random_points(dim, 6, 2);
            let cd = curl_dim(dim);
            let ebar: Vec<f64> = (0..6 * dim).map(|i| (i as f64 * 0.7).sin()).collect();
            let cbar: Vec<f64> = (0..6 * cd).map(|i| (i as f64 * 1.1).cos()).collect();
            let functional = |p: &MlpParams| {
                let s = CandidateField::new(p.clone())
                    .unwrap()
                    .forward_with_curl(&pts, Execution::Sequential);
                s.values.iter().zip(&ebar).map(|(a, b)| a * b).sum::<f64>()
                    + s.curls.iter().zip(&cbar).map(|(a, b)| a * b).sum::<f64>()
            };
            let g = CandidateField::new(params.clone())
                .unwrap()
                .pullback(&pts, &ebar, &cbar, Execution::Sequential)
                .unwrap();
            let h = 1e-6;
            for k in 0..params.len() {
                let mut up = params.clone();
                up.as_mut_slice()[k] += h;
                let mut dn = params.clone();
                dn.as_mut_slice()[k] -= h;
                let fd = (functional(&up) - functional(&dn)) / (2.0 * h);
                let err = (g[k] - fd).abs() / (g[k].abs().max(fd.abs()) + 1e-8);
                assert!(
                    err < 1e-5 || (g[k] - fd).abs() < 1e-9,
                    "dim {dim} param {k}: {} vs {fd}",
                    g[k]
                );
            }
        }
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let w = default_architecture(2);
        let a = init_params(7, &w).unwrap();
        assert_eq!(a, init_params(7, &w).unwrap());
        assert_ne!(a, init_params(8, &w).unwrap());
        let limit = glorot_limit(20, 20);
        assert!(a.weight(2).iter().all(|v| v.abs() <= limit));
        assert!(a.weight(2).iter().any(|v| v.abs() > 0.5 * limit));
        assert!(a.bias(2).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn checkpoint_roundtrip_and_rejection() {
        let p = init_params(3, &[3, 7, 5, 3]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.dfrm");
        write_checkpoint(&path, &p).unwrap();
        let bytes = fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"DFRM");
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 3);
        assert_eq!(read_checkpoint(&path).unwrap(), p);
        fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(read_checkpoint(&path), Err(Error::Format { .. })));
    }

    #[test]
    fn sequential_and_parallel_agree_bitwise() {
        let f = CandidateField::new(init_params(5, &[2, 10, 10, 2]).unwrap()).unwrap();
        let pts = random_points(2, 300, 4);
        let a = f.forward_with_curl(&pts, Execution::Sequential);
        let b = f.forward_with_curl(&pts, Execution::Parallel);
        assert_eq!(a, b);
        let eb = vec![0.3; 600];
        let cb = vec![-0.2; 300];
        assert_eq!(
            f.pullback(&pts, &eb, &cb, Execution::Sequential).unwrap(),
            f.pullback(&pts, &eb, &cb, Execution::Parallel).unwrap()
        );
    }
}
