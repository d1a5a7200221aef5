//! Residual coefficients `<R(E), Phi_k>` and the discretized dual-norm loss.
//!
//! The weak residual against one basis element is
//! `b(E, Phi_k) - l(Phi_k)` with
//! `b(E, phi) = int mu^-1 curl E . curl phi + kappa E . phi`, where the mass
//! coefficient `kappa` is `eps` for the coercive form and `-omega^2 eps` for
//! the Maxwell form. Integrals use the midpoint rule; since every basis
//! component is a separable product of `sin(k x)`/`cos(k x)`, the sums over
//! nodes for all modes at once are axis-by-axis DST-II/DCT-II passes.

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::basis::symbolic::{Factor, Trig};
use crate::basis::{BasisFamily, ModeIndex, ModeSet};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::grid::MidpointGrid;
use crate::transforms::{build_transform, contract_axis, TransformKind};

/// Scalar coefficient field.
#[derive(Debug, Clone, PartialEq)]
pub enum Coefficient {
    Constant(f64),
    /// `inside` on the open ball `|x - center|^2 < radius_sq`, `outside` elsewhere.
    Ball {
        center: Vec<f64>,
        radius_sq: f64,
        inside: f64,
        outside: f64,
    },
}

impl Coefficient {
    pub fn at(&self, p: &[f64]) -> f64 {
        match self {
            Coefficient::Constant(v) => *v,
            Coefficient::Ball {
                center,
                radius_sq,
                inside,
                outside,
            } => {
                let d: f64 = p.iter().zip(center).map(|(x, c)| (x - c) * (x - c)).sum();
                if d < *radius_sq {
                    *inside
                } else {
                    *outside
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FormKind {
    /// `int mu^-1 curl E . curl phi + eps E . phi`.
    Coercive,
    /// `int mu^-1 curl E . curl phi - omega^2 eps E . phi`.
    Maxwell { omega: f64 },
}

/// Material coefficients together with the bilinear form they enter.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialField {
    pub mu: Coefficient,
    pub epsilon: Coefficient,
    pub form: FormKind,
}

impl MaterialField {
    pub fn new(mu: Coefficient, epsilon: Coefficient, form: FormKind) -> Result<Self> {
        if let FormKind::Maxwell { omega } = form {
            if omega == 0.0 || !omega.is_finite() {
                return Err(Error::Material(format!(
                    "angular frequency must be finite and non-zero, got {omega}"
                )));
            }
        }
        Ok(Self { mu, epsilon, form })
    }

    /// `mu = eps = 1` with the coercive form: `b` is the `H(curl)` inner product.
    pub fn unit_coercive() -> Self {
        Self {
            mu: Coefficient::Constant(1.0),
            epsilon: Coefficient::Constant(1.0),
            form: FormKind::Coercive,
        }
    }

    pub fn mass_coefficient(&self, p: &[f64]) -> f64 {
        let eps = self.epsilon.at(p);
        match self.form {
            FormKind::Coercive => eps,
            FormKind::Maxwell { omega } => -omega * omega * eps,
        }
    }

    /// `(mu^-1, kappa)` at a point; fails when `mu` is not bounded away from zero.
    pub fn weights_at(&self, p: &[f64]) -> Result<(f64, f64)> {
        let mu = self.mu.at(p);
        if !mu.is_finite() || mu.abs() <= 1e-300 {
            return Err(Error::Material(format!("mu = {mu} at {p:?}")));
        }
        Ok((1.0 / mu, self.mass_coefficient(p)))
    }

    /// Samples `mu^-1` and the mass coefficient at every node of `grid`.
    pub fn sample(&self, grid: &MidpointGrid) -> Result<MaterialSamples> {
        self.sample_points(&grid.points(), grid.dim())
    }

    pub fn sample_points(&self, points: &[f64], dim: usize) -> Result<MaterialSamples> {
        let n = points.len() / dim;
        let mut inv_mu = Vec::with_capacity(n);
        let mut mass = Vec::with_capacity(n);
        for p in points.chunks(dim) {
            let (a, b) = self.weights_at(p)?;
            inv_mu.push(a);
            mass.push(b);
        }
        Ok(MaterialSamples { inv_mu, mass })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaterialSamples {
    pub inv_mu: Vec<f64>,
    pub mass: Vec<f64>,
}

/// Values and curls of a vector field at the nodes of a grid, point-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSamples {
    pub dim: usize,
    /// `len * dim`.
    pub values: Vec<f64>,
    /// `len * curl_dim`; the curl is scalar in 2D.
    pub curls: Vec<f64>,
}

pub fn curl_dim(dim: usize) -> usize {
    if dim == 2 {
        1
    } else {
        3
    }
}

impl FieldSamples {
    pub fn zeros(dim: usize, len: usize) -> Self {
        Self {
            dim,
            values: vec![0.0; len * dim],
            curls: vec![0.0; len * curl_dim(dim)],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Samples a field given by closures returning value and curl at a point.
    pub fn from_fn(
        points: &[f64],
        dim: usize,
        value: impl Fn(&[f64]) -> Vec<f64>,
        curl: impl Fn(&[f64]) -> Vec<f64>,
    ) -> Self {
        let mut s = Self::zeros(dim, points.len() / dim);
        let cd = curl_dim(dim);
        for (i, p) in points.chunks(dim).enumerate() {
            s.values[i * dim..(i + 1) * dim].copy_from_slice(&value(p));
            s.curls[i * cd..(i + 1) * cd].copy_from_slice(&curl(p));
        }
        s
    }

    fn check(&self, dim: usize, len: usize) -> Result<()> {
        if self.dim != dim
            || self.values.len() != len * dim
            || self.curls.len() != len * curl_dim(dim)
        {
            return Err(Error::ShapeMismatch(format!(
                "field samples ({}D, {} values, {} curls) for a {dim}D grid of {len} nodes",
                self.dim,
                self.values.len(),
                self.curls.len()
            )));
        }
        Ok(())
    }
}

/// `l(Phi_k)` per mode.
#[derive(Debug, Clone, PartialEq)]
pub struct RhsCoefficients {
    modes: Vec<ModeIndex>,
    values: Vec<f64>,
}

impl RhsCoefficients {
    pub fn new(modes: &ModeSet, values: Vec<f64>) -> Result<Self> {
        if values.len() != modes.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} rhs values for {} modes",
                values.len(),
                modes.len()
            )));
        }
        Ok(Self {
            modes: modes.modes().to_vec(),
            values,
        })
    }

    pub fn zeros(modes: &ModeSet) -> Self {
        Self {
            modes: modes.modes().to_vec(),
            values: vec![0.0; modes.len()],
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn modes(&self) -> &[ModeIndex] {
        &self.modes
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            modes: self.modes.clone(),
            values: self.values.iter().map(|v| v * s).collect(),
        }
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Total discretized loss and its split over the two subspaces.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub loss: f64,
    /// Contribution of the gradient families to `loss^2`.
    pub grad_sq: f64,
    /// Contribution of the divergence-free families to `loss^2`.
    pub x0_sq: f64,
}

/// `loss = sqrt(sum_k r_k^2)`, split by family.
pub fn discretized_loss(r: &[f64], modes: &ModeSet) -> LossBreakdown {
    let mut grad_sq = 0.0;
    let mut x0_sq = 0.0;
    for (v, m) in r.iter().zip(modes.modes()) {
        if m.family.is_gradient() {
            grad_sq += v * v;
        } else {
            x0_sq += v * v;
        }
    }
    LossBreakdown {
        loss: (grad_sq + x0_sq).sqrt(),
        grad_sq,
        x0_sq,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Channel {
    Value(usize),
    Curl(usize),
}

#[derive(Debug, Clone)]
struct ChannelPlan {
    channel: Channel,
    pattern: Vec<Trig>,
}

#[derive(Debug, Clone)]
struct ModeTerm {
    plan: usize,
    coef: f64,
    k: [usize; 3],
    offset: usize,
}

/// Per-channel scalar samples at the grid nodes, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelData {
    /// `dim` arrays: integrands paired with the basis values.
    pub values: Vec<Vec<f64>>,
    /// `curl_dim` arrays: integrands paired with the basis curls.
    pub curls: Vec<Vec<f64>>,
}

/// Midpoint-rule projection of sampled integrands onto every basis element of a
/// [`ModeSet`], realized through type-II sine/cosine transforms.
#[derive(Debug, Clone)]
pub struct ResidualAssembler {
    grid: MidpointGrid,
    modes: ModeSet,
    extents: Vec<usize>,
    /// Per axis: `(kmax+1) x N` tables of `sin(k x_i)` and `cos(k x_i)`.
    sin_tables: Vec<Vec<f64>>,
    cos_tables: Vec<Vec<f64>>,
    plans: Vec<ChannelPlan>,
    mode_terms: Vec<Vec<ModeTerm>>,
    exec: Execution,
}

impl ResidualAssembler {
    pub fn new(grid: &MidpointGrid, modes: &ModeSet, exec: Execution) -> Result<Self> {
        let dim = grid.dim();
        if modes.dim() != dim {
            return Err(Error::ShapeMismatch(format!(
                "{}D modes on a {dim}D grid",
                modes.dim()
            )));
        }
        let mut sin_tables = Vec::with_capacity(dim);
        let mut cos_tables = Vec::with_capacity(dim);
        let mut extents = Vec::with_capacity(dim);
        for axis in 0..dim {
            let n = grid.counts()[axis];
            let kmax = modes.max_wavenumber(axis);
            if kmax as usize > n {
                return Err(Error::UnderResolved {
                    axis,
                    points: n,
                    wavenumber: kmax,
                });
            }
            let (s, c) = trig_tables(n, kmax as usize)?;
            sin_tables.push(s);
            cos_tables.push(c);
            extents.push(kmax as usize + 1);
        }

        let mut plans: Vec<ChannelPlan> = Vec::new();
        let mut mode_terms = Vec::with_capacity(modes.len());
        for func in modes.functions() {
            let mut terms = Vec::new();
            let channels = func
                .value_components()
                .iter()
                .enumerate()
                .map(|(c, p)| (Channel::Value(c), p))
                .chain(
                    func.curl_components()
                        .iter()
                        .enumerate()
                        .map(|(c, p)| (Channel::Curl(c), p)),
                );
            for (channel, poly) in channels {
                for term in poly.terms() {
                    let pattern: Vec<Trig> = term.factors.iter().map(|f| f.trig).collect();
                    let plan = match plans
                        .iter()
                        .position(|p| p.channel == channel && p.pattern == pattern)
                    {
                        Some(i) => i,
                        None => {
                            plans.push(ChannelPlan { channel, pattern });
                            plans.len() - 1
                        }
                    };
                    let mut k = [0usize; 3];
                    for (dst, f) in k.iter_mut().zip(&term.factors) {
                        *dst = f.k as usize;
                    }
                    let offset = k[..dim]
                        .iter()
                        .zip(&extents)
                        .fold(0, |acc, (&ki, &e)| acc * e + ki);
                    terms.push(ModeTerm {
                        plan,
                        coef: term.coef,
                        k,
                        offset,
                    });
                }
            }
            mode_terms.push(terms);
        }

        Ok(Self {
            grid: grid.clone(),
            modes: modes.clone(),
            extents,
            sin_tables,
            cos_tables,
            plans,
            mode_terms,
            exec,
        })
    }

    pub fn grid(&self) -> &MidpointGrid {
        &self.grid
    }

    pub fn modes(&self) -> &ModeSet {
        &self.modes
    }

    pub fn execution(&self) -> Execution {
        self.exec
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    fn table(&self, axis: usize, trig: Trig) -> &[f64] {
        match trig {
            Trig::Sin => &self.sin_tables[axis],
            Trig::Cos => &self.cos_tables[axis],
        }
    }

    fn channel<'a>(&self, data: &'a ChannelData, channel: Channel) -> Option<&'a [f64]> {
        let v = match channel {
            Channel::Value(c) => data.values.get(c),
            Channel::Curl(c) => data.curls.get(c),
        }?;
        if v.is_empty() {
            None
        } else {
            Some(v)
        }
    }

    /// `w * sum_nodes g(x) * Phi_k-part(x)` for every mode.
    ///
    /// Missing or empty channels count as zero integrands.
    pub fn project(&self, data: &ChannelData) -> Result<Vec<f64>> {
        let npts = self.grid.len();
        let dim = self.grid.dim();
        let mut coeffs: Vec<Option<Vec<f64>>> = Vec::with_capacity(self.plans.len());
        for plan in &self.plans {
            let Some(src) = self.channel(data, plan.channel) else {
                coeffs.push(None);
                continue;
            };
            if src.len() != npts {
                return Err(Error::ShapeMismatch(format!(
                    "channel has {} samples, grid has {npts}",
                    src.len()
                )));
            }
            let mut dims = self.grid.counts().to_vec();
            let mut cur = src.to_vec();
            for axis in 0..dim {
                let rows = self.extents[axis];
                cur = contract_axis(
                    &cur,
                    &dims,
                    axis,
                    self.table(axis, plan.pattern[axis]),
                    rows,
                    self.exec,
                );
                dims[axis] = rows;
            }
            coeffs.push(Some(cur));
        }
        let w = self.grid.weight();
        Ok(self
            .mode_terms
            .iter()
            .map(|terms| {
                terms
                    .iter()
                    .filter_map(|t| coeffs[t.plan].as_ref().map(|c| t.coef * c[t.offset]))
                    .sum::<f64>()
                    * w
            })
            .collect())
    }

    /// Adjoint of [`project`](Self::project): node values of
    /// `sum_k weights_k * d(project_k)/d(g)` for every channel.
    pub fn synthesize(&self, weights: &[f64]) -> Result<ChannelData> {
        if weights.len() != self.modes.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} weights for {} modes",
                weights.len(),
                self.modes.len()
            )));
        }
        let dim = self.grid.dim();
        let npts = self.grid.len();
        let w = self.grid.weight();
        let coeff_len: usize = self.extents.iter().product();
        let mut packed = vec![vec![0.0; coeff_len]; self.plans.len()];
        for (terms, &wk) in self.mode_terms.iter().zip(weights) {
            for t in terms {
                packed[t.plan][t.offset] += wk * t.coef * w;
            }
        }
        let mut out = ChannelData {
            values: vec![vec![0.0; npts]; dim],
            curls: vec![vec![0.0; npts]; curl_dim(dim)],
        };
        for (plan, coeffs) in self.plans.iter().zip(packed) {
            let mut dims = self.extents.clone();
            let mut cur = coeffs;
            for axis in 0..dim {
                let n = self.grid.counts()[axis];
                let rows = self.extents[axis];
                let table = self.table(axis, plan.pattern[axis]);
                let transposed = transpose(table, rows, n);
                cur = contract_axis(&cur, &dims, axis, &transposed, n, self.exec);
                dims[axis] = n;
            }
            let dst = match plan.channel {
                Channel::Value(c) => &mut out.values[c],
                Channel::Curl(c) => &mut out.curls[c],
            };
            for (d, s) in dst.iter_mut().zip(&cur) {
                *d += s;
            }
        }
        Ok(out)
    }

    /// Projection with explicit per-point weights, evaluated term by term.
    ///
    /// `data` holds one value per point and channel; points need not lie on the grid.
    pub fn project_points(
        &self,
        points: &[f64],
        weights: &[f64],
        data: &ChannelData,
    ) -> Result<Vec<f64>> {
        let dim = self.grid.dim();
        let npts = weights.len();
        if points.len() != npts * dim {
            return Err(Error::ShapeMismatch(format!(
                "{} coordinates for {npts} weights",
                points.len()
            )));
        }
        let channels: Vec<Option<&[f64]>> = self
            .plans
            .iter()
            .map(|p| self.channel(data, p.channel))
            .collect();
        for ch in channels.iter().flatten() {
            if ch.len() != npts {
                return Err(Error::ShapeMismatch("channel length".into()));
            }
        }
        let nmodes = self.modes.len();
        let out = self.exec.sum_chunks(npts, 64, nmodes, |range, acc| {
            let mut sin = vec![Vec::new(); dim];
            let mut cos = vec![Vec::new(); dim];
            for i in range {
                let p = &points[i * dim..(i + 1) * dim];
                for a in 0..dim {
                    sin[a] = (0..self.extents[a])
                        .map(|k| Factor::sin(k as u32).eval(p[a]))
                        .collect();
                    cos[a] = (0..self.extents[a])
                        .map(|k| Factor::cos(k as u32).eval(p[a]))
                        .collect();
                }
                for (m, terms) in self.mode_terms.iter().enumerate() {
                    let mut s = 0.0;
                    for t in terms {
                        let Some(ch) = channels[t.plan] else { continue };
                        let pattern = &self.plans[t.plan].pattern;
                        let mut v = t.coef * ch[i];
                        for a in 0..dim {
                            v *= match pattern[a] {
                                Trig::Sin => sin[a][t.k[a]],
                                Trig::Cos => cos[a][t.k[a]],
                            };
                        }
                        s += v;
                    }
                    acc[m] += weights[i] * s;
                }
            }
        });
        Ok(out)
    }

    /// Channel integrands of `b(E, .)` at the grid nodes.
    pub fn bilinear_channels(
        &self,
        samples: &FieldSamples,
        material: &MaterialSamples,
    ) -> Result<ChannelData> {
        let npts = self.grid.len();
        let dim = self.grid.dim();
        samples.check(dim, npts)?;
        if material.inv_mu.len() != npts || material.mass.len() != npts {
            return Err(Error::ShapeMismatch("material samples".into()));
        }
        let cd = curl_dim(dim);
        let values = (0..dim)
            .map(|c| {
                (0..npts)
                    .map(|i| material.mass[i] * samples.values[i * dim + c])
                    .collect()
            })
            .collect();
        let curls = (0..cd)
            .map(|c| {
                (0..npts)
                    .map(|i| material.inv_mu[i] * samples.curls[i * cd + c])
                    .collect()
            })
            .collect();
        Ok(ChannelData { values, curls })
    }

    /// `r_k = Q[mu^-1 curl E . curl Phi_k] + Q[kappa E . Phi_k] - l_k`.
    pub fn residual_coefficients(
        &self,
        samples: &FieldSamples,
        material: &MaterialSamples,
        rhs: &RhsCoefficients,
    ) -> Result<Vec<f64>> {
        if rhs.modes() != self.modes.modes() {
            return Err(Error::ShapeMismatch(
                "rhs coefficients belong to a different mode set".into(),
            ));
        }
        let data = self.bilinear_channels(samples, material)?;
        let mut r = self.project(&data)?;
        for (v, l) in r.iter_mut().zip(rhs.values()) {
            *v -= l;
        }
        Ok(r)
    }

    /// `l_k = Q[f . Phi_k]` for a source sampled at the grid nodes (point-major, `len * dim`).
    pub fn rhs_from_strong_source(&self, source: &[f64]) -> Result<RhsCoefficients> {
        let dim = self.grid.dim();
        let npts = self.grid.len();
        if source.len() != npts * dim {
            return Err(Error::ShapeMismatch(format!(
                "{} source values for {npts} nodes",
                source.len()
            )));
        }
        let values = (0..dim)
            .map(|c| (0..npts).map(|i| source[i * dim + c]).collect())
            .collect();
        let data = ChannelData {
            values,
            curls: Vec::new(),
        };
        RhsCoefficients::new(&self.modes, self.project(&data)?)
    }

    /// `l_k = Q[b(E*, Phi_k)]` on this assembler's grid from samples of an exact field.
    pub fn rhs_from_exact_weak(
        &self,
        exact: &FieldSamples,
        material: &MaterialSamples,
    ) -> Result<RhsCoefficients> {
        let data = self.bilinear_channels(exact, material)?;
        RhsCoefficients::new(&self.modes, self.project(&data)?)
    }
}

/// Rows of `sin(k x_i)` / `cos(k x_i)`, `k = 0..=kmax`, read off the
/// orthonormal DST-II/DCT-II matrices by undoing their row scaling.
fn trig_tables(n: usize, kmax: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let dst = build_transform(n, TransformKind::Dst2)?;
    let dct = build_transform(n, TransformKind::Cst2)?;
    let rows = kmax + 1;
    let mut sin = vec![0.0; rows * n];
    let mut cos = vec![0.0; rows * n];
    for k in 0..rows {
        if (1..=n).contains(&k) {
            let scale = dst.row_scale(k - 1);
            for (d, v) in sin[k * n..(k + 1) * n].iter_mut().zip(dst.row(k - 1)) {
                *d = v / scale;
            }
        }
        // cos(n x_i) vanishes at every midpoint node.
        if k < n {
            let scale = dct.row_scale(k);
            for (d, v) in cos[k * n..(k + 1) * n].iter_mut().zip(dct.row(k)) {
                *d = v / scale;
            }
        }
    }
    Ok((sin, cos))
}

fn transpose(m: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut t = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            t[c * rows + r] = m[r * cols + c];
        }
    }
    t
}

const RHS_MAGIC: &[u8; 4] = b"DFRC";
const RHS_VERSION: u32 = 1;

/// Writes coefficients as `DFRC | version u32 | count u64 | (family u8, k 3 x u32, value f64)*`,
/// all little-endian.
pub fn write_rhs_file(path: &Path, rhs: &RhsCoefficients) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut buf = Vec::with_capacity(16 + rhs.len() * 21);
    buf.extend_from_slice(RHS_MAGIC);
    buf.extend_from_slice(&RHS_VERSION.to_le_bytes());
    buf.extend_from_slice(&(rhs.len() as u64).to_le_bytes());
    for (m, v) in rhs.modes.iter().zip(&rhs.values) {
        buf.push(m.family.id());
        for k in m.k {
            buf.extend_from_slice(&k.to_le_bytes());
        }
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_rhs_file(path: &Path) -> Result<RhsCoefficients> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let bad = |reason: &str| Error::format(path, reason);
    if bytes.len() < 16 || &bytes[0..4] != RHS_MAGIC {
        return Err(bad("missing DFRC header"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != RHS_VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let count = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    if bytes.len() != 16 + count * 21 {
        return Err(bad("length does not match mode count"));
    }
    let mut modes = Vec::with_capacity(count);
    let mut values = Vec::with_capacity(count);
    for rec in bytes[16..].chunks_exact(21) {
        let family = BasisFamily::from_id(rec[0]).ok_or_else(|| bad("unknown family id"))?;
        let mut k = [0u32; 3];
        for (a, dst) in k.iter_mut().enumerate() {
            *dst = u32::from_le_bytes(rec[1 + 4 * a..5 + 4 * a].try_into().unwrap());
        }
        modes.push(ModeIndex { family, k });
        values.push(f64::from_le_bytes(rec[13..21].try_into().unwrap()));
    }
    Ok(RhsCoefficients { modes, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::enumerate_modes;
    use std::f64::consts::PI;

    fn setup(n: usize, k: u32) -> (MidpointGrid, ModeSet, ResidualAssembler) {
        let grid = MidpointGrid::uniform(2, n).unwrap();
        let modes = enumerate_modes(2, &[k, k]).unwrap();
        let asm = ResidualAssembler::new(&grid, &modes, Execution::Sequential).unwrap();
        (grid, modes, asm)
    }

    #[test]
    fn pythagorean_loss_split() {
        let modes = ModeSet::from_modes(
            vec![1, 1],
            0,
            vec![
                ModeIndex::new(BasisFamily::Grad2D, &[1, 1]),
                ModeIndex::new(BasisFamily::Rot2D, &[0, 1]),
            ],
        )
        .unwrap();
        let b = discretized_loss(&[3.0, 4.0], &modes);
        assert_eq!(b.loss, 5.0);
        assert_eq!(b.grad_sq, 9.0);
        assert_eq!(b.x0_sq, 16.0);
        assert_eq!(discretized_loss(&[0.0, 0.0], &modes).loss, 0.0);
    }

    #[test]
    fn zero_field_gives_negative_rhs() {
        let (grid, modes, asm) = setup(8, 4);
        let rhs = RhsCoefficients::new(
            &modes,
            (0..modes.len()).map(|i| (i as f64 * 0.3).sin()).collect(),
        )
        .unwrap();
        let mat = MaterialField::unit_coercive().sample(&grid).unwrap();
        let r = asm
            .residual_coefficients(&FieldSamples::zeros(2, grid.len()), &mat, &rhs)
            .unwrap();
        for (a, b) in r.iter().zip(rhs.values()) {
            assert_eq!(*a, -b);
        }
    }

    #[test]
    fn trig_tables_reproduce_trig_values() {
        let n = 6;
        let (s, c) = trig_tables(n, n).unwrap();
        let g = MidpointGrid::uniform(2, n).unwrap();
        let x = g.nodes(0);
        for k in 0..=n {
            for i in 0..n {
                assert!((s[k * n + i] - (k as f64 * x[i]).sin()).abs() < 1e-13);
                assert!((c[k * n + i] - (k as f64 * x[i]).cos()).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn under_resolved_grids_are_rejected() {
        let grid = MidpointGrid::uniform(2, 4).unwrap();
        let modes = enumerate_modes(2, &[5, 5]).unwrap();
        assert!(matches!(
            ResidualAssembler::new(&grid, &modes, Execution::Sequential),
            Err(Error::UnderResolved { .. })
        ));
    }

    #[test]
    fn zero_omega_is_rejected() {
        let r = MaterialField::new(
            Coefficient::Constant(1.0),
            Coefficient::Constant(1.0),
            FormKind::Maxwell { omega: 0.0 },
        );
        assert!(matches!(r, Err(Error::Material(_))));
        let zero_mu = MaterialField::new(
            Coefficient::Constant(0.0),
            Coefficient::Constant(1.0),
            FormKind::Coercive,
        )
        .unwrap();
        assert!(zero_mu
            .sample(&MidpointGrid::uniform(2, 2).unwrap())
            .is_err());
    }

    #[test]
    fn ball_coefficient_assigns_boundary_outside() {
        let c = Coefficient::Ball {
            center: vec![PI / 2.0, PI / 2.0],
            radius_sq: 1.0,
            inside: 3.0,
            outside: 1.0,
        };
        assert_eq!(c.at(&[PI / 2.0, PI / 2.0]), 3.0);
        assert_eq!(c.at(&[PI / 2.0 + 1.0, PI / 2.0]), 1.0);
        assert_eq!(c.at(&[0.1, 0.1]), 1.0);
    }

    #[test]
    fn rhs_file_roundtrip() {
        let (_, modes, _) = setup(8, 3);
        let rhs = RhsCoefficients::new(
            &modes,
            (0..modes.len()).map(|i| 1.0 / (i as f64 + 0.5)).collect(),
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rhs.dfrc");
        write_rhs_file(&path, &rhs).unwrap();
        let bytes = fs::read(&path).unwrap();
        assert_eq!(&bytes[0..4], b"DFRC");
        assert_eq!(bytes.len(), 16 + 21 * modes.len());
        assert_eq!(read_rhs_file(&path).unwrap(), rhs);
        fs::write(&path, b"nope").unwrap();
        assert!(matches!(read_rhs_file(&path), Err(Error::Format { .. })));
    }

    #[test]
    fn mismatched_rhs_is_rejected() {
        let (grid, _, asm) = setup(8, 2);
        let other = enumerate_modes(2, &[1, 1]).unwrap();
        let mat = MaterialField::unit_coercive().sample(&grid).unwrap();
        let r = asm.residual_coefficients(
            &FieldSamples::zeros(2, grid.len()),
            &mat,
            &RhsCoefficients::zeros(&other),
        );
        assert!(matches!(r, Err(Error::ShapeMismatch(_))));
    }

    fn direct_projection(
        asm: &ResidualAssembler,
        material: &MaterialField,
        value: impl Fn(&[f64]) -> Vec<f64>,
        curl: impl Fn(&[f64]) -> Vec<f64>,
    ) -> Vec<f64> {
        let grid = asm.grid();
        asm.modes()
            .functions()
            .iter()
            .map(|phi| {
                grid.integrate(|p| {
                    let (inv_mu, kappa) = material.weights_at(p).unwrap();
                    let e = value(p);
                    let c = curl(p);
                    let pv = phi.evaluate(p).unwrap();
                    let pc = phi.evaluate_curl(p).unwrap();
                    kappa * e.iter().zip(&pv).map(|(a, b)| a * b).sum::<f64>()
                        + inv_mu * c.iter().zip(&pc).map(|(a, b)| a * b).sum::<f64>()
                })
            })
            .collect()
    }

    #[test]
    fn transform_projection_matches_pointwise_quadrature_2d() {
        let grid = MidpointGrid::new(vec![12, 10]).unwrap();
        let modes = enumerate_modes(2, &[5, 4]).unwrap();
        let asm = ResidualAssembler::new(&grid, &modes, Execution::Sequential).unwrap();
        let material = MaterialField::new(
            Coefficient::Ball {
                center: vec![1.5, 1.6],
                radius_sq: 0.8,
                inside: 3.0,
                outside: 1.0,
            },
            Coefficient::Constant(2.0),
            FormKind::Maxwell { omega: 1.25 },
        )
        .unwrap();
        let value = |p: &[f64]| vec![p[0] * p[1].cos(), (p[0] - p[1]).exp()];
        let curl = |p: &[f64]| vec![(p[0] * p[1]).sin() + 0.3];
        let pts = grid.points();
        let samples = FieldSamples::from_fn(&pts, 2, value, curl);
        let mat = material.sample(&grid).unwrap();
        let r = asm
            .residual_coefficients(&samples, &mat, &RhsCoefficients::zeros(&modes))
            .unwrap();
        let direct = direct_projection(&asm, &material, value, curl);
        for (a, b) in r.iter().zip(&direct) {
            assert!((a - b).abs() < 1e-11 * (1.0 + b.abs()), "{a} vs {b}");
        }
        let pointwise = asm
            .project_points(
                &pts,
                &vec![grid.weight(); grid.len()],
                &asm.bilinear_channels(&samples, &mat).unwrap(),
            )
            .unwrap();
        for (a, b) in pointwise.iter().zip(&direct) {
            assert!((a - b).abs() < 1e-11 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn transform_projection_matches_pointwise_quadrature_3d() {
        let grid = MidpointGrid::new(vec![6, 7, 5]).unwrap();
        let modes = enumerate_modes(3, &[3, 2, 2]).unwrap();
        let asm = ResidualAssembler::new(&grid, &modes, Execution::Sequential).unwrap();
        let material = MaterialField::unit_coercive();
        let value = |p: &[f64]| vec![p[1] * p[2], p[0].sin(), p[2] * p[2] - p[0]];
        let curl = |p: &[f64]| vec![p[0], p[1] * p[0], (p[2] + p[1]).cos()];
        let samples = FieldSamples::from_fn(&grid.points(), 3, value, curl);
        let mat = material.sample(&grid).unwrap();
        let r = asm
            .residual_coefficients(&samples, &mat, &RhsCoefficients::zeros(&modes))
            .unwrap();
        let direct = direct_projection(&asm, &material, value, curl);
        for (a, b) in r.iter().zip(&direct) {
            assert!((a - b).abs() < 1e-11 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn synthesis_is_the_adjoint_of_projection() {
        for (dims, cut) in [
            (vec![9usize, 8], vec![4u32, 5]),
            (vec![5, 4, 6], vec![2, 3, 2]),
        ] {
            let grid = MidpointGrid::new(dims).unwrap();
            let modes = enumerate_modes(grid.dim(), &cut).unwrap();
            let asm = ResidualAssembler::new(&grid, &modes, Execution::Sequential).unwrap();
            let n = grid.len();
            let signal = |seed: f64| -> Vec<f64> {
                (0..n).map(|i| ((i as f64 + seed) * 0.731).sin()).collect()
            };
            let data = ChannelData {
                values: (0..grid.dim()).map(|c| signal(c as f64)).collect(),
                curls: (0..curl_dim(grid.dim()))
                    .map(|c| signal(10.0 + c as f64))
                    .collect(),
            };
            let w: Vec<f64> = (0..modes.len()).map(|i| (i as f64 * 1.3).cos()).collect();
            let lhs: f64 = asm
                .project(&data)
                .unwrap()
                .iter()
                .zip(&w)
                .map(|(a, b)| a * b)
                .sum();
            let back = asm.synthesize(&w).unwrap();
            let rhs: f64 = data
                .values
                .iter()
                .zip(&back.values)
                .chain(data.curls.iter().zip(&back.curls))
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>())
                .sum();
            assert!(
                (lhs - rhs).abs() < 1e-11 * (1.0 + lhs.abs()),
                "{lhs} vs {rhs}"
            );
        }
    }

    #[test]
    fn sequential_and_parallel_projections_agree_bitwise() {
        let grid = MidpointGrid::uniform(2, 40).unwrap();
        let modes = enumerate_modes(2, &[20, 20]).unwrap();
        let asm = ResidualAssembler::new(&grid, &modes, Execution::Sequential).unwrap();
        let n = grid.len();
        let data = ChannelData {
            values: vec![(0..n).map(|i| (i as f64).sqrt()).collect(); 2],
            curls: vec![(0..n).map(|i| (i as f64 * 0.1).cos()).collect()],
        };
        let seq = asm.project(&data).unwrap();
        let par = asm
            .clone()
            .with_execution(Execution::Parallel)
            .project(&data)
            .unwrap();
        assert_eq!(seq, par);
    }
}
