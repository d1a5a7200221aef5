//! Orthonormal basis of `H_0(curl)` on `[0, pi]^n`, `n = 2, 3`.
//!
//! The space splits into gradients of Dirichlet Laplacian eigenfunctions
//! (curl-free, eigenvalue 1) and a divergence-free complement: rotated
//! gradients of Neumann eigenfunctions in 2D, TM/TE modes built from mixed
//! eigenfunctions in 3D. Each element is kept in closed form as sums of
//! separable trigonometric products, so values, curls and norms are exact.

pub mod symbolic;

use std::f64::consts::PI;
use std::fmt;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::grid::MidpointGrid;
use crate::transforms::unravel;

use symbolic::{Factor, Poly, VectorPoly};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BasisFamily {
    Grad2D,
    Rot2D,
    Grad3D,
    Tm3D,
    Te3D,
}

impl BasisFamily {
    pub fn dim(self) -> usize {
        match self {
            BasisFamily::Grad2D | BasisFamily::Rot2D => 2,
            _ => 3,
        }
    }

    /// `true` for the curl-free gradient families.
    pub fn is_gradient(self) -> bool {
        matches!(self, BasisFamily::Grad2D | BasisFamily::Grad3D)
    }

    pub fn name(self) -> &'static str {
        match self {
            BasisFamily::Grad2D => "grad2d",
            BasisFamily::Rot2D => "rot2d",
            BasisFamily::Grad3D => "grad3d",
            BasisFamily::Tm3D => "tm3d",
            BasisFamily::Te3D => "te3d",
        }
    }

    /// Identifier used in binary coefficient files.
    pub fn id(self) -> u8 {
        match self {
            BasisFamily::Grad2D => 0,
            BasisFamily::Rot2D => 1,
            BasisFamily::Grad3D => 2,
            BasisFamily::Tm3D => 3,
            BasisFamily::Te3D => 4,
        }
    }

    pub fn from_id(id: u8) -> Option<Self> {
        Some(match id {
            0 => BasisFamily::Grad2D,
            1 => BasisFamily::Rot2D,
            2 => BasisFamily::Grad3D,
            3 => BasisFamily::Tm3D,
            4 => BasisFamily::Te3D,
            _ => return None,
        })
    }

    pub fn families_for(dim: usize) -> &'static [BasisFamily] {
        match dim {
            2 => &[BasisFamily::Grad2D, BasisFamily::Rot2D],
            _ => &[BasisFamily::Grad3D, BasisFamily::Tm3D, BasisFamily::Te3D],
        }
    }
}

impl fmt::Display for BasisFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Multi-index of one basis element; unused trailing entries are zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ModeIndex {
    pub family: BasisFamily,
    pub k: [u32; 3],
}

impl ModeIndex {
    pub fn new(family: BasisFamily, k: &[u32]) -> Self {
        let mut kk = [0; 3];
        kk[..k.len()].copy_from_slice(k);
        ModeIndex { family, k: kk }
    }

    pub fn dim(&self) -> usize {
        self.family.dim()
    }

    pub fn wavenumbers(&self) -> &[u32] {
        &self.k[..self.dim()]
    }

    pub fn norm_sq(&self) -> f64 {
        self.wavenumbers().iter().map(|&k| (k * k) as f64).sum()
    }

    /// Validity predicate; `axis` is the distinguished direction of TM/TE modes.
    pub fn is_valid(&self, axis: usize) -> bool {
        let k = self.wavenumbers();
        match self.family {
            BasisFamily::Grad2D | BasisFamily::Grad3D => k.iter().all(|&v| v >= 1),
            BasisFamily::Rot2D => k.iter().any(|&v| v != 0),
            BasisFamily::Tm3D => k[axis] >= 1 && (0..3).filter(|&a| a != axis).any(|a| k[a] != 0),
            BasisFamily::Te3D => (0..3).filter(|&a| a != axis).all(|a| k[a] >= 1),
        }
    }
}

/// One normalized basis element with its curl.
#[derive(Debug, Clone)]
pub struct BasisFunction {
    mode: ModeIndex,
    axis: usize,
    value: VectorPoly,
    curl: VectorPoly,
    eigenvalue: f64,
}

impl BasisFunction {
    /// Builds the element for `mode`; `axis` selects the TM/TE distinguished direction.
    pub fn new(mode: ModeIndex, axis: usize) -> Result<Self> {
        let dim = mode.dim();
        if axis >= dim || !mode.is_valid(axis) {
            return Err(Error::InvalidMode {
                family: mode.family.name(),
                k: mode.wavenumbers().to_vec(),
            });
        }
        let k = mode.wavenumbers();
        let potential = |trig_for_axis: &dyn Fn(usize) -> bool| {
            let factors = (0..dim)
                .map(|a| {
                    if trig_for_axis(a) {
                        Factor::sin(k[a])
                    } else {
                        Factor::cos(k[a])
                    }
                })
                .collect();
            Poly::monomial(1.0, factors)
        };
        let unnormalized: VectorPoly = match mode.family {
            BasisFamily::Grad2D | BasisFamily::Grad3D => {
                symbolic::gradient(&potential(&|_| true), dim)
            }
            BasisFamily::Rot2D => symbolic::curl_adjoint_2d(&potential(&|_| false)),
            BasisFamily::Tm3D => {
                let p = potential(&|a| a == axis);
                symbolic::curl(&along_axis(p, axis))
            }
            BasisFamily::Te3D => {
                let q = potential(&|a| a != axis);
                symbolic::curl_of_curl(&along_axis(q, axis))
            }
        };
        let unnormalized_curl = symbolic::curl(&unnormalized);
        let norm_sq = symbolic::inner_product(&unnormalized, &unnormalized)
            + symbolic::inner_product(&unnormalized_curl, &unnormalized_curl);
        let s = 1.0 / norm_sq.sqrt();
        let value: VectorPoly = unnormalized.iter().map(|p| p.scale(s)).collect();
        let curl = symbolic::curl(&value);
        let eigenvalue = if mode.family.is_gradient() {
            1.0
        } else {
            1.0 + mode.norm_sq()
        };
        Ok(BasisFunction {
            mode,
            axis,
            value,
            curl,
            eigenvalue,
        })
    }

    pub fn mode(&self) -> ModeIndex {
        self.mode
    }

    pub fn family(&self) -> BasisFamily {
        self.mode.family
    }

    pub fn dim(&self) -> usize {
        self.mode.dim()
    }

    pub fn distinguished_axis(&self) -> usize {
        self.axis
    }

    /// Eigenvalue of `1 + curl curl`: `1 + |k|^2` on the divergence-free part, 1 on gradients.
    pub fn eigenvalue(&self) -> f64 {
        self.eigenvalue
    }

    pub fn value_components(&self) -> &[Poly] {
        &self.value
    }

    /// One component in 2D (scalar curl), three in 3D.
    pub fn curl_components(&self) -> &[Poly] {
        &self.curl
    }

    pub fn curl_of_curl(&self) -> VectorPoly {
        symbolic::curl_of_curl(&self.value)
    }

    pub fn divergence(&self) -> Poly {
        symbolic::divergence(&self.value)
    }

    /// Exact `H(curl)` norm from the closed form.
    pub fn analytic_norm(&self) -> f64 {
        (symbolic::inner_product(&self.value, &self.value)
            + symbolic::inner_product(&self.curl, &self.curl))
        .sqrt()
    }

    pub fn evaluate(&self, p: &[f64]) -> Result<Vec<f64>> {
        check_domain(p, self.dim())?;
        Ok(self.value_unchecked(p))
    }

    pub fn evaluate_curl(&self, p: &[f64]) -> Result<Vec<f64>> {
        check_domain(p, self.dim())?;
        Ok(self.curl_unchecked(p))
    }

    pub(crate) fn value_unchecked(&self, p: &[f64]) -> Vec<f64> {
        self.value.iter().map(|c| c.eval(p)).collect()
    }

    pub(crate) fn curl_unchecked(&self, p: &[f64]) -> Vec<f64> {
        self.curl.iter().map(|c| c.eval(p)).collect()
    }
}

fn along_axis(p: Poly, axis: usize) -> VectorPoly {
    (0..3)
        .map(|a| if a == axis { p.clone() } else { Poly::zero() })
        .collect()
}

fn check_domain(p: &[f64], dim: usize) -> Result<()> {
    const TOL: f64 = 1e-12;
    if p.len() != dim || p.iter().any(|&x| !(-TOL..=PI + TOL).contains(&x)) {
        return Err(Error::Domain {
            point: p.to_vec(),
            dim,
        });
    }
    Ok(())
}

/// Ordered list of valid modes up to per-axis cutoffs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModeSet {
    cutoffs: Vec<u32>,
    axis: usize,
    modes: Vec<ModeIndex>,
}

/// Enumerates all valid modes with `k_a <= cutoffs[a]`, ordered by family then index.
pub fn enumerate_modes(dim: usize, cutoffs: &[u32]) -> Result<ModeSet> {
    enumerate_modes_with_axis(dim, cutoffs, 0)
}

pub fn enumerate_modes_with_axis(dim: usize, cutoffs: &[u32], axis: usize) -> Result<ModeSet> {
    if !(2..=3).contains(&dim) || cutoffs.len() != dim || axis >= dim {
        return Err(Error::InvalidSize(format!(
            "dimension {dim} with cutoffs {cutoffs:?} and axis {axis}"
        )));
    }
    if cutoffs.contains(&0) {
        return Err(Error::InvalidSize(format!(
            "mode cutoffs must be positive: {cutoffs:?}"
        )));
    }
    // Row-major unravel gives lexicographic order within a family.
    let extents: Vec<usize> = cutoffs.iter().map(|&c| c as usize + 1).collect();
    let total: usize = extents.iter().product();
    let mut idx = vec![0usize; dim];
    let mut modes = Vec::new();
    for &family in BasisFamily::families_for(dim) {
        for flat in 0..total {
            unravel(flat, &extents, &mut idx);
            let mut k = [0u32; 3];
            for (dst, &i) in k.iter_mut().zip(&idx) {
                *dst = i as u32;
            }
            let m = ModeIndex { family, k };
            if m.is_valid(axis) {
                modes.push(m);
            }
        }
    }
    Ok(ModeSet {
        cutoffs: cutoffs.to_vec(),
        axis,
        modes,
    })
}

impl ModeSet {
    pub fn from_modes(cutoffs: Vec<u32>, axis: usize, modes: Vec<ModeIndex>) -> Result<Self> {
        for m in &modes {
            if m.dim() != cutoffs.len() || !m.is_valid(axis) {
                return Err(Error::InvalidMode {
                    family: m.family.name(),
                    k: m.wavenumbers().to_vec(),
                });
            }
        }
        Ok(ModeSet {
            cutoffs,
            axis,
            modes,
        })
    }

    pub fn dim(&self) -> usize {
        self.cutoffs.len()
    }

    pub fn cutoffs(&self) -> &[u32] {
        &self.cutoffs
    }

    pub fn distinguished_axis(&self) -> usize {
        self.axis
    }

    pub fn modes(&self) -> &[ModeIndex] {
        &self.modes
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn count(&self, family: BasisFamily) -> usize {
        self.modes.iter().filter(|m| m.family == family).count()
    }

    /// Largest wavenumber actually used on `axis`.
    pub fn max_wavenumber(&self, axis: usize) -> u32 {
        self.modes.iter().map(|m| m.k[axis]).max().unwrap_or(0)
    }

    pub fn functions(&self) -> Vec<BasisFunction> {
        self.modes
            .iter()
            .map(|&m| BasisFunction::new(m, self.axis).expect("mode set holds valid modes"))
            .collect()
    }
}

/// Midpoint quadrature of `int curl(a) . curl(b) + a . b`.
pub fn hcurl_inner_product(a: &BasisFunction, b: &BasisFunction, grid: &MidpointGrid) -> f64 {
    grid.integrate(|p| {
        let dot = |x: Vec<f64>, y: Vec<f64>| x.iter().zip(&y).map(|(u, v)| u * v).sum::<f64>();
        dot(a.value_unchecked(p), b.value_unchecked(p))
            + dot(a.curl_unchecked(p), b.curl_unchecked(p))
    })
}

#[derive(Debug, Clone)]
pub struct FamilyDeviation {
    pub family: BasisFamily,
    pub count: usize,
    pub max_off_diagonal: f64,
    pub max_diagonal_deviation: f64,
}

/// Quadrature Gram matrix of a set of basis functions.
#[derive(Debug, Clone)]
pub struct GramReport {
    pub size: usize,
    pub matrix: Vec<f64>,
    pub max_off_diagonal: f64,
    pub max_diagonal_deviation: f64,
    pub per_family: Vec<FamilyDeviation>,
    /// Set when some axis has fewer than twice the largest wavenumber in points.
    pub under_resolved: bool,
}

impl GramReport {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * self.size + j]
    }

    /// `max |G - I|`.
    pub fn max_deviation(&self) -> f64 {
        self.max_off_diagonal.max(self.max_diagonal_deviation)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("family,count,max_off_diagonal,max_diagonal_deviation\n");
        for f in &self.per_family {
            s.push_str(&format!(
                "{},{},{:.6e},{:.6e}\n",
                f.family, f.count, f.max_off_diagonal, f.max_diagonal_deviation
            ));
        }
        s.push_str(&format!(
            "all,{},{:.6e},{:.6e}\n",
            self.size, self.max_off_diagonal, self.max_diagonal_deviation
        ));
        s
    }
}

/// Pairwise `H(curl)` inner products by midpoint quadrature at the grid nodes.
pub fn gram_matrix(modes: &ModeSet, grid: &MidpointGrid, exec: Execution) -> Result<GramReport> {
    if grid.dim() != modes.dim() {
        return Err(Error::ShapeMismatch(format!(
            "{}D grid for {}D modes",
            grid.dim(),
            modes.dim()
        )));
    }
    let funcs = modes.functions();
    let m = funcs.len();
    let dim = grid.dim();
    let under_resolved = (0..dim).any(|a| grid.counts()[a] < 2 * modes.max_wavenumber(a) as usize);
    let points = grid.points();
    let npts = grid.len();
    let comps = dim + if dim == 2 { 1 } else { 3 };

    let sums = exec.sum_chunks(npts, 1024, m * m, |range, acc| {
        let mut vals = vec![0.0; m * comps];
        for i in range {
            let p = &points[i * dim..(i + 1) * dim];
            for (f, func) in funcs.iter().enumerate() {
                let row = &mut vals[f * comps..(f + 1) * comps];
                for (c, poly) in func.value_components().iter().enumerate() {
                    row[c] = poly.eval(p);
                }
                for (c, poly) in func.curl_components().iter().enumerate() {
                    row[dim + c] = poly.eval(p);
                }
            }
            for a in 0..m {
                let va = &vals[a * comps..(a + 1) * comps];
                for b in a..m {
                    let vb = &vals[b * comps..(b + 1) * comps];
                    acc[a * m + b] += va.iter().zip(vb).map(|(x, y)| x * y).sum::<f64>();
                }
            }
        }
    });

    let w = grid.weight();
    let mut matrix = vec![0.0; m * m];
    for a in 0..m {
        for b in a..m {
            let v = sums[a * m + b] * w;
            matrix[a * m + b] = v;
            matrix[b * m + a] = v;
        }
    }

    let mut per_family = Vec::new();
    for &family in BasisFamily::families_for(dim) {
        let idx: Vec<usize> = (0..m).filter(|&i| funcs[i].family() == family).collect();
        let mut off = 0.0f64;
        let mut diag = 0.0f64;
        for &i in &idx {
            for j in 0..m {
                let v = matrix[i * m + j];
                if i == j {
                    diag = diag.max((v - 1.0).abs());
                } else {
                    off = off.max(v.abs());
                }
            }
        }
        per_family.push(FamilyDeviation {
            family,
            count: idx.len(),
            max_off_diagonal: off,
            max_diagonal_deviation: diag,
        });
    }
    let max_off_diagonal = per_family
        .iter()
        .map(|f| f.max_off_diagonal)
        .fold(0.0, f64::max);
    let max_diagonal_deviation = per_family
        .iter()
        .map(|f| f.max_diagonal_deviation)
        .fold(0.0, f64::max);
    Ok(GramReport {
        size: m,
        matrix,
        max_off_diagonal,
        max_diagonal_deviation,
        per_family,
        under_resolved,
    })
}
