//! Manufactured-solution test cases, error metric and loss/error diagnostics.

use std::f64::consts::{FRAC_PI_2, PI};

use crate::basis::ModeSet;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::grid::MidpointGrid;
use crate::network::CandidateField;
use crate::pipeline::{ErrorMetric, LossPipeline};
use crate::residual::{
    curl_dim, ChannelData, Coefficient, FieldSamples, FormKind, MaterialField, ResidualAssembler,
    RhsCoefficients,
};
use crate::training::TrainingRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CaseId {
    /// Smooth 2D solution, coercive form with unit coefficients.
    Case1,
    /// Piecewise coefficients on a disk, coercive form.
    Case21,
    /// Piecewise coefficients on a disk, Maxwell form with `omega = 1.25`.
    Case22,
    /// Smooth 3D solution, Maxwell form with `omega = 1.5`.
    Case3,
    /// Case 2.1 physics with as many quadrature points as modes.
    Case21Underintegrated,
}

impl CaseId {
    pub const ALL: [CaseId; 5] = [
        CaseId::Case1,
        CaseId::Case21,
        CaseId::Case22,
        CaseId::Case3,
        CaseId::Case21Underintegrated,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CaseId::Case1 => "case1",
            CaseId::Case21 => "case2_1",
            CaseId::Case22 => "case2_2",
            CaseId::Case3 => "case3",
            CaseId::Case21Underintegrated => "case2_1_underintegrated",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == name)
            .ok_or_else(|| {
                let names: Vec<&str> = Self::ALL.iter().map(|c| c.name()).collect();
                Error::Config(format!("unknown case '{name}' (expected one of {names:?})"))
            })
    }

    pub fn dim(self) -> usize {
        match self {
            CaseId::Case3 => 3,
            _ => 2,
        }
    }

    /// The case whose fields and materials this one uses.
    fn physics(self) -> CaseId {
        match self {
            CaseId::Case21Underintegrated => CaseId::Case21,
            c => c,
        }
    }
}

impl std::fmt::Display for CaseId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RhsMode {
    /// `l_k = Q[J . Phi_k]` on the working grid from a strong-form source.
    Strong,
    /// `l_k = Q[b(E*, Phi_k)]` on a grid `factor` times finer, with cells cut
    /// by a material interface subdivided `subdivision` times further per axis.
    WeakRefined { factor: usize, subdivision: usize },
}

/// Grid, mode and iteration counts for one run scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScaleDefaults {
    pub train_points: usize,
    pub validation_points: usize,
    pub modes: u32,
    pub iterations: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseSpec {
    pub id: CaseId,
    pub dim: usize,
    pub material: MaterialField,
    pub rhs_mode: RhsMode,
    pub full: ScaleDefaults,
    pub desk: ScaleDefaults,
}

const DISK_MU: (f64, f64) = (3.0, 1.0);
const DISK_EPS: (f64, f64) = (1.0, 3.0);
const DISK_K: (f64, f64) = (1.0, 35.0);
const DISK_R: f64 = 6.0;
const CASE22_OMEGA: f64 = 1.25;
const CASE3_OMEGA: f64 = 1.5;

fn disk(inside: f64, outside: f64) -> Coefficient {
    Coefficient::Ball {
        center: vec![FRAC_PI_2, FRAC_PI_2],
        radius_sq: 1.0,
        inside,
        outside,
    }
}

pub fn case_spec(id: CaseId) -> CaseSpec {
    let scale = |train_points, validation_points, modes, iterations| ScaleDefaults {
        train_points,
        validation_points,
        modes,
        iterations,
    };
    let weak = RhsMode::WeakRefined {
        factor: 4,
        subdivision: 4,
    };
    let disk_material = |form| MaterialField {
        mu: disk(DISK_MU.0, DISK_MU.1),
        epsilon: disk(DISK_EPS.0, DISK_EPS.1),
        form,
    };
    match id {
        CaseId::Case1 => CaseSpec {
            id,
            dim: 2,
            material: MaterialField::unit_coercive(),
            rhs_mode: RhsMode::Strong,
            full: scale(100, 117, 100, 10_000),
            desk: scale(32, 38, 16, 5_000),
        },
        CaseId::Case21 => CaseSpec {
            id,
            dim: 2,
            material: disk_material(FormKind::Coercive),
            rhs_mode: weak,
            full: scale(200, 234, 150, 10_000),
            desk: scale(64, 75, 32, 2_000),
        },
        CaseId::Case22 => CaseSpec {
            id,
            dim: 2,
            material: disk_material(FormKind::Maxwell {
                omega: CASE22_OMEGA,
            }),
            rhs_mode: weak,
            full: scale(200, 234, 150, 10_000),
            desk: scale(64, 75, 32, 2_000),
        },
        CaseId::Case3 => CaseSpec {
            id,
            dim: 3,
            material: MaterialField {
                mu: Coefficient::Constant(1.0),
                epsilon: Coefficient::Constant(1.0),
                form: FormKind::Maxwell { omega: CASE3_OMEGA },
            },
            rhs_mode: RhsMode::Strong,
            full: scale(50, 60, 50, 100_000),
            desk: scale(16, 20, 8, 2_000),
        },
        CaseId::Case21Underintegrated => CaseSpec {
            id,
            ..{
                let mut s = case_spec(CaseId::Case21);
                s.full = scale(100, 120, 100, 10_000);
                s.desk = scale(32, 38, 32, 2_000);
                s
            }
        },
    }
}

/// `(mu, eps)` at a point.
pub fn material_at(id: CaseId, p: &[f64]) -> (f64, f64) {
    let m = case_spec(id).material;
    (m.mu.at(p), m.epsilon.at(p))
}

/// `f+ = x'^2 + y'^2` and `f- = x'^2 - y'^2` with `x' = x - pi/2`, `y' = y - pi/2`.
fn disk_coords(p: &[f64]) -> (f64, f64, f64, f64) {
    let (xs, ys) = (p[0] - FRAC_PI_2, p[1] - FRAC_PI_2);
    (xs, ys, xs * xs + ys * ys, xs * xs - ys * ys)
}

/// Amplitude `H(f-)` and `H'(f-)` of the disk solution `E = -mu k H(f-) (y', x')`.
fn disk_profile(fp: f64, fm: f64) -> (f64, f64, f64) {
    if fp < 1.0 {
        (-DISK_MU.0 * DISK_K.0, 1.0 - fm, -1.0)
    } else {
        let r2 = DISK_R * DISK_R;
        (
            -DISK_MU.1 * DISK_K.1,
            (1.0 - fm) * (r2 - fm),
            2.0 * fm - 1.0 - r2,
        )
    }
}

pub fn exact_value(id: CaseId, p: &[f64]) -> Vec<f64> {
    match id.physics() {
        CaseId::Case1 => {
            let (x, y) = (p[0], p[1]);
            vec![x * y * (y - PI), x * y * (x - PI)]
        }
        CaseId::Case3 => {
            let w = CASE3_OMEGA;
            let (x, y, z) = (p[0], p[1], p[2]);
            vec![
                y.sin() * z.sin() * (w * x).sin(),
                x.sin() * z.sin() * (w * y).sin(),
                x.sin() * y.sin() * (w * z).sin(),
            ]
        }
        _ => {
            let (xs, ys, fp, fm) = disk_coords(p);
            let (amp, h, _) = disk_profile(fp, fm);
            vec![amp * h * ys, amp * h * xs]
        }
    }
}

/// Curl of the exact field, with the 2D convention `d_y E_1 - d_x E_2`.
pub fn exact_curl(id: CaseId, p: &[f64]) -> Vec<f64> {
    match id.physics() {
        CaseId::Case1 => vec![PI * (p[1] - p[0])],
        CaseId::Case3 => {
            let w = CASE3_OMEGA;
            let (x, y, z) = (p[0], p[1], p[2]);
            vec![
                x.sin() * (y.cos() * (w * z).sin() - z.cos() * (w * y).sin()),
                y.sin() * (z.cos() * (w * x).sin() - x.cos() * (w * z).sin()),
                z.sin() * (x.cos() * (w * y).sin() - y.cos() * (w * x).sin()),
            ]
        }
        _ => {
            let (_, _, fp, fm) = disk_coords(p);
            let (amp, _, dh) = disk_profile(fp, fm);
            vec![-2.0 * amp * dh * fp]
        }
    }
}

/// Strong-form source `J` with `curl* (mu^-1 curl E*) + kappa E* = J`, for the smooth cases.
pub fn strong_source(id: CaseId, p: &[f64]) -> Option<Vec<f64>> {
    match id.physics() {
        CaseId::Case1 => {
            let e = exact_value(id, p);
            Some(vec![e[0] - PI, e[1] - PI])
        }
        CaseId::Case3 => {
            let w = CASE3_OMEGA;
            let e = exact_value(id, p);
            let (s, c) = (|t: f64| t.sin(), |t: f64| t.cos());
            let (x, y, z) = (p[0], p[1], p[2]);
            let grad_div = [
                w * c(x) * (c(w * y) * s(z) + s(y) * c(w * z)),
                w * c(y) * (c(w * z) * s(x) + s(z) * c(w * x)),
                w * c(z) * (c(w * x) * s(y) + s(x) * c(w * y)),
            ];
            Some((0..3).map(|a| (2.0 - w * w) * e[a] + grad_div[a]).collect())
        }
        _ => None,
    }
}

pub fn exact_samples(id: CaseId, points: &[f64]) -> FieldSamples {
    FieldSamples::from_fn(
        points,
        id.dim(),
        |p| exact_value(id, p),
        |p| exact_curl(id, p),
    )
}

/// Right-hand side for `modes` on `grid`, built as the case prescribes.
pub fn build_rhs(
    id: CaseId,
    grid: &MidpointGrid,
    modes: &ModeSet,
    exec: Execution,
) -> Result<RhsCoefficients> {
    let spec = case_spec(id);
    match spec.rhs_mode {
        RhsMode::Strong => {
            let assembler = ResidualAssembler::new(grid, modes, exec)?;
            strong_rhs(id, &assembler)
        }
        RhsMode::WeakRefined {
            factor,
            subdivision,
        } => weak_rhs_refined(
            &spec.material,
            grid,
            modes,
            factor,
            subdivision,
            |p| exact_value(id, p),
            |p| exact_curl(id, p),
            exec,
        ),
    }
}

pub fn strong_rhs(id: CaseId, assembler: &ResidualAssembler) -> Result<RhsCoefficients> {
    let dim = assembler.grid().dim();
    let pts = assembler.grid().points();
    let mut source = Vec::with_capacity(pts.len());
    for p in pts.chunks(dim) {
        let f = strong_source(id, p)
            .ok_or_else(|| Error::Config(format!("{id} has no strong-form source")))?;
        source.extend(f);
    }
    assembler.rhs_from_strong_source(&source)
}

/// `l_k = Q[b(E*, Phi_k)]` on `grid` refined `factor` times per axis.
///
/// Cells of the refined grid straddling the interface of a ball-shaped
/// coefficient are re-integrated with `subdivision^dim` sub-midpoints.
#[allow(clippy::too_many_arguments)]
pub fn weak_rhs_refined(
    material: &MaterialField,
    grid: &MidpointGrid,
    modes: &ModeSet,
    factor: usize,
    subdivision: usize,
    value: impl Fn(&[f64]) -> Vec<f64> + Sync,
    curl: impl Fn(&[f64]) -> Vec<f64> + Sync,
    exec: Execution,
) -> Result<RhsCoefficients> {
    if factor == 0 || subdivision == 0 {
        return Err(Error::InvalidSize(
            "refinement factors must be positive".into(),
        ));
    }
    let dim = grid.dim();
    let fine = MidpointGrid::new(grid.counts().iter().map(|&n| n * factor).collect())?;
    let assembler = ResidualAssembler::new(&fine, modes, exec)?;
    let pts = fine.points();
    let exact = FieldSamples::from_fn(&pts, dim, &value, &curl);
    let mat = material.sample(&fine)?;
    let mut rhs = assembler
        .rhs_from_exact_weak(&exact, &mat)?
        .values()
        .to_vec();

    let interfaces: Vec<(&[f64], f64)> = [&material.mu, &material.epsilon]
        .into_iter()
        .filter_map(|c| match c {
            Coefficient::Ball {
                center, radius_sq, ..
            } => Some((center.as_slice(), *radius_sq)),
            Coefficient::Constant(_) => None,
        })
        .collect();
    if !interfaces.is_empty() && subdivision > 1 {
        let h: Vec<f64> = fine.counts().iter().map(|&n| PI / n as f64).collect();
        let mut centers = Vec::new();
        for p in pts.chunks(dim) {
            if interfaces.iter().any(|(c, r2)| straddles(p, &h, c, *r2)) {
                centers.extend_from_slice(p);
            }
        }
        let ncells = centers.len() / dim;
        if ncells > 0 {
            let sub_count = subdivision.pow(dim as u32);
            let mut sub_points = Vec::with_capacity(ncells * sub_count * dim);
            let mut idx = vec![0usize; dim];
            for c in centers.chunks(dim) {
                for s in 0..sub_count {
                    crate::transforms::unravel(s, &vec![subdivision; dim], &mut idx);
                    for a in 0..dim {
                        let lo = c[a] - 0.5 * h[a];
                        sub_points.push(lo + (idx[a] as f64 + 0.5) * h[a] / subdivision as f64);
                    }
                }
            }
            let w = fine.weight();
            let coarse = weak_channels(material, &centers, dim, &value, &curl)?;
            let refined = weak_channels(material, &sub_points, dim, &value, &curl)?;
            let remove = assembler.project_points(&centers, &vec![w; ncells], &coarse)?;
            let add = assembler.project_points(
                &sub_points,
                &vec![w / sub_count as f64; ncells * sub_count],
                &refined,
            )?;
            for ((r, a), b) in rhs.iter_mut().zip(&add).zip(&remove) {
                *r += a - b;
            }
        }
    }
    RhsCoefficients::new(modes, rhs)
}

/// Whether the axis-aligned cell centered at `p` with widths `h` meets both sides of a sphere.
fn straddles(p: &[f64], h: &[f64], center: &[f64], radius_sq: f64) -> bool {
    let mut near = 0.0;
    let mut far = 0.0;
    for a in 0..p.len() {
        let lo = p[a] - 0.5 * h[a] - center[a];
        let hi = p[a] + 0.5 * h[a] - center[a];
        let n = if lo > 0.0 {
            lo
        } else if hi < 0.0 {
            -hi
        } else {
            0.0
        };
        near += n * n;
        far += lo.abs().max(hi.abs()).powi(2);
    }
    near < radius_sq && far > radius_sq
}

fn weak_channels(
    material: &MaterialField,
    points: &[f64],
    dim: usize,
    value: &impl Fn(&[f64]) -> Vec<f64>,
    curl: &impl Fn(&[f64]) -> Vec<f64>,
) -> Result<ChannelData> {
    let n = points.len() / dim;
    let cd = curl_dim(dim);
    let mut data = ChannelData {
        values: vec![Vec::with_capacity(n); dim],
        curls: vec![Vec::with_capacity(n); cd],
    };
    for p in points.chunks(dim) {
        let (inv_mu, kappa) = material.weights_at(p)?;
        for (c, v) in value(p).into_iter().enumerate() {
            data.values[c].push(kappa * v);
        }
        for (c, v) in curl(p).into_iter().enumerate() {
            data.curls[c].push(inv_mu * v);
        }
    }
    Ok(data)
}

/// Error metric against the exact solution on `grid`.
pub fn error_metric(id: CaseId, grid: &MidpointGrid) -> Result<ErrorMetric> {
    ErrorMetric::new(grid, exact_samples(id, &grid.points()))
}

/// `||E - E*||_{H(curl)} / ||E*||_{H(curl)}` on `grid`.
pub fn relative_error(
    candidate: &CandidateField,
    id: CaseId,
    grid: &MidpointGrid,
    exec: Execution,
) -> Result<f64> {
    error_metric(id, grid)?.relative_error(candidate, exec)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandEntry {
    pub label: String,
    pub loss: f64,
    pub error_norm: f64,
    /// `None` when the error norm is below the skip threshold.
    pub ratio: Option<f64>,
    pub within: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandReport {
    pub lower: f64,
    pub upper: f64,
    pub delta: f64,
    pub entries: Vec<BandEntry>,
}

impl BandReport {
    pub fn pass(&self) -> bool {
        self.entries.iter().all(|e| e.within)
    }

    pub fn ratio_range(&self) -> Option<(f64, f64)> {
        let ratios: Vec<f64> = self.entries.iter().filter_map(|e| e.ratio).collect();
        if ratios.is_empty() {
            return None;
        }
        Some((
            ratios.iter().copied().fold(f64::INFINITY, f64::min),
            ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        ))
    }
}

/// Threshold below which a loss/error pair is treated as the degenerate `0/0` case.
pub const BAND_SKIP_THRESHOLD: f64 = 1e-8;

/// Ratios `L(E) / ||E - E*||_{H(curl)}` against the band `[lower - delta, upper + delta]`.
pub fn equivalence_band_check(
    pipeline: &LossPipeline,
    metric: &ErrorMetric,
    candidates: &[(String, FieldSamples)],
    lower: f64,
    upper: f64,
    delta: f64,
) -> Result<BandReport> {
    if metric.points() != pipeline.points() {
        return Err(Error::ShapeMismatch(
            "band check needs the loss and the error on the same grid".into(),
        ));
    }
    let mut entries = Vec::with_capacity(candidates.len());
    for (label, samples) in candidates {
        let loss = pipeline.loss_of_samples(samples)?.loss;
        let error_norm = metric.error_norm(samples);
        let (ratio, within) = if error_norm < BAND_SKIP_THRESHOLD {
            (None, true)
        } else {
            let r = loss / error_norm;
            (Some(r), r >= lower - delta && r <= upper + delta)
        };
        entries.push(BandEntry {
            label: label.clone(),
            loss,
            error_norm,
            ratio,
            within,
        });
    }
    Ok(BandReport {
        lower,
        upper,
        delta,
        entries,
    })
}

/// Loss/error pairs of a training run with the log-log slope over its final half.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationReport {
    pub pairs: Vec<(f64, f64)>,
    /// Least-squares slope of `log rel_error` against `log loss`; `None` if degenerate.
    pub slope: Option<f64>,
    pub fit_start: usize,
    pub fit_len: usize,
}

pub const MIN_CORRELATION_RECORDS: usize = 100;

/// Pairs each record's validation loss with its relative error.
pub fn correlation_report(records: &[TrainingRecord]) -> Result<CorrelationReport> {
    if records.len() < MIN_CORRELATION_RECORDS {
        return Err(Error::InvalidSize(format!(
            "correlation needs at least {MIN_CORRELATION_RECORDS} records, got {}",
            records.len()
        )));
    }
    let pairs: Vec<(f64, f64)> = records.iter().map(|r| (r.loss_val, r.rel_error)).collect();
    let fit_start = pairs.len() / 2;
    let slope = loglog_slope(&pairs[fit_start..]);
    Ok(CorrelationReport {
        fit_len: pairs.len() - fit_start,
        pairs,
        slope,
        fit_start,
    })
}

/// Ordinary least-squares slope of `ln y` on `ln x`, ignoring non-positive entries.
pub fn loglog_slope(pairs: &[(f64, f64)]) -> Option<f64> {
    let logs: Vec<(f64, f64)> = pairs
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0 && x.is_finite() && y.is_finite())
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if logs.len() < 2 {
        return None;
    }
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= 1e-24 * n {
        return None;
    }
    Some(sxy / sxx)
}

impl CorrelationReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("loss,rel_error\n");
        for (l, e) in &self.pairs {
            s.push_str(&format!("{l:.16e},{e:.16e}\n"));
        }
        s
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "records": self.pairs.len(),
            "fit_start": self.fit_start,
            "fit_len": self.fit_len,
            "slope": self.slope,
            "slope_defined": self.slope.is_some(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn case1_center_value() {
        let e = exact_value(CaseId::Case1, &[FRAC_PI_2, FRAC_PI_2]);
        let v = -PI.powi(3) / 8.0;
        assert!(close(e[0], v, 1e-15) && close(e[1], v, 1e-15));
        assert!((v + 3.8758).abs() < 1e-4);
    }

    #[test]
    fn case3_center_value() {
        let e = exact_value(CaseId::Case3, &[FRAC_PI_2; 3]);
        for c in e {
            assert!(close(c, 0.5f64.sqrt(), 1e-15));
        }
    }

    #[test]
    fn disk_materials() {
        assert_eq!(
            material_at(CaseId::Case21, &[FRAC_PI_2, FRAC_PI_2]),
            (3.0, 1.0)
        );
        assert_eq!(material_at(CaseId::Case21, &[0.1, 0.1]), (1.0, 3.0));
        assert_eq!(material_at(CaseId::Case1, &[0.3, 2.0]), (1.0, 1.0));
        // On the circle the outside branch applies.
        assert_eq!(
            material_at(CaseId::Case22, &[FRAC_PI_2 + 1.0, FRAC_PI_2]),
            (1.0, 3.0)
        );
    }

    fn fd_curl(id: CaseId, p: &[f64]) -> Vec<f64> {
        let h = 1e-6;
        let d = |c: usize, a: usize| {
            let mut q = p.to_vec();
            q[a] += h;
            let up = exact_value(id, &q)[c];
            q[a] -= 2.0 * h;
            (up - exact_value(id, &q)[c]) / (2.0 * h)
        };
        if p.len() == 2 {
            vec![d(0, 1) - d(1, 0)]
        } else {
            vec![d(2, 1) - d(1, 2), d(0, 2) - d(2, 0), d(1, 0) - d(0, 1)]
        }
    }

    #[test]
    fn curls_match_finite_differences() {
        let samples2 = [[0.3, 0.4], [1.2, 2.9], [2.0, 1.1], [1.6, 1.55], [0.2, 2.8]];
        for id in [CaseId::Case1, CaseId::Case21] {
            for p in &samples2 {
                let exact = exact_curl(id, p);
                let fd = fd_curl(id, p);
                assert!(
                    close(exact[0], fd[0], 1e-6),
                    "{id} {p:?}: {exact:?} vs {fd:?}"
                );
            }
        }
        for p in [[0.3, 1.4, 2.2], [2.5, 0.7, 1.9]] {
            let exact = exact_curl(CaseId::Case3, &p);
            let fd = fd_curl(CaseId::Case3, &p);
            for m in 0..3 {
                assert!(close(exact[m], fd[m], 1e-7));
            }
        }
    }

    /// `curl* curl E + kappa E` by nested central differences.
    fn fd_strong_operator(id: CaseId, p: &[f64], kappa: f64) -> Vec<f64> {
        let h = 1e-4;
        let curl_d = |m: usize, a: usize| {
            let mut q = p.to_vec();
            q[a] += h;
            let up = exact_curl(id, &q)[m];
            q[a] -= 2.0 * h;
            (up - exact_curl(id, &q)[m]) / (2.0 * h)
        };
        let e = exact_value(id, p);
        let cc: Vec<f64> = if p.len() == 2 {
            vec![-curl_d(0, 1), curl_d(0, 0)]
        } else {
            vec![
                curl_d(2, 1) - curl_d(1, 2),
                curl_d(0, 2) - curl_d(2, 0),
                curl_d(1, 0) - curl_d(0, 1),
            ]
        };
        cc.iter().zip(&e).map(|(c, v)| c + kappa * v).collect()
    }

    #[test]
    fn strong_sources_match_the_operator() {
        for p in [[0.4, 1.9], [2.7, 0.3]] {
            let fd = fd_strong_operator(CaseId::Case1, &p, 1.0);
            let j = strong_source(CaseId::Case1, &p).unwrap();
            for c in 0..2 {
                assert!(close(j[c], fd[c], 1e-6));
            }
        }
        for p in [[0.4, 1.9, 1.0], [2.7, 0.3, 2.2]] {
            let fd = fd_strong_operator(CaseId::Case3, &p, -CASE3_OMEGA * CASE3_OMEGA);
            let j = strong_source(CaseId::Case3, &p).unwrap();
            for c in 0..3 {
                assert!(close(j[c], fd[c], 1e-6), "{c}: {} vs {}", j[c], fd[c]);
            }
        }
        assert!(strong_source(CaseId::Case21, &[1.0, 1.0]).is_none());
    }

    #[test]
    fn names_roundtrip() {
        for id in CaseId::ALL {
            assert_eq!(CaseId::from_name(id.name()).unwrap(), id);
        }
        assert!(CaseId::from_name("case9").is_err());
    }

    #[test]
    fn slope_of_proportional_series_is_one() {
        let pairs: Vec<(f64, f64)> = (1..200)
            .map(|i| (1.0 / i as f64, 0.37 / i as f64))
            .collect();
        assert!((loglog_slope(&pairs).unwrap() - 1.0).abs() < 1e-12);
        assert!(loglog_slope(&vec![(0.5, 0.2); 50]).is_none());
    }

    #[test]
    fn straddle_detection() {
        let h = [0.1, 0.1];
        let c = [0.0, 0.0];
        assert!(straddles(&[1.0, 0.0], &h, &c, 1.0));
        assert!(!straddles(&[0.5, 0.0], &h, &c, 1.0));
        assert!(!straddles(&[1.2, 0.0], &h, &c, 1.0));
    }
}
