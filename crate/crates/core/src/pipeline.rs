//! Scalar loss of a candidate field on one grid, and its parameter gradient.

use crate::basis::ModeSet;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::grid::MidpointGrid;
use crate::network::CandidateField;
use crate::residual::{
    curl_dim, discretized_loss, FieldSamples, LossBreakdown, MaterialField, MaterialSamples,
    ResidualAssembler, RhsCoefficients,
};

/// `residual_coefficients` composed with the candidate's forward pass and `discretized_loss`.
#[derive(Debug, Clone)]
pub struct LossPipeline {
    assembler: ResidualAssembler,
    points: Vec<f64>,
    material: MaterialSamples,
    rhs: RhsCoefficients,
}

impl LossPipeline {
    pub fn new(
        grid: &MidpointGrid,
        modes: &ModeSet,
        material: &MaterialField,
        rhs: RhsCoefficients,
        exec: Execution,
    ) -> Result<Self> {
        let assembler = ResidualAssembler::new(grid, modes, exec)?;
        Self::from_assembler(assembler, material, rhs)
    }

    pub fn from_assembler(
        assembler: ResidualAssembler,
        material: &MaterialField,
        rhs: RhsCoefficients,
    ) -> Result<Self> {
        if rhs.modes() != assembler.modes().modes() {
            return Err(Error::ShapeMismatch(
                "rhs coefficients belong to a different mode set".into(),
            ));
        }
        let points = assembler.grid().points();
        let material = material.sample(assembler.grid())?;
        Ok(Self {
            assembler,
            points,
            material,
            rhs,
        })
    }

    pub fn assembler(&self) -> &ResidualAssembler {
        &self.assembler
    }

    pub fn grid(&self) -> &MidpointGrid {
        self.assembler.grid()
    }

    pub fn modes(&self) -> &ModeSet {
        self.assembler.modes()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn rhs(&self) -> &RhsCoefficients {
        &self.rhs
    }

    pub fn with_rhs(mut self, rhs: RhsCoefficients) -> Result<Self> {
        if rhs.modes() != self.modes().modes() {
            return Err(Error::ShapeMismatch("rhs for a different mode set".into()));
        }
        self.rhs = rhs;
        Ok(self)
    }

    fn exec(&self) -> Execution {
        self.assembler.execution()
    }

    pub fn residual_of_samples(&self, samples: &FieldSamples) -> Result<Vec<f64>> {
        self.assembler
            .residual_coefficients(samples, &self.material, &self.rhs)
    }

    pub fn loss_of_samples(&self, samples: &FieldSamples) -> Result<LossBreakdown> {
        let r = self.residual_of_samples(samples)?;
        checked(discretized_loss(&r, self.modes()))
    }

    pub fn residual(&self, field: &CandidateField) -> Result<Vec<f64>> {
        let samples = field.forward_with_curl(&self.points, self.exec());
        self.residual_of_samples(&samples)
    }

    pub fn loss(&self, field: &CandidateField) -> Result<LossBreakdown> {
        let r = self.residual(field)?;
        checked(discretized_loss(&r, self.modes()))
    }

    /// Loss and `dL/dtheta`; the gradient is zero when the loss is exactly zero.
    pub fn loss_and_gradient(&self, field: &CandidateField) -> Result<(LossBreakdown, Vec<f64>)> {
        let r = self.residual(field)?;
        let breakdown = checked(discretized_loss(&r, self.modes()))?;
        if breakdown.loss == 0.0 {
            return Ok((breakdown, vec![0.0; field.params.len()]));
        }
        let weights: Vec<f64> = r.iter().map(|v| v / breakdown.loss).collect();
        let grad = self.pullback_residual(field, &weights)?;
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("loss gradient".into()));
        }
        Ok((breakdown, grad))
    }

    /// `sum_k weights_k * dr_k/dtheta`.
    pub fn pullback_residual(&self, field: &CandidateField, weights: &[f64]) -> Result<Vec<f64>> {
        let adj = self.assembler.synthesize(weights)?;
        let dim = self.grid().dim();
        let cd = curl_dim(dim);
        let n = self.grid().len();
        let mut ebar = vec![0.0; n * dim];
        let mut cbar = vec![0.0; n * cd];
        for i in 0..n {
            for c in 0..dim {
                ebar[i * dim + c] = self.material.mass[i] * adj.values[c][i];
            }
            for m in 0..cd {
                cbar[i * cd + m] = self.material.inv_mu[i] * adj.curls[m][i];
            }
        }
        field.pullback(&self.points, &ebar, &cbar, self.exec())
    }
}

/// `||E - E*||_{H(curl)}` by midpoint quadrature against stored samples of `E*`.
#[derive(Debug, Clone)]
pub struct ErrorMetric {
    grid: MidpointGrid,
    points: Vec<f64>,
    exact: FieldSamples,
    exact_norm: f64,
}

impl ErrorMetric {
    pub fn new(grid: &MidpointGrid, exact: FieldSamples) -> Result<Self> {
        let points = grid.points();
        if exact.dim != grid.dim() || exact.len() != grid.len() {
            return Err(Error::ShapeMismatch(
                "exact samples do not match the grid".into(),
            ));
        }
        let zero = FieldSamples::zeros(grid.dim(), grid.len());
        let exact_norm = hcurl_distance(grid, &zero, &exact);
        Ok(Self {
            grid: grid.clone(),
            points,
            exact,
            exact_norm,
        })
    }

    pub fn grid(&self) -> &MidpointGrid {
        &self.grid
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn exact(&self) -> &FieldSamples {
        &self.exact
    }

    pub fn exact_norm(&self) -> f64 {
        self.exact_norm
    }

    pub fn error_norm(&self, samples: &FieldSamples) -> f64 {
        hcurl_distance(&self.grid, samples, &self.exact)
    }

    pub fn relative_error_of_samples(&self, samples: &FieldSamples) -> Result<f64> {
        if self.exact_norm.is_nan() || self.exact_norm <= 0.0 {
            return Err(Error::NonFinite(
                "exact solution has zero H(curl) norm on this grid".into(),
            ));
        }
        Ok(self.error_norm(samples) / self.exact_norm)
    }

    pub fn relative_error(&self, field: &CandidateField, exec: Execution) -> Result<f64> {
        self.relative_error_of_samples(&field.forward_with_curl(&self.points, exec))
    }
}

/// `sqrt(Q[|a - b|^2 + |curl a - curl b|^2])`.
pub fn hcurl_distance(grid: &MidpointGrid, a: &FieldSamples, b: &FieldSamples) -> f64 {
    let sq =
        |x: &[f64], y: &[f64]| -> f64 { x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum() };
    ((sq(&a.values, &b.values) + sq(&a.curls, &b.curls)) * grid.weight()).sqrt()
}

fn checked(b: LossBreakdown) -> Result<LossBreakdown> {
    if b.loss.is_finite() {
        Ok(b)
    } else {
        Err(Error::NonFinite(format!("loss = {}", b.loss)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::enumerate_modes;
    use crate::network::init_params;

    fn tiny(seed: u64) -> (LossPipeline, CandidateField) {
        let grid = MidpointGrid::uniform(2, 8).unwrap();
        let modes = enumerate_modes(2, &[4, 4]).unwrap();
        let rhs = RhsCoefficients::new(
            &modes,
            (0..modes.len()).map(|i| 0.1 * (i as f64).sin()).collect(),
        )
        .unwrap();
        let pipe = LossPipeline::new(
            &grid,
            &modes,
            &MaterialField::unit_coercive(),
            rhs,
            Execution::Sequential,
        )
        .unwrap();
        let field = CandidateField::new(init_params(seed, &[2, 4, 4, 2]).unwrap()).unwrap();
        (pipe, field)
    }

    #[test]
    fn gradient_matches_central_differences() {
        let (pipe, field) = tiny(4);
        let (_, g) = pipe.loss_and_gradient(&field).unwrap();
        let h = 1e-5;
        for k in 0..field.params.len() {
            let mut f = field.clone();
            f.params.as_mut_slice()[k] += h;
            let up = pipe.loss(&f).unwrap().loss;
            f.params.as_mut_slice()[k] -= 2.0 * h;
            let dn = pipe.loss(&f).unwrap().loss;
            let fd = (up - dn) / (2.0 * h);
            let err = (g[k] - fd).abs() / (g[k].abs().max(fd.abs()) + 1e-8);
            assert!(err < 1e-5, "param {k}: {} vs {fd}", g[k]);
        }
    }

    #[test]
    fn zero_loss_has_zero_gradient() {
        let (pipe, field) = tiny(1);
        let exact = pipe.residual(&field).unwrap();
        let rhs_values: Vec<f64> = exact
            .iter()
            .zip(pipe.rhs().values())
            .map(|(r, l)| r + l)
            .collect();
        let rhs = RhsCoefficients::new(pipe.modes(), rhs_values).unwrap();
        let pipe = pipe.with_rhs(rhs).unwrap();
        let (b, g) = pipe.loss_and_gradient(&field).unwrap();
        assert!(b.loss < 1e-14);
        if b.loss == 0.0 {
            assert!(g.iter().all(|&v| v == 0.0));
        }
    }
}
