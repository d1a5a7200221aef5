//! Adam with loss-based step rejection, validation tracking and CSV logging.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::network::CandidateField;
use crate::pipeline::{ErrorMetric, LossPipeline};
use crate::residual::LossBreakdown;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub lr: f64,
}

impl AdamState {
    pub fn new(len: usize, lr: f64) -> Result<Self> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {lr}"
            )));
        }
        Ok(Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
            lr,
        })
    }

    /// One bias-corrected Adam update of `params` in place.
    ///
    /// A non-finite gradient leaves both the state and the parameters untouched.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], cfg: &AdamConfig) -> Result<()> {
        if params.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(Error::ShapeMismatch(format!(
                "adam state for {} parameters, got {} params and {} gradients",
                self.m.len(),
                params.len(),
                grad.len()
            )));
        }
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!(
                "gradient entry {i} = {}",
                grad[i]
            )));
        }
        self.t += 1;
        let t = self.t as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grad)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let mhat = *m / c1;
            let vhat = *v / c2;
            *p -= self.lr * mhat / (vhat.sqrt() + cfg.eps);
        }
        Ok(())
    }
}

/// Loss-increase rejection with multiplicative learning-rate decay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CallbackPolicy {
    pub factor: f64,
    pub enabled: bool,
    pub min_lr: f64,
    /// Consecutive rejections tolerated at the floor learning rate before stalling.
    pub patience: usize,
}

impl Default for CallbackPolicy {
    fn default() -> Self {
        Self {
            factor: 0.9,
            enabled: true,
            min_lr: 1e-7,
            patience: 50,
        }
    }
}

impl CallbackPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.factor > 0.0 && self.factor < 1.0) {
            return Err(Error::Config(format!(
                "callback factor must lie in (0, 1), got {}",
                self.factor
            )));
        }
        if self.min_lr.is_nan() || self.min_lr <= 0.0 {
            return Err(Error::Config(format!(
                "minimum learning rate must be positive, got {}",
                self.min_lr
            )));
        }
        Ok(())
    }
}

/// Parameters and optimizer state captured before a tentative step.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub params: Vec<f64>,
    pub adam: AdamState,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CallbackOutcome {
    Accept,
    Reject { lr: f64 },
}

/// Accepts the step, or restores `saved` (keeping the decayed learning rate).
pub fn callback_apply(
    prev_loss: f64,
    new_loss: f64,
    params: &mut [f64],
    adam: &mut AdamState,
    saved: &Snapshot,
    policy: &CallbackPolicy,
) -> Result<CallbackOutcome> {
    if !prev_loss.is_finite() || !new_loss.is_finite() {
        return Err(Error::NonFinite(format!(
            "callback losses {prev_loss} -> {new_loss}"
        )));
    }
    if !policy.enabled || new_loss <= prev_loss {
        return Ok(CallbackOutcome::Accept);
    }
    let lr = (saved.adam.lr * policy.factor).max(policy.min_lr);
    params.copy_from_slice(&saved.params);
    *adam = saved.adam.clone();
    adam.lr = lr;
    Ok(CallbackOutcome::Reject { lr })
}

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingRecord {
    pub iter: u64,
    pub loss_train: f64,
    pub loss_val: f64,
    pub grad_sq: f64,
    pub x0_sq: f64,
    pub rel_error: f64,
    pub lr: f64,
    pub wall_ms: f64,
}

pub const CSV_HEADER: &str = "iter,loss_train,loss_val,grad_sq,x0_sq,rel_error,lr,wall_ms";

impl TrainingRecord {
    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            self.iter,
            self.loss_train,
            self.loss_val,
            self.grad_sq,
            self.x0_sq,
            self.rel_error,
            self.lr,
            self.wall_ms
        )
    }

    pub fn from_csv_row(line: &str) -> Result<Self> {
        let fields: Vec<&str> = line.trim().split(',').collect();
        if fields.len() != 8 {
            return Err(Error::Config(format!(
                "expected 8 CSV fields, got {}",
                fields.len()
            )));
        }
        let f = |i: usize| -> Result<f64> {
            fields[i]
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("field {i} '{}': {e}", fields[i])))
        };
        Ok(Self {
            iter: fields[0]
                .parse()
                .map_err(|e| Error::Config(format!("iteration '{}': {e}", fields[0])))?,
            loss_train: f(1)?,
            loss_val: f(2)?,
            grad_sq: f(3)?,
            x0_sq: f(4)?,
            rel_error: f(5)?,
            lr: f(6)?,
            wall_ms: f(7)?,
        })
    }
}

/// Reads a training log written by [`CsvLog`].
pub fn read_log(path: &Path) -> Result<Vec<TrainingRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == CSV_HEADER => {}
        _ => return Err(Error::format(path, "missing training log header")),
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| TrainingRecord::from_csv_row(l).map_err(|e| Error::format(path, e.to_string())))
        .collect()
}

/// Append-only CSV sink, flushed every `flush_every` rows and on drop.
pub struct CsvLog {
    out: BufWriter<File>,
    path: std::path::PathBuf,
    pending: usize,
    flush_every: usize,
}

impl CsvLog {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        writeln!(out, "{CSV_HEADER}").map_err(|e| Error::io(path, e))?;
        Ok(Self {
            out,
            path: path.to_path_buf(),
            pending: 0,
            flush_every: 100,
        })
    }

    pub fn push(&mut self, rec: &TrainingRecord) -> Result<()> {
        writeln!(self.out, "{}", rec.to_csv_row()).map_err(|e| Error::io(&self.path, e))?;
        self.pending += 1;
        if self.pending >= self.flush_every {
            self.flush()?;
        }
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.pending = 0;
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub iterations: u64,
    pub learning_rate: f64,
    pub adam: AdamConfig,
    pub callback: CallbackPolicy,
    /// Validation is evaluated every this many iterations; rows in between repeat the last value.
    pub validation_every: u64,
    /// When false, `wall_ms` is recorded as 0 so logs are byte-reproducible.
    pub log_wall_time: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 1000,
            learning_rate: 1e-4,
            adam: AdamConfig::default(),
            callback: CallbackPolicy::default(),
            validation_every: 1,
            log_wall_time: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainStatus {
    Completed,
    Stalled { iteration: u64, lr: f64 },
    NonFinite { iteration: u64, reason: String },
}

impl TrainStatus {
    pub fn is_success(&self) -> bool {
        matches!(self, TrainStatus::Completed)
    }

    pub fn label(&self) -> &'static str {
        match self {
            TrainStatus::Completed => "completed",
            TrainStatus::Stalled { .. } => "stalled",
            TrainStatus::NonFinite { .. } => "non_finite",
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub field: CandidateField,
    pub records: Vec<TrainingRecord>,
    pub status: TrainStatus,
    pub final_loss: LossBreakdown,
}

/// Held-out loss and relative error, evaluated on an independent grid.
pub struct Validation<'a> {
    pub pipeline: &'a LossPipeline,
    pub metric: &'a ErrorMetric,
}

impl Validation<'_> {
    pub fn evaluate(&self, field: &CandidateField, exec: Execution) -> Result<(f64, f64)> {
        let samples = field.forward_with_curl(self.pipeline.points(), exec);
        let loss = self.pipeline.loss_of_samples(&samples)?.loss;
        let rel = if self.metric.points() == self.pipeline.points() {
            self.metric.relative_error_of_samples(&samples)?
        } else {
            self.metric.relative_error(field, exec)?
        };
        Ok((loss, rel))
    }
}

/// Full-batch training; `sink` receives each record as it is produced.
///
/// Stalls and non-finite losses end the run early with the records gathered so far.
pub fn train(
    mut field: CandidateField,
    pipeline: &LossPipeline,
    validation: Option<&Validation<'_>>,
    cfg: &TrainConfig,
    exec: Execution,
    mut sink: impl FnMut(&TrainingRecord) -> Result<()>,
) -> Result<TrainOutcome> {
    cfg.callback.validate()?;
    if cfg.validation_every == 0 {
        return Err(Error::Config("validation_every must be at least 1".into()));
    }
    let start = Instant::now();
    let mut adam = AdamState::new(field.params.len(), cfg.learning_rate)?;
    let mut records = Vec::with_capacity(cfg.iterations.min(1 << 20) as usize);
    let (mut current, mut grad) = pipeline.loss_and_gradient(&field)?;
    let mut val = (f64::NAN, f64::NAN);
    let mut floor_rejections = 0usize;
    let mut status = TrainStatus::Completed;

    for iter in 1..=cfg.iterations {
        let saved = Snapshot {
            params: field.params.as_slice().to_vec(),
            adam: adam.clone(),
        };
        if let Err(e) = adam.step(field.params.as_mut_slice(), &grad, &cfg.adam) {
            status = TrainStatus::NonFinite {
                iteration: iter,
                reason: e.to_string(),
            };
            break;
        }
        let (trial, trial_grad) = match pipeline.loss_and_gradient(&field) {
            Ok(v) => v,
            Err(Error::NonFinite(reason)) => {
                field.params.as_mut_slice().copy_from_slice(&saved.params);
                status = TrainStatus::NonFinite {
                    iteration: iter,
                    reason,
                };
                break;
            }
            Err(e) => return Err(e),
        };
        let outcome = callback_apply(
            current.loss,
            trial.loss,
            field.params.as_mut_slice(),
            &mut adam,
            &saved,
            &cfg.callback,
        )?;
        match outcome {
            CallbackOutcome::Accept => {
                current = trial;
                grad = trial_grad;
                floor_rejections = 0;
            }
            CallbackOutcome::Reject { lr } => {
                if lr <= cfg.callback.min_lr {
                    floor_rejections += 1;
                }
            }
        }
        if (iter - 1) % cfg.validation_every == 0 || iter == cfg.iterations {
            if let Some(v) = validation {
                val = v.evaluate(&field, exec)?;
            }
        }
        let rec = TrainingRecord {
            iter,
            loss_train: current.loss,
            loss_val: val.0,
            grad_sq: current.grad_sq,
            x0_sq: current.x0_sq,
            rel_error: val.1,
            lr: adam.lr,
            wall_ms: if cfg.log_wall_time {
                start.elapsed().as_secs_f64() * 1e3
            } else {
                0.0
            },
        };
        sink(&rec)?;
        records.push(rec);
        if floor_rejections > cfg.callback.patience {
            status = TrainStatus::Stalled {
                iteration: iter,
                lr: adam.lr,
            };
            break;
        }
    }
    Ok(TrainOutcome {
        field,
        records,
        status,
        final_loss: current,
    })
}
