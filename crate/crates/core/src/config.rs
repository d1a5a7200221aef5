//! Run configuration: a flat TOML file or a named preset such as `case1_desk`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::{case_spec, CaseId, ScaleDefaults};
use crate::network::DEFAULT_HIDDEN;
use crate::training::{AdamConfig, CallbackPolicy, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Full,
    Desk,
}

/// A per-axis count written either as one number or as a list.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
enum PerAxis {
    Scalar(i64),
    List(Vec<i64>),
}

impl PerAxis {
    fn resolve(&self, key: &str, dim: usize) -> Result<Vec<usize>> {
        let raw = match self {
            PerAxis::Scalar(v) => vec![*v; dim],
            PerAxis::List(v) if v.len() == dim => v.clone(),
            PerAxis::List(v) => {
                return Err(Error::Config(format!(
                    "{key}: expected {dim} entries, got {}",
                    v.len()
                )))
            }
        };
        raw.into_iter()
            .map(|v| {
                if v >= 1 {
                    Ok(v as usize)
                } else {
                    Err(Error::Config(format!("{key} must be at least 1, got {v}")))
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    case: String,
    scale: Option<Scale>,
    train_points: Option<PerAxis>,
    validation_points: Option<PerAxis>,
    modes: Option<PerAxis>,
    iterations: Option<u64>,
    seed: Option<u64>,
    learning_rate: Option<f64>,
    beta1: Option<f64>,
    beta2: Option<f64>,
    adam_eps: Option<f64>,
    callback_factor: Option<f64>,
    callback_min_lr: Option<f64>,
    callback_patience: Option<usize>,
    reject_increases: Option<bool>,
    hidden_layers: Option<usize>,
    hidden_width: Option<usize>,
    output_dir: Option<PathBuf>,
    validation_every: Option<u64>,
    log_wall_time: Option<bool>,
    underintegration_ablation: Option<bool>,
}

/// Fully resolved settings of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub case: String,
    pub scale: Scale,
    pub train_points: Vec<usize>,
    pub validation_points: Vec<usize>,
    pub modes: Vec<usize>,
    pub iterations: u64,
    pub seed: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub callback_factor: f64,
    pub callback_min_lr: f64,
    pub callback_patience: usize,
    pub reject_increases: bool,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub output_dir: PathBuf,
    pub validation_every: u64,
    pub log_wall_time: bool,
    pub underintegration_ablation: bool,
}

pub const DEFAULT_SEED: u64 = 1234;
pub const DEFAULT_LEARNING_RATE: f64 = 1e-4;

impl RunConfig {
    /// Parses TOML text; returns the config with any policy warnings.
    pub fn parse_str(text: &str) -> Result<(Self, Vec<String>)> {
        let raw: RawConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        Self::resolve(raw)
    }

    pub fn from_path(path: &Path) -> Result<(Self, Vec<String>)> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// A named preset `<case>` (full scale) or `<case>_full` / `<case>_desk`.
    pub fn preset(name: &str) -> Result<(Self, Vec<String>)> {
        let (case, scale) = if let Some(c) = name.strip_suffix("_desk") {
            (c, "desk")
        } else if let Some(c) = name.strip_suffix("_full") {
            (c, "full")
        } else {
            (name, "full")
        };
        CaseId::from_name(case)?;
        Self::parse_str(&format!("case = \"{case}\"\nscale = \"{scale}\"\n"))
    }

    /// An existing file path, otherwise a preset name.
    pub fn load(spec: &str) -> Result<(Self, Vec<String>)> {
        let path = Path::new(spec);
        if path.is_file() {
            Self::from_path(path)
        } else if spec.ends_with(".toml") || spec.contains(std::path::MAIN_SEPARATOR) {
            Err(Error::io(
                path,
                std::io::Error::new(std::io::ErrorKind::NotFound, "config file not found"),
            ))
        } else {
            Self::preset(spec)
        }
    }

    fn resolve(raw: RawConfig) -> Result<(Self, Vec<String>)> {
        let id = CaseId::from_name(&raw.case)?;
        let spec = case_spec(id);
        let scale = raw.scale.unwrap_or(Scale::Full);
        let defaults: ScaleDefaults = match scale {
            Scale::Full => spec.full,
            Scale::Desk => spec.desk,
        };
        let dim = spec.dim;
        let per_axis = |v: &Option<PerAxis>, key: &str, d: usize| -> Result<Vec<usize>> {
            match v {
                Some(p) => p.resolve(key, dim),
                None => Ok(vec![d; dim]),
            }
        };
        let train_points = per_axis(&raw.train_points, "train_points", defaults.train_points)?;
        let validation_points = per_axis(
            &raw.validation_points,
            "validation_points",
            defaults.validation_points,
        )?;
        let modes = per_axis(&raw.modes, "modes", defaults.modes as usize)?;

        let positive = |v: f64, key: &str| -> Result<f64> {
            if v > 0.0 && v.is_finite() {
                Ok(v)
            } else {
                Err(Error::Config(format!("{key} must be positive, got {v}")))
            }
        };
        let adam = AdamConfig::default();
        let policy = CallbackPolicy::default();
        let cfg = RunConfig {
            case: id.name().to_string(),
            scale,
            train_points,
            validation_points,
            modes,
            iterations: raw.iterations.unwrap_or(defaults.iterations),
            seed: raw.seed.unwrap_or(DEFAULT_SEED),
            learning_rate: positive(
                raw.learning_rate.unwrap_or(DEFAULT_LEARNING_RATE),
                "learning_rate",
            )?,
            beta1: raw.beta1.unwrap_or(adam.beta1),
            beta2: raw.beta2.unwrap_or(adam.beta2),
            adam_eps: positive(raw.adam_eps.unwrap_or(adam.eps), "adam_eps")?,
            callback_factor: raw.callback_factor.unwrap_or(policy.factor),
            callback_min_lr: positive(
                raw.callback_min_lr.unwrap_or(policy.min_lr),
                "callback_min_lr",
            )?,
            callback_patience: raw.callback_patience.unwrap_or(policy.patience),
            reject_increases: raw.reject_increases.unwrap_or(policy.enabled),
            hidden_layers: raw.hidden_layers.unwrap_or(DEFAULT_HIDDEN.len()),
            hidden_width: raw.hidden_width.unwrap_or(DEFAULT_HIDDEN[0]),
            output_dir: raw
                .output_dir
                .unwrap_or_else(|| PathBuf::from(format!("runs/{}", id.name()))),
            validation_every: raw.validation_every.unwrap_or(1),
            log_wall_time: raw.log_wall_time.unwrap_or(true),
            underintegration_ablation: raw
                .underintegration_ablation
                .unwrap_or(id == CaseId::Case21Underintegrated),
        };
        for (key, b) in [("beta1", cfg.beta1), ("beta2", cfg.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("{key} must lie in [0, 1), got {b}")));
            }
        }
        if cfg.hidden_width == 0 {
            return Err(Error::Config("hidden_width must be at least 1".into()));
        }
        if cfg.validation_every == 0 {
            return Err(Error::Config("validation_every must be at least 1".into()));
        }
        cfg.train_config().callback.validate()?;

        let mut warnings = Vec::new();
        if !cfg.underintegration_ablation {
            if cfg.validation_points == cfg.train_points {
                warnings.push(format!(
                    "validation grid {:?} equals the training grid; validation is not independent \
                     (set underintegration_ablation = true to silence)",
                    cfg.validation_points
                ));
            }
            if cfg.train_points.iter().zip(&cfg.modes).any(|(p, m)| p < m) {
                warnings.push(format!(
                    "training points {:?} are fewer than the mode cutoffs {:?}; quadrature is \
                     under-resolved (set underintegration_ablation = true to silence)",
                    cfg.train_points, cfg.modes
                ));
            }
        }
        Ok((cfg, warnings))
    }

    pub fn case_id(&self) -> CaseId {
        CaseId::from_name(&self.case).expect("validated at parse time")
    }

    pub fn dim(&self) -> usize {
        self.train_points.len()
    }

    pub fn widths(&self) -> Vec<usize> {
        let dim = self.dim();
        let mut w = vec![dim];
        w.extend(std::iter::repeat_n(self.hidden_width, self.hidden_layers));
        w.push(dim);
        w
    }

    pub fn cutoffs(&self) -> Vec<u32> {
        self.modes.iter().map(|&m| m as u32).collect()
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            iterations: self.iterations,
            learning_rate: self.learning_rate,
            adam: AdamConfig {
                beta1: self.beta1,
                beta2: self.beta2,
                eps: self.adam_eps,
            },
            callback: CallbackPolicy {
                factor: self.callback_factor,
                enabled: self.reject_increases,
                min_lr: self.callback_min_lr,
                patience: self.callback_patience,
            },
            validation_every: self.validation_every,
            log_wall_time: self.log_wall_time,
        }
    }

    /// TOML that parses back to this exact configuration.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_case1_gets_full_defaults() {
        let (c, w) = RunConfig::parse_str("case = \"case1\"").unwrap();
        assert_eq!(c.train_points, vec![100, 100]);
        assert_eq!(c.validation_points, vec![117, 117]);
        assert_eq!(c.modes, vec![100, 100]);
        assert_eq!(c.iterations, 10_000);
        assert_eq!(c.learning_rate, 1e-4);
        assert_eq!(c.widths(), vec![2, 20, 20, 20, 20, 20, 2]);
        assert!(w.is_empty());
    }

    #[test]
    fn desk_preset() {
        let (c, _) = RunConfig::preset("case1_desk").unwrap();
        assert_eq!(c.train_points, vec![32, 32]);
        assert_eq!(c.validation_points, vec![38, 38]);
        assert_eq!(c.modes, vec![16, 16]);
        assert_eq!(c.iterations, 5000);
        let (c3, _) = RunConfig::preset("case3").unwrap();
        assert_eq!(c3.train_points, vec![50, 50, 50]);
        assert!(RunConfig::preset("case7_desk").is_err());
    }

    #[test]
    fn rejects_bad_values_and_unknown_keys() {
        assert!(RunConfig::parse_str("case = \"case1\"\ntrain_points = 0").is_err());
        assert!(RunConfig::parse_str("case = \"case1\"\nmodes = [4, 4, 4]").is_err());
        assert!(RunConfig::parse_str("case = \"case1\"\nfoo = 1").is_err());
        assert!(RunConfig::parse_str("case = \"nope\"").is_err());
        assert!(RunConfig::parse_str("case = \"case1\"\ncallback_factor = 1.5").is_err());
        assert!(RunConfig::parse_str("scale = \"desk\"").is_err());
    }

    #[test]
    fn equal_grids_warn_unless_opted_in() {
        let (_, w) = RunConfig::parse_str(
            "case = \"case1\"\ntrain_points = 40\nvalidation_points = 40\nmodes = 20",
        )
        .unwrap();
        assert_eq!(w.len(), 1);
        let (_, w) = RunConfig::parse_str(
            "case = \"case1\"\ntrain_points = 40\nvalidation_points = 40\nunderintegration_ablation = true",
        )
        .unwrap();
        assert!(w.is_empty());
        let (c, w) = RunConfig::preset("case2_1_underintegrated").unwrap();
        assert_eq!(c.train_points, c.modes);
        assert!(w.is_empty());
    }

    #[test]
    fn per_axis_lists_and_echo_roundtrip() {
        let (c, _) = RunConfig::parse_str(
            "case = \"case3\"\nscale = \"desk\"\ntrain_points = [16, 18, 20]\nseed = 9",
        )
        .unwrap();
        assert_eq!(c.train_points, vec![16, 18, 20]);
        let (back, _) = RunConfig::parse_str(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }
}
