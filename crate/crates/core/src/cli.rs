//! Command-line front end and the end-to-end run orchestration behind it.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use serde_json::json;

use crate::basis::{enumerate_modes, gram_matrix, ModeSet};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::exec::{configure_threads, Execution};
use crate::experiments::{build_rhs, case_spec, correlation_report, error_metric, CaseId, RhsMode};
use crate::grid::MidpointGrid;
use crate::network::{init_params, read_checkpoint, write_checkpoint, CandidateField};
use crate::pipeline::{ErrorMetric, LossPipeline};
use crate::residual::{read_rhs_file, write_rhs_file, RhsCoefficients};
use crate::training::{read_log, train, CsvLog, TrainOutcome, TrainStatus, Validation};
use crate::transforms::{apply_separable, build_transform, naive_apply, SampleGrid, TransformKind};

#[derive(Debug, Parser)]
#[command(
    name = "dfr",
    version,
    about = "Deep Fourier residual training for time-harmonic Maxwell problems on [0, pi]^n"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a network for a case and write log, checkpoint and manifest.
    Train {
        /// Config file path or preset name (e.g. `case1_desk`).
        #[arg(long)]
        config: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Where to write the trained parameters (default: `<out>/model.dfrm`).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Report loss and relative error of a checkpoint on the validation grid.
    Eval {
        #[arg(long)]
        config: String,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Directory used for cached right-hand sides.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check H(curl) orthonormality of the basis by quadrature.
    VerifyBasis {
        #[arg(long, default_value_t = 2)]
        dim: usize,
        #[arg(long, default_value_t = 6)]
        cutoff: u32,
        #[arg(long, default_value_t = 256)]
        grid: usize,
        /// Largest acceptable deviation from the identity.
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        /// Optional CSV destination for the Gram matrix.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check orthonormality of the DST-II/DCT-II matrices and the separable fast path.
    SelftestTransforms {
        #[arg(long, value_delimiter = ',', default_values_t = vec![1usize, 2, 4, 8, 64])]
        sizes: Vec<usize>,
    },
    /// Loss/error correlation of an existing training log.
    Report {
        #[arg(long)]
        log: PathBuf,
        /// Directory for `correlation.csv` and `correlation.json` (default: next to the log).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parses `argv`, runs the subcommand and returns the process exit status.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let threads = std::env::var("DFR_THREADS")
        .ok()
        .and_then(|v| v.parse().ok());
    configure_threads(threads);
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn dispatch(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Train {
            config,
            seed,
            out,
            checkpoint,
        } => {
            let mut cfg = load_config(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(o) = out {
                cfg.output_dir = o;
            }
            let report = run_training(&cfg, checkpoint.as_deref(), Execution::default())?;
            let last = report.outcome.records.last();
            println!(
                "{} {}: {} iterations, loss {:.6e}, relative error {:.6e}",
                cfg.case,
                report.outcome.status.label(),
                report.outcome.records.len(),
                report.outcome.final_loss.loss,
                last.map_or(f64::NAN, |r| r.rel_error)
            );
            println!("log: {}", report.log_path.display());
            println!("checkpoint: {}", report.checkpoint_path.display());
            println!("manifest: {}", report.manifest_path.display());
            Ok(if report.outcome.status.is_success() {
                0
            } else {
                1
            })
        }
        Command::Eval {
            config,
            checkpoint,
            out,
        } => {
            let mut cfg = load_config(&config)?;
            if let Some(o) = out {
                cfg.output_dir = o;
            }
            let params = read_checkpoint(&checkpoint)?;
            let field = CandidateField::new(params)?;
            let ev = evaluate(&cfg, &field, Execution::default())?;
            println!("{}", serde_json::to_string_pretty(&ev).expect("json"));
            Ok(0)
        }
        Command::VerifyBasis {
            dim,
            cutoff,
            grid,
            tol,
            out,
        } => {
            let modes = enumerate_modes(dim, &vec![cutoff; dim])?;
            let g = MidpointGrid::uniform(dim, grid)?;
            let report = gram_matrix(&modes, &g, Execution::default())?;
            println!("modes: {}", report.size);
            println!("max off-diagonal: {:.3e}", report.max_off_diagonal);
            println!(
                "max diagonal deviation: {:.3e}",
                report.max_diagonal_deviation
            );
            for f in &report.per_family {
                println!(
                    "  {:<6} modes {:>5}  off-diagonal {:.3e}  diagonal {:.3e}",
                    f.family.name(),
                    f.count,
                    f.max_off_diagonal,
                    f.max_diagonal_deviation
                );
            }
            if report.under_resolved {
                println!("warning: grid does not resolve the highest wavenumber");
            }
            if let Some(path) = out {
                fs::write(&path, report.to_csv()).map_err(|e| Error::io(&path, e))?;
            }
            let ok = report.max_deviation() < tol;
            println!("{}", if ok { "PASS" } else { "FAIL" });
            Ok(if ok { 0 } else { 1 })
        }
        Command::SelftestTransforms { sizes } => {
            let mut ok = true;
            for &n in &sizes {
                for kind in [TransformKind::Dst2, TransformKind::Cst2] {
                    let defect = build_transform(n, kind)?.orthonormality_defect();
                    let pass = defect < 1e-12;
                    ok &= pass;
                    println!(
                        "{kind:?} n={n:<4} max|M M^T - I| = {defect:.3e} {}",
                        verdict(pass)
                    );
                }
            }
            let worst = separable_selftest(20)?;
            let pass = worst < 1e-12;
            ok &= pass;
            println!(
                "separable vs naive max difference = {worst:.3e} {}",
                verdict(pass)
            );
            Ok(if ok { 0 } else { 1 })
        }
        Command::Report { log, out } => {
            let records = read_log(&log)?;
            let report = correlation_report(&records)?;
            let dir =
                out.unwrap_or_else(|| log.parent().map(Path::to_path_buf).unwrap_or_default());
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            let csv = dir.join("correlation.csv");
            fs::write(&csv, report.to_csv()).map_err(|e| Error::io(&csv, e))?;
            let summary = report.summary_json();
            let js = dir.join("correlation.json");
            write_atomic(&js, &serde_json::to_string_pretty(&summary).expect("json"))?;
            println!("{}", serde_json::to_string_pretty(&summary).expect("json"));
            Ok(0)
        }
    }
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "ok"
    } else {
        "FAIL"
    }
}

fn load_config(spec: &str) -> Result<RunConfig> {
    let (cfg, warnings) = RunConfig::load(spec)?;
    for w in warnings {
        eprintln!("warning: {w}");
    }
    Ok(cfg)
}

/// Largest `|separable - naive|` over pseudo-random tensors of rank 2 and 3.
pub fn separable_selftest(count: usize) -> Result<f64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed);
    let mut worst = 0.0f64;
    for _ in 0..count {
        let rank = rng.gen_range(1..=3);
        let dims: Vec<usize> = (0..rank).map(|_| rng.gen_range(1..=7)).collect();
        let len: usize = dims.iter().product();
        let values: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let kinds: Vec<TransformKind> = (0..rank)
            .map(|_| {
                if rng.gen_bool(0.5) {
                    TransformKind::Dst2
                } else {
                    TransformKind::Cst2
                }
            })
            .collect();
        let g = SampleGrid::new(dims, values)?;
        let fast = apply_separable(&g, &kinds, Execution::default())?;
        let slow = naive_apply(&g, &kinds)?;
        for (a, b) in fast.values().iter().zip(slow.values()) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok(worst)
}

/// Everything a run needs besides the network parameters.
pub struct RunSetup {
    pub modes: ModeSet,
    pub train: LossPipeline,
    pub validation: LossPipeline,
    pub metric: ErrorMetric,
}

/// Builds the training and validation pipelines, using cached right-hand sides when present.
pub fn prepare(cfg: &RunConfig, exec: Execution) -> Result<RunSetup> {
    let id = cfg.case_id();
    let spec = case_spec(id);
    let modes = enumerate_modes(cfg.dim(), &cfg.cutoffs())?;
    let train_grid = MidpointGrid::new(cfg.train_points.clone())?;
    let val_grid = MidpointGrid::new(cfg.validation_points.clone())?;
    let cache =
        matches!(spec.rhs_mode, RhsMode::WeakRefined { .. }).then_some(cfg.output_dir.as_path());
    let train_rhs = cached_rhs(id, &train_grid, &modes, cache, exec)?;
    let val_rhs = cached_rhs(id, &val_grid, &modes, cache, exec)?;
    let train = LossPipeline::new(&train_grid, &modes, &spec.material, train_rhs, exec)?;
    let validation = LossPipeline::new(&val_grid, &modes, &spec.material, val_rhs, exec)?;
    let metric = error_metric(id, &val_grid)?;
    Ok(RunSetup {
        modes,
        train,
        validation,
        metric,
    })
}

fn cached_rhs(
    id: CaseId,
    grid: &MidpointGrid,
    modes: &ModeSet,
    cache_dir: Option<&Path>,
    exec: Execution,
) -> Result<RhsCoefficients> {
    let Some(dir) = cache_dir else {
        return build_rhs(id, grid, modes, exec);
    };
    let join = |v: &[usize]| {
        v.iter()
            .map(|n| n.to_string())
            .collect::<Vec<_>>()
            .join("x")
    };
    let cutoffs: Vec<usize> = modes.cutoffs().iter().map(|&c| c as usize).collect();
    let path = dir.join(format!(
        "rhs_{}_{}_k{}.dfrc",
        id.name(),
        join(grid.counts()),
        join(&cutoffs)
    ));
    if path.is_file() {
        if let Ok(rhs) = read_rhs_file(&path) {
            if rhs.modes() == modes.modes() {
                return Ok(rhs);
            }
        }
    }
    let rhs = build_rhs(id, grid, modes, exec)?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_rhs_file(&path, &rhs)?;
    Ok(rhs)
}

pub struct RunReport {
    pub outcome: TrainOutcome,
    pub log_path: PathBuf,
    pub checkpoint_path: PathBuf,
    pub manifest_path: PathBuf,
}

fn unix_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

/// Trains per `cfg`, writing `train_log.csv`, the checkpoint and `manifest.json`.
pub fn run_training(
    cfg: &RunConfig,
    checkpoint: Option<&Path>,
    exec: Execution,
) -> Result<RunReport> {
    let started = unix_ms();
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let setup = prepare(cfg, exec)?;
    let field = CandidateField::new(init_params(cfg.seed, &cfg.widths())?)?;
    let log_path = dir.join("train_log.csv");
    let mut log = CsvLog::create(&log_path)?;
    let validation = Validation {
        pipeline: &setup.validation,
        metric: &setup.metric,
    };
    let outcome = train(
        field,
        &setup.train,
        Some(&validation),
        &cfg.train_config(),
        exec,
        |rec| log.push(rec),
    )?;
    log.flush()?;
    let checkpoint_path = checkpoint
        .map(Path::to_path_buf)
        .unwrap_or_else(|| dir.join("model.dfrm"));
    write_checkpoint(&checkpoint_path, &outcome.field.params)?;

    let (val_loss, rel_error) = validation.evaluate(&outcome.field, exec)?;
    let status = match &outcome.status {
        TrainStatus::Completed => json!({"state": "completed"}),
        TrainStatus::Stalled { iteration, lr } => {
            json!({"state": "stalled", "iteration": iteration, "lr": lr})
        }
        TrainStatus::NonFinite { iteration, reason } => {
            json!({"state": "non_finite", "iteration": iteration, "reason": reason})
        }
    };
    let manifest = json!({
        "config": serde_json::to_value(cfg).expect("config serializes"),
        "config_toml": cfg.to_toml(),
        "library_version": env!("CARGO_PKG_VERSION"),
        "started_unix_ms": started as u64,
        "finished_unix_ms": unix_ms() as u64,
        "modes": setup.modes.len(),
        "iterations_completed": outcome.records.len(),
        "final_loss": outcome.final_loss.loss,
        "final_grad_sq": outcome.final_loss.grad_sq,
        "final_x0_sq": outcome.final_loss.x0_sq,
        "final_validation_loss": val_loss,
        "final_relative_error": rel_error,
        "status": status,
        "log": log_path.file_name().map(|n| n.to_string_lossy().into_owned()),
        "checkpoint": checkpoint_path.display().to_string(),
    });
    let manifest_path = dir.join("manifest.json");
    write_atomic(
        &manifest_path,
        &serde_json::to_string_pretty(&manifest).expect("json"),
    )?;
    Ok(RunReport {
        outcome,
        log_path,
        checkpoint_path,
        manifest_path,
    })
}

/// Loss on both grids and relative error on the validation grid.
pub fn evaluate(
    cfg: &RunConfig,
    field: &CandidateField,
    exec: Execution,
) -> Result<serde_json::Value> {
    if field.dim() != cfg.dim() {
        return Err(Error::ShapeMismatch(format!(
            "{}D checkpoint for a {}D case",
            field.dim(),
            cfg.dim()
        )));
    }
    let setup = prepare(cfg, exec)?;
    let train = setup.train.loss(field)?;
    let validation = Validation {
        pipeline: &setup.validation,
        metric: &setup.metric,
    };
    let (val_loss, rel) = validation.evaluate(field, exec)?;
    Ok(json!({
        "case": cfg.case,
        "train_loss": train.loss,
        "train_grad_sq": train.grad_sq,
        "train_x0_sq": train.x0_sq,
        "validation_loss": val_loss,
        "relative_error": rel,
        "rhs_norm": setup.validation.rhs().norm(),
    }))
}

/// Writes through a temporary sibling file and renames it into place.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}
