use std::io::Write;
use std::path::Path;
use std::time::Instant;

use quadenhance_core::data::{
    batch_iter, gen_blobs, gen_circles, gen_quadratic_target, gen_xor, load_csv, load_idx, Dataset,
    LabelColumn,
};
use quadenhance_core::models::{
    evaluate, train_step, Adam, AdamConfig, Evaluation, Mlp, Optimizer, Sgd,
};
use quadenhance_core::{CounterRng, Error as CoreError, Scalar};

use crate::checkpoint::{load_checkpoint, save_checkpoint, LoadOptions};
use crate::config::{shift_set, DatasetConfig, OptimizerConfig, Precision, TrainConfig};
use crate::error::{HarnessError, Result};
use crate::output;

pub fn run(cfg: &TrainConfig, out: &mut dyn Write) -> Result<bool> {
    match cfg.precision {
        Precision::F64 => run_as::<f64>(cfg, out),
        Precision::F32 => run_as::<f32>(cfg, out),
    }
}

pub(crate) fn build_dataset<T: Scalar>(cfg: &DatasetConfig, seed: u64) -> Result<Dataset<T>> {
    Ok(match cfg {
        DatasetConfig::Xor {} => gen_xor(),
        DatasetConfig::Quadratic {
            n,
            d,
            shifts,
            samples,
            seed: s,
        } => gen_quadratic_target(*n, *d, shift_set(shifts)?, s.unwrap_or(seed), *samples)?.dataset,
        DatasetConfig::Blobs {
            classes,
            samples,
            noise,
            seed: s,
        } => gen_blobs(*classes, *samples, *noise, s.unwrap_or(seed))?,
        DatasetConfig::Circles {
            classes,
            samples,
            noise,
            seed: s,
        } => gen_circles(*classes, *samples, *noise, s.unwrap_or(seed))?,
        DatasetConfig::Csv {
            path,
            label,
            header,
        } => {
            let label = match label {
                None | Some(serde_json::Value::Null) => LabelColumn::Last,
                Some(serde_json::Value::Number(n)) => {
                    LabelColumn::Index(n.as_u64().ok_or_else(|| {
                        HarnessError::config(format!("label column {n} is not an index"))
                    })? as usize)
                }
                Some(serde_json::Value::String(s)) => LabelColumn::Name(s.clone()),
                Some(other) => {
                    return Err(HarnessError::config(format!(
                        "label must be a column index or name, got {other}"
                    )))
                }
            };
            check_readable(path)?;
            load_csv(path, &label, *header)?
        }
        DatasetConfig::Idx { images, labels } => {
            check_readable(images)?;
            check_readable(labels)?;
            load_idx(images, labels)?
        }
    })
}

/// Missing input files are I/O errors, not data errors.
fn check_readable(path: &Path) -> Result<()> {
    std::fs::metadata(path)
        .map(|_| ())
        .map_err(|e| HarnessError::io(path, e))
}

pub(crate) fn build_optimizer<T: Scalar>(cfg: &OptimizerConfig) -> Result<Box<dyn Optimizer<T>>> {
    match cfg.kind.as_str() {
        "sgd" => Ok(Box::new(Sgd::new(cfg.lr)?)),
        "adam" => Ok(Box::new(Adam::<T>::new(AdamConfig {
            lr: cfg.lr,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.eps,
        })?)),
        other => Err(HarnessError::config(format!(
            "optimizer must be \"sgd\" or \"adam\", got {other:?}"
        ))),
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct EpochRecord {
    pub epoch: usize,
    pub train: Evaluation,
    pub valid: Option<Evaluation>,
    pub wall_seconds: f64,
}

impl EpochRecord {
    /// Validation loss when there is a validation split.
    fn selection_loss(&self) -> f64 {
        self.valid.map_or(self.train.loss, |v| v.loss)
    }
}

pub(crate) struct Fit<T> {
    pub history: Vec<EpochRecord>,
    pub best: Mlp<T>,
    pub best_epoch: usize,
}

pub(crate) struct FitOptions {
    pub epochs: usize,
    pub batch_size: Option<usize>,
    /// Per-epoch shuffle seeds derive from this; `None` keeps the row order.
    pub shuffle_seed: Option<u64>,
}

fn diverged(epoch: usize, batch: usize) -> impl Fn(CoreError) -> HarnessError {
    move |e| match e {
        CoreError::NonFinite { .. } => HarnessError::Diverged {
            epoch,
            batch,
            source: e,
        },
        other => HarnessError::Core(other),
    }
}

fn check_eval(e: Evaluation, epoch: usize) -> Result<Evaluation> {
    if e.loss.is_finite() {
        Ok(e)
    } else {
        Err(HarnessError::Diverged {
            epoch,
            batch: 0,
            source: CoreError::NonFinite {
                context: "evaluation loss".into(),
                index: 0,
            },
        })
    }
}

/// Trains `model` in place and keeps a copy of the epoch with the lowest
/// selection loss.
pub(crate) fn fit<T: Scalar>(
    model: &mut Mlp<T>,
    optimizer: &mut dyn Optimizer<T>,
    data: &Dataset<T>,
    opts: &FitOptions,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<Fit<T>> {
    let train_rows = &data.split.train;
    let valid_rows = &data.split.valid;
    if train_rows.is_empty() {
        return Err(HarnessError::config("the training split is empty"));
    }
    let (train_x, train_y) = data.rows(train_rows)?;
    let valid = if valid_rows.is_empty() {
        None
    } else {
        Some(data.rows(valid_rows)?)
    };
    let batch_size = opts.batch_size.unwrap_or(train_rows.len());
    let shuffle = opts.shuffle_seed.map(CounterRng::new);
    let start = Instant::now();
    let mut history = Vec::with_capacity(opts.epochs);
    let mut best = model.clone();
    let mut best_epoch = 0;
    let mut best_loss = f64::INFINITY;
    for epoch in 1..=opts.epochs {
        if batch_size >= train_rows.len() {
            train_step(model, optimizer, &train_x, &train_y).map_err(diverged(epoch, 0))?;
        } else {
            let seed = shuffle.as_ref().map(|r| r.at(epoch as u64));
            for (b, batch) in batch_iter(data, train_rows, batch_size, seed)?.enumerate() {
                let batch = batch?;
                train_step(model, optimizer, &batch.features, &batch.labels)
                    .map_err(diverged(epoch, b))?;
            }
        }
        let train = check_eval(
            evaluate(model, &train_x, &train_y).map_err(diverged(epoch, 0))?,
            epoch,
        )?;
        let valid = match &valid {
            Some((x, y)) => Some(check_eval(
                evaluate(model, x, y).map_err(diverged(epoch, 0))?,
                epoch,
            )?),
            None => None,
        };
        let record = EpochRecord {
            epoch,
            train,
            valid,
            wall_seconds: start.elapsed().as_secs_f64(),
        };
        if record.selection_loss() < best_loss {
            best_loss = record.selection_loss();
            best = model.clone();
            best_epoch = epoch;
        }
        on_epoch(&record);
        history.push(record);
    }
    Ok(Fit {
        history,
        best,
        best_epoch,
    })
}

fn run_as<T: Scalar>(cfg: &TrainConfig, out: &mut dyn Write) -> Result<bool> {
    if cfg.epochs == 0 || cfg.batch_size == Some(0) {
        return Err(HarnessError::config("epochs and batch_size must be >= 1"));
    }
    let root = CounterRng::new(cfg.seed);
    let data =
        build_dataset::<T>(&cfg.dataset, cfg.seed)?.with_split(cfg.valid_fraction, root.at(0))?;
    let mlp_cfg = cfg
        .model
        .to_mlp(data.num_features(), data.output_dim(), cfg.seed)?;
    let mut model = Mlp::<T>::init(&mlp_cfg)?;
    if let Some(path) = &cfg.init_from {
        let options = LoadOptions {
            allow_missing_lambda: cfg.allow_missing_lambda,
        };
        load_checkpoint(path, &mut model, options).map_err(|source| HarnessError::Checkpoint {
            path: path.clone(),
            source,
        })?;
    }
    let mut optimizer = build_optimizer::<T>(&cfg.optimizer)?;
    let out_dir = output::prepare(cfg.out.as_deref())?;

    let _ = writeln!(
        out,
        "train: {} ({} train / {} valid rows), dims {:?}, {} epochs",
        data.provenance,
        data.split.train.len(),
        data.split.valid.len(),
        mlp_cfg.dims,
        cfg.epochs
    );
    let report_every = (cfg.epochs / 10).max(1);
    let opts = FitOptions {
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        shuffle_seed: cfg.shuffle.then(|| root.at(1)),
    };
    let fitted = fit(&mut model, optimizer.as_mut(), &data, &opts, |r| {
        if r.epoch % report_every == 0 || r.epoch == 1 {
            let _ = writeln!(out, "{}", epoch_line(r));
        }
    })?;

    let metrics: Vec<Vec<String>> = fitted
        .history
        .iter()
        .map(|r| {
            vec![
                r.epoch.to_string(),
                r.train.loss.to_string(),
                output::opt(r.train.accuracy),
                output::opt(r.valid.map(|v| v.loss)),
                output::opt(r.valid.and_then(|v| v.accuracy)),
            ]
        })
        .collect();
    output::write_csv(
        &out_dir.join("metrics.csv"),
        &[
            "epoch",
            "train_loss",
            "train_accuracy",
            "valid_loss",
            "valid_accuracy",
        ],
        &metrics,
    )?;
    let timing: Vec<Vec<String>> = fitted
        .history
        .iter()
        .map(|r| vec![r.epoch.to_string(), format!("{:.6}", r.wall_seconds)])
        .collect();
    output::write_csv(
        &out_dir.join("timing.csv"),
        &["epoch", "wall_seconds"],
        &timing,
    )?;
    for (name, m) in [("final.qen", &model), ("best.qen", &fitted.best)] {
        let path = out_dir.join(name);
        save_checkpoint(&path, m).map_err(|source| HarnessError::Checkpoint { path, source })?;
    }

    let last = fitted.history.last().expect("at least one epoch");
    let _ = writeln!(out, "final: {}", epoch_line(last));
    let _ = writeln!(out, "best epoch: {}", fitted.best_epoch);
    let Some(expect) = &cfg.expect else {
        return Ok(true);
    };
    let mut passed = true;
    if let Some(min) = expect.min_train_accuracy {
        match last.train.accuracy {
            Some(acc) if acc >= min => {
                let _ = writeln!(out, "PASS train accuracy {acc} >= {min}");
            }
            Some(acc) => {
                passed = false;
                let _ = writeln!(out, "FAIL train accuracy {acc} < {min}");
            }
            None => {
                return Err(HarnessError::config(
                    "min_train_accuracy needs a classification dataset",
                ))
            }
        }
    }
    if let Some(max) = expect.max_train_loss {
        let loss = last.train.loss;
        passed &= loss <= max;
        let verdict = if loss <= max { "PASS" } else { "FAIL" };
        let _ = writeln!(out, "{verdict} train loss {loss:e} <= {max:e}");
    }
    Ok(passed)
}

fn epoch_line(r: &EpochRecord) -> String {
    let mut line = format!("epoch {:>6}  train loss {:.6e}", r.epoch, r.train.loss);
    if let Some(acc) = r.train.accuracy {
        line += &format!("  acc {acc:.4}");
    }
    if let Some(v) = r.valid {
        line += &format!("  valid loss {:.6e}", v.loss);
        if let Some(acc) = v.accuracy {
            line += &format!("  acc {acc:.4}");
        }
    }
    line
}
