use std::io::Write;

use quadenhance_core::data::{gen_quadratic_target, least_squares_floor, Labels};
use quadenhance_core::models::{Activation, Mlp, MlpConfig};
use quadenhance_core::ShiftSet;

use crate::commands::train::{build_optimizer, fit, FitOptions};
use crate::config::{shift_set, AblateConfig};
use crate::error::{HarnessError, Result};
use crate::output;

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRun {
    pub d: usize,
    pub shifts: Vec<i64>,
    pub seed: u64,
    pub train_mse: f64,
    pub valid_mse: Option<f64>,
    pub floor: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationCell {
    pub d: usize,
    pub shifts: Vec<i64>,
    pub median_train_mse: f64,
    pub median_valid_mse: Option<f64>,
    pub floor: f64,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Trains a single `d x d` layer with identity activation for every
/// `(d, K, seed)` cell on data from a hidden enhanced layer.
pub fn sweep(cfg: &AblateConfig) -> Result<(Vec<AblationRun>, Vec<AblationCell>)> {
    if cfg.seeds == 0 || cfg.epochs == 0 || cfg.dims.is_empty() || cfg.shift_sets.is_empty() {
        return Err(HarnessError::config(
            "seeds, epochs, dims and shift_sets must be non-empty",
        ));
    }
    let sets: Vec<ShiftSet> = cfg
        .shift_sets
        .iter()
        .map(|s| shift_set(s))
        .collect::<Result<_>>()?;
    let mut runs = Vec::new();
    let mut cells = Vec::new();
    for &d in &cfg.dims {
        let target = gen_quadratic_target::<f64>(
            d,
            d,
            shift_set(&cfg.target_shifts)?,
            cfg.seed,
            cfg.samples,
        )?;
        let data = target.dataset.with_split(cfg.valid_fraction, cfg.seed)?;
        let (x, y) = data.rows(&data.split.train)?;
        let Labels::Targets(y) = y else {
            unreachable!("quadratic targets are regression data")
        };
        let floor = least_squares_floor(&x, &y)?;
        for (set, values) in sets.iter().zip(&cfg.shift_sets) {
            set.validate_for(d).map_err(|e| {
                HarnessError::config(format!("K={} at d={d}: {e}", output::shifts_label(values)))
            })?;
            let mut train = Vec::new();
            let mut valid = Vec::new();
            for s in 0..cfg.seeds {
                let seed = cfg.seed + s;
                let mlp_cfg = MlpConfig::new(vec![d, d])
                    .with_activation(Activation::Identity)
                    .with_shifts(set.clone())
                    .with_seed(seed);
                let mut model = Mlp::<f64>::init(&mlp_cfg)?;
                let mut optimizer = build_optimizer::<f64>(&cfg.optimizer)?;
                let opts = FitOptions {
                    epochs: cfg.epochs,
                    batch_size: cfg.batch_size,
                    shuffle_seed: Some(seed),
                };
                let fitted = fit(&mut model, optimizer.as_mut(), &data, &opts, |_| {})?;
                let last = fitted.history.last().expect("at least one epoch");
                train.push(last.train.loss);
                if let Some(v) = last.valid {
                    valid.push(v.loss);
                }
                runs.push(AblationRun {
                    d,
                    shifts: values.clone(),
                    seed,
                    train_mse: last.train.loss,
                    valid_mse: last.valid.map(|v| v.loss),
                    floor,
                });
            }
            cells.push(AblationCell {
                d,
                shifts: values.clone(),
                median_train_mse: median(&mut train),
                median_valid_mse: (!valid.is_empty()).then(|| median(&mut valid)),
                floor,
            });
        }
    }
    Ok((runs, cells))
}

pub fn run(cfg: &AblateConfig, out: &mut dyn Write) -> Result<bool> {
    let out_dir = output::prepare(cfg.out.as_deref())?;
    let (runs, cells) = sweep(cfg)?;

    let rows: Vec<Vec<String>> = runs
        .iter()
        .map(|r| {
            vec![
                r.d.to_string(),
                output::shifts_label(&r.shifts),
                r.seed.to_string(),
                r.train_mse.to_string(),
                output::opt(r.valid_mse),
                r.floor.to_string(),
            ]
        })
        .collect();
    output::write_csv(
        &out_dir.join("ablate_runs.csv"),
        &[
            "d",
            "shifts",
            "seed",
            "train_mse",
            "valid_mse",
            "least_squares_floor",
        ],
        &rows,
    )?;
    let rows: Vec<Vec<String>> = cells
        .iter()
        .map(|c| {
            vec![
                c.d.to_string(),
                output::shifts_label(&c.shifts),
                c.median_train_mse.to_string(),
                output::opt(c.median_valid_mse),
                c.floor.to_string(),
            ]
        })
        .collect();
    output::write_csv(
        &out_dir.join("ablate_summary.csv"),
        &[
            "d",
            "shifts",
            "median_train_mse",
            "median_valid_mse",
            "least_squares_floor",
        ],
        &rows,
    )?;

    let mut header = vec!["shifts".to_string()];
    header.extend(cfg.dims.iter().map(|d| format!("d={d}")));
    let grid: Vec<Vec<String>> = cfg
        .shift_sets
        .iter()
        .map(|k| {
            let mut row = vec![output::shifts_label(k)];
            for &d in &cfg.dims {
                let cell = cells
                    .iter()
                    .find(|c| c.d == d && &c.shifts == k)
                    .expect("every cell is run");
                row.push(cell.median_train_mse.to_string());
            }
            row
        })
        .collect();
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    output::write_csv(&out_dir.join("ablate_grid.csv"), &header_refs, &grid)?;

    let _ = writeln!(
        out,
        "ablate: median train MSE over {} seeds, single d x d layer, identity activation",
        cfg.seeds
    );
    let _ = write!(out, "{:>16}", "K");
    for d in &cfg.dims {
        let _ = write!(out, " {:>12}", format!("d={d}"));
    }
    let _ = writeln!(out);
    for (k, row) in cfg.shift_sets.iter().zip(&grid) {
        let _ = write!(out, "{:>16}", output::shifts_label(k));
        for v in &row[1..] {
            let v: f64 = v.parse().expect("formatted float");
            let _ = write!(out, " {v:>12.4e}");
        }
        let _ = writeln!(out);
    }
    let _ = write!(out, "{:>16}", "lstsq floor");
    for &d in &cfg.dims {
        let floor = cells
            .iter()
            .find(|c| c.d == d)
            .map_or(f64::NAN, |c| c.floor);
        let _ = write!(out, " {floor:>12.4e}");
    }
    let _ = writeln!(out);

    let lookup = |d: usize, k: &[i64]| {
        cells
            .iter()
            .find(|c| c.d == d && c.shifts == k)
            .map(|c| c.median_train_mse)
    };
    let mut passed = true;
    for &d in &cfg.dims {
        match (lookup(d, &[1]), lookup(d, &[])) {
            (Some(with), Some(without)) => {
                let ok = with < without;
                passed &= ok;
                let verdict = if ok { "PASS" } else { "FAIL" };
                let _ = writeln!(
                    out,
                    "{verdict} d={d}: K={{1}} {with:.4e} < K={{}} {without:.4e}"
                );
            }
            _ => {
                let _ = writeln!(
                    out,
                    "d={d}: K={{1}} vs K={{}} comparison skipped (not both in shift_sets)"
                );
            }
        }
    }
    Ok(passed)
}
