//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use num_rational::Ratio;
use quadenhance_core::cost::{count_layer, count_model, preset_dim192, LayerCost};
use quadenhance_core::data::{
    gen_quadratic_target, gen_xor, least_squares_floor, linear_cap_2d, Labels,
};
use quadenhance_core::models::{loss_and_grads, BaselineTag, Mlp, MlpConfig, Parameterized};
use quadenhance_core::quadenhancer::BandLambda;
use quadenhance_core::{CounterRng, QeLayer, ShiftSet, Tensor};
use quadenhance_harness::checkpoint::{load_checkpoint, save_checkpoint, LoadOptions};
use quadenhance_harness::commands::{ablate, gradcheck, montecarlo, oracle, train};
use quadenhance_harness::config::{
    AblateConfig, DatasetConfig, GradcheckConfig, ModelConfig, MontecarloConfig, OptimizerConfig,
    OracleConfig, TrainConfig,
};
use quadenhance_harness::{run, Command, Overrides};
use tempfile::TempDir;

type Outcome = Result<String, String>;
type Check = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within_budget(start: Instant, budget: Duration, detail: String) -> Outcome {
    let elapsed = start.elapsed();
    let detail = format!(
        "{detail}; {:.2}s of {}s",
        elapsed.as_secs_f64(),
        budget.as_secs()
    );
    check(elapsed < budget, detail)
}

fn column(path: &Path, name: &str) -> Vec<String> {
    let mut reader = csv::Reader::from_path(path).expect("readable csv");
    let idx = reader
        .headers()
        .expect("header")
        .iter()
        .position(|h| h == name)
        .unwrap_or_else(|| panic!("{} has no column {name}", path.display()));
    reader
        .records()
        .map(|r| r.expect("csv record")[idx].to_string())
        .collect()
}

fn floats(path: &Path, name: &str) -> Vec<f64> {
    column(path, name)
        .iter()
        .map(|v| v.parse().expect("float"))
        .collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn oracle_chain() -> Outcome {
    let dir = TempDir::new().unwrap();
    let start = Instant::now();
    let cfg = OracleConfig {
        instances: 1000,
        max_dim: 32,
        shift_pool: vec![-3, -2, -1, 1, 2, 3],
        out: Some(dir.path().to_path_buf()),
        ..OracleConfig::default()
    };
    let passed = oracle::run(&cfg, &mut std::io::sink()).map_err(|e| e.to_string())?;
    let csv = dir.path().join("oracle.csv");
    let chain = ["layer_vs_rank1", "layer_vs_full", "rank1_vs_full"]
        .iter()
        .flat_map(|c| floats(&csv, c))
        .fold(0.0f64, f64::max);
    let band = floats(&csv, "band_vs_dense")
        .into_iter()
        .fold(0.0f64, f64::max);
    let rows = column(&csv, "instance").len();
    let detail = format!(
        "{rows} instances, chain max dev {chain:.2e}, band vs dense {band:.2e} (tol 1e-12)"
    );
    let ok = passed && rows == 1000 && chain <= 1e-12 && band <= 1e-12;
    check(ok, detail.clone()).and_then(|d| within_budget(start, Duration::from_secs(30), d))
}

fn gradient_verification() -> Outcome {
    let dir = TempDir::new().unwrap();
    let start = Instant::now();
    let cfg = GradcheckConfig {
        instances: 100,
        step: Some(1e-6),
        tol: Some(1e-4),
        out: Some(dir.path().to_path_buf()),
        ..GradcheckConfig::default()
    };
    let passed = gradcheck::run(&cfg, &mut std::io::sink()).map_err(|e| e.to_string())?;
    let csv = dir.path().join("gradcheck.csv");
    let checks = column(&csv, "check");
    let worst = floats(&csv, "max_rel_err")
        .into_iter()
        .fold(0.0f64, f64::max);
    let families = ["qe-layer", "qe-mlp", "quadranet", "swiglu"];
    let covered = families.iter().all(|f| checks.iter().any(|c| c == f));
    let detail = format!(
        "{} parameter groups over qe-layer, qe-mlp, quadranet, swiglu and primitives, 100 instances each, max rel err {worst:.2e} (tol 1e-4)",
        checks.len()
    );
    check(passed && covered && worst <= 1e-4, detail)
        .and_then(|d| within_budget(start, Duration::from_secs(60), d))
}

fn zero_lambda_reduction() -> Outcome {
    let mut checked = 0;
    for seed in 0..20u64 {
        for dims in [vec![4, 6, 5, 3], vec![3, 3], vec![5, 8, 2]] {
            let enhanced = Mlp::<f64>::init(&MlpConfig::new(dims.clone()).with_seed(seed)).unwrap();
            let plain = Mlp::<f64>::init(&MlpConfig::plain(dims.clone()).with_seed(seed)).unwrap();
            let mut rng = CounterRng::new(1000 + seed);
            let x = Tensor::from_fn(&[8, dims[0]], |_| rng.normal());
            let classes = *dims.last().unwrap();
            let labels = Labels::Classes {
                indices: (0..8).map(|i| i % classes).collect(),
                num_classes: classes,
            };
            if !enhanced
                .forward(&x)
                .unwrap()
                .bitwise_eq(&plain.forward(&x).unwrap())
            {
                return Err(format!("outputs differ for seed {seed}, dims {dims:?}"));
            }
            let (le, ge) = loss_and_grads(&enhanced, &x, &labels).unwrap();
            let (lp, gp) = loss_and_grads(&plain, &x, &labels).unwrap();
            if le.to_bits() != lp.to_bits() {
                return Err(format!("losses differ for seed {seed}, dims {dims:?}"));
            }
            let names_e: Vec<String> = enhanced.parameters().into_iter().map(|(n, _)| n).collect();
            for ((name, _), grad) in plain.parameters().into_iter().zip(&gp) {
                let pos = names_e.iter().position(|n| *n == name).unwrap();
                if !ge[pos].bitwise_eq(grad) {
                    return Err(format!("gradient of {name} differs for seed {seed}"));
                }
            }
            checked += 1;
        }
    }
    Ok(format!(
        "{checked} networks: outputs, losses and W/b gradients bitwise equal"
    ))
}

fn tail_reference_values() -> Outcome {
    let start = Instant::now();
    let cfg = MontecarloConfig {
        samples: 10_000_000,
        thresholds: vec![4.0, 8.0, 16.0],
        ..MontecarloConfig::default()
    };
    let rows = montecarlo::estimate(&cfg).map_err(|e| e.to_string())?;
    let mut parts = Vec::new();
    let mut ok = true;
    let mut within = |label: &str, p: f64, se: f64, want: f64| {
        let z = (p - want).abs() / se;
        let hit = z <= 3.0;
        ok &= hit;
        parts.push(format!(
            "{label} {p:.4e} vs {want:.1e}: {z:.1} SE {}",
            if hit { "ok" } else { "MISS" }
        ));
    };
    within("p(x1^2>4)", rows[0].square_p, rows[0].square_se, 4.5e-2);
    within("p(x1^2>8)", rows[1].square_p, rows[1].square_se, 4.7e-3);
    within("p(|x1x2|>4)", rows[0].cross_p, rows[0].cross_se, 7.6e-3);
    within("p(|x1x2|>8)", rows[1].cross_p, rows[1].cross_se, 4.1e-5);
    let analytic = rows[2].square_analytic;
    let hit = (analytic / 6.33e-5 - 1.0).abs() <= 0.01;
    ok &= hit;
    parts.push(format!(
        "analytic p(x1^2>16) {analytic:.4e} vs 6.33e-5 {}",
        if hit { "ok" } else { "MISS" }
    ));
    let integral = rows[2].cross_integral;
    let ratio = integral / 3.37e-10;
    let hit = (0.5..=2.0).contains(&ratio);
    ok &= hit;
    parts.push(format!(
        "integral p(|x1x2|>16) {integral:.4e} vs 3.37e-10 (x{ratio:.1}) {}",
        if hit { "ok" } else { "MISS" }
    ));
    check(ok, parts.join("; ")).and_then(|d| within_budget(start, Duration::from_secs(60), d))
}

/// Every constructible `n -> d` layer with `n, d <= 10` and `K` drawn from
/// `{-3..3} \ {0}`: counts from the closed forms against the layer's stored
/// scalars and the non-zeros of its dense band matrix.
fn structural_counts() -> Result<usize, String> {
    let pool = [-3i64, -2, -1, 1, 2, 3];
    let mut layers = 0;
    for mask in 0u32..(1 << pool.len()) {
        let shifts: Vec<i64> = (0..pool.len())
            .filter(|b| mask >> b & 1 == 1)
            .map(|b| pool[b])
            .collect();
        let set = ShiftSet::new(shifts.clone()).unwrap();
        for d in 1..=10usize {
            if set.validate_for(d).is_err() {
                continue;
            }
            let lines = (0..set.len())
                .map(|_| Tensor::from_fn(&[d], |i| 1.0 + i as f64))
                .collect();
            let lambda = BandLambda::from_parts(d, set.clone(), lines).unwrap();
            let band_nonzeros = lambda.dense().data().iter().filter(|v| **v != 0.0).count() as u64;
            for n in 1..=10usize {
                let weight = Tensor::from_fn(&[d, n], |i| 1.0 + i as f64);
                let bias = Tensor::from_fn(&[d], |_| 1.0);
                let layer = QeLayer::new(weight, bias, lambda.clone(), true).unwrap();
                let row = count_layer("layer", &layer);
                let weight_nonzeros =
                    layer.weight().data().iter().filter(|v| **v != 0.0).count() as u64;
                let (d64, k) = (d as u64, set.len() as u64);
                // One multiply-add per stored weight and band entry, one add
                // per bias entry, one product and one sum per output.
                let enumerated_flops_linear = 2 * weight_nonzeros + d64;
                let enumerated_flops_enhancer = if k == 0 {
                    0
                } else {
                    2 * band_nonzeros + 2 * d64
                };
                let formula = LayerCost::from_dims("layer", n as u64, d64, k);
                if row != formula
                    || row.params_enhancer != band_nonzeros
                    || row.params_linear + row.params_enhancer != layer.enumerate_params() as u64
                    || row.flops_linear != enumerated_flops_linear
                    || row.flops_enhancer != enumerated_flops_enhancer
                {
                    return Err(format!("n={n} d={d} K={shifts:?}: {row:?}"));
                }
                layers += 1;
            }
        }
    }
    for seed in 0..5 {
        for cfg in [
            MlpConfig::new(vec![4, 7, 3]).with_seed(seed),
            MlpConfig::new(vec![4, 7, 3]).exempt_final().with_seed(seed),
            MlpConfig::plain(vec![6, 6]).with_seed(seed),
            MlpConfig::new(vec![3, 5, 2])
                .with_baseline(BaselineTag::QuadraNet)
                .with_seed(seed),
            MlpConfig::new(vec![3, 5, 2])
                .with_baseline(BaselineTag::SwiGlu)
                .with_seed(seed),
        ] {
            // Panics if the totals disagree with the enumerated parameters.
            count_model(&Mlp::<f64>::init(&cfg).unwrap());
        }
    }
    Ok(layers)
}

fn cost_formulas() -> Outcome {
    let report = preset_dim192();
    let row = &report.rows[0];
    let preset_ok = row.params_enhancer == 192
        && row.param_ratio() == Ratio::new(1, 192)
        && row.flops_enhancer == 768
        && row.flops_linear == 73_920;
    let detail = format!(
        "dim192: enhancer params {} (ratio {}), enhancer FLOPs {} vs linear {}",
        row.params_enhancer,
        row.param_ratio(),
        row.flops_enhancer,
        row.flops_linear
    );
    if !preset_ok {
        return Err(detail);
    }
    let layers = structural_counts()?;
    Ok(format!(
        "{detail}; closed forms equal enumeration for {layers} layers"
    ))
}

fn train_cfg(dir: &Path, seed: u64) -> TrainConfig {
    TrainConfig {
        seed,
        out: Some(dir.to_path_buf()),
        ..TrainConfig::default()
    }
}

fn expressiveness() -> Outcome {
    let start = Instant::now();
    let xor = gen_xor::<f64>();
    let Labels::Classes { indices, .. } = &xor.labels else {
        unreachable!()
    };
    let cap = linear_cap_2d(&xor.features, indices).map_err(|e| e.to_string())?;
    let mut xor_acc = Vec::new();
    for seed in 0..3 {
        let dir = TempDir::new().unwrap();
        let cfg = train_cfg(dir.path(), seed);
        assert_eq!(cfg.epochs, 2000);
        assert!(cfg.model.hidden.is_empty(), "a single layer");
        train::run(&cfg, &mut std::io::sink()).map_err(|e| e.to_string())?;
        xor_acc.push(
            *floats(&dir.path().join("metrics.csv"), "train_accuracy")
                .last()
                .unwrap(),
        );
    }
    let xor_median = median(xor_acc);

    let target = gen_quadratic_target::<f64>(8, 8, ShiftSet::nearest(), 7, 256)
        .map_err(|e| e.to_string())?;
    let Labels::Targets(y) = &target.dataset.labels else {
        unreachable!()
    };
    let floor = least_squares_floor(&target.dataset.features, y).map_err(|e| e.to_string())?;
    let mut mse = Vec::new();
    for seed in 0..3 {
        let dir = TempDir::new().unwrap();
        let cfg = TrainConfig {
            dataset: DatasetConfig::Quadratic {
                n: 8,
                d: 8,
                shifts: vec![1],
                samples: 256,
                seed: Some(7),
            },
            model: ModelConfig {
                activation: "identity".into(),
                shifts: vec![1],
                ..ModelConfig::default()
            },
            optimizer: OptimizerConfig {
                kind: "adam".into(),
                lr: 1e-2,
                ..OptimizerConfig::default()
            },
            ..train_cfg(dir.path(), seed)
        };
        train::run(&cfg, &mut std::io::sink()).map_err(|e| e.to_string())?;
        mse.push(
            *floats(&dir.path().join("metrics.csv"), "train_loss")
                .last()
                .unwrap(),
        );
    }
    let mse_median = median(mse);
    let ok = xor_median == 1.0 && cap == 0.75 && mse_median <= 1e-3 && floor >= 10.0 * mse_median;
    let detail = format!(
        "XOR median accuracy {xor_median} (linear cap {cap}); quadratic target median MSE {mse_median:.2e} vs linear floor {floor:.3e} ({:.1e}x)",
        floor / mse_median
    );
    check(ok, detail).and_then(|d| within_budget(start, Duration::from_secs(300), d))
}

fn k_ablation() -> Outcome {
    let dir = TempDir::new().unwrap();
    let cfg = AblateConfig {
        out: Some(dir.path().to_path_buf()),
        ..AblateConfig::default()
    };
    let passed = ablate::run(&cfg, &mut std::io::sink()).map_err(|e| e.to_string())?;
    let grid = dir.path().join("ablate_grid.csv");
    let sets = column(&grid, "shifts");
    let shape_ok = sets == ["{}", "{1}", "{-1,1}", "{-2,-1,1,2}"];
    let mut parts = Vec::new();
    let mut trend = true;
    for d in &cfg.dims {
        let col = floats(&grid, &format!("d={d}"));
        trend &= col[1] < col[0];
        parts.push(format!(
            "d={d}: K={{}} {:.2e} -> K={{1}} {:.2e}",
            col[0], col[1]
        ));
    }
    let detail = format!(
        "grid {} x {}; {}",
        sets.len(),
        cfg.dims.len(),
        parts.join(", ")
    );
    check(passed && shape_ok && trend, detail)
}

fn csv_and_checkpoints(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| {
            let name = p.file_name().unwrap().to_string_lossy();
            // Wall-clock timings are the only nondeterministic output.
            name != "timing.csv" && (name.ends_with(".csv") || name.ends_with(".qen"))
        })
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

fn persistence_and_determinism() -> Outcome {
    let work = TempDir::new().unwrap();
    let configs = [
        (Command::Gradcheck, r#"{"instances": 3}"#),
        (Command::OracleEquiv, r#"{"instances": 50}"#),
        (Command::Montecarlo, r#"{"samples": 200000}"#),
        (Command::Cost, r#"{"preset": "vit-m-like", "k": 2}"#),
        (
            Command::Train,
            r#"{"epochs": 50, "batch_size": 2, "model": {"hidden": [4], "activation": "gelu"}}"#,
        ),
        (
            Command::AblateK,
            r#"{"seeds": 1, "dims": [6], "epochs": 30, "samples": 64}"#,
        ),
    ];
    let mut compared = 0;
    for (i, (command, json)) in configs.iter().enumerate() {
        let path = work.path().join(format!("cfg{i}.json"));
        fs::write(&path, json).unwrap();
        let mut outputs = Vec::new();
        for rep in 0..2 {
            let out = work.path().join(format!("run{i}-{rep}"));
            let overrides = Overrides {
                seed: Some(11),
                out: Some(out.clone()),
            };
            run(*command, Some(&path), &overrides, &mut std::io::sink())
                .map_err(|e| format!("{command:?}: {e}"))?;
            outputs.push(csv_and_checkpoints(&out));
        }
        if outputs[0].is_empty() || outputs[0] != outputs[1] {
            return Err(format!("{command:?} outputs differ between identical runs"));
        }
        compared += outputs[0].len();
    }

    let train_out = work.path().join("run4-0");
    let cfg = MlpConfig::new(vec![2, 4, 2]).with_seed(11);
    let mut restored = Mlp::<f64>::init(&cfg.clone().with_seed(999)).unwrap();
    load_checkpoint(
        &train_out.join("final.qen"),
        &mut restored,
        LoadOptions::default(),
    )
    .map_err(|e| e.to_string())?;
    let resaved = work.path().join("resaved.qen");
    save_checkpoint(&resaved, &restored).map_err(|e| e.to_string())?;
    let original = fs::read(train_out.join("final.qen")).unwrap();
    let again = fs::read(&resaved).unwrap();

    let mut rng = CounterRng::new(5);
    let mut model = Mlp::<f64>::init(
        &MlpConfig::new(vec![3, 5, 4]).with_shifts(ShiftSet::new([-1, 1]).unwrap()),
    )
    .unwrap();
    for (_, t) in model.parameters_mut() {
        t.data_mut()
            .iter_mut()
            .for_each(|v| *v = rng.normal() * 1e3);
    }
    let path = work.path().join("random.qen");
    save_checkpoint(&path, &model).map_err(|e| e.to_string())?;
    let mut back = Mlp::<f64>::init(
        &MlpConfig::new(vec![3, 5, 4])
            .with_shifts(ShiftSet::new([-1, 1]).unwrap())
            .with_seed(3),
    )
    .unwrap();
    load_checkpoint(&path, &mut back, LoadOptions::default()).map_err(|e| e.to_string())?;
    let bitwise = model
        .parameters()
        .iter()
        .zip(back.parameters())
        .all(|((na, a), (nb, b))| *na == nb && a.bitwise_eq(b));
    let ok = original == again && bitwise;
    check(
        ok,
        format!("{compared} CSV/checkpoint files byte-identical across reruns of all six subcommands; save->load->save bitwise"),
    )
}

/// Not a criterion: the tail estimates against the closed forms they
/// estimate, which is where the reference values of criterion 4 fall short.
fn tails_against_closed_forms() -> Outcome {
    let cfg = MontecarloConfig {
        samples: 10_000_000,
        thresholds: vec![4.0, 8.0],
        ..MontecarloConfig::default()
    };
    let rows = montecarlo::estimate(&cfg).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for r in &rows {
        worst = worst
            .max((r.square_p - r.square_analytic).abs() / r.square_se)
            .max((r.cross_p - r.cross_integral).abs() / r.cross_se);
    }
    check(
        worst <= 3.0,
        format!("estimates at v=4, 8 within {worst:.2} SE of the closed forms and integrals"),
    )
}

fn main() -> ExitCode {
    let criteria: [Check; 8] = [
        ("criterion 1 oracle-chain equivalence", oracle_chain),
        ("criterion 2 gradient verification", gradient_verification),
        ("criterion 3 zero-lambda reduction", zero_lambda_reduction),
        (
            "criterion 4 tail-probability reference values",
            tail_reference_values,
        ),
        ("criterion 5 cost formulas", cost_formulas),
        ("criterion 6 expressiveness at desk scale", expressiveness),
        ("criterion 7 shift-set ablation trend", k_ablation),
        (
            "criterion 8 persistence and determinism",
            persistence_and_determinism,
        ),
    ];
    let supplementary: [Check; 1] = [(
        "supplementary: tail estimates vs closed forms",
        tails_against_closed_forms,
    )];
    let mut failed = 0;
    for (name, f) in criteria.iter().chain(supplementary.iter()) {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} acceptance check(s) failed");
        ExitCode::FAILURE
    }
}
