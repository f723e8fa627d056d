use std::io::Write;

use quadenhance_core::autograd::{check_primitive, suspect_rules, GradCheckReport};
use quadenhance_core::models::{
    gradcheck_model, randomize_parameters, Activation, BaselineTag, Layer, Mlp, MlpConfig,
};
use quadenhance_core::quadenhancer::reference::instance_with;
use quadenhance_core::{CounterRng, DType, OpTag, Scalar, ShiftSet};

use crate::config::{GradcheckConfig, Precision};
use crate::error::{HarnessError, Result};
use crate::output;

/// Worst result of one parameter of one check family across instances.
struct Worst {
    check: String,
    parameter: String,
    rel_err: f64,
    instance: usize,
    analytic: f64,
    numeric: f64,
}

pub fn run(cfg: &GradcheckConfig, out: &mut dyn Write) -> Result<bool> {
    match cfg.precision {
        Precision::F64 => run_as::<f64>(cfg, out),
        Precision::F32 => run_as::<f32>(cfg, out),
    }
}

fn shift_sets() -> Vec<ShiftSet> {
    [vec![1], vec![-1, 1], vec![-2, -1, 1, 2], vec![]]
        .into_iter()
        .map(|s| ShiftSet::new(s).expect("valid shift set"))
        .collect()
}

fn run_as<T: Scalar>(cfg: &GradcheckConfig, out: &mut dyn Write) -> Result<bool> {
    let tol = cfg
        .tol
        .unwrap_or(if T::DTYPE == DType::F64 { 1e-4 } else { 1e-2 });
    let step = cfg.step.unwrap_or(1e-6);
    if !(tol > 0.0 && step > 0.0) || cfg.instances == 0 {
        return Err(HarnessError::config(
            "tol, step and instances must be positive",
        ));
    }
    let corrupt = match &cfg.corrupt_rule {
        None => None,
        Some(name) => Some(
            OpTag::parse(name)
                .filter(|t| *t != OpTag::Leaf)
                .ok_or_else(|| {
                    let names: Vec<&str> = OpTag::ALL[1..].iter().map(|t| t.name()).collect();
                    HarnessError::config(format!(
                        "unknown rule {name:?}; expected one of {}",
                        names.join(", ")
                    ))
                })?,
        ),
    };
    let out_dir = output::prepare(cfg.out.as_deref())?;
    let root = CounterRng::new(cfg.seed);
    let mut runs: Vec<(String, usize, GradCheckReport)> = Vec::new();

    let mut rng = root.split(0);
    for tag in &OpTag::ALL[1..] {
        for i in 0..cfg.instances {
            let report = check_primitive::<T>(*tag, &mut rng, step, tol, corrupt)?;
            runs.push((format!("primitive/{}", tag.name()), i, report));
        }
    }

    let sets = shift_sets();
    let mut rng = root.split(1);
    for i in 0..cfg.instances {
        let shifts = sets[i % sets.len()].clone();
        let seed = rng.next_u64();
        let (layer, _) = instance_with::<T>(seed, 2 + i % 4, 5 + i % 3, shifts)?;
        let model = Mlp::from_layers(vec![Layer::Qe(layer)], Activation::Identity)?;
        runs.push((
            "qe-layer".into(),
            i,
            gradcheck_model(&model, 3, &mut rng, step, tol, corrupt)?,
        ));
    }

    let families = [
        (
            "qe-mlp",
            MlpConfig::new(vec![3, 5, 4, 3]).with_shifts(sets[1].clone()),
        ),
        (
            "quadranet",
            MlpConfig::new(vec![3, 4, 2]).with_baseline(BaselineTag::QuadraNet),
        ),
        (
            "swiglu",
            MlpConfig::new(vec![3, 4, 2]).with_baseline(BaselineTag::SwiGlu),
        ),
    ];
    for (stream, (name, base)) in families.into_iter().enumerate() {
        let mut rng = root.split(2 + stream as u64);
        for i in 0..cfg.instances {
            let mut model = Mlp::<T>::init(&base.clone().with_seed(rng.next_u64()))?;
            randomize_parameters(&mut model, &mut rng, 0.5);
            runs.push((
                name.into(),
                i,
                gradcheck_model(&model, 3, &mut rng, step, tol, corrupt)?,
            ));
        }
    }

    let mut worst: Vec<Worst> = Vec::new();
    for (check, instance, report) in &runs {
        for p in &report.params {
            let slot = worst
                .iter()
                .position(|w| &w.check == check && w.parameter == p.name);
            let candidate = Worst {
                check: check.clone(),
                parameter: p.name.clone(),
                rel_err: p.max_rel_err,
                instance: *instance,
                analytic: p.analytic,
                numeric: p.numeric,
            };
            match slot {
                None => worst.push(candidate),
                Some(k) if p.max_rel_err > worst[k].rel_err => worst[k] = candidate,
                Some(_) => {}
            }
        }
    }

    let floor = runs.first().map_or(0.0, |r| r.2.floor);
    let _ = writeln!(
        out,
        "gradcheck: {} precision, step {step:e}, tol {tol:e}, rel-err floor {floor:e}, {} instances per check",
        T::DTYPE,
        cfg.instances
    );
    let _ = writeln!(
        out,
        "{:<24} {:<22} {:>12}  status",
        "check", "parameter", "max rel err"
    );
    let mut rows = Vec::new();
    for w in &worst {
        let ok = w.rel_err <= tol;
        let _ = writeln!(
            out,
            "{:<24} {:<22} {:>12.3e}  {}",
            w.check,
            w.parameter,
            w.rel_err,
            if ok { "ok" } else { "FAIL" }
        );
        rows.push(vec![
            w.check.clone(),
            w.parameter.clone(),
            cfg.instances.to_string(),
            w.rel_err.to_string(),
            w.instance.to_string(),
            w.analytic.to_string(),
            w.numeric.to_string(),
            ok.to_string(),
        ]);
    }
    output::write_csv(
        &out_dir.join("gradcheck.csv"),
        &[
            "check",
            "parameter",
            "instances",
            "max_rel_err",
            "worst_instance",
            "analytic",
            "numeric",
            "passed",
        ],
        &rows,
    )?;

    let passed = runs.iter().all(|r| r.2.passed);
    if passed {
        let overall = worst.iter().map(|w| w.rel_err).fold(0.0, f64::max);
        let _ = writeln!(out, "PASS: max relative error {overall:.3e} <= {tol:e}");
    } else {
        for w in worst.iter().filter(|w| w.rel_err > tol) {
            let _ = writeln!(
                out,
                "FAIL: {} / {}: rel err {:.3e} (analytic {:e}, numeric {:e}, instance {})",
                w.check, w.parameter, w.rel_err, w.analytic, w.numeric, w.instance
            );
        }
        let suspects: Vec<&str> = suspect_rules(runs.iter().map(|r| &r.2))
            .iter()
            .map(|t| t.name())
            .collect();
        if suspects.is_empty() {
            let _ = writeln!(out, "FAIL: no single backward rule explains the failures");
        } else {
            let _ = writeln!(out, "FAIL: suspect backward rule: {}", suspects.join(", "));
        }
    }
    Ok(passed)
}
