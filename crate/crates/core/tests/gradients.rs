use quadenhance_core::autograd::well_scaled;
use quadenhance_core::data::Labels;
use quadenhance_core::models::train::loss_and_grads;
use quadenhance_core::models::{
    gradcheck_model, randomize_parameters, Activation, BaselineTag, Layer, Mlp, MlpConfig,
    Parameterized,
};
use quadenhance_core::quadenhancer::reference::instance_with;
use quadenhance_core::{BandLambda, CounterRng, GradCheckReport, ShiftSet, Tape, Tensor};

const STEP: f64 = 1e-6;
const TOL: f64 = 1e-4;

fn check_mlp(model: &Mlp<f64>, rng: &mut CounterRng) -> GradCheckReport {
    gradcheck_model(model, 3, rng, STEP, TOL, None).unwrap()
}

fn randomize(model: &mut Mlp<f64>, rng: &mut CounterRng) {
    randomize_parameters(model, rng, 0.5);
}

fn assert_passes(report: &GradCheckReport, what: &str) {
    let worst = report.worst().unwrap();
    assert!(
        report.passed,
        "{what}: {} max rel err {:e} at {}",
        worst.name, worst.max_rel_err, worst.worst_index
    );
}

#[test]
fn qe_layers_pass_gradcheck() {
    let mut rng = CounterRng::new(100);
    let sets = [vec![1], vec![-1, 1], vec![-2, -1, 1, 2], vec![]];
    for i in 0..100u64 {
        let shifts = ShiftSet::new(sets[i as usize % sets.len()].clone()).unwrap();
        let (layer, _) = instance_with::<f64>(i, 2 + (i as usize % 4), 5, shifts).unwrap();
        let model = Mlp::from_layers(vec![Layer::Qe(layer)], Activation::Identity).unwrap();
        assert_passes(&check_mlp(&model, &mut rng), &format!("qe layer {i}"));
    }
}

#[test]
fn qe_mlps_pass_gradcheck() {
    let mut rng = CounterRng::new(200);
    for i in 0..100u64 {
        let act = if i % 2 == 0 {
            Activation::Gelu
        } else {
            Activation::Identity
        };
        let cfg = MlpConfig::new(vec![3, 5, 4, 3])
            .with_shifts(ShiftSet::new([-1, 1]).unwrap())
            .with_activation(act)
            .with_seed(i);
        let mut model = Mlp::init(&cfg).unwrap();
        randomize(&mut model, &mut rng);
        assert_passes(&check_mlp(&model, &mut rng), &format!("mlp {i}"));
    }
}

#[test]
fn baselines_pass_gradcheck() {
    let mut rng = CounterRng::new(300);
    for i in 0..100u64 {
        for tag in [BaselineTag::QuadraNet, BaselineTag::SwiGlu] {
            let cfg = MlpConfig::new(vec![3, 4, 2])
                .with_baseline(tag)
                .with_activation(Activation::Gelu)
                .with_seed(i);
            let mut model = Mlp::init(&cfg).unwrap();
            randomize(&mut model, &mut rng);
            assert_passes(&check_mlp(&model, &mut rng), &format!("{} {i}", tag.name()));
        }
    }
}

#[test]
fn single_precision_models_pass_scaled_tolerance() {
    let mut rng = CounterRng::new(600);
    for i in 0..100u64 {
        for cfg in [
            MlpConfig::new(vec![3, 5, 4, 3]).with_shifts(ShiftSet::new([-1, 1]).unwrap()),
            MlpConfig::new(vec![3, 4, 2]).with_baseline(BaselineTag::QuadraNet),
            MlpConfig::new(vec![3, 4, 2]).with_baseline(BaselineTag::SwiGlu),
        ] {
            let mut model = Mlp::<f32>::init(&cfg.with_seed(i)).unwrap();
            randomize_parameters(&mut model, &mut rng, 0.5);
            let report = gradcheck_model(&model, 3, &mut rng, STEP, 1e-2, None).unwrap();
            assert!(report.passed, "instance {i}: {report:?}");
        }
    }
}

/// `∂L/∂ỹ = g ⊙ Λỹ + Σ_r roll(λ_r ⊙ g ⊙ ỹ, -r) + g` for `z = (Λỹ) ⊙ ỹ + ỹ + b`.
#[test]
fn tape_matches_fused_preactivation_gradient() {
    let mut rng = CounterRng::new(400);
    for _ in 0..50 {
        let d = 7;
        let shifts = ShiftSet::new([-2, -1, 1, 3]).unwrap();
        let lines: Vec<Tensor<f64>> = (0..shifts.len())
            .map(|_| well_scaled(&[d], &mut rng))
            .collect();
        let lambda = BandLambda::from_parts(d, shifts.clone(), lines.clone()).unwrap();
        let y = well_scaled::<f64>(&[2, d], &mut rng);
        let b = well_scaled::<f64>(&[d], &mut rng);
        let g = well_scaled::<f64>(&[2, d], &mut rng);

        let tape = Tape::new();
        let yv = tape.param(y.clone());
        let lv: Vec<_> = lines.iter().map(|l| tape.constant(l.clone())).collect();
        let bv = tape.constant(b.clone());
        let ly = lambda.apply_on_tape(&tape, &lv, yv).unwrap();
        let quad = tape.hadamard(ly, yv).unwrap();
        let lin = tape.add(quad, yv).unwrap();
        let z = tape.add_row(lin, bv).unwrap();
        let gv = tape.constant(g.clone());
        let weighted = tape.hadamard(z, gv).unwrap();
        let loss = tape.sum_all(weighted).unwrap();
        let got = tape.backward(loss).unwrap().wrt(yv).unwrap();

        let mut want = g
            .hadamard(&lambda.apply(&y).unwrap())
            .unwrap()
            .add(&g)
            .unwrap();
        for (r, line) in shifts.as_slice().iter().zip(&lines) {
            let term = g
                .hadamard(&y)
                .unwrap()
                .mul_row(line)
                .unwrap()
                .roll(-r)
                .unwrap();
            want = want.add(&term).unwrap();
        }
        assert!(got.max_abs_diff(&want).unwrap() <= 1e-12);
    }
}

#[test]
fn zero_lambda_network_matches_plain_bitwise() {
    for seed in 0..20u64 {
        let dims = vec![4, 6, 5, 3];
        let enhanced = Mlp::<f64>::init(&MlpConfig::new(dims.clone()).with_seed(seed)).unwrap();
        let plain = Mlp::<f64>::init(&MlpConfig::plain(dims).with_seed(seed)).unwrap();
        let mut rng = CounterRng::new(seed);
        let x = Tensor::from_fn(&[8, 4], |_| rng.normal());
        let labels = Labels::Classes {
            indices: (0..8).map(|i| i % 3).collect(),
            num_classes: 3,
        };

        assert!(enhanced
            .forward(&x)
            .unwrap()
            .bitwise_eq(&plain.forward(&x).unwrap()));
        let (le, ge) = loss_and_grads(&enhanced, &x, &labels).unwrap();
        let (lp, gp) = loss_and_grads(&plain, &x, &labels).unwrap();
        assert_eq!(le.to_bits(), lp.to_bits());

        let names_e: Vec<String> = enhanced.parameters().into_iter().map(|(n, _)| n).collect();
        let names_p: Vec<String> = plain.parameters().into_iter().map(|(n, _)| n).collect();
        for (name, grad) in names_p.iter().zip(&gp) {
            let pos = names_e.iter().position(|n| n == name).unwrap();
            assert!(ge[pos].bitwise_eq(grad), "{name}");
        }
    }
}

#[test]
fn backward_is_linear_in_the_loss() {
    let mut rng = CounterRng::new(500);
    let cfg = MlpConfig::new(vec![3, 4, 2]).with_seed(5);
    let mut model = Mlp::<f64>::init(&cfg).unwrap();
    randomize(&mut model, &mut rng);
    let x = well_scaled::<f64>(&[4, 3], &mut rng);
    let cf = well_scaled::<f64>(&[4, 2], &mut rng);
    let cg = well_scaled::<f64>(&[4, 2], &mut rng);
    let (alpha, beta) = (0.7, -1.3);

    let grads_of = |weights: &[(f64, &Tensor<f64>)]| {
        let tape = Tape::new();
        let vars = model.bind(&tape);
        let xv = tape.constant(x.clone());
        let out = model.forward_on_tape(&tape, &vars, xv).unwrap();
        let mut total = None;
        for (s, c) in weights {
            let cv = tape.constant((*c).clone());
            let term = tape.sum_all(tape.hadamard(out, cv).unwrap()).unwrap();
            let term = tape.scale(term, *s).unwrap();
            total = Some(match total {
                None => term,
                Some(t) => tape.add(t, term).unwrap(),
            });
        }
        let grads = tape.backward(total.unwrap()).unwrap();
        vars.iter()
            .map(|v| grads.wrt(*v).unwrap())
            .collect::<Vec<_>>()
    };

    let combined = grads_of(&[(alpha, &cf), (beta, &cg)]);
    let f = grads_of(&[(1.0, &cf)]);
    let g = grads_of(&[(1.0, &cg)]);
    for ((c, a), b) in combined.iter().zip(&f).zip(&g) {
        let want = a.scale(alpha).add(&b.scale(beta)).unwrap();
        assert!(c.max_abs_diff(&want).unwrap() <= 1e-10);
    }
}
