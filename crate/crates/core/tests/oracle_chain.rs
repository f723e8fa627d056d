use quadenhance_core::quadenhancer::reference::{
    chain_deviation, forward_vs_double_reference, instance_with, random_instance,
};
use quadenhance_core::{ShiftSet, Tensor};

const POOL: [i64; 6] = [-3, -2, -1, 1, 2, 3];

#[test]
fn thousand_instances_agree_in_double() {
    let mut worst = (0.0f64, 0u64);
    let mut with_shifts = 0;
    for seed in 0..1000 {
        let (layer, x) = random_instance::<f64>(seed, 32, &POOL).unwrap();
        if layer.k() > 0 {
            with_shifts += 1;
        }
        let dev = chain_deviation(&layer, &x).unwrap().max();
        if dev > worst.0 {
            worst = (dev, seed);
        }
    }
    assert!(
        worst.0 <= 1e-12,
        "max deviation {:e} at seed {}",
        worst.0,
        worst.1
    );
    assert!(
        with_shifts > 900,
        "only {with_shifts} instances carried shifts"
    );
}

#[test]
fn widest_shift_set_agrees() {
    for seed in 0..50 {
        let shifts = ShiftSet::new([-2, -1, 1, 2]).unwrap();
        let (layer, x) = instance_with::<f64>(seed, 16, 24, shifts).unwrap();
        assert!(chain_deviation(&layer, &x).unwrap().max() <= 1e-12);
    }
}

#[test]
fn single_precision_agrees_loosely() {
    for seed in 0..1000 {
        let (layer, x) = random_instance::<f32>(seed, 32, &POOL).unwrap();
        let dev = chain_deviation(&layer, &x).unwrap();
        assert!(dev.band_vs_dense <= 1e-6, "seed {seed}: {dev:?}");
        let rel = forward_vs_double_reference(&layer, &x).unwrap();
        assert!(rel <= 1e-6, "seed {seed}: {rel:e}");
    }
}

#[test]
fn band_matches_dense_up_to_width_64() {
    for seed in 0..200 {
        let (layer, _) = random_instance::<f64>(seed, 64, &POOL).unwrap();
        let lambda = layer.lambda();
        let y = Tensor::from_fn(&[3, lambda.d()], |i| ((i * 7919) % 13) as f64 - 6.0);
        let band = lambda.apply(&y).unwrap();
        let dense = y.matmul(&lambda.dense().transpose().unwrap()).unwrap();
        assert!(band.max_abs_diff(&dense).unwrap() <= 1e-12);
    }
}

#[test]
fn width_one_with_square_override() {
    let shifts = ShiftSet::with_square_terms([1]).unwrap();
    let (layer, x) = instance_with::<f64>(4, 3, 1, shifts).unwrap();
    assert!(chain_deviation(&layer, &x).unwrap().max() <= 1e-12);
    assert!(instance_with::<f64>(4, 3, 1, ShiftSet::nearest()).is_err());
}
