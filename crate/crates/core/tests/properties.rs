use nalgebra::DMatrix;
use proptest::prelude::*;
use quadenhance_core::quadenhancer::reference::random_instance;
use quadenhance_core::{BandLambda, CounterRng, ShiftSet, Tensor};

fn tensor(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = CounterRng::new(seed);
    Tensor::from_fn(shape, |_| rng.normal())
}

fn naive_matmul(a: &Tensor<f64>, b: &Tensor<f64>) -> Vec<f64> {
    let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            let mut acc = 0.0;
            for p in 0..k {
                acc += a.data()[i * k + p] * b.data()[p * n + j];
            }
            out[i * n + j] = acc;
        }
    }
    out
}

fn rank(m: &Tensor<f64>) -> usize {
    let (r, c) = (m.shape()[0], m.shape()[1]);
    let mat = DMatrix::from_row_slice(r, c, m.data());
    mat.singular_values().iter().filter(|s| **s > 1e-8).count()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn roll_has_period_d(d in 1usize..20, r in -100i64..100, seed in any::<u64>()) {
        let y = tensor(&[2, d], seed);
        let reduced = r.rem_euclid(d as i64);
        prop_assert!(y.roll(r).unwrap().bitwise_eq(&y.roll(reduced).unwrap()));
        prop_assert!(y.roll(r).unwrap().roll(-r).unwrap().bitwise_eq(&y));
    }

    #[test]
    fn roll_is_its_own_adjoint_inverse(d in 1usize..20, r in -40i64..40, seed in any::<u64>()) {
        let y = tensor(&[d], seed);
        let g = tensor(&[d], seed ^ 1);
        let lhs = y.roll(r).unwrap().dot(&g).unwrap();
        let rhs = y.dot(&g.roll(-r).unwrap()).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));

        // Integer entries make every partial sum exact, whatever the order.
        let yi = y.map(|v| (v * 8.0).round());
        let gi = g.map(|v| (v * 8.0).round());
        let lhs = yi.roll(r).unwrap().dot(&gi).unwrap();
        let rhs = yi.dot(&gi.roll(-r).unwrap()).unwrap();
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn elementwise_ops_commute(r in 1usize..6, c in 1usize..6, seed in any::<u64>()) {
        let a = tensor(&[r, c], seed);
        let b = tensor(&[r, c], seed.wrapping_add(1));
        prop_assert!(a.hadamard(&b).unwrap().bitwise_eq(&b.hadamard(&a).unwrap()));
        prop_assert!(a.add(&b).unwrap().bitwise_eq(&b.add(&a).unwrap()));
    }

    #[test]
    fn matmul_is_deterministic_and_matches_loops(m in 1usize..8, k in 1usize..8, n in 1usize..8, seed in any::<u64>()) {
        let a = tensor(&[m, k], seed);
        let b = tensor(&[k, n], seed.wrapping_add(7));
        let first = a.matmul(&b).unwrap();
        prop_assert!(first.bitwise_eq(&a.matmul(&b).unwrap()));
        let naive = naive_matmul(&a, &b);
        prop_assert!(first.data().iter().zip(&naive).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn band_apply_equals_dense(seed in 0u64..5000) {
        let (layer, _) = random_instance::<f64>(seed, 24, &[-3, -2, -1, 1, 2, 3]).unwrap();
        let lambda = layer.lambda();
        let y = tensor(&[4, lambda.d()], seed);
        let dense = y.matmul(&lambda.dense().transpose().unwrap()).unwrap();
        prop_assert!(lambda.apply(&y).unwrap().max_abs_diff(&dense).unwrap() <= 1e-12);
    }

    #[test]
    fn band_product_rank_is_bounded(seed in 0u64..5000) {
        let (layer, _) = random_instance::<f64>(seed, 12, &[-3, -2, -1, 1, 2, 3]).unwrap();
        let dense = layer.lambda().dense();
        let product = dense.matmul(layer.weight()).unwrap();
        let bound = rank(&dense).min(rank(layer.weight()));
        prop_assert!(rank(&product) <= bound);
    }
}

#[test]
fn empty_shift_set_applies_to_zero() {
    let lambda = BandLambda::<f64>::zeros(5, ShiftSet::empty()).unwrap();
    let y = tensor(&[3, 5], 9);
    assert!(lambda.apply(&y).unwrap().data().iter().all(|v| *v == 0.0));
    assert!(lambda.dense().data().iter().all(|v| *v == 0.0));
}

#[test]
fn shifted_diagonals_have_full_rank_products() {
    // With non-vanishing λ a single shifted diagonal is a scaled permutation.
    let d = 6;
    let line = Tensor::from_fn(&[d], |i| 1.0 + i as f64);
    let lambda = BandLambda::from_parts(d, ShiftSet::nearest(), vec![line]).unwrap();
    assert_eq!(rank(&lambda.dense()), d);
}
