use crate::data::{Dataset, Labels};
use crate::error::{Error, Result};
use crate::quadenhancer::{BandLambda, QeLayer, ShiftSet};
use crate::rng::CounterRng;
use crate::scalar::{cst, Scalar};
use crate::tensor::Tensor;

/// The four points `(±1, ±1)`, class 1 iff `x1 * x2 > 0`.
pub fn gen_xor<T: Scalar>() -> Dataset<T> {
    let points = [(-1.0, -1.0), (-1.0, 1.0), (1.0, -1.0), (1.0, 1.0)];
    let features = Tensor::from_fn(&[4, 2], |i| {
        let (a, b) = points[i / 2];
        cst(if i % 2 == 0 { a } else { b })
    });
    let indices = points
        .iter()
        .map(|(a, b)| usize::from(a * b > 0.0))
        .collect();
    Dataset::new(
        features,
        Labels::Classes {
            indices,
            num_classes: 2,
        },
        "xor",
    )
    .expect("xor dataset is well formed")
}

/// Regression data generated by a hidden enhanced layer.
#[derive(Debug, Clone)]
pub struct QuadraticTarget<T> {
    pub dataset: Dataset<T>,
    pub layer: QeLayer<T>,
}

/// Draws a hidden layer with `W ~ N(0, 1/n)`, `b ~ N(0, 0.01)` and `λ`
/// uniform in `[-0.5, 0.5]`, then labels `x ~ N(0, I)` with its output.
pub fn gen_quadratic_target<T: Scalar>(
    n: usize,
    d: usize,
    shifts: ShiftSet,
    seed: u64,
    samples: usize,
) -> Result<QuadraticTarget<T>> {
    if n < 2 || d < 2 || samples == 0 {
        return Err(Error::config(format!(
            "quadratic target needs n, d >= 2 and N >= 1, got n={n} d={d} N={samples}"
        )));
    }
    let root = CounterRng::new(seed);
    let mut prng = root.split(0);
    let std = 1.0 / (n as f64).sqrt();
    let weight = Tensor::from_fn(&[d, n], |_| cst(std * prng.normal()));
    let bias = Tensor::from_fn(&[d], |_| cst(0.1 * prng.normal()));
    let lines = (0..shifts.len())
        .map(|_| Tensor::from_fn(&[d], |_| cst(prng.uniform_in(-0.5, 0.5))))
        .collect();
    let lambda = BandLambda::from_parts(d, shifts.clone(), lines)?;
    let layer = QeLayer::new(weight, bias, lambda, true)?;

    let mut xrng = root.split(1);
    let features = Tensor::from_fn(&[samples, n], |_| cst(xrng.normal()));
    let targets = layer.forward(&features)?;
    let dataset = Dataset::new(
        features,
        Labels::Targets(targets),
        format!("quadratic-target(n={n},d={d},K={shifts},seed={seed})"),
    )?;
    Ok(QuadraticTarget { dataset, layer })
}

fn check_class_args(classes: usize, samples: usize, noise: f64) -> Result<()> {
    if classes == 0 || samples < classes {
        return Err(Error::config(format!(
            "need N >= classes >= 1, got N={samples} classes={classes}"
        )));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::config(format!("noise must be >= 0, got {noise}")));
    }
    Ok(())
}

/// 2-D Gaussian blobs; centers uniform in `[-5, 5]^2`, point `i` in class
/// `i mod classes`.
pub fn gen_blobs<T: Scalar>(
    classes: usize,
    samples: usize,
    noise: f64,
    seed: u64,
) -> Result<Dataset<T>> {
    check_class_args(classes, samples, noise)?;
    let root = CounterRng::new(seed);
    let mut crng = root.split(0);
    let centers: Vec<(f64, f64)> = (0..classes)
        .map(|_| (crng.uniform_in(-5.0, 5.0), crng.uniform_in(-5.0, 5.0)))
        .collect();
    let mut prng = root.split(1);
    let mut data = Vec::with_capacity(samples * 2);
    let mut indices = Vec::with_capacity(samples);
    for i in 0..samples {
        let c = i % classes;
        let (a, b) = prng.normal_pair();
        data.push(cst(centers[c].0 + noise * a));
        data.push(cst(centers[c].1 + noise * b));
        indices.push(c);
    }
    Dataset::new(
        Tensor::new(vec![samples, 2], data)?,
        Labels::Classes {
            indices,
            num_classes: classes,
        },
        format!("blobs(classes={classes},N={samples},noise={noise},seed={seed})"),
    )
}

/// Concentric circles: class `c` has radius `c + 1` plus `noise * N(0, 1)`
/// radial jitter, at uniform angles.
pub fn gen_circles<T: Scalar>(
    classes: usize,
    samples: usize,
    noise: f64,
    seed: u64,
) -> Result<Dataset<T>> {
    check_class_args(classes, samples, noise)?;
    let mut rng = CounterRng::new(seed);
    let mut data = Vec::with_capacity(samples * 2);
    let mut indices = Vec::with_capacity(samples);
    for i in 0..samples {
        let c = i % classes;
        let angle = std::f64::consts::TAU * rng.uniform();
        let jitter = rng.normal();
        let radius = (c + 1) as f64 + noise * jitter;
        data.push(cst(radius * angle.cos()));
        data.push(cst(radius * angle.sin()));
        indices.push(c);
    }
    Dataset::new(
        Tensor::new(vec![samples, 2], data)?,
        Labels::Classes {
            indices,
            num_classes: classes,
        },
        format!("circles(classes={classes},N={samples},noise={noise},seed={seed})"),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::linear::{least_squares_accuracy, least_squares_floor};
    use crate::models::mse;

    #[test]
    fn xor_labels() {
        let ds = gen_xor::<f64>();
        assert_eq!(ds.len(), 4);
        let Labels::Classes { indices, .. } = &ds.labels else {
            panic!()
        };
        for (row, &label) in ds.features.data().chunks(2).zip(indices) {
            assert_eq!(label, usize::from(row[0] * row[1] > 0.0));
        }
        assert_eq!(indices[3], 1); // (1, 1)
        assert_eq!(indices[2], 0); // (1, -1)
    }

    #[test]
    fn quadratic_target_is_realizable_and_reproducible() {
        let a = gen_quadratic_target::<f64>(4, 3, ShiftSet::nearest(), 5, 64).unwrap();
        let b = gen_quadratic_target::<f64>(4, 3, ShiftSet::nearest(), 5, 64).unwrap();
        assert_eq!(a.dataset, b.dataset);
        let Labels::Targets(y) = &a.dataset.labels else {
            panic!()
        };
        let pred = a.layer.forward(&a.dataset.features).unwrap();
        assert_eq!(mse(&pred, y).unwrap(), 0.0);
        assert!(least_squares_floor(&a.dataset.features, y).unwrap() > 1e-3);
    }

    #[test]
    fn circles_radii_and_linear_inseparability() {
        let ds = gen_circles::<f64>(2, 200, 0.0, 1).unwrap();
        let Labels::Classes { indices, .. } = &ds.labels else {
            panic!()
        };
        for (row, &c) in ds.features.data().chunks(2).zip(indices) {
            let r = (row[0] * row[0] + row[1] * row[1]).sqrt();
            assert!((r - (c + 1) as f64).abs() < 1e-12);
        }
        assert!(least_squares_accuracy(&ds.features, &ds.labels).unwrap() <= 0.6);
        assert!(gen_circles::<f64>(2, 10, -0.1, 1).is_err());
        assert!(gen_circles::<f64>(3, 2, 0.1, 1).is_err());
    }

    #[test]
    fn blobs_reproducible() {
        let a = gen_blobs::<f32>(3, 30, 0.5, 8).unwrap();
        let b = gen_blobs::<f32>(3, 30, 0.5, 8).unwrap();
        assert_eq!(a, b);
        let noiseless = gen_blobs::<f64>(3, 6, 0.0, 8).unwrap();
        assert_eq!(
            noiseless.features.data()[0..2],
            noiseless.features.data()[6..8]
        );
    }
}
