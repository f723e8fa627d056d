//! Direct evaluations of the unfactored quadratic layer, used to verify the
//! band-sparse implementation.
//!
//! Everything here works on single vectors with explicit index loops and
//! never calls into the layer's forward path. The chain is
//!
//! * full form: `z_i = xᵀ V_i x + (W x)_i + b_i`
//! * rank-1 form: `V_i = p_i q_iᵀ` gives `z = (P x) ⊙ (Q x) + W x + b`
//! * shared weights: `P = Λ W`, `Q = W` with Λ materialized densely.

use crate::error::{Error, Result};
use crate::quadenhancer::band::{BandLambda, ShiftSet};
use crate::quadenhancer::layer::QeLayer;
use crate::rng::CounterRng;
use crate::scalar::{cst, Scalar};
use crate::tensor::Tensor;

fn mat_vec<T: Scalar>(m: &Tensor<T>, x: &[T]) -> Result<Vec<T>> {
    if m.ndim() != 2 || m.shape()[1] != x.len() {
        return Err(Error::dim(format!(
            "matrix {:?} against vector of length {}",
            m.shape(),
            x.len()
        )));
    }
    let cols = x.len();
    Ok(m.data()
        .chunks(cols)
        .map(|row| {
            let mut acc = T::zero();
            for (a, b) in row.iter().zip(x) {
                acc += *a * *b;
            }
            acc
        })
        .collect())
}

/// `z_i = xᵀ V_i x + (W x)_i + b_i` with one `n x n` matrix per output.
pub fn full_quadratic_form<T: Scalar>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    v: &[Tensor<T>],
) -> Result<Tensor<T>> {
    let n = x.len();
    let linear = mat_vec(weight, x.data())?;
    let d = linear.len();
    if v.len() != d || bias.len() != d {
        return Err(Error::dim(format!(
            "{d} outputs but {} quadratic matrices and bias of length {}",
            v.len(),
            bias.len()
        )));
    }
    let xs = x.data();
    let mut out = Vec::with_capacity(d);
    for i in 0..d {
        if v[i].shape() != [n, n] {
            return Err(Error::dim(format!("V_{i} has shape {:?}", v[i].shape())));
        }
        let vi = v[i].data();
        let mut quad = T::zero();
        for j in 0..n {
            for k in 0..n {
                quad += xs[j] * vi[j * n + k] * xs[k];
            }
        }
        out.push(quad + linear[i] + bias.data()[i]);
    }
    Tensor::vector(out)
}

/// `V_i = p_i q_iᵀ` from the rows of `P` and `Q`.
pub fn rank1_matrices<T: Scalar>(p: &Tensor<T>, q: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
    if p.ndim() != 2 || p.shape() != q.shape() {
        return Err(Error::dim(format!(
            "P {:?} and Q {:?}",
            p.shape(),
            q.shape()
        )));
    }
    let (d, n) = (p.shape()[0], p.shape()[1]);
    Ok((0..d)
        .map(|i| {
            let pi = &p.data()[i * n..(i + 1) * n];
            let qi = &q.data()[i * n..(i + 1) * n];
            Tensor::from_fn(&[n, n], |idx| pi[idx / n] * qi[idx % n])
        })
        .collect())
}

/// `z = (P x) ⊙ (Q x) + W x + b`.
pub fn rank1_form<T: Scalar>(
    x: &Tensor<T>,
    p: &Tensor<T>,
    q: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>> {
    let px = mat_vec(p, x.data())?;
    let qx = mat_vec(q, x.data())?;
    let wx = mat_vec(weight, x.data())?;
    if px.len() != qx.len() || px.len() != wx.len() || bias.len() != wx.len() {
        return Err(Error::dim("rank-1 factor row counts differ"));
    }
    Tensor::vector(
        (0..wx.len())
            .map(|i| px[i] * qx[i] + wx[i] + bias.data()[i])
            .collect(),
    )
}

/// Shared-weight factors of a layer: `P = Λ W` (dense Λ), `Q = W`.
pub fn shared_factors<T: Scalar>(layer: &QeLayer<T>) -> Result<(Tensor<T>, Tensor<T>)> {
    let w = layer.weight().clone();
    let p = if layer.enhancer_enabled() {
        layer.lambda().dense().matmul(&w)?
    } else {
        Tensor::zeros(w.shape())
    };
    Ok((p, w))
}

/// Pairwise max-abs deviations along the oracle chain for one input.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ChainDeviation {
    pub layer_vs_rank1: f64,
    pub layer_vs_full: f64,
    pub rank1_vs_full: f64,
    pub band_vs_dense: f64,
    /// `max(1, max_i |z_i|)`, for judging deviations relative to the output.
    pub magnitude: f64,
}

impl ChainDeviation {
    pub fn max(&self) -> f64 {
        self.layer_vs_rank1
            .max(self.layer_vs_full)
            .max(self.rank1_vs_full)
            .max(self.band_vs_dense)
    }

    /// [`max`](Self::max) divided by the output magnitude.
    pub fn scaled(&self) -> f64 {
        self.max() / self.magnitude
    }
}

/// Evaluates `x` through the layer and both reference forms, and `Λ ỹ`
/// through the band kernel and the dense matrix.
pub fn chain_deviation<T: Scalar>(layer: &QeLayer<T>, x: &Tensor<T>) -> Result<ChainDeviation> {
    let z = layer.forward_vector(x)?;
    let (p, q) = shared_factors(layer)?;
    let rank1 = rank1_form(x, &p, &q, layer.weight(), layer.bias())?;
    let full = full_quadratic_form(x, layer.weight(), layer.bias(), &rank1_matrices(&p, &q)?)?;

    let y = Tensor::vector(mat_vec(layer.weight(), x.data())?)?;
    let band = layer.lambda().apply(&y)?;
    let dense = Tensor::vector(mat_vec(&layer.lambda().dense(), y.data())?)?;

    let dev =
        |a: &Tensor<T>, b: &Tensor<T>| -> Result<f64> { Ok(a.max_abs_diff(b)?.to_f64_lossless()) };
    Ok(ChainDeviation {
        layer_vs_rank1: dev(&z, &rank1)?,
        layer_vs_full: dev(&z, &full)?,
        rank1_vs_full: dev(&rank1, &full)?,
        band_vs_dense: dev(&band, &dense)?,
        magnitude: z
            .data()
            .iter()
            .fold(1.0f64, |m, v| m.max(v.to_f64_lossless().abs())),
    })
}

/// Deviation of a layer's own forward pass from the reference chain
/// evaluated in double precision on the same parameters, relative to the
/// output magnitude. Isolates the kernel roundoff of low precisions.
pub fn forward_vs_double_reference<T: Scalar>(layer: &QeLayer<T>, x: &Tensor<T>) -> Result<f64> {
    let z: Tensor<f64> = layer.forward_vector(x)?.cast();
    let wide = layer.cast::<f64>();
    let xw = x.cast::<f64>();
    let (p, q) = shared_factors(&wide)?;
    let rank1 = rank1_form(&xw, &p, &q, wide.weight(), wide.bias())?;
    let full = full_quadratic_form(&xw, wide.weight(), wide.bias(), &rank1_matrices(&p, &q)?)?;
    let magnitude = full.data().iter().fold(1.0f64, |m, v| m.max(v.abs()));
    Ok(z.max_abs_diff(&rank1)?.max(z.max_abs_diff(&full)?) / magnitude)
}

/// A layer of the given shape with `W ~ N(0, 1/n)`, `b, λ_r, x ~ N(0, 1)`,
/// all drawn from `seed`.
pub fn instance_with<T: Scalar>(
    seed: u64,
    n: usize,
    d: usize,
    shifts: ShiftSet,
) -> Result<(QeLayer<T>, Tensor<T>)> {
    shifts.validate_for(d)?;
    let mut rng = CounterRng::new(seed).split(1);
    let std = 1.0 / (n.max(1) as f64).sqrt();
    let weight = Tensor::from_fn(&[d, n], |_| cst(std * rng.normal()));
    let bias = Tensor::from_fn(&[d], |_| cst(rng.normal()));
    let lines = (0..shifts.len())
        .map(|_| Tensor::from_fn(&[d], |_| cst(rng.normal())))
        .collect();
    let lambda = BandLambda::from_parts(d, shifts, lines)?;
    let x = Tensor::from_fn(&[n], |_| cst(rng.normal()));
    Ok((QeLayer::new(weight, bias, lambda, true)?, x))
}

/// Random sweep instance: `n, d` uniform in `[1, max_dim]`; each shift of
/// `pool` is kept with probability 1/2 unless it would collide with an
/// already kept one modulo `d` or vanish modulo `d`.
pub fn random_instance<T: Scalar>(
    seed: u64,
    max_dim: usize,
    pool: &[i64],
) -> Result<(QeLayer<T>, Tensor<T>)> {
    if max_dim == 0 {
        return Err(Error::config("max_dim must be at least 1"));
    }
    let mut rng = CounterRng::new(seed).split(0);
    let n = 1 + rng.below(max_dim as u64) as usize;
    let d = 1 + rng.below(max_dim as u64) as usize;
    let mut kept: Vec<i64> = Vec::new();
    for &r in pool {
        if rng.uniform() < 0.5 {
            let mut trial = kept.clone();
            trial.push(r);
            if ShiftSet::new(trial.iter().copied())
                .and_then(|s| s.validate_for(d))
                .is_ok()
            {
                kept = trial;
            }
        }
    }
    instance_with(seed, n, d, ShiftSet::new(kept)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadenhancer::band::{BandLambda, ShiftSet};

    #[test]
    fn zero_quadratic_matrices_give_linear() {
        let w = Tensor::matrix(&[vec![1.0, 2.0], vec![-1.0, 0.5]]).unwrap();
        let b = Tensor::vector(vec![0.1, 0.2]).unwrap();
        let x = Tensor::vector(vec![3.0, -1.0]).unwrap();
        let v = vec![Tensor::zeros(&[2, 2]); 2];
        let z = full_quadratic_form(&x, &w, &b, &v).unwrap();
        assert_eq!(z.data(), &[1.0 + 0.1, -3.5 + 0.2]);
    }

    #[test]
    fn hand_example_through_chain() {
        let w = Tensor::matrix(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let lambda = BandLambda::from_parts(
            2,
            ShiftSet::nearest(),
            vec![Tensor::vector(vec![1.0, 1.0]).unwrap()],
        )
        .unwrap();
        let layer = QeLayer::new(w, Tensor::zeros(&[2]), lambda, true).unwrap();
        let x = Tensor::vector(vec![1.0, 2.0]).unwrap();
        let (p, q) = shared_factors(&layer).unwrap();
        let full = full_quadratic_form(
            &x,
            layer.weight(),
            layer.bias(),
            &rank1_matrices(&p, &q).unwrap(),
        )
        .unwrap();
        assert_eq!(full.data(), &[3.0, 4.0]);
        assert_eq!(chain_deviation(&layer, &x).unwrap().max(), 0.0);
    }

    #[test]
    fn random_instances_are_valid_and_reproducible() {
        for seed in 0..50 {
            let (layer, x) = random_instance::<f64>(seed, 6, &[-3, -2, -1, 1, 2, 3]).unwrap();
            layer.lambda().shifts().validate_for(layer.d()).unwrap();
            assert_eq!(x.len(), layer.n());
            let (again, _) = random_instance::<f64>(seed, 6, &[-3, -2, -1, 1, 2, 3]).unwrap();
            assert_eq!(layer, again);
        }
    }
}
