//! Least-squares affine fits, the reference floor for purely linear models.

use crate::data::Labels;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Solves `A X = B` for symmetric positive semi-definite `A` (row-major,
/// `m x m`) by Gaussian elimination with partial pivoting. Near-singular
/// pivots are treated as zero directions.
fn solve(mut a: Vec<f64>, mut b: Vec<f64>, m: usize, cols: usize) -> Vec<f64> {
    let scale = a.iter().fold(0.0f64, |s, v| s.max(v.abs())).max(1.0);
    for c in 0..m {
        let pivot = (c..m)
            .max_by(|&i, &j| a[i * m + c].abs().total_cmp(&a[j * m + c].abs()))
            .unwrap_or(c);
        if a[pivot * m + c].abs() <= 1e-12 * scale {
            continue;
        }
        if pivot != c {
            for k in 0..m {
                a.swap(c * m + k, pivot * m + k);
            }
            for k in 0..cols {
                b.swap(c * cols + k, pivot * cols + k);
            }
        }
        for r in 0..m {
            if r == c {
                continue;
            }
            let f = a[r * m + c] / a[c * m + c];
            if f == 0.0 {
                continue;
            }
            for k in c..m {
                a[r * m + k] -= f * a[c * m + k];
            }
            for k in 0..cols {
                b[r * cols + k] -= f * b[c * cols + k];
            }
        }
    }
    let mut x = vec![0.0; m * cols];
    for c in 0..m {
        let p = a[c * m + c];
        if p.abs() > 1e-12 * scale {
            for k in 0..cols {
                x[c * cols + k] = b[c * cols + k] / p;
            }
        }
    }
    x
}

/// Affine least-squares predictions of `targets` (`[N, d]`) from
/// `features` (`[N, n]`) via the normal equations.
fn affine_fit(features: &[f64], n_rows: usize, n: usize, targets: &[f64], d: usize) -> Vec<f64> {
    let m = n + 1;
    let row = |i: usize| -> Vec<f64> {
        let mut r = features[i * n..(i + 1) * n].to_vec();
        r.push(1.0);
        r
    };
    let mut gram = vec![0.0; m * m];
    let mut rhs = vec![0.0; m * d];
    for i in 0..n_rows {
        let xi = row(i);
        for a in 0..m {
            for b in 0..m {
                gram[a * m + b] += xi[a] * xi[b];
            }
            for k in 0..d {
                rhs[a * d + k] += xi[a] * targets[i * d + k];
            }
        }
    }
    let beta = solve(gram, rhs, m, d);
    let mut pred = vec![0.0; n_rows * d];
    for i in 0..n_rows {
        let xi = row(i);
        for k in 0..d {
            pred[i * d + k] = (0..m).map(|a| xi[a] * beta[a * d + k]).sum();
        }
    }
    pred
}

fn as_f64<T: Scalar>(t: &Tensor<T>) -> Vec<f64> {
    t.data().iter().map(|v| v.to_f64_lossless()).collect()
}

/// Smallest mean squared error any affine map `x -> A x + c` reaches on the
/// given rows.
pub fn least_squares_floor<T: Scalar>(features: &Tensor<T>, targets: &Tensor<T>) -> Result<f64> {
    if features.ndim() != 2 || targets.ndim() != 2 || features.shape()[0] != targets.shape()[0] {
        return Err(Error::dim(format!(
            "features {:?} and targets {:?}",
            features.shape(),
            targets.shape()
        )));
    }
    let (rows, n, d) = (features.shape()[0], features.shape()[1], targets.shape()[1]);
    let y = as_f64(targets);
    let pred = affine_fit(&as_f64(features), rows, n, &y, d);
    let sse: f64 = pred.iter().zip(&y).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(sse / (rows * d) as f64)
}

/// Accuracy of the least-squares one-vs-rest affine classifier.
pub fn least_squares_accuracy<T: Scalar>(features: &Tensor<T>, labels: &Labels<T>) -> Result<f64> {
    let Labels::Classes {
        indices,
        num_classes,
    } = labels
    else {
        return Err(Error::data("least_squares_accuracy needs class labels"));
    };
    let (rows, n) = (features.shape()[0], features.shape()[1]);
    let c = *num_classes;
    let mut onehot = vec![0.0; rows * c];
    for (i, &l) in indices.iter().enumerate() {
        onehot[i * c + l] = 1.0;
    }
    let pred = affine_fit(&as_f64(features), rows, n, &onehot, c);
    let correct = pred
        .chunks(c)
        .zip(indices)
        .filter(|(scores, &l)| {
            let mut best = 0;
            for (k, &s) in scores.iter().enumerate() {
                if s > scores[best] {
                    best = k;
                }
            }
            best == l
        })
        .count();
    Ok(correct as f64 / rows as f64)
}

/// Best accuracy of any affine threshold classifier `[w·x + c > 0]` on
/// two-dimensional points with binary labels, by exhaustive search.
///
/// Every distinct split is reached by some direction strictly between two
/// consecutive critical angles (normals of point differences) and some
/// threshold between consecutive projections, so enumerating those is exact.
pub fn linear_cap_2d<T: Scalar>(features: &Tensor<T>, labels: &[usize]) -> Result<f64> {
    if features.ndim() != 2 || features.shape()[1] != 2 || features.shape()[0] != labels.len() {
        return Err(Error::dim(format!(
            "linear_cap_2d needs [N, 2] points and N labels, got {:?} and {}",
            features.shape(),
            labels.len()
        )));
    }
    if labels.iter().any(|&l| l > 1) {
        return Err(Error::data("linear_cap_2d needs labels in {0, 1}"));
    }
    let pts: Vec<(f64, f64)> = as_f64(features).chunks(2).map(|p| (p[0], p[1])).collect();
    let rows = pts.len();
    if rows == 0 {
        return Ok(0.0);
    }
    let tau = std::f64::consts::TAU;
    let mut angles = vec![0.0];
    for i in 0..rows {
        for j in i + 1..rows {
            let (dx, dy) = (pts[j].0 - pts[i].0, pts[j].1 - pts[i].1);
            if dx != 0.0 || dy != 0.0 {
                let normal = dy.atan2(dx) + std::f64::consts::FRAC_PI_2;
                angles.push(normal.rem_euclid(tau));
                angles.push((normal + std::f64::consts::PI).rem_euclid(tau));
            }
        }
    }
    angles.sort_by(f64::total_cmp);
    angles.dedup();
    let mut best = 0usize;
    for (k, &a) in angles.iter().enumerate() {
        let next = angles.get(k + 1).copied().unwrap_or(angles[0] + tau);
        let theta = 0.5 * (a + next);
        let (c, s) = (theta.cos(), theta.sin());
        let mut proj: Vec<(f64, usize)> = pts
            .iter()
            .zip(labels)
            .map(|(p, &l)| (c * p.0 + s * p.1, l))
            .collect();
        proj.sort_by(|a, b| a.0.total_cmp(&b.0));
        // Threshold before position `cut`: rows at or after it are predicted 1.
        let ones_total = labels.iter().filter(|&&l| l == 1).count();
        let mut zeros_below = 0;
        let mut ones_below = 0;
        for cut in 0..=rows {
            if cut == 0 || cut == rows || proj[cut - 1].0 < proj[cut].0 {
                let correct = zeros_below + (ones_total - ones_below);
                best = best.max(correct).max(rows - correct);
            }
            if cut < rows {
                if proj[cut].1 == 1 {
                    ones_below += 1;
                } else {
                    zeros_below += 1;
                }
            }
        }
    }
    Ok(best as f64 / rows as f64)
}
