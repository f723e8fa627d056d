//! Datasets: synthetic generators, file loaders and batching.

pub mod io;
pub mod linear;
pub mod synth;

pub use io::{load_csv, load_idx, write_csv, write_idx_images, write_idx_labels, LabelColumn};
pub use linear::{least_squares_accuracy, least_squares_floor, linear_cap_2d};
pub use synth::{gen_blobs, gen_circles, gen_quadratic_target, gen_xor, QuadraticTarget};

use crate::error::{Error, Result};
use crate::rng::CounterRng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub enum Labels<T> {
    Classes {
        indices: Vec<usize>,
        num_classes: usize,
    },
    Targets(Tensor<T>),
}

impl<T: Scalar> Labels<T> {
    pub fn len(&self) -> usize {
        match self {
            Labels::Classes { indices, .. } => indices.len(),
            Labels::Targets(t) => t.shape().first().copied().unwrap_or(0),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, rows: &[usize]) -> Result<Labels<T>> {
        Ok(match self {
            Labels::Classes {
                indices,
                num_classes,
            } => Labels::Classes {
                indices: rows.iter().map(|&r| indices[r]).collect(),
                num_classes: *num_classes,
            },
            Labels::Targets(t) => Labels::Targets(t.gather_rows(rows)?),
        })
    }
}

/// Disjoint train/valid index sets covering `[0, N)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    pub features: Tensor<T>,
    pub labels: Labels<T>,
    pub split: Split,
    /// Generator name and seed, or source path.
    pub provenance: String,
}

impl<T: Scalar> Dataset<T> {
    /// Validates the invariants; every row starts in the training split.
    pub fn new(
        features: Tensor<T>,
        labels: Labels<T>,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        if features.ndim() != 2 || features.shape()[0] == 0 {
            return Err(Error::data(format!(
                "features must be a non-empty [N, n] matrix, got {:?}",
                features.shape()
            )));
        }
        let n_rows = features.shape()[0];
        if labels.len() != n_rows {
            return Err(Error::data(format!(
                "{n_rows} rows but {} labels",
                labels.len()
            )));
        }
        if let Labels::Classes {
            indices,
            num_classes,
        } = &labels
        {
            if let Some(bad) = indices.iter().find(|&&c| c >= *num_classes) {
                return Err(Error::data(format!(
                    "class {bad} >= class count {num_classes}"
                )));
            }
        }
        features.check_finite("dataset features")?;
        Ok(Self {
            features,
            labels,
            split: Split {
                train: (0..n_rows).collect(),
                valid: Vec::new(),
            },
            provenance: provenance.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.features.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_features(&self) -> usize {
        self.features.shape()[1]
    }

    pub fn num_classes(&self) -> Option<usize> {
        match &self.labels {
            Labels::Classes { num_classes, .. } => Some(*num_classes),
            Labels::Targets(_) => None,
        }
    }

    /// Output width a model needs: class count or target width.
    pub fn output_dim(&self) -> usize {
        match &self.labels {
            Labels::Classes { num_classes, .. } => *num_classes,
            Labels::Targets(t) => t.shape()[1],
        }
    }

    /// Moves a shuffled `fraction` of the rows to the validation split.
    pub fn with_split(mut self, valid_fraction: f64, seed: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&valid_fraction) {
            return Err(Error::config(format!(
                "validation fraction must lie in [0, 1), got {valid_fraction}"
            )));
        }
        let n = self.len();
        let mut order: Vec<usize> = (0..n).collect();
        CounterRng::new(seed).shuffle(&mut order);
        let n_valid = ((n as f64) * valid_fraction).floor() as usize;
        let mut valid = order.split_off(n - n_valid);
        order.sort_unstable();
        valid.sort_unstable();
        self.split = Split {
            train: order,
            valid,
        };
        Ok(self)
    }

    /// Features and labels of the given rows.
    pub fn rows(&self, rows: &[usize]) -> Result<(Tensor<T>, Labels<T>)> {
        Ok((self.features.gather_rows(rows)?, self.labels.select(rows)?))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Batch<T> {
    pub rows: Vec<usize>,
    pub features: Tensor<T>,
    pub labels: Labels<T>,
}

/// Iterator over mini-batches of a row subset.
pub struct Batches<'a, T> {
    dataset: &'a Dataset<T>,
    order: Vec<usize>,
    batch_size: usize,
    cursor: usize,
}

impl<T: Scalar> Iterator for Batches<'_, T> {
    type Item = Result<Batch<T>>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.cursor >= self.order.len() {
            return None;
        }
        let end = (self.cursor + self.batch_size).min(self.order.len());
        let rows = self.order[self.cursor..end].to_vec();
        self.cursor = end;
        Some(self.dataset.rows(&rows).map(|(features, labels)| Batch {
            rows,
            features,
            labels,
        }))
    }
}

/// Batches over `rows` in order, or shuffled by `shuffle_seed`. The final
/// partial batch is kept.
pub fn batch_iter<'a, T: Scalar>(
    dataset: &'a Dataset<T>,
    rows: &[usize],
    batch_size: usize,
    shuffle_seed: Option<u64>,
) -> Result<Batches<'a, T>> {
    if batch_size == 0 {
        return Err(Error::config("batch size must be >= 1"));
    }
    let mut order = rows.to_vec();
    if let Some(seed) = shuffle_seed {
        CounterRng::new(seed).shuffle(&mut order);
    }
    Ok(Batches {
        dataset,
        order,
        batch_size,
        cursor: 0,
    })
}
