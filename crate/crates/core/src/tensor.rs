//! Dense row-major tensors and the small kernel set the rest of the crate
//! composes.
//!
//! All reductions run sequentially over their axis starting from zero, so
//! results are bit-reproducible and can be compared exactly against naive
//! loop oracles.

use std::fmt;

use crate::error::{Error, Result};
use crate::scalar::{DType, Scalar};

#[derive(Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: fmt::Debug> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("data", &self.data)
            .finish()
    }
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl<T: Scalar> Tensor<T> {
    /// Builds a tensor, validating the element count and finiteness.
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        if numel(&shape) != data.len() {
            return Err(Error::dim(format!(
                "shape {:?} needs {} elements, got {}",
                shape,
                numel(&shape),
                data.len()
            )));
        }
        let t = Self { shape, data };
        t.check_finite("Tensor::new")?;
        Ok(t)
    }

    /// Internal constructor for kernel outputs whose length is correct by
    /// construction.
    pub(crate) fn from_raw(shape: Vec<usize>, data: Vec<T>) -> Self {
        debug_assert_eq!(numel(&shape), data.len());
        Self { shape, data }
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        Self::from_raw(shape.to_vec(), vec![value; numel(shape)])
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, T::one())
    }

    /// Rank-0 tensor.
    pub fn scalar(value: T) -> Self {
        Self::from_raw(Vec::new(), vec![value])
    }

    pub fn vector(data: Vec<T>) -> Result<Self> {
        Self::new(vec![data.len()], data)
    }

    /// 2-D tensor from nested rows.
    pub fn matrix(rows: &[Vec<T>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::dim("ragged rows"));
        }
        Self::new(vec![r, c], rows.concat())
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> T) -> Self {
        Self::from_raw(shape.to_vec(), (0..numel(shape)).map(&mut f).collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    /// Mutable access for in-place parameter updates.
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn dtype(&self) -> DType {
        T::DTYPE
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Row-major strides; the last is 1.
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.shape.len()];
        for i in (0..self.shape.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * self.shape[i + 1];
        }
        strides
    }

    pub fn get(&self, index: &[usize]) -> Option<T> {
        if index.len() != self.shape.len() || index.iter().zip(&self.shape).any(|(i, s)| i >= s) {
            return None;
        }
        let flat: usize = index.iter().zip(self.strides()).map(|(i, s)| i * s).sum();
        Some(self.data[flat])
    }

    /// The value of a rank-0 or single-element tensor.
    pub fn item(&self) -> Result<T> {
        if self.data.len() == 1 {
            Ok(self.data[0])
        } else {
            Err(Error::dim(format!("item() on shape {:?}", self.shape)))
        }
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        if numel(shape) != self.len() {
            return Err(Error::dim(format!(
                "cannot reshape {:?} into {:?}",
                self.shape, shape
            )));
        }
        Ok(Self::from_raw(shape.to_vec(), self.data.clone()))
    }

    /// Converts between precisions.
    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor::from_raw(
            self.shape.clone(),
            self.data
                .iter()
                .map(|v| U::from_f64_lossy(v.to_f64_lossless()))
                .collect(),
        )
    }

    /// Fails with the first non-finite flat index.
    pub fn check_finite(&self, context: &str) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            Some(index) => Err(Error::NonFinite {
                context: context.to_string(),
                index,
            }),
            None => Ok(()),
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self::from_raw(
            self.shape.clone(),
            self.data.iter().map(|&v| f(v)).collect(),
        )
    }

    fn same_shape(&self, other: &Self, op: &str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::dim(format!(
                "{op}: shapes {:?} and {:?} differ",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    fn zip_with(&self, other: &Self, op: &str, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.same_shape(other, op)?;
        Ok(Self::from_raw(
            self.shape.clone(),
            self.data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }

    /// Matrix product of `[r, c] x [c, k]`, summing sequentially over `c`.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.ndim() != 2 || other.ndim() != 2 || self.shape[1] != other.shape[0] {
            return Err(Error::dim(format!(
                "matmul: {:?} x {:?}",
                self.shape, other.shape
            )));
        }
        let (r, c, k) = (self.shape[0], self.shape[1], other.shape[1]);
        let mut out = vec![T::zero(); r * k];
        for i in 0..r {
            let row = &self.data[i * c..(i + 1) * c];
            for j in 0..k {
                let mut acc = T::zero();
                for (p, &a) in row.iter().enumerate() {
                    acc += a * other.data[p * k + j];
                }
                out[i * k + j] = acc;
            }
        }
        Ok(Self::from_raw(vec![r, k], out))
    }

    /// Transpose of a 2-D tensor.
    pub fn transpose(&self) -> Result<Self> {
        if self.ndim() != 2 {
            return Err(Error::dim(format!("transpose of {:?}", self.shape)));
        }
        let (r, c) = (self.shape[0], self.shape[1]);
        let mut out = Vec::with_capacity(r * c);
        for j in 0..c {
            for i in 0..r {
                out.push(self.data[i * c + j]);
            }
        }
        Ok(Self::from_raw(vec![c, r], out))
    }

    pub fn hadamard(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "hadamard", |a, b| a * b)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|v| v * s)
    }

    /// Adds a vector along the last axis of every leading-batch row.
    pub fn add_row(&self, row: &Self) -> Result<Self> {
        let d = self.last_extent("add_row")?;
        if row.shape != [d] {
            return Err(Error::dim(format!(
                "add_row: row {:?} against trailing extent {d}",
                row.shape
            )));
        }
        let mut out = self.data.clone();
        for chunk in out.chunks_mut(d) {
            for (o, &b) in chunk.iter_mut().zip(&row.data) {
                *o += b;
            }
        }
        Ok(Self::from_raw(self.shape.clone(), out))
    }

    /// Multiplies every leading-batch row elementwise by a vector.
    pub fn mul_row(&self, row: &Self) -> Result<Self> {
        let d = self.last_extent("mul_row")?;
        if row.shape != [d] {
            return Err(Error::dim(format!(
                "mul_row: row {:?} against trailing extent {d}",
                row.shape
            )));
        }
        let mut out = self.data.clone();
        for chunk in out.chunks_mut(d) {
            for (o, &b) in chunk.iter_mut().zip(&row.data) {
                *o *= b;
            }
        }
        Ok(Self::from_raw(self.shape.clone(), out))
    }

    /// Sums all leading-batch rows into one vector of the trailing extent.
    pub fn fold_rows(&self) -> Result<Self> {
        let d = self.last_extent("fold_rows")?;
        self.reshape(&[self.len() / d, d])?.reduce_sum(0)
    }

    fn last_extent(&self, op: &str) -> Result<usize> {
        match self.shape.last() {
            Some(&d) if d >= 1 => Ok(d),
            _ => Err(Error::dim(format!(
                "{op}: needs a non-empty last axis, got {:?}",
                self.shape
            ))),
        }
    }

    /// Circular shift along the last axis: `out[.., i] = y[.., (i + r) mod d]`.
    pub fn roll(&self, r: i64) -> Result<Self> {
        let d = self.last_extent("roll")?;
        let shift = r.rem_euclid(d as i64) as usize;
        let mut out = Vec::with_capacity(self.len());
        for row in self.data.chunks(d) {
            out.extend_from_slice(&row[shift..]);
            out.extend_from_slice(&row[..shift]);
        }
        Ok(Self::from_raw(self.shape.clone(), out))
    }

    /// Sum over one axis, removing it from the shape.
    pub fn reduce_sum(&self, axis: usize) -> Result<Self> {
        if axis >= self.ndim() {
            return Err(Error::dim(format!(
                "reduce_sum: axis {axis} out of range for {:?}",
                self.shape
            )));
        }
        let outer: usize = self.shape[..axis].iter().product();
        let extent = self.shape[axis];
        let inner: usize = self.shape[axis + 1..].iter().product();
        let mut out = vec![T::zero(); outer * inner];
        for o in 0..outer {
            for i in 0..inner {
                let mut acc = T::zero();
                for a in 0..extent {
                    acc += self.data[(o * extent + a) * inner + i];
                }
                out[o * inner + i] = acc;
            }
        }
        let mut shape = self.shape.clone();
        shape.remove(axis);
        Ok(Self::from_raw(shape, out))
    }

    /// Inverse shape operation of `reduce_sum`: repeats along a new axis.
    pub fn broadcast_axis(&self, axis: usize, extent: usize) -> Result<Self> {
        if axis > self.ndim() {
            return Err(Error::dim(format!(
                "broadcast_axis: axis {axis} out of range for {:?}",
                self.shape
            )));
        }
        let outer: usize = self.shape[..axis].iter().product();
        let inner: usize = self.shape[axis..].iter().product();
        let mut out = Vec::with_capacity(outer * extent * inner);
        for o in 0..outer {
            let block = &self.data[o * inner..(o + 1) * inner];
            for _ in 0..extent {
                out.extend_from_slice(block);
            }
        }
        let mut shape = self.shape.clone();
        shape.insert(axis, extent);
        Ok(Self::from_raw(shape, out))
    }

    /// Sequential sum of every element.
    pub fn sum_all(&self) -> T {
        let mut acc = T::zero();
        for &v in &self.data {
            acc += v;
        }
        acc
    }

    /// Inner product of equally shaped tensors.
    pub fn dot(&self, other: &Self) -> Result<T> {
        self.same_shape(other, "dot")?;
        let mut acc = T::zero();
        for (&a, &b) in self.data.iter().zip(&other.data) {
            acc += a * b;
        }
        Ok(acc)
    }

    /// Index of the maximum along the last axis for every leading row; ties
    /// resolve to the lowest index.
    pub fn argmax_last(&self) -> Result<Vec<usize>> {
        let d = self.last_extent("argmax_last")?;
        Ok(self
            .data
            .chunks(d)
            .map(|row| {
                let mut best = 0;
                for (i, &v) in row.iter().enumerate().skip(1) {
                    if v > row[best] {
                        best = i;
                    }
                }
                best
            })
            .collect())
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<T> {
        self.same_shape(other, "max_abs_diff")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs())))
    }

    /// Bitwise equality, distinguishing `0.0` from `-0.0`.
    pub fn bitwise_eq(&self, other: &Self) -> bool {
        self.shape == other.shape
            && self.data.iter().zip(&other.data).all(|(a, b)| {
                let (mut x, mut y) = (Vec::new(), Vec::new());
                a.write_le(&mut x);
                b.write_le(&mut y);
                x == y
            })
    }

    /// Rows `rows` of the leading axis, in the given order.
    pub fn gather_rows(&self, rows: &[usize]) -> Result<Self> {
        if self.ndim() == 0 {
            return Err(Error::dim("gather_rows on a scalar"));
        }
        let width: usize = self.shape[1..].iter().product();
        let mut out = Vec::with_capacity(rows.len() * width);
        for &r in rows {
            if r >= self.shape[0] {
                return Err(Error::dim(format!(
                    "row {r} out of range {}",
                    self.shape[0]
                )));
            }
            out.extend_from_slice(&self.data[r * width..(r + 1) * width]);
        }
        let mut shape = self.shape.clone();
        shape[0] = rows.len();
        Ok(Self::from_raw(shape, out))
    }
}
