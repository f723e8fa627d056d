//! Band-sparse Λ: one trainable `d`-vector per diagonal shift.
//!
//! Row `i` of Λ holds `λ_r[i]` in column `(i + r) mod d` for every shift
//! `r`, so each shift contributes a wrapped diagonal: the in-band part plus
//! a triangular corner where the diagonal wraps around.

use std::fmt;

use crate::autograd::{Tape, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Ordered set of diagonal shifts `K`.
///
/// Shift 0 (square terms) is only accepted through
/// [`ShiftSet::with_square_terms`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct ShiftSet {
    shifts: Vec<i64>,
    allow_square: bool,
}

impl ShiftSet {
    pub fn new(shifts: impl IntoIterator<Item = i64>) -> Result<Self> {
        Self::build(shifts, false)
    }

    /// Like [`ShiftSet::new`] but admits shifts that produce square terms.
    pub fn with_square_terms(shifts: impl IntoIterator<Item = i64>) -> Result<Self> {
        Self::build(shifts, true)
    }

    fn build(shifts: impl IntoIterator<Item = i64>, allow_square: bool) -> Result<Self> {
        let mut shifts: Vec<i64> = shifts.into_iter().collect();
        let given = shifts.len();
        shifts.sort_unstable();
        shifts.dedup();
        if shifts.len() != given {
            return Err(Error::config("duplicate shift in K"));
        }
        if !allow_square && shifts.contains(&0) {
            return Err(Error::config(
                "shift 0 produces square terms and needs the explicit override",
            ));
        }
        Ok(Self {
            shifts,
            allow_square,
        })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// Nearest-neighbour interactions, `K = {1}`.
    pub fn nearest() -> Self {
        Self {
            shifts: vec![1],
            allow_square: false,
        }
    }

    pub fn len(&self) -> usize {
        self.shifts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shifts.is_empty()
    }

    pub fn as_slice(&self) -> &[i64] {
        &self.shifts
    }

    pub fn allows_square_terms(&self) -> bool {
        self.allow_square
    }

    /// Checks that the shifts are usable at output width `d`: without the
    /// override no shift may be `0 mod d`, and the residues `r mod d` must be
    /// pairwise distinct so that no two shifts address the same diagonal.
    pub fn validate_for(&self, d: usize) -> Result<()> {
        if d == 0 {
            return Err(Error::config("output width d must be at least 1"));
        }
        if self.is_empty() {
            return Ok(());
        }
        let residues: Vec<i64> = self.shifts.iter().map(|r| r.rem_euclid(d as i64)).collect();
        if !self.allow_square {
            if let Some(pos) = residues.iter().position(|&m| m == 0) {
                let why = if d == 1 {
                    "with d = 1 every shift reduces to 0".to_string()
                } else {
                    format!("shift {} is 0 mod {d}", self.shifts[pos])
                };
                return Err(Error::config(format!("{why}, producing square terms")));
            }
        }
        for (i, a) in residues.iter().enumerate() {
            if let Some(j) = residues[i + 1..].iter().position(|b| b == a) {
                return Err(Error::config(format!(
                    "shifts {} and {} address the same diagonal when d = {d}",
                    self.shifts[i],
                    self.shifts[i + 1 + j]
                )));
            }
        }
        Ok(())
    }
}

impl fmt::Display for ShiftSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, r) in self.shifts.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{r}")?;
        }
        f.write_str("}")
    }
}

/// Parameter name of the shift-`r` line, e.g. `lambda+1`, `lambda-2`.
pub fn lambda_name(r: i64) -> String {
    format!("lambda{r:+}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandLambda<T> {
    d: usize,
    shifts: ShiftSet,
    lambdas: Vec<Tensor<T>>,
}

impl<T: Scalar> BandLambda<T> {
    /// All-zero Λ.
    pub fn zeros(d: usize, shifts: ShiftSet) -> Result<Self> {
        shifts.validate_for(d)?;
        let lambdas = vec![Tensor::zeros(&[d]); shifts.len()];
        Ok(Self { d, shifts, lambdas })
    }

    /// `lambdas[j]` belongs to the j-th shift in ascending order.
    pub fn from_parts(d: usize, shifts: ShiftSet, lambdas: Vec<Tensor<T>>) -> Result<Self> {
        shifts.validate_for(d)?;
        if lambdas.len() != shifts.len() {
            return Err(Error::dim(format!(
                "{} shifts but {} lambda lines",
                shifts.len(),
                lambdas.len()
            )));
        }
        if let Some(bad) = lambdas.iter().find(|l| l.shape() != [d]) {
            return Err(Error::dim(format!(
                "lambda line of shape {:?}, expected [{d}]",
                bad.shape()
            )));
        }
        Ok(Self { d, shifts, lambdas })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn shifts(&self) -> &ShiftSet {
        &self.shifts
    }

    pub fn lambdas(&self) -> &[Tensor<T>] {
        &self.lambdas
    }

    pub fn lambdas_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.lambdas
    }

    /// Free parameters: `k * d`.
    pub fn param_count(&self) -> usize {
        self.shifts.len() * self.d
    }

    fn check_width(&self, shape: &[usize]) -> Result<()> {
        if shape.last() != Some(&self.d) {
            return Err(Error::dim(format!(
                "lambda of width {} applied to shape {shape:?}",
                self.d
            )));
        }
        Ok(())
    }

    /// `Λy = Σ_r λ_r ⊙ roll(y, r)` over the last axis of `y`.
    pub fn apply(&self, y: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_width(y.shape())?;
        let mut out: Option<Tensor<T>> = None;
        for (&r, lambda) in self.shifts.as_slice().iter().zip(&self.lambdas) {
            let term = y.roll(r)?.mul_row(lambda)?;
            out = Some(match out {
                Some(acc) => acc.add(&term)?,
                None => term,
            });
        }
        Ok(out.unwrap_or_else(|| Tensor::zeros(y.shape())))
    }

    /// Differentiable [`BandLambda::apply`]; `lambdas` are the tape handles
    /// of the lambda lines in shift order.
    pub fn apply_on_tape(&self, tape: &Tape<T>, lambdas: &[Var], y: Var) -> Result<Var> {
        self.check_width(&tape.shape(y)?)?;
        if lambdas.len() != self.shifts.len() {
            return Err(Error::usage("one variable per lambda line expected"));
        }
        let mut out: Option<Var> = None;
        for (&r, &lambda) in self.shifts.as_slice().iter().zip(lambdas) {
            let rolled = tape.roll(y, r)?;
            let term = tape.mul_row(rolled, lambda)?;
            out = Some(match out {
                Some(acc) => tape.add(acc, term)?,
                None => term,
            });
        }
        match out {
            Some(v) => Ok(v),
            None => Ok(tape.constant(Tensor::zeros(&tape.shape(y)?))),
        }
    }

    /// Materializes Λ as a dense `d x d` matrix with `M[i, (i + r) mod d] =
    /// λ_r[i]`, so that `apply(y) == M y`.
    pub fn dense(&self) -> Tensor<T> {
        let d = self.d;
        let mut m = vec![T::zero(); d * d];
        for (&r, lambda) in self.shifts.as_slice().iter().zip(&self.lambdas) {
            for i in 0..d {
                let j = (i as i64 + r).rem_euclid(d as i64) as usize;
                m[i * d + j] += lambda.data()[i];
            }
        }
        Tensor::from_raw(vec![d, d], m)
    }
}
