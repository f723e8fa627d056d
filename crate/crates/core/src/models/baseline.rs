//! Quadratic baselines with independent factor matrices.

use crate::autograd::{Tape, Var};
use crate::error::{Error, Result};
use crate::rng::CounterRng;
use crate::scalar::{cst, Scalar};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BaselineTag {
    QuadraNet,
    SwiGlu,
}

impl BaselineTag {
    pub fn name(self) -> &'static str {
        match self {
            BaselineTag::QuadraNet => "quadranet",
            BaselineTag::SwiGlu => "swiglu",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "quadranet" => Some(BaselineTag::QuadraNet),
            "swiglu" => Some(BaselineTag::SwiGlu),
            _ => None,
        }
    }
}

fn glorot<T: Scalar>(n: usize, d: usize, rng: &mut CounterRng, gain: f64) -> Tensor<T> {
    let s = gain * (6.0 / (n + d) as f64).sqrt();
    Tensor::from_fn(&[d, n], |_| cst(rng.uniform_in(-s, s)))
}

fn check_weights<T: Scalar>(ws: &[&Tensor<T>]) -> Result<(usize, usize)> {
    let shape = ws[0].shape();
    if shape.len() != 2 || ws.iter().any(|w| w.shape() != shape) {
        return Err(Error::dim(
            "baseline factor matrices must share one [d, n] shape",
        ));
    }
    Ok((shape[0], shape[1]))
}

fn project<T: Scalar>(tape: &Tape<T>, x: Var, w: Var) -> Result<Var> {
    let wt = tape.transpose(w)?;
    tape.matmul(x, wt)
}

/// `y = (W_a x) ⊙ (W_b x) + W_c x (+ b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraNetLayer<T> {
    pub wa: Tensor<T>,
    pub wb: Tensor<T>,
    pub wc: Tensor<T>,
    pub bias: Option<Tensor<T>>,
}

impl<T: Scalar> QuadraNetLayer<T> {
    pub fn new(
        wa: Tensor<T>,
        wb: Tensor<T>,
        wc: Tensor<T>,
        bias: Option<Tensor<T>>,
    ) -> Result<Self> {
        let (d, _) = check_weights(&[&wa, &wb, &wc])?;
        if let Some(b) = &bias {
            if b.shape() != [d] {
                return Err(Error::dim(format!("bias {:?} for {d} outputs", b.shape())));
            }
        }
        Ok(Self { wa, wb, wc, bias })
    }

    pub fn cast<U: Scalar>(&self) -> QuadraNetLayer<U> {
        QuadraNetLayer {
            wa: self.wa.cast(),
            wb: self.wb.cast(),
            wc: self.wc.cast(),
            bias: self.bias.as_ref().map(Tensor::cast),
        }
    }

    pub fn init(
        n: usize,
        d: usize,
        with_bias: bool,
        rng: &mut CounterRng,
        gain: f64,
    ) -> Result<Self> {
        Self::new(
            glorot(n, d, rng, gain),
            glorot(n, d, rng, gain),
            glorot(n, d, rng, gain),
            with_bias.then(|| Tensor::zeros(&[d])),
        )
    }

    pub fn n(&self) -> usize {
        self.wa.shape()[1]
    }

    pub fn d(&self) -> usize {
        self.wa.shape()[0]
    }

    pub fn parameters(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = vec![
            ("wa".to_string(), &self.wa),
            ("wb".to_string(), &self.wb),
            ("wc".to_string(), &self.wc),
        ];
        if let Some(b) = &self.bias {
            out.push(("bias".to_string(), b));
        }
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let mut out = vec![
            ("wa".to_string(), &mut self.wa),
            ("wb".to_string(), &mut self.wb),
            ("wc".to_string(), &mut self.wc),
        ];
        if let Some(b) = &mut self.bias {
            out.push(("bias".to_string(), b));
        }
        out
    }

    pub fn forward_on_tape(&self, tape: &Tape<T>, vars: &[Var], x: Var) -> Result<Var> {
        let a = project(tape, x, vars[0])?;
        let b = project(tape, x, vars[1])?;
        let c = project(tape, x, vars[2])?;
        let quad = tape.hadamard(a, b)?;
        let out = tape.add(quad, c)?;
        match vars.get(3) {
            Some(&bias) if self.bias.is_some() => tape.add_row(out, bias),
            _ => Ok(out),
        }
    }
}

/// `y = (W_1 x) ⊙ sigmoid(W_1 x) ⊙ (W_2 x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SwiGluLayer<T> {
    pub w1: Tensor<T>,
    pub w2: Tensor<T>,
}

impl<T: Scalar> SwiGluLayer<T> {
    pub fn new(w1: Tensor<T>, w2: Tensor<T>) -> Result<Self> {
        check_weights(&[&w1, &w2])?;
        Ok(Self { w1, w2 })
    }

    pub fn init(n: usize, d: usize, rng: &mut CounterRng, gain: f64) -> Result<Self> {
        Self::new(glorot(n, d, rng, gain), glorot(n, d, rng, gain))
    }

    pub fn cast<U: Scalar>(&self) -> SwiGluLayer<U> {
        SwiGluLayer {
            w1: self.w1.cast(),
            w2: self.w2.cast(),
        }
    }

    pub fn n(&self) -> usize {
        self.w1.shape()[1]
    }

    pub fn d(&self) -> usize {
        self.w1.shape()[0]
    }

    pub fn parameters(&self) -> Vec<(String, &Tensor<T>)> {
        vec![("w1".to_string(), &self.w1), ("w2".to_string(), &self.w2)]
    }

    pub fn parameters_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        vec![
            ("w1".to_string(), &mut self.w1),
            ("w2".to_string(), &mut self.w2),
        ]
    }

    pub fn forward_on_tape(&self, tape: &Tape<T>, vars: &[Var], x: Var) -> Result<Var> {
        let gate_in = project(tape, x, vars[0])?;
        let value = project(tape, x, vars[1])?;
        let gate = tape.sigmoid(gate_in)?;
        let swish = tape.hadamard(gate_in, gate)?;
        tape.hadamard(swish, value)
    }
}
