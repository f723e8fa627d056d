use crate::autograd::{Tape, Var};
use crate::error::{Error, Result};
use crate::quadenhancer::band::{lambda_name, BandLambda, ShiftSet};
use crate::rng::CounterRng;
use crate::scalar::{cst, Scalar};
use crate::tensor::Tensor;

/// Linear layer with the shared-weight quadratic enhancer:
///
/// `z = (Λỹ) ⊙ ỹ + ỹ + b` with `ỹ = W x`.
///
/// With the enhancer disabled (or `K = ∅`) this is exactly `z = W x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct QeLayer<T> {
    weight: Tensor<T>,
    bias: Tensor<T>,
    lambda: BandLambda<T>,
    enhancer: bool,
}

/// Tape handles of a layer's parameters.
#[derive(Debug, Clone)]
pub struct QeVars {
    pub weight: Var,
    pub bias: Var,
    pub lambdas: Vec<Var>,
}

impl<T: Scalar> QeLayer<T> {
    pub fn new(
        weight: Tensor<T>,
        bias: Tensor<T>,
        lambda: BandLambda<T>,
        enhancer: bool,
    ) -> Result<Self> {
        if weight.ndim() != 2 || weight.shape()[1] == 0 {
            return Err(Error::dim(format!("weight of shape {:?}", weight.shape())));
        }
        let d = weight.shape()[0];
        if bias.shape() != [d] || lambda.d() != d {
            return Err(Error::dim(format!(
                "weight rows {d}, bias {:?}, lambda width {}",
                bias.shape(),
                lambda.d()
            )));
        }
        Ok(Self {
            weight,
            bias,
            lambda,
            enhancer,
        })
    }

    /// Uniform `W` in `[-s, s]` with `s = gain * sqrt(6 / (n + d))`, zero bias
    /// and zero λ, so a fresh layer computes exactly `W x + b`.
    pub fn init(
        n: usize,
        d: usize,
        shifts: ShiftSet,
        rng: &mut CounterRng,
        gain: f64,
    ) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::config(format!(
                "layer dims must be >= 1, got n={n} d={d}"
            )));
        }
        let lambda = BandLambda::zeros(d, shifts)?;
        let s = gain * (6.0 / (n + d) as f64).sqrt();
        let weight = Tensor::from_fn(&[d, n], |_| cst(rng.uniform_in(-s, s)));
        Self::new(weight, Tensor::zeros(&[d]), lambda, true)
    }

    /// Plain linear layer (enhancer disabled, `K = ∅`).
    pub fn init_linear(n: usize, d: usize, rng: &mut CounterRng, gain: f64) -> Result<Self> {
        let mut layer = Self::init(n, d, ShiftSet::empty(), rng, gain)?;
        layer.enhancer = false;
        Ok(layer)
    }

    /// Same layer in another precision.
    pub fn cast<U: Scalar>(&self) -> QeLayer<U> {
        let lines = self.lambda.lambdas().iter().map(Tensor::cast).collect();
        QeLayer {
            weight: self.weight.cast(),
            bias: self.bias.cast(),
            lambda: BandLambda::from_parts(self.d(), self.lambda.shifts().clone(), lines)
                .expect("shape already validated"),
            enhancer: self.enhancer,
        }
    }

    pub fn n(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn d(&self) -> usize {
        self.weight.shape()[0]
    }

    /// Number of active shifts; 0 when the enhancer is disabled.
    pub fn k(&self) -> usize {
        if self.enhancer {
            self.lambda.shifts().len()
        } else {
            0
        }
    }

    pub fn weight(&self) -> &Tensor<T> {
        &self.weight
    }

    pub fn bias(&self) -> &Tensor<T> {
        &self.bias
    }

    pub fn lambda(&self) -> &BandLambda<T> {
        &self.lambda
    }

    pub fn lambda_mut(&mut self) -> &mut BandLambda<T> {
        &mut self.lambda
    }

    pub fn enhancer_enabled(&self) -> bool {
        self.enhancer
    }

    fn quadratic_active(&self) -> bool {
        self.enhancer && !self.lambda.shifts().is_empty()
    }

    /// Trainable tensors in binding order: weight, bias, then λ lines when
    /// the enhancer is enabled.
    pub fn parameters(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = vec![
            ("weight".to_string(), &self.weight),
            ("bias".to_string(), &self.bias),
        ];
        if self.enhancer {
            for (&r, l) in self
                .lambda
                .shifts()
                .as_slice()
                .iter()
                .zip(self.lambda.lambdas())
            {
                out.push((lambda_name(r), l));
            }
        }
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let mut out = vec![
            ("weight".to_string(), &mut self.weight),
            ("bias".to_string(), &mut self.bias),
        ];
        if self.enhancer {
            let names: Vec<String> = self
                .lambda
                .shifts()
                .as_slice()
                .iter()
                .map(|&r| lambda_name(r))
                .collect();
            for (name, l) in names.into_iter().zip(self.lambda.lambdas_mut()) {
                out.push((name, l));
            }
        }
        out
    }

    /// Number of stored trainable scalars.
    pub fn enumerate_params(&self) -> usize {
        self.parameters().iter().map(|(_, t)| t.len()).sum()
    }

    fn check_input(&self, shape: &[usize]) -> Result<()> {
        if shape.len() != 2 || shape[1] != self.n() {
            return Err(Error::dim(format!(
                "layer expects [batch, {}], got {shape:?}",
                self.n()
            )));
        }
        Ok(())
    }

    /// Batched forward pass on `[batch, n]` input without recording.
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x.shape())?;
        let y = x.matmul(&self.weight.transpose()?)?;
        let z = if self.quadratic_active() {
            let quad = self.lambda.apply(&y)?.hadamard(&y)?;
            quad.add(&y)?.add_row(&self.bias)?
        } else {
            y.add_row(&self.bias)?
        };
        z.check_finite("qe layer output")?;
        Ok(z)
    }

    /// Single-vector forward pass on `[n]` input.
    pub fn forward_vector(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let out = self.forward(&x.reshape(&[1, x.len()])?)?;
        out.reshape(&[self.d()])
    }

    /// Records this layer's parameters as trainable leaves.
    pub fn bind(&self, tape: &Tape<T>) -> QeVars {
        QeVars {
            weight: tape.param(self.weight.clone()),
            bias: tape.param(self.bias.clone()),
            lambdas: if self.enhancer {
                self.lambda
                    .lambdas()
                    .iter()
                    .map(|l| tape.param(l.clone()))
                    .collect()
            } else {
                Vec::new()
            },
        }
    }

    /// Builds handles from a flat slice in [`QeLayer::parameters`] order,
    /// returning how many entries were consumed.
    pub fn vars_from(&self, vars: &[Var]) -> Result<(QeVars, usize)> {
        let needed = 2 + if self.enhancer {
            self.lambda.shifts().len()
        } else {
            0
        };
        if vars.len() < needed {
            return Err(Error::usage(format!(
                "layer needs {needed} parameter variables, {} left",
                vars.len()
            )));
        }
        Ok((
            QeVars {
                weight: vars[0],
                bias: vars[1],
                lambdas: vars[2..needed].to_vec(),
            },
            needed,
        ))
    }

    /// Differentiable forward pass. `ỹ = W x` is recorded once and feeds
    /// both the quadratic and the linear path.
    pub fn forward_on_tape(&self, tape: &Tape<T>, vars: &QeVars, x: Var) -> Result<Var> {
        self.check_input(&tape.shape(x)?)?;
        let wt = tape.transpose(vars.weight)?;
        let y = tape.matmul(x, wt)?;
        let pre = if self.quadratic_active() {
            let mixed = self.lambda.apply_on_tape(tape, &vars.lambdas, y)?;
            let quad = tape.hadamard(mixed, y)?;
            tape.add(quad, y)?
        } else {
            y
        };
        let z = tape.add_row(pre, vars.bias)?;
        tape.value(z)?.check_finite("qe layer output")?;
        Ok(z)
    }

    /// Re-enables or disables the enhancer. Disabling keeps λ but removes it
    /// from the trainable parameters.
    pub fn set_enhancer(&mut self, enabled: bool) {
        self.enhancer = enabled;
    }
}
