//! Layer compositions, quadratic baselines, losses and optimizers.

pub mod baseline;
pub mod mlp;
pub mod optim;
pub mod train;

pub use baseline::{BaselineTag, QuadraNetLayer, SwiGluLayer};
pub use mlp::{Activation, Layer, Mlp, MlpConfig};
pub use optim::{Adam, AdamConfig, Optimizer, Sgd};
pub use train::{accuracy, evaluate, loss_and_grads, train_step, Evaluation};

use crate::autograd::{gradcheck_widened, well_scaled, GradCheckReport, OpTag, Tape, Var};
use crate::error::Result;
use crate::rng::CounterRng;
use crate::scalar::{cst, Scalar};
use crate::tensor::Tensor;

/// Anything exposing named trainable tensors in a fixed order.
pub trait Parameterized<T: Scalar> {
    fn parameters(&self) -> Vec<(String, &Tensor<T>)>;

    fn parameters_mut(&mut self) -> Vec<(String, &mut Tensor<T>)>;

    /// Stored trainable scalars, counted one by one.
    fn num_parameters(&self) -> usize {
        self.parameters().iter().map(|(_, t)| t.len()).sum()
    }
}

/// Overwrites every parameter with `scale` times a [`well_scaled`] draw, so
/// enhancer coefficients are non-zero too.
pub fn randomize_parameters<T: Scalar>(
    model: &mut impl Parameterized<T>,
    rng: &mut CounterRng,
    scale: f64,
) {
    for (_, t) in model.parameters_mut() {
        *t = well_scaled::<T>(t.shape(), rng).map(|v| v * cst(scale));
    }
}

fn weighted_output<S: Scalar>(
    model: &Mlp<S>,
    tape: &Tape<S>,
    vars: &[Var],
    x: &Tensor<f64>,
    c: &Tensor<f64>,
    corrupt: Option<OpTag>,
) -> Result<Var> {
    if let Some(bad) = corrupt {
        tape.corrupt_backward(bad);
    }
    let xv = tape.constant(x.cast());
    let out = model.forward_on_tape(tape, vars, xv)?;
    let cv = tape.constant(c.cast());
    let weighted = tape.hadamard(out, cv)?;
    tape.sum_all(weighted)
}

/// Gradient check of `sum(model(x) ⊙ C)` over every parameter, with `x` and
/// `C` drawn by [`well_scaled`], via [`gradcheck_widened`].
pub fn gradcheck_model<T: Scalar>(
    model: &Mlp<T>,
    batch: usize,
    rng: &mut CounterRng,
    step: f64,
    tol: f64,
    corrupt: Option<OpTag>,
) -> Result<GradCheckReport> {
    let x = well_scaled::<f64>(&[batch, model.input_dim()], rng)
        .cast::<T>()
        .cast::<f64>();
    let c = well_scaled::<f64>(&[batch, model.output_dim()], rng)
        .cast::<T>()
        .cast::<f64>();
    let wide = model.cast::<f64>();
    let at: Vec<(String, Tensor<T>)> = model
        .parameters()
        .into_iter()
        .map(|(name, t)| (name, t.clone()))
        .collect();
    gradcheck_widened(
        |tape, vars| weighted_output(model, tape, vars, &x, &c, corrupt),
        |tape, vars| weighted_output(&wide, tape, vars, &x, &c, corrupt),
        &at,
        step,
        tol,
    )
}

/// Mean softmax cross-entropy, evaluated without recording gradients.
pub fn cross_entropy<T: Scalar>(logits: &Tensor<T>, labels: &[usize]) -> Result<T> {
    let tape = Tape::new();
    let l = tape.constant(logits.clone());
    let loss = tape.cross_entropy(l, labels)?;
    tape.value(loss)?.item()
}

/// Mean squared error over all elements.
pub fn mse<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<T> {
    let tape = Tape::new();
    let (p, t) = (tape.constant(pred.clone()), tape.constant(target.clone()));
    let loss = tape.mse(p, t)?;
    tape.value(loss)?.item()
}

/// Structural kind of a layer, for closed-form parameter counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Linear,
    Qe { k: usize },
    QuadraNet { bias: bool },
    SwiGlu,
}

impl LayerKind {
    pub fn param_count(self, n: usize, d: usize) -> usize {
        match self {
            LayerKind::Linear => n * d + d,
            LayerKind::Qe { k } => n * d + d + k * d,
            LayerKind::QuadraNet { bias } => 3 * n * d + if bias { d } else { 0 },
            LayerKind::SwiGlu => 2 * n * d,
        }
    }
}

/// Largest hidden width `h >= 1` whose `[n_in, h, n_out]` network of `kind`
/// layers has at most `target` parameters.
pub fn matched_hidden_width(
    n_in: usize,
    n_out: usize,
    target: usize,
    kind: LayerKind,
) -> Option<usize> {
    let count = |h: usize| kind.param_count(n_in, h) + kind.param_count(h, n_out);
    if count(1) > target {
        return None;
    }
    let (mut lo, mut hi) = (1usize, 2usize);
    while count(hi) <= target {
        lo = hi;
        hi *= 2;
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if count(mid) <= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(lo)
}
