use crate::autograd::{Tape, Var};
use crate::data::Labels;
use crate::error::{Error, Result};
use crate::models::{Mlp, Optimizer, Parameterized};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Cross-entropy for class labels, mean squared error for targets.
pub fn loss_on_tape<T: Scalar>(tape: &Tape<T>, out: Var, labels: &Labels<T>) -> Result<Var> {
    match labels {
        Labels::Classes { indices, .. } => tape.cross_entropy(out, indices),
        Labels::Targets(t) => {
            let target = tape.constant(t.clone());
            tape.mse(out, target)
        }
    }
}

/// Loss and parameter gradients, in [`Parameterized`] order.
pub fn loss_and_grads<T: Scalar>(
    model: &Mlp<T>,
    features: &Tensor<T>,
    labels: &Labels<T>,
) -> Result<(T, Vec<Tensor<T>>)> {
    let tape = Tape::new();
    let vars = model.bind(&tape);
    let x = tape.constant(features.clone());
    let out = model.forward_on_tape(&tape, &vars, x)?;
    let loss = loss_on_tape(&tape, out, labels)?;
    let value = tape.value(loss)?.item()?;
    if !value.is_finite() {
        return Err(Error::NonFinite {
            context: "loss".into(),
            index: 0,
        });
    }
    let grads = tape.backward(loss)?;
    let grads = vars
        .iter()
        .map(|&v| grads.wrt(v))
        .collect::<Result<Vec<_>>>()?;
    Ok((value, grads))
}

/// One optimizer update on a batch; returns the loss before the update.
pub fn train_step<T: Scalar>(
    model: &mut Mlp<T>,
    optimizer: &mut dyn Optimizer<T>,
    features: &Tensor<T>,
    labels: &Labels<T>,
) -> Result<T> {
    let (loss, grads) = loss_and_grads(model, features, labels)?;
    optimizer.step(model.parameters_mut(), &grads)?;
    Ok(loss)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    /// Only for class labels.
    pub accuracy: Option<f64>,
}

/// Fraction of rows whose argmax matches the label.
pub fn accuracy<T: Scalar>(logits: &Tensor<T>, labels: &[usize]) -> Result<f64> {
    let predicted = logits.argmax_last()?;
    if predicted.len() != labels.len() {
        return Err(Error::dim(format!(
            "{} predictions for {} labels",
            predicted.len(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Ok(0.0);
    }
    let hits = predicted.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / labels.len() as f64)
}

pub fn evaluate<T: Scalar>(
    model: &Mlp<T>,
    features: &Tensor<T>,
    labels: &Labels<T>,
) -> Result<Evaluation> {
    let tape = Tape::new();
    let logits = tape.constant(model.forward(features)?);
    let loss = loss_on_tape(&tape, logits, labels)?;
    let loss = tape.value(loss)?.item()?.to_f64_lossless();
    let accuracy = match labels {
        Labels::Classes { indices, .. } => Some(accuracy(&tape.value(logits)?, indices)?),
        Labels::Targets(_) => None,
    };
    Ok(Evaluation { loss, accuracy })
}
