use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::scalar::{cst, Scalar};
use crate::tensor::Tensor;

/// In-place parameter update from gradients given in the same order as the
/// parameters.
pub trait Optimizer<T: Scalar> {
    fn step(&mut self, params: Vec<(String, &mut Tensor<T>)>, grads: &[Tensor<T>]) -> Result<()>;
}

fn check_grads<T: Scalar>(params: &[(String, &mut Tensor<T>)], grads: &[Tensor<T>]) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::dim(format!(
            "{} parameters but {} gradients",
            params.len(),
            grads.len()
        )));
    }
    for ((name, p), g) in params.iter().zip(grads) {
        if p.shape() != g.shape() {
            return Err(Error::dim(format!(
                "gradient of {name}: shape {:?} vs parameter {:?}",
                g.shape(),
                p.shape()
            )));
        }
        g.check_finite(&format!("gradient of {name}"))?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct Sgd {
    lr: f64,
}

impl Sgd {
    pub fn new(lr: f64) -> Result<Self> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::config(format!(
                "learning rate must be > 0, got {lr}"
            )));
        }
        Ok(Self { lr })
    }
}

impl<T: Scalar> Optimizer<T> for Sgd {
    fn step(
        &mut self,
        mut params: Vec<(String, &mut Tensor<T>)>,
        grads: &[Tensor<T>],
    ) -> Result<()> {
        check_grads(&params, grads)?;
        let lr = cst::<T>(self.lr);
        for ((_, p), g) in params.iter_mut().zip(grads) {
            for (w, &gi) in p.data_mut().iter_mut().zip(g.data()) {
                *w -= lr * gi;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam with moment state keyed by parameter name.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    config: AdamConfig,
    t: u64,
    moments: HashMap<String, (Vec<T>, Vec<T>)>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig) -> Result<Self> {
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = config;
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::config(format!(
                "learning rate must be > 0, got {lr}"
            )));
        }
        if !(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0) {
            return Err(Error::config("adam betas must lie in (0, 1)"));
        }
        if eps.is_nan() || eps <= 0.0 {
            return Err(Error::config("adam epsilon must be > 0"));
        }
        Ok(Self {
            config,
            t: 0,
            moments: HashMap::new(),
        })
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }
}

impl<T: Scalar> Optimizer<T> for Adam<T> {
    fn step(
        &mut self,
        mut params: Vec<(String, &mut Tensor<T>)>,
        grads: &[Tensor<T>],
    ) -> Result<()> {
        check_grads(&params, grads)?;
        self.t += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        let (b1, b2) = (cst::<T>(beta1), cst::<T>(beta2));
        let (lr, eps, c1, c2) = (cst::<T>(lr), cst::<T>(eps), cst::<T>(c1), cst::<T>(c2));
        for ((name, p), g) in params.iter_mut().zip(grads) {
            let (m, v) = self
                .moments
                .entry(name.clone())
                .or_insert_with(|| (vec![T::zero(); g.len()], vec![T::zero(); g.len()]));
            for (i, (w, &gi)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                m[i] = b1 * m[i] + (T::one() - b1) * gi;
                v[i] = b2 * v[i] + (T::one() - b2) * gi * gi;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
