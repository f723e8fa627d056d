//! Lightweight quadratic enhancement of linear layers.
//!
//! A linear layer `ỹ = W x` is augmented to `z = (Λỹ) ⊙ ỹ + ỹ + b`, where Λ
//! is a band-sparse `d x d` matrix with one trainable `d`-vector per
//! diagonal shift. The crate provides the tensor kernels, a reverse-mode
//! tape, the enhanced layer with its reference forms, MLP compositions and
//! baselines, synthetic and file datasets, and exact cost accounting.
//!
//! Everything numeric is generic over [`Scalar`] (`f32`, `f64`); the aliases
//! below fix the precision.

pub mod autograd;
pub mod cost;
pub mod data;
pub mod error;
pub mod models;
pub mod quadenhancer;
pub mod rng;
pub mod scalar;
pub mod tensor;

pub use autograd::{gradcheck, GradCheckReport, Gradients, Op, OpTag, Tape, Var};
pub use error::{Error, Result};
pub use quadenhancer::{BandLambda, QeLayer, ShiftSet};
pub use rng::CounterRng;
pub use scalar::{DType, Scalar};
pub use tensor::Tensor;

pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;
pub type QeLayer32 = QeLayer<f32>;
pub type QeLayer64 = QeLayer<f64>;
pub type BandLambda32 = BandLambda<f32>;
pub type BandLambda64 = BandLambda<f64>;
pub type Mlp32 = models::Mlp<f32>;
pub type Mlp64 = models::Mlp<f64>;
pub type Dataset32 = data::Dataset<f32>;
pub type Dataset64 = data::Dataset<f64>;
