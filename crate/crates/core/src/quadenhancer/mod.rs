//! The quadratic enhancer: band-sparse Λ, the enhanced layer and the
//! reference forms it is verified against.

pub mod band;
pub mod layer;
pub mod reference;

pub use band::{lambda_name, BandLambda, ShiftSet};
pub use layer::{QeLayer, QeVars};
