// `!(x > 0.0)` guards are deliberate: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod bessel;
pub mod error;
pub mod gamma;

pub use error::{Error, Result};
pub mod dd;
mod fixed;
pub mod quad;
pub mod spectrum;
pub mod fem;
pub mod optim;
pub mod adjoint;
pub mod fdcheck;
pub mod moment;
pub mod experiment;
pub mod io;
