//! Dense reverse-mode differentiation.
//!
//! A [`Tape`] records primitives over [`Matrix`] values; [`Tape::backward`]
//! sweeps the record once in reverse and accumulates adjoints into the
//! [`ParamStore`] that supplied the leaves.

pub mod checkpoint;
mod gradcheck;
mod matrix;
mod optim;
mod param;
mod tape;

pub use gradcheck::grad_check;
pub use matrix::{Matrix, SparseMatrix};
pub use optim::Adam;
pub use param::{ParamId, ParamStore, Parameter};
pub use tape::{Gradients, Tape, Var};

pub(crate) use tape::stable_sigmoid;

use rand::Rng;

/// Glorot/Xavier uniform initialization for a `fan_in × fan_out` weight.
pub fn glorot_uniform<R: Rng>(rng: &mut R, fan_in: usize, fan_out: usize) -> Matrix {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| rng.random_range(-limit..limit))
        .collect();
    Matrix::from_vec(fan_in, fan_out, data).expect("length matches shape")
}
