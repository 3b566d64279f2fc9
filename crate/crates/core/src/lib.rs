//! Curvature-guided graph learning toolkit.
//!
//! The crate bundles exact Ollivier-Ricci curvature (network-simplex
//! transport), a small reverse-mode autodiff engine over dense matrices, a
//! curvature-weighted message-passing encoder trained under a variational
//! information-bottleneck loss, and a discrete Ricci-flow structure
//! refinement stage driven by concrete (relaxed Bernoulli) edge sampling.
//!
//! Module map:
//!
//! - [`graph`]: undirected graphs, features, labels, mass matrices, SBM
//!   generation and edge-noise injection.
//! - [`autodiff`]: tensors, the recording tape, parameters, Adam and the
//!   binary checkpoint format.
//! - [`ollivier`]: exact curvature via 1-Wasserstein transport.
//! - [`ib_curvature`]: the differentiable curvature surrogate and the
//!   IBCurv objective.
//! - [`gnn`]: the curvature-aware encoder and the plain GCN control.
//! - [`vib`]: reparameterization plus prediction/compression loss terms.
//! - [`refine`]: Ricci-flow weights, concrete sampling, hardening and the
//!   structure likelihood.
//! - [`trainer`]: the alternating two-phase training loop, evaluation and
//!   replicate experiments.
//! - [`io`]: dataset files, splits, CSV/JSON artifacts and content hashes.

pub mod audit;
pub mod autodiff;
pub mod error;
pub mod gnn;
pub mod graph;
pub mod ib_curvature;
pub mod io;
pub mod ollivier;
pub mod refine;
pub mod rng;
pub mod trainer;
pub mod vib;

pub use error::{Error, Result};
