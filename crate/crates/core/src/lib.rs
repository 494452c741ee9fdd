//! Declarative optimization nodes with exact and constraint-ignoring gradients.
//!
//! The crate is organized bottom-up:
//!
//! * [`linalg`]: dense matrices, Jacobi eigensolver, LU, pseudo-inverse and a
//!   seedable Gaussian sampler.
//! * [`theory`]: closed-form and Monte-Carlo evaluation of the inner product
//!   `gᵀĝ` between the true and the approximate input gradient.
//! * [`nodes`]: sphere projection, entropic optimal transport and symmetric
//!   eigendecomposition, each with forward, exact and approximate backward.
//! * [`train`]: MLP + AdamW training pipeline that drives a node with either
//!   gradient and records how well the two agree.
//! * [`cli`]: the `declgrad` command line (verification, gradient checks,
//!   training runs, CSV/SVG output).

pub mod linalg;
pub mod nodes;
pub mod theory;
pub mod train;
pub mod cli;
