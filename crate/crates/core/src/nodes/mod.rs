//! Declarative nodes: layers whose output is the solution of an equality
//! constrained optimization problem.
//!
//! Every node provides a forward solver, the exact input gradient obtained by
//! implicit differentiation of the optimality conditions, and the cheaper
//! approximation obtained by pretending the problem is unconstrained. Inputs,
//! outputs and gradients are passed as flat row-major vectors so that a single
//! training loop can drive any node.

use thiserror::Error;

use crate::linalg::{cosine_similarity, LinalgError, Vector};

pub mod eigen;
pub mod gradcheck;
pub mod implicit;
pub mod ot;
pub mod sphere;

pub use eigen::{EigenDecomposition, EigenPair, EigenTarget};
pub use ot::{EntropicOt, TransportPlan};
pub use sphere::{SpherePoint, SphereProjection};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NodeError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("Sinkhorn did not converge in {iterations} iterations (marginal violation {violation:e})")]
    NoConvergence { iterations: usize, violation: f64 },
    #[error("eigenvalue {index} is not simple (gap {gap:e}); its eigenvector has no derivative")]
    Degenerate { index: usize, gap: f64 },
    #[error("infeasible solution: {0}")]
    Infeasible(String),
    #[error("shape mismatch: expected {expected} entries, got {got}")]
    Shape { expected: usize, got: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type Result<T> = std::result::Result<T, NodeError>;

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(NodeError::Shape { expected, got });
    }
    Ok(())
}

/// A differentiable optimization layer `x ↦ y(x) ∈ argmin f(x, u) s.t. h(u) = 0`.
pub trait DeclarativeNode {
    /// Whatever the backward passes need from the forward solve.
    type Solution;

    fn input_len(&self) -> usize;
    fn output_len(&self) -> usize;

    fn forward(&self, x: &Vector) -> Result<Self::Solution>;

    /// Flattened `y`.
    fn output(&self, solution: &Self::Solution) -> Vector;

    /// `vᵀ Dy(x)` with the true Jacobian.
    fn backward_exact(&self, x: &Vector, solution: &Self::Solution, v: &Vector) -> Result<Vector>;

    /// `vᵀ D̂y(x)` with the constraint-ignoring Jacobian.
    fn backward_approx(&self, x: &Vector, solution: &Self::Solution, v: &Vector) -> Result<Vector>;

    /// Errors if the solution violates the node's constraints.
    fn check_feasible(&self, x: &Vector, solution: &Self::Solution) -> Result<()>;
}

/// Exact and approximate input gradients side by side.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientReport {
    pub g_exact: Vector,
    pub g_approx: Vector,
    /// `None` when either gradient has norm below `1e-12`.
    pub cos_sim: Option<f64>,
    pub descent: bool,
}

impl GradientReport {
    pub fn from_gradients(g_exact: Vector, g_approx: Vector) -> Self {
        let cos_sim = cosine_similarity(&g_exact, &g_approx);
        GradientReport {
            descent: cos_sim.is_some_and(|c| c > 0.0),
            g_exact,
            g_approx,
            cos_sim,
        }
    }
}

/// Runs both backward passes at `x` for incoming gradient `v`.
pub fn gradient_report<N: DeclarativeNode>(node: &N, x: &Vector, v: &Vector) -> Result<GradientReport> {
    let solution = node.forward(x)?;
    gradient_report_at(node, x, &solution, v)
}

pub fn gradient_report_at<N: DeclarativeNode>(
    node: &N,
    x: &Vector,
    solution: &N::Solution,
    v: &Vector,
) -> Result<GradientReport> {
    let exact = node.backward_exact(x, solution, v)?;
    let approx = node.backward_approx(x, solution, v)?;
    Ok(GradientReport::from_gradients(exact, approx))
}
