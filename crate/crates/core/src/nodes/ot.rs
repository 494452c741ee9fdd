//! Entropy-regularized optimal transport.
//!
//! ```text
//! minimize    ⟨P, M⟩ + (1/γ) KL(P ‖ rcᵀ)
//! subject to  P1 = r,  Pᵀ1 = c
//! ```
//!
//! The forward pass is Sinkhorn scaling in the log domain. The constraints are
//! linear, so the Hessian is simply `(1/γ) diag(1/vec P)` with or without the
//! constraints, the mixed second derivative with respect to `M` is the
//! identity, and the exact backward pass reduces to a projection with a small
//! `(m + n − 1)`-dimensional dense solve. The approximate backward pass is the
//! elementwise product `−γ P ∘ v`.

use crate::linalg::{Lu, Matrix, Vector};

use super::{check_len, DeclarativeNode, NodeError, Result};

pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_ITER: usize = 10_000;

/// Feasibility tolerance on the marginals of a returned plan.
const MARGINAL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    pub p: Matrix,
    pub r: Vector,
    pub c: Vector,
    pub gamma: f64,
    pub iterations: usize,
    /// Largest absolute marginal residual at termination.
    pub violation: f64,
}

impl TransportPlan {
    pub fn marginal_violation(&self) -> f64 {
        marginal_violation(&self.p, &self.r, &self.c)
    }
}

fn marginal_violation(p: &Matrix, r: &[f64], c: &[f64]) -> f64 {
    let (m, n) = p.shape();
    let mut worst: f64 = 0.0;
    for (i, &ri) in r.iter().enumerate().take(m) {
        worst = worst.max((p.row(i).iter().sum::<f64>() - ri).abs());
    }
    for j in 0..n {
        let col: f64 = (0..m).map(|i| p[(i, j)]).sum();
        worst = worst.max((col - c[j]).abs());
    }
    worst
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|x| (x - max).exp()).sum::<f64>().ln()
}

pub fn uniform_marginal(n: usize) -> Vector {
    Vector::from(vec![1.0 / n as f64; n])
}

/// Sinkhorn iterations in the log domain.
///
/// Returns `P = diag(u) K diag(w)` with `K = rcᵀ ∘ exp(−γM)`, stopping once
/// the largest marginal residual is at most `tol`.
pub fn sinkhorn_forward(
    cost: &Matrix,
    r: &Vector,
    c: &Vector,
    gamma: f64,
    tol: f64,
    max_iter: usize,
) -> Result<TransportPlan> {
    let (m, n) = cost.shape();
    check_len(m, r.dim())?;
    check_len(n, c.dim())?;
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(NodeError::Domain(format!("γ must be positive, got {gamma}")));
    }
    if r.iter().chain(c.iter()).any(|&x| x.is_nan() || x <= 0.0) {
        return Err(NodeError::Domain("marginals must be strictly positive".into()));
    }
    let (sr, sc) = (r.iter().sum::<f64>(), c.iter().sum::<f64>());
    if (sr - sc).abs() > 1e-12 * sr.max(sc) {
        return Err(NodeError::Domain(format!("marginal masses differ: {sr} vs {sc}")));
    }
    if !cost.is_finite() {
        return Err(NodeError::Domain("cost matrix has non-finite entries".into()));
    }

    let log_r: Vec<f64> = r.iter().map(|x| x.ln()).collect();
    let log_c: Vec<f64> = c.iter().map(|x| x.ln()).collect();
    let log_k = Matrix::from_fn(m, n, |i, j| log_r[i] + log_c[j] - gamma * cost[(i, j)]);
    let mut f = vec![0.0; m];
    let mut g = vec![0.0; n];
    let mut p = Matrix::zeros(m, n);
    let mut violation = f64::INFINITY;

    for it in 1..=max_iter {
        for i in 0..m {
            let row = log_k.row(i);
            f[i] = log_r[i] - log_sum_exp(row.iter().zip(&g).map(|(k, gj)| k + gj));
        }
        for j in 0..n {
            g[j] = log_c[j] - log_sum_exp((0..m).map(|i| log_k[(i, j)] + f[i]));
        }
        for i in 0..m {
            for j in 0..n {
                p[(i, j)] = (log_k[(i, j)] + f[i] + g[j]).exp();
            }
        }
        violation = marginal_violation(&p, r, c);
        if violation <= tol {
            if p.as_slice().iter().any(|&x| x.is_nan() || x <= 0.0) {
                return Err(NodeError::Infeasible("transport plan has a zero entry (γ too large)".into()));
            }
            return Ok(TransportPlan {
                p,
                r: r.clone(),
                c: c.clone(),
                gamma,
                iterations: it,
                violation,
            });
        }
    }
    Err(NodeError::NoConvergence {
        iterations: max_iter,
        violation,
    })
}

/// Marginal constraints on row-major `vec(P)`: `m` row-sum rows followed by
/// the first `n − 1` column-sum rows. The last column constraint is implied
/// by the others and dropped so the matrix has full row rank.
pub fn ot_constraint_matrix(m: usize, n: usize) -> Matrix {
    let mut a = Matrix::zeros(m + n - 1, m * n);
    for i in 0..m {
        for j in 0..n {
            a[(i, i * n + j)] = 1.0;
            if j + 1 < n {
                a[(m + j, i * n + j)] = 1.0;
            }
        }
    }
    a
}

/// `γ vec(P)`, the diagonal of `H⁻¹`.
fn inverse_hessian_diag(plan: &TransportPlan) -> Vec<f64> {
    plan.p.as_slice().iter().map(|x| plan.gamma * x).collect()
}

/// `A D Aᵀ` with `D = diag(d)`.
fn weighted_gram(a: &Matrix, d: &[f64]) -> Matrix {
    let scaled = Matrix::from_fn(a.rows(), a.cols(), |i, k| a[(i, k)] * d[k]);
    scaled.matmul(&a.transpose())
}

/// Exact gradient of the loss with respect to the cost matrix.
///
/// With `D = γ diag(vec P)`: `g = D Aᵀ (A D Aᵀ)⁻¹ A D v − D v`.
pub fn ot_backward_exact(plan: &TransportPlan, v: &Matrix) -> Result<Matrix> {
    let (m, n) = plan.p.shape();
    if v.shape() != (m, n) {
        return Err(NodeError::Shape {
            expected: m * n,
            got: v.rows() * v.cols(),
        });
    }
    let d = inverse_hessian_diag(plan);
    let a = ot_constraint_matrix(m, n);
    let dv: Vec<f64> = d.iter().zip(v.as_slice()).map(|(di, vi)| di * vi).collect();
    let z = Lu::factor(&weighted_gram(&a, &d))?.solve(&a.matvec(&dv))?;
    let at_z = a.t_matvec(&z);
    let g: Vec<f64> = d
        .iter()
        .zip(at_z.iter())
        .zip(&dv)
        .map(|((di, az), dvi)| di * az - dvi)
        .collect();
    Ok(Matrix::new(m, n, g)?)
}

/// Constraint-ignoring gradient, `−γ P ∘ v`.
pub fn ot_backward_approx(plan: &TransportPlan, v: &Matrix) -> Result<Matrix> {
    if v.shape() != plan.p.shape() {
        return Err(NodeError::Shape {
            expected: plan.p.rows() * plan.p.cols(),
            got: v.rows() * v.cols(),
        });
    }
    let (m, n) = v.shape();
    Ok(Matrix::from_fn(m, n, |i, j| -plan.gamma * plan.p[(i, j)] * v[(i, j)]))
}

/// Full `mn × mn` Jacobian `d vec(P) / d vec(M)`.
pub fn ot_jacobian(plan: &TransportPlan) -> Result<Matrix> {
    let (m, n) = plan.p.shape();
    let d = inverse_hessian_diag(plan);
    let a = ot_constraint_matrix(m, n);
    let ad = Matrix::from_fn(a.rows(), a.cols(), |i, k| a[(i, k)] * d[k]);
    let solved = Lu::factor(&weighted_gram(&a, &d))?.solve_matrix(&ad)?;
    let mut jac = ad.transpose().matmul(&solved);
    for (k, dk) in d.iter().enumerate() {
        jac[(k, k)] -= dk;
    }
    Ok(jac)
}

/// Optimal transport node with fixed marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropicOt {
    pub m: usize,
    pub n: usize,
    pub r: Vector,
    pub c: Vector,
    pub gamma: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl EntropicOt {
    /// Uniform marginals with default solver settings.
    pub fn uniform(m: usize, n: usize, gamma: f64) -> Self {
        EntropicOt {
            m,
            n,
            r: uniform_marginal(m),
            c: uniform_marginal(n),
            gamma,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    fn as_matrix(&self, flat: &Vector) -> Result<Matrix> {
        check_len(self.m * self.n, flat.dim())?;
        Ok(Matrix::new(self.m, self.n, flat.to_vec())?)
    }
}

impl DeclarativeNode for EntropicOt {
    type Solution = TransportPlan;

    fn input_len(&self) -> usize {
        self.m * self.n
    }

    fn output_len(&self) -> usize {
        self.m * self.n
    }

    fn forward(&self, x: &Vector) -> Result<TransportPlan> {
        let cost = self.as_matrix(x)?;
        sinkhorn_forward(&cost, &self.r, &self.c, self.gamma, self.tol, self.max_iter)
    }

    fn output(&self, solution: &TransportPlan) -> Vector {
        Vector::from(solution.p.as_slice())
    }

    fn backward_exact(&self, _x: &Vector, solution: &TransportPlan, v: &Vector) -> Result<Vector> {
        let v = self.as_matrix(v)?;
        Ok(ot_backward_exact(solution, &v)?.into_vec().into())
    }

    fn backward_approx(&self, _x: &Vector, solution: &TransportPlan, v: &Vector) -> Result<Vector> {
        let v = self.as_matrix(v)?;
        Ok(ot_backward_approx(solution, &v)?.into_vec().into())
    }

    fn check_feasible(&self, _x: &Vector, solution: &TransportPlan) -> Result<()> {
        let violation = solution.marginal_violation();
        if violation > MARGINAL_TOL {
            return Err(NodeError::Infeasible(format!("marginal violation {violation:e}")));
        }
        if solution.p.as_slice().iter().any(|&x| x.is_nan() || x <= 0.0) {
            return Err(NodeError::Infeasible("non-positive plan entry".into()));
        }
        Ok(())
    }
}
