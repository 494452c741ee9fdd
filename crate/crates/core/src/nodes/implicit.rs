//! Implicit-function Jacobian of an equality constrained argmin.

use crate::linalg::{self, Lu, Matrix};

use super::Result;

/// `Dy(x) = H⁻¹Aᵀ(AH⁻¹Aᵀ)⁻¹(AH⁻¹B − C) − H⁻¹B`.
///
/// `h` is `m × m`, `a` is `p × m` with full row rank, `b` is `m × n` and `c`
/// is `p × n`. The result is the `m × n` Jacobian of the solution.
pub fn equality_constrained_jacobian(h: &Matrix, a: &Matrix, b: &Matrix, c: &Matrix) -> Result<Matrix> {
    let h_lu = Lu::factor(h)?;
    let hinv_b = h_lu.solve_matrix(b)?;
    let hinv_at = h_lu.solve_matrix(&a.transpose())?;
    let schur = a.matmul(&hinv_at);
    let rhs = a.matmul(&hinv_b).sub(c);
    let middle = linalg::Lu::factor(&schur)?.solve_matrix(&rhs)?;
    Ok(hinv_at.matmul(&middle).sub(&hinv_b))
}

/// The same Jacobian with the constraint terms dropped, `−Ĥ⁻¹B`.
pub fn unconstrained_jacobian(h_hat: &Matrix, b: &Matrix) -> Result<Matrix> {
    Ok(Lu::factor(h_hat)?.solve_matrix(b)?.scale(-1.0))
}
