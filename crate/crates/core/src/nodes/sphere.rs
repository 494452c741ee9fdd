//! Euclidean projection onto the unit sphere.
//!
//! `y(x) = argmin ½‖u − x‖²  s.t. ‖u‖ = 1`, with closed-form solution
//! `y = x/‖x‖`. The true Jacobian is `(I − yyᵀ)/‖x‖`; ignoring the
//! constraint leaves the identity.

use crate::linalg::Vector;

use super::{check_len, DeclarativeNode, NodeError, Result};

const MIN_NORM: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SpherePoint {
    pub y: Vector,
    /// `‖x‖` of the input that produced `y`.
    pub input_norm: f64,
}

pub fn sphere_forward(x: &Vector) -> Result<SpherePoint> {
    let norm = x.norm();
    if norm <= MIN_NORM {
        return Err(NodeError::Domain(format!(
            "projection of a vector with norm {norm:e} onto the sphere is not unique"
        )));
    }
    Ok(SpherePoint {
        y: x.scale(1.0 / norm),
        input_norm: norm,
    })
}

/// `(v − (yᵀv)y) / ‖x‖`
pub fn sphere_backward_exact(x: &Vector, v: &Vector) -> Result<Vector> {
    let p = sphere_forward(x)?;
    Ok(exact_from_point(&p, v))
}

fn exact_from_point(p: &SpherePoint, v: &Vector) -> Vector {
    v.axpy(-p.y.dot(v), &p.y).scale(1.0 / p.input_norm)
}

pub fn sphere_backward_approx(_x: &Vector, v: &Vector) -> Vector {
    v.clone()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SphereProjection {
    pub dim: usize,
}

impl SphereProjection {
    pub fn new(dim: usize) -> Self {
        SphereProjection { dim }
    }
}

impl DeclarativeNode for SphereProjection {
    type Solution = SpherePoint;

    fn input_len(&self) -> usize {
        self.dim
    }

    fn output_len(&self) -> usize {
        self.dim
    }

    fn forward(&self, x: &Vector) -> Result<SpherePoint> {
        check_len(self.dim, x.dim())?;
        sphere_forward(x)
    }

    fn output(&self, solution: &SpherePoint) -> Vector {
        solution.y.clone()
    }

    fn backward_exact(&self, _x: &Vector, solution: &SpherePoint, v: &Vector) -> Result<Vector> {
        check_len(self.dim, v.dim())?;
        Ok(exact_from_point(solution, v))
    }

    fn backward_approx(&self, x: &Vector, _solution: &SpherePoint, v: &Vector) -> Result<Vector> {
        check_len(self.dim, v.dim())?;
        Ok(sphere_backward_approx(x, v))
    }

    fn check_feasible(&self, _x: &Vector, solution: &SpherePoint) -> Result<()> {
        let err = (solution.y.norm() - 1.0).abs();
        if err > 1e-10 {
            return Err(NodeError::Infeasible(format!("‖y‖ deviates from 1 by {err:e}")));
        }
        Ok(())
    }
}
