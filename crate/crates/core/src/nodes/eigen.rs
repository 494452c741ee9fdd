//! Symmetric eigendecomposition as a declarative node.
//!
//! The eigenvector `y` of a simple eigenvalue `λ` of `X` solves
//! `max uᵀXu s.t. uᵀu = 1`. Differentiating `Xy = λy`, `yᵀy = 1` gives
//! `dy = (λI − X)† dX y`, so for a symmetric perturbation of entry `(i, j)`
//!
//! ```text
//! D_{X_ij} y = −½ (X − λI)† (y_j e_i + y_i e_j)
//! ```
//!
//! Dropping the constraint replaces `(X − λI)†` by `X†`. Gradients are taken
//! with respect to the entries of `X` through its symmetric part, so they are
//! themselves symmetric matrices.

use crate::linalg::{self, Matrix, SymEigResult, Vector};

use super::{check_len, DeclarativeNode, NodeError, Result};

/// Relative eigenvalue gap below which an eigenvalue is treated as repeated.
pub const SIMPLE_GAP_TOL: f64 = 1e-8;
/// Relative null-space tolerance for pseudo-inverses.
pub const PINV_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub value: f64,
    /// Unit norm; first nonzero component positive.
    pub vector: Vector,
    /// Position in the ascending spectrum.
    pub index: usize,
}

fn fix_sign(mut v: Vector) -> Vector {
    let scale = v.norm_inf();
    if let Some(&first) = v.iter().find(|x| x.abs() > 1e-12 * scale) {
        if first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
    v
}

fn pairs_from_eig(eig: &SymEigResult) -> Vec<EigenPair> {
    (0..eig.eigenvalues.dim())
        .map(|k| EigenPair {
            value: eig.eigenvalues[k],
            vector: fix_sign(eig.eigenvector(k)),
            index: k,
        })
        .collect()
}

/// All eigenpairs of the symmetric part of `x`, ascending.
pub fn eigen_forward(x: &Matrix) -> Result<Vec<EigenPair>> {
    let eig = linalg::sym_eig(x)?;
    Ok(pairs_from_eig(&eig))
}

/// Errors unless eigenvalue `index` of the ascending `values` is simple.
pub fn check_simple(values: &[f64], index: usize) -> Result<()> {
    let scale = values.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut gap = f64::INFINITY;
    if index > 0 {
        gap = gap.min(values[index] - values[index - 1]);
    }
    if index + 1 < values.len() {
        gap = gap.min(values[index + 1] - values[index]);
    }
    if gap <= SIMPLE_GAP_TOL * scale || scale == 0.0 {
        return Err(NodeError::Degenerate { index, gap });
    }
    Ok(())
}

/// `−½(p yᵀ + y pᵀ)`
fn symmetric_outer(p: &Vector, y: &Vector) -> Matrix {
    let m = y.dim();
    Matrix::from_fn(m, m, |i, j| -0.5 * (p[i] * y[j] + y[i] * p[j]))
}

/// Exact gradient `G = −½(p yᵀ + y pᵀ)` with `p = (X − λI)† v`.
pub fn eigen_backward_exact(x: &Matrix, pair: &EigenPair, v: &Vector) -> Result<Matrix> {
    check_len(x.rows(), v.dim())?;
    let shifted = linalg::sym_eig(&x.shift_diagonal(-pair.value))?;
    let scale = shifted.max_abs_eigenvalue().max(pair.value.abs());
    let null_dim = shifted
        .eigenvalues
        .iter()
        .filter(|l| l.abs() <= SIMPLE_GAP_TOL * scale)
        .count();
    if null_dim > 1 || scale == 0.0 {
        let gap = shifted
            .eigenvalues
            .iter()
            .map(|l| l.abs())
            .filter(|&l| l > 0.0)
            .fold(f64::INFINITY, f64::min);
        return Err(NodeError::Degenerate {
            index: pair.index,
            gap: if gap.is_finite() { gap } else { 0.0 },
        });
    }
    let p = linalg::pinv_from_eig(&shifted, PINV_TOL).matvec(v);
    Ok(symmetric_outer(&p, &pair.vector))
}

/// Constraint-ignoring gradient `−½(p̂ yᵀ + y p̂ᵀ)` with `p̂ = X† v`.
pub fn eigen_backward_approx(x: &Matrix, pair: &EigenPair, v: &Vector) -> Result<Matrix> {
    let x_pinv = linalg::pinv_sym(x, PINV_TOL)?;
    eigen_backward_approx_with(&x_pinv, pair, v)
}

/// Same as [`eigen_backward_approx`] with a precomputed `X†`, which can be
/// shared across every eigenvector of the same matrix.
pub fn eigen_backward_approx_with(x_pinv: &Matrix, pair: &EigenPair, v: &Vector) -> Result<Matrix> {
    check_len(x_pinv.rows(), v.dim())?;
    Ok(symmetric_outer(&x_pinv.matvec(v), &pair.vector))
}

/// Which eigenvectors the node outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EigenTarget {
    /// Eigenvector of the largest eigenvalue.
    Largest,
    /// All eigenvectors, ascending by eigenvalue, concatenated.
    All,
}

#[derive(Debug, Clone)]
pub struct EigenSolution {
    pub x: Matrix,
    pub pairs: Vec<EigenPair>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EigenDecomposition {
    pub m: usize,
    pub target: EigenTarget,
}

impl EigenDecomposition {
    pub fn new(m: usize, target: EigenTarget) -> Self {
        EigenDecomposition { m, target }
    }

    fn targets<'a>(&self, pairs: &'a [EigenPair]) -> &'a [EigenPair] {
        match self.target {
            EigenTarget::Largest => &pairs[self.m - 1..],
            EigenTarget::All => pairs,
        }
    }

    fn incoming<'v>(&self, v: &'v Vector) -> Result<std::slice::Chunks<'v, f64>> {
        check_len(self.output_len(), v.dim())?;
        Ok(v.chunks(self.m))
    }
}

impl DeclarativeNode for EigenDecomposition {
    type Solution = EigenSolution;

    fn input_len(&self) -> usize {
        self.m * self.m
    }

    fn output_len(&self) -> usize {
        match self.target {
            EigenTarget::Largest => self.m,
            EigenTarget::All => self.m * self.m,
        }
    }

    fn forward(&self, x: &Vector) -> Result<EigenSolution> {
        check_len(self.input_len(), x.dim())?;
        let x = Matrix::new(self.m, self.m, x.to_vec())?.symmetric_part();
        let pairs = eigen_forward(&x)?;
        let values: Vec<f64> = pairs.iter().map(|p| p.value).collect();
        for pair in self.targets(&pairs) {
            check_simple(&values, pair.index)?;
        }
        Ok(EigenSolution { x, pairs })
    }

    fn output(&self, solution: &EigenSolution) -> Vector {
        self.targets(&solution.pairs)
            .iter()
            .flat_map(|p| p.vector.iter().copied())
            .collect::<Vec<_>>()
            .into()
    }

    fn backward_exact(&self, _x: &Vector, solution: &EigenSolution, v: &Vector) -> Result<Vector> {
        let mut g = Matrix::zeros(self.m, self.m);
        for (pair, vk) in self.targets(&solution.pairs).iter().zip(self.incoming(v)?) {
            g = g.add(&eigen_backward_exact(&solution.x, pair, &Vector::from(vk))?);
        }
        Ok(g.into_vec().into())
    }

    fn backward_approx(&self, _x: &Vector, solution: &EigenSolution, v: &Vector) -> Result<Vector> {
        let x_pinv = linalg::pinv_sym(&solution.x, PINV_TOL)?;
        let mut g = Matrix::zeros(self.m, self.m);
        for (pair, vk) in self.targets(&solution.pairs).iter().zip(self.incoming(v)?) {
            g = g.add(&eigen_backward_approx_with(&x_pinv, pair, &Vector::from(vk))?);
        }
        Ok(g.into_vec().into())
    }

    fn check_feasible(&self, _x: &Vector, solution: &EigenSolution) -> Result<()> {
        let scale = solution.x.max_abs().max(f64::MIN_POSITIVE);
        for pair in self.targets(&solution.pairs) {
            let norm_err = (pair.vector.norm() - 1.0).abs();
            let residual = solution
                .x
                .matvec(&pair.vector)
                .axpy(-pair.value, &pair.vector)
                .norm_inf();
            if norm_err > 1e-10 || residual > 1e-8 * scale {
                return Err(NodeError::Infeasible(format!(
                    "eigenpair {}: norm error {norm_err:e}, residual {residual:e}",
                    pair.index
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Rng;

    fn top(x: &Matrix) -> EigenPair {
        eigen_forward(x).unwrap().pop().unwrap()
    }

    #[test]
    fn forward_diagonal() {
        let pairs = eigen_forward(&Matrix::diag(&[3.0, 1.0])).unwrap();
        assert_eq!(pairs[0].value, 1.0);
        assert_eq!(pairs[0].vector.as_slice(), &[0.0, 1.0]);
        assert_eq!(pairs[1].value, 3.0);
        assert_eq!(pairs[1].vector.as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn forward_residual_and_sign() {
        let mut rng = Rng::new(1);
        for _ in 0..20 {
            let x = rng.gaussian_matrix(7, 7).symmetric_part();
            for pair in eigen_forward(&x).unwrap() {
                let r = x.matvec(&pair.vector).axpy(-pair.value, &pair.vector).norm_inf();
                assert!(r <= 1e-8);
                let first = pair.vector.iter().find(|c| c.abs() > 1e-12).unwrap();
                assert!(*first > 0.0);
            }
        }
    }

    #[test]
    fn degenerate_rejected() {
        let node = EigenDecomposition::new(3, EigenTarget::Largest);
        let x = Vector::from(Matrix::diag(&[1.0, 2.0, 2.0]).into_vec());
        assert!(matches!(node.forward(&x), Err(NodeError::Degenerate { index: 2, .. })));
        let pair = EigenPair {
            value: 2.0,
            vector: Vector::from(vec![0.0, 0.0, 1.0]),
            index: 2,
        };
        assert!(matches!(
            eigen_backward_exact(&Matrix::diag(&[1.0, 2.0, 2.0]), &pair, &Vector::basis(3, 0)),
            Err(NodeError::Degenerate { .. })
        ));
        // the smallest eigenvalue is simple, so the "all" node fails but a gradient for it exists
        let all = EigenDecomposition::new(3, EigenTarget::All);
        assert!(all.forward(&x).is_err());
    }

    #[test]
    fn exact_diag_example() {
        let x = Matrix::diag(&[3.0, 1.0]);
        let g = eigen_backward_exact(&x, &top(&x), &Vector::basis(2, 1)).unwrap();
        let expected = Matrix::from_rows(&[&[0.0, 0.25], &[0.25, 0.0]]);
        assert!(g.sub(&expected).max_abs() < 1e-15);
        let g = eigen_backward_approx(&x, &top(&x), &Vector::basis(2, 1)).unwrap();
        let expected = Matrix::from_rows(&[&[0.0, -0.5], &[-0.5, 0.0]]);
        assert!(g.sub(&expected).max_abs() < 1e-15);
    }

    #[test]
    fn exact_vanishes_for_v_along_y() {
        let x = Rng::new(2).gaussian_matrix(5, 5).symmetric_part();
        let pair = top(&x);
        let g = eigen_backward_exact(&x, &pair, &pair.vector).unwrap();
        assert!(g.max_abs() < 1e-12);
    }

    #[test]
    fn exact_directions_orthogonal_to_y() {
        // yᵀ D_{X_ij} y = 0 for every entry.
        let x = Rng::new(3).gaussian_matrix(5, 5).symmetric_part();
        for pair in eigen_forward(&x).unwrap() {
            let shifted_pinv = linalg::pinv_sym(&x.shift_diagonal(-pair.value), PINV_TOL).unwrap();
            for i in 0..5 {
                for j in 0..5 {
                    let mut e = Vector::zeros(5);
                    e[i] += pair.vector[j];
                    e[j] += pair.vector[i];
                    let d = shifted_pinv.matvec(&e).scale(-0.5);
                    assert!(pair.vector.dot(&d).abs() < 1e-10);
                }
            }
        }
    }

    fn fd_check(x: &Matrix, index: usize, v: &Vector) -> f64 {
        let m = x.rows();
        let base = eigen_forward(x).unwrap()[index].clone();
        let g = eigen_backward_exact(x, &base, v).unwrap();
        let loss = |xp: &Matrix| {
            let mut y = eigen_forward(xp).unwrap()[index].vector.clone();
            if y.dot(&base.vector) < 0.0 {
                y = y.scale(-1.0);
            }
            v.dot(&y)
        };
        let mut max_err: f64 = 0.0;
        for i in 0..m {
            for j in 0..m {
                let h = 1e-5 * x[(i, j)].abs().max(1.0);
                let mut plus = x.clone();
                plus[(i, j)] += h;
                let mut minus = x.clone();
                minus[(i, j)] -= h;
                let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
                max_err = max_err.max((fd - g[(i, j)]).abs());
            }
        }
        max_err / g.max_abs()
    }

    #[test]
    fn exact_matches_finite_differences() {
        let mut rng = Rng::new(4);
        for trial in 0..10 {
            let x = rng.gaussian_matrix(5, 5).symmetric_part();
            let v = rng.gaussian_vector(5);
            let index = trial % 5;
            let err = fd_check(&x, index, &v);
            assert!(err <= 1e-4, "trial {trial}: rel err {err:e}");
        }
    }

    #[test]
    fn negative_definite_top_pair_descends() {
        let mut rng = Rng::new(5);
        let node = EigenDecomposition::new(6, EigenTarget::Largest);
        for _ in 0..50 {
            let l = rng.gaussian_matrix(6, 6);
            let x = l.matmul(&l.transpose()).shift_diagonal(0.1).scale(-1.0);
            let xv = Vector::from(x.into_vec());
            let v = rng.gaussian_vector(6);
            let r = crate::nodes::gradient_report(&node, &xv, &v).unwrap();
            assert!(r.cos_sim.unwrap() > 0.0);
        }
    }

    #[test]
    fn all_target_sums_pairs() {
        let mut rng = Rng::new(6);
        let x = rng.gaussian_matrix(4, 4).symmetric_part();
        let node = EigenDecomposition::new(4, EigenTarget::All);
        let xv = Vector::from(x.as_slice());
        let sol = node.forward(&xv).unwrap();
        node.check_feasible(&xv, &sol).unwrap();
        let v = rng.gaussian_vector(16);
        let g = node.backward_exact(&xv, &sol, &v).unwrap();
        let mut manual = Matrix::zeros(4, 4);
        for (k, pair) in sol.pairs.iter().enumerate() {
            let vk = Vector::from(&v[4 * k..4 * k + 4]);
            manual = manual.add(&eigen_backward_exact(&x, pair, &vk).unwrap());
        }
        assert!(manual.sub(&Matrix::new(4, 4, g.into_vec()).unwrap()).max_abs() < 1e-14);
    }
}
