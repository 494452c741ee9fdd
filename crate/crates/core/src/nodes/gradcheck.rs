//! Central finite-difference checks of exact node gradients.

use crate::linalg::{self, Rng, Vector};

use super::{ot, DeclarativeNode, EigenDecomposition, EigenTarget, EntropicOt, NodeError, Result, SphereProjection};

pub const SPHERE_TOL: f64 = 1e-5;
pub const OT_TOL: f64 = 1e-5;
pub const EIGEN_TOL: f64 = 1e-4;
/// Bound on `max |A·Dy|` for the transport Jacobian.
pub const OT_TANGENCY_TOL: f64 = 1e-8;
/// Sinkhorn tolerance used when differencing the transport plan.
pub const OT_FD_SINKHORN_TOL: f64 = 1e-10;

/// Finite-difference comparison for one `(x, v)` pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdComparison {
    pub max_abs_err: f64,
    /// `max |g|` of the analytic gradient.
    pub scale: f64,
}

impl FdComparison {
    /// `max |fd − g| / max |g|`; the absolute error when `g = 0`.
    pub fn rel_err(&self) -> f64 {
        if self.scale > 0.0 {
            self.max_abs_err / self.scale
        } else {
            self.max_abs_err
        }
    }
}

/// Compares `backward_exact` with central differences of `vᵀy(x)`.
///
/// Outputs are split into chunks of `sign_chunk` entries and each perturbed
/// chunk is flipped to agree with the unperturbed one, which removes the sign
/// ambiguity of eigenvectors. Pass the output length to disable it in effect.
pub fn finite_difference<N: DeclarativeNode>(node: &N, x: &Vector, v: &Vector, sign_chunk: usize) -> Result<FdComparison> {
    let base_sol = node.forward(x)?;
    let base = node.output(&base_sol);
    let g = node.backward_exact(x, &base_sol, v)?;
    let objective = |xp: &Vector| -> Result<f64> {
        let y = node.output(&node.forward(xp)?);
        Ok(y.chunks(sign_chunk)
            .zip(base.chunks(sign_chunk))
            .zip(v.chunks(sign_chunk))
            .map(|((yc, bc), vc)| {
                let s = if linalg::dot(yc, bc) < 0.0 { -1.0 } else { 1.0 };
                s * linalg::dot(yc, vc)
            })
            .sum())
    };
    let mut max_abs_err: f64 = 0.0;
    for k in 0..x.dim() {
        let h = 1e-5 * x[k].abs().max(1.0);
        let mut plus = x.clone();
        plus[k] += h;
        let mut minus = x.clone();
        minus[k] -= h;
        let fd = (objective(&plus)? - objective(&minus)?) / (2.0 * h);
        max_abs_err = max_abs_err.max((fd - g[k]).abs());
    }
    Ok(FdComparison {
        max_abs_err,
        scale: g.norm_inf(),
    })
}

/// Result of checking one node over several random instances.
#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub node: String,
    pub instances: usize,
    pub max_rel_err: f64,
    pub tol: f64,
    /// Largest `|A·Dy|` entry, for nodes with linear constraints.
    pub tangency: Option<f64>,
    pub passed: bool,
}

/// Instance-level failure, identified by the substream that generated it.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceError {
    pub node: String,
    pub seed: u64,
    pub instance: usize,
    pub error: NodeError,
}

impl std::fmt::Display for InstanceError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} instance {} (seed {}): {}", self.node, self.instance, self.seed, self.error)
    }
}

fn run_instances(
    name: &str,
    seed: u64,
    instances: usize,
    tol: f64,
    mut one: impl FnMut(&mut Rng) -> Result<(FdComparison, Option<f64>)>,
) -> std::result::Result<GradcheckReport, InstanceError> {
    let root = Rng::new(seed);
    let (mut max_rel_err, mut tangency): (f64, Option<f64>) = (0.0, None);
    for instance in 0..instances {
        let mut rng = root.substream(instance as u64);
        let (cmp, tan) = one(&mut rng).map_err(|error| InstanceError {
            node: name.to_string(),
            seed,
            instance,
            error,
        })?;
        max_rel_err = max_rel_err.max(cmp.rel_err());
        if let Some(t) = tan {
            tangency = Some(tangency.unwrap_or(0.0).max(t));
        }
    }
    let passed = max_rel_err <= tol && tangency.is_none_or(|t| t <= OT_TANGENCY_TOL);
    Ok(GradcheckReport {
        node: name.to_string(),
        instances,
        max_rel_err,
        tol,
        tangency,
        passed,
    })
}

/// Sphere projection in dimension `m`.
pub fn check_sphere(m: usize, seed: u64, instances: usize) -> std::result::Result<GradcheckReport, InstanceError> {
    let node = SphereProjection::new(m);
    run_instances(&format!("sphere m={m}"), seed, instances, SPHERE_TOL, |rng| {
        let x = rng.gaussian_vector(m);
        let v = rng.gaussian_vector(m);
        Ok((finite_difference(&node, &x, &v, m)?, None))
    })
}

/// Entropic transport on an `m × n` Gaussian cost, plus the tangency `A·Dy = 0`.
pub fn check_ot(
    m: usize,
    n: usize,
    gamma: f64,
    seed: u64,
    instances: usize,
) -> std::result::Result<GradcheckReport, InstanceError> {
    let node = EntropicOt::uniform(m, n, gamma).with_tol(OT_FD_SINKHORN_TOL);
    let a = ot::ot_constraint_matrix(m, n);
    run_instances(&format!("ot {m}x{n}"), seed, instances, OT_TOL, |rng| {
        let x = rng.gaussian_vector(m * n);
        let v = rng.gaussian_vector(m * n);
        let cmp = finite_difference(&node, &x, &v, m * n)?;
        let jac = ot::ot_jacobian(&node.forward(&x)?)?;
        Ok((cmp, Some(a.matmul(&jac).max_abs())))
    })
}

/// All eigenvectors of a symmetric Gaussian `m × m` matrix. With
/// `force_degenerate` the matrix has a repeated eigenvalue and the check must
/// fail with a degeneracy error.
pub fn check_eigen(
    m: usize,
    seed: u64,
    instances: usize,
    force_degenerate: bool,
) -> std::result::Result<GradcheckReport, InstanceError> {
    let node = EigenDecomposition::new(m, EigenTarget::All);
    run_instances(&format!("eigen m={m}"), seed, instances, EIGEN_TOL, |rng| {
        let x = if force_degenerate {
            let mut spectrum: Vec<f64> = (0..m).map(|k| k as f64).collect();
            spectrum[0] = spectrum[m.min(2) - 1];
            linalg::random_with_spectrum(rng, &spectrum)
        } else {
            rng.gaussian_matrix(m, m).symmetric_part()
        };
        let v = rng.gaussian_vector(m * m);
        Ok((finite_difference(&node, &Vector::from(x.into_vec()), &v, m)?, None))
    })
}
