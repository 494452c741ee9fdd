//! Descent-direction analysis for constraint-ignoring gradients.
//!
//! Given the true input gradient `g` of a declarative node and the
//! approximation `ĝ` obtained by dropping the constraint terms, `-ĝ` is a
//! descent direction exactly when `gᵀĝ >= 0`. This module evaluates that gap,
//! its worst case over incoming gradients, and its expectation when
//! `w = H⁻¹v` is isotropic Gaussian, both in closed form and by Monte Carlo.

use rayon::prelude::*;
use thiserror::Error;

use crate::linalg::{self, LinalgError, Lu, Matrix, Rng, SymEigResult, Vector};

/// `|aᵀb| <= ORTHOGONALITY_TOL ‖a‖‖b‖` is treated as orthogonal.
pub const ORTHOGONALITY_TOL: f64 = 1e-12;

/// Samples drawn per Monte-Carlo block; block `k` uses substream `k`.
const MC_BLOCK: usize = 1 << 14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TheoryError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type Result<T> = std::result::Result<T, TheoryError>;

fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(TheoryError::Domain(msg.into()))
}

/// One evaluation of `gᵀĝ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescentGapSample {
    pub gap: f64,
    pub descent: bool,
}

impl DescentGapSample {
    pub fn new(gap: f64) -> Self {
        DescentGapSample {
            gap,
            descent: gap >= 0.0,
        }
    }
}

/// Monte-Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_samples: usize,
}

impl McEstimate {
    /// Number of standard errors separating the estimate from `expected`.
    pub fn z_score(&self, expected: f64) -> f64 {
        if self.stderr == 0.0 {
            if self.mean == expected {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (self.mean - expected).abs() / self.stderr
        }
    }

    pub fn agrees_with(&self, expected: f64, n_sigma: f64) -> bool {
        self.z_score(expected) <= n_sigma
    }
}

/// Worst case of the linear-constraint descent condition together with its
/// theoretical bracket `[1, 1/2 + cond(H)/2]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumBounds {
    pub max_value: f64,
    pub lower_bound: f64,
    pub upper_bound: f64,
}

impl SpectrumBounds {
    pub fn within(&self, tol: f64) -> bool {
        self.lower_bound - tol <= self.max_value && self.max_value <= self.upper_bound + tol
    }
}

/// Streaming mean/variance (Welford), mergeable across blocks.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: usize,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    fn merge(self, other: Moments) -> Moments {
        if self.n == 0 {
            return other;
        }
        if other.n == 0 {
            return self;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        Moments {
            n,
            mean: self.mean + d * other.n as f64 / n as f64,
            m2: self.m2 + other.m2 + d * d * (self.n as f64 * other.n as f64) / n as f64,
        }
    }

    fn estimate(self) -> McEstimate {
        let var = self.m2 / (self.n as f64 - 1.0);
        McEstimate {
            mean: self.mean,
            stderr: (var / self.n as f64).sqrt(),
            n_samples: self.n,
        }
    }
}

/// Mean of `wᵀKw` over `w ~ N(0, I)`.
///
/// Samples are drawn in fixed-size blocks from per-block substreams and merged
/// in block order, so the result does not depend on thread scheduling.
pub fn mc_quadratic_form(k: &Matrix, n_samples: usize, rng: &Rng) -> Result<McEstimate> {
    if n_samples < 2 {
        return domain("Monte-Carlo estimate needs at least two samples");
    }
    if !k.is_square() {
        return Err(LinalgError::Dimension("quadratic form needs a square matrix".into()).into());
    }
    let m = k.rows();
    let blocks = n_samples.div_ceil(MC_BLOCK);
    let moments = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut stream = rng.substream(b as u64);
            let count = MC_BLOCK.min(n_samples - b * MC_BLOCK);
            let mut w = vec![0.0; m];
            let mut acc = Moments::default();
            for _ in 0..count {
                stream.fill_gaussian(&mut w);
                acc.push(k.quad_form(&w));
            }
            acc
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(Moments::default(), Moments::merge);
    Ok(moments.estimate())
}

fn check_pair(a: &Vector, b: &Vector) -> Result<(f64, f64, f64)> {
    if a.dim() != b.dim() {
        return Err(LinalgError::Dimension(format!("vectors of length {} and {}", a.dim(), b.dim())).into());
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return domain("zero vector");
    }
    Ok((a.dot(b), na, nb))
}

fn require_non_orthogonal(a: &Vector, b: &Vector) -> Result<(f64, f64, f64)> {
    let (ab, na, nb) = check_pair(a, b)?;
    if ab.abs() <= ORTHOGONALITY_TOL * na * nb {
        return domain("a and b are orthogonal (aᵀb = 0)");
    }
    Ok((ab, na, nb))
}

/// Closed-form nonzero eigenpairs of `abᵀ + baᵀ`, ascending by eigenvalue.
///
/// The eigenvalues are `aᵀb ± ‖a‖‖b‖` with eigenvectors along `‖b‖a ± ‖a‖b`.
/// For linearly dependent `a`, `b` only the single nonzero pair is returned.
pub fn rank2_sym_eigenpairs(a: &Vector, b: &Vector) -> Result<Vec<(f64, Vector)>> {
    let (ab, na, nb) = check_pair(a, b)?;
    let plus = a.scale(nb).add(&b.scale(na));
    let minus = a.scale(nb).sub(&b.scale(na));
    let scale = 2.0 * na * nb;
    let mut pairs = Vec::with_capacity(2);
    let minus_norm = minus.norm();
    if minus_norm > 1e-12 * scale {
        pairs.push((ab - na * nb, minus.scale(1.0 / minus_norm)));
    }
    let plus_norm = plus.norm();
    if plus_norm > 1e-12 * scale {
        pairs.push((ab + na * nb, plus.scale(1.0 / plus_norm)));
    }
    if pairs.len() == 1 {
        // Dependent vectors: the surviving eigenvalue is exactly 2aᵀb.
        pairs[0].0 = 2.0 * ab;
    }
    Ok(pairs)
}

/// Full spectrum of `(abᵀ + baᵀ) / (2aᵀb)`, ascending.
pub fn scaled_spectrum(a: &Vector, b: &Vector) -> Result<Vec<f64>> {
    let (ab, na, nb) = require_non_orthogonal(a, b)?;
    let m = a.dim();
    if m == 1 {
        return Ok(vec![1.0]);
    }
    let r = na * nb / (2.0 * ab.abs());
    let mut spectrum = vec![0.0; m];
    spectrum[0] = 0.5 - r;
    spectrum[m - 1] = 0.5 + r;
    Ok(spectrum)
}

/// `max_{‖x‖=1} xᵀ(abᵀ/aᵀb)x = 1/2 + ‖a‖‖b‖ / (2|aᵀb|)`.
pub fn quad_form_max(a: &Vector, b: &Vector) -> Result<f64> {
    let (ab, na, nb) = require_non_orthogonal(a, b)?;
    Ok(0.5 + na * nb / (2.0 * ab.abs()))
}

/// Worst case over unit `w` of `wᵀ(aaᵀH⁻¹ / aᵀH⁻¹a)w`.
///
/// The constraint-ignoring gradient is a descent direction for every incoming
/// gradient iff this is at most one. The returned bracket is
/// `[1, 1/2 + cond(H)/2]`; the upper end is only guaranteed for definite `H`.
pub fn lin_descent_max(h: &Matrix, a: &Vector) -> Result<SpectrumBounds> {
    let lu = Lu::factor(h)?;
    let b = lu.solve(a)?;
    let cond = linalg::cond_sym(h)?;
    let max_value = quad_form_max(a, &b)
        .map_err(|_| TheoryError::Domain("aᵀH⁻¹a vanishes".into()))?;
    Ok(SpectrumBounds {
        max_value,
        lower_bound: 1.0,
        upper_bound: 0.5 + 0.5 * cond,
    })
}

/// `vᵀ(H⁻¹ − H⁻¹aaᵀH⁻¹ / aᵀH⁻¹a)Ĥ⁻¹v`, which equals `gᵀĝ` for a single
/// constraint with `B = I` and `C = 0`.
pub fn descent_gap(h: &Matrix, h_hat: &Matrix, a: &Vector, v: &Vector) -> Result<DescentGapSample> {
    if a.norm() == 0.0 {
        return domain("constraint gradient a is zero");
    }
    let h_lu = Lu::factor(h)?;
    let hhat_v = Lu::factor(h_hat)?.solve(v)?;
    let h_a = h_lu.solve(a)?;
    let h_v = h_lu.solve(v)?;
    let h_hhat_v = h_lu.solve(&hhat_v)?;
    let a_h_a = a.dot(&h_a);
    if a_h_a.abs() <= ORTHOGONALITY_TOL * a.norm() * h_a.norm() {
        return domain("aᵀH⁻¹a vanishes");
    }
    let gap = v.dot(&h_hhat_v) - h_v.dot(a) * a.dot(&h_hhat_v) / a_h_a;
    Ok(DescentGapSample::new(gap))
}

/// `K = I − Aᵀ(AH⁻¹Aᵀ)⁻¹AH⁻¹` for `A` of shape `p × m`.
pub fn linear_gap_operator(h: &Matrix, a: &Matrix) -> Result<Matrix> {
    let (p, m) = a.shape();
    if h.shape() != (m, m) {
        return Err(LinalgError::Dimension(format!(
            "H is {:?} but A has {m} columns",
            h.shape()
        ))
        .into());
    }
    if p == 0 || p > m {
        return domain(format!("need 1 <= p <= m, got p={p}, m={m}"));
    }
    let h_inv = linalg::inverse(h)?;
    let a_hinv = a.matmul(&h_inv);
    let schur = a_hinv.matmul(&a.transpose());
    let schur_lu = Lu::factor(&schur).map_err(|e| match e {
        LinalgError::Singular { .. } => {
            TheoryError::Domain("AH⁻¹Aᵀ is singular (A rank deficient)".into())
        }
        other => other.into(),
    })?;
    let correction = a.transpose().matmul(&schur_lu.solve_matrix(&a_hinv)?);
    Ok(Matrix::identity(m).sub(&correction))
}

/// Monte-Carlo estimate of `E[wᵀ(I − Aᵀ(AH⁻¹Aᵀ)⁻¹AH⁻¹)w]`, `w ~ N(0, I)`.
pub fn expected_gap_linear_mc(h: &Matrix, a: &Matrix, n_samples: usize, rng: &Rng) -> Result<McEstimate> {
    let k = linear_gap_operator(h, a)?;
    mc_quadratic_form(&k, n_samples, rng)
}

/// Exact expectation by evaluating the trace of the gap operator (`m − p`).
pub fn expected_gap_linear_closed(h: &Matrix, a: &Matrix) -> Result<f64> {
    Ok(linear_gap_operator(h, a)?.trace())
}

/// `E[xᵀAx] = tr(AΣ) + μᵀAμ` for `x` with mean `μ` and covariance `Σ`.
pub fn quad_expectation(a: &Matrix, mu: &Vector, sigma: &Matrix) -> Result<f64> {
    let m = mu.dim();
    if a.shape() != (m, m) || sigma.shape() != (m, m) {
        return Err(LinalgError::Dimension(format!(
            "A {:?}, Σ {:?}, μ of length {m}",
            a.shape(),
            sigma.shape()
        ))
        .into());
    }
    Ok(a.matmul(sigma).trace() + a.quad_form(mu))
}

fn check_unit(y: &Vector) -> Result<()> {
    if (y.norm() - 1.0).abs() > 1e-8 {
        return domain(format!("y must be a unit vector, ‖y‖ = {}", y.norm()));
    }
    Ok(())
}

fn check_shift(eig: &SymEigResult, lambda: f64) -> Result<()> {
    let scale = eig.max_abs_eigenvalue().max(lambda.abs()).max(1.0);
    if let Some(l) = eig.eigenvalues.iter().find(|l| (*l - lambda).abs() <= 1e-9 * scale) {
        return Err(LinalgError::Singular { column: 0, pivot: l - lambda }.into());
    }
    if let Some(l) = eig.eigenvalues.iter().find(|l| l.abs() <= 1e-12 * scale) {
        return Err(LinalgError::Singular { column: 0, pivot: *l }.into());
    }
    Ok(())
}

/// Closed-form `E[gᵀĝ]` for the normalization constraint `‖u‖² = 1` with
/// `H = Ĥ − λI` and `H⁻¹v ~ N(0, I)`:
/// `Σᵢ (λᵢ − λ)/λᵢ − yᵀĤ⁻¹y / yᵀH⁻¹y`, with `λᵢ` the eigenvalues of `Ĥ`.
pub fn expected_gap_norm_closed(h_hat: &Matrix, lambda: f64, y: &Vector) -> Result<f64> {
    check_unit(y)?;
    let eig = linalg::sym_eig(h_hat)?;
    check_shift(&eig, lambda)?;
    let trace_term: f64 = eig.eigenvalues.iter().map(|l| (l - lambda) / l).sum();
    let coords = eig.eigenvectors.t_matvec(y);
    let (mut y_hhat_y, mut y_h_y) = (0.0, 0.0);
    for (c, l) in coords.iter().zip(eig.eigenvalues.iter()) {
        y_hhat_y += c * c / l;
        y_h_y += c * c / (l - lambda);
    }
    if y_h_y.abs() <= 1e-14 * (y_hhat_y.abs() + 1.0) {
        return Err(LinalgError::Singular { column: 0, pivot: y_h_y }.into());
    }
    Ok(trace_term - y_hhat_y / y_h_y)
}

/// `Ĥ⁻¹H − yyᵀĤ⁻¹ / yᵀH⁻¹y`, the operator whose Gaussian quadratic form is `gᵀĝ`
/// after substituting `w = H⁻¹v`. Built from LU inverses, independently of the
/// eigendecomposition used by [`expected_gap_norm_closed`].
pub fn norm_gap_operator(h_hat: &Matrix, lambda: f64, y: &Vector) -> Result<Matrix> {
    check_unit(y)?;
    let h = h_hat.shift_diagonal(-lambda);
    let hhat_inv = linalg::inverse(h_hat)?;
    let h_inv_y = linalg::solve(&h, y)?;
    let y_h_y = y.dot(&h_inv_y);
    let hhat_inv_y = hhat_inv.matvec(y);
    // yyᵀĤ⁻¹ = y (Ĥ⁻¹y)ᵀ since Ĥ is symmetric
    let rank1 = y.outer(&hhat_inv_y).scale(1.0 / y_h_y);
    Ok(hhat_inv.matmul(&h).sub(&rank1))
}

pub fn expected_gap_norm_mc(h_hat: &Matrix, lambda: f64, y: &Vector, n_samples: usize, rng: &Rng) -> Result<McEstimate> {
    let k = norm_gap_operator(h_hat, lambda, y)?;
    mc_quadratic_form(&k, n_samples, rng)
}

/// Which side of the spectrum of `Ĥ` the multiplier `λ` falls on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignCase {
    /// `λ < λ₁`: the expectation is non-negative.
    BelowSpectrum,
    /// `λ > λ_m`: the expectation is non-positive.
    AboveSpectrum,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormSignReport {
    pub case: SignCase,
    pub value: f64,
    /// Whether `value` has the sign the case predicts.
    pub consistent: bool,
}

/// Evaluates the normalization-constraint expectation for positive definite
/// `Ĥ` when `λ` lies outside `[λ₁, λ_m]`, and checks its predicted sign.
pub fn norm_sign_case(h_hat: &Matrix, lambda: f64, y: &Vector) -> Result<NormSignReport> {
    let eig = linalg::sym_eig(h_hat)?;
    let lo = eig.eigenvalues[0];
    let hi = eig.eigenvalues[eig.eigenvalues.dim() - 1];
    if lo <= 0.0 {
        return domain(format!("Ĥ must be positive definite, smallest eigenvalue {lo}"));
    }
    let case = if lambda < lo {
        SignCase::BelowSpectrum
    } else if lambda > hi {
        SignCase::AboveSpectrum
    } else {
        return domain(format!("λ = {lambda} lies inside the spectrum [{lo}, {hi}]"));
    };
    let value = expected_gap_norm_closed(h_hat, lambda, y)?;
    let consistent = match case {
        SignCase::BelowSpectrum => value >= 0.0,
        SignCase::AboveSpectrum => value <= 0.0,
    };
    Ok(NormSignReport { case, value, consistent })
}

/// Random symmetric matrix with eigenvalue magnitudes log-uniform in
/// `[min_abs, max_abs]`. With `indefinite` each sign is flipped with
/// probability one half (at least one of each sign when `m >= 2`).
pub fn random_symmetric(rng: &mut Rng, m: usize, min_abs: f64, max_abs: f64, indefinite: bool) -> Matrix {
    let (lo, hi) = (min_abs.ln(), max_abs.ln());
    let mut spectrum: Vec<f64> = (0..m).map(|_| rng.uniform_range(lo, hi).exp()).collect();
    if indefinite {
        for s in spectrum.iter_mut() {
            if rng.uniform() < 0.5 {
                *s = -*s;
            }
        }
        if m >= 2 && spectrum.iter().all(|s| s.signum() == spectrum[0].signum()) {
            spectrum[0] = -spectrum[0];
        }
    }
    linalg::random_with_spectrum(rng, &spectrum)
}

pub mod suite;
