//! Randomized checks of every closed-form statement in [`crate::theory`].
//!
//! Each check draws its own instances from a substream of the suite seed, so
//! running a subset gives the same numbers as running everything.

use std::fmt;

use crate::linalg::{self, Matrix, Rng, Vector};

use super::{
    expected_gap_linear_closed, expected_gap_linear_mc, expected_gap_norm_closed, expected_gap_norm_mc,
    lin_descent_max, norm_sign_case, quad_expectation, random_symmetric, rank2_sym_eigenpairs,
    scaled_spectrum, McEstimate, Result, SignCase,
};

/// Check names in execution order.
pub const CHECKS: [&str; 9] = [
    "rank2-eigenpairs",
    "rank2-spectrum",
    "bracket-definite",
    "bracket-indefinite",
    "linear-single",
    "linear-multi",
    "norm-closed-form",
    "norm-sign",
    "quadratic-mean",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteConfig {
    pub m: usize,
    /// Monte-Carlo samples per instance.
    pub samples: usize,
    pub seed: u64,
    pub n_sigma: f64,
    /// Random instances per check; `None` uses each check's default.
    pub cases: Option<usize>,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            m: 10,
            samples: 1_000_000,
            seed: 0,
            n_sigma: 3.0,
            cases: None,
        }
    }
}

impl SuiteConfig {
    fn cases(&self, default: usize) -> usize {
        self.cases.unwrap_or(default)
    }

    fn rng(&self, check: &str) -> Rng {
        let index = CHECKS.iter().position(|c| *c == check).expect("known check");
        Rng::new(self.seed).substream(1000 + index as u64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub cases: usize,
    /// Computed values, bounds and errors in human-readable form.
    pub detail: String,
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{}: {}, {verdict}", self.name, self.detail)
    }
}

/// Pools per-instance estimates that all target the same value.
#[derive(Debug, Default)]
struct Pool {
    sum: f64,
    var: f64,
    n: usize,
    max_z: f64,
    failures: usize,
}

impl Pool {
    fn push(&mut self, est: &McEstimate, expected: f64, n_sigma: f64) {
        self.sum += est.mean - expected;
        self.var += est.stderr * est.stderr;
        self.n += 1;
        let z = est.z_score(expected);
        self.max_z = self.max_z.max(z);
        if z > n_sigma {
            self.failures += 1;
        }
    }

    /// Pooled mean shifted back to `expected`, with its stderr.
    fn pooled(&self, expected: f64) -> (f64, f64) {
        let n = self.n as f64;
        (expected + self.sum / n, self.var.sqrt() / n)
    }
}

/// Runs every check whose name contains `filter` (all when `None`).
pub fn run_suite(config: &SuiteConfig, filter: Option<&str>) -> Vec<CheckOutcome> {
    CHECKS
        .iter()
        .filter(|name| filter.is_none_or(|f| name.contains(f)))
        .map(|name| run_check(name, config))
        .collect()
}

/// Runs one named check. Errors from the underlying routines count as failures.
pub fn run_check(name: &str, config: &SuiteConfig) -> CheckOutcome {
    let result = match name {
        "rank2-eigenpairs" => rank2_eigenpairs(config),
        "rank2-spectrum" => rank2_spectrum(config),
        "bracket-definite" => bounds_definite(config),
        "bracket-indefinite" => bounds_indefinite(config),
        "linear-single" => linear_expectation(config, &[1]),
        "linear-multi" => linear_expectation(config, &(1..config.m).collect::<Vec<_>>()),
        "norm-closed-form" => norm_expectation(config),
        "norm-sign" => norm_signs(config),
        "quadratic-mean" => quadratic_mean(config),
        other => {
            return CheckOutcome {
                name: "unknown",
                passed: false,
                cases: 0,
                detail: format!("no check named {other:?}"),
            }
        }
    };
    let name = CHECKS.iter().find(|c| **c == name).copied().unwrap_or("unknown");
    result.unwrap_or_else(|e| CheckOutcome {
        name,
        passed: false,
        cases: 0,
        detail: format!("error: {e}"),
    })
}

fn outcome(name: &'static str, passed: bool, cases: usize, detail: String) -> Result<CheckOutcome> {
    Ok(CheckOutcome {
        name,
        passed,
        cases,
        detail,
    })
}

/// Symmetric matrix with log-uniform spectrum magnitudes in `[0.01, 100]`
/// (cond up to 10⁴). Half of the definite draws are negative definite.
fn random_definite(rng: &mut Rng, m: usize) -> Matrix {
    let h = random_symmetric(rng, m, 0.01, 100.0, false);
    if rng.uniform() < 0.5 {
        h.scale(-1.0)
    } else {
        h
    }
}

/// Closed-form eigenpairs of `abᵀ + baᵀ` against the numeric eigensolver.
pub fn rank2_eigenpairs(config: &SuiteConfig) -> Result<CheckOutcome> {
    let mut rng = config.rng("rank2-eigenpairs");
    let cases = config.cases(200);
    let (mut max_val_err, mut min_align, mut max_ortho) = (0.0f64, 1.0f64, 0.0f64);
    for _ in 0..cases {
        let m = 2 + (rng.next_u64() % 11) as usize;
        let (a, b) = (rng.gaussian_vector(m), rng.gaussian_vector(m));
        let pairs = rank2_sym_eigenpairs(&a, &b)?;
        let eig = linalg::sym_eig(&a.outer(&b).add(&b.outer(&a)))?;
        let (lo, hi) = (&pairs[0], &pairs[1]);
        max_val_err = max_val_err
            .max((lo.0 - eig.eigenvalues[0]).abs())
            .max((hi.0 - eig.eigenvalues[m - 1]).abs());
        min_align = min_align
            .min(lo.1.dot(&eig.eigenvector(0)).abs())
            .min(hi.1.dot(&eig.eigenvector(m - 1)).abs());
        max_ortho = max_ortho.max(lo.1.dot(&hi.1).abs());
    }
    let passed = max_val_err <= 1e-9 && min_align > 1.0 - 1e-8 && max_ortho <= 1e-12;
    outcome(
        "rank2-eigenpairs",
        passed,
        cases,
        format!(
            "max eigenvalue error={max_val_err:.2e} (tol 1e-9), min |q·q_num|={min_align:.12} (tol 1-1e-8), max |q1·q2|={max_ortho:.2e} over {cases} pairs"
        ),
    )
}

/// Scaled spectrum of `(abᵀ + baᵀ)/(2aᵀb)` against the numeric eigensolver.
pub fn rank2_spectrum(config: &SuiteConfig) -> Result<CheckOutcome> {
    let mut rng = config.rng("rank2-spectrum");
    let cases = config.cases(200);
    let (mut max_err, mut max_sum_err) = (0.0f64, 0.0f64);
    for _ in 0..cases {
        let m = 2 + (rng.next_u64() % 11) as usize;
        let (a, b) = (rng.gaussian_vector(m), rng.gaussian_vector(m));
        let spectrum = scaled_spectrum(&a, &b)?;
        let mat = a.outer(&b).add(&b.outer(&a)).scale(1.0 / (2.0 * a.dot(&b)));
        let numeric = linalg::sym_eig(&mat)?.eigenvalues;
        for (s, n) in spectrum.iter().zip(numeric.iter()) {
            max_err = max_err.max((s - n).abs());
        }
        max_sum_err = max_sum_err.max((spectrum.iter().sum::<f64>() - 1.0).abs());
    }
    outcome(
        "rank2-spectrum",
        max_err <= 1e-9 && max_sum_err <= 1e-10,
        cases,
        format!("max spectrum error={max_err:.2e} (tol 1e-9), max |Σλ−1|={max_sum_err:.2e} (tol 1e-10) over {cases} pairs"),
    )
}

fn bracket_summary(rng: &mut Rng, m: usize, cases: usize, indefinite: bool) -> Result<(usize, usize, f64, f64)> {
    let (mut below, mut above, mut min_max, mut max_ratio) = (0, 0, f64::INFINITY, 0.0f64);
    for _ in 0..cases {
        let h = if indefinite {
            random_symmetric(rng, m, 0.01, 100.0, true)
        } else {
            random_definite(rng, m)
        };
        let a = rng.gaussian_vector(m);
        let bounds = lin_descent_max(&h, &a)?;
        if bounds.max_value < bounds.lower_bound - 1e-8 {
            below += 1;
        }
        if bounds.max_value > bounds.upper_bound + 1e-8 {
            above += 1;
        }
        min_max = min_max.min(bounds.max_value);
        max_ratio = max_ratio.max(bounds.max_value / bounds.upper_bound);
    }
    Ok((below, above, min_max, max_ratio))
}

fn identity_max(m: usize, rng: &mut Rng) -> Result<f64> {
    let a = rng.gaussian_vector(m);
    Ok(lin_descent_max(&Matrix::identity(m), &a)?.max_value)
}

/// `1 ≤ max ≤ 1/2 + cond(H)/2` for definite `H`, and `max = 1` at `H = I`.
pub fn bounds_definite(config: &SuiteConfig) -> Result<CheckOutcome> {
    let mut rng = config.rng("bracket-definite");
    let cases = config.cases(1000);
    let (below, above, min_max, max_ratio) = bracket_summary(&mut rng, config.m, cases, false)?;
    let at_identity = identity_max(config.m, &mut rng)?;
    let passed = below == 0 && above == 0 && (at_identity - 1.0).abs() <= 1e-10;
    outcome(
        "bracket-definite",
        passed,
        cases,
        format!(
            "definite H: {below} below 1, {above} above 1/2+cond/2 of {cases}; min max={min_max:.12}, max max/upper={max_ratio:.6}; H=I max={at_identity:.15}"
        ),
    )
}

/// Lower bound for indefinite `H`. The upper bound is reported but not
/// required: `|aᵀH⁻¹a|` has no lower bound in terms of `σ_min` once `H` has
/// eigenvalues of both signs.
pub fn bounds_indefinite(config: &SuiteConfig) -> Result<CheckOutcome> {
    let mut rng = config.rng("bracket-indefinite");
    let cases = config.cases(1000);
    let (below, above, min_max, _) = bracket_summary(&mut rng, config.m, cases, true)?;
    outcome(
        "bracket-indefinite",
        below == 0,
        cases,
        format!("indefinite H: {below} below 1 of {cases} (min max={min_max:.12}); upper bound exceeded in {above} (not required)"),
    )
}

fn full_row_rank(rng: &mut Rng, p: usize, m: usize) -> Matrix {
    rng.gaussian_matrix(p, m)
}

/// `E[wᵀ(I − Aᵀ(AH⁻¹Aᵀ)⁻¹AH⁻¹)w] = m − p` by trace and by Monte Carlo.
fn linear_expectation(config: &SuiteConfig, ps: &[usize]) -> Result<CheckOutcome> {
    let name = if ps == [1] { "linear-single" } else { "linear-multi" };
    let mut rng = config.rng(name);
    let m = config.m;
    let per_p = config.cases(20);
    let mut lines = Vec::new();
    let mut passed = true;
    let mut total = 0;
    for &p in ps {
        let expected = (m - p) as f64;
        let mut pool = Pool::default();
        let mut max_trace_err = 0.0f64;
        for _ in 0..per_p {
            let indefinite = rng.uniform() < 0.5;
            let h = random_symmetric(&mut rng, m, 0.1, 10.0, indefinite);
            let a = full_row_rank(&mut rng, p, m);
            max_trace_err = max_trace_err.max((expected_gap_linear_closed(&h, &a)? - expected).abs());
            let stream = rng.substream(total as u64);
            pool.push(&expected_gap_linear_mc(&h, &a, config.samples, &stream)?, expected, config.n_sigma);
            total += 1;
        }
        let ok = pool.failures == 0 && max_trace_err <= 1e-8;
        passed &= ok;
        let (mean, se) = pool.pooled(expected);
        lines.push(format!(
            "p={p}: mean={mean:.5} ± {se:.5}, expect {expected}, max|z|={:.2}, {} of {per_p} outside {}σ, trace err={max_trace_err:.1e}",
            pool.max_z, pool.failures, config.n_sigma
        ));
    }
    let detail = if ps.len() == 1 {
        lines.remove(0).trim_start_matches("p=1: ").to_string()
    } else {
        lines.join("; ")
    };
    outcome(name, passed, total, detail)
}

/// PD `Ĥ`, unit `y` and `λ` just outside the spectrum on the requested side.
fn norm_instance(rng: &mut Rng, m: usize, case: SignCase) -> Result<(Matrix, f64, Vector)> {
    let h_hat = random_symmetric(rng, m, 0.1, 10.0, false);
    let eig = linalg::sym_eig(&h_hat)?;
    let (lo, hi) = (eig.eigenvalues[0], eig.eigenvalues[m - 1]);
    let offset = rng.uniform_range(0.05, 2.0);
    let lambda = match case {
        SignCase::BelowSpectrum => lo - offset * lo,
        SignCase::AboveSpectrum => hi + offset * hi,
    };
    Ok((h_hat, lambda, rng.unit_vector(m)))
}

/// Closed form of the normalization-constraint expectation against Monte Carlo.
pub fn norm_expectation(config: &SuiteConfig) -> Result<CheckOutcome> {
    let mut rng = config.rng("norm-closed-form");
    let m = config.m;
    let per_case = config.cases(50);
    let mut passed = true;
    let mut parts = Vec::new();
    let mut k = 0;
    for case in [SignCase::BelowSpectrum, SignCase::AboveSpectrum] {
        let (mut max_z, mut failures) = (0.0f64, 0);
        for _ in 0..per_case {
            let (h_hat, lambda, y) = norm_instance(&mut rng, m, case)?;
            let closed = expected_gap_norm_closed(&h_hat, lambda, &y)?;
            let est = expected_gap_norm_mc(&h_hat, lambda, &y, config.samples, &rng.substream(k))?;
            k += 1;
            let z = est.z_score(closed);
            max_z = max_z.max(z);
            if z > config.n_sigma {
                failures += 1;
            }
        }
        passed &= failures == 0;
        let side = match case {
            SignCase::BelowSpectrum => "λ<λ₁",
            SignCase::AboveSpectrum => "λ>λ_m",
        };
        parts.push(format!("{side}: max|z|={max_z:.2}, {failures} of {per_case} outside {}σ", config.n_sigma));
    }
    let y = rng.unit_vector(m);
    let identity = expected_gap_norm_closed(&Matrix::identity(m), 0.0, &y)?;
    let identity_ok = identity == (m - 1) as f64;
    passed &= identity_ok;
    parts.push(format!("Ĥ=I, λ=0 gives {identity} (expect {})", m - 1));
    outcome("norm-closed-form", passed, 2 * per_case, parts.join("; "))
}

/// Sign of the normalization-constraint expectation outside the spectrum.
pub fn norm_signs(config: &SuiteConfig) -> Result<CheckOutcome> {
    let mut rng = config.rng("norm-sign");
    let per_case = config.cases(100);
    let mut parts = Vec::new();
    let mut passed = true;
    for case in [SignCase::BelowSpectrum, SignCase::AboveSpectrum] {
        let (mut wrong, mut extreme) = (0, match case {
            SignCase::BelowSpectrum => f64::INFINITY,
            SignCase::AboveSpectrum => f64::NEG_INFINITY,
        });
        for _ in 0..per_case {
            let (h_hat, lambda, y) = norm_instance(&mut rng, config.m, case)?;
            let report = norm_sign_case(&h_hat, lambda, &y)?;
            debug_assert_eq!(report.case, case);
            if !report.consistent {
                wrong += 1;
            }
            extreme = match case {
                SignCase::BelowSpectrum => extreme.min(report.value),
                SignCase::AboveSpectrum => extreme.max(report.value),
            };
        }
        passed &= wrong == 0;
        parts.push(match case {
            SignCase::BelowSpectrum => format!("λ<λ₁: min={extreme:.6} (expect ≥ 0), {wrong} of {per_case} wrong sign"),
            SignCase::AboveSpectrum => format!("λ>λ_m: max={extreme:.6} (expect ≤ 0), {wrong} of {per_case} wrong sign"),
        });
    }
    outcome("norm-sign", passed, 2 * per_case, parts.join("; "))
}

/// `E[xᵀAx] = tr(AΣ) + μᵀAμ` against Monte Carlo with `x = μ + Lw`.
pub fn quadratic_mean(config: &SuiteConfig) -> Result<CheckOutcome> {
    let mut rng = config.rng("quadratic-mean");
    let m = config.m.min(6);
    let a = rng.gaussian_matrix(m, m);
    let mu = rng.gaussian_vector(m);
    let l = rng.gaussian_matrix(m, m).scale(0.5);
    let sigma = l.matmul(&l.transpose());
    let closed = quad_expectation(&a, &mu, &sigma)?;
    let est = sample_quadratic(&a, &mu, &l, config.samples, &rng.substream(0));
    let passed = est.agrees_with(closed, config.n_sigma);
    outcome(
        "quadratic-mean",
        passed,
        1,
        format!(
            "mean={:.5} ± {:.5}, expect {closed:.5}, |z|={:.2}",
            est.mean,
            est.stderr,
            est.z_score(closed)
        ),
    )
}

/// Sequential mean of `xᵀAx` for `x = μ + Lw`, `w ~ N(0, I)`.
fn sample_quadratic(a: &Matrix, mu: &Vector, l: &Matrix, n: usize, rng: &Rng) -> McEstimate {
    let mut stream = rng.clone();
    let m = mu.dim();
    let mut w = vec![0.0; m];
    let (mut mean, mut m2) = (0.0, 0.0);
    for i in 0..n {
        stream.fill_gaussian(&mut w);
        let x = mu.add(&l.matvec(&w));
        let q = a.quad_form(&x);
        let d = q - mean;
        mean += d / (i + 1) as f64;
        m2 += d * (q - mean);
    }
    McEstimate {
        mean,
        stderr: (m2 / (n as f64 - 1.0) / n as f64).sqrt(),
        n_samples: n,
    }
}
