//! Training pipeline: `z_b → MLP → x_b → node → y_b → loss(y_b, y*_b)`.
//!
//! One fixed batch of input/target pairs is fitted for a number of AdamW
//! steps, back-propagating through the node with either its exact or its
//! approximate gradient. At every iteration both node gradients are computed
//! so their cosine similarity with respect to the node input can be recorded.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{cosine_similarity, Matrix, Rng, Vector};
use crate::nodes::{
    self, ot, DeclarativeNode, EigenDecomposition, EigenTarget, EntropicOt, GradientReport, NodeError,
    SphereProjection,
};

pub mod adamw;
pub mod loss;
pub mod mlp;

pub use adamw::{AdamWConfig, AdamWState};
pub use loss::{loss_eigen_align, loss_mse};
pub use mlp::{Mlp, MlpCache};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Problem {
    Sphere,
    Ot,
    Eigen,
}

impl Problem {
    pub fn name(self) -> &'static str {
        match self {
            Problem::Sphere => "sphere",
            Problem::Ot => "ot",
            Problem::Eigen => "eigen",
        }
    }
}

/// Eigen experiment variants: which eigenvectors the loss sees and how the
/// MLP output is turned into a symmetric matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum EigenSetting {
    /// Loss on every eigenvector, general symmetric `X`.
    All,
    /// Loss on the top eigenvector, general symmetric `X`.
    Largest,
    /// Top eigenvector of `X = −(LLᵀ + 0.1 I)`.
    LargestNegdef,
    /// Top eigenvector of `X = w₁w₁ᵀ + w₂w₂ᵀ`.
    LargestRank2,
}

impl EigenSetting {
    pub fn name(self) -> &'static str {
        match self {
            EigenSetting::All => "all",
            EigenSetting::Largest => "largest",
            EigenSetting::LargestNegdef => "largest_negdef",
            EigenSetting::LargestRank2 => "largest_rank2",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum GradMode {
    Exact,
    Approx,
}

impl GradMode {
    pub fn name(self) -> &'static str {
        match self {
            GradMode::Exact => "exact",
            GradMode::Approx => "approx",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub problem: Problem,
    pub eigen_setting: EigenSetting,
    /// Dimension of the raw inputs `z_b`.
    pub d: usize,
    pub m: usize,
    /// Columns of the transport plan; ignored by the other problems.
    pub n: usize,
    pub batch_size: usize,
    pub iterations: usize,
    pub repeats: usize,
    pub seed: u64,
    pub grad_mode: GradMode,
    pub gamma: f64,
    pub sinkhorn_tol: f64,
    pub hidden: [usize; 2],
    pub optimizer: AdamWConfig,
    /// Also record the cosine similarity of the two parameter gradients.
    pub record_theta_similarity: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            problem: Problem::Sphere,
            eigen_setting: EigenSetting::Largest,
            d: 5,
            m: 10,
            n: 10,
            batch_size: 10,
            iterations: 500,
            repeats: 5,
            seed: 0,
            grad_mode: GradMode::Approx,
            gamma: 1.0,
            sinkhorn_tol: ot::DEFAULT_TOL,
            hidden: [64, 64],
            optimizer: AdamWConfig::default(),
            record_theta_similarity: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |msg: &str| Err(TrainError::Config(msg.to_string()));
        if self.d == 0 || self.m == 0 || self.n == 0 || self.batch_size == 0 {
            return bad("dimensions and batch size must be positive");
        }
        if self.hidden.contains(&0) {
            return bad("hidden widths must be positive");
        }
        if self.repeats == 0 {
            return bad("repeats must be positive");
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return bad("gamma must be positive");
        }
        if self.optimizer.lr.is_nan() || self.optimizer.lr <= 0.0 {
            return bad("learning rate must be positive");
        }
        if self.problem == Problem::Eigen && self.m < 2 {
            return bad("eigen problems need m >= 2");
        }
        Ok(())
    }

    /// Label used in summaries for the two input regimes.
    pub fn parameterization_label(&self) -> Option<&'static str> {
        match self.d {
            5 => Some("under parameterized"),
            100 => Some("over parameterized"),
            _ => None,
        }
    }
}

/// One point on a learning curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRecord {
    pub run: usize,
    pub iteration: usize,
    pub loss: f64,
    pub cos_sim_mean: f64,
    pub cos_sim_min: f64,
    /// Fraction of batch elements whose approximate gradient has positive
    /// cosine similarity with the exact one.
    pub descent_fraction: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub theta_cos_sim: Option<f64>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("run {run}: target {index} is degenerate after resampling: {source}")]
    DegenerateTarget { run: usize, index: usize, source: NodeError },
    #[error("run {run}, iteration {iteration}, batch element {element}: {source}")]
    Node {
        run: usize,
        iteration: usize,
        element: usize,
        source: NodeError,
    },
    #[error("run {run}, iteration {iteration}: non-finite {what}")]
    NonFinite { run: usize, iteration: usize, what: &'static str },
}

/// Maps MLP outputs to node inputs and pulls node-input gradients back.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parametrization {
    Identity,
    /// Upper triangle (row-major, `m(m+1)/2` values) mirrored to a symmetric matrix.
    SymmetricUpper { m: usize },
    /// `X = −(LLᵀ + 0.1 I)` with `L` an `m × m` reshape.
    NegativeDefinite { m: usize },
    /// `X = w₁w₁ᵀ + w₂w₂ᵀ` from `2m` outputs.
    RankTwo { m: usize },
}

const NEGDEF_SHIFT: f64 = 0.1;

impl Parametrization {
    pub fn raw_len(self, node_len: usize) -> usize {
        match self {
            Parametrization::Identity => node_len,
            Parametrization::SymmetricUpper { m } => m * (m + 1) / 2,
            Parametrization::NegativeDefinite { m } => m * m,
            Parametrization::RankTwo { m } => 2 * m,
        }
    }

    pub fn apply(self, raw: &Vector) -> Vector {
        match self {
            Parametrization::Identity => raw.clone(),
            Parametrization::SymmetricUpper { m } => {
                let mut x = Matrix::zeros(m, m);
                let mut k = 0;
                for i in 0..m {
                    for j in i..m {
                        x[(i, j)] = raw[k];
                        x[(j, i)] = raw[k];
                        k += 1;
                    }
                }
                x.into_vec().into()
            }
            Parametrization::NegativeDefinite { m } => {
                let l = Matrix::new(m, m, raw.to_vec()).expect("raw output is finite");
                l.matmul(&l.transpose()).shift_diagonal(NEGDEF_SHIFT).scale(-1.0).into_vec().into()
            }
            Parametrization::RankTwo { m } => {
                let (w1, w2) = (Vector::from(&raw[..m]), Vector::from(&raw[m..]));
                w1.outer(&w1).add(&w2.outer(&w2)).into_vec().into()
            }
        }
    }

    /// Chain rule from `dL/dX` (flattened) to `dL/d raw`.
    pub fn pullback(self, raw: &Vector, grad: &Vector) -> Vector {
        match self {
            Parametrization::Identity => grad.clone(),
            Parametrization::SymmetricUpper { m } => {
                let mut out = Vec::with_capacity(m * (m + 1) / 2);
                for i in 0..m {
                    for j in i..m {
                        out.push(if i == j {
                            grad[i * m + i]
                        } else {
                            grad[i * m + j] + grad[j * m + i]
                        });
                    }
                }
                out.into()
            }
            Parametrization::NegativeDefinite { m } => {
                let g = Matrix::new(m, m, grad.to_vec()).expect("finite gradient");
                let l = Matrix::new(m, m, raw.to_vec()).expect("finite output");
                g.add(&g.transpose()).matmul(&l).scale(-1.0).into_vec().into()
            }
            Parametrization::RankTwo { m } => {
                let g = Matrix::new(m, m, grad.to_vec()).expect("finite gradient");
                let gs = g.add(&g.transpose());
                let mut out = gs.matvec(&raw[..m]).into_vec();
                out.extend(gs.matvec(&raw[m..]).iter());
                out.into()
            }
        }
    }
}

/// The node of an experiment, erased to a single type.
#[derive(Debug, Clone, PartialEq)]
pub enum NodeKind {
    Sphere(SphereProjection),
    Ot(EntropicOt),
    Eigen(EigenDecomposition),
}

/// Per-element results of one pass over the batch.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub loss: f64,
    /// Gradient of the loss with respect to the MLP parameters, using the requested mode.
    pub param_grad: Vec<f64>,
    /// Parameter gradient using the other mode, when requested.
    pub other_param_grad: Option<Vec<f64>>,
    pub reports: Vec<GradientReport>,
    pub outputs: Vec<Vector>,
}

enum LossKind {
    Mse,
    Align { dim: usize },
}

/// Everything that stays fixed during one run: node, parametrization and the
/// training batch.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub config: ExperimentConfig,
    pub node: NodeKind,
    pub parametrization: Parametrization,
    pub inputs: Vec<Vector>,
    pub targets: Vec<Vector>,
}

impl Pipeline {
    /// Node and parametrization for `config`, without data.
    pub fn structure(config: &ExperimentConfig) -> (NodeKind, Parametrization) {
        let m = config.m;
        match config.problem {
            Problem::Sphere => (NodeKind::Sphere(SphereProjection::new(m)), Parametrization::Identity),
            Problem::Ot => {
                let node = EntropicOt::uniform(m, config.n, config.gamma).with_tol(config.sinkhorn_tol);
                (NodeKind::Ot(node), Parametrization::Identity)
            }
            Problem::Eigen => {
                let (target, param) = match config.eigen_setting {
                    EigenSetting::All => (EigenTarget::All, Parametrization::SymmetricUpper { m }),
                    EigenSetting::Largest => (EigenTarget::Largest, Parametrization::SymmetricUpper { m }),
                    EigenSetting::LargestNegdef => (EigenTarget::Largest, Parametrization::NegativeDefinite { m }),
                    EigenSetting::LargestRank2 => (EigenTarget::Largest, Parametrization::RankTwo { m }),
                };
                (NodeKind::Eigen(EigenDecomposition::new(m, target)), param)
            }
        }
    }

    /// Samples the batch for run `run`.
    pub fn new(config: &ExperimentConfig, run: usize) -> Result<Self, TrainError> {
        config.validate()?;
        let (node, parametrization) = Self::structure(config);
        let mut data_rng = run_rng(config, run).substream(0);
        let inputs = (0..config.batch_size)
            .map(|_| data_rng.gaussian_vector(config.d))
            .collect();
        let targets = generate_targets(config, &node, parametrization, &mut data_rng)
            .map_err(|(index, source)| TrainError::DegenerateTarget { run, index, source })?;
        Ok(Pipeline {
            config: config.clone(),
            node,
            parametrization,
            inputs,
            targets,
        })
    }

    pub fn mlp_output_dim(&self) -> usize {
        self.parametrization.raw_len(self.node_input_len())
    }

    pub fn node_input_len(&self) -> usize {
        match &self.node {
            NodeKind::Sphere(n) => n.input_len(),
            NodeKind::Ot(n) => n.input_len(),
            NodeKind::Eigen(n) => n.input_len(),
        }
    }

    pub fn init_mlp(&self, run: usize) -> Mlp {
        let mut rng = run_rng(&self.config, run).substream(1);
        Mlp::init(self.config.d, self.config.hidden, self.mlp_output_dim(), &mut rng)
    }

    fn loss_kind(&self) -> LossKind {
        match &self.node {
            NodeKind::Eigen(n) => LossKind::Align { dim: n.m },
            _ => LossKind::Mse,
        }
    }

    /// Forward and backward pass over the whole batch.
    ///
    /// Errors carry the batch element; the caller adds run and iteration.
    pub fn evaluate(&self, mlp: &Mlp, mode: GradMode, with_other: bool) -> Result<Evaluation, (usize, NodeError)> {
        match &self.node {
            NodeKind::Sphere(n) => self.evaluate_with(n, mlp, mode, with_other),
            NodeKind::Ot(n) => self.evaluate_with(n, mlp, mode, with_other),
            NodeKind::Eigen(n) => self.evaluate_with(n, mlp, mode, with_other),
        }
    }

    /// Loss only.
    pub fn loss(&self, mlp: &Mlp) -> Result<f64, (usize, NodeError)> {
        match &self.node {
            NodeKind::Sphere(n) => self.forward_with(n, mlp).map(|f| f.0),
            NodeKind::Ot(n) => self.forward_with(n, mlp).map(|f| f.0),
            NodeKind::Eigen(n) => self.forward_with(n, mlp).map(|f| f.0),
        }
    }

    #[allow(clippy::type_complexity)]
    fn forward_with<N: DeclarativeNode>(
        &self,
        node: &N,
        mlp: &Mlp,
    ) -> Result<(f64, Vec<Vector>, Vec<(Vector, MlpCache, Vector, N::Solution)>), (usize, NodeError)> {
        let mut states = Vec::with_capacity(self.inputs.len());
        let mut outputs = Vec::with_capacity(self.inputs.len());
        for (b, z) in self.inputs.iter().enumerate() {
            let (raw, cache) = mlp.forward(z);
            let x = self.parametrization.apply(&raw);
            let sol = node.forward(&x).map_err(|e| (b, e))?;
            outputs.push(node.output(&sol));
            states.push((raw, cache, x, sol));
        }
        let (loss, _) = self.compute_loss(&outputs);
        Ok((loss, outputs, states))
    }

    fn compute_loss(&self, outputs: &[Vector]) -> (f64, Vec<Vector>) {
        match self.loss_kind() {
            LossKind::Mse => loss_mse(outputs, &self.targets),
            LossKind::Align { dim } => loss_eigen_align(outputs, &self.targets, dim),
        }
    }

    fn evaluate_with<N: DeclarativeNode>(
        &self,
        node: &N,
        mlp: &Mlp,
        mode: GradMode,
        with_other: bool,
    ) -> Result<Evaluation, (usize, NodeError)> {
        let (_, outputs, states) = self.forward_with(node, mlp)?;
        let (loss, dl_dy) = self.compute_loss(&outputs);
        let mut param_grad = vec![0.0; mlp.num_params()];
        let mut other_grad = with_other.then(|| vec![0.0; mlp.num_params()]);
        let mut reports = Vec::with_capacity(states.len());
        for (b, ((raw, cache, x, sol), v)) in states.iter().zip(&dl_dy).enumerate() {
            let report = nodes::gradient_report_at(node, x, sol, v).map_err(|e| (b, e))?;
            let (chosen, other) = match mode {
                GradMode::Exact => (&report.g_exact, &report.g_approx),
                GradMode::Approx => (&report.g_approx, &report.g_exact),
            };
            mlp.backward_into(cache, &self.parametrization.pullback(raw, chosen), &mut param_grad);
            if let Some(og) = other_grad.as_mut() {
                mlp.backward_into(cache, &self.parametrization.pullback(raw, other), og);
            }
            reports.push(report);
        }
        Ok(Evaluation {
            loss,
            param_grad,
            other_param_grad: other_grad,
            reports,
            outputs,
        })
    }
}

fn run_rng(config: &ExperimentConfig, run: usize) -> Rng {
    Rng::new(config.seed).substream(run as u64)
}

/// Random training targets for the configured problem.
///
/// Sphere targets are uniform unit vectors, OT targets are Sinkhorn plans for
/// Gaussian cost matrices, and eigen targets are eigenvectors of matrices drawn
/// through the same parametrization as the network output. A target matrix
/// with a repeated eigenvalue is redrawn once. The error carries the index of
/// the offending batch element.
pub fn generate_targets(
    config: &ExperimentConfig,
    node: &NodeKind,
    parametrization: Parametrization,
    rng: &mut Rng,
) -> Result<Vec<Vector>, (usize, NodeError)> {
    (0..config.batch_size)
        .map(|b| match node {
            NodeKind::Sphere(n) => Ok(rng.unit_vector(n.dim)),
            NodeKind::Ot(n) => {
                let cost = Vector::from(rng.gaussian_matrix(n.m, n.n).into_vec());
                n.forward(&cost).map(|plan| n.output(&plan)).map_err(|e| (b, e))
            }
            NodeKind::Eigen(n) => {
                let draw = |rng: &mut Rng| {
                    let raw = rng.gaussian_vector(parametrization.raw_len(n.input_len()));
                    n.forward(&parametrization.apply(&raw)).map(|sol| n.output(&sol))
                };
                match draw(rng) {
                    Ok(y) => Ok(y),
                    Err(NodeError::Degenerate { .. }) => draw(rng).map_err(|e| (b, e)),
                    Err(e) => Err((b, e)),
                }
            }
        })
        .collect()
}

fn record_for(run: usize, iteration: usize, eval: &Evaluation) -> CurveRecord {
    let sims: Vec<f64> = eval.reports.iter().filter_map(|r| r.cos_sim).collect();
    let (mean, min) = if sims.is_empty() {
        (0.0, 0.0)
    } else {
        (
            sims.iter().sum::<f64>() / sims.len() as f64,
            sims.iter().cloned().fold(f64::INFINITY, f64::min),
        )
    };
    let descent = eval.reports.iter().filter(|r| r.descent).count();
    CurveRecord {
        run,
        iteration,
        loss: eval.loss,
        cos_sim_mean: mean,
        cos_sim_min: min,
        descent_fraction: descent as f64 / eval.reports.len() as f64,
        theta_cos_sim: eval
            .other_param_grad
            .as_ref()
            .and_then(|o| cosine_similarity(&eval.param_grad, o)),
    }
}

/// Outcome of a single run: its learning curve and final network, or the
/// records collected before a failure.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<CurveRecord>,
    pub model: Mlp,
}

#[derive(Debug, Clone)]
pub struct RunFailure {
    pub records: Vec<CurveRecord>,
    pub error: TrainError,
}

pub fn run_single(config: &ExperimentConfig, run: usize) -> Result<RunOutput, RunFailure> {
    let fail = |records, error| RunFailure { records, error };
    let pipeline = Pipeline::new(config, run).map_err(|e| fail(Vec::new(), e))?;
    let mut mlp = pipeline.init_mlp(run);
    let mut optimizer = AdamWState::new(mlp.num_params(), config.optimizer);
    let mut records = Vec::with_capacity(config.iterations);
    for iteration in 0..config.iterations {
        let eval = match pipeline.evaluate(&mlp, config.grad_mode, config.record_theta_similarity) {
            Ok(eval) => eval,
            Err((element, source)) => {
                let error = TrainError::Node {
                    run,
                    iteration,
                    element,
                    source,
                };
                return Err(fail(records, error));
            }
        };
        if !eval.loss.is_finite() {
            return Err(fail(records, TrainError::NonFinite { run, iteration, what: "loss" }));
        }
        records.push(record_for(run, iteration, &eval));
        optimizer.step(mlp.params_mut(), &eval.param_grad);
        if mlp.params().iter().any(|p| !p.is_finite()) {
            return Err(fail(records, TrainError::NonFinite { run, iteration, what: "parameter" }));
        }
    }
    Ok(RunOutput { records, model: mlp })
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    /// Ordered by run, then iteration.
    pub records: Vec<CurveRecord>,
    pub models: Vec<Mlp>,
}

#[derive(Debug, Clone)]
pub struct ExperimentFailure {
    /// Records of every run before the failing one plus the failing run's prefix.
    pub records: Vec<CurveRecord>,
    pub error: TrainError,
}

/// Runs `config.repeats` independent runs. Runs may execute in parallel; the
/// output order is always by run index.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput, ExperimentFailure> {
    if let Err(error) = config.validate() {
        return Err(ExperimentFailure {
            records: Vec::new(),
            error,
        });
    }
    let outcomes: Vec<_> = (0..config.repeats)
        .into_par_iter()
        .map(|run| run_single(config, run))
        .collect();
    let mut records = Vec::with_capacity(config.repeats * config.iterations);
    let mut models = Vec::with_capacity(config.repeats);
    for outcome in outcomes {
        match outcome {
            Ok(out) => {
                records.extend(out.records);
                models.push(out.model);
            }
            Err(failure) => {
                records.extend(failure.records);
                return Err(ExperimentFailure {
                    records,
                    error: failure.error,
                });
            }
        }
    }
    Ok(ExperimentOutput { records, models })
}
