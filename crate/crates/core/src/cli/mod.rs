//! `declgrad` command line: `verify`, `gradcheck`, `train` and `plot`.
//!
//! Every flag except the plot inputs can also come from a flat JSON object
//! passed with `--config`, whose keys are the flag names without the leading
//! dashes. Flags override the file. The seed falls back to `DECLGRAD_SEED`,
//! then to 0. Exit codes: 0 success, 1 check or experiment failure, 2 usage or
//! parse error.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::nodes::gradcheck::{self, GradcheckReport, InstanceError};
use crate::theory::suite::{self, SuiteConfig};
use crate::train::{self, CurveRecord, EigenSetting, ExperimentConfig, GradMode, Problem};

pub mod results;
pub mod svg;

pub const SEED_ENV: &str = "DECLGRAD_SEED";

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "declgrad", version, about = "Exact and constraint-ignoring gradients of declarative nodes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the descent-gap theory against numeric and Monte-Carlo oracles.
    Verify(VerifyArgs),
    /// Compare exact node gradients with central finite differences.
    Gradcheck(GradcheckArgs),
    /// Train an MLP through a node and write learning curves as CSV.
    Train(TrainArgs),
    /// Render results CSVs as a two-panel SVG.
    Plot(PlotArgs),
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    /// Monte-Carlo samples per instance.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Run only checks whose name contains this string.
    #[arg(long)]
    pub filter: Option<String>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    /// Check a single node (default: all three).
    #[arg(long, value_enum)]
    pub problem: Option<Problem>,
    /// Problem size (default: sphere 10, transport 4×4, eigen 5).
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Feed the eigen node a matrix with a repeated eigenvalue.
    #[arg(long)]
    pub force_degenerate: bool,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ModeArg {
    Exact,
    Approx,
    Both,
}

impl ModeArg {
    fn modes(self) -> Vec<GradMode> {
        match self {
            ModeArg::Exact => vec![GradMode::Exact],
            ModeArg::Approx => vec![GradMode::Approx],
            ModeArg::Both => vec![GradMode::Exact, GradMode::Approx],
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub problem: Option<Problem>,
    /// Eigen experiment variant.
    #[arg(long, value_enum)]
    pub setting: Option<EigenSetting>,
    /// Input dimension (5 under, 100 over parameterized).
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub repeats: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Results CSVs written by `train`.
    pub inputs: Vec<PathBuf>,
    /// Output SVG path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Logarithmic loss axis.
    #[arg(long)]
    pub log_loss: bool,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Values read from `--config`.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct FileConfig {
    seed: Option<u64>,
    samples: Option<usize>,
    filter: Option<String>,
    problem: Option<Problem>,
    setting: Option<EigenSetting>,
    d: Option<usize>,
    m: Option<usize>,
    gamma: Option<f64>,
    mode: Option<ModeArg>,
    iters: Option<usize>,
    repeats: Option<usize>,
    out: Option<PathBuf>,
    log_loss: Option<bool>,
    force_degenerate: Option<bool>,
    inputs: Option<Vec<PathBuf>>,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(#[from] io::Error),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Io(_) => EXIT_FAILURE,
        }
    }
}

fn usage<T>(msg: impl Into<String>) -> Result<T, CliError> {
    Err(CliError::Usage(msg.into()))
}

fn load_config(path: Option<&Path>, allowed: &[&str]) -> Result<FileConfig, CliError> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let value: Value =
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let Value::Object(map) = &value else {
        return usage(format!("{}: expected a JSON object", path.display()));
    };
    if let Some(key) = map.keys().find(|k| !allowed.contains(&k.as_str())) {
        return usage(format!("{}: unknown key {key:?}", path.display()));
    }
    serde_json::from_value(value).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn resolve_seed(flag: Option<u64>, file: Option<u64>, env_seed: Option<&str>) -> Result<u64, CliError> {
    if let Some(seed) = flag.or(file) {
        return Ok(seed);
    }
    match env_seed {
        Some(s) => s
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("{SEED_ENV}={s:?} is not a non-negative integer"))),
        None => Ok(0),
    }
}

fn echo_config(out: &mut dyn Write, command: &str, mut fields: Map<String, Value>) -> io::Result<()> {
    fields.insert("command".into(), Value::String(command.into()));
    writeln!(out, "config: {}", Value::Object(fields))
}

/// Runs the command line with explicit argument list, seed fallback and
/// output streams. Returns the process exit code.
pub fn run<I, T>(args: I, env_seed: Option<&str>, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let rendered = e.render().to_string();
            let _ = if e.use_stderr() {
                write!(err, "{rendered}")
            } else {
                write!(out, "{rendered}")
            };
            return code;
        }
    };
    let result = match cli.command {
        Command::Verify(a) => verify(a, env_seed, out),
        Command::Gradcheck(a) => gradcheck_cmd(a, env_seed, out),
        Command::Train(a) => train_cmd(a, env_seed, out, err),
        Command::Plot(a) => plot(a, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

/// Entry point for the binary: process arguments, environment and stdio.
pub fn main() -> i32 {
    let env_seed = std::env::var(SEED_ENV).ok();
    let stdout = io::stdout();
    let stderr = io::stderr();
    run(std::env::args_os(), env_seed.as_deref(), &mut stdout.lock(), &mut stderr.lock())
}

fn verify(args: VerifyArgs, env_seed: Option<&str>, out: &mut dyn Write) -> Result<i32, CliError> {
    let file = load_config(args.config.as_deref(), &["seed", "samples", "filter", "m"])?;
    let defaults = SuiteConfig::default();
    let config = SuiteConfig {
        m: args.m.or(file.m).unwrap_or(defaults.m),
        samples: args.samples.or(file.samples).unwrap_or(defaults.samples),
        seed: resolve_seed(args.seed, file.seed, env_seed)?,
        ..defaults
    };
    let filter = args.filter.or(file.filter);
    if config.samples < 2 {
        return usage("--samples must be at least 2");
    }
    if config.m < 2 {
        return usage("--m must be at least 2");
    }
    let selected: Vec<&str> = suite::CHECKS
        .iter()
        .copied()
        .filter(|n| filter.as_deref().is_none_or(|f| n.contains(f)))
        .collect();
    if selected.is_empty() {
        return usage(format!(
            "--filter {:?} matches no check (available: {})",
            filter.unwrap_or_default(),
            suite::CHECKS.join(", ")
        ));
    }
    echo_config(
        out,
        "verify",
        json!({"seed": config.seed, "samples": config.samples, "m": config.m, "filter": filter})
            .as_object()
            .cloned()
            .unwrap_or_default(),
    )?;
    let mut failed = 0;
    for name in &selected {
        let outcome = suite::run_check(name, &config);
        if !outcome.passed {
            failed += 1;
        }
        writeln!(out, "{outcome}")?;
    }
    writeln!(out, "verify: {} of {} checks passed", selected.len() - failed, selected.len())?;
    Ok(if failed == 0 { EXIT_OK } else { EXIT_FAILURE })
}

const GRADCHECK_INSTANCES: usize = 5;

fn report_line(report: &GradcheckReport) -> String {
    let verdict = if report.passed { "PASS" } else { "FAIL" };
    let tangency = report
        .tangency
        .map(|t| format!(", max |A·Dy|={t:.2e} (tol {:.0e})", gradcheck::OT_TANGENCY_TOL))
        .unwrap_or_default();
    format!(
        "{}: max rel err={:.2e} (tol {:.0e}){tangency} over {} instances, {verdict}",
        report.node, report.max_rel_err, report.tol, report.instances
    )
}

fn gradcheck_cmd(args: GradcheckArgs, env_seed: Option<&str>, out: &mut dyn Write) -> Result<i32, CliError> {
    let file = load_config(
        args.config.as_deref(),
        &["seed", "problem", "m", "gamma", "force-degenerate"],
    )?;
    let seed = resolve_seed(args.seed, file.seed, env_seed)?;
    let problem = args.problem.or(file.problem);
    let m = args.m.or(file.m);
    let gamma = args.gamma.or(file.gamma).unwrap_or(1.0);
    let force_degenerate = args.force_degenerate || file.force_degenerate.unwrap_or(false);
    if m.is_some_and(|m| m < 2) {
        return usage("--m must be at least 2");
    }
    if !(gamma > 0.0 && gamma.is_finite()) {
        return usage("--gamma must be positive");
    }
    echo_config(
        out,
        "gradcheck",
        json!({"seed": seed, "problem": problem, "m": m, "gamma": gamma, "force-degenerate": force_degenerate})
            .as_object()
            .cloned()
            .unwrap_or_default(),
    )?;
    let problems = problem.map_or(vec![Problem::Sphere, Problem::Ot, Problem::Eigen], |p| vec![p]);
    let mut all_passed = true;
    for p in problems {
        let result: Result<GradcheckReport, InstanceError> = match p {
            Problem::Sphere => gradcheck::check_sphere(m.unwrap_or(10), seed, GRADCHECK_INSTANCES),
            Problem::Ot => {
                let k = m.unwrap_or(4);
                gradcheck::check_ot(k, k, gamma, seed, GRADCHECK_INSTANCES)
            }
            Problem::Eigen => gradcheck::check_eigen(m.unwrap_or(5), seed, GRADCHECK_INSTANCES, force_degenerate),
        };
        match result {
            Ok(report) => {
                all_passed &= report.passed;
                writeln!(out, "{}", report_line(&report))?;
            }
            Err(e) => {
                all_passed = false;
                writeln!(out, "{e}, FAIL")?;
            }
        }
    }
    Ok(if all_passed { EXIT_OK } else { EXIT_FAILURE })
}

fn results_file_name(config: &ExperimentConfig) -> String {
    let problem = match config.problem {
        Problem::Eigen => format!("eigen_{}", config.eigen_setting.name()),
        p => p.name().to_string(),
    };
    format!("{problem}_d{}_{}.csv", config.d, config.grad_mode.name())
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

fn summarize(out: &mut dyn Write, records: &[CurveRecord], repeats: usize) -> io::Result<()> {
    for run in 0..repeats {
        let rows: Vec<&CurveRecord> = records.iter().filter(|r| r.run == run).collect();
        let (Some(first), Some(last)) = (rows.first(), rows.last()) else {
            continue;
        };
        writeln!(
            out,
            "  run {run}: loss {} -> {} over {} iterations, mean cos_sim={}, mean descent_fraction={}",
            results::fmt_sig9(first.loss),
            results::fmt_sig9(last.loss),
            rows.len(),
            results::fmt_sig9(mean(rows.iter().map(|r| r.cos_sim_mean))),
            results::fmt_sig9(mean(rows.iter().map(|r| r.descent_fraction))),
        )?;
    }
    writeln!(
        out,
        "  all runs: mean cos_sim={}, mean descent_fraction={}",
        results::fmt_sig9(mean(records.iter().map(|r| r.cos_sim_mean))),
        results::fmt_sig9(mean(records.iter().map(|r| r.descent_fraction))),
    )
}

fn train_cmd(args: TrainArgs, env_seed: Option<&str>, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, CliError> {
    let file = load_config(
        args.config.as_deref(),
        &["seed", "problem", "setting", "d", "m", "gamma", "mode", "iters", "repeats", "out"],
    )?;
    let defaults = ExperimentConfig::default();
    let m = args.m.or(file.m).unwrap_or(defaults.m);
    let base = ExperimentConfig {
        problem: args.problem.or(file.problem).unwrap_or(defaults.problem),
        eigen_setting: args.setting.or(file.setting).unwrap_or(defaults.eigen_setting),
        d: args.d.or(file.d).unwrap_or(defaults.d),
        m,
        n: m,
        iterations: args.iters.or(file.iters).unwrap_or(defaults.iterations),
        repeats: args.repeats.or(file.repeats).unwrap_or(defaults.repeats),
        seed: resolve_seed(args.seed, file.seed, env_seed)?,
        gamma: args.gamma.or(file.gamma).unwrap_or(defaults.gamma),
        ..defaults
    };
    let mode = args.mode.or(file.mode).unwrap_or(ModeArg::Both);
    let out_dir = args.out.or(file.out).unwrap_or_else(|| PathBuf::from("."));
    base.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    echo_config(
        out,
        "train",
        json!({
            "seed": base.seed, "problem": base.problem, "setting": base.eigen_setting, "d": base.d,
            "m": base.m, "gamma": base.gamma, "mode": mode, "iters": base.iterations,
            "repeats": base.repeats, "out": out_dir, "batch-size": base.batch_size,
            "hidden": base.hidden, "lr": base.optimizer.lr, "weight-decay": base.optimizer.weight_decay,
        })
        .as_object()
        .cloned()
        .unwrap_or_default(),
    )?;
    fs::create_dir_all(&out_dir)?;
    let label = base.parameterization_label().map(|l| format!(" ({l})")).unwrap_or_default();
    let mut code = EXIT_OK;
    for grad_mode in mode.modes() {
        let config = ExperimentConfig { grad_mode, ..base.clone() };
        let path = out_dir.join(results_file_name(&config));
        let (records, failure) = match train::run_experiment(&config) {
            Ok(output) => (output.records, None),
            Err(failure) => (failure.records, Some(failure.error)),
        };
        let file = fs::File::create(&path)?;
        results::write_results(
            io::BufWriter::new(file),
            &records,
            grad_mode,
            config.problem,
            config.seed,
            failure.is_some(),
        )
        .map_err(|e| io::Error::other(e.to_string()))?;
        writeln!(
            out,
            "train {} d={}{label}, mode={}: wrote {}",
            config.problem.name(),
            config.d,
            grad_mode.name(),
            path.display()
        )?;
        summarize(out, &records, config.repeats)?;
        if let Some(e) = failure {
            writeln!(err, "error: mode {}: {e}", grad_mode.name())?;
            writeln!(out, "  aborted: {e}")?;
            code = EXIT_FAILURE;
        }
    }
    Ok(code)
}

fn plot(args: PlotArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let file = load_config(args.config.as_deref(), &["out", "log-loss", "inputs"])?;
    let inputs = if args.inputs.is_empty() {
        file.inputs.unwrap_or_default()
    } else {
        args.inputs
    };
    if inputs.is_empty() {
        return usage("plot needs at least one input CSV");
    }
    let out_path = args.out.or(file.out).unwrap_or_else(|| PathBuf::from("curves.svg"));
    let log_loss = args.log_loss || file.log_loss.unwrap_or(false);
    echo_config(
        out,
        "plot",
        json!({"inputs": inputs, "out": out_path, "log-loss": log_loss})
            .as_object()
            .cloned()
            .unwrap_or_default(),
    )?;
    let mut rows = Vec::new();
    for path in &inputs {
        let f = fs::File::open(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let mut parsed =
            results::read_results(io::BufReader::new(f)).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        rows.append(&mut parsed);
    }
    fs::write(&out_path, svg::render(&rows, log_loss))?;
    writeln!(out, "plot: {} rows -> {}", rows.len(), out_path.display())?;
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_capture(args: &[&str], env_seed: Option<&str>) -> (i32, String, String) {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let mut full = vec!["declgrad"];
        full.extend_from_slice(args);
        let code = run(full, env_seed, &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run_capture(&[], None).0, EXIT_USAGE);
        assert_eq!(run_capture(&["frobnicate"], None).0, EXIT_USAGE);
        assert_eq!(run_capture(&["verify", "--bogus"], None).0, EXIT_USAGE);
        assert_eq!(run_capture(&["train", "--mode", "sideways"], None).0, EXIT_USAGE);
        assert_eq!(run_capture(&["verify", "--samples", "1"], None).0, EXIT_USAGE);
        assert_eq!(run_capture(&["verify", "--filter", "nothing"], None).0, EXIT_USAGE);
        assert_eq!(run_capture(&["plot"], None).0, EXIT_USAGE);
    }

    #[test]
    fn help_exits_0() {
        let (code, out, _) = run_capture(&["--help"], None);
        assert_eq!(code, EXIT_OK);
        assert!(out.contains("gradcheck"));
    }

    #[test]
    fn seed_precedence() {
        assert_eq!(resolve_seed(Some(1), Some(2), Some("3")).unwrap(), 1);
        assert_eq!(resolve_seed(None, Some(2), Some("3")).unwrap(), 2);
        assert_eq!(resolve_seed(None, None, Some("3")).unwrap(), 3);
        assert_eq!(resolve_seed(None, None, None).unwrap(), 0);
        assert!(resolve_seed(None, None, Some("x")).is_err());
        let (code, out, _) = run_capture(&["verify", "--filter", "norm-sign"], Some("42"));
        assert_eq!(code, EXIT_OK);
        assert!(out.contains(r#""seed":42"#));
        assert_eq!(run_capture(&["verify", "--filter", "norm-sign"], Some("-1")).0, EXIT_USAGE);
    }

    #[test]
    fn config_file_merging() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        fs::write(&path, r#"{"seed": 9, "filter": "norm-sign", "samples": 100}"#).unwrap();
        let p = path.to_str().unwrap();
        let (code, out, _) = run_capture(&["verify", "--config", p], None);
        assert_eq!(code, EXIT_OK);
        assert!(out.contains(r#""seed":9"#) && out.contains(r#""samples":100"#));
        let (_, out, _) = run_capture(&["verify", "--config", p, "--seed", "4"], None);
        assert!(out.contains(r#""seed":4"#));

        fs::write(&path, r#"{"seed": 9, "colour": "red"}"#).unwrap();
        let (code, _, err) = run_capture(&["verify", "--config", p], None);
        assert_eq!(code, EXIT_USAGE);
        assert!(err.contains("colour"));

        fs::write(&path, r#"{"iters": 3}"#).unwrap();
        assert_eq!(run_capture(&["verify", "--config", p], None).0, EXIT_USAGE);

        fs::write(&path, "[1, 2]").unwrap();
        assert_eq!(run_capture(&["verify", "--config", p], None).0, EXIT_USAGE);
        assert_eq!(run_capture(&["verify", "--config", "/nonexistent.json"], None).0, EXIT_USAGE);
    }

    #[test]
    fn verify_filter_output() {
        let (code, out, _) = run_capture(&["verify", "--filter", "norm-sign"], None);
        assert_eq!(code, EXIT_OK);
        let checks: Vec<&str> = out.lines().filter(|l| l.ends_with("PASS") || l.ends_with("FAIL")).collect();
        assert_eq!(checks.len(), 1);
        assert!(checks[0].starts_with("norm-sign: "));
    }

    #[test]
    fn gradcheck_degenerate_fails() {
        let (code, out, _) = run_capture(&["gradcheck", "--problem", "eigen", "--force-degenerate"], None);
        assert_eq!(code, EXIT_FAILURE);
        assert!(out.contains("not simple") && out.contains("seed 0"), "{out}");
        let (code, out, _) = run_capture(&["gradcheck", "--problem", "sphere"], None);
        assert_eq!(code, EXIT_OK, "{out}");
    }

    #[test]
    fn train_then_plot() {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path().to_str().unwrap();
        let (code, out, _) = run_capture(
            &["train", "--problem", "sphere", "--iters", "5", "--repeats", "2", "--out", d],
            None,
        );
        assert_eq!(code, EXIT_OK, "{out}");
        assert!(out.contains("under parameterized"));
        let exact = dir.path().join("sphere_d5_exact.csv");
        let approx = dir.path().join("sphere_d5_approx.csv");
        let text = fs::read_to_string(&approx).unwrap();
        assert_eq!(text.lines().count(), 1 + 2 * 5);
        let svg = dir.path().join("p.svg");
        let args = ["plot", exact.to_str().unwrap(), approx.to_str().unwrap(), "--out", svg.to_str().unwrap()];
        assert_eq!(run_capture(&args, None).0, EXIT_OK);
        assert!(fs::read_to_string(&svg).unwrap().contains("<svg"));
    }

    #[test]
    fn plot_rejects_malformed_and_empty() {
        let dir = tempfile::tempdir().unwrap();
        let empty = dir.path().join("empty.csv");
        fs::write(&empty, "").unwrap();
        let svg = dir.path().join("p.svg");
        let (code, _, _) = run_capture(&["plot", empty.to_str().unwrap(), "--out", svg.to_str().unwrap()], None);
        assert_eq!(code, EXIT_USAGE);
        let bad = dir.path().join("bad.csv");
        fs::write(&bad, format!("{}\n0,0,1,1,1,1,exact,sphere,0\n0,1,x,1,1,1,exact,sphere,0\n", results::HEADER.join(","))).unwrap();
        let (code, _, err) = run_capture(&["plot", bad.to_str().unwrap(), "--out", svg.to_str().unwrap()], None);
        assert_eq!(code, EXIT_USAGE);
        assert!(err.contains("row 3"), "{err}");
    }
}
