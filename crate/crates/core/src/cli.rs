//! `nmchoice` command line front end.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::bbc::{estimate_kernel, BbcModel, MeanResponseTimes, RtShape, TabularBbc};
use crate::chain::{build_transition, ExplorationMatrix, NicenessReport, TransitionMatrix};
use crate::dist;
use crate::error::{Error, ErrorClass, Result};
use crate::io::{self, DecompositionJson, EstimateJson, KernelFile, MatrixFile, OuParamsFile, RtFile};
use crate::kernel::{StochasticChoiceKernel, DEFAULT_TOL};
use crate::rng::DEFAULT_SEED;
use crate::simulation::{
    conjecture_experiment, estimate_choice_distribution, run_deadline_trial, ConjectureOptions,
    DeadlineConvention, ProcessSpec,
};
use crate::stopping::{self, conditional_iteration_time, StoppingSpec};

#[derive(Debug, Parser)]
#[command(name = "nmchoice", version, about = "Metropolis choice processes: kernels, chains, stopping and simulation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Write results here instead of standard output.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    /// Error report format on standard error.
    #[arg(long, global = true, value_enum, default_value_t = ErrorFormat::Text)]
    pub errors: ErrorFormat,
    /// Significant digits for emitted numbers.
    #[arg(long, global = true, default_value_t = 12)]
    pub digits: usize,
    /// Worker threads for Monte Carlo; results do not depend on it.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ErrorFormat {
    Text,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Positivity, unbiasedness and transitivity of a kernel, plus its decomposition.
    CheckKernel {
        kernel: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
    },
    /// Transition matrix, stationary law, balance diagnostics and stopped choice.
    Analyze(ModelArgs),
    /// Monte Carlo choice frequencies against the analytic values.
    Simulate(ModelArgs),
    /// Estimate the kernel and response times of an OU comparison model.
    BbcEstimate {
        bbc: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        #[arg(long, env = "NM_SEED", default_value_t = DEFAULT_SEED)]
        seed: u64,
    },
    /// Deadline sweep against the time-weighted stationary law.
    Conjecture(ModelArgs),
    /// Eigenvalues of a reversible transition matrix.
    Spectral {
        #[command(flatten)]
        model: ModelArgs,
        /// Transition matrix file; overrides --kernel/--q.
        #[arg(long)]
        transition: Option<PathBuf>,
        /// Distribution used for symmetrization; defaults to the stationary law.
        #[arg(long)]
        pi: Option<PathBuf>,
    },
}

#[derive(Debug, Args, Default, Clone)]
pub struct ModelArgs {
    /// Experiment config JSON; individual flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Kernel JSON.
    #[arg(long)]
    pub kernel: Option<String>,
    /// Exploration matrix JSON, or `uniform`.
    #[arg(long)]
    pub q: Option<String>,
    /// Initial distribution: `uniform`, `point:K`, or a JSON array file.
    #[arg(long)]
    pub mu: Option<String>,
    /// Mean response times: `ones` or a JSON file.
    #[arg(long)]
    pub rt: Option<String>,
    /// Response-time law of tabular comparisons.
    #[arg(long, value_enum)]
    pub rt_shape: Option<RtShapeArg>,
    /// OU comparison model JSON; replaces the tabular model.
    #[arg(long)]
    pub bbc: Option<String>,
    /// `fixed:M`, `geometric:Z`, `poisson:L`, `custom:@file` or `deadline:T`.
    #[arg(long)]
    pub stopping: Option<String>,
    /// Comma separated clock deadlines.
    #[arg(long, value_delimiter = ',')]
    pub deadlines: Option<Vec<f64>>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long, env = "NM_SEED")]
    pub seed: Option<u64>,
    #[arg(long)]
    pub tol: Option<f64>,
    /// Let a comparison straddling the deadline finish before reading the incumbent.
    #[arg(long)]
    pub finish_comparison: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RtShapeArg {
    Constant,
    Exponential,
}

/// Inline or by-path component of an experiment config.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum Source<T> {
    Path(String),
    Inline(T),
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentConfig {
    kernel: Option<Source<KernelFile>>,
    q: Option<Source<MatrixFile>>,
    mu: Option<Source<Vec<f64>>>,
    rt: Option<Source<RtFile>>,
    rt_shape: Option<RtShapeArg>,
    bbc: Option<Source<OuParamsFile>>,
    stopping: Option<String>,
    deadlines: Option<Vec<f64>>,
    trials: Option<usize>,
    seed: Option<u64>,
}

fn resolve<T: for<'de> Deserialize<'de>>(src: Source<T>, base: &Path) -> Result<T> {
    match src {
        Source::Inline(v) => Ok(v),
        Source::Path(p) => io::read_json(&base.join(p)),
    }
}

/// Fully resolved model inputs.
struct Model {
    kernel: Option<StochasticChoiceKernel>,
    q: Option<(ExplorationMatrix, NicenessReport)>,
    mu: Option<Vec<f64>>,
    rt: Option<MeanResponseTimes>,
    rt_shape: RtShape,
    ou: Option<crate::bbc::OuParams>,
    stopping: Option<StoppingSpec>,
    deadlines: Option<Vec<f64>>,
    trials: usize,
    seed: u64,
    tol: f64,
    convention: DeadlineConvention,
}

impl Model {
    fn n(&self) -> Result<usize> {
        if let Some(k) = &self.kernel {
            return Ok(k.n());
        }
        if let Some(p) = &self.ou {
            return Ok(p.values.len());
        }
        if let Some((q, _)) = &self.q {
            return Ok(q.n());
        }
        Err(Error::Precondition("a kernel, OU model or exploration matrix is required".into()))
    }

    fn kernel(&self) -> Result<&StochasticChoiceKernel> {
        self.kernel.as_ref().ok_or_else(|| Error::Precondition("--kernel is required".into()))
    }

    fn q(&self) -> Result<&ExplorationMatrix> {
        self.q.as_ref().map(|q| &q.0).ok_or_else(|| Error::Precondition("--q is required".into()))
    }

    fn mu(&self) -> Result<Vec<f64>> {
        match &self.mu {
            Some(mu) => Ok(mu.clone()),
            None => Ok(dist::uniform(self.n()?)),
        }
    }

    fn rt(&self) -> Result<MeanResponseTimes> {
        match &self.rt {
            Some(rt) => Ok(rt.clone()),
            None => Ok(MeanResponseTimes::constant(self.n()?, 1.0)),
        }
    }

    fn stopping(&self) -> Result<&StoppingSpec> {
        self.stopping.as_ref().ok_or_else(|| Error::Precondition("--stopping is required".into()))
    }

    fn bbc(&self) -> Result<BbcModel> {
        if let Some(p) = &self.ou {
            return Ok(BbcModel::Ou(p.clone()));
        }
        Ok(BbcModel::Tabular(TabularBbc::new(self.kernel()?.clone(), &self.rt()?, self.rt_shape)?))
    }

    fn process(&self) -> Result<ProcessSpec> {
        ProcessSpec::new(self.mu()?, self.q()?.clone(), self.bbc()?)
    }
}

fn read_mu(arg: &str, n: Option<usize>) -> Result<Vec<f64>> {
    let need_n = || n.ok_or_else(|| Error::Precondition(format!("menu size unknown for --mu {arg}")));
    if arg == "uniform" {
        return Ok(dist::uniform(need_n()?));
    }
    if let Some(k) = arg.strip_prefix("point:") {
        let n = need_n()?;
        let k: usize = k.parse().map_err(|e| Error::Parse(format!("--mu {arg}: {e}")))?;
        if k >= n {
            return Err(Error::DimensionMismatch { expected: n, found: k + 1 });
        }
        return Ok(dist::point_mass(n, k));
    }
    io::read_json(Path::new(arg))
}

fn load_model(args: &ModelArgs) -> Result<Model> {
    let (cfg, base) = match &args.config {
        Some(path) => {
            let cfg: ExperimentConfig = io::read_json(path)?;
            (cfg, path.parent().map(Path::to_path_buf).unwrap_or_default())
        }
        None => (ExperimentConfig::default(), PathBuf::new()),
    };

    let kernel = match (&args.kernel, cfg.kernel) {
        (Some(p), _) => Some(io::read_json::<KernelFile>(Path::new(p))?.into_kernel()?),
        (None, Some(src)) => Some(resolve(src, &base)?.into_kernel()?),
        (None, None) => None,
    };
    let ou = match (&args.bbc, cfg.bbc) {
        (Some(p), _) => Some(io::read_json::<OuParamsFile>(Path::new(p))?.into_params()?),
        (None, Some(src)) => Some(resolve(src, &base)?.into_params()?),
        (None, None) => None,
    };
    let n_hint = kernel.as_ref().map(|k| k.n()).or(ou.as_ref().map(|p| p.values.len()));

    let uniform_q = || -> Result<(ExplorationMatrix, NicenessReport)> {
        let n = n_hint.ok_or_else(|| Error::Precondition("menu size unknown for a uniform q".into()))?;
        let q = ExplorationMatrix::uniform_off_diagonal(n);
        let r = q.niceness();
        Ok((q, r))
    };
    let q = match (args.q.as_deref(), cfg.q) {
        (Some("uniform"), _) => Some(uniform_q()?),
        (Some(p), _) => Some(io::read_json::<MatrixFile>(Path::new(p))?.into_exploration()?),
        (None, Some(Source::Path(p))) if p == "uniform" => Some(uniform_q()?),
        (None, Some(src)) => Some(resolve(src, &base)?.into_exploration()?),
        (None, None) => None,
    };
    let n = n_hint.or(q.as_ref().map(|q| q.0.n()));

    let mu = match (&args.mu, cfg.mu) {
        (Some(a), _) => Some(read_mu(a, n)?),
        (None, Some(Source::Path(p))) => Some(if p == "uniform" || p.starts_with("point:") {
            read_mu(&p, n)?
        } else {
            io::read_json(&base.join(p))?
        }),
        (None, Some(Source::Inline(v))) => Some(v),
        (None, None) => None,
    };
    let rt = match (&args.rt, cfg.rt) {
        (Some(a), _) if a == "ones" => n.map(|n| MeanResponseTimes::constant(n, 1.0)),
        (Some(p), _) => Some(io::read_json::<RtFile>(Path::new(p))?.into_mean_rt()?),
        (None, Some(Source::Path(p))) if p == "ones" => n.map(|n| MeanResponseTimes::constant(n, 1.0)),
        (None, Some(src)) => Some(resolve(src, &base)?.into_mean_rt()?),
        (None, None) => None,
    };
    let rt_shape = match args.rt_shape.or(cfg.rt_shape).unwrap_or(RtShapeArg::Constant) {
        RtShapeArg::Constant => RtShape::Constant,
        RtShapeArg::Exponential => RtShape::Exponential,
    };
    let stopping = match args.stopping.clone().or(cfg.stopping) {
        Some(s) => Some(StoppingSpec::parse(&s, |p| io::read_pmf(&base.join(p)))?),
        None => None,
    };
    Ok(Model {
        kernel,
        q,
        mu,
        rt,
        rt_shape,
        ou,
        stopping,
        deadlines: args.deadlines.clone().or(cfg.deadlines),
        trials: args.trials.or(cfg.trials).unwrap_or(100_000),
        seed: args.seed.or(cfg.seed).unwrap_or(DEFAULT_SEED),
        tol: args.tol.unwrap_or(DEFAULT_TOL),
        convention: if args.finish_comparison {
            DeadlineConvention::FinishComparison
        } else {
            DeadlineConvention::ReadAtDeadline
        },
    })
}

/// Command output: a JSON document and, when the command has one, a CSV table.
struct Emitted {
    json: Value,
    csv: Option<String>,
}

fn check_kernel(path: &Path, tol: f64) -> Result<Emitted> {
    let k = io::read_json::<KernelFile>(path)?.into_kernel()?;
    let transitivity = k.check_transitivity(tol);
    let decomposition = if k.is_positive() && transitivity.is_transitive {
        Some(DecompositionJson::from(&k.hastings_decompose(tol)?))
    } else {
        None
    };
    Ok(Emitted {
        json: json!({
            "n": k.n(),
            "positive": k.is_positive(),
            "unbiased": k.is_unbiased(tol),
            "transitivity": transitivity,
            "decomposition": decomposition,
        }),
        csv: None,
    })
}

fn analyze(args: &ModelArgs) -> Result<Emitted> {
    let model = load_model(args)?;
    let (q, niceness) = model.q.clone().ok_or_else(|| Error::Precondition("--q is required".into()))?;
    let kernel = model.kernel()?;
    let m = build_transition(&q, kernel)?;
    let stationary = m.stationary_report()?;
    let balance = m.balance_report(&stationary.pi)?;
    let mut doc = json!({
        "kernel": {
            "positive": kernel.is_positive(),
            "unbiased": kernel.is_unbiased(model.tol),
            "transitivity": kernel.check_transitivity(model.tol),
        },
        "niceness": niceness,
        "transition": MatrixFile::from_transition(&m),
        "stationary": stationary,
        "balance": balance,
    });
    if let Some(spec) = &model.stopping {
        let st = spec.iterations()?;
        let tau = conditional_iteration_time(&q, &model.rt()?)?;
        let result = stopping::stopped_choice(&m, &model.mu()?, &tau, st)?;
        doc["tau"] = json!(tau);
        doc["result"] = json!(result);
    }
    Ok(Emitted { json: doc, csv: None })
}

fn simulate(args: &ModelArgs, digits: usize) -> Result<Emitted> {
    let model = load_model(args)?;
    let spec = model.process()?;
    match model.stopping()? {
        StoppingSpec::Deadline(deadline) => {
            let n = spec.n();
            let choices = (0..model.trials)
                .into_par_iter()
                .map(|t| {
                    let mut r = crate::rng::stream(model.seed, crate::rng::domain::DEADLINE, t as u64);
                    run_deadline_trial(&spec, *deadline, model.convention, &mut r)
                })
                .collect::<Result<Vec<_>>>()?;
            let mut counts = vec![0usize; n];
            for c in choices {
                counts[c] += 1;
            }
            let freq: Vec<f64> = counts.iter().map(|&c| c as f64 / model.trials as f64).collect();
            let mut csv = String::from("alternative,empirical\n");
            for (i, p) in freq.iter().enumerate() {
                csv.push_str(&format!("{i},{}\n", io::format_sig(*p, digits)));
            }
            Ok(Emitted {
                json: json!({"deadline": deadline, "trials": model.trials, "empirical": freq}),
                csv: Some(csv),
            })
        }
        StoppingSpec::Iterations(st) => {
            let est = estimate_choice_distribution(&spec, st, model.trials, model.seed)?;
            let analytic = match (spec.bbc.exact_kernel(), spec.bbc.exact_mean_rt()) {
                (Some(k), Some(rt)) => {
                    let m = build_transition(&spec.q, k)?;
                    let tau = conditional_iteration_time(&spec.q, &rt)?;
                    Some(stopping::stopped_choice(&m, &spec.mu, &tau, st)?)
                }
                _ => None,
            };
            let mut csv = String::from("alternative,analytic,empirical,stderr,z\n");
            let mut rows = Vec::new();
            for i in 0..spec.n() {
                let a = analytic.as_ref().map(|r| r.p[i]);
                let e = est.frequencies[i];
                let se = est.frequency_stderr.as_ref().map(|s| s[i]);
                let z = match (a, se) {
                    (Some(a), Some(se)) if se > 0.0 => Some((e - a) / se),
                    _ => None,
                };
                let cell = |v: Option<f64>| v.map_or(String::new(), |v| io::format_sig(v, digits));
                csv.push_str(&format!("{i},{},{},{},{}\n", cell(a), cell(Some(e)), cell(se), cell(z)));
                rows.push(json!({"alternative": i, "analytic": a, "empirical": e, "stderr": se, "z": z}));
            }
            Ok(Emitted {
                json: json!({
                    "trials": model.trials,
                    "seed": model.seed,
                    "choice": rows,
                    "mean_decision_time": {
                        "analytic": analytic.as_ref().map(|r| r.mean_decision_time),
                        "empirical": est.mean_decision_time,
                        "stderr": est.mean_decision_time_stderr,
                    },
                }),
                csv: Some(csv),
            })
        }
    }
}

fn bbc_estimate(path: &Path, trials: usize, seed: u64, digits: usize) -> Result<Emitted> {
    let params = io::read_json::<OuParamsFile>(path)?.into_params()?;
    let est = estimate_kernel(&BbcModel::Ou(params), trials, seed)?;
    Ok(Emitted { json: json!(EstimateJson::from(&est)), csv: Some(io::estimate_csv(&est, digits)) })
}

fn conjecture(args: &ModelArgs, digits: usize) -> Result<Emitted> {
    let model = load_model(args)?;
    let spec = model.process()?;
    let deadlines = model
        .deadlines
        .clone()
        .ok_or_else(|| Error::Precondition("--deadlines is required".into()))?;
    let opts = ConjectureOptions { convention: model.convention, ..Default::default() };
    let result = conjecture_experiment(&spec, &deadlines, model.trials, model.seed, &opts)?;
    let csv = io::conjecture_csv(&result, digits);
    Ok(Emitted { json: json!(result), csv: Some(csv) })
}

fn spectral(args: &ModelArgs, transition: Option<&Path>, pi: Option<&Path>, digits: usize) -> Result<Emitted> {
    let m: TransitionMatrix = match transition {
        Some(p) => io::read_json::<MatrixFile>(p)?.into_transition()?,
        None => {
            let model = load_model(args)?;
            build_transition(model.q()?, model.kernel()?)?
        }
    };
    let pi: Vec<f64> = match pi {
        Some(p) => io::read_json(p)?,
        None => m.stationary_distribution()?,
    };
    let d = m.spectral_decompose(&pi)?;
    let basis: Vec<Vec<f64>> =
        d.basis.column_iter().map(|c| c.iter().copied().collect()).collect();
    let mut csv = String::from("index,eigenvalue\n");
    for (k, l) in d.eigenvalues.iter().enumerate() {
        csv.push_str(&format!("{k},{}\n", io::format_sig(*l, digits)));
    }
    Ok(Emitted {
        json: json!({
            "eigenvalues": d.eigenvalues,
            "eigenvectors": basis,
            "pi_used": d.pi_used,
            "reconstruction_error": d.reconstruction_error,
        }),
        csv: Some(csv),
    })
}

fn dispatch(cli: &Cli) -> Result<Emitted> {
    let digits = cli.output.digits;
    match &cli.command {
        Command::CheckKernel { kernel, tol } => check_kernel(kernel, *tol),
        Command::Analyze(a) => analyze(a),
        Command::Simulate(a) => simulate(a, digits),
        Command::BbcEstimate { bbc, trials, seed } => bbc_estimate(bbc, *trials, *seed, digits),
        Command::Conjecture(a) => conjecture(a, digits),
        Command::Spectral { model, transition, pi } => {
            spectral(model, transition.as_deref(), pi.as_deref(), digits)
        }
    }
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

fn report_error(err: &Error, format: ErrorFormat, stderr: &mut dyn Write) {
    let _ = match format {
        ErrorFormat::Text => writeln!(stderr, "error: {err}"),
        ErrorFormat::Json => writeln!(
            stderr,
            "{}",
            json!({"error": err.code(), "message": err.to_string(), "class": match err.class() {
                ErrorClass::Validation => "validation",
                ErrorClass::Numerical => "numerical",
            }})
        ),
    };
}

/// Runs a parsed command, returning the process exit code.
pub fn execute(cli: &Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let render = || -> Result<String> {
        let emitted = dispatch(cli)?;
        match (cli.output.format, emitted.csv) {
            (Format::Csv, Some(csv)) => Ok(csv),
            (Format::Csv, None) => {
                Err(Error::Precondition("this command has no CSV form; use --format json".into()))
            }
            (Format::Json, _) => {
                let v = io::round_json(emitted.json, cli.output.digits);
                Ok(serde_json::to_string_pretty(&v).map_err(|e| Error::Parse(e.to_string()))? + "\n")
            }
        }
    };
    let rendered = match cli.output.workers {
        Some(w) => match rayon::ThreadPoolBuilder::new().num_threads(w).build() {
            Ok(pool) => pool.install(render),
            Err(e) => Err(Error::Precondition(format!("cannot build worker pool: {e}"))),
        },
        None => render(),
    };
    let result = rendered.and_then(|text| match &cli.output.output {
        Some(path) => std::fs::write(path, text)
            .map_err(|source| Error::Io { path: path.display().to_string(), source }),
        None => stdout
            .write_all(text.as_bytes())
            .map_err(|source| Error::Io { path: "<stdout>".into(), source }),
    });
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            report_error(&e, cli.output.errors, stderr);
            match e.class() {
                ErrorClass::Validation => EXIT_VALIDATION,
                ErrorClass::Numerical => EXIT_NUMERICAL,
            }
        }
    }
}

/// Parses `args` (including the program name) and executes.
pub fn main_with_args<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => execute(&cli, stdout, stderr),
        Err(e) => match e.kind() {
            clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                let _ = write!(stdout, "{}", e.render());
                EXIT_OK
            }
            _ => {
                let _ = write!(stderr, "{}", e.render());
                EXIT_VALIDATION
            }
        },
    }
}
