//! File formats.
//!
//! Matrices that carry conditional laws (`Q`, `M`) are written by columns:
//! `columns[j][i]` is the probability of moving to `i` from `j`. Kernels and mean
//! response times are written row-major with `rho[i][j] = rho(i|j)`.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::bbc::{DriftSchedule, KernelEstimate, MeanResponseTimes, OuParams, DEFAULT_MAX_STEPS};
use crate::chain::{ExplorationMatrix, NicenessReport, TransitionMatrix};
use crate::error::{Error, Result};
use crate::kernel::{HastingsDecomposition, StochasticChoiceKernel};
use crate::simulation::ConjectureResult;

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| Error::Io { path: path.display().to_string(), source })?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

fn check_n(declared: usize, found: usize) -> Result<()> {
    if declared != found {
        return Err(Error::DimensionMismatch { expected: declared, found });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelFile {
    pub n: usize,
    pub rho: Vec<Vec<f64>>,
}

impl KernelFile {
    pub fn into_kernel(self) -> Result<StochasticChoiceKernel> {
        check_n(self.n, self.rho.len())?;
        StochasticChoiceKernel::from_rows(&self.rho)
    }

    pub fn from_kernel(k: &StochasticChoiceKernel) -> Self {
        Self { n: k.n(), rho: k.to_rows() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixFile {
    pub n: usize,
    pub columns: Vec<Vec<f64>>,
}

impl MatrixFile {
    pub fn into_exploration(self) -> Result<(ExplorationMatrix, NicenessReport)> {
        check_n(self.n, self.columns.len())?;
        ExplorationMatrix::from_columns(&self.columns)
    }

    pub fn into_transition(self) -> Result<TransitionMatrix> {
        check_n(self.n, self.columns.len())?;
        TransitionMatrix::from_columns(&self.columns)
    }

    pub fn from_exploration(q: &ExplorationMatrix) -> Self {
        Self { n: q.n(), columns: q.to_columns() }
    }

    pub fn from_transition(m: &TransitionMatrix) -> Self {
        Self { n: m.n(), columns: m.to_columns() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RtFile {
    pub n: usize,
    pub rt: Vec<Vec<f64>>,
}

impl RtFile {
    pub fn into_mean_rt(self) -> Result<MeanResponseTimes> {
        check_n(self.n, self.rt.len())?;
        MeanResponseTimes::from_rows(&self.rt)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecompositionJson {
    pub pi: Vec<f64>,
    pub s: Vec<Vec<f64>>,
    pub unbiased: bool,
}

impl From<&HastingsDecomposition> for DecompositionJson {
    fn from(d: &HastingsDecomposition) -> Self {
        Self { pi: d.pi.clone(), s: d.s.to_rows(), unbiased: d.unbiased }
    }
}

/// Drift field of the OU parameter file: a bare number or a schedule object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DriftField {
    Scalar(f64),
    Schedule(DriftSchedule),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuParamsFile {
    pub values: Vec<f64>,
    pub lambda: f64,
    pub mu: DriftField,
    pub sigma: f64,
    pub beta: f64,
    #[serde(default)]
    pub max_steps: Option<u64>,
}

impl OuParamsFile {
    pub fn into_params(self) -> Result<OuParams> {
        let drift = match self.mu {
            DriftField::Scalar(v) => DriftSchedule::Constant(v),
            DriftField::Schedule(s) => s,
        };
        OuParams::new(self.values, self.lambda, drift, self.sigma, self.beta)?
            .with_max_steps(self.max_steps.unwrap_or(DEFAULT_MAX_STEPS))
    }
}

/// `[[m, prob], ...]`.
pub fn read_pmf(path: &Path) -> Result<Vec<(u64, f64)>> {
    let raw: Vec<(f64, f64)> = read_json(path)?;
    raw.into_iter()
        .map(|(m, p)| {
            if m.fract() != 0.0 || m < 0.0 {
                Err(Error::Parse(format!("stopping support value {m} is not a nonnegative integer")))
            } else {
                Ok((m as u64, p))
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateJson {
    pub n: usize,
    pub trials_per_pair: usize,
    pub rho_hat: Vec<Vec<f64>>,
    pub stderr: Vec<Vec<f64>>,
    pub rt_mean: Vec<Vec<f64>>,
    pub rt_var: Vec<Vec<f64>>,
    pub censored_frac: Vec<Vec<f64>>,
}

fn rows(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

impl From<&KernelEstimate> for EstimateJson {
    fn from(e: &KernelEstimate) -> Self {
        let mut rt_mean = e.rt_mean.clone();
        rt_mean.fill_diagonal(0.0);
        Self {
            n: e.n(),
            trials_per_pair: e.trials_per_pair,
            rho_hat: e.kernel.to_rows(),
            stderr: rows(&e.stderr),
            rt_mean: rows(&rt_mean),
            rt_var: rows(&e.rt_var),
            censored_frac: rows(&e.censored_frac),
        }
    }
}

/// Formats `x` with `digits` significant digits, without locale dependence.
pub fn format_sig(x: f64, digits: usize) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    round_sig(x, digits).to_string()
}

pub fn round_sig(x: f64, digits: usize) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{:.*e}", digits.saturating_sub(1), x).parse().unwrap_or(x)
}

/// Rounds every float inside a JSON value.
pub fn round_json(v: Value, digits: usize) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = round_sig(n.as_f64().unwrap_or_default(), digits);
            serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
        }
        Value::Array(a) => Value::Array(a.into_iter().map(|x| round_json(x, digits)).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, x)| (k, round_json(x, digits))).collect()),
        other => other,
    }
}

/// One row per ordered pair: `pair,rho_hat,stderr,rt_mean,rt_var,censored_frac`.
pub fn estimate_csv(e: &KernelEstimate, digits: usize) -> String {
    let mut out = String::from("proposal,incumbent,rho_hat,stderr,rt_mean,rt_var,censored_frac\n");
    let n = e.n();
    for j in 0..n {
        for i in 0..n {
            if i == j {
                continue;
            }
            let _ = writeln!(
                out,
                "{i},{j},{},{},{},{},{}",
                format_sig(e.kernel.accept(i, j), digits),
                format_sig(e.stderr[(i, j)], digits),
                format_sig(e.rt_mean[(i, j)], digits),
                format_sig(e.rt_var[(i, j)], digits),
                format_sig(e.censored_frac[(i, j)], digits),
            );
        }
    }
    out
}

/// One row per deadline: `T,tv,stderr`.
pub fn conjecture_csv(r: &ConjectureResult, digits: usize) -> String {
    let mut out = String::from("T,tv,stderr\n");
    for ((t, tv), se) in r.deadlines.iter().zip(&r.tv_distance).zip(&r.tv_stderr) {
        let _ = writeln!(out, "{},{},{}", format_sig(*t, digits), format_sig(*tv, digits), format_sig(*se, digits));
    }
    out
}
