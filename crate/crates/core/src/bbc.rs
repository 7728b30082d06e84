//! Binary comparison models: samplers of `(choice, response time)` for a proposal
//! compared against an incumbent.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::StochasticChoiceKernel;
use crate::rng;

pub const DEFAULT_MAX_STEPS: u64 = 1_000_000;

/// Mean comparison durations `RT(i, j)` for proposal `i` against incumbent `j`.
///
/// The diagonal is zero: proposing the incumbent to itself takes no time.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanResponseTimes {
    rt: DMatrix<f64>,
}

impl MeanResponseTimes {
    /// `raw[i][j] = RT(i, j)`; the diagonal is ignored.
    pub fn from_rows(raw: &[Vec<f64>]) -> Result<Self> {
        let n = raw.len();
        for (r, row) in raw.iter().enumerate() {
            if row.len() != n {
                return Err(Error::NonSquare { rows: n, bad_row: r, len: row.len() });
            }
        }
        let mut rt = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let v = raw[i][j];
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(Error::InvalidParams(format!("mean response time ({i}, {j}) = {v}")));
                }
                rt[(i, j)] = v;
            }
        }
        Ok(Self { rt })
    }

    pub fn constant(n: usize, value: f64) -> Self {
        Self { rt: DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { value }) }
    }

    pub fn n(&self) -> usize {
        self.rt.nrows()
    }

    #[inline]
    pub fn get(&self, proposal: usize, incumbent: usize) -> f64 {
        self.rt[(proposal, incumbent)]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n()).map(|i| self.rt.row(i).iter().copied().collect()).collect()
    }
}

/// Drift scale `mu(t)` of the evidence recursion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "values", rename_all = "lowercase")]
pub enum DriftSchedule {
    Constant(f64),
    /// `values[t]` for step `t`; the last value is held after the table ends.
    Table(Vec<f64>),
}

impl DriftSchedule {
    #[inline]
    pub fn at(&self, t: u64) -> f64 {
        match self {
            Self::Constant(v) => *v,
            Self::Table(values) => {
                let idx = (t as usize).min(values.len() - 1);
                values[idx]
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |v: &f64| !(*v >= 0.0 && v.is_finite());
        match self {
            Self::Constant(v) if bad(v) => Err(Error::InvalidParams(format!("drift scale {v}"))),
            Self::Table(values) if values.is_empty() => {
                Err(Error::InvalidParams("empty drift schedule".into()))
            }
            Self::Table(values) if values.iter().any(bad) => {
                Err(Error::InvalidParams("drift schedule entries must be finite and >= 0".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Ornstein-Uhlenbeck evidence accumulator with symmetric thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct OuParams {
    /// Strength of each alternative.
    pub values: Vec<f64>,
    /// Evidence deterioration per step, in `[0, 1)`.
    pub lambda: f64,
    pub drift: DriftSchedule,
    pub sigma: f64,
    pub beta: f64,
    pub max_steps: u64,
}

impl OuParams {
    pub fn new(values: Vec<f64>, lambda: f64, drift: DriftSchedule, sigma: f64, beta: f64) -> Result<Self> {
        let p = Self { values, lambda, drift, sigma, beta, max_steps: DEFAULT_MAX_STEPS };
        p.validate()?;
        Ok(p)
    }

    pub fn with_max_steps(mut self, max_steps: u64) -> Result<Self> {
        self.max_steps = max_steps;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.len() < 2 {
            return Err(Error::MenuTooSmall(self.values.len()));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams("alternative values must be finite".into()));
        }
        if !(0.0..1.0).contains(&self.lambda) {
            return Err(Error::InvalidParams(format!("lambda must lie in [0, 1), got {}", self.lambda)));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidParams(format!("sigma must be > 0, got {}", self.sigma)));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidParams(format!("beta must be > 0, got {}", self.beta)));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidParams("max_steps must be >= 1".into()));
        }
        self.drift.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BbcSampleOutcome {
    pub choice: usize,
    pub response_time: f64,
    /// The trial hit `max_steps` without crossing a threshold.
    pub censored: bool,
}

/// One evidence-threshold comparison of `proposal` against `incumbent`.
///
/// Starting from `X(0) = 0`, iterates
/// `X(t+1) = X(t) - lambda X(t) + (v_i - v_j) mu(t) + sigma eps(t)` and stops at the
/// first `t >= 1` with `|X(t)| >= beta`. The proposal wins on the upper threshold.
pub fn simulate_ou_trial<R: Rng + ?Sized>(
    p: &OuParams,
    proposal: usize,
    incumbent: usize,
    rng: &mut R,
) -> Result<BbcSampleOutcome> {
    if proposal == incumbent {
        return Err(Error::SamePair(proposal));
    }
    let n = p.values.len();
    if proposal >= n || incumbent >= n {
        return Err(Error::DimensionMismatch { expected: n, found: proposal.max(incumbent) + 1 });
    }
    let delta = p.values[proposal] - p.values[incumbent];
    let keep = 1.0 - p.lambda;
    let mut x = 0.0_f64;
    for t in 0..p.max_steps {
        let eps: f64 = rng.sample(StandardNormal);
        x = keep * x + delta * p.drift.at(t) + p.sigma * eps;
        if x.abs() >= p.beta {
            let choice = if x >= p.beta { proposal } else { incumbent };
            return Ok(BbcSampleOutcome { choice, response_time: (t + 1) as f64, censored: false });
        }
    }
    let choice = if x > 0.0 {
        proposal
    } else if x < 0.0 {
        incumbent
    } else if rng.random::<bool>() {
        proposal
    } else {
        incumbent
    };
    Ok(BbcSampleOutcome { choice, response_time: p.max_steps as f64, censored: true })
}

/// Response-time law of one comparison in a [`TabularBbc`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RtDistribution {
    Constant(f64),
    Exponential { mean: f64 },
}

impl RtDistribution {
    pub fn mean(&self) -> f64 {
        match self {
            Self::Constant(v) => *v,
            Self::Exponential { mean } => *mean,
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Self::Constant(v) => *v,
            Self::Exponential { mean } => Exp::new(1.0 / mean).expect("positive mean").sample(rng) ,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RtShape {
    Constant,
    Exponential,
}

/// A comparison model given directly by its acceptance kernel and response-time laws,
/// with choice independent of duration. Mainly a device for exact tests.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularBbc {
    kernel: StochasticChoiceKernel,
    rt: Vec<RtDistribution>,
}

impl TabularBbc {
    pub fn new(kernel: StochasticChoiceKernel, rt: &MeanResponseTimes, shape: RtShape) -> Result<Self> {
        let n = kernel.n();
        if rt.n() != n {
            return Err(Error::DimensionMismatch { expected: n, found: rt.n() });
        }
        let mut laws = Vec::with_capacity(n * n);
        for j in 0..n {
            for i in 0..n {
                let mean = rt.get(i, j);
                if i != j && mean <= 0.0 {
                    return Err(Error::InvalidParams(format!(
                        "tabular response time ({i}, {j}) must be positive"
                    )));
                }
                laws.push(match shape {
                    RtShape::Constant => RtDistribution::Constant(mean),
                    RtShape::Exponential if i == j => RtDistribution::Constant(0.0),
                    RtShape::Exponential => RtDistribution::Exponential { mean },
                });
            }
        }
        Ok(Self { kernel, rt: laws })
    }

    pub fn kernel(&self) -> &StochasticChoiceKernel {
        &self.kernel
    }

    pub fn rt_law(&self, proposal: usize, incumbent: usize) -> RtDistribution {
        self.rt[incumbent * self.kernel.n() + proposal]
    }

    pub fn mean_rt(&self) -> MeanResponseTimes {
        let n = self.kernel.n();
        MeanResponseTimes {
            rt: DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { self.rt_law(i, j).mean() }),
        }
    }

    fn sample<R: Rng + ?Sized>(&self, proposal: usize, incumbent: usize, rng: &mut R) -> BbcSampleOutcome {
        let accepted = rng.random::<f64>() < self.kernel.accept(proposal, incumbent);
        let response_time = self.rt_law(proposal, incumbent).sample(rng);
        BbcSampleOutcome {
            choice: if accepted { proposal } else { incumbent },
            response_time,
            censored: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BbcModel {
    Ou(OuParams),
    Tabular(TabularBbc),
}

impl BbcModel {
    pub fn n(&self) -> usize {
        match self {
            Self::Ou(p) => p.values.len(),
            Self::Tabular(t) => t.kernel.n(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(
        &self,
        proposal: usize,
        incumbent: usize,
        rng: &mut R,
    ) -> Result<BbcSampleOutcome> {
        if proposal == incumbent {
            return Err(Error::SamePair(proposal));
        }
        match self {
            Self::Ou(p) => simulate_ou_trial(p, proposal, incumbent, rng),
            Self::Tabular(t) => {
                let n = t.kernel.n();
                if proposal >= n || incumbent >= n {
                    return Err(Error::DimensionMismatch { expected: n, found: proposal.max(incumbent) + 1 });
                }
                Ok(t.sample(proposal, incumbent, rng))
            }
        }
    }

    /// The induced kernel, when it is known without simulation.
    pub fn exact_kernel(&self) -> Option<&StochasticChoiceKernel> {
        match self {
            Self::Tabular(t) => Some(&t.kernel),
            Self::Ou(_) => None,
        }
    }

    pub fn exact_mean_rt(&self) -> Option<MeanResponseTimes> {
        match self {
            Self::Tabular(t) => Some(t.mean_rt()),
            Self::Ou(_) => None,
        }
    }
}

/// Empirical kernel and response-time statistics from repeated comparisons.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelEstimate {
    pub kernel: StochasticChoiceKernel,
    pub rt_mean: DMatrix<f64>,
    pub rt_var: DMatrix<f64>,
    pub trials_per_pair: usize,
    /// Binomial standard error of each acceptance frequency.
    pub stderr: DMatrix<f64>,
    pub censored_frac: DMatrix<f64>,
}

impl KernelEstimate {
    pub fn n(&self) -> usize {
        self.kernel.n()
    }
}

/// Runs `trials_per_pair` comparisons for every ordered pair.
///
/// Trial `t` of pair `(i, j)` draws from its own stream, so the estimate is a
/// function of `seed` alone.
pub fn estimate_kernel(model: &BbcModel, trials_per_pair: usize, seed: u64) -> Result<KernelEstimate> {
    if trials_per_pair == 0 {
        return Err(Error::Precondition("trials_per_pair must be >= 1".into()));
    }
    let n = model.n();
    let mut freq = DMatrix::from_element(n, n, 1.0);
    let mut rt_mean = DMatrix::zeros(n, n);
    let mut rt_var = DMatrix::zeros(n, n);
    let mut stderr = DMatrix::zeros(n, n);
    let mut censored_frac = DMatrix::zeros(n, n);

    for j in 0..n {
        for i in 0..n {
            if i == j {
                continue;
            }
            let pair = (j * n + i) as u64;
            let outcomes = (0..trials_per_pair)
                .into_par_iter()
                .map(|t| {
                    let mut r = rng::stream(
                        seed,
                        rng::domain::KERNEL_ESTIMATE,
                        pair * trials_per_pair as u64 + t as u64,
                    );
                    model.sample(i, j, &mut r)
                })
                .collect::<Result<Vec<_>>>()?;

            let mut accepted = 0usize;
            let mut kept = 0usize;
            let mut sum = 0.0;
            for o in outcomes.iter().filter(|o| !o.censored) {
                kept += 1;
                sum += o.response_time;
                if o.choice == i {
                    accepted += 1;
                }
            }
            if kept == 0 {
                return Err(Error::AllCensored(i, j));
            }
            let mean = sum / kept as f64;
            let var = if kept > 1 {
                outcomes
                    .iter()
                    .filter(|o| !o.censored)
                    .map(|o| (o.response_time - mean).powi(2))
                    .sum::<f64>()
                    / (kept - 1) as f64
            } else {
                0.0
            };
            let p = accepted as f64 / kept as f64;
            freq[(i, j)] = p;
            rt_mean[(i, j)] = mean;
            rt_var[(i, j)] = var;
            stderr[(i, j)] = (p * (1.0 - p) / kept as f64).sqrt();
            censored_frac[(i, j)] = (trials_per_pair - kept) as f64 / trials_per_pair as f64;
        }
    }
    Ok(KernelEstimate {
        kernel: StochasticChoiceKernel::from_matrix(freq)?,
        rt_mean,
        rt_var,
        trials_per_pair,
        stderr,
        censored_frac,
    })
}

/// Mean response times with the zero-diagonal convention.
pub fn mean_rt_matrix(est: &KernelEstimate) -> MeanResponseTimes {
    let mut rt = est.rt_mean.clone();
    rt.fill_diagonal(0.0);
    MeanResponseTimes { rt }
}
