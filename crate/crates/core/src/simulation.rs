//! Monte Carlo runs of the choice process.
//!
//! A run draws a first incumbent from `mu`. Each comparison then draws a proposal
//! from `Q(.|incumbent)`, asks the comparison model for a winner and a duration,
//! and advances the clock. Under an iteration-count stopping time `N`, exactly `N`
//! comparisons are timed and the output is the incumbent going into the last one,
//! `J_{N-1}`.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::bbc::{estimate_kernel, mean_rt_matrix, BbcModel, MeanResponseTimes};
use crate::chain::{build_transition, ExplorationMatrix};
use crate::dist;
use crate::error::{Error, Result};
use crate::rng;
use crate::stopping::{time_weighted_stationary, StoppingTime};

#[derive(Debug, Clone, PartialEq)]
pub struct ProcessSpec {
    /// Law of the first incumbent.
    pub mu: Vec<f64>,
    pub q: ExplorationMatrix,
    pub bbc: BbcModel,
}

impl ProcessSpec {
    pub fn new(mu: Vec<f64>, q: ExplorationMatrix, bbc: BbcModel) -> Result<Self> {
        let n = q.n();
        if bbc.n() != n {
            return Err(Error::DimensionMismatch { expected: n, found: bbc.n() });
        }
        dist::check_distribution(&mu, n)?;
        Ok(Self { mu, q, bbc })
    }

    pub fn n(&self) -> usize {
        self.q.n()
    }
}

fn draw_index<R: Rng + ?Sized>(weights: impl Iterator<Item = f64>, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut cum = 0.0;
    let mut last = 0;
    for (k, w) in weights.enumerate() {
        if w > 0.0 {
            last = k;
        }
        cum += w;
        if u < cum {
            return k;
        }
    }
    last
}

/// One comparison from `incumbent`: `(new incumbent, proposal, duration)`.
fn iterate<R: Rng + ?Sized>(spec: &ProcessSpec, incumbent: usize, rng: &mut R) -> Result<(usize, usize, f64)> {
    let n = spec.n();
    let proposal = draw_index((0..n).map(|i| spec.q.prob(i, incumbent)), rng);
    if proposal == incumbent {
        return Ok((incumbent, proposal, 0.0));
    }
    let outcome = spec.bbc.sample(proposal, incumbent, rng)?;
    Ok((outcome.choice, proposal, outcome.response_time))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainTrace {
    /// `J_0 .. J_{N-1}`: the incumbent going into each comparison.
    pub incumbents: Vec<usize>,
    pub proposals: Vec<usize>,
    pub iteration_times: Vec<f64>,
    /// `t_0 = 0, t_1, .., t_N`.
    pub clock: Vec<f64>,
    /// Winner of the last comparison, `J_N`; not the output.
    pub next_incumbent: usize,
    pub final_choice: usize,
    pub iterations_run: u64,
}

/// Runs one stopped trajectory, keeping the full trace.
pub fn run_chain<R: Rng + ?Sized>(spec: &ProcessSpec, st: &StoppingTime, rng: &mut R) -> Result<ChainTrace> {
    // N is drawn before any comparison, so it is independent of them.
    let iterations = st.sample(rng);
    let mut j = draw_index(spec.mu.iter().copied(), rng);
    let mut trace = ChainTrace {
        incumbents: Vec::with_capacity(iterations as usize),
        proposals: Vec::with_capacity(iterations as usize),
        iteration_times: Vec::with_capacity(iterations as usize),
        clock: vec![0.0],
        next_incumbent: j,
        final_choice: j,
        iterations_run: iterations,
    };
    let mut t = 0.0;
    for _ in 0..iterations {
        let (next, proposal, rt) = iterate(spec, j, rng)?;
        trace.incumbents.push(j);
        trace.proposals.push(proposal);
        trace.iteration_times.push(rt);
        t += rt;
        trace.clock.push(t);
        j = next;
    }
    trace.final_choice = *trace.incumbents.last().expect("N >= 1");
    trace.next_incumbent = j;
    Ok(trace)
}

/// Aggregate-only version of [`run_chain`]: `(choice, decision time)`.
fn run_chain_summary<R: Rng + ?Sized>(spec: &ProcessSpec, st: &StoppingTime, rng: &mut R) -> Result<(usize, f64)> {
    let iterations = st.sample(rng);
    let mut j = draw_index(spec.mu.iter().copied(), rng);
    let mut choice = j;
    let mut t = 0.0;
    for _ in 0..iterations {
        choice = j;
        let (next, _, rt) = iterate(spec, j, rng)?;
        t += rt;
        j = next;
    }
    Ok((choice, t))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChoiceEstimate {
    pub frequencies: Vec<f64>,
    /// Binomial standard errors; absent with a single trial.
    pub frequency_stderr: Option<Vec<f64>>,
    pub mean_decision_time: f64,
    pub mean_decision_time_stderr: Option<f64>,
    pub trials: usize,
}

/// Monte Carlo estimate of the stopped choice law and mean decision time.
pub fn estimate_choice_distribution(
    spec: &ProcessSpec,
    st: &StoppingTime,
    trials: usize,
    seed: u64,
) -> Result<ChoiceEstimate> {
    if trials == 0 {
        return Err(Error::Precondition("trials must be >= 1".into()));
    }
    let n = spec.n();
    let outcomes = (0..trials)
        .into_par_iter()
        .map(|t| run_chain_summary(spec, st, &mut rng::stream(seed, rng::domain::CHOICE, t as u64)))
        .collect::<Result<Vec<_>>>()?;

    let mut counts = vec![0usize; n];
    let mut sum = 0.0;
    for &(c, t) in &outcomes {
        counts[c] += 1;
        sum += t;
    }
    let total = trials as f64;
    let frequencies: Vec<f64> = counts.iter().map(|&c| c as f64 / total).collect();
    let mean = sum / total;
    let (frequency_stderr, mean_decision_time_stderr) = if trials > 1 {
        let var = outcomes.iter().map(|o| (o.1 - mean).powi(2)).sum::<f64>() / (total - 1.0);
        (
            Some(frequencies.iter().map(|p| (p * (1.0 - p) / total).sqrt()).collect()),
            Some((var / total).sqrt()),
        )
    } else {
        (None, None)
    };
    Ok(ChoiceEstimate {
        frequencies,
        frequency_stderr,
        mean_decision_time: mean,
        mean_decision_time_stderr,
        trials,
    })
}

/// Which incumbent a clock deadline reports when it falls inside a comparison.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeadlineConvention {
    /// The incumbent holding while the straddling comparison is still running.
    #[default]
    ReadAtDeadline,
    /// Let the straddling comparison finish and report its winner.
    FinishComparison,
}

/// Incumbent at clock time `deadline`.
///
/// Comparisons ending exactly at the deadline are resolved.
pub fn run_deadline_trial<R: Rng + ?Sized>(
    spec: &ProcessSpec,
    deadline: f64,
    convention: DeadlineConvention,
    rng: &mut R,
) -> Result<usize> {
    if !(deadline > 0.0 && deadline.is_finite()) {
        return Err(Error::NonPositiveDeadline(deadline));
    }
    let mut j = draw_index(spec.mu.iter().copied(), rng);
    let mut t = 0.0;
    loop {
        if spec.q.prob(j, j) >= 1.0 {
            return Ok(j);
        }
        let (next, proposal, rt) = iterate(spec, j, rng)?;
        if proposal == j {
            continue;
        }
        if t + rt > deadline {
            return Ok(match convention {
                DeadlineConvention::ReadAtDeadline => j,
                DeadlineConvention::FinishComparison => next,
            });
        }
        t += rt;
        j = next;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConjectureOptions {
    pub convention: DeadlineConvention,
    /// Trials per ordered pair when the comparison model's kernel must be estimated.
    pub kernel_trials: usize,
}

impl Default for ConjectureOptions {
    fn default() -> Self {
        Self { convention: DeadlineConvention::default(), kernel_trials: 100_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConjectureResult {
    pub deadlines: Vec<f64>,
    pub tv_distance: Vec<f64>,
    /// Delta-method standard error of each distance.
    pub tv_stderr: Vec<f64>,
    pub empirical: Vec<Vec<f64>>,
    pub trials: usize,
    pub pi: Vec<f64>,
    pub pi_star: Vec<f64>,
}

/// Compares the incumbent law at each clock deadline with the time-weighted
/// stationary law `pi*(j) ∝ pi(j) tau_j`.
pub fn conjecture_experiment(
    spec: &ProcessSpec,
    deadlines: &[f64],
    trials: usize,
    seed: u64,
    opts: &ConjectureOptions,
) -> Result<ConjectureResult> {
    if trials == 0 {
        return Err(Error::Precondition("trials must be >= 1".into()));
    }
    if let Some(&t) = deadlines.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
        return Err(Error::NonPositiveDeadline(t));
    }
    spec.q.has_null_diagonal().map_err(|(j, v)| Error::DiagonalNotNull(j, v))?;

    let (kernel, rt): (_, MeanResponseTimes) = match (spec.bbc.exact_kernel(), spec.bbc.exact_mean_rt()) {
        (Some(k), Some(rt)) => (k.clone(), rt),
        _ => {
            let est = estimate_kernel(&spec.bbc, opts.kernel_trials, seed)?;
            let rt = mean_rt_matrix(&est);
            (est.kernel, rt)
        }
    };
    if !kernel.is_positive() {
        return Err(Error::Precondition("comparison kernel must be positive".into()));
    }
    let pi = build_transition(&spec.q, &kernel)?.stationary_distribution()?;
    let pi_star = time_weighted_stationary(&pi, &spec.q, &rt)?;

    let n = spec.n();
    let total = trials as f64;
    let mut result = ConjectureResult {
        deadlines: deadlines.to_vec(),
        tv_distance: Vec::with_capacity(deadlines.len()),
        tv_stderr: Vec::with_capacity(deadlines.len()),
        empirical: Vec::with_capacity(deadlines.len()),
        trials,
        pi,
        pi_star,
    };
    for (d, &deadline) in deadlines.iter().enumerate() {
        let offset = (d as u64) << 40;
        let choices = (0..trials)
            .into_par_iter()
            .map(|t| {
                let mut r = rng::stream(seed, rng::domain::DEADLINE, offset + t as u64);
                run_deadline_trial(spec, deadline, opts.convention, &mut r)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut counts = vec![0usize; n];
        for c in choices {
            counts[c] += 1;
        }
        let p: Vec<f64> = counts.iter().map(|&c| c as f64 / total).collect();
        let tv = dist::total_variation(&p, &result.pi_star);
        // TV = 0.5 * sum_j s_j p_j - const with s_j = sign(p_j - pi*_j).
        let signs: Vec<f64> = p
            .iter()
            .zip(&result.pi_star)
            .map(|(a, b)| if a >= b { 1.0 } else { -1.0 })
            .collect();
        let m1: f64 = signs.iter().zip(&p).map(|(s, q)| s * q).sum();
        let m2: f64 = signs.iter().zip(&p).map(|(s, q)| s * s * q).sum();
        result.tv_stderr.push(0.5 * ((m2 - m1 * m1).max(0.0) / total).sqrt());
        result.tv_distance.push(tv);
        result.empirical.push(p);
    }
    Ok(result)
}
