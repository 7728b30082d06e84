//! Choice probabilities and mean decision times of the stopped chain.
//!
//! With `N` the number of comparisons performed, the stopped choice law is
//! `p_N = sum_m Pr[N=m] M^{m-1} mu` and the mean decision time is
//! `tau' (sum_n Pr[N>=n] M^{n-1}) mu`. Geometric and shifted Poisson stopping have
//! closed forms; everything else goes through a series truncated on stopping-tail mass.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Geometric, Poisson};
use serde::Serialize;

use crate::bbc::MeanResponseTimes;
use crate::chain::{ExplorationMatrix, SpectralDecomposition, TransitionMatrix};
use crate::dist;
use crate::error::{Error, Result};

/// Mass tolerance for custom stopping tables.
pub const CUSTOM_MASS_TOL: f64 = 1e-12;

/// Below this Poisson mean the exponential is evaluated by its power series.
pub const POISSON_SERIES_CUTOFF: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub enum StoppingTime {
    Fixed(u64),
    /// Continue after each comparison with probability `zeta`.
    Geometric { zeta: f64 },
    /// `N - 1 ~ Poisson(rate)`, so `E[N] = rate + 1`.
    PoissonShifted { rate: f64 },
    Custom(CustomPmf),
}

/// Finite table `(m, Pr[N=m])` with `m >= 1`, sorted by `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct CustomPmf {
    entries: Vec<(u64, f64)>,
}

impl CustomPmf {
    pub fn entries(&self) -> &[(u64, f64)] {
        &self.entries
    }

    fn max_support(&self) -> u64 {
        self.entries.last().map_or(1, |e| e.0)
    }
}

/// How a run is told to stop: after a number of comparisons, or at a clock deadline.
#[derive(Debug, Clone, PartialEq)]
pub enum StoppingSpec {
    Iterations(StoppingTime),
    Deadline(f64),
}

impl StoppingSpec {
    /// Parses `fixed:25`, `geometric:0.5`, `poisson:3.0`, `custom:@pmf.json` or `deadline:100`.
    ///
    /// `load_custom` resolves the path after `custom:@`.
    pub fn parse(
        spec: &str,
        load_custom: impl FnOnce(&str) -> Result<Vec<(u64, f64)>>,
    ) -> Result<Self> {
        let (kind, arg) = spec
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("stopping spec '{spec}' has no ':'")))?;
        let number = |s: &str| -> Result<f64> {
            s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("'{s}': {e}")))
        };
        match kind.trim() {
            "fixed" => {
                let m = arg.trim().parse::<u64>().map_err(|e| Error::Parse(format!("'{arg}': {e}")))?;
                Ok(Self::Iterations(StoppingTime::fixed(m)?))
            }
            "geometric" => Ok(Self::Iterations(StoppingTime::geometric(number(arg)?)?)),
            "poisson" => Ok(Self::Iterations(StoppingTime::poisson_shifted(number(arg)?)?)),
            "custom" => {
                let path = arg.strip_prefix('@').ok_or_else(|| {
                    Error::Parse(format!("custom stopping expects 'custom:@file', got '{spec}'"))
                })?;
                Ok(Self::Iterations(StoppingTime::custom(load_custom(path)?)?))
            }
            "deadline" => {
                let t = number(arg)?;
                if !(t > 0.0 && t.is_finite()) {
                    return Err(Error::NonPositiveDeadline(t));
                }
                Ok(Self::Deadline(t))
            }
            other => Err(Error::Parse(format!("unknown stopping kind '{other}'"))),
        }
    }

    /// The analytic formulas assume `N` independent of the comparisons, which a clock
    /// deadline is not.
    pub fn iterations(&self) -> Result<&StoppingTime> {
        match self {
            Self::Iterations(st) => Ok(st),
            Self::Deadline(_) => Err(Error::InvalidStopping(
                "a clock deadline is not independent of response times; use simulation".into(),
            )),
        }
    }
}

fn ln_factorial(k: u64) -> f64 {
    (2..=k).map(|i| (i as f64).ln()).sum()
}

fn poisson_pmf(rate: f64, k: u64) -> f64 {
    if rate == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    (-rate + k as f64 * rate.ln() - ln_factorial(k)).exp()
}

/// `Pr[K >= k]` for `K ~ Poisson(rate)`.
fn poisson_upper_tail(rate: f64, k: u64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if rate == 0.0 {
        return 0.0;
    }
    if (k as f64) > rate {
        // Terms decrease from here on; sum them directly.
        let mut term = poisson_pmf(rate, k);
        let mut sum = 0.0;
        let mut i = k;
        while term > 0.0 && term > sum * 1e-18 {
            sum += term;
            i += 1;
            term *= rate / i as f64;
        }
        sum
    } else {
        let mut term = (-rate).exp();
        let mut below = 0.0;
        for i in 0..k {
            if i > 0 {
                term *= rate / i as f64;
            }
            below += term;
        }
        (1.0 - below).max(0.0)
    }
}

impl StoppingTime {
    pub fn fixed(m: u64) -> Result<Self> {
        if m == 0 {
            return Err(Error::OutOfSupport(0));
        }
        Ok(Self::Fixed(m))
    }

    pub fn geometric(zeta: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&zeta) {
            return Err(Error::InvalidStopping(format!(
                "geometric continuation must lie in [0, 1), got {zeta}"
            )));
        }
        Ok(Self::Geometric { zeta })
    }

    pub fn poisson_shifted(rate: f64) -> Result<Self> {
        if !(rate >= 0.0 && rate.is_finite()) {
            return Err(Error::InvalidStopping(format!("Poisson rate must be >= 0, got {rate}")));
        }
        Ok(Self::PoissonShifted { rate })
    }

    pub fn custom(mut entries: Vec<(u64, f64)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidStopping("empty custom pmf".into()));
        }
        for &(m, p) in &entries {
            if m == 0 {
                return Err(Error::OutOfSupport(0));
            }
            if !(p >= 0.0 && p.is_finite()) {
                return Err(Error::InvalidStopping(format!("Pr[N={m}] = {p}")));
            }
        }
        entries.sort_by_key(|e| e.0);
        entries.dedup_by(|b, a| {
            if a.0 == b.0 {
                a.1 += b.1;
                true
            } else {
                false
            }
        });
        let total: f64 = entries.iter().map(|e| e.1).sum();
        if (total - 1.0).abs() > CUSTOM_MASS_TOL {
            return Err(Error::InvalidStopping(format!("custom pmf has total mass {total}")));
        }
        Ok(Self::Custom(CustomPmf { entries }))
    }

    /// `Pr[N = m]`.
    pub fn pmf(&self, m: u64) -> Result<f64> {
        if m == 0 {
            return Err(Error::OutOfSupport(0));
        }
        Ok(match self {
            Self::Fixed(m0) => f64::from(u8::from(m == *m0)),
            Self::Geometric { zeta } => (1.0 - zeta) * zeta.powf((m - 1) as f64),
            Self::PoissonShifted { rate } => poisson_pmf(*rate, m - 1),
            Self::Custom(c) => c.entries.iter().find(|e| e.0 == m).map_or(0.0, |e| e.1),
        })
    }

    /// `Pr[N >= n]`.
    pub fn tail(&self, n: u64) -> Result<f64> {
        if n == 0 {
            return Err(Error::OutOfSupport(0));
        }
        Ok(match self {
            Self::Fixed(m0) => f64::from(u8::from(n <= *m0)),
            Self::Geometric { zeta } => zeta.powf((n - 1) as f64),
            Self::PoissonShifted { rate } => poisson_upper_tail(*rate, n - 1),
            Self::Custom(c) => c.entries.iter().filter(|e| e.0 >= n).map(|e| e.1).sum(),
        })
    }

    pub fn expectation(&self) -> f64 {
        match self {
            Self::Fixed(m0) => *m0 as f64,
            Self::Geometric { zeta } => 1.0 / (1.0 - zeta),
            Self::PoissonShifted { rate } => rate + 1.0,
            Self::Custom(c) => c.entries.iter().map(|&(m, p)| m as f64 * p).sum(),
        }
    }

    /// `E[(N - n)^+] = sum_{k > n} Pr[N >= k]`.
    fn excess_mean(&self, n: u64) -> f64 {
        match self {
            Self::Fixed(m0) => m0.saturating_sub(n) as f64,
            Self::Geometric { zeta } => zeta.powf(n as f64) / (1.0 - zeta),
            Self::PoissonShifted { rate } => {
                let mut sum = 0.0;
                let mut k = n + 1;
                loop {
                    let t = poisson_upper_tail(*rate, k - 1);
                    sum += t;
                    if t == 0.0 || (k as f64 > *rate + 1.0 && t <= sum * 1e-18) {
                        break sum;
                    }
                    k += 1;
                }
            }
            Self::Custom(c) => {
                c.entries.iter().filter(|e| e.0 > n).map(|&(m, p)| (m - n) as f64 * p).sum()
            }
        }
    }

    /// `E[x^{N-1}]`, the weight the stopped operator puts on an eigenvalue `x`.
    pub fn shifted_pgf(&self, x: f64) -> f64 {
        match self {
            Self::Fixed(m0) => x.powf((m0 - 1) as f64),
            Self::Geometric { zeta } => (1.0 - zeta) / (1.0 - zeta * x),
            Self::PoissonShifted { rate } => (rate * (x - 1.0)).exp(),
            Self::Custom(c) => c.entries.iter().map(|&(m, p)| p * x.powf((m - 1) as f64)).sum(),
        }
    }

    /// `sum_n Pr[N >= n] x^{n-1}` for `|x| <= 1`.
    pub fn tail_gf(&self, x: f64) -> f64 {
        match self {
            Self::Fixed(m0) => (0..*m0).map(|k| x.powf(k as f64)).sum(),
            Self::Geometric { zeta } => 1.0 / (1.0 - zeta * x),
            Self::PoissonShifted { .. } | Self::Custom(_) => {
                let mut sum = 0.0;
                let mut power = 1.0;
                let mut n = 1u64;
                loop {
                    // n >= 1 is always in range.
                    let t = self.tail(n).unwrap_or(0.0);
                    sum += t * power;
                    if self.excess_mean(n) <= 1e-18 || t == 0.0 {
                        break sum;
                    }
                    power *= x;
                    n += 1;
                }
            }
        }
    }

    /// Draws a number of comparisons.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match self {
            Self::Fixed(m0) => *m0,
            Self::Geometric { zeta } => {
                if *zeta == 0.0 {
                    1
                } else {
                    // Failures before the first stop.
                    1 + Geometric::new(1.0 - zeta).expect("valid geometric").sample(rng)
                }
            }
            Self::PoissonShifted { rate } => {
                if *rate == 0.0 {
                    1
                } else {
                    1 + Poisson::new(*rate).expect("valid Poisson").sample(rng) as u64
                }
            }
            Self::Custom(c) => {
                let u: f64 = rng.random();
                let mut cum = 0.0;
                for &(m, p) in &c.entries {
                    cum += p;
                    if u < cum {
                        return m;
                    }
                }
                c.max_support()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesOptions {
    /// Truncate once the ignored stopping mass falls below this.
    pub tail_tol: f64,
    pub max_terms: usize,
}

impl Default for SeriesOptions {
    fn default() -> Self {
        Self { tail_tol: 1e-12, max_terms: 10_000_000 }
    }
}

/// A series evaluation together with the stopping mass it ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct Truncated<T> {
    pub value: T,
    pub truncation_tail: f64,
}

/// Per-incumbent expected comparison duration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationTimeVector(pub Vec<f64>);

impl IterationTimeVector {
    pub fn ones(n: usize) -> Self {
        Self(vec![1.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// `tau_j = sum_{i != j} Q(i|j) RT(i, j)`; self proposals take no time.
pub fn conditional_iteration_time(
    q: &ExplorationMatrix,
    rt: &MeanResponseTimes,
) -> Result<IterationTimeVector> {
    let n = q.n();
    if rt.n() != n {
        return Err(Error::DimensionMismatch { expected: n, found: rt.n() });
    }
    Ok(IterationTimeVector(
        (0..n)
            .map(|j| (0..n).filter(|&i| i != j).map(|i| q.prob(i, j) * rt.get(i, j)).sum())
            .collect(),
    ))
}

/// `pi*(j) ∝ pi(j) tau_j`, for exploration matrices that never re-propose the incumbent.
pub fn time_weighted_stationary(
    pi: &[f64],
    q: &ExplorationMatrix,
    rt: &MeanResponseTimes,
) -> Result<Vec<f64>> {
    q.has_null_diagonal().map_err(|(j, v)| Error::DiagonalNotNull(j, v))?;
    dist::check_full_support(pi, q.n())?;
    let tau = conditional_iteration_time(q, rt)?;
    let weights: Vec<f64> = pi.iter().zip(&tau.0).map(|(p, t)| p * t).collect();
    dist::normalize(&weights).ok_or(Error::ZeroNormalizer)
}

fn check_inputs(m: &TransitionMatrix, mu: &[f64]) -> Result<DVector<f64>> {
    dist::check_distribution(mu, m.n())?;
    Ok(DVector::from_column_slice(mu))
}

fn check_tau(m: &TransitionMatrix, tau: &IterationTimeVector) -> Result<DVector<f64>> {
    if tau.0.len() != m.n() {
        return Err(Error::DimensionMismatch { expected: m.n(), found: tau.0.len() });
    }
    if let Some(t) = tau.0.iter().find(|t| !(**t >= 0.0 && t.is_finite())) {
        return Err(Error::InvalidParams(format!("iteration time {t} must be finite and >= 0")));
    }
    Ok(DVector::from_column_slice(&tau.0))
}

/// `p_N`, using the closed form when the stopping law has one.
pub fn choice_probabilities(
    m: &TransitionMatrix,
    mu: &[f64],
    st: &StoppingTime,
) -> Result<Vec<f64>> {
    Ok(choice_probabilities_with(m, mu, st, SeriesOptions::default())?.value)
}

pub fn choice_probabilities_with(
    m: &TransitionMatrix,
    mu: &[f64],
    st: &StoppingTime,
    opts: SeriesOptions,
) -> Result<Truncated<Vec<f64>>> {
    let v = check_inputs(m, mu)?;
    let exact = |value: DVector<f64>| Truncated { value: value.as_slice().to_vec(), truncation_tail: 0.0 };
    match st {
        StoppingTime::Fixed(m0) => {
            let mut x = v;
            for _ in 1..*m0 {
                x = m.matrix() * x;
            }
            Ok(exact(x))
        }
        StoppingTime::Geometric { zeta } => {
            let x = solve_geometric(m, *zeta, &(v * (1.0 - zeta)))?;
            Ok(exact(x))
        }
        StoppingTime::PoissonShifted { rate } if *rate > POISSON_SERIES_CUTOFF => {
            Ok(exact(poisson_operator(m, *rate) * v))
        }
        _ => choice_probabilities_series(m, mu, st, SeriesOptions { tail_tol: opts.tail_tol.min(1e-17), ..opts }),
    }
}

/// `(I - zeta M) x = rhs`.
fn solve_geometric(m: &TransitionMatrix, zeta: f64, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let n = m.n();
    let a = DMatrix::<f64>::identity(n, n) - m.matrix() * zeta;
    a.lu().solve(rhs).ok_or(Error::Singular)
}

/// `(1 - zeta)(I - zeta M)^{-1}`, assembled by solving against the identity.
pub fn geometric_operator(m: &TransitionMatrix, zeta: f64) -> Result<DMatrix<f64>> {
    let n = m.n();
    let a = DMatrix::<f64>::identity(n, n) - m.matrix() * zeta;
    let mut rhs = DMatrix::<f64>::identity(n, n);
    rhs *= 1.0 - zeta;
    a.lu().solve(&rhs).ok_or(Error::Singular)
}

/// `e^{-rate} e^{rate M} = exp(rate (M - I))`.
pub fn poisson_operator(m: &TransitionMatrix, rate: f64) -> DMatrix<f64> {
    let n = m.n();
    expm(&((m.matrix() - DMatrix::<f64>::identity(n, n)) * rate))
}

/// Matrix exponential by scaling and squaring with a Taylor core.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let norm = a.column_iter().map(|c| c.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let b = a / 2f64.powi(squarings);

    let mut result = DMatrix::<f64>::identity(n, n);
    let mut term = DMatrix::<f64>::identity(n, n);
    for k in 1..=40 {
        term = &term * &b / k as f64;
        result += &term;
        if term.amax() <= f64::EPSILON * 1e-3 * result.amax() {
            break;
        }
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}

/// `sum_m Pr[N=m] M^{m-1} mu`, truncated once `Pr[N > m] < tail_tol`.
pub fn choice_probabilities_series(
    m: &TransitionMatrix,
    mu: &[f64],
    st: &StoppingTime,
    opts: SeriesOptions,
) -> Result<Truncated<Vec<f64>>> {
    let mut v = check_inputs(m, mu)?;
    let mut acc = DVector::zeros(m.n());
    for k in 1..=opts.max_terms as u64 {
        acc.axpy(st.pmf(k)?, &v, 1.0);
        let remaining = st.tail(k + 1)?;
        if remaining < opts.tail_tol {
            return Ok(Truncated { value: acc.as_slice().to_vec(), truncation_tail: remaining });
        }
        v = m.matrix() * v;
    }
    Err(Error::TailNotSummable { tol: opts.tail_tol, terms: opts.max_terms })
}

/// Mean decision time, closed form for geometric and fixed stopping, tail series otherwise.
pub fn mean_decision_time(
    m: &TransitionMatrix,
    mu: &[f64],
    tau: &IterationTimeVector,
    st: &StoppingTime,
) -> Result<f64> {
    let v = check_inputs(m, mu)?;
    let t = check_tau(m, tau)?;
    match st {
        StoppingTime::Geometric { zeta } => Ok(t.dot(&solve_geometric(m, *zeta, &v)?)),
        StoppingTime::Fixed(m0) => {
            let mut x = v;
            let mut total = 0.0;
            for n in 1..=*m0 {
                total += t.dot(&x);
                if n < *m0 {
                    x = m.matrix() * x;
                }
            }
            Ok(total)
        }
        _ => Ok(mean_decision_time_tail_sum(
            m,
            mu,
            tau,
            st,
            SeriesOptions { tail_tol: 1e-15, ..Default::default() },
        )?
        .value),
    }
}

/// `tau' sum_m Pr[N=m] (sum_{n<=m} M^{n-1}) mu`.
pub fn mean_decision_time_nested_sum(
    m: &TransitionMatrix,
    mu: &[f64],
    tau: &IterationTimeVector,
    st: &StoppingTime,
    opts: SeriesOptions,
) -> Result<Truncated<f64>> {
    let mut v = check_inputs(m, mu)?;
    let t = check_tau(m, tau)?;
    let mut partial = 0.0;
    let mut total = 0.0;
    for k in 1..=opts.max_terms as u64 {
        partial += t.dot(&v);
        total += st.pmf(k)? * partial;
        // Ignored stopping mass weighted by its iteration count, E[N; N > k].
        let ignored = st.excess_mean(k) + k as f64 * st.tail(k + 1)?;
        if ignored < opts.tail_tol {
            return Ok(Truncated { value: total, truncation_tail: st.tail(k + 1)? });
        }
        v = m.matrix() * v;
    }
    Err(Error::TailNotSummable { tol: opts.tail_tol, terms: opts.max_terms })
}

/// `tau' sum_n Pr[N>=n] M^{n-1} mu`.
pub fn mean_decision_time_tail_sum(
    m: &TransitionMatrix,
    mu: &[f64],
    tau: &IterationTimeVector,
    st: &StoppingTime,
    opts: SeriesOptions,
) -> Result<Truncated<f64>> {
    if !st.expectation().is_finite() {
        return Err(Error::InfiniteExpectation);
    }
    let mut v = check_inputs(m, mu)?;
    let t = check_tau(m, tau)?;
    let mut total = 0.0;
    for k in 1..=opts.max_terms as u64 {
        total += st.tail(k)? * t.dot(&v);
        if st.excess_mean(k) < opts.tail_tol {
            return Ok(Truncated { value: total, truncation_tail: st.tail(k + 1)? });
        }
        v = m.matrix() * v;
    }
    Err(Error::TailNotSummable { tol: opts.tail_tol, terms: opts.max_terms })
}

/// `p_N` through the eigenvalues of a reversible chain.
pub fn choice_probabilities_spectral(
    d: &SpectralDecomposition,
    mu: &[f64],
    st: &StoppingTime,
) -> Result<Vec<f64>> {
    dist::check_distribution(mu, d.eigenvalues.len())?;
    let op = d.apply(|x| st.shifted_pgf(x));
    Ok((op * DVector::from_column_slice(mu)).as_slice().to_vec())
}

/// Mean decision time through the eigenvalues of a reversible chain.
pub fn mean_decision_time_spectral(
    d: &SpectralDecomposition,
    mu: &[f64],
    tau: &IterationTimeVector,
    st: &StoppingTime,
) -> Result<f64> {
    let n = d.eigenvalues.len();
    dist::check_distribution(mu, n)?;
    if tau.0.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: tau.0.len() });
    }
    let op = d.apply(|x| st.tail_gf(x));
    Ok(DVector::from_column_slice(&tau.0).dot(&(op * DVector::from_column_slice(mu))))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StoppedChoiceResult {
    pub p: Vec<f64>,
    pub mean_decision_time: f64,
    pub truncation_tail: f64,
}

/// Choice law and mean decision time in one call.
pub fn stopped_choice(
    m: &TransitionMatrix,
    mu: &[f64],
    tau: &IterationTimeVector,
    st: &StoppingTime,
) -> Result<StoppedChoiceResult> {
    let p = choice_probabilities_with(m, mu, st, SeriesOptions::default())?;
    Ok(StoppedChoiceResult {
        p: p.value,
        mean_decision_time: mean_decision_time(m, mu, tau, st)?,
        truncation_tail: p.truncation_tail,
    })
}
