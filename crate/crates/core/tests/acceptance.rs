//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits nonzero if any fails.

mod common;

use std::time::{Duration, Instant};

use common::*;
use metropolis_choice::bbc::{estimate_kernel, DriftSchedule, OuParams, RtShape};
use metropolis_choice::chain::build_transition;
use metropolis_choice::dist::uniform;
use metropolis_choice::kernel::DEFAULT_TOL;
use metropolis_choice::simulation::{conjecture_experiment, estimate_choice_distribution, ConjectureOptions};
use metropolis_choice::stopping::{
    choice_probabilities, choice_probabilities_spectral, conditional_iteration_time, mean_decision_time,
    mean_decision_time_nested_sum, mean_decision_time_spectral, mean_decision_time_tail_sum,
    SeriesOptions,
};
use metropolis_choice::{BbcModel, IterationTimeVector, StoppingTime, TransitionMatrix};
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within_budget(start: Instant, budget: Duration) -> (bool, String) {
    let took = start.elapsed();
    (took < budget, format!("{:.2}s of {}s budget", took.as_secs_f64(), budget.as_secs()))
}

fn c1_transitivity_reversibility() -> Outcome {
    let start = Instant::now();
    let mut r = rng(101);
    let transitive = transitive_battery(50, 1);
    let mut worst_transitive = 0.0_f64;
    let mut weakest_perturbed = f64::INFINITY;
    let mut smallest_move = f64::INFINITY;
    for case in &transitive {
        let q = random_nice_q(case.kernel.n(), &mut r);
        let m = build_transition(&q, &case.kernel).unwrap();
        worst_transitive = worst_transitive.max(m.kolmogorov_residual().residual);

        let (bent, moved) = perturb(&case.kernel, &mut r);
        smallest_move = smallest_move.min(moved);
        let m = build_transition(&q, &bent).unwrap();
        weakest_perturbed = weakest_perturbed.min(m.kolmogorov_residual().residual);
    }
    let (fast, budget) = within_budget(start, Duration::from_secs(5));
    outcome(
        worst_transitive <= 1e-10 && weakest_perturbed >= 1e-4 && smallest_move >= 1e-2 && fast,
        format!(
            "max transitive residual {worst_transitive:.3e} (<= 1e-10), min perturbed residual \
             {weakest_perturbed:.3e} (>= 1e-4), smallest entry move {smallest_move:.3} (>= 1e-2), {budget}"
        ),
    )
}

fn c2_explicit_stationary() -> Outcome {
    let start = Instant::now();
    let mut r = rng(202);
    let mut worst = 0.0_f64;
    for case in transitive_battery(50, 2) {
        let d = case.kernel.hastings_decompose(DEFAULT_TOL).unwrap();
        for _ in 0..3 {
            let q = random_nice_q(case.kernel.n(), &mut r);
            let pi = build_transition(&q, &case.kernel).unwrap().stationary_distribution().unwrap();
            worst = worst.max(max_abs_diff(&pi, &d.pi));
        }
    }
    let (fast, budget) = within_budget(start, Duration::from_secs(5));
    outcome(worst <= 1e-10 && fast, format!("max |pi_decomp - pi_stationary| {worst:.3e} (<= 1e-10), {budget}"))
}

type ChainCase = (TransitionMatrix, Vec<f64>, IterationTimeVector);

/// Random ergodic chains with their initial laws and iteration times.
fn ergodic_battery() -> Vec<ChainCase> {
    let mut r = rng(303);
    (0..20)
        .map(|c| {
            let n = 2 + c % 9;
            let m = random_ergodic(n, &mut r);
            let mu = random_distribution(n, &mut r);
            let tau = IterationTimeVector((0..n).map(|_| r.random_range(0.5..3.0)).collect());
            (m, mu, tau)
        })
        .collect()
}

fn c3_geometric_closed_form() -> Outcome {
    let mut worst = 0.0_f64;
    for (m, mu, _) in ergodic_battery() {
        for zeta in [0.1, 0.5, 0.9] {
            let closed = choice_probabilities(&m, &mu, &StoppingTime::geometric(zeta).unwrap()).unwrap();
            let series = power_series(&m, &mu, &geometric_weights(zeta, 1e-15));
            worst = worst.max(max_abs_diff(&closed, &series));
        }
    }
    outcome(worst < 1e-10, format!("max |closed - series| {worst:.3e} (< 1e-10)"))
}

fn c4_poisson_closed_form() -> Outcome {
    let mut worst = 0.0_f64;
    for (m, mu, _) in ergodic_battery() {
        for rate in [0.5, 3.0, 10.0] {
            let closed = choice_probabilities(&m, &mu, &StoppingTime::poisson_shifted(rate).unwrap()).unwrap();
            let series = power_series(&m, &mu, &poisson_weights(rate, 1e-15));
            worst = worst.max(max_abs_diff(&closed, &series));
        }
    }
    outcome(worst < 1e-10, format!("max |closed - series| {worst:.3e} (< 1e-10)"))
}

fn c5_mean_time_forms() -> Outcome {
    let opts = SeriesOptions { tail_tol: 1e-15, ..Default::default() };
    let mut worst = 0.0_f64;
    for (m, mu, tau) in ergodic_battery() {
        let laws = [0.1, 0.5, 0.9]
            .map(|z| StoppingTime::geometric(z).unwrap())
            .into_iter()
            .chain([0.5, 3.0, 10.0].map(|l| StoppingTime::poisson_shifted(l).unwrap()));
        for st in laws {
            let nested = mean_decision_time_nested_sum(&m, &mu, &tau, &st, opts).unwrap().value;
            let tail = mean_decision_time_tail_sum(&m, &mu, &tau, &st, opts).unwrap().value;
            worst = worst.max((nested - tail).abs() / tail.abs());
        }
    }
    outcome(worst < 1e-10, format!("max relative |nested - tail| {worst:.3e} (< 1e-10)"))
}

fn c6_unit_time() -> Outcome {
    let mut worst = 0.0_f64;
    let laws = [
        (StoppingTime::fixed(1).unwrap(), 1.0),
        (StoppingTime::fixed(25).unwrap(), 25.0),
        (StoppingTime::geometric(0.5).unwrap(), 2.0),
        (StoppingTime::geometric(0.9).unwrap(), 10.0),
        (StoppingTime::poisson_shifted(0.5).unwrap(), 1.5),
        (StoppingTime::poisson_shifted(3.0).unwrap(), 4.0),
        (StoppingTime::poisson_shifted(10.0).unwrap(), 11.0),
    ];
    for (m, mu, _) in ergodic_battery() {
        let ones = IterationTimeVector::ones(m.n());
        for (st, expected) in &laws {
            worst = worst.max((mean_decision_time(&m, &mu, &ones, st).unwrap() - expected).abs());
        }
    }
    outcome(worst < 1e-12, format!("max |T_N - E[N]| {worst:.3e} (< 1e-12)"))
}

fn c7_monte_carlo() -> Outcome {
    let start = Instant::now();
    let rt = rt_fixture();
    let spec = k3_process(uniform(3), &rt, RtShape::Constant);
    let m = build_transition(&q3(), &k3()).unwrap();
    let tau = conditional_iteration_time(&q3(), &rt).unwrap();
    let trials = 100_000;
    let mut worst_z = 0.0_f64;
    for (idx, st) in [
        StoppingTime::geometric(0.5).unwrap(),
        StoppingTime::fixed(25).unwrap(),
        StoppingTime::poisson_shifted(3.0).unwrap(),
    ]
    .iter()
    .enumerate()
    {
        let p = choice_probabilities(&m, &uniform(3), st).unwrap();
        let mean = mean_decision_time(&m, &uniform(3), &tau, st).unwrap();
        let est = estimate_choice_distribution(&spec, st, trials, 700 + idx as u64).unwrap();
        for (f, p) in est.frequencies.iter().zip(&p) {
            let sigma = (p * (1.0 - p) / trials as f64).sqrt();
            worst_z = worst_z.max((f - p).abs() / sigma);
        }
        let se = est.mean_decision_time_stderr.unwrap();
        worst_z = worst_z.max((est.mean_decision_time - mean).abs() / se);
    }
    let (fast, budget) = within_budget(start, Duration::from_secs(30));
    outcome(worst_z <= 4.0 && fast, format!("max |z| {worst_z:.2} (<= 4), {budget}"))
}

fn c8_full_chain() -> Outcome {
    let mut r = rng(808);
    let mut min_entry = f64::INFINITY;
    let mut min_gain = f64::INFINITY;
    for c in 0..100 {
        let n = 2 + c % 9;
        let k = random_positive_kernel(n, &mut r);
        let q = random_nice_q(n, &mut r);
        let m = build_transition(&q, &k).unwrap();
        min_entry = min_entry.min(m.min_entry());
        for j in 0..n {
            min_gain = min_gain.min(m.matrix()[(j, j)] - q.prob(j, j));
        }
    }
    outcome(
        min_entry > 0.0 && min_gain > 0.0,
        format!("min M entry {min_entry:.3e} (> 0), min M(j|j) - Q(j|j) {min_gain:.3e} (> 0)"),
    )
}

fn c9_round_trip() -> Outcome {
    let mut worst = 0.0_f64;
    let mut mismatches = 0;
    for case in transitive_battery(50, 1) {
        let n = case.kernel.n();
        let d = case.kernel.hastings_decompose(DEFAULT_TOL).unwrap();
        worst = worst.max(max_abs_diff(&d.pi, &case.pi));
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    let s_true = case.s.as_ref().map_or(1.0, |s| s.get(i, j));
                    worst = worst.max((d.s.get(i, j) - s_true).abs());
                }
            }
        }
        let back = d.reconstruct().unwrap();
        worst = worst.max((back.matrix() - case.kernel.matrix()).amax());
        let s_is_one = d.s.max_abs_deviation_from(1.0) <= DEFAULT_TOL;
        if case.kernel.is_unbiased(DEFAULT_TOL) != s_is_one || d.unbiased != s_is_one {
            mismatches += 1;
        }
    }
    outcome(
        worst <= 1e-10 && mismatches == 0,
        format!("max round-trip error {worst:.3e} (<= 1e-10), unbiased/s=1 mismatches {mismatches}"),
    )
}

/// Plain random-walk oracle for the drift fixture, on a generator unrelated to the library's.
fn drift_oracle(trials: usize) -> f64 {
    let mut r = rand::rngs::StdRng::seed_from_u64(1010);
    let mut up = 0usize;
    for _ in 0..trials {
        let mut x = 0.0_f64;
        loop {
            let e: f64 = r.sample(StandardNormal);
            x += 0.1 + e;
            if x >= 10.0 {
                up += 1;
                break;
            }
            if x <= -10.0 {
                break;
            }
        }
    }
    up as f64 / trials as f64
}

fn c10_ou() -> Outcome {
    let trials = 100_000;
    let sym = OuParams::new(vec![0.7, 0.7], 0.1, DriftSchedule::Constant(1.0), 1.0, 3.0).unwrap();
    let est = estimate_kernel(&BbcModel::Ou(sym), trials, 1001).unwrap();
    let sigma = (0.25 / trials as f64).sqrt();
    let z = [(0, 1), (1, 0)]
        .map(|(i, j)| (est.kernel.accept(i, j) - 0.5).abs() / sigma)
        .into_iter()
        .fold(0.0, f64::max);

    let drift = OuParams::new(vec![0.1, 0.0], 0.0, DriftSchedule::Constant(1.0), 1.0, 10.0).unwrap();
    let est = estimate_kernel(&BbcModel::Ou(drift), trials, 1002).unwrap();
    let rho = est.kernel.accept(0, 1);
    let oracle = drift_oracle(1_000_000);
    let anchor = 1.0 / (1.0 + (-2.0_f64).exp());
    outcome(
        z <= 4.0 && (rho - oracle).abs() <= 0.01,
        format!(
            "symmetric max |z| {z:.2} (<= 4); drift rho {rho:.4} vs oracle {oracle:.4} (+-0.01), \
             continuum anchor {anchor:.4}"
        ),
    )
}

fn c11_conjecture() -> Outcome {
    let start = Instant::now();
    let rt = rt_fixture();
    let spec = k3_process(uniform(3), &rt, RtShape::Constant);
    let deadlines = [10.0, 50.0, 250.0, 1250.0];
    let res = conjecture_experiment(&spec, &deadlines, 100_000, 1111, &ConjectureOptions::default()).unwrap();
    let expected = [4.0 / 7.0, 0.9 / 3.5, 0.6 / 3.5];
    let pi_star_err = max_abs_diff(&res.pi_star, &expected);
    let mut monotone = true;
    for k in 1..deadlines.len() {
        let band = 4.0 * (res.tv_stderr[k].powi(2) + res.tv_stderr[k - 1].powi(2)).sqrt();
        monotone &= res.tv_distance[k] <= res.tv_distance[k - 1] + band;
    }
    let last = *res.tv_distance.last().unwrap();
    let (fast, budget) = within_budget(start, Duration::from_secs(120));
    let tv: Vec<String> = res.tv_distance.iter().map(|v| format!("{v:.4}")).collect();
    outcome(
        pi_star_err < 1e-6 && monotone && last < 0.02 && fast,
        format!(
            "pi* error {pi_star_err:.1e}, tv [{}] nonincreasing at 4 sigma: {monotone}, tv(1250) {last:.4} (< 0.02), {budget}",
            tv.join(", ")
        ),
    )
}

fn c12_spectral() -> Outcome {
    let mut r = rng(1212);
    let mut chains = vec![build_transition(&q3(), &k3()).unwrap()];
    for case in transitive_battery(20, 12) {
        let q = random_nice_q(case.kernel.n(), &mut r);
        chains.push(build_transition(&q, &case.kernel).unwrap());
    }
    let laws = [
        StoppingTime::fixed(1).unwrap(),
        StoppingTime::fixed(7).unwrap(),
        StoppingTime::geometric(0.5).unwrap(),
        StoppingTime::geometric(0.9).unwrap(),
        StoppingTime::poisson_shifted(3.0).unwrap(),
        StoppingTime::poisson_shifted(10.0).unwrap(),
    ];
    let mut worst_p = 0.0_f64;
    let mut worst_t = 0.0_f64;
    for m in &chains {
        let n = m.n();
        let mu = random_distribution(n, &mut r);
        let tau = IterationTimeVector((0..n).map(|_| r.random_range(0.5..3.0)).collect());
        let pi = m.stationary_distribution().unwrap();
        let d = m.spectral_decompose(&pi).unwrap();
        for st in &laws {
            let spectral = choice_probabilities_spectral(&d, &mu, st).unwrap();
            worst_p = worst_p.max(max_abs_diff(&spectral, &choice_probabilities(m, &mu, st).unwrap()));
            let direct = mean_decision_time(m, &mu, &tau, st).unwrap();
            worst_t = worst_t.max((mean_decision_time_spectral(&d, &mu, &tau, st).unwrap() - direct).abs() / direct);
        }
    }
    outcome(
        worst_p <= 1e-9 && worst_t <= 1e-9,
        format!("max |p spectral - direct| {worst_p:.3e} (<= 1e-9), relative mean-time gap {worst_t:.3e}"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("transitivity <=> reversibility", c1_transitivity_reversibility),
        ("explicit stationary law", c2_explicit_stationary),
        ("geometric closed form", c3_geometric_closed_form),
        ("poisson closed form", c4_poisson_closed_form),
        ("mean decision time forms", c5_mean_time_forms),
        ("unit-time identity", c6_unit_time),
        ("monte carlo vs analytic", c7_monte_carlo),
        ("full chain positivity", c8_full_chain),
        ("decomposition round trip", c9_round_trip),
        ("OU symmetry and drift", c10_ou),
        ("time-weighted stationary conjecture", c11_conjecture),
        ("spectral route", c12_spectral),
    ];

    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let o = run();
        if !o.pass {
            failed += 1;
        }
        println!("criterion {:>2} {} {name}: {}", k + 1, if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
