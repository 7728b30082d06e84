//! Random fixtures shared by the integration tests.
#![allow(dead_code)]

use metropolis_choice::bbc::{MeanResponseTimes, RtShape, TabularBbc};
use metropolis_choice::chain::{ExplorationMatrix, TransitionMatrix};
use metropolis_choice::kernel::{luce_kernel, StochasticChoiceKernel, SymmetricWeights};
use metropolis_choice::simulation::ProcessSpec;
use metropolis_choice::BbcModel;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_distribution<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = w.iter().sum();
    w.iter().map(|x| x / total).collect()
}

/// Symmetric weights keeping every Luce entry within `[0.0125, 0.98]`.
pub fn random_admissible_s<R: Rng>(pi: &[f64], rng: &mut R) -> SymmetricWeights {
    let n = pi.len();
    let mut table = vec![vec![1.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let bound = (pi[i] + pi[j]) / pi[i].max(pi[j]);
            let v = rng.random_range(0.25..0.98) * bound;
            table[i][j] = v;
            table[j][i] = v;
        }
    }
    SymmetricWeights::from_fn(n, |i, j| table[i][j])
}

pub struct TransitiveCase {
    pub pi: Vec<f64>,
    /// `None` means `s = 1`.
    pub s: Option<SymmetricWeights>,
    pub kernel: StochasticChoiceKernel,
}

/// Even indices use `s = 1`, odd ones a random admissible `s`.
pub fn transitive_battery(count: usize, seed: u64) -> Vec<TransitiveCase> {
    let mut r = rng(seed);
    (0..count)
        .map(|c| {
            let n = 3 + c % 6;
            let pi = random_distribution(n, &mut r);
            let s = (c % 2 == 1).then(|| random_admissible_s(&pi, &mut r));
            let kernel = luce_kernel(&pi, s.as_ref()).unwrap();
            TransitiveCase { pi, s, kernel }
        })
        .collect()
}

/// Cyclic (rock-paper-scissors) perturbation: `rho(i|j)` moves up by a random amount in
/// `[0.05, 0.25]` when `(i - j) mod n` lies in the first half of the cycle and down otherwise,
/// shrunk to stay inside `[0.001, 0.999]`. Returns the kernel and the smallest entry move.
pub fn perturb<R: Rng>(k: &StochasticChoiceKernel, rng: &mut R) -> (StochasticChoiceKernel, f64) {
    let n = k.n();
    let mut rho = k.matrix().clone();
    let mut smallest = f64::INFINITY;
    for j in 0..n {
        for i in 0..n {
            if i == j {
                continue;
            }
            let old = rho[(i, j)];
            let offset = (i + n - j) % n;
            let up = 2 * offset < n || (2 * offset == n && i > j);
            let size = rng.random_range(0.05..0.25);
            let v = if up { (old + size).min(0.999) } else { (old - size).max(0.001) };
            smallest = smallest.min((v - old).abs());
            rho[(i, j)] = v;
        }
    }
    (StochasticChoiceKernel::from_matrix(rho).unwrap(), smallest)
}

pub fn random_positive_kernel<R: Rng>(n: usize, rng: &mut R) -> StochasticChoiceKernel {
    let rho = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { rng.random_range(0.01..0.99) });
    StochasticChoiceKernel::from_matrix(rho).unwrap()
}

/// Symmetric positive proposals scaled so the busiest column has no self-proposal mass;
/// the other diagonals take the residual.
pub fn random_nice_q<R: Rng>(n: usize, rng: &mut R) -> ExplorationMatrix {
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let v = rng.random_range(0.5..1.5);
            w[(i, j)] = v;
            w[(j, i)] = v;
        }
    }
    let scale = (0..n).map(|j| w.column(j).sum()).fold(0.0, f64::max);
    let mut q = w / scale;
    for j in 0..n {
        let off: f64 = (0..n).filter(|&i| i != j).map(|i| q[(i, j)]).sum();
        q[(j, j)] = (1.0 - off).max(0.0);
    }
    let (q, report) = ExplorationMatrix::from_matrix(q).unwrap();
    assert!(report.is_nice);
    q
}

/// Strictly positive column-stochastic matrix, generally not reversible.
pub fn random_ergodic<R: Rng>(n: usize, rng: &mut R) -> TransitionMatrix {
    let mut m = DMatrix::from_fn(n, n, |_, _| rng.random_range(0.05..1.0));
    for j in 0..n {
        let total = m.column(j).sum();
        m.column_mut(j).scale_mut(1.0 / total);
        // Close the column exactly on the diagonal.
        let off: f64 = (0..n).filter(|&i| i != j).map(|i| m[(i, j)]).sum();
        m[(j, j)] = 1.0 - off;
    }
    TransitionMatrix::from_matrix(m).unwrap()
}

pub fn k3() -> StochasticChoiceKernel {
    luce_kernel(&[0.5, 0.3, 0.2], None).unwrap()
}

pub fn q3() -> ExplorationMatrix {
    ExplorationMatrix::uniform_off_diagonal(3)
}

/// Mean response times ab = ac = 2, bc = 1.
pub fn rt_fixture() -> MeanResponseTimes {
    MeanResponseTimes::from_rows(&[vec![0.0, 2.0, 2.0], vec![2.0, 0.0, 1.0], vec![2.0, 1.0, 0.0]]).unwrap()
}

pub fn k3_process(mu: Vec<f64>, rt: &MeanResponseTimes, shape: RtShape) -> ProcessSpec {
    let bbc = BbcModel::Tabular(TabularBbc::new(k3(), rt, shape).unwrap());
    ProcessSpec::new(mu, q3(), bbc).unwrap()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// `sum_m w[m] M^m mu` for a weight table starting at power zero.
pub fn power_series(m: &TransitionMatrix, mu: &[f64], weights: &[f64]) -> Vec<f64> {
    let mut v = nalgebra::DVector::from_column_slice(mu);
    let mut acc = nalgebra::DVector::zeros(mu.len());
    for &w in weights {
        acc += &v * w;
        v = m.matrix() * v;
    }
    acc.as_slice().to_vec()
}

/// Geometric stopping weights `(1 - zeta) zeta^k`, cut once the remaining mass is below `tail`.
pub fn geometric_weights(zeta: f64, tail: f64) -> Vec<f64> {
    let mut w = Vec::new();
    let mut remaining = 1.0;
    while remaining >= tail {
        w.push((1.0 - zeta) * remaining);
        remaining *= zeta;
    }
    w
}

/// Poisson(rate) probabilities, cut once the summed remainder is below `tail`.
pub fn poisson_weights(rate: f64, tail: f64) -> Vec<f64> {
    let len = (rate + 40.0 * rate.sqrt() + 60.0) as usize;
    let mut p = Vec::with_capacity(len);
    let mut log_p = -rate;
    for k in 0..len {
        if k > 0 {
            log_p += rate.ln() - (k as f64).ln();
        }
        p.push(log_p.exp());
    }
    // Smallest cut whose ignored remainder is below `tail`.
    let mut suffix = vec![0.0; len + 1];
    for k in (0..len).rev() {
        suffix[k] = suffix[k + 1] + p[k];
    }
    let cut = (1..=len).find(|&k| suffix[k] < tail).unwrap_or(len);
    p.truncate(cut);
    p
}
