//! The Metropolis chain of incumbents.
//!
//! Matrices here are column stochastic: column `j` holds the law of the next state
//! given the current state `j`, so `m[(i, j)] = M(i|j)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::dist;
use crate::error::{Error, Result};
use crate::kernel::{cycle_discrepancy, for_each_triple, StochasticChoiceKernel};

/// Tolerance on column sums of exploration and transition matrices.
pub const COLUMN_TOL: f64 = 1e-12;

/// Detailed-balance residual below which a chain is treated as reversible.
pub const REVERSIBILITY_TOL: f64 = 1e-9;

fn check_columns(m: &DMatrix<f64>) -> Result<()> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::NonSquare { rows: n, bad_row: 0, len: m.ncols() });
    }
    if n < 2 {
        return Err(Error::MenuTooSmall(n));
    }
    for j in 0..n {
        for i in 0..n {
            let v = m[(i, j)];
            if !v.is_finite() || v < 0.0 {
                return Err(Error::NegativeEntry(i, j, v));
            }
        }
        let sum = m.column(j).sum();
        if (sum - 1.0).abs() > COLUMN_TOL {
            return Err(Error::ColumnNotStochastic(j, sum));
        }
    }
    Ok(())
}

fn matrix_from_columns(columns: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = columns.len();
    if let Some((c, col)) = columns.iter().enumerate().find(|(_, c)| c.len() != n) {
        return Err(Error::NonSquare { rows: n, bad_row: c, len: col.len() });
    }
    Ok(DMatrix::from_fn(n, n, |i, j| columns[j][i]))
}

fn to_columns(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.column_iter().map(|c| c.iter().copied().collect()).collect()
}

/// Proposal mechanism `Q(i|j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplorationMatrix {
    q: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NicenessReport {
    pub is_symmetric: bool,
    pub min_offdiag: f64,
    pub is_nice: bool,
}

impl ExplorationMatrix {
    pub fn from_matrix(q: DMatrix<f64>) -> Result<(Self, NicenessReport)> {
        check_columns(&q)?;
        let e = Self { q };
        let report = e.niceness();
        Ok((e, report))
    }

    /// `columns[j][i] = Q(i|j)`.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<(Self, NicenessReport)> {
        Self::from_matrix(matrix_from_columns(columns)?)
    }

    /// Uniform proposals over the other alternatives, zero diagonal.
    pub fn uniform_off_diagonal(n: usize) -> Self {
        assert!(n >= 2);
        let w = 1.0 / (n - 1) as f64;
        Self { q: DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { w }) }
    }

    pub fn n(&self) -> usize {
        self.q.nrows()
    }

    #[inline]
    pub fn prob(&self, proposal: usize, incumbent: usize) -> f64 {
        self.q[(proposal, incumbent)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn to_columns(&self) -> Vec<Vec<f64>> {
        to_columns(&self.q)
    }

    pub fn niceness(&self) -> NicenessReport {
        let n = self.n();
        let mut is_symmetric = true;
        let mut min_offdiag = f64::INFINITY;
        for j in 0..n {
            for i in 0..n {
                if i == j {
                    continue;
                }
                min_offdiag = min_offdiag.min(self.q[(i, j)]);
                if (self.q[(i, j)] - self.q[(j, i)]).abs() > COLUMN_TOL {
                    is_symmetric = false;
                }
            }
        }
        NicenessReport { is_symmetric, min_offdiag, is_nice: is_symmetric && min_offdiag > 0.0 }
    }

    pub fn has_null_diagonal(&self) -> std::result::Result<(), (usize, f64)> {
        match (0..self.n()).find(|&j| self.q[(j, j)] != 0.0) {
            Some(j) => Err((j, self.q[(j, j)])),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub exploration: ExplorationMatrix,
    pub kernel: StochasticChoiceKernel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    m: DMatrix<f64>,
    provenance: Option<Box<Provenance>>,
}

impl TransitionMatrix {
    /// Wraps an arbitrary column-stochastic matrix.
    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        check_columns(&m)?;
        Ok(Self { m, provenance: None })
    }

    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        Self::from_matrix(matrix_from_columns(columns)?)
    }

    pub fn identity(n: usize) -> Self {
        Self { m: DMatrix::identity(n, n), provenance: None }
    }

    pub fn n(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn provenance(&self) -> Option<&Provenance> {
        self.provenance.as_deref()
    }

    pub fn to_columns(&self) -> Vec<Vec<f64>> {
        to_columns(&self.m)
    }

    pub fn min_entry(&self) -> f64 {
        self.m.min()
    }

    /// `M mu`, the law after one step from `mu`.
    pub fn step(&self, mu: &[f64]) -> Vec<f64> {
        (&self.m * DVector::from_column_slice(mu)).as_slice().to_vec()
    }

    /// True when the positive-entry digraph is strongly connected and aperiodic.
    pub fn is_ergodic(&self) -> Result<()> {
        let n = self.n();
        let positive = |from: usize, to: usize| self.m[(to, from)] > 0.0;

        // BFS levels from state 0 along forward edges.
        let mut level = vec![usize::MAX; n];
        let mut queue = std::collections::VecDeque::from([0usize]);
        level[0] = 0;
        while let Some(u) = queue.pop_front() {
            for v in 0..n {
                if level[v] == usize::MAX && positive(u, v) {
                    level[v] = level[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        if let Some(v) = level.iter().position(|&l| l == usize::MAX) {
            return Err(Error::NotErgodic(format!("state {v} is unreachable from state 0")));
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for v in 0..n {
                if !seen[v] && positive(v, u) {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        if let Some(v) = seen.iter().position(|s| !s) {
            return Err(Error::NotErgodic(format!("state 0 is unreachable from state {v}")));
        }

        // Period = gcd over edges u -> v of level[u] + 1 - level[v].
        let mut period = 0usize;
        for u in 0..n {
            for v in 0..n {
                if positive(u, v) {
                    let d = (level[u] + 1).abs_diff(level[v]);
                    period = gcd(period, d);
                }
            }
        }
        if period != 1 {
            return Err(Error::NotErgodic(format!("chain is periodic with period {period}")));
        }
        Ok(())
    }

    pub fn stationary_distribution(&self) -> Result<Vec<f64>> {
        Ok(self.stationary_report()?.pi)
    }

    /// Stationary law from a dense LU solve of `(M - I) pi = 0` with one equation
    /// replaced by the normalization `sum(pi) = 1`.
    pub fn stationary_report(&self) -> Result<StationaryReport> {
        self.is_ergodic()?;
        let n = self.n();
        let mut a = &self.m - DMatrix::<f64>::identity(n, n);
        for j in 0..n {
            a[(n - 1, j)] = 1.0;
        }
        let mut b = DVector::zeros(n);
        b[n - 1] = 1.0;
        let lu = a.clone().lu();
        let mut x = lu.solve(&b).ok_or(Error::Singular)?;
        // One step of iterative refinement.
        let r = &b - &a * &x;
        if let Some(dx) = lu.solve(&r) {
            x += dx;
        }
        let pi: Vec<f64> = x.iter().copied().collect();
        let mpi = &self.m * &x;
        let residual = (mpi - &x).amax();
        let condition = lu
            .try_inverse()
            .map(|inv| one_norm(&a) * one_norm(&inv))
            .unwrap_or(f64::INFINITY);
        Ok(StationaryReport { pi, residual, condition })
    }

    pub fn detailed_balance_residual(&self, pi: &[f64]) -> Result<DetailedBalance> {
        let n = self.n();
        if pi.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: pi.len() });
        }
        let mut out = DetailedBalance { residual: 0.0, witness: None };
        for j in 0..n {
            for i in j + 1..n {
                let d = (self.m[(i, j)] * pi[j] - self.m[(j, i)] * pi[i]).abs();
                if out.witness.is_none() || d > out.residual {
                    out = DetailedBalance { residual: d, witness: Some([i, j]) };
                }
            }
        }
        Ok(out)
    }

    /// Largest cycle-product difference over triples of distinct states.
    pub fn kolmogorov_residual(&self) -> KolmogorovResidual {
        let mut out = KolmogorovResidual { residual: 0.0, witness: None };
        for_each_triple(self.n(), |i, j, k| {
            let d = cycle_discrepancy(&self.m, i, j, k);
            if out.witness.is_none() || d > out.residual {
                out = KolmogorovResidual { residual: d, witness: Some([i, j, k]) };
            }
        });
        out
    }

    pub fn balance_report(&self, pi: &[f64]) -> Result<BalanceReport> {
        let db = self.detailed_balance_residual(pi)?;
        let kr = self.kolmogorov_residual();
        Ok(BalanceReport {
            max_detailed_balance_residual: db.residual,
            detailed_balance_witness: db.witness,
            max_kolmogorov_residual: kr.residual,
            kolmogorov_witness: kr.witness,
        })
    }

    /// Eigendecomposition of a chain reversible with respect to `pi`.
    pub fn spectral_decompose(&self, pi: &[f64]) -> Result<SpectralDecomposition> {
        let n = self.n();
        dist::check_full_support(pi, n)?;
        let db = self.detailed_balance_residual(pi)?;
        if db.residual > REVERSIBILITY_TOL {
            return Err(Error::NotReversible(db.residual));
        }
        let sqrt_pi: Vec<f64> = pi.iter().map(|p| p.sqrt()).collect();
        // S = D^{-1/2} M D^{1/2}, D = diag(pi); symmetric under detailed balance.
        let mut s = DMatrix::from_fn(n, n, |i, j| self.m[(i, j)] * sqrt_pi[j] / sqrt_pi[i]);
        s = (&s + s.transpose()) * 0.5;
        let eig = SymmetricEigen::try_new(s, f64::EPSILON, 0)
            .ok_or_else(|| Error::Eigen("symmetric eigensolver did not converge".into()))?;

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let eigenvalues: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        let mut v = DMatrix::from_fn(n, n, |i, c| eig.eigenvectors[(i, order[c])]);
        if v.column(0).sum() < 0.0 {
            v.column_mut(0).neg_mut();
        }
        let basis = DMatrix::from_fn(n, n, |i, c| sqrt_pi[i] * v[(i, c)]);
        let basis_inverse = DMatrix::from_fn(n, n, |c, i| v[(i, c)] / sqrt_pi[i]);

        let mut decomposition = SpectralDecomposition {
            eigenvalues,
            basis,
            basis_inverse,
            pi_used: pi.to_vec(),
            reconstruction_error: 0.0,
        };
        decomposition.reconstruction_error = (decomposition.apply(|x| x) - &self.m).amax();
        Ok(decomposition)
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn one_norm(m: &DMatrix<f64>) -> f64 {
    m.column_iter().map(|c| c.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// Metropolis transition `M(i|j) = Q(i|j) rho(i|j)` for `i != j`, with the diagonal
/// absorbing the rejected and self-proposed mass.
pub fn build_transition(
    q: &ExplorationMatrix,
    kernel: &StochasticChoiceKernel,
) -> Result<TransitionMatrix> {
    let n = q.n();
    if kernel.n() != n {
        return Err(Error::DimensionMismatch { expected: n, found: kernel.n() });
    }
    let mut m = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut moved = 0.0;
        for i in 0..n {
            if i != j {
                let v = q.prob(i, j) * kernel.accept(i, j);
                m[(i, j)] = v;
                moved += v;
            }
        }
        m[(j, j)] = 1.0 - moved;
    }
    if kernel.is_positive() && q.niceness().is_nice {
        assert!(m.min() > 0.0, "positive kernel with nice exploration must give a positive chain");
    }
    Ok(TransitionMatrix {
        m,
        provenance: Some(Box::new(Provenance { exploration: q.clone(), kernel: kernel.clone() })),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationaryReport {
    pub pi: Vec<f64>,
    /// `max |M pi - pi|`.
    pub residual: f64,
    /// 1-norm condition number of the bordered system; informational only.
    pub condition: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DetailedBalance {
    pub residual: f64,
    pub witness: Option<[usize; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KolmogorovResidual {
    pub residual: f64,
    pub witness: Option<[usize; 3]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BalanceReport {
    pub max_detailed_balance_residual: f64,
    pub detailed_balance_witness: Option<[usize; 2]>,
    pub max_kolmogorov_residual: f64,
    pub kolmogorov_witness: Option<[usize; 3]>,
}

/// `M = U diag(eigenvalues) U^{-1}` for a reversible chain.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition {
    /// Sorted descending.
    pub eigenvalues: Vec<f64>,
    /// Columns are right eigenvectors of `M`; the first is `pi_used`.
    pub basis: DMatrix<f64>,
    pub basis_inverse: DMatrix<f64>,
    pub pi_used: Vec<f64>,
    pub reconstruction_error: f64,
}

impl SpectralDecomposition {
    /// `U diag(f(lambda_k)) U^{-1}`.
    pub fn apply(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let mut scaled = self.basis.clone();
        for (c, &lambda) in self.eigenvalues.iter().enumerate() {
            scaled.column_mut(c).scale_mut(f(lambda));
        }
        scaled * &self.basis_inverse
    }
}
