//! Binary stochastic choice kernels and their preferential diagnostics.
//!
//! A kernel assigns to every ordered pair of distinct alternatives `(i, j)` the
//! probability `rho(i|j)` that proposal `i` is accepted against incumbent `j`.
//! The diagonal carries no meaning. It is stored as the sentinel `1.0` and no
//! diagnostic in this module ever reads it.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::dist;
use crate::error::{Error, Result};

/// Default algebraic tolerance for transitivity and unbiasedness checks.
pub const DEFAULT_TOL: f64 = 1e-9;

/// Value written on the diagonal of every validated kernel.
pub const DIAGONAL_SENTINEL: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct StochasticChoiceKernel {
    rho: DMatrix<f64>,
}

impl StochasticChoiceKernel {
    /// Validates a row-major grid where `raw[i][j]` is `rho(i|j)`.
    pub fn from_rows(raw: &[Vec<f64>]) -> Result<Self> {
        let n = raw.len();
        for (r, row) in raw.iter().enumerate() {
            if row.len() != n {
                return Err(Error::NonSquare { rows: n, bad_row: r, len: row.len() });
            }
        }
        Self::from_matrix(DMatrix::from_fn(n, n, |i, j| raw[i][j]))
    }

    /// Validates a dense matrix with `m[(i, j)] = rho(i|j)`.
    pub fn from_matrix(mut rho: DMatrix<f64>) -> Result<Self> {
        let n = rho.nrows();
        if rho.ncols() != n {
            return Err(Error::NonSquare { rows: n, bad_row: 0, len: rho.ncols() });
        }
        if n < 2 {
            return Err(Error::MenuTooSmall(n));
        }
        for j in 0..n {
            for i in 0..n {
                if i == j {
                    rho[(i, j)] = DIAGONAL_SENTINEL;
                    continue;
                }
                let v = rho[(i, j)];
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::EntryOutOfRange(i, j, v));
                }
            }
        }
        Ok(Self { rho })
    }

    pub fn n(&self) -> usize {
        self.rho.nrows()
    }

    /// Acceptance probability of `proposal` against `incumbent`.
    #[inline]
    pub fn accept(&self, proposal: usize, incumbent: usize) -> f64 {
        self.rho[(proposal, incumbent)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.rho
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n()).map(|i| self.rho.row(i).iter().copied().collect()).collect()
    }

    /// Returns a copy with every diagonal entry replaced by `value`, bypassing validation.
    ///
    /// Only useful for checking that diagnostics ignore the diagonal.
    #[doc(hidden)]
    pub fn with_diagonal(&self, value: f64) -> Self {
        let mut rho = self.rho.clone();
        rho.fill_diagonal(value);
        Self { rho }
    }

    fn off_diagonal(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let n = self.n();
        (0..n).flat_map(move |j| {
            (0..n).filter(move |&i| i != j).map(move |i| (i, j, self.rho[(i, j)]))
        })
    }

    pub fn is_positive(&self) -> bool {
        self.off_diagonal().all(|(_, _, v)| v > 0.0 && v < 1.0)
    }

    pub fn is_unbiased(&self, tol: f64) -> bool {
        let n = self.n();
        (0..n).all(|i| {
            (i + 1..n).all(|j| (1.0 - self.rho[(i, j)] - self.rho[(j, i)]).abs() <= tol)
        })
    }

    /// Product-rule diagnostic over all unordered triples.
    pub fn check_transitivity(&self, tol: f64) -> TransitivityReport {
        let mut worst = 0.0_f64;
        let mut worst_triple = None;
        for_each_triple(self.n(), |i, j, k| {
            let d = cycle_discrepancy(&self.rho, i, j, k);
            if worst_triple.is_none() || d > worst {
                worst = d;
                worst_triple = Some([i, j, k]);
            }
        });
        TransitivityReport {
            max_cycle_discrepancy: worst,
            worst_triple,
            is_transitive: worst <= tol,
        }
    }

    /// Hastings decomposition with reference alternative 0.
    pub fn hastings_decompose(&self, tol: f64) -> Result<HastingsDecomposition> {
        self.hastings_decompose_from(0, tol)
    }

    /// Hastings decomposition `rho(i|j) = s(i,j) pi(i) / (pi(i) + pi(j))` computed with
    /// `reference` as the anchor of the likelihood ratios.
    pub fn hastings_decompose_from(
        &self,
        reference: usize,
        tol: f64,
    ) -> Result<HastingsDecomposition> {
        let n = self.n();
        if reference >= n {
            return Err(Error::DimensionMismatch { expected: n, found: reference });
        }
        if let Some((i, j, v)) = self.off_diagonal().find(|&(_, _, v)| !(v > 0.0 && v < 1.0)) {
            return Err(Error::NotPositive(i, j, v));
        }
        let report = self.check_transitivity(tol);
        if !report.is_transitive {
            return Err(Error::NotTransitive(report));
        }

        let r = reference;
        let ratios: Vec<f64> = (0..n)
            .map(|j| if j == r { 1.0 } else { self.rho[(j, r)] / self.rho[(r, j)] })
            .collect();
        let pi = dist::normalize(&ratios)
            .ok_or_else(|| Error::InvalidDistribution("degenerate likelihood ratios".into()))?;

        // The kernel is only symmetric-compatible up to `tol`; average the two
        // orientations so `s` is exactly symmetric.
        let s = SymmetricWeights::from_fn(n, |i, j| {
            let a = self.rho[(i, j)] * (pi[i] + pi[j]) / pi[i];
            let b = self.rho[(j, i)] * (pi[i] + pi[j]) / pi[j];
            0.5 * (a + b)
        });
        let unbiased = s.values.iter().all(|v| (v - 1.0).abs() <= tol);
        Ok(HastingsDecomposition { pi, s, unbiased })
    }
}

/// `|rho(j|i) rho(k|j) rho(i|k) - rho(k|i) rho(j|k) rho(i|j)|` for a distinct triple.
#[inline]
pub(crate) fn cycle_discrepancy(p: &DMatrix<f64>, i: usize, j: usize, k: usize) -> f64 {
    let forward = p[(j, i)] * p[(k, j)] * p[(i, k)];
    let backward = p[(k, i)] * p[(j, k)] * p[(i, j)];
    (forward - backward).abs()
}

pub(crate) fn for_each_triple(n: usize, mut f: impl FnMut(usize, usize, usize)) {
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                f(i, j, k);
            }
        }
    }
}

/// Builds the kernel `rho(i|j) = s(i,j) pi(i) / (pi(i) + pi(j))`. `s = None` means `s = 1`.
pub fn luce_kernel(pi: &[f64], s: Option<&SymmetricWeights>) -> Result<StochasticChoiceKernel> {
    let n = pi.len();
    if n < 2 {
        return Err(Error::MenuTooSmall(n));
    }
    dist::check_full_support(pi, n)?;
    if let Some(s) = s {
        if s.n() != n {
            return Err(Error::DimensionMismatch { expected: n, found: s.n() });
        }
    }
    let mut rho = DMatrix::from_element(n, n, DIAGONAL_SENTINEL);
    for j in 0..n {
        for i in 0..n {
            if i == j {
                continue;
            }
            let weight = s.map_or(1.0, |s| s.get(i, j));
            let v = weight * pi[i] / (pi[i] + pi[j]);
            if v > 1.0 {
                return Err(Error::EntryOutOfRange(i, j, v));
            }
            rho[(i, j)] = v;
        }
    }
    StochasticChoiceKernel::from_matrix(rho)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransitivityReport {
    pub max_cycle_discrepancy: f64,
    /// `None` when the menu has fewer than three alternatives.
    pub worst_triple: Option<[usize; 3]>,
    pub is_transitive: bool,
}

/// Positive reals on unordered pairs of distinct alternatives.
///
/// Symmetry is structural: `get(i, j)` and `get(j, i)` read the same slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricWeights {
    n: usize,
    values: Vec<f64>,
}

impl SymmetricWeights {
    pub fn constant(n: usize, value: f64) -> Self {
        Self { n, values: vec![value; n * n.saturating_sub(1) / 2] }
    }

    /// Calls `f(i, j)` once per pair with `i < j`.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                values.push(f(i, j));
            }
        }
        Self { n, values }
    }

    /// Reads the upper triangle of a square grid after checking it is symmetric and positive.
    pub fn from_rows(raw: &[Vec<f64>], tol: f64) -> Result<Self> {
        let n = raw.len();
        for (r, row) in raw.iter().enumerate() {
            if row.len() != n {
                return Err(Error::NonSquare { rows: n, bad_row: r, len: row.len() });
            }
        }
        for i in 0..n {
            for j in i + 1..n {
                let (a, b) = (raw[i][j], raw[j][i]);
                if !(a > 0.0 && a.is_finite()) {
                    return Err(Error::InvalidSymmetricWeight(i, j, a));
                }
                if (a - b).abs() > tol {
                    return Err(Error::InvalidSymmetricWeight(j, i, b));
                }
            }
        }
        Ok(Self::from_fn(n, |i, j| raw[i][j]))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn slot(&self, i: usize, j: usize) -> usize {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        debug_assert!(a != b && b < self.n);
        a * (2 * self.n - a - 1) / 2 + (b - a - 1)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[self.slot(i, j)]
    }

    /// Full grid with zero diagonal.
    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| if i == j { 0.0 } else { self.get(i, j) }).collect())
            .collect()
    }

    pub fn max_abs_deviation_from(&self, value: f64) -> f64 {
        self.values.iter().map(|v| (v - value).abs()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HastingsDecomposition {
    pub pi: Vec<f64>,
    pub s: SymmetricWeights,
    pub unbiased: bool,
}

impl HastingsDecomposition {
    /// Rebuilds the kernel from `(pi, s)`.
    pub fn reconstruct(&self) -> Result<StochasticChoiceKernel> {
        luce_kernel(&self.pi, Some(&self.s))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k3() -> StochasticChoiceKernel {
        luce_kernel(&[0.5, 0.3, 0.2], None).unwrap()
    }

    fn perturbed_k3() -> StochasticChoiceKernel {
        let mut m = k3().matrix().clone();
        m[(1, 0)] = 0.5;
        StochasticChoiceKernel::from_matrix(m).unwrap()
    }

    #[test]
    fn k3_fixture_entries() {
        let k = k3();
        let expect = [
            (0, 1, 0.625),
            (1, 0, 0.375),
            (0, 2, 5.0 / 7.0),
            (2, 0, 2.0 / 7.0),
            (1, 2, 0.6),
            (2, 1, 0.4),
        ];
        for (i, j, v) in expect {
            assert!((k.accept(i, j) - v).abs() < 1e-15, "rho({i}|{j})");
        }
    }

    #[test]
    fn validation_errors() {
        let ok = StochasticChoiceKernel::from_rows(&[vec![f64::NAN, 0.5], vec![0.5, 7.0]]).unwrap();
        assert_eq!(ok.accept(0, 0), DIAGONAL_SENTINEL);
        assert_eq!(ok.accept(1, 1), DIAGONAL_SENTINEL);

        let mut raw = vec![vec![0.5; 3]; 3];
        raw[1][0] = 1.2;
        assert!(matches!(
            StochasticChoiceKernel::from_rows(&raw),
            Err(Error::EntryOutOfRange(1, 0, _))
        ));
        assert!(matches!(
            StochasticChoiceKernel::from_rows(&[vec![0.5, 0.5], vec![0.5]]),
            Err(Error::NonSquare { .. })
        ));
        assert!(matches!(
            StochasticChoiceKernel::from_rows(&[vec![0.5]]),
            Err(Error::MenuTooSmall(1))
        ));
        let mut raw = vec![vec![0.5; 3]; 3];
        raw[2][1] = f64::NAN;
        assert!(StochasticChoiceKernel::from_rows(&raw).is_err());
    }

    #[test]
    fn positivity() {
        assert!(k3().is_positive());
        for bad in [0.0, 1.0] {
            let mut m = k3().matrix().clone();
            m[(0, 1)] = bad;
            assert!(!StochasticChoiceKernel::from_matrix(m).unwrap().is_positive());
        }
    }

    #[test]
    fn unbiasedness() {
        assert!(k3().is_unbiased(1e-12));
        let biased =
            StochasticChoiceKernel::from_rows(&[vec![1.0, 0.4], vec![0.4, 1.0]]).unwrap();
        assert!(!biased.is_unbiased(1e-12));
        assert!(biased.is_unbiased(1.0));
        assert!(perturbed_k3().is_unbiased(1.0));
    }

    #[test]
    fn transitivity_examples() {
        let two = StochasticChoiceKernel::from_rows(&[vec![1.0, 0.9], vec![0.05, 1.0]]).unwrap();
        let r = two.check_transitivity(0.0);
        assert_eq!(r.max_cycle_discrepancy, 0.0);
        assert!(r.is_transitive);
        assert_eq!(r.worst_triple, None);

        let r = k3().check_transitivity(1e-12);
        assert!(r.max_cycle_discrepancy < 1e-16);
        assert!(r.is_transitive);
        let forward: f64 = 0.375 * 0.4 * (5.0 / 7.0);
        assert!((forward - 0.107_142_857_142_857).abs() < 1e-14);

        let r = perturbed_k3().check_transitivity(1e-9);
        // 0.5 * 0.4 * 5/7 - 0.375 * 0.4 * 5/7
        let expected = 0.5 * 0.4 * (5.0 / 7.0) - (2.0 / 7.0) * 0.6 * 0.625;
        assert!((r.max_cycle_discrepancy - expected).abs() < 1e-15);
        assert!((r.max_cycle_discrepancy - 0.035_714_3).abs() < 1e-7);
        assert!(!r.is_transitive);
        assert_eq!(r.worst_triple, Some([0, 1, 2]));
    }

    #[test]
    fn transitivity_ignores_diagonal() {
        let k = perturbed_k3();
        let base = k.check_transitivity(1e-9);
        for v in [0.0, -3.0, 17.5, f64::NAN] {
            let other = k.with_diagonal(v).check_transitivity(1e-9);
            assert_eq!(
                base.max_cycle_discrepancy.to_bits(),
                other.max_cycle_discrepancy.to_bits()
            );
            assert_eq!(base.worst_triple, other.worst_triple);
        }
    }

    #[test]
    fn decompose_k3() {
        let d = k3().hastings_decompose(1e-9).unwrap();
        for (a, b) in d.pi.iter().zip([0.5, 0.3, 0.2]) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!(d.s.max_abs_deviation_from(1.0) < 1e-14);
        assert!(d.unbiased);
    }

    #[test]
    fn decompose_scaled_kernel() {
        let s = SymmetricWeights::constant(3, 0.5);
        let k = luce_kernel(&[0.5, 0.3, 0.2], Some(&s)).unwrap();
        let d = k.hastings_decompose(1e-9).unwrap();
        for (a, b) in d.pi.iter().zip([0.5, 0.3, 0.2]) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!(d.s.max_abs_deviation_from(0.5) < 1e-14);
        assert!(!d.unbiased);
        assert!(!k.is_unbiased(1e-9));
    }

    #[test]
    fn decompose_rejects_non_transitive_and_non_positive() {
        assert!(matches!(perturbed_k3().hastings_decompose(1e-9), Err(Error::NotTransitive(_))));
        let mut m = k3().matrix().clone();
        m[(0, 1)] = 1.0;
        let k = StochasticChoiceKernel::from_matrix(m).unwrap();
        assert!(matches!(k.hastings_decompose(1e-9), Err(Error::NotPositive(0, 1, _))));
    }

    #[test]
    fn luce_examples() {
        let k = luce_kernel(&[0.5, 0.5], None).unwrap();
        assert_eq!(k.accept(0, 1), 0.5);
        assert_eq!(k.accept(1, 0), 0.5);

        let s = SymmetricWeights::constant(2, 3.0);
        assert!(matches!(
            luce_kernel(&[0.9, 0.1], Some(&s)),
            Err(Error::EntryOutOfRange(0, 1, v)) if (v - 2.7).abs() < 1e-12
        ));
        assert!(matches!(luce_kernel(&[0.6, 0.6], None), Err(Error::InvalidDistribution(_))));
        assert!(matches!(luce_kernel(&[1.0, 0.0], None), Err(Error::InvalidDistribution(_))));
    }

    #[test]
    fn symmetric_weights_slots() {
        let w = SymmetricWeights::from_fn(5, |i, j| (10 * i + j) as f64);
        for i in 0..5 {
            for j in 0..5 {
                if i != j {
                    let (a, b) = (i.min(j), i.max(j));
                    assert_eq!(w.get(i, j), (10 * a + b) as f64);
                }
            }
        }
        let rows = w.to_rows();
        assert_eq!(SymmetricWeights::from_rows(&rows, 0.0).unwrap(), w);
        let mut asym = rows.clone();
        asym[3][1] += 0.5;
        assert!(SymmetricWeights::from_rows(&asym, 1e-12).is_err());
    }
}
