//! Helpers for probability vectors over a finite menu.

use crate::error::{Error, Result};

/// Tolerance on the total mass of a user supplied distribution.
pub const MASS_TOL: f64 = 1e-10;

/// Checks that `p` is a probability vector of length `n`.
pub fn check_distribution(p: &[f64], n: usize) -> Result<()> {
    if p.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: p.len() });
    }
    if let Some((i, v)) = p.iter().enumerate().find(|(_, v)| !v.is_finite() || **v < 0.0) {
        return Err(Error::InvalidDistribution(format!("entry {i} is {v}")));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > MASS_TOL {
        return Err(Error::InvalidDistribution(format!("total mass {total}")));
    }
    Ok(())
}

/// Like [`check_distribution`] but also requires every entry to be strictly positive.
pub fn check_full_support(p: &[f64], n: usize) -> Result<()> {
    check_distribution(p, n)?;
    if let Some((i, v)) = p.iter().enumerate().find(|(_, v)| **v <= 0.0) {
        return Err(Error::InvalidDistribution(format!("entry {i} is {v}, full support required")));
    }
    Ok(())
}

pub fn uniform(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

pub fn point_mass(n: usize, at: usize) -> Vec<f64> {
    let mut p = vec![0.0; n];
    p[at] = 1.0;
    p
}

/// Half the L1 distance.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Divides by the total. Returns `None` when the total is not positive.
pub fn normalize(weights: &[f64]) -> Option<Vec<f64>> {
    let total: f64 = weights.iter().sum();
    if total > 0.0 && total.is_finite() {
        Some(weights.iter().map(|w| w / total).collect())
    } else {
        None
    }
}
