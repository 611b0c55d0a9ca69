//! Truncated probability mass functions on {0, …, n_max}.

use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::{MASS_TOL, MEAN_TOL};

/// A probability mass function indexed `0..=n_max`.
///
/// Entries are nonnegative and sum to one within [`MASS_TOL`]. The mean is
/// not constrained here; [`make_prob_mass`] adds the mean-`mu` check.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMass {
    mass: Vec<f64>,
}

impl ProbMass {
    /// Normalizes nonnegative weights into a distribution.
    pub fn normalized(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::NotNormalized { total: 0.0 });
        }
        if let Some((index, &value)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !(**w >= 0.0) || !w.is_finite())
        {
            return Err(Error::NegativeMass { index, value });
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::NotNormalized { total });
        }
        let mass = weights.into_iter().map(|w| w / total).collect();
        Ok(ProbMass { mass })
    }

    /// Point mass at `k` on `0..=n_max`.
    pub fn delta(k: usize, n_max: usize) -> Result<Self> {
        if k > n_max {
            return Err(Error::TruncationTooSmall { n_max, required: k });
        }
        let mut mass = vec![0.0; n_max + 1];
        mass[k] = 1.0;
        Ok(ProbMass { mass })
    }

    /// Wraps a vector already known to be a distribution (e.g. an integrator
    /// state). Callers are responsible for the invariants.
    pub(crate) fn from_raw(mass: Vec<f64>) -> Self {
        debug_assert!(!mass.is_empty());
        ProbMass { mass }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.mass
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.mass
    }

    pub fn n_max(&self) -> usize {
        self.mass.len() - 1
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `p_n`, zero beyond the truncation.
    pub fn get(&self, n: usize) -> f64 {
        self.mass.get(n).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.mass
            .iter()
            .enumerate()
            .map(|(n, p)| n as f64 * p)
            .sum()
    }

    /// Mass stored in the last retained cell.
    pub fn tail(&self) -> f64 {
        *self.mass.last().unwrap()
    }

    /// Same distribution on a different truncation. Fails if mass would be
    /// cut off.
    pub fn resized(&self, n_max: usize) -> Result<Self> {
        if let Some(top) = self.mass.iter().rposition(|&p| p > 0.0) {
            if top > n_max {
                return Err(Error::TruncationTooSmall {
                    n_max,
                    required: top,
                });
            }
        }
        let mut mass = self.mass.clone();
        mass.resize(n_max + 1, 0.0);
        Ok(ProbMass { mass })
    }
}

/// Builds a distribution in `V_mu` on the truncation of `params`.
///
/// The input is rescaled to unit mass when its total is within
/// [`MASS_TOL`] of one; larger defects and mean mismatches are rejected.
pub fn make_prob_mass(values: Vec<f64>, params: &ModelParams) -> Result<ProbMass> {
    let n_max = params.n_max();
    let mut values = values;
    if values.len() > n_max + 1 {
        if let Some(top) = values.iter().rposition(|&p| p != 0.0) {
            if top > n_max {
                return Err(Error::TruncationTooSmall {
                    n_max,
                    required: top,
                });
            }
        }
    }
    values.resize(n_max + 1, 0.0);
    let total: f64 = values.iter().sum();
    if !((total - 1.0).abs() <= MASS_TOL) {
        return Err(Error::NotNormalized { total });
    }
    let p = ProbMass::normalized(values)?;
    let mean = p.mean();
    let mu = params.mu() as f64;
    if !((mean - mu).abs() <= MEAN_TOL) {
        return Err(Error::MeanMismatch {
            expected: mu,
            actual: mean,
        });
    }
    Ok(p)
}
