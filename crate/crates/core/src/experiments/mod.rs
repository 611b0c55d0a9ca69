//! Numerical studies built on the simulator and the mean-field solver.
//!
//! Every study is a pure function of its inputs. Parallel work is collected
//! in index order, so tables are identical from run to run.

mod convergence;
mod generator_oracle;
mod gini_sweep;
mod poc;

pub use convergence::{run_convergence_study, ConvergenceReport, FitWindow};
pub use generator_oracle::{
    generator_discrepancy, run_generator_oracle, OracleCase, OracleReport, ORACLE_TOL,
};
pub use gini_sweep::{
    run_gini_sweep, GiniSweepConfig, ProvenRow, SweepRecord, SweepReport, Violation, ViolationKind,
};
pub use poc::{run_poc_study, PocConfig, PocResult, PocRow};

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mass::ProbMass;

/// Least-squares line `y = intercept + slope·x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub correlation: f64,
    /// Standard error of the slope (NaN with fewer than three points).
    pub slope_se: f64,
    pub points: usize,
}

/// Ordinary least squares. `None` with fewer than two points or constant `x`.
pub fn fit_line(xs: &[f64], ys: &[f64]) -> Option<LinearFit> {
    let k = xs.len();
    if k < 2 || ys.len() != k {
        return None;
    }
    let kf = k as f64;
    let mx = xs.iter().sum::<f64>() / kf;
    let my = ys.iter().sum::<f64>() / kf;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
        sxy += (x - mx) * (y - my);
    }
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let correlation = if syy == 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    };
    let slope_se = if k > 2 {
        let rss: f64 = xs
            .iter()
            .zip(ys)
            .map(|(x, y)| (y - intercept - slope * x).powi(2))
            .sum();
        (rss / (kf - 2.0) / sxx).sqrt()
    } else {
        f64::NAN
    };
    Some(LinearFit {
        slope,
        intercept,
        correlation,
        slope_se,
        points: k,
    })
}

/// A random distribution on `0..=n_max` with mean exactly `mu`, supported
/// on `0..=top`. A random profile is mixed with `δ_0` or `δ_top` to fix the
/// mean.
pub fn random_admissible<R: Rng + ?Sized>(
    rng: &mut R,
    mu: u64,
    top: usize,
    n_max: usize,
) -> Result<ProbMass> {
    if top as u64 <= mu || top > n_max {
        return Err(Error::InvalidParam {
            key: "top",
            reason: format!("need mu < top <= n_max, got top = {top}"),
        });
    }
    let mu = mu as f64;
    let mut q: Vec<f64> = (0..=top).map(|_| rng.random::<f64>().powi(3)).collect();
    let s: f64 = q.iter().sum();
    q.iter_mut().for_each(|x| *x /= s);
    let m: f64 = q.iter().enumerate().map(|(n, x)| n as f64 * x).sum();
    let (theta, at) = if m > mu {
        (1.0 - mu / m, 0)
    } else {
        ((mu - m) / (top as f64 - m), top)
    };
    let mut v = vec![0.0; n_max + 1];
    for (n, x) in q.iter().enumerate() {
        v[n] = (1.0 - theta) * x;
    }
    v[at] += theta;
    ProbMass::normalized(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::replica_rng;

    #[test]
    fn fit_recovers_exact_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 - 0.5 * x).collect();
        let f = fit_line(&xs, &ys).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-15);
        assert!((f.intercept - 2.0).abs() < 1e-15);
        assert!((f.correlation + 1.0).abs() < 1e-15);
        assert!(f.slope_se.abs() < 1e-15);
        assert!(fit_line(&[1.0, 1.0], &[0.0, 1.0]).is_none());
    }

    #[test]
    fn random_admissible_has_exact_mean() {
        let mut rng = replica_rng(3, 0);
        for _ in 0..200 {
            let p = random_admissible(&mut rng, 7, 14, 20).unwrap();
            assert!((p.mean() - 7.0).abs() < 1e-12);
            assert!((p.total() - 1.0).abs() < 1e-12);
            assert!(p.as_slice()[15..].iter().all(|&x| x == 0.0));
        }
    }
}
