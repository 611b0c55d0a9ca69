use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::{fit_line, LinearFit};
use crate::agent_sim::{empirical_distribution, init_population, simulate_until, InitSpec};
use crate::diagnostics::l1_distance;
use crate::error::{Error, Result};
use crate::io::{format_float, CsvRecord};
use crate::mass::ProbMass;
use crate::meanfield::rk4_integrate;
use crate::params::ModelParams;
use crate::rng::replica_rng;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PocConfig {
    pub params: ModelParams,
    pub n_list: Vec<usize>,
    pub t: f64,
    pub replicas: usize,
    pub seed: u64,
    /// Step of the reference mean-field solve.
    pub dt: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PocRow {
    pub n_agents: usize,
    pub replicas: usize,
    pub mean_error: f64,
    /// Sample standard deviation over `√replicas` (0 for a single replica).
    pub std_error: f64,
}

impl CsvRecord for PocRow {
    fn header() -> &'static [&'static str] {
        &["n_agents", "replicas", "mean_l1_error", "std_error"]
    }
    fn fields(&self) -> Vec<String> {
        vec![
            self.n_agents.to_string(),
            self.replicas.to_string(),
            format_float(self.mean_error),
            format_float(self.std_error),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PocResult {
    #[serde(skip)]
    pub rows: Vec<PocRow>,
    /// OLS fit of `ln error` against `ln N`.
    pub fit: Option<LinearFit>,
    /// 95% Student-t half-width of the slope (NaN with fewer than three sizes).
    pub slope_half_width: f64,
    /// Each error is at most the previous one plus one standard error.
    pub non_increasing: bool,
    pub strictly_decreasing: bool,
}

/// Independent stream per `(N, replica)` pair.
fn stream_id(n_agents: usize, replica: usize) -> u64 {
    ((n_agents as u64) << 32) | replica as u64
}

fn one_replica(
    params: &ModelParams,
    t: f64,
    seed: u64,
    replica: usize,
    reference: &ProbMass,
) -> Result<f64> {
    let mut rng = replica_rng(seed, stream_id(params.n_agents(), replica));
    let mut pop = init_population(params, &InitSpec::AllAtMean, &mut rng)?;
    simulate_until(&mut pop, params, t, &mut rng, &[], None)?;
    l1_distance(&empirical_distribution(&pop, params.n_max())?, reference)
}

/// Mean ℓ¹ error between the empirical law of `N` agents started at `μ` and
/// the mean-field solution at time `t`, for each `N` in the ladder.
pub fn run_poc_study(config: &PocConfig) -> Result<PocResult> {
    let PocConfig {
        params,
        ref n_list,
        t,
        replicas,
        seed,
        dt,
    } = *config;
    if n_list.is_empty() {
        return Err(Error::InvalidParam {
            key: "n_list",
            reason: "must not be empty".into(),
        });
    }
    if let Some(&n) = n_list.iter().find(|&&n| n < 10) {
        return Err(Error::InvalidParam {
            key: "n_list",
            reason: format!("every N must be at least 10, got {n}"),
        });
    }
    if n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParam {
            key: "n_list",
            reason: "must be strictly increasing".into(),
        });
    }
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::InvalidParam {
            key: "t",
            reason: format!("must be positive, got {t}"),
        });
    }
    if replicas == 0 {
        return Err(Error::InvalidParam {
            key: "replicas",
            reason: "must be positive".into(),
        });
    }

    let p0 = ProbMass::delta(params.mu() as usize, params.n_max())?;
    let traj = rk4_integrate(&p0, &params, t, dt, &[t])?;
    let reference = traj.states.last().expect("one sample requested").clone();

    let mut rows = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let p = params.with_n_agents(n)?;
        let errors = (0..replicas)
            .into_par_iter()
            .map(|r| one_replica(&p, t, seed, r, &reference))
            .collect::<Result<Vec<f64>>>()?;
        let k = errors.len() as f64;
        let mean = errors.iter().sum::<f64>() / k;
        let std_error = if errors.len() > 1 {
            (errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt() / k.sqrt()
        } else {
            0.0
        };
        rows.push(PocRow {
            n_agents: n,
            replicas,
            mean_error: mean,
            std_error,
        });
    }

    let (xs, ys): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter(|r| r.mean_error > 0.0)
        .map(|r| ((r.n_agents as f64).ln(), r.mean_error.ln()))
        .unzip();
    let fit = fit_line(&xs, &ys);
    let slope_half_width = match fit {
        Some(f) if f.points > 2 => {
            let q = StudentsT::new(0.0, 1.0, (f.points - 2) as f64)
                .map(|d| d.inverse_cdf(0.975))
                .unwrap_or(f64::NAN);
            q * f.slope_se
        }
        _ => f64::NAN,
    };
    let non_increasing = rows
        .windows(2)
        .all(|w| w[1].mean_error <= w[0].mean_error + w[1].std_error.max(w[0].std_error));
    let strictly_decreasing = rows.windows(2).all(|w| w[1].mean_error < w[0].mean_error);

    Ok(PocResult {
        rows,
        fit,
        slope_half_width,
        non_increasing,
        strictly_decreasing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::csv_bytes;

    fn config(n_list: Vec<usize>, replicas: usize) -> PocConfig {
        PocConfig {
            params: ModelParams::finite(5, 7, 10).unwrap(),
            n_list,
            t: 1.0,
            replicas,
            seed: 11,
            dt: 0.01,
        }
    }

    #[test]
    fn rejects_small_populations() {
        assert!(run_poc_study(&config(vec![5, 100], 2)).is_err());
        assert!(run_poc_study(&config(vec![100, 50], 2)).is_err());
    }

    #[test]
    fn single_replica_is_reproducible() {
        let a = run_poc_study(&config(vec![20, 80], 1)).unwrap();
        let b = run_poc_study(&config(vec![20, 80], 1)).unwrap();
        assert_eq!(csv_bytes(&a.rows), csv_bytes(&b.rows));
        assert!(a
            .rows
            .iter()
            .all(|r| r.std_error == 0.0 && r.mean_error >= 0.0));
    }

    #[test]
    fn error_shrinks_with_population() {
        let res = run_poc_study(&config(vec![50, 800], 40)).unwrap();
        assert!(res.rows[1].mean_error < res.rows[0].mean_error);
        let slope = res.fit.unwrap().slope;
        assert!(slope < -0.2 && slope > -0.8, "slope {slope}");
    }
}
