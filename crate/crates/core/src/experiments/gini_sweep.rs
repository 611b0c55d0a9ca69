use rayon::prelude::*;
use serde::Serialize;

use crate::diagnostics::{gini, gini_closed_form_floor, h_ab_tilde, lyapunov_weights};
use crate::equilibrium::equilibrium_distribution;
use crate::error::{Error, Result};
use crate::io::{format_float, CsvRecord};
use crate::mass::ProbMass;
use crate::meanfield::rk4_integrate;
use crate::params::{Cap, ModelParams};

const MASS_DRIFT: f64 = 1e-8;
const MEAN_DRIFT: f64 = 1e-6;
const ENTROPY_SLACK: f64 = 1e-9;
/// Gini differences below this are not counted as order violations.
const ORDER_SLACK: f64 = 1e-12;
const CLOSED_FORM_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GiniSweepConfig {
    pub mu: u64,
    pub a_list: Vec<u64>,
    pub b_list: Vec<Cap>,
    pub dt: f64,
    pub t_end: f64,
    pub sample_times: Vec<f64>,
    /// Truncation used for trajectories with `b = inf`.
    pub n_max_infinite: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRecord {
    pub a: u64,
    pub b: Cap,
    pub time: f64,
    pub gini: f64,
}

impl CsvRecord for SweepRecord {
    fn header() -> &'static [&'static str] {
        &["a", "b", "time", "gini"]
    }
    fn fields(&self) -> Vec<String> {
        vec![
            self.a.to_string(),
            self.b.to_string(),
            format_float(self.time),
            format_float(self.gini),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    /// Gini increased with the floor at fixed cap.
    IncreasesInA,
    /// Gini decreased with the cap at fixed floor.
    DecreasesInB,
}

/// Adjacent grid points out of the expected order. `a` and `b` hold the
/// lower and upper point; one of them is constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Violation {
    pub time: f64,
    pub kind: ViolationKind,
    pub a: [u64; 2],
    pub b: [Cap; 2],
    pub gini: [f64; 2],
}

/// Floor-only equilibrium compared with its closed form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProvenRow {
    pub a: u64,
    pub gini_equilibrium: f64,
    pub gini_closed_form: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    #[serde(skip)]
    pub records: Vec<SweepRecord>,
    /// Order violations at every sample time before the last.
    pub transient_violations: Vec<Violation>,
    /// Order violations at `t_end`.
    pub final_violations: Vec<Violation>,
    /// Order violations among the exact equilibria of the grid.
    pub equilibrium_violations: Vec<Violation>,
    pub proven: Vec<ProvenRow>,
    /// Closed form matched and Gini non-increasing in `a` for `b = inf`.
    pub proven_ok: bool,
}

fn cap_key(b: Cap) -> u64 {
    b.finite().unwrap_or(u64::MAX)
}

fn params_for(mu: u64, a: u64, b: Cap, n_max_infinite: usize) -> Result<ModelParams> {
    match b {
        Cap::Finite(_) => ModelParams::new(a, mu, b, None),
        Cap::Infinite => ModelParams::new(a, mu, b, Some(n_max_infinite)),
    }
}

/// Equilibrium, enlarging the truncation once if the tail does not fit.
fn equilibrium_fitting(params: &ModelParams) -> Result<ProbMass> {
    match equilibrium_distribution(params) {
        Err(Error::TruncationTooSmall { required, .. }) => {
            Ok(equilibrium_distribution(&params.with_n_max(required)?)?.1)
        }
        other => other.map(|(_, p)| p),
    }
}

/// Trajectory Ginis at the sample times, checking conservation and the
/// entropy decay along the way.
fn trajectory(
    params: &ModelParams,
    dt: f64,
    t_end: f64,
    samples: &[f64],
) -> Result<Vec<(f64, f64)>> {
    let p0 = ProbMass::delta(params.mu() as usize, params.n_max())?;
    let weights = lyapunov_weights(params, &p0)?;
    let traj = rk4_integrate(&p0, params, t_end, dt, samples)?;
    let mu = params.mu() as f64;
    let mut last_entropy = f64::INFINITY;
    let mut out = Vec::with_capacity(traj.len());
    for (&t, p) in traj.times.iter().zip(&traj.states) {
        if (p.total() - 1.0).abs() > MASS_DRIFT || (p.mean() - mu).abs() > MEAN_DRIFT {
            return Err(Error::InvariantViolation(format!(
                "conservation lost at t = {t} for a = {}, b = {}: mass {}, mean {}",
                params.a(),
                params.b(),
                p.total(),
                p.mean()
            )));
        }
        if let Some((k1, k2)) = weights {
            let e = h_ab_tilde(p, params, k1, k2);
            if e > last_entropy + ENTROPY_SLACK {
                return Err(Error::InvariantViolation(format!(
                    "generalized entropy increased at t = {t} for a = {}, b = {}: {last_entropy} -> {e}",
                    params.a(),
                    params.b()
                )));
            }
            last_entropy = e;
        }
        out.push((t, gini(p)?));
    }
    Ok(out)
}

/// Scans a grid `g[i][j]` (floors `i`, caps `j`) for order violations.
fn violations(time: f64, a_list: &[u64], b_list: &[Cap], g: &[Vec<f64>]) -> Vec<Violation> {
    let mut out = Vec::new();
    for (j, &b) in b_list.iter().enumerate() {
        for i in 1..a_list.len() {
            let (lo, hi) = (g[i - 1][j], g[i][j]);
            if hi > lo + ORDER_SLACK {
                out.push(Violation {
                    time,
                    kind: ViolationKind::IncreasesInA,
                    a: [a_list[i - 1], a_list[i]],
                    b: [b, b],
                    gini: [lo, hi],
                });
            }
        }
    }
    for (i, &a) in a_list.iter().enumerate() {
        for j in 1..b_list.len() {
            let (lo, hi) = (g[i][j - 1], g[i][j]);
            if hi < lo - ORDER_SLACK {
                out.push(Violation {
                    time,
                    kind: ViolationKind::DecreasesInB,
                    a: [a, a],
                    b: [b_list[j - 1], b_list[j]],
                    gini: [lo, hi],
                });
            }
        }
    }
    out
}

/// One mean-field trajectory from `δ_μ` per `(a, b)` pair, with an order
/// report at each sample time and a check of the floor-only equilibria.
/// Sample times default to the integers in `[0, t_end]`.
pub fn run_gini_sweep(config: &GiniSweepConfig) -> Result<SweepReport> {
    let mu = config.mu;
    let mut a_list = config.a_list.clone();
    a_list.sort_unstable();
    a_list.dedup();
    let mut b_list = config.b_list.clone();
    b_list.sort_by_key(|&b| cap_key(b));
    b_list.dedup();
    if a_list.is_empty() || b_list.is_empty() {
        return Err(Error::InvalidParam {
            key: "grid",
            reason: "a_list and b_list must be nonempty".into(),
        });
    }

    let grid: Vec<ModelParams> = a_list
        .iter()
        .flat_map(|&a| b_list.iter().map(move |&b| (a, b)))
        .map(|(a, b)| params_for(mu, a, b, config.n_max_infinite))
        .collect::<Result<_>>()?;

    let samples: Vec<f64> = if config.sample_times.is_empty() {
        (0..=config.t_end.floor() as u64)
            .map(|k| k as f64)
            .chain(std::iter::once(config.t_end))
            .collect()
    } else {
        config.sample_times.clone()
    };

    let curves = grid
        .par_iter()
        .map(|p| trajectory(p, config.dt, config.t_end, &samples))
        .collect::<Result<Vec<_>>>()?;
    let equilibria = grid
        .par_iter()
        .map(|p| equilibrium_fitting(p).and_then(|q| gini(&q)))
        .collect::<Result<Vec<_>>>()?;

    let mut records = Vec::new();
    for (p, curve) in grid.iter().zip(&curves) {
        records.extend(curve.iter().map(|&(time, g)| SweepRecord {
            a: p.a(),
            b: p.b(),
            time,
            gini: g,
        }));
    }

    let nb = b_list.len();
    let at = |k: usize| -> Vec<Vec<f64>> {
        (0..a_list.len())
            .map(|i| (0..nb).map(|j| curves[i * nb + j][k].1).collect())
            .collect()
    };
    let times: Vec<f64> = curves[0].iter().map(|&(t, _)| t).collect();
    let last = times.len() - 1;
    let mut transient_violations = Vec::new();
    for (k, &t) in times.iter().enumerate().take(last) {
        transient_violations.extend(violations(t, &a_list, &b_list, &at(k)));
    }
    let final_violations = violations(times[last], &a_list, &b_list, &at(last));
    let eq_grid: Vec<Vec<f64>> = (0..a_list.len())
        .map(|i| equilibria[i * nb..(i + 1) * nb].to_vec())
        .collect();
    let equilibrium_violations = violations(f64::INFINITY, &a_list, &b_list, &eq_grid);

    let proven = a_list
        .iter()
        .filter(|&&a| a < mu)
        .map(|&a| {
            let p = ModelParams::new(a, mu, Cap::Infinite, Some(mu as usize + 2))?;
            Ok(ProvenRow {
                a,
                gini_equilibrium: gini(&equilibrium_fitting(&p)?)?,
                gini_closed_form: gini_closed_form_floor(a, mu),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let proven_ok = proven
        .iter()
        .all(|r| (r.gini_equilibrium - r.gini_closed_form).abs() <= CLOSED_FORM_TOL)
        && proven
            .windows(2)
            .all(|w| w[1].gini_equilibrium <= w[0].gini_equilibrium + ORDER_SLACK);

    Ok(SweepReport {
        records,
        transient_violations,
        final_violations,
        equilibrium_violations,
        proven,
        proven_ok,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(a_list: Vec<u64>, b_list: Vec<Cap>, t_end: f64) -> GiniSweepConfig {
        GiniSweepConfig {
            mu: 5,
            a_list,
            b_list,
            dt: 0.1,
            t_end,
            sample_times: vec![],
            n_max_infinite: 200,
        }
    }

    #[test]
    fn single_pair_passes_trivially() {
        let rep = run_gini_sweep(&config(vec![2], vec![Cap::Finite(8)], 5.0)).unwrap();
        assert!(rep.transient_violations.is_empty() && rep.final_violations.is_empty());
        assert_eq!(rep.records.len(), 6);
        assert_eq!(rep.records[0].gini, 0.0);
        assert!(rep.proven_ok);
    }

    #[test]
    fn invalid_pair_is_rejected() {
        assert!(matches!(
            run_gini_sweep(&config(vec![5], vec![Cap::Finite(8)], 1.0)),
            Err(Error::OrderViolation { .. })
        ));
    }

    #[test]
    fn closed_form_floor_values() {
        let rep = run_gini_sweep(&config(vec![0, 1, 2, 3, 4], vec![Cap::Finite(10)], 1.0)).unwrap();
        assert!(rep.proven_ok);
        assert!((rep.proven[0].gini_closed_form - 6.0 / 11.0).abs() < 1e-15);
        assert!(rep.equilibrium_violations.is_empty());
    }

    #[test]
    fn violation_scan_detects_both_orders() {
        let g = vec![vec![0.3, 0.2], vec![0.4, 0.5]];
        let v = violations(1.0, &[0, 1], &[Cap::Finite(6), Cap::Finite(8)], &g);
        let kinds: Vec<_> = v.iter().map(|x| x.kind).collect();
        assert_eq!(
            kinds,
            vec![
                ViolationKind::IncreasesInA,
                ViolationKind::IncreasesInA,
                ViolationKind::DecreasesInB
            ]
        );
    }
}
