use serde::Serialize;

use super::{fit_line, LinearFit};
use crate::diagnostics::{lyapunov_weights, metrics, Metrics};
use crate::equilibrium::equilibrium_distribution;
use crate::error::Result;
use crate::mass::ProbMass;
use crate::meanfield::rk4_integrate;
use crate::params::ModelParams;

/// Which samples enter the exponential fit of the distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FitWindow {
    /// Samples whose distance lies in `[lo, hi]`.
    DistanceBand { lo: f64, hi: f64 },
    /// Samples with `from ≤ t ≤ to`.
    TimeRange { from: f64, to: f64 },
}

impl Default for FitWindow {
    fn default() -> Self {
        FitWindow::DistanceBand { lo: 1e-8, hi: 1e-1 }
    }
}

impl FitWindow {
    fn contains(&self, time: f64, distance: f64) -> bool {
        match *self {
            FitWindow::DistanceBand { lo, hi } => distance >= lo && distance <= hi,
            FitWindow::TimeRange { from, to } => time >= from && time <= to,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    #[serde(skip)]
    pub rows: Vec<Metrics>,
    pub r_bar: f64,
    pub initial_distance: f64,
    pub final_distance: f64,
    pub window: FitWindow,
    /// Fit of `ln ‖p(t) − p*‖₁` against `t`; `None` with fewer than two samples in the window.
    pub fit: Option<LinearFit>,
    /// `−slope` of the fit.
    pub rate: Option<f64>,
}

/// Integrates from `δ_μ` and tabulates every diagnostic at `sample_times`
/// (at `0` and `t_end` when none are given).
pub fn run_convergence_study(
    params: &ModelParams,
    dt: f64,
    t_end: f64,
    sample_times: &[f64],
    window: FitWindow,
) -> Result<ConvergenceReport> {
    let (eq, star) = equilibrium_distribution(params)?;
    let p0 = ProbMass::delta(params.mu() as usize, params.n_max())?;
    let weights = lyapunov_weights(params, &p0)?;
    let traj = rk4_integrate(&p0, params, t_end, dt, sample_times)?;

    let rows = traj
        .times
        .iter()
        .zip(&traj.states)
        .map(|(&t, p)| metrics(t, p, params, weights, &star))
        .collect::<Result<Vec<_>>>()?;

    let (xs, ys): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter(|r| r.l1_to_equilibrium > 0.0 && window.contains(r.time, r.l1_to_equilibrium))
        .map(|r| (r.time, r.l1_to_equilibrium.ln()))
        .unzip();
    let fit = fit_line(&xs, &ys);

    Ok(ConvergenceReport {
        initial_distance: crate::diagnostics::l1_distance(&p0, &star)?,
        final_distance: rows.last().map_or(f64::NAN, |r| r.l1_to_equilibrium),
        r_bar: eq.r_bar,
        window,
        rate: fit.map(|f| -f.slope),
        fit,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(step: f64, end: f64) -> Vec<f64> {
        (0..=(end / step).round() as usize)
            .map(|k| k as f64 * step)
            .collect()
    }

    #[test]
    fn zero_horizon_reports_initial_distance() {
        let params = ModelParams::finite(5, 7, 10).unwrap();
        let rep = run_convergence_study(&params, 0.01, 0.0, &[], FitWindow::default()).unwrap();
        assert_eq!(rep.rows.len(), 1);
        assert!(rep.final_distance > 0.0);
        assert_eq!(rep.final_distance, rep.initial_distance);
        assert!(rep.fit.is_none());
    }

    #[test]
    fn decay_rate_matches_slowest_mode() {
        // the linearization at p* on [a, b] has slowest eigenvalue ≈ −0.819
        let params = ModelParams::finite(5, 7, 10).unwrap();
        let rep =
            run_convergence_study(&params, 0.01, 20.0, &grid(0.5, 20.0), FitWindow::default())
                .unwrap();
        let fit = rep.fit.unwrap();
        assert!(fit.correlation < -0.999);
        assert!(
            (rep.rate.unwrap() - 0.819).abs() < 0.01,
            "rate {:?}",
            rep.rate
        );
        assert!(rep.final_distance < 1e-5);
    }

    #[test]
    fn time_window_fit() {
        let params = ModelParams::finite(5, 7, 10).unwrap();
        let window = FitWindow::TimeRange { from: 1.0, to: 5.0 };
        let rep = run_convergence_study(&params, 0.01, 5.0, &grid(0.1, 5.0), window).unwrap();
        assert_eq!(rep.fit.unwrap().points, 41);
        assert!(rep.fit.unwrap().correlation <= -0.999);
    }
}
