//! Scalar functionals of a wealth distribution.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mass::ProbMass;
use crate::meanfield::{exponential_moment, log_exponential_moment, rates};
use crate::params::{Cap, ModelParams};

/// Entries below this are treated as exact zeros inside logarithms.
const LOG_FLOOR: f64 = 1e-300;

fn xlogx(x: f64) -> f64 {
    if x < LOG_FLOOR {
        0.0
    } else {
        x * x.ln()
    }
}

/// `H[p] = Σ p_n log p_n` with `0 log 0 = 0`.
pub fn boltzmann_h(p: &ProbMass) -> f64 {
    p.as_slice().iter().map(|&x| xlogx(x)).sum()
}

/// Index window `[a, b]` clipped to the grid.
fn window(p: &ProbMass, params: &ModelParams) -> (usize, usize) {
    let a = (params.a() as usize).min(p.len());
    let b = params
        .b()
        .finite()
        .map_or(p.n_max(), |b| (b as usize).min(p.n_max()));
    (a, b)
}

/// `Σ_{n<a} p_n + Σ_{a≤n≤b} p_n log p_n + Σ_{n>b} p_n`.
pub fn h_ab(p: &ProbMass, params: &ModelParams) -> f64 {
    let (a, b) = window(p, params);
    let m = p.as_slice();
    let below: f64 = m[..a].iter().sum();
    let inside: f64 = m
        .get(a..=b)
        .map_or(0.0, |s| s.iter().map(|&x| xlogx(x)).sum());
    let above: f64 = m.get(b + 1..).map_or(0.0, |s| s.iter().sum());
    below + inside + above
}

/// Weights of the generalized functional:
/// `k1 = −ln(1 − μ/b)`, `k2 = ln max{(2^{b+1} + 2^a)/(1 − μ/b), Σ 2^n p_n(0)}`.
pub fn lyapunov_constants(params: &ModelParams, p0: &ProbMass) -> Result<(f64, f64)> {
    let b = params
        .b()
        .finite()
        .ok_or(Error::UnboundedCap("the Lyapunov constants"))?;
    let ratio = 1.0 - params.mu() as f64 / b as f64;
    let k1 = -ratio.ln();
    let ln2 = std::f64::consts::LN_2;
    // ln(2^{b+1} + 2^a) without forming 2^{b+1}
    let ln_stationary = (b as f64 + 1.0) * ln2
        + (1.0 + 2f64.powf(params.a() as f64 - b as f64 - 1.0)).ln()
        - ratio.ln();
    let ln_initial = log_exponential_moment(p0, 2.0);
    if !ln_initial.is_finite() && ln_initial > 0.0 {
        return Err(Error::InadmissibleInitial);
    }
    Ok((k1, ln_stationary.max(ln_initial)))
}

/// `h_ab(p) + k1 Σ_{n>b} n p_n + k2 Σ_{n<a} (a − n) p_n`.
pub fn h_ab_tilde(p: &ProbMass, params: &ModelParams, k1: f64, k2: f64) -> f64 {
    let (a, b) = window(p, params);
    let m = p.as_slice();
    let over: f64 = m
        .iter()
        .enumerate()
        .skip(b + 1)
        .map(|(n, &x)| n as f64 * x)
        .sum();
    let under: f64 = m[..a]
        .iter()
        .enumerate()
        .map(|(n, &x)| (a - n) as f64 * x)
        .sum();
    let mut value = h_ab(p, params);
    if over != 0.0 {
        value += k1 * over;
    }
    if under != 0.0 {
        value += k2 * under;
    }
    value
}

/// Gini index `(1/2m) Σ_{i,j} |i − j| p_i p_j`, with `m` the mean of `p`.
///
/// Uses `Σ_{i,j} |i−j| p_i p_j = 2 Σ_j p_j (j F_j − M_j)` with running sums
/// `F_j = Σ_{i<j} p_i` and `M_j = Σ_{i<j} i p_i`.
pub fn gini(p: &ProbMass) -> Result<f64> {
    let mean = p.mean();
    if !(mean > 0.0) {
        return Err(Error::ZeroMean);
    }
    let (mut cdf, mut partial_mean, mut acc) = (0.0, 0.0, 0.0);
    for (j, &pj) in p.as_slice().iter().enumerate() {
        let j = j as f64;
        acc += pj * (j * cdf - partial_mean);
        cdf += pj;
        partial_mean += j * pj;
    }
    Ok((acc / mean).clamp(0.0, 1.0))
}

/// Equilibrium Gini index for floor `a` and no cap:
/// `1 − (μ² − a² + a) / (μ (1 + 2(μ − a)))`.
pub fn gini_closed_form_floor(a: u64, mu: u64) -> f64 {
    let (a, mu) = (a as f64, mu as f64);
    1.0 - (mu * mu - a * a + a) / (mu * (1.0 + 2.0 * (mu - a)))
}

pub fn l1_distance(p: &ProbMass, q: &ProbMass) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch {
            left: p.len(),
            right: q.len(),
        });
    }
    Ok(p.as_slice()
        .iter()
        .zip(q.as_slice())
        .map(|(x, y)| (x - y).abs())
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EntropyReport {
    pub h: f64,
    pub h_ab: f64,
    pub h_ab_tilde: f64,
    pub k1: f64,
    pub k2: f64,
}

pub fn entropy_report(p: &ProbMass, params: &ModelParams, k1: f64, k2: f64) -> EntropyReport {
    EntropyReport {
        h: boltzmann_h(p),
        h_ab: h_ab(p, params),
        h_ab_tilde: h_ab_tilde(p, params, k1, k2),
        k1,
        k2,
    }
}

/// One row of a diagnostics table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub time: f64,
    pub h: f64,
    pub h_ab: f64,
    pub h_ab_tilde: f64,
    pub gini: f64,
    pub lambda_r: f64,
    pub lambda_g: f64,
    pub exp_moment_2: f64,
    pub l1_to_equilibrium: f64,
}

/// Weights for `h_ab_tilde` given the initial datum. Without a cap the
/// functional is only defined when there is no floor either (then it is `H`).
pub fn lyapunov_weights(params: &ModelParams, p0: &ProbMass) -> Result<Option<(f64, f64)>> {
    match params.b() {
        Cap::Finite(_) => lyapunov_constants(params, p0).map(Some),
        Cap::Infinite if params.a() == 0 => Ok(Some((0.0, 0.0))),
        Cap::Infinite => Ok(None),
    }
}

/// Every tracked functional of `p`. `h_ab_tilde` is NaN when `weights` is
/// `None`; the exponential moment is `inf` when it overflows.
pub fn metrics(
    time: f64,
    p: &ProbMass,
    params: &ModelParams,
    weights: Option<(f64, f64)>,
    star: &ProbMass,
) -> Result<Metrics> {
    let r = rates(p, params);
    Ok(Metrics {
        time,
        h: boltzmann_h(p),
        h_ab: h_ab(p, params),
        h_ab_tilde: weights.map_or(f64::NAN, |(k1, k2)| h_ab_tilde(p, params, k1, k2)),
        gini: gini(p)?,
        lambda_r: r.lambda_r,
        lambda_g: r.lambda_g,
        exp_moment_2: exponential_moment(p, 2.0).unwrap_or(f64::INFINITY),
        l1_to_equilibrium: l1_distance(p, star)?,
    })
}
