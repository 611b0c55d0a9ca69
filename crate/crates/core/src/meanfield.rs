//! Mean-field dynamics `dp/dt = L[p]` of the wealth distribution.
//!
//! With `λ_r` the mass below the cap and `λ_g` the mass above the floor,
//!
//! ```text
//! L[p]_n = λ_r (1{a ≤ n} p_{n+1} − 1{a+1 ≤ n} p_n)
//!        + λ_g (1{1 ≤ n ≤ b} p_{n−1} − 1{n ≤ b−1} p_n)
//! ```
//!
//! The state lives on `0..=n_max`. For a finite cap `n_max ≥ b + 2` makes the
//! truncation exact. For an infinite cap the last cell is treated as a cap
//! (no flux leaves the grid) and the mass reaching it is monitored.

use crate::error::{Error, Result};
use crate::mass::ProbMass;
use crate::params::ModelParams;

/// Mass allowed in the boundary cell before an infinite-cap run aborts.
pub const TAIL_LIMIT: f64 = 1e-6;
/// Negative entries below this after a step abort the integration.
pub const NEGATIVE_LIMIT: f64 = -1e-10;

/// Proportions of receivers (`lambda_r`) and givers (`lambda_g`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rates {
    pub lambda_r: f64,
    pub lambda_g: f64,
}

/// Signed output of an operator evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorOutput {
    pub d_mass: Vec<f64>,
}

impl OperatorOutput {
    pub fn total(&self) -> f64 {
        self.d_mass.iter().sum()
    }

    pub fn first_moment(&self) -> f64 {
        self.d_mass
            .iter()
            .enumerate()
            .map(|(n, d)| n as f64 * d)
            .sum()
    }

    pub fn sup_norm(&self) -> f64 {
        self.d_mass.iter().fold(0.0, |m, d| m.max(d.abs()))
    }

    pub fn l1_norm(&self) -> f64 {
        self.d_mass.iter().map(|d| d.abs()).sum()
    }
}

fn rates_of(p: &[f64], a: usize, cap: usize) -> Rates {
    let below: f64 = p[..cap.min(p.len())].iter().sum();
    let above: f64 = p.get(a + 1..).map_or(0.0, |s| s.iter().sum());
    Rates {
        lambda_r: below.clamp(0.0, 1.0),
        lambda_g: above.clamp(0.0, 1.0),
    }
}

/// Evaluates `L[p]` into `out`, returning the rates used.
fn l_into(p: &[f64], a: usize, cap: usize, out: &mut [f64]) -> Rates {
    let rates = rates_of(p, a, cap);
    let Rates { lambda_r, lambda_g } = rates;
    let len = p.len();
    for n in 0..len {
        let up = if n + 1 < len { p[n + 1] } else { 0.0 };
        let mut v = 0.0;
        if n >= a {
            v += lambda_r * up;
        }
        if n > a {
            v -= lambda_r * p[n];
        }
        if n >= 1 && n <= cap {
            v += lambda_g * p[n - 1];
        }
        if n < cap {
            v -= lambda_g * p[n];
        }
        out[n] = v;
    }
    rates
}

fn r_into(p: &[f64], a: usize, cap: usize, out: &mut [f64]) {
    let len = p.len();
    for k in 0..len {
        let mut v = 0.0;
        if k > a && k < cap {
            v += 2.0 * p[k];
        }
        if k >= a + 2 && k <= cap {
            v -= p[k - 1];
        }
        if k >= a && k + 2 <= cap && k + 1 < len {
            v -= p[k + 1];
        }
        out[k] = v;
    }
}

fn check_tail(p: &ProbMass, params: &ModelParams) -> Result<()> {
    if params.b().is_infinite() && p.tail() > TAIL_LIMIT {
        return Err(Error::TailOverflow { tail: p.tail() });
    }
    Ok(())
}

fn check_len(p: &ProbMass, params: &ModelParams) -> Result<()> {
    if p.len() != params.n_max() + 1 {
        return Err(Error::LengthMismatch {
            left: p.len(),
            right: params.n_max() + 1,
        });
    }
    Ok(())
}

/// `λ_r = Σ_{ℓ ≤ b−1} p_ℓ` and `λ_g = Σ_{ℓ ≥ a+1} p_ℓ`.
pub fn rates(p: &ProbMass, params: &ModelParams) -> Rates {
    rates_of(p.as_slice(), params.a() as usize, params.effective_cap())
}

pub fn apply_l(p: &ProbMass, params: &ModelParams) -> Result<OperatorOutput> {
    check_len(p, params)?;
    check_tail(p, params)?;
    let mut d_mass = vec![0.0; p.len()];
    l_into(
        p.as_slice(),
        params.a() as usize,
        params.effective_cap(),
        &mut d_mass,
    );
    Ok(OperatorOutput { d_mass })
}

/// Finite-population correction `R[p]` of the generator.
pub fn apply_r(p: &ProbMass, params: &ModelParams) -> Vec<f64> {
    let mut out = vec![0.0; p.len()];
    r_into(
        p.as_slice(),
        params.a() as usize,
        params.effective_cap(),
        &mut out,
    );
    out
}

/// Generator `D = L + R / N` of the empirical measure of `n_agents` agents.
pub fn apply_generator_d(
    p: &ProbMass,
    params: &ModelParams,
    n_agents: usize,
) -> Result<OperatorOutput> {
    let mut out = apply_l(p, params)?;
    let r = apply_r(p, params);
    let inv_n = 1.0 / n_agents as f64;
    for (d, r) in out.d_mass.iter_mut().zip(r) {
        *d += inv_n * r;
    }
    Ok(out)
}

/// Sampled solution of the mean-field system.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<ProbMass>,
    pub tail_mass: Vec<f64>,
}

impl Trajectory {
    pub fn last(&self) -> Option<(f64, &ProbMass)> {
        self.times.last().map(|&t| (t, self.states.last().unwrap()))
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Classic fourth-order Runge–Kutta on the truncated system.
///
/// The rates are recomputed at every stage. After each step entries in
/// `[NEGATIVE_LIMIT, 0)` are set to zero and the vector is rescaled to unit
/// mass; anything more negative is an error.
#[derive(Debug, Clone)]
pub struct MeanFieldStepper {
    a: usize,
    cap: usize,
    infinite: bool,
    time: f64,
    state: Vec<f64>,
    k: [Vec<f64>; 4],
    scratch: Vec<f64>,
}

impl MeanFieldStepper {
    pub fn new(p0: &ProbMass, params: &ModelParams) -> Result<Self> {
        check_len(p0, params)?;
        check_tail(p0, params)?;
        let len = p0.len();
        Ok(MeanFieldStepper {
            a: params.a() as usize,
            cap: params.effective_cap(),
            infinite: params.b().is_infinite(),
            time: 0.0,
            state: p0.as_slice().to_vec(),
            k: std::array::from_fn(|_| vec![0.0; len]),
            scratch: vec![0.0; len],
        })
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn state(&self) -> ProbMass {
        ProbMass::from_raw(self.state.clone())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.state
    }

    /// Advances by `h`.
    pub fn step(&mut self, h: f64) -> Result<()> {
        let (a, cap) = (self.a, self.cap);
        let [k1, k2, k3, k4] = &mut self.k;
        let y = &mut self.state;
        let tmp = &mut self.scratch;

        l_into(y, a, cap, k1);
        for i in 0..y.len() {
            tmp[i] = y[i] + 0.5 * h * k1[i];
        }
        l_into(tmp, a, cap, k2);
        for i in 0..y.len() {
            tmp[i] = y[i] + 0.5 * h * k2[i];
        }
        l_into(tmp, a, cap, k3);
        for i in 0..y.len() {
            tmp[i] = y[i] + h * k3[i];
        }
        l_into(tmp, a, cap, k4);
        for i in 0..y.len() {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }

        let mut clipped = false;
        for (index, v) in y.iter_mut().enumerate() {
            if *v < 0.0 {
                if *v < NEGATIVE_LIMIT {
                    return Err(Error::NegativeMass { index, value: *v });
                }
                *v = 0.0;
                clipped = true;
            }
        }
        if clipped {
            let total: f64 = y.iter().sum();
            y.iter_mut().for_each(|v| *v /= total);
        }
        if self.infinite && *y.last().unwrap() > TAIL_LIMIT {
            return Err(Error::TailOverflow {
                tail: *y.last().unwrap(),
            });
        }
        self.time += h;
        Ok(())
    }
}

/// Integrates from `p0` to `t_end` with step `dt`, recording the state at
/// each requested sample time (times outside `[0, t_end]` are ignored).
/// Steps are shortened to land exactly on sample times and on `t_end`.
/// With no usable sample times, `0` and `t_end` are recorded.
pub fn rk4_integrate(
    p0: &ProbMass,
    params: &ModelParams,
    t_end: f64,
    dt: f64,
    sample_times: &[f64],
) -> Result<Trajectory> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidParam {
            key: "dt",
            reason: format!("must be positive, got {dt}"),
        });
    }
    if !(t_end >= 0.0) || !t_end.is_finite() {
        return Err(Error::InvalidParam {
            key: "t_end",
            reason: format!("must be nonnegative, got {t_end}"),
        });
    }
    let mut stops: Vec<f64> = sample_times
        .iter()
        .copied()
        .filter(|t| *t >= 0.0 && *t <= t_end)
        .collect();
    if stops.is_empty() {
        stops = vec![0.0, t_end];
    }
    stops.sort_by(f64::total_cmp);
    stops.dedup();

    let mut stepper = MeanFieldStepper::new(p0, params)?;
    let mut traj = Trajectory {
        times: Vec::new(),
        states: Vec::new(),
        tail_mass: Vec::new(),
    };
    let eps = 1e-9 * dt;
    let mut record = |s: &MeanFieldStepper, t: f64| {
        traj.times.push(t);
        traj.tail_mass.push(*s.as_slice().last().unwrap());
        traj.states.push(s.state());
    };

    // integrate on the grid k·dt, splitting only where a stop falls inside a step
    let mut k: u64 = 0;
    let mut t = 0.0;
    for &stop in &stops {
        while stop - t > eps {
            let grid_next = (k + 1) as f64 * dt;
            if grid_next <= stop + eps {
                stepper.step(grid_next - t)?;
                k += 1;
                t = grid_next;
            } else {
                stepper.step(stop - t)?;
                t = stop;
            }
        }
        record(&stepper, stop);
    }
    Ok(traj)
}

/// `Σ K^n p_n`. Falls back to log-sum-exp when `K^n` would overflow.
pub fn exponential_moment(p: &ProbMass, k: f64) -> Result<f64> {
    if !(k > 1.0) {
        return Err(Error::InvalidParam {
            key: "K",
            reason: format!("must exceed 1, got {k}"),
        });
    }
    let ln_k = k.ln();
    if (p.n_max() as f64) * ln_k < 700.0 {
        let mut pow = 1.0;
        let mut acc = 0.0;
        for &pn in p.as_slice() {
            acc += pow * pn;
            pow *= k;
        }
        return Ok(acc);
    }
    let v = log_exponential_moment(p, k).exp();
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Overflow)
    }
}

/// `ln Σ K^n p_n`, evaluated without overflow.
pub fn log_exponential_moment(p: &ProbMass, k: f64) -> f64 {
    let ln_k = k.ln();
    let terms = p
        .as_slice()
        .iter()
        .enumerate()
        .filter(|(_, &pn)| pn > 0.0)
        .map(|(n, &pn)| n as f64 * ln_k + pn.ln());
    let max = terms.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Uniform-in-time bound `max{(K^{b+1} + K^a)/(1 − μ/b), Σ K^n p_n(0)}` on
/// the exponential moment along a trajectory.
pub fn exponential_moment_bound(params: &ModelParams, k: f64, p0: &ProbMass) -> Result<f64> {
    let b = params
        .b()
        .finite()
        .ok_or(Error::UnboundedCap("the exponential moment bound"))?;
    let ratio = 1.0 - params.mu() as f64 / b as f64;
    let stationary = (k.powf(b as f64 + 1.0) + k.powf(params.a() as f64)) / ratio;
    Ok(stationary.max(exponential_moment(p0, k)?))
}
