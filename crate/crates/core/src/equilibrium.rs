//! Stationary state of the mean-field system.
//!
//! The equilibrium is geometric on `[a, b]`: `p*_n = r̄^{n−a} p*_a`. The
//! common ratio `r̄` is the positive root of
//!
//! ```text
//! f(x) = (b−μ) x^{b+2−a} + (μ−b−1) x^{b+1−a} + (μ−a+1) x + a − μ
//!      = (x − 1)² g(x)
//! g(x) = x^{μ−a} Σ_{ℓ=1}^{b−μ} ℓ x^ℓ − Σ_{ℓ=1}^{μ−a} (1 + x + … + x^{ℓ−1})
//! ```
//!
//! `f` always has a double root at 1, so the search runs on `g`, which has a
//! single sign change. The root lies in `(0, 1)` when `2μ < a + b`, equals 1
//! when `2μ = a + b`, and lies in `(1, ∞)` otherwise.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mass::ProbMass;
use crate::params::{Cap, ModelParams};
use crate::ROOT_TOL;

/// Mass beyond the truncation tolerated (and folded back) for an infinite cap.
pub const FOLDED_TAIL_LIMIT: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EquilibriumDist {
    pub r_bar: f64,
    pub p_a: f64,
    pub params: ModelParams,
}

fn finite_triple(params: &ModelParams, what: &'static str) -> Result<(u64, u64, u64)> {
    let b = params.b().finite().ok_or(Error::UnboundedCap(what))?;
    Ok((params.a(), params.mu(), b))
}

/// Returns `(g(x), g'(x))`, both by Horner's rule on the two sums.
fn g_and_slope(x: f64, a: u64, mu: u64, b: u64) -> (f64, f64) {
    let lower = (mu - a) as usize;
    let upper = (b - mu) as usize;

    // P(x) = Σ_{ℓ=1}^{upper} ℓ x^ℓ = x · Σ_{ℓ=1}^{upper} ℓ x^{ℓ−1}
    let (mut q, mut dq) = (0.0, 0.0);
    for l in (1..=upper).rev() {
        dq = dq * x + q;
        q = q * x + l as f64;
    }
    let p = x * q;
    let dp = q + x * dq;
    let xl = x.powi(lower as i32);
    let dxl = if lower == 0 {
        0.0
    } else {
        lower as f64 * x.powi(lower as i32 - 1)
    };

    // S(x) = Σ_{j=0}^{lower−1} (lower − j) x^j
    let (mut s, mut ds) = (0.0, 0.0);
    for j in (0..lower).rev() {
        ds = ds * x + s;
        s = s * x + (lower - j) as f64;
    }
    (xl * p - s, dxl * p + xl * dp - ds)
}

pub fn g_eval(x: f64, params: &ModelParams) -> Result<f64> {
    let (a, mu, b) = finite_triple(params, "g")?;
    Ok(g_and_slope(x, a, mu, b).0)
}

pub fn f_eval(x: f64, params: &ModelParams) -> Result<f64> {
    let (a, mu, b) = finite_triple(params, "f")?;
    let (a, mu, b) = (a as f64, mu as f64, b as f64);
    Ok((b - mu) * x.powf(b + 2.0 - a)
        + (mu - b - 1.0) * x.powf(b + 1.0 - a)
        + (mu - a + 1.0) * x
        + a
        - mu)
}

/// Positive root `r̄` of `g`: bisection to [`ROOT_TOL`] followed by two
/// Newton steps that are kept only if they stay inside the final bracket.
pub fn solve_common_ratio(params: &ModelParams) -> Result<f64> {
    let (a, mu, b) = finite_triple(params, "the common ratio")?;
    assert!(b >= a + 2, "a < mu < b forces b >= a + 2");
    let g = |x: f64| g_and_slope(x, a, mu, b).0;
    let (twice_mu, span) = (2 * mu, a + b);
    if twice_mu == span {
        return Ok(1.0);
    }

    let (mut lo, mut hi) = if twice_mu < span {
        (0.0, 1.0)
    } else {
        let mut hi = 2.0f64;
        while g(hi) <= 0.0 {
            hi *= 2.0;
            if !hi.is_finite() || hi > 1e300 {
                return Err(Error::BracketFailure(format!(
                    "no sign change of g above 1 for a={a}, mu={mu}, b={b}"
                )));
            }
        }
        (1.0, hi)
    };
    let (g_lo, g_hi) = (g(lo), g(hi));
    if !(g_lo < 0.0 && g_hi > 0.0) {
        return Err(Error::BracketFailure(format!(
            "g({lo})={g_lo}, g({hi})={g_hi}"
        )));
    }

    while hi - lo > ROOT_TOL * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }

    let mut x = 0.5 * (lo + hi);
    for _ in 0..2 {
        let (gx, dg) = g_and_slope(x, a, mu, b);
        if gx == 0.0 || dg == 0.0 {
            break;
        }
        let next = x - gx / dg;
        if next.is_finite() && next > lo && next < hi {
            x = next;
        }
    }
    Ok(x)
}

/// Equilibrium distribution on the truncation of `params`.
///
/// For an infinite cap the closed form `p*_a = 1/(μ−a+1)`, ratio
/// `(μ−a)/(μ−a+1)` is used; the geometric tail beyond `n_max` must be below
/// [`FOLDED_TAIL_LIMIT`] and is folded back by rescaling.
pub fn equilibrium_distribution(params: &ModelParams) -> Result<(EquilibriumDist, ProbMass)> {
    let a = params.a() as usize;
    let n_max = params.n_max();
    let mut mass = vec![0.0; n_max + 1];
    match params.b() {
        Cap::Finite(b) => {
            let b = b as usize;
            let r = solve_common_ratio(params)?;
            let len = (b - a + 1) as f64;
            let p_a = if r == 1.0 {
                1.0 / len
            } else {
                (1.0 - r) / (1.0 - r.powf(len))
            };
            let mut w = p_a;
            for cell in &mut mass[a..=b] {
                *cell = w;
                w *= r;
            }
            let dist = EquilibriumDist {
                r_bar: r,
                p_a,
                params: *params,
            };
            Ok((dist, ProbMass::from_raw(mass)))
        }
        Cap::Infinite => {
            let gap = (params.mu() - params.a()) as f64;
            let r = gap / (gap + 1.0);
            let p_a = 1.0 / (gap + 1.0);
            let tail = r.powf((n_max - a + 1) as f64);
            if tail > FOLDED_TAIL_LIMIT {
                let required = a + (FOLDED_TAIL_LIMIT.ln() / r.ln()).ceil() as usize;
                return Err(Error::TruncationTooSmall { n_max, required });
            }
            let mut w = p_a;
            for cell in &mut mass[a..] {
                *cell = w;
                w *= r;
            }
            let total: f64 = mass.iter().sum();
            mass.iter_mut().for_each(|p| *p /= total);
            let dist = EquilibriumDist {
                r_bar: r,
                p_a,
                params: *params,
            };
            Ok((dist, ProbMass::from_raw(mass)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meanfield::{apply_l, rates};

    fn triple(a: u64, mu: u64, b: u64) -> ModelParams {
        ModelParams::finite(a, mu, b).unwrap()
    }

    #[test]
    fn g_examples() {
        assert_eq!(g_eval(0.0, &triple(5, 7, 10)).unwrap(), -2.0);
        assert_eq!(g_eval(1.0, &triple(5, 7, 10)).unwrap(), 3.0);
        assert_eq!(g_eval(1.0, &triple(5, 7, 9)).unwrap(), 0.0);
        assert!(g_eval(
            1.0,
            &ModelParams::new(0, 3, Cap::Infinite, Some(50)).unwrap()
        )
        .is_err());
    }

    #[test]
    fn g_slope_matches_finite_difference() {
        let (a, mu, b) = (2, 6, 13);
        for x in [0.3, 0.9, 1.0, 1.4] {
            let h = 1e-6;
            let fd = (g_and_slope(x + h, a, mu, b).0 - g_and_slope(x - h, a, mu, b).0) / (2.0 * h);
            let slope = g_and_slope(x, a, mu, b).1;
            assert!(
                (fd - slope).abs() < 1e-5 * slope.abs().max(1.0),
                "{fd} vs {slope}"
            );
        }
    }

    #[test]
    fn f_examples_and_factorization() {
        for (a, mu, b) in [(5, 7, 10), (0, 1, 2), (2, 9, 12), (0, 5, 30)] {
            let p = triple(a, mu, b);
            assert!(f_eval(1.0, &p).unwrap().abs() < 1e-12);
            assert_eq!(f_eval(0.0, &p).unwrap(), a as f64 - mu as f64);
            for i in 0..100 {
                let x = 0.01 + 1.98 * i as f64 / 99.0;
                let f = f_eval(x, &p).unwrap();
                let fg = (x - 1.0).powi(2) * g_eval(x, &p).unwrap();
                assert!(
                    (f - fg).abs() <= 1e-10 * f.abs().max(fg.abs()).max(1e-300) + 1e-13,
                    "x={x} f={f} fg={fg}"
                );
            }
        }
    }

    #[test]
    fn symmetric_case_gives_unit_ratio() {
        assert_eq!(solve_common_ratio(&triple(5, 7, 9)).unwrap(), 1.0);
        let (dist, p) = equilibrium_distribution(&triple(5, 7, 9)).unwrap();
        assert_eq!(dist.r_bar, 1.0);
        for n in 5..=9 {
            assert!((p.get(n) - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn large_cap_approaches_closed_form() {
        let r = solve_common_ratio(&triple(0, 5, 200)).unwrap();
        assert!((r - 5.0 / 6.0).abs() < 1e-6, "{r}");
    }

    #[test]
    fn reference_ratio_is_a_root() {
        let p = triple(5, 7, 10);
        let r = solve_common_ratio(&p).unwrap();
        assert!(r > 0.0 && r < 1.0);
        assert!(g_eval(r, &p).unwrap().abs() < 1e-12);
    }

    #[test]
    fn reflection_inverts_the_ratio() {
        // n -> a + b - n maps mean mu to a + b - mu and the ratio to its inverse
        for b in 2..=25u64 {
            for a in 0..b {
                for mu in a + 1..b {
                    let r = solve_common_ratio(&triple(a, mu, b)).unwrap();
                    let s = solve_common_ratio(&triple(a, a + b - mu, b)).unwrap();
                    assert!((r * s - 1.0).abs() < 1e-9, "a={a} mu={mu} b={b}: {r} * {s}");
                }
            }
        }
    }

    #[test]
    fn case_selection_and_residuals() {
        for b in 2..=25u64 {
            for a in 0..b {
                for mu in a + 1..b {
                    let p = triple(a, mu, b);
                    let r = solve_common_ratio(&p).unwrap();
                    match (2 * mu).cmp(&(a + b)) {
                        std::cmp::Ordering::Less => assert!(r < 1.0),
                        std::cmp::Ordering::Equal => assert_eq!(r, 1.0),
                        std::cmp::Ordering::Greater => assert!(r > 1.0),
                    }
                    assert!(
                        g_eval(r, &p).unwrap().abs()
                            <= 1e-12 * g_and_slope(r, a, mu, b).1.abs().max(1.0)
                    );
                    let scale = (b - mu) as f64 * r.powf((b + 2 - a) as f64)
                        + (mu - a + 1) as f64 * r
                        + mu as f64;
                    assert!(f_eval(r, &p).unwrap().abs() <= 1e-10 * scale.max(1.0));
                }
            }
        }
    }

    #[test]
    fn equilibrium_is_stationary_with_correct_mean() {
        for b in 2..=30u64 {
            for a in 0..b {
                for mu in a + 1..b {
                    let params = triple(a, mu, b);
                    let (dist, p) = equilibrium_distribution(&params).unwrap();
                    assert!((p.mean() - mu as f64).abs() < 1e-8);
                    assert!((p.total() - 1.0).abs() < 1e-12);
                    assert!(apply_l(&p, &params).unwrap().sup_norm() < 1e-10);
                    // normalization identity
                    let len = (b - a + 1) as f64;
                    let norm = if dist.r_bar == 1.0 {
                        len * dist.p_a
                    } else {
                        dist.p_a * (1.0 - dist.r_bar.powf(len)) / (1.0 - dist.r_bar)
                    };
                    assert!((norm - 1.0).abs() < 1e-12);
                    // detailed balance: λ_r p_{n+1} = λ_g p_n on the support
                    let rt = rates(&p, &params);
                    for n in a as usize..b as usize {
                        assert!(
                            (rt.lambda_r * p.get(n + 1) - rt.lambda_g * p.get(n)).abs() < 1e-10
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn infinite_cap_is_geometric() {
        for mu in 1..=9u64 {
            let params = ModelParams::new(0, mu, Cap::Infinite, Some(600)).unwrap();
            let (dist, p) = equilibrium_distribution(&params).unwrap();
            assert!((p.get(0) - 1.0 / (mu as f64 + 1.0)).abs() < 1e-12);
            assert!((dist.r_bar - mu as f64 / (mu as f64 + 1.0)).abs() < 1e-15);
            assert!((p.mean() - mu as f64).abs() < 1e-8);
        }
        let short = ModelParams::new(0, 12, Cap::Infinite, Some(200)).unwrap();
        assert!(matches!(
            equilibrium_distribution(&short),
            Err(Error::TruncationTooSmall { .. })
        ));
    }
}
