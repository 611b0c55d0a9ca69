use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

use crate::agent_sim::{empirical_distribution, total_event_rate, AgentPopulation};
use crate::error::{Error, Result};
use crate::io::{format_float, CsvRecord};
use crate::meanfield::apply_generator_d;
use crate::params::{Cap, ModelParams};

/// Agreement required between the exact drift and the generator.
pub const ORACLE_TOL: f64 = 1e-12;
/// Largest total wealth whose state space is enumerated.
const MAX_TOTAL_WEALTH: u64 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleCase {
    pub n_agents: usize,
    pub a: u64,
    pub mu: u64,
    pub b: Cap,
    pub states: usize,
    pub max_discrepancy: f64,
}

impl CsvRecord for OracleCase {
    fn header() -> &'static [&'static str] {
        &["n_agents", "a", "mu", "b", "states", "max_discrepancy"]
    }
    fn fields(&self) -> Vec<String> {
        vec![
            self.n_agents.to_string(),
            self.a.to_string(),
            self.mu.to_string(),
            self.b.to_string(),
            self.states.to_string(),
            format_float(self.max_discrepancy),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    #[serde(skip)]
    pub cases: Vec<OracleCase>,
    pub max_discrepancy: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// All ordered `n`-tuples of nonnegative integers summing to `total`.
fn compositions(n: usize, total: u64) -> Vec<Vec<u64>> {
    if n == 1 {
        return vec![vec![total]];
    }
    (0..=total)
        .flat_map(|first| {
            compositions(n - 1, total - first)
                .into_iter()
                .map(move |mut rest| {
                    rest.insert(0, first);
                    rest
                })
        })
        .collect()
}

/// Enumerates every configuration of `n_agents` agents with mean `params.mu()`,
/// builds the exact transition rates, and returns the number of states and
/// the largest gap between the exact drift of the empirical measure and the
/// generator `L + R/N` evaluated on it.
pub fn generator_discrepancy(params: &ModelParams, n_agents: usize) -> Result<(usize, f64)> {
    let total = n_agents as u64 * params.mu();
    if total > MAX_TOTAL_WEALTH {
        return Err(Error::InvalidParam {
            key: "max_total_wealth",
            reason: format!("must be at most {MAX_TOTAL_WEALTH}"),
        });
    }
    let states = compositions(n_agents, total);
    let index: HashMap<&[u64], usize> = states
        .iter()
        .enumerate()
        .map(|(k, s)| (s.as_slice(), k))
        .collect();
    let n_max = params.n_max();
    let empirical = states
        .iter()
        .map(|s| empirical_distribution(&AgentPopulation::from_wealth(s.clone(), 0.0), n_max))
        .collect::<Result<Vec<_>>>()?;

    let rate = 1.0 / n_agents as f64;
    let mut worst: f64 = 0.0;
    for (k, s) in states.iter().enumerate() {
        // row of the rate matrix
        let mut row: BTreeMap<usize, f64> = BTreeMap::new();
        for i in 0..n_agents {
            for j in 0..n_agents {
                if i != j && s[i] > params.a() && params.b().admits(s[j]) {
                    let mut t = s.clone();
                    t[i] -= 1;
                    t[j] += 1;
                    *row.entry(index[t.as_slice()]).or_default() += rate;
                }
            }
        }
        let out_rate: f64 = row.values().sum();
        let sim_rate = total_event_rate(&AgentPopulation::from_wealth(s.clone(), 0.0), params);
        if (out_rate - sim_rate).abs() > 1e-12 {
            return Err(Error::InvariantViolation(format!(
                "state {s:?}: enumerated rate {out_rate} vs simulator {sim_rate}"
            )));
        }

        let here = empirical[k].as_slice();
        let mut drift = vec![0.0; n_max + 1];
        for (&to, &q) in &row {
            for (d, (x, y)) in drift
                .iter_mut()
                .zip(empirical[to].as_slice().iter().zip(here))
            {
                *d += q * (x - y);
            }
        }
        let generator = apply_generator_d(&empirical[k], params, n_agents)?;
        for (x, y) in drift.iter().zip(&generator.d_mass) {
            worst = worst.max((x - y).abs());
        }
    }
    Ok((states.len(), worst))
}

/// Runs [`generator_discrepancy`] for `N ∈ {2, 3}` and every `(a, μ, b)`
/// with `N·μ ≤ max_total_wealth`, including `b = inf`.
pub fn run_generator_oracle(max_total_wealth: u64) -> Result<OracleReport> {
    if max_total_wealth > MAX_TOTAL_WEALTH {
        return Err(Error::InvalidParam {
            key: "max_total_wealth",
            reason: format!("must be at most {MAX_TOTAL_WEALTH}, got {max_total_wealth}"),
        });
    }
    let mut cases = Vec::new();
    for n_agents in [2usize, 3] {
        for mu in 1..=max_total_wealth / n_agents as u64 {
            let total = n_agents as u64 * mu;
            let caps = (mu + 1..=total + 1)
                .map(Cap::Finite)
                .chain(std::iter::once(Cap::Infinite));
            for b in caps {
                let n_max = b
                    .finite()
                    .map_or(0, |b| b as usize + 2)
                    .max(total as usize + 2);
                for a in 0..mu {
                    let params =
                        ModelParams::new(a, mu, b, Some(n_max))?.with_n_agents(n_agents)?;
                    let (states, max_discrepancy) = generator_discrepancy(&params, n_agents)?;
                    cases.push(OracleCase {
                        n_agents,
                        a,
                        mu,
                        b,
                        states,
                        max_discrepancy,
                    });
                }
            }
        }
    }
    let max_discrepancy = cases.iter().map(|c| c.max_discrepancy).fold(0.0, f64::max);
    Ok(OracleReport {
        pass: max_discrepancy < ORACLE_TOL,
        cases,
        max_discrepancy,
        tolerance: ORACLE_TOL,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn composition_counts() {
        assert_eq!(compositions(2, 2), vec![vec![0, 2], vec![1, 1], vec![2, 0]]);
        assert_eq!(compositions(3, 6).len(), 28);
    }

    #[test]
    fn three_state_chain() {
        let p = ModelParams::new(0, 1, Cap::Finite(2), Some(4)).unwrap();
        let (states, gap) = generator_discrepancy(&p, 2).unwrap();
        assert_eq!(states, 3);
        assert!(gap < 1e-14, "{gap}");
    }

    #[test]
    fn three_agents() {
        let p = ModelParams::new(0, 2, Cap::Finite(4), Some(8)).unwrap();
        let (states, gap) = generator_discrepancy(&p, 3).unwrap();
        assert_eq!(states, 28);
        assert!(gap < 1e-12, "{gap}");
    }

    #[test]
    fn floor_equal_to_mean_is_rejected() {
        assert!(ModelParams::new(1, 1, Cap::Finite(3), None).is_err());
    }

    #[test]
    fn full_sweep_passes() {
        let rep = run_generator_oracle(8).unwrap();
        assert!(rep.pass, "max discrepancy {}", rep.max_discrepancy);
        assert!(rep
            .cases
            .iter()
            .any(|c| c.b == Cap::Infinite && c.n_agents == 3));
        assert!(run_generator_oracle(9).is_err());
    }
}
