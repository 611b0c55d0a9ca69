//! Exact simulation of the N-agent exchange dynamics.
//!
//! Every ordered pair `(i, j)`, `i ≠ j`, carries an independent clock of
//! rate `1/N`; when it rings and `S_i > a`, `S_j < b`, agent `i` hands one
//! dollar to agent `j`. With `G` givers (`S > a`), `R` receivers (`S < b`)
//! and `M` agents that are both, the total rate of effective transfers is
//! `(G·R − M)/N` and each eligible ordered pair is equally likely.
//!
//! Agents are kept in an array sorted by wealth with one contiguous bucket
//! per wealth level, so class counts are O(1) lookups and a transfer is two
//! swaps.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::Exp1;

use crate::error::{Error, Result};
use crate::mass::ProbMass;
use crate::params::ModelParams;

/// Exact-sum rejection attempts for [`InitSpec::Sample`] before repairing.
pub const SAMPLE_ATTEMPTS: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub enum InitSpec {
    /// Everybody starts with exactly `mu`.
    AllAtMean,
    /// i.i.d. draws from the given law, conditioned or repaired to total `N·mu`.
    Sample(ProbMass),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClassCounts {
    /// Agents with `S > a`.
    pub givers: usize,
    /// Agents with `S < b`.
    pub receivers: usize,
    /// Agents with `a < S < b`.
    pub middle: usize,
}

impl ClassCounts {
    /// Number of eligible ordered pairs, `G·R − M`.
    pub fn eligible_pairs(&self) -> u128 {
        self.givers as u128 * self.receivers as u128 - self.middle as u128
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transfer {
    pub time: f64,
    pub giver: usize,
    pub receiver: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventLog {
    pub events: Vec<Transfer>,
}

/// Wealth of every agent plus the level-bucket index.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentPopulation {
    wealth: Vec<u64>,
    time: f64,
    /// agent ids sorted by wealth
    order: Vec<usize>,
    /// position of each agent in `order`
    pos: Vec<usize>,
    /// first position of each level; the last entry is `N`
    start: Vec<usize>,
}

impl AgentPopulation {
    pub fn from_wealth(wealth: Vec<u64>, time: f64) -> Self {
        let n = wealth.len();
        let top = wealth.iter().copied().max().unwrap_or(0) as usize;
        let mut start = vec![0usize; top + 3];
        for &w in &wealth {
            start[w as usize + 1] += 1;
        }
        for w in 1..start.len() {
            start[w] += start[w - 1];
        }
        let mut fill = start.clone();
        let mut order = vec![0; n];
        let mut pos = vec![0; n];
        for (agent, &w) in wealth.iter().enumerate() {
            let slot = &mut fill[w as usize];
            order[*slot] = agent;
            pos[agent] = *slot;
            *slot += 1;
        }
        AgentPopulation {
            wealth,
            time,
            order,
            pos,
            start,
        }
    }

    pub fn wealth(&self) -> &[u64] {
        &self.wealth
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn n_agents(&self) -> usize {
        self.wealth.len()
    }

    pub fn total_wealth(&self) -> u64 {
        self.wealth.iter().sum()
    }

    pub fn max_wealth(&self) -> u64 {
        let n = self.n_agents();
        (0..self.start.len() - 1)
            .rev()
            .find(|&w| self.start[w] < n)
            .unwrap_or(0) as u64
    }

    fn start_of(&self, w: u64) -> usize {
        self.start
            .get(w as usize)
            .copied()
            .unwrap_or(self.wealth.len())
    }

    /// End (exclusive) of the receiver range in `order`.
    fn receivers_end(&self, params: &ModelParams) -> usize {
        params
            .b()
            .finite()
            .map_or(self.n_agents(), |b| self.start_of(b))
    }

    pub fn class_counts(&self, params: &ModelParams) -> ClassCounts {
        let n = self.n_agents();
        let first_giver = self.start_of(params.a() + 1);
        let receivers = self.receivers_end(params);
        ClassCounts {
            givers: n - first_giver,
            receivers,
            middle: receivers.saturating_sub(first_giver),
        }
    }

    /// Number of agents holding exactly `w`.
    pub fn count_at(&self, w: u64) -> usize {
        self.start_of(w + 1) - self.start_of(w)
    }

    /// Agent counts per wealth level `0..=max_wealth`.
    pub fn histogram(&self) -> Vec<usize> {
        (0..=self.max_wealth()).map(|w| self.count_at(w)).collect()
    }

    fn swap_slots(&mut self, p: usize, q: usize) {
        if p != q {
            self.order.swap(p, q);
            self.pos[self.order[p]] = p;
            self.pos[self.order[q]] = q;
        }
    }

    fn decrement(&mut self, agent: usize) {
        let w = self.wealth[agent] as usize;
        let first = self.start[w];
        self.swap_slots(self.pos[agent], first);
        self.start[w] += 1;
        self.wealth[agent] -= 1;
    }

    fn increment(&mut self, agent: usize) {
        let w = self.wealth[agent] as usize;
        let n = self.n_agents();
        while self.start.len() < w + 3 {
            self.start.push(n);
        }
        let last = self.start[w + 1] - 1;
        self.swap_slots(self.pos[agent], last);
        self.start[w + 1] -= 1;
        self.wealth[agent] += 1;
    }

    fn transfer(&mut self, giver: usize, receiver: usize) {
        self.decrement(giver);
        self.increment(receiver);
    }

    /// Uniform eligible ordered pair. Requires at least one.
    fn pick_pair<R: Rng + ?Sized>(&self, params: &ModelParams, rng: &mut R) -> (usize, usize) {
        let first_giver = self.start_of(params.a() + 1);
        let receivers_end = self.receivers_end(params);
        loop {
            let giver = self.order[rng.random_range(first_giver..self.n_agents())];
            let receiver = self.order[rng.random_range(0..receivers_end)];
            if giver != receiver {
                return (giver, receiver);
            }
        }
    }
}

/// Builds the initial population of `params.n_agents()` agents with total
/// wealth exactly `N·mu`.
///
/// `Sample` first tries [`SAMPLE_ATTEMPTS`] independent draws hoping to hit
/// the total exactly; otherwise the last draw is repaired one dollar at a
/// time (remove from a random agent with positive wealth, or add to a random
/// agent).
pub fn init_population<R: Rng + ?Sized>(
    params: &ModelParams,
    init: &InitSpec,
    rng: &mut R,
) -> Result<AgentPopulation> {
    let n = params.n_agents();
    let mu = params.mu();
    let target = n as u64 * mu;
    let law = match init {
        InitSpec::AllAtMean => return Ok(AgentPopulation::from_wealth(vec![mu; n], 0.0)),
        InitSpec::Sample(law) => law,
    };
    let dist = WeightedIndex::new(law.as_slice())
        .map_err(|e| Error::Parse(format!("sampling law: {e}")))?;

    let mut wealth = vec![0u64; n];
    let mut total = 0;
    for _ in 0..SAMPLE_ATTEMPTS {
        wealth.iter_mut().for_each(|w| *w = dist.sample(rng) as u64);
        total = wealth.iter().sum::<u64>();
        if total == target {
            return Ok(AgentPopulation::from_wealth(wealth, 0.0));
        }
    }
    if total.abs_diff(target) > target {
        return Err(Error::InfeasibleRepair { total, target });
    }
    while total > target {
        let i = rng.random_range(0..n);
        if wealth[i] > 0 {
            wealth[i] -= 1;
            total -= 1;
        }
    }
    while total < target {
        wealth[rng.random_range(0..n)] += 1;
        total += 1;
    }
    Ok(AgentPopulation::from_wealth(wealth, 0.0))
}

/// `(G·R − M)/N`.
pub fn total_event_rate(pop: &AgentPopulation, params: &ModelParams) -> f64 {
    pop.class_counts(params).eligible_pairs() as f64 / pop.n_agents() as f64
}

/// Performs one transfer. Returns the waiting time and the transfer made.
pub fn step_event<R: Rng + ?Sized>(
    pop: &mut AgentPopulation,
    params: &ModelParams,
    rng: &mut R,
) -> Result<(f64, Transfer)> {
    let rate = total_event_rate(pop, params);
    if rate == 0.0 {
        return Err(Error::FrozenState);
    }
    let dt = rng.sample::<f64, _>(Exp1) / rate;
    let (giver, receiver) = pop.pick_pair(params, rng);
    pop.transfer(giver, receiver);
    pop.time += dt;
    Ok((
        dt,
        Transfer {
            time: pop.time,
            giver,
            receiver,
        },
    ))
}

/// Same law as [`step_event`] by thinning: clocks ring at total rate `N − 1`
/// on a uniform ordered pair and non-eligible pairs are no-ops. Returns the
/// waiting time and the transfer, if any.
pub fn step_event_thinned<R: Rng + ?Sized>(
    pop: &mut AgentPopulation,
    params: &ModelParams,
    rng: &mut R,
) -> (f64, Option<Transfer>) {
    let n = pop.n_agents();
    assert!(n >= 2, "thinning needs at least two agents");
    let dt = rng.sample::<f64, _>(Exp1) / (n - 1) as f64;
    pop.time += dt;
    let i = rng.random_range(0..n);
    let mut j = rng.random_range(0..n - 1);
    if j >= i {
        j += 1;
    }
    if pop.wealth[i] > params.a() && params.b().admits(pop.wealth[j]) {
        pop.transfer(i, j);
        return (
            dt,
            Some(Transfer {
                time: pop.time,
                giver: i,
                receiver: j,
            }),
        );
    }
    (dt, None)
}

/// Runs until `t_end`, returning a snapshot at each sample time in
/// `[pop.time, t_end]` (or just at `t_end` when none is given). A snapshot
/// holds the state in force at that time. A frozen state stays constant.
pub fn simulate_until<R: Rng + ?Sized>(
    pop: &mut AgentPopulation,
    params: &ModelParams,
    t_end: f64,
    rng: &mut R,
    sample_times: &[f64],
    mut log: Option<&mut EventLog>,
) -> Result<Vec<AgentPopulation>> {
    if !(t_end >= pop.time) {
        return Err(Error::InvalidParam {
            key: "t_end",
            reason: format!("{t_end} precedes current time {}", pop.time),
        });
    }
    let mut samples: Vec<f64> = sample_times
        .iter()
        .copied()
        .filter(|&s| s >= pop.time && s <= t_end)
        .collect();
    if samples.is_empty() {
        samples.push(t_end);
    }
    samples.sort_by(f64::total_cmp);
    samples.dedup();

    let mut snapshots = Vec::with_capacity(samples.len());
    let mut pending = samples.into_iter().peekable();
    let snapshot = |pop: &AgentPopulation, at: f64| {
        let mut s = pop.clone();
        s.time = at;
        s
    };

    loop {
        let rate = total_event_rate(pop, params);
        let next = if rate > 0.0 {
            pop.time + rng.sample::<f64, _>(Exp1) / rate
        } else {
            f64::INFINITY
        };
        while let Some(&s) = pending.peek() {
            if s < next {
                snapshots.push(snapshot(pop, s));
                pending.next();
            } else {
                break;
            }
        }
        if next > t_end {
            // memoryless clocks: the overshooting draw is simply discarded
            pop.time = t_end;
            break;
        }
        let (giver, receiver) = pop.pick_pair(params, rng);
        pop.transfer(giver, receiver);
        pop.time = next;
        if let Some(log) = log.as_deref_mut() {
            log.events.push(Transfer {
                time: next,
                giver,
                receiver,
            });
        }
    }
    Ok(snapshots)
}

/// `p_emp[n] = #{i : S_i = n} / N` on `0..=n_max`.
pub fn empirical_distribution(pop: &AgentPopulation, n_max: usize) -> Result<ProbMass> {
    let top = pop.max_wealth() as usize;
    if top > n_max {
        return Err(Error::TruncationTooSmall {
            n_max,
            required: top,
        });
    }
    let inv = 1.0 / pop.n_agents() as f64;
    let mass = (0..=n_max as u64)
        .map(|w| pop.count_at(w) as f64 * inv)
        .collect();
    Ok(ProbMass::from_raw(mass))
}
