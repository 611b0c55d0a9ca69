//! Model configuration: floor `a`, mean `mu`, cap `b`, population size and
//! truncation of the mean-field state vector.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default population size when none is configured.
pub const DEFAULT_N_AGENTS: usize = 1000;

/// The wealth cap `b`, which may be absent (the classical BDY limit).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Cap {
    Finite(u64),
    Infinite,
}

impl Cap {
    pub fn finite(self) -> Option<u64> {
        match self {
            Cap::Finite(b) => Some(b),
            Cap::Infinite => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Cap::Infinite)
    }

    /// `w < b`, i.e. an agent holding `w` may still receive.
    pub fn admits(self, w: u64) -> bool {
        match self {
            Cap::Finite(b) => w < b,
            Cap::Infinite => true,
        }
    }
}

impl fmt::Display for Cap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cap::Finite(b) => write!(f, "{b}"),
            Cap::Infinite => f.write_str("inf"),
        }
    }
}

/// Serialized as an integer, or the string `"inf"`.
impl Serialize for Cap {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Cap::Finite(b) => s.serialize_u64(*b),
            Cap::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Cap {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct CapVisitor;
        impl serde::de::Visitor<'_> for CapVisitor {
            type Value = Cap;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a positive integer or `inf`")
            }
            fn visit_u64<E: serde::de::Error>(self, v: u64) -> std::result::Result<Cap, E> {
                Ok(Cap::Finite(v))
            }
            fn visit_i64<E: serde::de::Error>(self, v: i64) -> std::result::Result<Cap, E> {
                u64::try_from(v)
                    .map(Cap::Finite)
                    .map_err(|_| E::custom(format!("negative cap {v}")))
            }
            fn visit_str<E: serde::de::Error>(self, v: &str) -> std::result::Result<Cap, E> {
                v.parse().map_err(E::custom)
            }
        }
        d.deserialize_any(CapVisitor)
    }
}

impl FromStr for Cap {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        match t.to_ascii_lowercase().as_str() {
            "inf" | "infinite" | "infinity" => Ok(Cap::Infinite),
            _ => t
                .parse::<u64>()
                .map(Cap::Finite)
                .map_err(|_| Error::InvalidParam {
                    key: "b",
                    reason: format!("expected a positive integer or `inf`, got `{t}`"),
                }),
        }
    }
}

/// Unvalidated parameter set as read from a config file or flags.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawParams {
    pub a: Option<i64>,
    pub mu: Option<i64>,
    pub b: Option<Cap>,
    pub n_agents: Option<i64>,
    pub n_max: Option<i64>,
}

/// Validated model configuration. Immutable once built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelParams {
    a: u64,
    mu: u64,
    b: Cap,
    n_agents: usize,
    n_max: usize,
}

impl ModelParams {
    /// Shorthand for [`validate_params`] with default population size.
    pub fn new(a: u64, mu: u64, b: Cap, n_max: Option<usize>) -> Result<Self> {
        validate_params(&RawParams {
            a: Some(a as i64),
            mu: Some(mu as i64),
            b: Some(b),
            n_agents: None,
            n_max: n_max.map(|n| n as i64),
        })
    }

    /// Finite-cap parameters with the smallest admissible truncation `b + 2`.
    pub fn finite(a: u64, mu: u64, b: u64) -> Result<Self> {
        Self::new(a, mu, Cap::Finite(b), None)
    }

    pub fn a(&self) -> u64 {
        self.a
    }

    pub fn mu(&self) -> u64 {
        self.mu
    }

    pub fn b(&self) -> Cap {
        self.b
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    /// Cap seen by the truncated mean-field system. With an infinite cap the
    /// last retained cell acts as a reflecting wall.
    pub fn effective_cap(&self) -> usize {
        match self.b {
            Cap::Finite(b) => b as usize,
            Cap::Infinite => self.n_max,
        }
    }

    pub fn with_n_agents(self, n_agents: usize) -> Result<Self> {
        let mut raw = RawParams::from(self);
        raw.n_agents = Some(n_agents as i64);
        validate_params(&raw)
    }

    pub fn with_n_max(self, n_max: usize) -> Result<Self> {
        let mut raw = RawParams::from(self);
        raw.n_max = Some(n_max as i64);
        validate_params(&raw)
    }
}

impl From<ModelParams> for RawParams {
    fn from(p: ModelParams) -> Self {
        RawParams {
            a: Some(p.a as i64),
            mu: Some(p.mu as i64),
            b: Some(p.b),
            n_agents: Some(p.n_agents as i64),
            n_max: Some(p.n_max as i64),
        }
    }
}

/// Checks `a < mu < b` and the truncation requirements.
///
/// A missing `n_max` defaults to `b + 2` for a finite cap; an infinite cap
/// needs an explicit truncation.
pub fn validate_params(raw: &RawParams) -> Result<ModelParams> {
    let a = raw.a.ok_or(Error::MissingParam("a"))?;
    let mu = raw.mu.ok_or(Error::MissingParam("mu"))?;
    let b = raw.b.ok_or(Error::MissingParam("b"))?;

    if a < 0 {
        return Err(Error::InvalidParam {
            key: "a",
            reason: format!("must be nonnegative, got {a}"),
        });
    }
    if mu <= 0 {
        return Err(Error::InvalidParam {
            key: "mu",
            reason: format!("must be positive, got {mu}"),
        });
    }
    if b == Cap::Finite(0) {
        return Err(Error::InvalidParam {
            key: "b",
            reason: "must be positive".into(),
        });
    }
    let ordered = a < mu && b.finite().is_none_or(|b| (mu as u64) < b);
    if !ordered {
        return Err(Error::OrderViolation { a, mu, b });
    }

    let n_agents = match raw.n_agents {
        None => DEFAULT_N_AGENTS,
        Some(n) if n > 0 => n as usize,
        Some(n) => {
            return Err(Error::InvalidParam {
                key: "n_agents",
                reason: format!("must be positive, got {n}"),
            })
        }
    };

    let required = match b {
        Cap::Finite(b) => b as usize + 2,
        Cap::Infinite => mu as usize + 2,
    };
    let n_max = match (raw.n_max, b) {
        (Some(n), _) if n <= 0 => {
            return Err(Error::InvalidParam {
                key: "n_max",
                reason: format!("must be positive, got {n}"),
            })
        }
        (Some(n), _) => n as usize,
        (None, Cap::Finite(_)) => required,
        (None, Cap::Infinite) => {
            return Err(Error::InvalidParam {
                key: "n_max",
                reason: "an explicit truncation is required when b is infinite".into(),
            })
        }
    };
    if n_max < required {
        return Err(Error::TruncationTooSmall { n_max, required });
    }

    Ok(ModelParams {
        a: a as u64,
        mu: mu as u64,
        b,
        n_agents,
        n_max,
    })
}
