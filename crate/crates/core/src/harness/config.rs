//! Scenario files.
//!
//! A scenario is a flat TOML document:
//!
//! ```toml
//! k = 5                       # group size, at least 2
//! n_extra_pool = 0            # depositors that land in the pool
//! denomination = 100
//! gas_fee = 1
//! seed = 7
//! adversaries = ["modifier@3:0"]
//! withdrawals = ["2:Shuffling"]
//! restart_policy = "StayIfPossible"   # or "FreshEscrow"
//! tick_budget = 10000
//!
//! [timeouts]
//! phase = 10
//! blame_window = 3
//! max_delay = 2
//! ```
//!
//! Adversary strings take the form `kind@position[:param...]`:
//! `silent@P`, `nonsigner@P`, `dropper@P[:INDEX]`,
//! `modifier@P[:INDEX[:HEX_ADDRESS]]` and `false-accuser@TARGET[:noproof]`.
//! Positions are chain positions in the first round. A false-accuser target
//! is clamped into `2..=k-1` and its neighbours become the accusers.
//! Withdrawal strings `P:Phase` make position `P` leave on entering `Phase`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::onion::{Destination, MAX_GROUP};
use crate::participant::{AdversaryKind, Phase, RestartPolicy, Timeouts};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("bad scenario file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

fn default_denomination() -> u64 {
    100
}

fn default_budget() -> u64 {
    10_000
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub k: usize,
    #[serde(default)]
    pub n_extra_pool: usize,
    #[serde(default = "default_denomination")]
    pub denomination: u64,
    #[serde(default)]
    pub gas_fee: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub adversaries: Vec<String>,
    #[serde(default)]
    pub withdrawals: Vec<String>,
    #[serde(default)]
    pub timeouts: Timeouts,
    #[serde(default)]
    pub restart_policy: RestartPolicy,
    /// Starting balance of every depositor; ten deposits' worth by default.
    #[serde(default)]
    pub initial_balance: Option<u64>,
    #[serde(default = "default_budget")]
    pub tick_budget: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AdversarySpec {
    pub kind: AdversaryKind,
    /// Chain positions the adversary occupies.
    pub positions: Vec<u16>,
}

impl ScenarioConfig {
    pub fn honest(k: usize, seed: u64) -> Self {
        ScenarioConfig {
            k,
            n_extra_pool: 0,
            denomination: default_denomination(),
            gas_fee: 1,
            seed,
            adversaries: Vec::new(),
            withdrawals: Vec::new(),
            timeouts: Timeouts::default(),
            restart_policy: RestartPolicy::default(),
            initial_balance: None,
            tick_budget: default_budget(),
        }
    }

    pub fn with_adversary(mut self, spec: &str) -> Self {
        self.adversaries.push(spec.to_string());
        self
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn initial_balance(&self) -> u64 {
        self.initial_balance
            .unwrap_or(10 * (self.denomination + self.gas_fee))
    }

    pub fn participants(&self) -> usize {
        self.k + self.n_extra_pool
    }

    pub fn adversary_specs(&self) -> Result<Vec<AdversarySpec>, ConfigError> {
        self.adversaries
            .iter()
            .map(|s| parse_adversary(s, self.k))
            .collect()
    }

    pub fn withdrawal_specs(&self) -> Result<Vec<(u16, Phase)>, ConfigError> {
        self.withdrawals
            .iter()
            .map(|s| parse_withdrawal(s))
            .collect()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.k < 2 {
            return bad(format!("k must be at least 2, got {}", self.k));
        }
        if self.k > MAX_GROUP {
            return bad(format!("k must be at most {MAX_GROUP}, got {}", self.k));
        }
        if self.denomination == 0 {
            return bad("denomination must be positive".into());
        }
        if self.timeouts.phase == 0 || self.timeouts.max_delay == 0 {
            return bad("timeouts must be positive".into());
        }
        let limit = self.participants() as u16;
        let mut taken = Vec::new();
        for spec in self.adversary_specs()? {
            spec.kind
                .validate(self.k)
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
            for p in spec.positions {
                if p == 0 || p > limit {
                    return bad(format!("adversary position {p} outside 1..={limit}"));
                }
                if taken.contains(&p) {
                    return bad(format!("two adversaries at position {p}"));
                }
                taken.push(p);
            }
        }
        for (p, _) in self.withdrawal_specs()? {
            if p == 0 || p > limit {
                return bad(format!("withdrawal position {p} outside 1..={limit}"));
            }
        }
        Ok(())
    }
}

fn num<T: std::str::FromStr>(s: &str, what: &str) -> Result<T, ConfigError> {
    s.parse()
        .map_err(|_| ConfigError::Invalid(format!("bad {what} `{s}`")))
}

/// Parses `kind@position[:param...]`.
pub fn parse_adversary(spec: &str, k: usize) -> Result<AdversarySpec, ConfigError> {
    let (kind, rest) = spec
        .split_once('@')
        .ok_or_else(|| ConfigError::Invalid(format!("adversary `{spec}` lacks @position")))?;
    let mut parts = rest.split(':');
    let position: u16 = num(parts.next().unwrap_or(""), "position")?;
    let params: Vec<&str> = parts.collect();
    let index = |i: usize| {
        params
            .get(i)
            .map(|s| num::<usize>(s, "index"))
            .transpose()
            .map(|v| v.unwrap_or(0))
    };
    let kind = match kind.to_ascii_lowercase().as_str() {
        "silent" => AdversaryKind::Silent,
        "nonsigner" | "non-signer" => AdversaryKind::NonSigner,
        "dropper" => AdversaryKind::Dropper {
            position,
            index: index(0)?,
        },
        "modifier" => {
            let substitute = match params.get(1) {
                Some(h) => hex::decode(h)
                    .ok()
                    .and_then(|b| Destination::from_slice(&b))
                    .ok_or_else(|| ConfigError::Invalid(format!("bad substitute address `{h}`")))?,
                None => Destination([0xad; 20]),
            };
            AdversaryKind::Modifier {
                position,
                index: index(0)?,
                substitute,
            }
        }
        "false-accuser" | "falseaccuserpair" | "false-accuser-pair" => {
            if k < 3 {
                return Err(ConfigError::Invalid("false-accuser needs k >= 3".into()));
            }
            let target = position.clamp(2, k as u16 - 1);
            let deliver_proof = match params.first() {
                None | Some(&"proof") => true,
                Some(&"noproof") => false,
                Some(other) => {
                    return Err(ConfigError::Invalid(format!(
                        "unknown false-accuser flag `{other}`"
                    )))
                }
            };
            AdversaryKind::FalseAccuserPair {
                a: target - 1,
                c: target + 1,
                target,
                deliver_proof,
            }
        }
        other => {
            return Err(ConfigError::Invalid(format!(
                "unknown adversary kind `{other}`"
            )))
        }
    };
    let positions = kind.positions(position);
    Ok(AdversarySpec { kind, positions })
}

pub fn parse_withdrawal(spec: &str) -> Result<(u16, Phase), ConfigError> {
    let (p, phase) = spec
        .split_once(':')
        .ok_or_else(|| ConfigError::Invalid(format!("withdrawal `{spec}` is not P:Phase")))?;
    let phase: Phase = serde_json::from_value(serde_json::Value::String(phase.to_string()))
        .map_err(|_| ConfigError::Invalid(format!("unknown phase `{phase}`")))?;
    Ok((num(p, "position")?, phase))
}
