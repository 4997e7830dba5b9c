//! Scenario files: a flat TOML description of one batch of runs. Inline
//! command-line flags override file values.

use std::path::Path;

use abalab_core::field::DEFAULT_PRIME;
use abalab_core::simnet::{AdversaryScript, RunConfig, RunMode};
use abalab_core::ProcessId;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario file: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse scenario file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("inputs must be a string of 0/1 of length n (n={n}, inputs={inputs:?})")]
    BadInputs { n: usize, inputs: Option<String> },
    #[error("unknown adversary name {0:?}")]
    UnknownAdversary(String),
    #[error("seed specification is empty")]
    NoSeeds,
    #[error("n > 3t required (n={n}, t={t})")]
    Resilience { n: usize, t: usize },
}

/// Which seeds a batch runs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SeedSpec {
    Range { start: u64, count: u64 },
    List { list: Vec<u64> },
}

impl SeedSpec {
    pub fn seeds(&self) -> Vec<u64> {
        match self {
            SeedSpec::Range { start, count } => (*start..start + count).collect(),
            SeedSpec::List { list } => list.clone(),
        }
    }
}

impl Default for SeedSpec {
    fn default() -> Self {
        SeedSpec::Range { start: 0, count: 1 }
    }
}

fn default_n() -> usize {
    4
}
fn default_t() -> usize {
    1
}
fn default_prime() -> u64 {
    DEFAULT_PRIME
}
fn default_max_steps() -> u64 {
    1_000_000
}
fn default_protocol() -> String {
    "aba".into()
}

/// One batch description. Field names match the TOML keys.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_t")]
    pub t: usize,
    /// Input bits as a 0/1 string, one per process (agreement protocol).
    #[serde(default)]
    pub inputs: Option<String>,
    /// `aba` or `ivss_only`.
    #[serde(default = "default_protocol")]
    pub protocol: String,
    /// Dealer for `ivss_only`.
    #[serde(default)]
    pub dealer: Option<u32>,
    #[serde(default = "default_prime")]
    pub prime: u64,
    /// Fairness bound; defaults to 64 n^2.
    #[serde(default)]
    pub fairness: Option<u64>,
    #[serde(default = "default_max_steps")]
    pub max_steps: u64,
    #[serde(default)]
    pub seeds: SeedSpec,
    #[serde(default)]
    pub adversary: Option<AdversaryScript>,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            n: default_n(),
            t: default_t(),
            inputs: None,
            protocol: default_protocol(),
            dealer: None,
            prime: default_prime(),
            fairness: None,
            max_steps: default_max_steps(),
            seeds: SeedSpec::default(),
            adversary: None,
        }
    }
}

impl Scenario {
    pub fn from_path(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path)?;
        Ok(toml::from_str(&text)?)
    }

    pub fn fairness(&self) -> u64 {
        self.fairness.unwrap_or_else(|| abalab_core::simnet::default_fairness(self.n))
    }

    /// Resolves an adversary named on the command line against this
    /// scenario's shape.
    pub fn set_adversary_by_name(&mut self, name: &str) -> Result<(), ScenarioError> {
        match AdversaryScript::by_name(name, self.n, self.fairness()) {
            Some(script) => {
                self.adversary = Some(script);
                Ok(())
            }
            None => Err(ScenarioError::UnknownAdversary(name.to_string())),
        }
    }

    fn input_bits(&self) -> Result<Vec<bool>, ScenarioError> {
        match (&self.inputs, self.protocol.as_str()) {
            (_, "ivss_only") => Ok(Vec::new()),
            (Some(s), _) => {
                let bits: Option<Vec<bool>> = s
                    .chars()
                    .map(|c| match c {
                        '0' => Some(false),
                        '1' => Some(true),
                        _ => None,
                    })
                    .collect();
                match bits {
                    Some(b) if b.len() == self.n => Ok(b),
                    _ => Err(ScenarioError::BadInputs { n: self.n, inputs: self.inputs.clone() }),
                }
            }
            (None, _) => Err(ScenarioError::BadInputs { n: self.n, inputs: None }),
        }
    }

    /// The per-seed run configurations of this batch.
    pub fn run_configs(&self) -> Result<Vec<RunConfig>, ScenarioError> {
        if self.n <= 3 * self.t {
            return Err(ScenarioError::Resilience { n: self.n, t: self.t });
        }
        let seeds = self.seeds.seeds();
        if seeds.is_empty() {
            return Err(ScenarioError::NoSeeds);
        }
        let inputs = self.input_bits()?;
        let mode = match self.protocol.as_str() {
            "ivss_only" => RunMode::IvssOnly { dealer: ProcessId(self.dealer.unwrap_or(1)) },
            _ => RunMode::Aba,
        };
        let adversary = self.adversary.unwrap_or(AdversaryScript::None);
        Ok(seeds
            .into_iter()
            .map(|seed| RunConfig {
                n: self.n,
                t: self.t,
                prime: self.prime,
                fairness: self.fairness(),
                max_steps: self.max_steps,
                mode,
                inputs: inputs.clone(),
                adversary,
                seed,
            })
            .collect())
    }
}
