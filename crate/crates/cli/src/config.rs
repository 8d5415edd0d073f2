//! Run configuration: the JSON schema every subcommand consumes, the weight
//! family syntax, and the digest that stamps every output.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize};
use sha2::{Digest, Sha256};
use tree_sobolev::tree::{TreeWeights, DEFAULT_MAX_HEIGHT};

use crate::Failure;

/// Environment variable overriding the maximum accepted tree height.
pub const NMAX_ENV: &str = "TREE_SOBOLEV_NMAX";

pub fn height_cap() -> Result<usize, Failure> {
    match std::env::var(NMAX_ENV) {
        Err(std::env::VarError::NotPresent) => Ok(DEFAULT_MAX_HEIGHT),
        Err(e) => Err(Failure::config(format!("{NMAX_ENV}: {e}"))),
        Ok(raw) => raw
            .trim()
            .parse::<usize>()
            .map_err(|e| Failure::config(format!("{NMAX_ENV}={raw:?}: {e}"))),
    }
}

/// A depth-weight family.  The flag syntax mirrors [`fmt::Display`]:
/// `unit`, `dyadic[:c]`, `geometric:beta[:c]`, `explicit:w1,w2,...`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum WeightSpec {
    Unit,
    /// `W_k = c * 2^-k`
    Dyadic { c: f64 },
    /// `W_k = c * beta^k`
    Geometric { c: f64, beta: f64 },
    /// One weight per depth `1..=N`.
    Explicit { values: Vec<f64> },
}

impl WeightSpec {
    pub fn build(&self, n: usize) -> Result<TreeWeights, Failure> {
        let made = match self {
            WeightSpec::Unit => TreeWeights::unit(n),
            WeightSpec::Dyadic { c } => TreeWeights::dyadic(n, *c),
            WeightSpec::Geometric { c, beta } => TreeWeights::geometric(n, *c, *beta),
            WeightSpec::Explicit { values } => {
                if values.len() != n {
                    return Err(Failure::config(format!(
                        "explicit weights carry {} values but N = {n}",
                        values.len()
                    )));
                }
                TreeWeights::explicit(values.clone())
            }
        };
        made.map_err(|e| Failure::config(format!("weight spec {self}: {e}")))
    }
}

impl fmt::Display for WeightSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightSpec::Unit => write!(f, "unit"),
            WeightSpec::Dyadic { c } => write!(f, "dyadic:{c}"),
            WeightSpec::Geometric { c, beta } => write!(f, "geometric:{beta}:{c}"),
            WeightSpec::Explicit { values } => {
                write!(f, "explicit:")?;
                for (i, v) in values.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{v}")?;
                }
                Ok(())
            }
        }
    }
}

impl FromStr for WeightSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let bad = |e: std::num::ParseFloatError| format!("weight spec {s:?}: {e}");
        let mut parts = s.split(':');
        let head = parts.next().unwrap_or_default();
        let rest: Vec<&str> = parts.collect();
        match (head, rest.as_slice()) {
            ("unit", []) => Ok(WeightSpec::Unit),
            ("dyadic", []) => Ok(WeightSpec::Dyadic { c: 1.0 }),
            ("dyadic", [c]) => Ok(WeightSpec::Dyadic { c: c.parse().map_err(bad)? }),
            ("geometric", [beta]) => Ok(WeightSpec::Geometric {
                c: 1.0,
                beta: beta.parse().map_err(bad)?,
            }),
            ("geometric", [beta, c]) => Ok(WeightSpec::Geometric {
                c: c.parse().map_err(bad)?,
                beta: beta.parse().map_err(bad)?,
            }),
            ("explicit", [list]) => Ok(WeightSpec::Explicit {
                values: list
                    .split(',')
                    .map(|v| v.parse().map_err(bad))
                    .collect::<Result<_, _>>()?,
            }),
            _ => Err(format!(
                "unrecognized weight spec {s:?} (expected unit, dyadic[:c], geometric:beta[:c] or explicit:w1,w2,...)"
            )),
        }
    }
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum,
)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Json,
    Csv,
}

fn default_trials() -> u64 {
    100_000
}

fn default_samples() -> usize {
    200
}

/// Accept a bare number where a list of exponents is expected.
fn one_or_many<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(f64),
        Many(Vec<f64>),
    }
    Ok(match OneOrMany::deserialize(d)? {
        OneOrMany::One(x) => vec![x],
        OneOrMany::Many(xs) => xs,
    })
}

/// Everything a run needs.  The emitted form is canonical: fields in this
/// order, exponents always a list, defaults written out; parsing what we
/// emit reproduces the bytes exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(deserialize_with = "one_or_many")]
    pub p: Vec<f64>,
    pub weights: WeightSpec,
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub trials: u64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub format: OutputFormat,
}

impl RunConfig {
    /// Baseline cell used when no config file is given; flags override it.
    /// The seed here is a placeholder — stochastic subcommands still demand
    /// an explicit `--seed`.
    pub fn baseline() -> Self {
        RunConfig {
            n: 4,
            p: vec![2.0],
            weights: WeightSpec::Unit,
            seed: 0,
            trials: default_trials(),
            samples: default_samples(),
            output: None,
            format: OutputFormat::default(),
        }
    }

    pub fn from_path(path: &Path) -> Result<Self, Failure> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&raw)
            .map_err(|e| Failure::config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), Failure> {
        let cap = height_cap()?;
        if self.n == 0 || self.n > cap {
            return Err(Failure::config(format!(
                "N = {} outside the supported range 1..={cap}",
                self.n
            )));
        }
        if self.p.is_empty() {
            return Err(Failure::config("at least one exponent p is required".into()));
        }
        for &p in &self.p {
            if !(p.is_finite() && p > 1.0) {
                return Err(Failure::config(format!(
                    "exponent p must be finite and > 1, got {p}"
                )));
            }
        }
        if self.trials == 0 {
            return Err(Failure::config("trials must be at least 1".into()));
        }
        if self.samples == 0 {
            return Err(Failure::config("samples must be at least 1".into()));
        }
        self.weights.build(self.n).map(drop)
    }

    pub fn build_weights(&self) -> Result<TreeWeights, Failure> {
        self.weights.build(self.n)
    }

    /// The single exponent, for subcommands that refuse grids.
    pub fn single_p(&self) -> Result<f64, Failure> {
        match self.p.as_slice() {
            [p] => Ok(*p),
            many => Err(Failure::config(format!(
                "this subcommand takes exactly one exponent, got {many:?}"
            ))),
        }
    }

    /// Hex SHA-256 over the mathematical content of the run: everything
    /// except where and in which format the report is written.
    pub fn digest(&self) -> String {
        let mut stripped = self.clone();
        stripped.output = None;
        stripped.format = OutputFormat::default();
        let compact = serde_json::to_string(&stripped).expect("config serializes");
        let hash = Sha256::digest(compact.as_bytes());
        hash.iter().map(|b| format!("{b:02x}")).collect()
    }
}
