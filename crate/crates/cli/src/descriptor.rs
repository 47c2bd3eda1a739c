//! Scorer descriptors accepted by `--scorer`.
//!
//! ```text
//! builtin                          bigram scorer on the bundled toy corpus
//! builtin:PATH                     bigram scorer trained on PATH (one sentence per line)
//! remote:HOST:PORT                 line-protocol server over TCP
//! remote:stdio:PROGRAM ARGS...     line-protocol child process
//! gaussian:MU,SIGMA[,VOCAB[,SEED]] synthetic N(MU, SIGMA²) logits
//! constant:VALUE[,VOCAB]           synthetic constant logits
//! ```

use std::fs;
use std::str::FromStr;

use dpmlm::scorer::remote::Endpoint;
use dpmlm::scorer::{ConstantScorer, GaussianScorer};
use dpmlm::{BuiltinScorer, RemoteScorer, Scorer};

use crate::CliError;

pub const DEFAULT_SYNTHETIC_VOCAB: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub enum ScorerSpec {
    Builtin {
        corpus: Option<String>,
    },
    Remote(String),
    Gaussian {
        mu: f64,
        sigma: f64,
        vocab: usize,
        seed: u64,
    },
    Constant {
        value: f64,
        vocab: usize,
    },
}

fn field<T: FromStr>(spec: &str, value: Option<&str>, name: &str) -> Result<Option<T>, CliError> {
    value
        .map(|v| {
            v.trim().parse().map_err(|_| {
                CliError::Config(format!("scorer {spec:?}: cannot parse {name} from {v:?}"))
            })
        })
        .transpose()
}

impl FromStr for ScorerSpec {
    type Err = CliError;

    fn from_str(spec: &str) -> Result<Self, CliError> {
        let (kind, rest) = spec.split_once(':').unwrap_or((spec, ""));
        let parts: Vec<&str> = if rest.is_empty() {
            vec![]
        } else {
            rest.split(',').collect()
        };
        let missing = |name: &str| CliError::Config(format!("scorer {spec:?}: missing {name}"));
        let too_many = |max: usize| {
            if parts.len() > max {
                Err(CliError::Config(format!(
                    "scorer {spec:?}: too many fields"
                )))
            } else {
                Ok(())
            }
        };
        match kind {
            "builtin" => Ok(ScorerSpec::Builtin {
                corpus: (!rest.is_empty() && rest != "@toy").then(|| rest.to_string()),
            }),
            "remote" if !rest.is_empty() => Ok(ScorerSpec::Remote(rest.to_string())),
            "gaussian" => {
                too_many(4)?;
                Ok(ScorerSpec::Gaussian {
                    mu: field(spec, parts.first().copied(), "mu")?.ok_or_else(|| missing("mu"))?,
                    sigma: field(spec, parts.get(1).copied(), "sigma")?.ok_or_else(|| missing("sigma"))?,
                    vocab: field(spec, parts.get(2).copied(), "vocab")?.unwrap_or(DEFAULT_SYNTHETIC_VOCAB),
                    seed: field(spec, parts.get(3).copied(), "seed")?.unwrap_or(0),
                })
            }
            "constant" => {
                too_many(2)?;
                Ok(ScorerSpec::Constant {
                    value: field(spec, parts.first().copied(), "value")?.ok_or_else(|| missing("value"))?,
                    vocab: field(spec, parts.get(1).copied(), "vocab")?.unwrap_or(DEFAULT_SYNTHETIC_VOCAB),
                })
            }
            _ => Err(CliError::Config(format!(
                "unknown scorer {spec:?}; expected builtin[:PATH], remote:ADDR, gaussian:MU,SIGMA[,VOCAB[,SEED]] or constant:VALUE[,VOCAB]"
            ))),
        }
    }
}

impl ScorerSpec {
    /// Instantiate the backend. `max_vocab` bounds builtin vocabularies.
    pub fn open(&self, max_vocab: usize) -> Result<Box<dyn Scorer>, CliError> {
        Ok(match self {
            ScorerSpec::Builtin { corpus: None } => Box::new(BuiltinScorer::toy(max_vocab)?),
            ScorerSpec::Builtin { corpus: Some(path) } => {
                let text = fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("{path}: {e}")))?;
                let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
                Box::new(BuiltinScorer::from_corpus(&lines, max_vocab)?)
            }
            ScorerSpec::Remote(addr) => Box::new(RemoteScorer::connect(Endpoint::parse(addr)?)?),
            ScorerSpec::Gaussian {
                mu,
                sigma,
                vocab,
                seed,
            } => Box::new(GaussianScorer::new(*mu, *sigma, *vocab, *seed)?),
            ScorerSpec::Constant { value, vocab } => Box::new(ConstantScorer::new(*value, *vocab)?),
        })
    }
}
