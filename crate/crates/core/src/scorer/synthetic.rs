//! Synthetic scorers with known logit distributions, used to exercise
//! calibration end to end.

use rand_distr::{Distribution, Normal};

use super::builtin::{detokenize, tokenize};
use super::{MaskQuery, Scorer, Vocabulary, DEFAULT_MASK, DEFAULT_SEP};
use crate::error::{Error, Result};
use crate::mechanism::LogitVector;
use crate::seed::{derive_seed, rng_from_seed};

fn numbered_vocab(size: usize) -> Result<Vocabulary> {
    if size == 0 {
        return Err(Error::InvalidArgument(
            "synthetic vocabulary size must be positive".into(),
        ));
    }
    let mut tokens = vec![DEFAULT_MASK.to_string(), DEFAULT_SEP.to_string()];
    tokens.extend((0..size).map(|i| format!("t{i}")));
    Vocabulary::new(tokens, DEFAULT_MASK, DEFAULT_SEP)
}

/// Logits drawn i.i.d. from `N(mu, sigma²)`, seeded by the query itself.
pub struct GaussianScorer {
    vocab: Vocabulary,
    normal: Normal<f64>,
    mu: f64,
    sigma: f64,
    seed: u64,
}

impl GaussianScorer {
    pub fn new(mu: f64, sigma: f64, vocab_size: usize, seed: u64) -> Result<Self> {
        if sigma.is_nan() || sigma < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "gaussian scorer: sigma must be non-negative, got {sigma}"
            )));
        }
        let normal = Normal::new(mu, sigma)
            .map_err(|e| Error::InvalidArgument(format!("gaussian scorer: {e}")))?;
        Ok(Self {
            vocab: numbered_vocab(vocab_size)?,
            normal,
            mu,
            sigma,
            seed,
        })
    }
}

impl Scorer for GaussianScorer {
    fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    fn tokenize(&self, text: &str) -> Result<Vec<String>> {
        Ok(tokenize(text))
    }

    fn detokenize(&self, tokens: &[String]) -> Result<String> {
        Ok(detokenize(tokens))
    }

    fn score_masked(&self, query: &MaskQuery) -> Result<LogitVector> {
        let key = query
            .scoring_input(self.vocab.mask(), self.vocab.sep())
            .join("\u{1f}");
        let mut rng = rng_from_seed(derive_seed(self.seed, &key));
        LogitVector::new(
            (0..self.vocab.len())
                .map(|_| self.normal.sample(&mut rng))
                .collect(),
        )
    }

    fn is_deterministic(&self) -> bool {
        true
    }

    fn describe(&self) -> String {
        format!(
            "gaussian(mu={}, sigma={}, vocab={}, seed={})",
            self.mu,
            self.sigma,
            self.vocab.len(),
            self.seed
        )
    }
}

/// Every logit equals one constant.
pub struct ConstantScorer {
    vocab: Vocabulary,
    value: f64,
}

impl ConstantScorer {
    pub fn new(value: f64, vocab_size: usize) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "constant logit {value} is not finite"
            )));
        }
        Ok(Self {
            vocab: numbered_vocab(vocab_size)?,
            value,
        })
    }
}

impl Scorer for ConstantScorer {
    fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    fn tokenize(&self, text: &str) -> Result<Vec<String>> {
        Ok(tokenize(text))
    }

    fn detokenize(&self, tokens: &[String]) -> Result<String> {
        Ok(detokenize(tokens))
    }

    fn score_masked(&self, _query: &MaskQuery) -> Result<LogitVector> {
        LogitVector::new(vec![self.value; self.vocab.len()])
    }

    fn is_deterministic(&self) -> bool {
        true
    }

    fn describe(&self) -> String {
        format!("constant(value={}, vocab={})", self.value, self.vocab.len())
    }
}
