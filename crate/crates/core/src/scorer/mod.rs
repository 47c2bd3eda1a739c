//! Masked scorers.
//!
//! A scorer answers "how well does each vocabulary token fit the masked
//! slot?" for a [`MaskQuery`]. The scored input is always
//! `context ++ [sep] ++ private` with the private side's `mask_index`
//! position replaced by the mask token.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::mechanism::LogitVector;

pub mod builtin;
pub mod protocol;
pub mod remote;
pub mod synthetic;

pub use builtin::BuiltinScorer;
pub use remote::RemoteScorer;
pub use synthetic::{ConstantScorer, GaussianScorer};

pub const DEFAULT_MASK: &str = "<mask>";
pub const DEFAULT_SEP: &str = "[SEP]";

#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    mask: String,
    sep: String,
    candidates: Vec<usize>,
}

impl Vocabulary {
    pub fn new(
        tokens: Vec<String>,
        mask: impl Into<String>,
        sep: impl Into<String>,
    ) -> Result<Self> {
        let (mask, sep) = (mask.into(), sep.into());
        if mask == sep {
            return Err(Error::InvalidVocabulary(
                "mask and separator must differ".into(),
            ));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::InvalidVocabulary(format!("duplicate token {t:?}")));
            }
        }
        for special in [&mask, &sep] {
            if !index.contains_key(special) {
                return Err(Error::InvalidVocabulary(format!(
                    "special token {special:?} missing from vocabulary"
                )));
            }
        }
        let candidates = (0..tokens.len())
            .filter(|&i| tokens[i] != mask && tokens[i] != sep)
            .collect();
        Ok(Self {
            tokens,
            index,
            mask,
            sep,
            candidates,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn mask(&self) -> &str {
        &self.mask
    }

    pub fn sep(&self) -> &str {
        &self.sep
    }

    pub fn is_special(&self, token: &str) -> bool {
        token == self.mask || token == self.sep
    }

    /// Ids that may be emitted as replacements: everything except the mask
    /// and separator. The set is fixed per vocabulary, independent of input.
    pub fn candidate_ids(&self) -> &[usize] {
        &self.candidates
    }

    /// Scores restricted to [`Self::candidate_ids`], in the same order.
    pub fn candidate_logits(&self, logits: &LogitVector) -> Result<LogitVector> {
        if logits.vocab_size() != self.len() {
            return Err(Error::ProtocolViolation(format!(
                "expected {} logits, got {}",
                self.len(),
                logits.vocab_size()
            )));
        }
        if self.candidates.is_empty() {
            return Err(Error::InvalidVocabulary(
                "no candidate tokens besides specials".into(),
            ));
        }
        LogitVector::new(
            self.candidates
                .iter()
                .map(|&i| logits.values()[i])
                .collect(),
        )
    }
}

/// Input to one masked-scoring call.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskQuery {
    context: Vec<String>,
    private: Vec<String>,
    mask_index: usize,
}

impl MaskQuery {
    pub fn new(context: Vec<String>, private: Vec<String>, mask_index: usize) -> Result<Self> {
        if mask_index >= private.len() {
            return Err(Error::InvalidQuery(format!(
                "mask index {mask_index} out of range for {} private tokens",
                private.len()
            )));
        }
        Ok(Self {
            context,
            private,
            mask_index,
        })
    }

    pub fn context(&self) -> &[String] {
        &self.context
    }

    pub fn private(&self) -> &[String] {
        &self.private
    }

    pub fn mask_index(&self) -> usize {
        self.mask_index
    }

    /// Position of the mask inside [`Self::scoring_input`].
    pub fn mask_position(&self) -> usize {
        self.context.len() + 1 + self.mask_index
    }

    /// `context ++ [sep] ++ private`, with the masked slot replaced.
    pub fn scoring_input(&self, mask: &str, sep: &str) -> Vec<String> {
        let mut input = Vec::with_capacity(self.context.len() + 1 + self.private.len());
        input.extend(self.context.iter().cloned());
        input.push(sep.to_string());
        input.extend(self.private.iter().enumerate().map(|(i, t)| {
            if i == self.mask_index {
                mask.to_string()
            } else {
                t.clone()
            }
        }));
        input
    }

    /// The private sequence with `token` placed in the masked slot.
    pub fn substituted(&self, token: &str) -> Vec<String> {
        let mut out = self.private.clone();
        out[self.mask_index] = token.to_string();
        out
    }
}

/// Sentence embedding capability, used for reranking and cosine similarity.
pub trait Embedder: Send + Sync {
    fn embed(&self, text: &str) -> Result<Vec<f64>>;
}

pub trait Scorer: Send + Sync {
    fn vocabulary(&self) -> &Vocabulary;

    fn tokenize(&self, text: &str) -> Result<Vec<String>>;

    fn detokenize(&self, tokens: &[String]) -> Result<String>;

    /// One finite score per vocabulary entry for the masked slot.
    fn score_masked(&self, query: &MaskQuery) -> Result<LogitVector>;

    /// True when identical queries always yield bit-identical logits.
    fn is_deterministic(&self) -> bool {
        false
    }

    fn embedder(&self) -> Option<&dyn Embedder> {
        None
    }

    /// Human-readable backend descriptor, recorded in run manifests.
    fn describe(&self) -> String;
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!(
            "embedding length mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}
