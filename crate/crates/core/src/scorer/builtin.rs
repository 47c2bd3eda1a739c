//! Deterministic bigram scorer and the rule-based tokenizer it owns.
//!
//! `logit(v | query) = ln(1 + bigram(prev, v)) + 0.1 · ln(1 + unigram(v))`
//! where `prev` is the token immediately before the mask in the scoring
//! input. Training treats every corpus line as preceded by the separator, so
//! the first private slot (which always follows the separator) is scored
//! against sentence-initial counts.

use std::collections::HashMap;

use super::{MaskQuery, Scorer, Vocabulary, DEFAULT_MASK, DEFAULT_SEP};
use crate::error::{Error, Result};
use crate::mechanism::{ClipRange, LogitVector};

/// Fixed 200-sentence corpus used by the toy evaluations and `verify`.
pub const TOY_CORPUS: &str = include_str!("../../data/toy_corpus.txt");

const UNIGRAM_WEIGHT: f64 = 0.1;

fn is_punct_char(c: char) -> bool {
    !c.is_alphanumeric() && !c.is_whitespace()
}

/// A token is punctuation when it is a single non-alphanumeric character.
pub fn is_punct_token(token: &str) -> bool {
    let mut chars = token.chars();
    matches!((chars.next(), chars.next()), (Some(c), None) if is_punct_char(c))
}

/// Lowercase, then split into alphanumeric runs and single punctuation marks.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut word = String::new();
    for c in text.chars().flat_map(char::to_lowercase) {
        if c.is_alphanumeric() {
            word.push(c);
            continue;
        }
        if !word.is_empty() {
            tokens.push(std::mem::take(&mut word));
        }
        if is_punct_char(c) {
            tokens.push(c.to_string());
        }
    }
    if !word.is_empty() {
        tokens.push(word);
    }
    tokens
}

/// Space-join, attaching punctuation to the preceding token.
pub fn detokenize<S: AsRef<str>>(tokens: &[S]) -> String {
    let mut out = String::new();
    for (i, t) in tokens.iter().enumerate() {
        let t = t.as_ref();
        if i > 0 && !is_punct_token(t) {
            out.push(' ');
        }
        out.push_str(t);
    }
    out
}

pub struct BuiltinScorer {
    vocab: Vocabulary,
    unigram_term: Vec<f64>,
    // prev token -> sparse (vocab id, count), sorted by id
    bigrams: HashMap<String, Vec<(usize, u64)>>,
    max_vocab: usize,
    lines: usize,
}

impl BuiltinScorer {
    pub fn from_corpus<S: AsRef<str>>(corpus: &[S], max_vocab: usize) -> Result<Self> {
        if max_vocab == 0 {
            return Err(Error::InvalidArgument("max_vocab must be positive".into()));
        }
        let sentences: Vec<Vec<String>> = corpus
            .iter()
            .map(|line| tokenize(line.as_ref()))
            .filter(|t| !t.is_empty())
            .collect();
        if sentences.is_empty() {
            return Err(Error::EmptyCorpus);
        }

        let mut unigrams: HashMap<&str, u64> = HashMap::new();
        for t in sentences.iter().flatten() {
            *unigrams.entry(t.as_str()).or_default() += 1;
        }
        let mut ranked: Vec<(&str, u64)> = unigrams.iter().map(|(t, c)| (*t, *c)).collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ranked.truncate(max_vocab);

        let mut tokens = vec![DEFAULT_MASK.to_string(), DEFAULT_SEP.to_string()];
        tokens.extend(ranked.iter().map(|(t, _)| t.to_string()));
        let vocab = Vocabulary::new(tokens, DEFAULT_MASK, DEFAULT_SEP)?;

        let unigram_term = vocab
            .tokens()
            .iter()
            .map(|t| {
                let count = unigrams.get(t.as_str()).copied().unwrap_or(0);
                UNIGRAM_WEIGHT * (count as f64).ln_1p()
            })
            .collect();

        let mut counts: HashMap<String, HashMap<usize, u64>> = HashMap::new();
        for sentence in &sentences {
            let mut prev = DEFAULT_SEP;
            for t in sentence {
                if let Some(id) = vocab.id(t) {
                    *counts
                        .entry(prev.to_string())
                        .or_default()
                        .entry(id)
                        .or_default() += 1;
                }
                prev = t;
            }
        }
        let bigrams = counts
            .into_iter()
            .map(|(prev, row)| {
                let mut row: Vec<(usize, u64)> = row.into_iter().collect();
                row.sort_unstable();
                (prev, row)
            })
            .collect();

        Ok(Self {
            vocab,
            unigram_term,
            bigrams,
            max_vocab,
            lines: sentences.len(),
        })
    }

    /// Scorer over the bundled toy corpus.
    pub fn toy(max_vocab: usize) -> Result<Self> {
        Self::from_corpus(&toy_corpus_lines(), max_vocab)
    }

    pub fn bigram_count(&self, prev: &str, token: &str) -> u64 {
        let Some(id) = self.vocab.id(token) else {
            return 0;
        };
        self.bigrams
            .get(prev)
            .and_then(|row| {
                row.binary_search_by_key(&id, |(i, _)| *i)
                    .ok()
                    .map(|k| row[k].1)
            })
            .unwrap_or(0)
    }

    /// Smallest range holding every logit this scorer can emit. Clipping to
    /// it changes nothing, so the mechanism keeps the scorer's exact argmax.
    /// The lower end is 0: the specials never occur in the corpus.
    pub fn logit_range(&self) -> ClipRange {
        let mut best = self.unigram_term.iter().copied().fold(0.0, f64::max);
        for row in self.bigrams.values() {
            for &(id, count) in row {
                best = best.max((count as f64).ln_1p() + self.unigram_term[id]);
            }
        }
        ClipRange::new(0.0, best).expect("a non-empty corpus has a positive logit")
    }

    /// Vocabulary entries other than the mask and separator, most frequent first.
    pub fn content_tokens(&self) -> Vec<String> {
        self.vocab
            .tokens()
            .iter()
            .filter(|t| !self.vocab.is_special(t))
            .cloned()
            .collect()
    }
}

pub fn toy_corpus_lines() -> Vec<&'static str> {
    TOY_CORPUS
        .lines()
        .filter(|l| !l.trim().is_empty())
        .collect()
}

impl Scorer for BuiltinScorer {
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
        let input = query.scoring_input(self.vocab.mask(), self.vocab.sep());
        let prev = &input[query.mask_position() - 1];
        let mut logits = self.unigram_term.clone();
        if let Some(row) = self.bigrams.get(prev.as_str()) {
            for &(id, count) in row {
                logits[id] += (count as f64).ln_1p();
            }
        }
        LogitVector::new(logits)
    }

    fn is_deterministic(&self) -> bool {
        true
    }

    fn describe(&self) -> String {
        format!(
            "builtin-bigram(lines={}, max_vocab={}, vocab={})",
            self.lines,
            self.max_vocab,
            self.vocab.len()
        )
    }
}
