//! Token-by-token private rewriting.
//!
//! Each replacement masks one slot of the working (private) sequence, scores
//! it with the original sentence prepended as context, and draws the
//! replacement from the clipped-logit mechanism. Replacements are written
//! back before the next slot is scored, strictly left to right.

use std::collections::HashSet;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::accountant::{BudgetLedger, BudgetReport};
use crate::error::{Error, Result};
use crate::mechanism::{output_distribution, unit_uniform, ClipRange, Epsilon, LogitVector};
use crate::scorer::{cosine_similarity, Embedder, MaskQuery, Scorer};
use crate::seed::rng_from_seed;

pub const DEFAULT_RERANK_ALPHA: f64 = 0.003;

/// NLTK English stopword list.
pub const ENGLISH_STOPWORDS: &[&str] = &[
    "i",
    "me",
    "my",
    "myself",
    "we",
    "our",
    "ours",
    "ourselves",
    "you",
    "you're",
    "you've",
    "you'll",
    "you'd",
    "your",
    "yours",
    "yourself",
    "yourselves",
    "he",
    "him",
    "his",
    "himself",
    "she",
    "she's",
    "her",
    "hers",
    "herself",
    "it",
    "it's",
    "its",
    "itself",
    "they",
    "them",
    "their",
    "theirs",
    "themselves",
    "what",
    "which",
    "who",
    "whom",
    "this",
    "that",
    "that'll",
    "these",
    "those",
    "am",
    "is",
    "are",
    "was",
    "were",
    "be",
    "been",
    "being",
    "have",
    "has",
    "had",
    "having",
    "do",
    "does",
    "did",
    "doing",
    "a",
    "an",
    "the",
    "and",
    "but",
    "if",
    "or",
    "because",
    "as",
    "until",
    "while",
    "of",
    "at",
    "by",
    "for",
    "with",
    "about",
    "against",
    "between",
    "into",
    "through",
    "during",
    "before",
    "after",
    "above",
    "below",
    "to",
    "from",
    "up",
    "down",
    "in",
    "out",
    "on",
    "off",
    "over",
    "under",
    "again",
    "further",
    "then",
    "once",
    "here",
    "there",
    "when",
    "where",
    "why",
    "how",
    "all",
    "any",
    "both",
    "each",
    "few",
    "more",
    "most",
    "other",
    "some",
    "such",
    "no",
    "nor",
    "not",
    "only",
    "own",
    "same",
    "so",
    "than",
    "too",
    "very",
    "s",
    "t",
    "can",
    "will",
    "just",
    "don",
    "don't",
    "should",
    "should've",
    "now",
    "d",
    "ll",
    "m",
    "o",
    "re",
    "ve",
    "y",
    "ain",
    "aren",
    "aren't",
    "couldn",
    "couldn't",
    "didn",
    "didn't",
    "doesn",
    "doesn't",
    "hadn",
    "hadn't",
    "hasn",
    "hasn't",
    "haven",
    "haven't",
    "isn",
    "isn't",
    "ma",
    "mightn",
    "mightn't",
    "mustn",
    "mustn't",
    "needn",
    "needn't",
    "shan",
    "shan't",
    "shouldn",
    "shouldn't",
    "wasn",
    "wasn't",
    "weren",
    "weren't",
    "won",
    "won't",
    "wouldn",
    "wouldn't",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum StopwordPolicy {
    /// Every token goes through the mechanism.
    Off,
    English,
    Custom {
        words: Vec<String>,
    },
}

impl StopwordPolicy {
    fn word_set(&self) -> HashSet<String> {
        match self {
            StopwordPolicy::Off => HashSet::new(),
            StopwordPolicy::English => ENGLISH_STOPWORDS.iter().map(|w| w.to_string()).collect(),
            StopwordPolicy::Custom { words } => words.iter().map(|w| w.to_lowercase()).collect(),
        }
    }
}

/// Word form used for stopword lookup; strips common subword boundary markers.
fn stopword_key(token: &str) -> String {
    token
        .trim_start_matches(['\u{120}', '\u{2581}', '#'])
        .to_lowercase()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RerankConfig {
    pub alpha: f64,
    pub top_k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewriteConfig {
    pub eps: Epsilon,
    pub clip: ClipRange,
    pub add_prob: f64,
    pub del_prob: f64,
    pub stopwords: StopwordPolicy,
    pub seed: u64,
    pub rerank: Option<RerankConfig>,
}

impl RewriteConfig {
    /// Fixed-length rewriting, no stopword skipping, no rerank, seed 0.
    pub fn new(eps: Epsilon, clip: ClipRange) -> Self {
        Self {
            eps,
            clip,
            add_prob: 0.0,
            del_prob: 0.0,
            stopwords: StopwordPolicy::Off,
            seed: 0,
            rerank: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("add", self.add_prob), ("delete", self.del_prob)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidArgument(format!(
                    "{name} probability {p} outside [0, 1]"
                )));
            }
        }
        if let Some(r) = &self.rerank {
            if !r.alpha.is_finite() || r.alpha < 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "rerank alpha {} must be >= 0",
                    r.alpha
                )));
            }
            if r.top_k == 0 {
                return Err(Error::InvalidArgument(
                    "rerank top_k must be positive".into(),
                ));
            }
        }
        Ok(())
    }

    /// True when insertions or deletions are possible.
    pub fn is_variable_length(&self) -> bool {
        self.add_prob > 0.0 || self.del_prob > 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewriteResult {
    pub original_text: String,
    pub private_text: String,
    pub tokens_in: usize,
    pub tokens_out: usize,
    pub tokens_replaced: usize,
    pub tokens_added: usize,
    pub tokens_deleted: usize,
    /// Stopwords released verbatim without a mechanism invocation.
    pub tokens_skipped: usize,
    pub ledger: BudgetLedger,
}

impl RewriteResult {
    fn empty(text: &str, eps: Epsilon) -> Self {
        Self {
            original_text: text.to_string(),
            private_text: String::new(),
            tokens_in: 0,
            tokens_out: 0,
            tokens_replaced: 0,
            tokens_added: 0,
            tokens_deleted: 0,
            tokens_skipped: 0,
            ledger: BudgetLedger::new(eps),
        }
    }

    pub fn budget(&self) -> BudgetReport {
        self.ledger.report()
    }

    /// Whether any token was released without perturbation.
    pub fn released_unperturbed(&self) -> bool {
        self.tokens_skipped > 0
    }
}

/// Single DP replacement of `private[idx]` without reranking.
pub fn replace_token<R: RngCore + ?Sized>(
    scorer: &dyn Scorer,
    context: &[String],
    private: &[String],
    idx: usize,
    eps: Epsilon,
    clip: &ClipRange,
    rng: &mut R,
) -> Result<String> {
    let query = MaskQuery::new(context.to_vec(), private.to_vec(), idx)?;
    let logits = scorer.score_masked(&query)?;
    sample_candidate(scorer, &logits, eps, clip, rng)
}

fn sample_candidate<R: RngCore + ?Sized>(
    scorer: &dyn Scorer,
    logits: &LogitVector,
    eps: Epsilon,
    clip: &ClipRange,
    rng: &mut R,
) -> Result<String> {
    let vocab = scorer.vocabulary();
    let candidates = vocab.candidate_logits(logits)?;
    let k = output_distribution(&candidates, eps, clip).sample(rng);
    Ok(vocab.token(vocab.candidate_ids()[k]).to_string())
}

/// Similarity-weighted rescoring of the `top_k` candidates by raw logit.
///
/// Each of the top candidates is scored
/// `cos(embed(original), embed(private with candidate substituted)) + alpha · logit`.
/// Every other entry gets the lowest recomputed score minus the spread of
/// recomputed scores (or minus 1 when they are all equal). The full-length
/// vector is returned so clipping and sampling still see the whole vocabulary.
pub fn rerank_scores(
    logits: &LogitVector,
    query: &MaskQuery,
    scorer: &dyn Scorer,
    embedder: &dyn Embedder,
    alpha: f64,
    top_k: usize,
) -> Result<LogitVector> {
    let vocab = scorer.vocabulary();
    if logits.vocab_size() != vocab.len() {
        return Err(Error::ProtocolViolation(format!(
            "expected {} logits, got {}",
            vocab.len(),
            logits.vocab_size()
        )));
    }
    let raw = logits.values();
    let mut ranked: Vec<usize> = vocab.candidate_ids().to_vec();
    ranked.sort_by(|&a, &b| raw[b].total_cmp(&raw[a]).then(a.cmp(&b)));
    ranked.truncate(top_k.max(1));

    let reference = embedder.embed(&scorer.detokenize(query.context())?)?;
    let mut rescored = Vec::with_capacity(ranked.len());
    for &id in &ranked {
        let sentence = scorer.detokenize(&query.substituted(vocab.token(id)))?;
        let sim = cosine_similarity(&reference, &embedder.embed(&sentence)?)?;
        rescored.push((id, sim + alpha * raw[id]));
    }

    let lo = rescored.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    let hi = rescored
        .iter()
        .map(|r| r.1)
        .fold(f64::NEG_INFINITY, f64::max);
    let spread = if hi > lo { hi - lo } else { 1.0 };
    let mut out = vec![lo - spread; vocab.len()];
    for (id, score) in rescored {
        out[id] = score;
    }
    LogitVector::new(out)
}

/// Rewriting engine bound to one scorer and configuration.
pub struct Rewriter<'a> {
    scorer: &'a dyn Scorer,
    config: &'a RewriteConfig,
    stopwords: HashSet<String>,
    embedder: Option<&'a dyn Embedder>,
}

impl<'a> Rewriter<'a> {
    /// Reranking, when configured, uses the scorer's own embed capability.
    pub fn new(scorer: &'a dyn Scorer, config: &'a RewriteConfig) -> Result<Self> {
        let embedder = match config.rerank {
            Some(_) => Some(scorer.embedder().ok_or_else(|| {
                Error::EmbedderUnavailable(format!(
                    "rerank needs an embedder; {} has none",
                    scorer.describe()
                ))
            })?),
            None => None,
        };
        Self::build(scorer, config, embedder)
    }

    /// Like [`Self::new`], with reranking backed by a separate embedder.
    pub fn with_embedder(
        scorer: &'a dyn Scorer,
        config: &'a RewriteConfig,
        embedder: &'a dyn Embedder,
    ) -> Result<Self> {
        Self::build(scorer, config, Some(embedder))
    }

    fn build(
        scorer: &'a dyn Scorer,
        config: &'a RewriteConfig,
        embedder: Option<&'a dyn Embedder>,
    ) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            scorer,
            config,
            stopwords: config.stopwords.word_set(),
            embedder,
        })
    }

    pub fn config(&self) -> &RewriteConfig {
        self.config
    }

    fn is_stopword(&self, token: &str) -> bool {
        !self.stopwords.is_empty() && self.stopwords.contains(&stopword_key(token))
    }

    /// One mechanism invocation for `private[idx]`, reranked when configured.
    pub fn replace_token<R: RngCore + ?Sized>(
        &self,
        context: &[String],
        private: &[String],
        idx: usize,
        rng: &mut R,
    ) -> Result<String> {
        let query = MaskQuery::new(context.to_vec(), private.to_vec(), idx)?;
        let mut logits = self.scorer.score_masked(&query)?;
        if let (Some(rerank), Some(embedder)) = (&self.config.rerank, self.embedder) {
            logits = rerank_scores(
                &logits,
                &query,
                self.scorer,
                embedder,
                rerank.alpha,
                rerank.top_k,
            )?;
        }
        sample_candidate(
            self.scorer,
            &logits,
            self.config.eps,
            &self.config.clip,
            rng,
        )
    }

    /// Rewrite with the configured seed, dispatching on add/delete settings.
    pub fn rewrite(&self, text: &str) -> Result<RewriteResult> {
        self.run(text, &mut rng_from_seed(self.config.seed))
    }

    pub fn run<R: RngCore + ?Sized>(&self, text: &str, rng: &mut R) -> Result<RewriteResult> {
        if self.config.is_variable_length() {
            self.rewrite_variable(text, rng)
        } else {
            self.rewrite_fixed(text, rng)
        }
    }

    /// Length-preserving rewrite; `add_prob` and `del_prob` are ignored.
    pub fn rewrite_fixed<R: RngCore + ?Sized>(
        &self,
        text: &str,
        rng: &mut R,
    ) -> Result<RewriteResult> {
        let tokens = self.scorer.tokenize(text)?;
        if tokens.is_empty() {
            return Ok(RewriteResult::empty(text, self.config.eps));
        }
        let mut result = RewriteResult::empty(text, self.config.eps);
        result.tokens_in = tokens.len();

        let mut private = tokens.clone();
        for i in 0..tokens.len() {
            if self.is_stopword(&tokens[i]) {
                result.tokens_skipped += 1;
                continue;
            }
            private[i] = self.replace_token(&tokens, &private, i, rng)?;
            result.tokens_replaced += 1;
            result.ledger.charge_one();
        }
        result.tokens_out = private.len();
        result.private_text = self.scorer.detokenize(&private)?;
        Ok(result)
    }

    /// Rewrite with random deletions and insertions.
    ///
    /// For each original token two uniforms are drawn (delete, then add). The
    /// token is deleted when the first is below `del_prob`, otherwise replaced
    /// in place. A fresh mask is inserted right after it and filled when the
    /// second is below `add_prob`. Stopwords are kept verbatim and never
    /// deleted. With both probabilities zero this is exactly
    /// [`Self::rewrite_fixed`], RNG stream included.
    pub fn rewrite_variable<R: RngCore + ?Sized>(
        &self,
        text: &str,
        rng: &mut R,
    ) -> Result<RewriteResult> {
        if !self.config.is_variable_length() {
            return self.rewrite_fixed(text, rng);
        }
        let tokens = self.scorer.tokenize(text)?;
        if tokens.is_empty() {
            return Ok(RewriteResult::empty(text, self.config.eps));
        }
        let mut result = RewriteResult::empty(text, self.config.eps);
        result.tokens_in = tokens.len();
        let mask = self.scorer.vocabulary().mask().to_string();

        let mut private = tokens.clone();
        let (mut added, mut deleted) = (0usize, 0usize);
        for i in 0..tokens.len() {
            let del_draw = unit_uniform(rng);
            let add_draw = unit_uniform(rng);

            let pos = i + added - deleted;
            if self.is_stopword(&tokens[i]) {
                result.tokens_skipped += 1;
            } else if del_draw >= self.config.del_prob {
                private[pos] = self.replace_token(&tokens, &private, pos, rng)?;
                result.tokens_replaced += 1;
                result.ledger.charge_one();
            } else {
                private.remove(pos);
                deleted += 1;
            }

            if add_draw < self.config.add_prob {
                added += 1;
                let pos = i + added - deleted;
                private.insert(pos, mask.clone());
                private[pos] = self.replace_token(&tokens, &private, pos, rng)?;
                result.ledger.charge_one();
            }
        }
        result.tokens_added = added;
        result.tokens_deleted = deleted;
        result.tokens_out = private.len();
        result.private_text = self.scorer.detokenize(&private)?;
        Ok(result)
    }
}
