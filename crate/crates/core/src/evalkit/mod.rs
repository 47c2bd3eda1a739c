//! Dataset I/O, batch rewriting, and original-vs-private metrics.

use std::collections::{BTreeMap, HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rewriter::{RewriteConfig, Rewriter};
use crate::scorer::{cosine_similarity, Embedder, Scorer};
use crate::seed::document_rng;

pub mod bleu;
pub mod jsonl;

pub use bleu::bleu;
pub use jsonl::{load_jsonl, read_jsonl, write_jsonl, DocumentRecord, LineError};

/// One output line of a batch rewrite. Only `id` and `text` are required
/// when reading, so a plain dataset can stand in for its own rewrite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivatizedRecord {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<serde_json::Value>,
    #[serde(default)]
    pub private_text: Option<String>,
    #[serde(default)]
    pub eps_per_token: f64,
    #[serde(default)]
    pub tokens_in: usize,
    #[serde(default)]
    pub tokens_out: usize,
    #[serde(default)]
    pub tokens_replaced: usize,
    #[serde(default)]
    pub tokens_added: usize,
    #[serde(default)]
    pub tokens_deleted: usize,
    #[serde(default)]
    pub tokens_skipped: usize,
    #[serde(default)]
    pub total_epsilon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl PrivatizedRecord {
    /// Text to score: the rewrite, or the record's own text when it carries
    /// no rewrite and no error. `None` for failed records.
    pub fn released_text(&self) -> Option<&str> {
        match (&self.private_text, &self.error) {
            (Some(p), _) => Some(p),
            (None, None) => Some(&self.text),
            (None, Some(_)) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonMetrics {
    pub eps_per_token: f64,
    pub records: usize,
    pub bleu_mean: f64,
    pub cs_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub records: usize,
    pub bleu_mean: f64,
    /// `None` when no embedder is available.
    pub cs_mean: Option<f64>,
    pub per_epsilon: Vec<EpsilonMetrics>,
}

/// Mean cosine similarity between paired embeddings.
pub fn cosine_similarity_corpus<S: AsRef<str>>(
    originals: &[S],
    privatized: &[S],
    embedder: &dyn Embedder,
) -> Result<f64> {
    if originals.len() != privatized.len() {
        return Err(Error::InvalidArgument(format!(
            "corpus length mismatch: {} vs {}",
            originals.len(),
            privatized.len()
        )));
    }
    if originals.is_empty() {
        return Err(Error::InvalidArgument("empty corpus".into()));
    }
    let mut total = 0.0;
    for (a, b) in originals.iter().zip(privatized) {
        total += cosine_similarity(&embedder.embed(a.as_ref())?, &embedder.embed(b.as_ref())?)?;
    }
    Ok(total / originals.len() as f64)
}

/// A scored original/private pair.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricInput<'a> {
    pub original: &'a str,
    pub privatized: &'a str,
    pub eps_per_token: f64,
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// Per-record BLEU (and CS when `embedder` is given), averaged overall and
/// per ε. Groups are ordered by ascending ε.
pub fn compute_metrics(
    pairs: &[MetricInput<'_>],
    embedder: Option<&dyn Embedder>,
) -> Result<MetricsSummary> {
    let bleus: Vec<f64> = pairs
        .iter()
        .map(|p| bleu(p.original, p.privatized))
        .collect();
    let cs: Option<Vec<f64>> = match embedder {
        Some(e) => Some(
            pairs
                .iter()
                .map(|p| cosine_similarity(&e.embed(p.original)?, &e.embed(p.privatized)?))
                .collect::<Result<_>>()?,
        ),
        None => None,
    };

    let mut groups: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (i, p) in pairs.iter().enumerate() {
        // positive finite floats order the same as their bit patterns
        groups.entry(p.eps_per_token.to_bits()).or_default().push(i);
    }
    let per_epsilon = groups
        .into_iter()
        .map(|(bits, idx)| EpsilonMetrics {
            eps_per_token: f64::from_bits(bits),
            records: idx.len(),
            bleu_mean: mean(&idx.iter().map(|&i| bleus[i]).collect::<Vec<_>>()),
            cs_mean: cs
                .as_ref()
                .map(|cs| mean(&idx.iter().map(|&i| cs[i]).collect::<Vec<_>>())),
        })
        .collect();

    Ok(MetricsSummary {
        records: pairs.len(),
        bleu_mean: mean(&bleus),
        cs_mean: cs.as_deref().map(mean),
        per_epsilon,
    })
}

/// Join privatized records to their originals on id and compute metrics.
/// A privatized file may hold several records per id (one per ε); every
/// original must appear at least once. Records that failed to rewrite are
/// excluded.
pub fn evaluate(
    originals: &[DocumentRecord],
    privatized: &[PrivatizedRecord],
    embedder: Option<&dyn Embedder>,
) -> Result<MetricsSummary> {
    let by_id: HashMap<&str, &DocumentRecord> =
        originals.iter().map(|r| (r.id.as_str(), r)).collect();
    let seen: HashSet<&str> = privatized.iter().map(|r| r.id.as_str()).collect();
    if let Some(doc) = originals.iter().find(|d| !seen.contains(d.id.as_str())) {
        return Err(Error::InvalidArgument(format!(
            "id {:?} missing from privatized file",
            doc.id
        )));
    }
    let mut pairs = Vec::with_capacity(privatized.len());
    for record in privatized {
        let doc = by_id.get(record.id.as_str()).ok_or_else(|| {
            Error::InvalidArgument(format!("id {:?} missing from original file", record.id))
        })?;
        if let Some(text) = record.released_text() {
            pairs.push(MetricInput {
                original: &doc.text,
                privatized: text,
                eps_per_token: record.eps_per_token,
            });
        }
    }
    compute_metrics(&pairs, embedder)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchOutput {
    pub records: Vec<PrivatizedRecord>,
    pub metrics: MetricsSummary,
}

/// Rewrite every document with a per-document RNG derived from
/// `(config.seed, id)`, on `workers` threads. Output order and content do
/// not depend on `workers`. A failing document is recorded with its error
/// and does not stop the batch.
pub fn run_batch(
    documents: &[DocumentRecord],
    config: &RewriteConfig,
    scorer: &dyn Scorer,
    workers: usize,
) -> Result<BatchOutput> {
    if workers == 0 {
        return Err(Error::InvalidArgument("workers must be at least 1".into()));
    }
    let rewriter = Rewriter::new(scorer, config)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;

    let records: Vec<PrivatizedRecord> = pool.install(|| {
        documents
            .par_iter()
            .map(|doc| {
                let mut rng = document_rng(config.seed, &doc.id);
                let mut record = PrivatizedRecord {
                    id: doc.id.clone(),
                    text: doc.text.clone(),
                    label: doc.label.clone(),
                    private_text: None,
                    eps_per_token: config.eps.value(),
                    tokens_in: 0,
                    tokens_out: 0,
                    tokens_replaced: 0,
                    tokens_added: 0,
                    tokens_deleted: 0,
                    tokens_skipped: 0,
                    total_epsilon: 0.0,
                    error: None,
                };
                match rewriter.run(&doc.text, &mut rng) {
                    Ok(r) => {
                        record.private_text = Some(r.private_text);
                        record.tokens_in = r.tokens_in;
                        record.tokens_out = r.tokens_out;
                        record.tokens_replaced = r.tokens_replaced;
                        record.tokens_added = r.tokens_added;
                        record.tokens_deleted = r.tokens_deleted;
                        record.tokens_skipped = r.tokens_skipped;
                        record.total_epsilon = r.ledger.total();
                    }
                    Err(e) => record.error = Some(e.to_string()),
                }
                record
            })
            .collect()
    });

    let pairs: Vec<MetricInput<'_>> = records
        .iter()
        .filter_map(|r| {
            r.private_text.as_deref().map(|p| MetricInput {
                original: &r.text,
                privatized: p,
                eps_per_token: r.eps_per_token,
            })
        })
        .collect();
    let metrics = compute_metrics(&pairs, scorer.embedder())?;
    Ok(BatchOutput { records, metrics })
}
