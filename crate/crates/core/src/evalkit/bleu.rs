//! Sentence BLEU on builtin-tokenizer tokens.
//!
//! Modified n-gram precision for orders `1..=N` with uniform weights,
//! geometric mean, and the standard brevity penalty. No smoothing. `N` is 4,
//! reduced to the shorter sentence's length when that is below 4.

use std::collections::HashMap;

use crate::scorer::builtin::tokenize;

pub const MAX_ORDER: usize = 4;

pub fn bleu(reference: &str, candidate: &str) -> f64 {
    bleu_tokens(&tokenize(reference), &tokenize(candidate))
}

fn ngram_counts<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut counts = HashMap::new();
    for window in tokens.windows(n) {
        *counts
            .entry(window.iter().map(AsRef::as_ref).collect())
            .or_insert(0) += 1;
    }
    counts
}

pub fn bleu_tokens<S: AsRef<str>>(reference: &[S], candidate: &[S]) -> f64 {
    if candidate.is_empty() {
        return if reference.is_empty() { 1.0 } else { 0.0 };
    }
    if reference.is_empty() {
        return 0.0;
    }
    let max_order = MAX_ORDER.min(reference.len()).min(candidate.len());
    let mut log_precision = 0.0;
    for n in 1..=max_order {
        let cand = ngram_counts(candidate, n);
        let refs = ngram_counts(reference, n);
        let matched: usize = cand
            .iter()
            .map(|(gram, &c)| c.min(refs.get(gram).copied().unwrap_or(0)))
            .sum();
        if matched == 0 {
            return 0.0;
        }
        let total = candidate.len() + 1 - n;
        log_precision += (matched as f64 / total as f64).ln() / max_order as f64;
    }
    let (c, r) = (candidate.len() as f64, reference.len() as f64);
    let brevity = if c > r { 0.0 } else { 1.0 - r / c };
    (brevity + log_precision).exp().min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_is_one() {
        assert_eq!(
            bleu("the cat sat on the mat .", "the cat sat on the mat ."),
            1.0
        );
        assert_eq!(bleu("Hi", "hi"), 1.0);
        assert_eq!(bleu("", ""), 1.0);
    }

    #[test]
    fn disjoint_is_zero() {
        assert_eq!(bleu("the cat sat", "a dog ran"), 0.0);
        assert_eq!(bleu("the cat sat", ""), 0.0);
        assert_eq!(bleu("", "the cat"), 0.0);
    }

    #[test]
    fn hand_computed() {
        // ref: the cat sat on the mat (6), cand: the cat sat on a mat (6)
        // p1 = 5/6, p2 = 3/5, p3 = 2/4, p4 = 1/3, BP = 1
        let expected = (5.0f64 / 6.0 * 3.0 / 5.0 * 2.0 / 4.0 * 1.0 / 3.0).powf(0.25);
        assert!((bleu("the cat sat on the mat", "the cat sat on a mat") - expected).abs() < 1e-12);
    }

    #[test]
    fn brevity_penalty_applies() {
        // cand is a prefix: all precisions 1, BP = exp(1 - 6/4)
        let v = bleu("the cat sat on the mat", "the cat sat on");
        assert!((v - (1.0f64 - 6.0 / 4.0).exp()).abs() < 1e-12);
    }

    #[test]
    fn short_sentences_use_lower_orders() {
        // two tokens: orders 1..=2 only
        assert_eq!(bleu("good film", "good film"), 1.0);
        assert_eq!(bleu("good film", "good movie"), 0.0);
        // three tokens, trigram unmatched
        assert_eq!(bleu("good film .", "good film !"), 0.0);
        // candidate of 2 against a longer reference: p1 = p2 = 1, BP = exp(1 - 5/2)
        let v = bleu("a very good film indeed", "good film");
        assert!((v - (1.0f64 - 2.5).exp()).abs() < 1e-12);
    }
}
