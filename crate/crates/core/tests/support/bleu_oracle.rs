//! Reference sentence BLEU written independently of the library: n-grams
//! are matched by sorting and merging, precisions are kept as exact integer
//! fractions, and the geometric mean is taken over their product.

/// Sorted list of n-grams of `tokens`.
fn sorted_ngrams<'a>(tokens: &[&'a str], n: usize) -> Vec<Vec<&'a str>> {
    let mut grams: Vec<Vec<&str>> = (0..=tokens.len() - n)
        .map(|i| tokens[i..i + n].to_vec())
        .collect();
    grams.sort();
    grams
}

/// Clipped match count via a merge of two sorted lists.
fn clipped_matches(cand: &[Vec<&str>], refs: &[Vec<&str>]) -> u64 {
    let (mut i, mut j, mut matched) = (0, 0, 0);
    while i < cand.len() && j < refs.len() {
        match cand[i].cmp(&refs[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                matched += 1;
                i += 1;
                j += 1;
            }
        }
    }
    matched
}

/// Whitespace-tokenized BLEU, no smoothing, orders up to min(4, |r|, |c|).
pub fn reference_bleu(reference: &str, candidate: &str) -> f64 {
    let r: Vec<&str> = reference.split_whitespace().collect();
    let c: Vec<&str> = candidate.split_whitespace().collect();
    if r.is_empty() && c.is_empty() {
        return 1.0;
    }
    if r.is_empty() || c.is_empty() {
        return 0.0;
    }
    let order = 4.min(r.len()).min(c.len());
    let (mut num, mut den) = (1u128, 1u128);
    for n in 1..=order {
        let m = clipped_matches(&sorted_ngrams(&c, n), &sorted_ngrams(&r, n));
        num *= m as u128;
        den *= (c.len() + 1 - n) as u128;
    }
    if num == 0 {
        return 0.0;
    }
    let geo = (num as f64 / den as f64).powf(1.0 / order as f64);
    let bp = if c.len() > r.len() {
        1.0
    } else {
        (1.0 - r.len() as f64 / c.len() as f64).exp()
    };
    bp * geo
}

/// Curated pairs, pre-normalized so that whitespace splitting matches the
/// builtin tokenizer.
pub const CURATED_PAIRS: [(&str, &str); 20] = [
    ("the cat sat on the mat .", "the cat sat on the mat ."),
    ("the cat sat on the mat", "the cat sat on a mat"),
    (
        "the quick brown fox jumps over the lazy dog",
        "the quick brown dog jumps over the lazy fox",
    ),
    ("a child sang near the lake", "a child sang near the river"),
    (
        "every morning the old farmer feeds the goats",
        "every morning the farmer feeds the old goats",
    ),
    (
        "the film was slow but the ending was wonderful",
        "the film was slow , the ending was wonderful",
    ),
    (
        "i really loved this movie",
        "i really loved this movie and the music",
    ),
    ("it rained all day in the city", "it rained all day"),
    ("the the the the the the", "the cat the cat the cat"),
    (
        "we walked to the market and bought fresh bread",
        "we drove to the market and bought bread",
    ),
    (
        "the service was terrible and the food was cold",
        "the service was great and the food was warm",
    ),
    (
        "he said that the report was finished on time",
        "she said the report was finished late",
    ),
    ("good film", "good film"),
    ("a b c d e f g", "a b c d x f g"),
    ("one two three four five", "five four three two one"),
    (
        "the dog barked at the mailman every single day",
        "the dog barked at the mailman every day",
    ),
    (
        "my phone battery dies too quickly",
        "my phone battery dies quickly",
    ),
    (
        "the museum opens at nine on weekdays",
        "the museum opens at ten on weekends",
    ),
    (
        "students studied hard for the final exam",
        "students studied for the final exam .",
    ),
    (
        "nothing here matches",
        "completely different words entirely",
    ),
];
