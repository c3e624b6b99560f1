use std::collections::HashMap;
use std::hash::Hash;

fn ngram_counts<T: Eq + Hash>(tokens: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

fn brevity_penalty(candidate_len: usize, reference_len: usize) -> f64 {
    if candidate_len > reference_len {
        1.0
    } else {
        (1.0 - reference_len as f64 / candidate_len as f64).exp()
    }
}

/// Sentence BLEU: clipped n-gram precisions for `n = 1..=max_n`, uniform geometric
/// mean, brevity penalty, no smoothing. Any zero precision makes the score zero.
pub fn bleu<T: Eq + Hash>(candidate: &[T], reference: &[T], max_n: usize) -> f64 {
    weighted_bleu(candidate, reference, max_n, |_| 1.0)
}

/// BLEU whose unigram precision weighs each token by `weight`. Higher orders are
/// unweighted. With a constant weight this is exactly [`bleu`].
pub fn weighted_bleu<T: Eq + Hash>(
    candidate: &[T],
    reference: &[T],
    max_n: usize,
    weight: impl Fn(&T) -> f64,
) -> f64 {
    assert!(max_n >= 1, "max_n must be at least 1");
    if candidate.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let cand = ngram_counts(candidate, n);
        let refs = ngram_counts(reference, n);
        let (mut matched, mut total) = (0.0, 0.0);
        for (gram, &count) in &cand {
            let w = if n == 1 { weight(&gram[0]) } else { 1.0 };
            let clip = count.min(refs.get(gram).copied().unwrap_or(0));
            matched += w * clip as f64;
            total += w * count as f64;
        }
        if matched == 0.0 || total == 0.0 {
            return 0.0;
        }
        log_sum += (matched / total).ln();
    }
    let score = brevity_penalty(candidate.len(), reference.len()) * (log_sum / max_n as f64).exp();
    score.clamp(0.0, 1.0)
}
