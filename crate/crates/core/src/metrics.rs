//! BLEU, Self-BLEU and token accuracy.

use std::collections::HashMap;
use std::hash::Hash;

use crate::par::{self, Execution};

pub const BLEU_ORDER: usize = 4;

fn ngram_counts<T: Hash + Eq>(tokens: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for g in tokens.windows(n) {
            *counts.entry(g).or_insert(0) += 1;
        }
    }
    counts
}

/// Sentence BLEU-4 in `[0, 100]` with uniform weights.
///
/// Matches are clipped by the largest count in any single reference. An order
/// `n >= 2` with no match is smoothed to `1 / (total + 1)`; no unigram match
/// at all scores 0. The brevity penalty uses the reference length closest to
/// the candidate (the shorter one on ties).
pub fn bleu<T: Hash + Eq, R: AsRef<[T]>>(candidate: &[T], references: &[R]) -> f64 {
    if candidate.is_empty() || references.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=BLEU_ORDER {
        let cand = ngram_counts(candidate, n);
        let mut max_ref: HashMap<&[T], usize> = HashMap::new();
        for r in references {
            for (g, c) in ngram_counts(r.as_ref(), n) {
                let e = max_ref.entry(g).or_insert(0);
                *e = (*e).max(c);
            }
        }
        let matched: usize = cand.iter().map(|(g, &c)| c.min(max_ref.get(g).copied().unwrap_or(0))).sum();
        let total = candidate.len().saturating_sub(n - 1);
        let p = if matched > 0 {
            matched as f64 / total as f64
        } else if n == 1 {
            return 0.0;
        } else {
            1.0 / (total as f64 + 1.0)
        };
        log_sum += p.ln();
    }
    let c = candidate.len();
    let r = references
        .iter()
        .map(|r| r.as_ref().len())
        .min_by_key(|&len| (len.abs_diff(c), len))
        .unwrap_or(0);
    let bp = if c > r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };
    100.0 * bp * (log_sum / BLEU_ORDER as f64).exp()
}

/// Mean over the group of `BLEU(sentence, rest of group) / 100`. A group of
/// fewer than two sentences scores 1.0.
pub fn self_bleu<T: Hash + Eq + Sync, S: AsRef<[T]> + Sync>(group: &[S]) -> f64 {
    self_bleu_with(Execution::Sequential, group)
}

pub fn self_bleu_with<T: Hash + Eq + Sync, S: AsRef<[T]> + Sync>(exec: Execution, group: &[S]) -> f64 {
    if group.len() < 2 {
        return 1.0;
    }
    let scores = par::map_range(exec, group.len(), |i| {
        let rest: Vec<&[T]> = group.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, s)| s.as_ref()).collect();
        bleu(group[i].as_ref(), &rest) / 100.0
    });
    scores.iter().sum::<f64>() / scores.len() as f64
}

/// `(1/m) Σ_t 1(pred_t = gold_t)` over the `m` gold positions. Missing
/// predicted positions count as misses; an empty gold sequence scores 1.0.
pub fn accuracy<T: PartialEq>(pred: &[T], gold: &[T]) -> f64 {
    if gold.is_empty() {
        return 1.0;
    }
    let hits = gold.iter().zip(pred).filter(|(g, p)| g == p).count();
    hits as f64 / gold.len() as f64
}

/// Whitespace tokenisation used for sentence-level metrics.
pub fn tokens(sentence: &str) -> Vec<&str> {
    sentence.split_whitespace().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_scores_full_marks() {
        let s = tokens("perform hash join on <T> and <T> .");
        assert!((bleu(&s, std::slice::from_ref(&s)) - 100.0).abs() < 1e-12);
        let short = tokens("sort <T>");
        assert!((bleu(&short, std::slice::from_ref(&short)) - 100.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_scores_zero() {
        assert_eq!(bleu(&tokens("a b c"), &[tokens("d e f")]), 0.0);
    }

    #[test]
    fn hand_counted_ten_token_pair() {
        // Candidate and reference differ in one word (position 6) and the
        // reference is one token longer.
        let cand = tokens("perform sequential scan on users and selecting on age > 10");
        let refr = tokens("perform sequential scan on users and filtering on age > 10 .");
        // Counted by hand: unigrams 10/11, bigrams 8/10, trigrams 6/9, 4-grams 4/8.
        // Brevity: c = 11, r = 12.
        let want = 100.0
            * (1.0f64 - 12.0 / 11.0).exp()
            * (((10.0f64 / 11.0).ln() + (8.0f64 / 10.0).ln() + (6.0f64 / 9.0).ln() + (4.0f64 / 8.0).ln()) / 4.0)
                .exp();
        let got = bleu(&cand, &[refr]);
        assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        assert!((got - 64.071_175_982).abs() < 1e-6, "{got}");
    }

    #[test]
    fn zero_higher_order_matches_are_smoothed() {
        // Unigrams all match, no bigram does.
        let got = bleu(&tokens("b a"), &[tokens("a b")]);
        let want = 100.0 * (((1.0f64).ln() + (0.5f64).ln() + 0.0 + 0.0) / 4.0).exp();
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn clipping_uses_reference_counts() {
        // "the" appears 7 times in the candidate but twice in the reference.
        let cand = tokens("the the the the the the the");
        let refr = tokens("the cat is on the mat");
        let p1: f64 = 2.0 / 7.0;
        let want = 100.0 * ((p1.ln() + (1.0f64 / 7.0).ln() + (1.0f64 / 6.0).ln() + (1.0f64 / 5.0).ln()) / 4.0).exp();
        assert!((bleu(&cand, &[refr]) - want).abs() < 1e-9);
    }

    #[test]
    fn self_bleu_conventions() {
        let s = tokens("perform sequential scan on tablename .");
        assert_eq!(self_bleu(std::slice::from_ref(&s)), 1.0);
        assert_eq!(self_bleu(&[s.clone(), s.clone()]), 1.0);
    }

    #[test]
    fn accuracy_formula() {
        assert_eq!(accuracy(&[1, 2, 3], &[1, 2, 3]), 1.0);
        assert_eq!(accuracy(&[1, 2, 9, 4], &[1, 2, 3, 4]), 0.75);
        assert_eq!(accuracy::<u8>(&[], &[]), 1.0);
        assert_eq!(accuracy(&[1], &[1, 2]), 0.5);
    }
}
