use std::collections::BTreeSet;
use std::sync::OnceLock;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use regex::Regex;

/// Word-level substitutions. Some are deliberately loose ("join" as
/// "enter"); the variants only need to vary the surface form. The first six
/// entries are the core table; the rest widen the variation.
pub const SYNONYMS: [(&str, &[&str]); 16] = [
    ("perform", &["execute", "carry out"]),
    ("get", &["obtain", "acquire"]),
    ("filtering", &["separating", "selecting out"]),
    ("final results", &["conclusive outcome", "final outcome"]),
    ("intermediate", &["transitional", "temporary"]),
    ("join", &["enter"]),
    ("sequential", &["consecutive", "serial"]),
    ("relation", &["table", "relation set"]),
    ("condition", &["criterion", "requirement"]),
    ("attribute", &["column", "property"]),
    ("grouping", &["clustering", "bunching"]),
    ("using", &["utilizing", "employing"]),
    ("rows", &["records", "tuples"]),
    ("duplicate removal", &["deduplication", "removing duplicates"]),
    ("sort", &["order", "arrange"]),
    ("limit", &["restrict", "cap"]),
];

fn synonym_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        let alts: Vec<String> = SYNONYMS.iter().map(|(w, _)| regex::escape(w)).collect();
        Regex::new(&format!(r"\b(?:{})\b", alts.join("|"))).expect("static regex")
    })
}

fn synonyms_of(word: &str) -> &'static [&'static str] {
    SYNONYMS.iter().find(|(w, _)| *w == word).map(|(_, s)| *s).unwrap_or(&[])
}

/// Probability that a variant's selection mask marks a phrase for rewriting.
pub const SUBSTITUTION_RATE: f64 = 0.9;

/// Up to `variant_count` distinct rewrites of `sentence`, never including the
/// sentence itself. Each variant draws a selection mask over the dictionary
/// phrases; a marked phrase takes one of its synonyms uniformly. Deterministic
/// in the generator state.
pub fn paraphrase_with(sentence: &str, variant_count: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
    let matches: Vec<(usize, usize, &str)> =
        synonym_re().find_iter(sentence).map(|m| (m.start(), m.end(), m.as_str())).collect();
    if matches.is_empty() || variant_count == 0 {
        return Vec::new();
    }
    let space: usize = matches.iter().map(|(_, _, w)| 1 + synonyms_of(w).len()).product();
    let wanted = variant_count.min(space - 1);
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(wanted);
    let mut attempts = 0;
    while out.len() < wanted && attempts < 64 * variant_count {
        attempts += 1;
        let mut s = String::with_capacity(sentence.len() + 16);
        let mut last = 0;
        for &(start, end, w) in &matches {
            s.push_str(&sentence[last..start]);
            let syn = synonyms_of(w);
            if rng.gen_bool(SUBSTITUTION_RATE) {
                s.push_str(syn[rng.gen_range(0..syn.len())]);
            } else {
                s.push_str(w);
            }
            last = end;
        }
        s.push_str(&sentence[last..]);
        if s != sentence && seen.insert(s.clone()) {
            out.push(s);
        }
    }
    out
}

pub fn paraphrase(sentence: &str, variant_count: usize, rng_seed: u64) -> Vec<String> {
    paraphrase_with(sentence, variant_count, &mut crate::pool::template::rng(rng_seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reaches_the_table_example() {
        let s = "perform sequential scan on user and filtering on age > 10 to get the final results.";
        let target = "execute sequential scan on user and separating on age > 10 to get the conclusive outcome.";
        let found = (0..5000).any(|seed| paraphrase(s, 3, seed).iter().any(|v| v == target));
        assert!(found);
        for seed in 0..20 {
            let v = paraphrase(s, 3, seed);
            assert_eq!(v.len(), 3);
            assert!(!v.iter().any(|x| x == s));
            assert_eq!(v, paraphrase(s, 3, seed));
        }
    }

    #[test]
    fn nothing_to_replace() {
        assert!(paraphrase("hash <T> .", 3, 1).is_empty());
        assert!(paraphrase("performance joinery", 3, 1).is_empty());
    }

    #[test]
    fn small_spaces_are_exhausted() {
        let v = paraphrase("hash <T> and enter", 3, 0);
        assert!(v.is_empty());
        let mut v = paraphrase("perform x", 5, 0);
        v.sort();
        assert_eq!(v, ["carry out x", "execute x"]);
    }
}
