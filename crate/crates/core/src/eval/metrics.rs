//! Answer metrics following the LongBench/SQuAD conventions.

use std::collections::HashMap;

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

fn lower_strip_punct(s: &str) -> String {
    s.to_lowercase().chars().filter(|c| !c.is_ascii_punctuation()).collect()
}

/// Replaces whole-word `a`, `an` and `the` with a space.
fn remove_articles(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut word = String::new();
    let flush = |word: &mut String, out: &mut String| {
        if matches!(word.as_str(), "a" | "an" | "the") {
            out.push(' ');
        } else {
            out.push_str(word);
        }
        word.clear();
    };
    for c in s.chars() {
        if is_word_char(c) {
            word.push(c);
        } else {
            flush(&mut word, &mut out);
            out.push(c);
        }
    }
    flush(&mut word, &mut out);
    out
}

/// Lowercase, strip ASCII punctuation, drop English articles, collapse whitespace.
pub fn normalize_answer(s: &str) -> String {
    remove_articles(&lower_strip_punct(s))
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

fn f1_tokens(pred: &[&str], gold: &[&str]) -> f64 {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in gold {
        *counts.entry(t).or_default() += 1;
    }
    let mut same = 0usize;
    for t in pred {
        if let Some(c) = counts.get_mut(t) {
            if *c > 0 {
                *c -= 1;
                same += 1;
            }
        }
    }
    if same == 0 {
        return 0.0;
    }
    let p = same as f64 / pred.len() as f64;
    let r = same as f64 / gold.len() as f64;
    2.0 * p * r / (p + r)
}

/// Token-level F1 on normalized text, maximized over references.
pub fn token_f1(prediction: &str, references: &[String]) -> f64 {
    let pred = normalize_answer(prediction);
    let pred: Vec<&str> = pred.split_whitespace().collect();
    references
        .iter()
        .map(|r| {
            let gold = normalize_answer(r);
            let gold: Vec<&str> = gold.split_whitespace().collect();
            f1_tokens(&pred, &gold)
        })
        .fold(0.0, f64::max)
}

fn lcs_len(a: &[&str], b: &[&str]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Tokens for ROUGE-L: lowercase, ASCII punctuation removed, no article
/// stripping and no stemming.
fn rouge_tokens(s: &str) -> Vec<String> {
    lower_strip_punct(s).split_whitespace().map(str::to_string).collect()
}

/// LCS-based F1, maximized over references.
pub fn rouge_l(prediction: &str, references: &[String]) -> f64 {
    let pred = rouge_tokens(prediction);
    let pred: Vec<&str> = pred.iter().map(String::as_str).collect();
    references
        .iter()
        .map(|r| {
            let gold = rouge_tokens(r);
            let gold: Vec<&str> = gold.iter().map(String::as_str).collect();
            let lcs = lcs_len(&pred, &gold);
            if lcs == 0 {
                return 0.0;
            }
            let p = lcs as f64 / pred.len() as f64;
            let r = lcs as f64 / gold.len() as f64;
            2.0 * p * r / (p + r)
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn refs(r: &[&str]) -> Vec<String> {
        r.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize_answer("  The Garden! "), "garden");
        assert_eq!(normalize_answer("An apple, a day"), "apple day");
        assert_eq!(normalize_answer("theatre"), "theatre");
        assert_eq!(normalize_answer("don't"), "dont");
    }

    #[test]
    fn f1_fixtures() {
        assert_eq!(token_f1("The garden.", &refs(&["the garden"])), 1.0);
        assert!((token_f1("garden party", &refs(&["garden"])) - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(token_f1("", &refs(&["garden"])), 0.0);
        assert_eq!(token_f1("x", &[]), 0.0);
        assert_eq!(token_f1("garden", &refs(&["house", "garden"])), 1.0);
    }

    #[test]
    fn rouge_fixtures() {
        assert!((rouge_l("a b c", &refs(&["a c"])) - 0.8).abs() < 1e-12);
        assert_eq!(rouge_l("same words here", &refs(&["same words here"])), 1.0);
        assert_eq!(rouge_l("x y", &refs(&["p q"])), 0.0);
    }

    proptest! {
        #[test]
        fn metrics_ignore_case_and_outer_punctuation(s in "[a-z ]{1,30}", g in "[a-z ]{1,30}") {
            let wrapped = format!("\"{}!", s.to_uppercase());
            let gold = refs(&[&g]);
            prop_assert_eq!(token_f1(&s, &gold), token_f1(&wrapped, &gold));
            prop_assert_eq!(rouge_l(&s, &gold), rouge_l(&wrapped, &gold));
        }

        #[test]
        fn f1_is_symmetric(s in "[a-d ]{0,20}", g in "[a-d ]{0,20}") {
            prop_assert!((token_f1(&s, &refs(&[&g])) - token_f1(&g, &refs(&[&s]))).abs() < 1e-12);
        }
    }
}
