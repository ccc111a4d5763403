//! Pluggable tokenization.
//!
//! Token counts drive chunking, batching and the search-time token ledger, so
//! every component that counts tokens goes through a [`Tokenizer`]. The
//! bundled [`SimpleTokenizer`] is deterministic and needs no model assets.

use std::ops::Range;
use std::sync::Arc;

/// A token as a byte range into the text it was produced from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Token {
    pub start: usize,
    pub end: usize,
}

impl Token {
    pub fn range(&self) -> Range<usize> {
        self.start..self.end
    }

    pub fn surface<'a>(&self, text: &'a str) -> &'a str {
        &text[self.start..self.end]
    }
}

pub trait Tokenizer: Send + Sync {
    /// Stable identifier, recorded in build metadata.
    fn id(&self) -> &str;

    /// Splits `text` into ordered, non-overlapping tokens.
    fn tokenize(&self, text: &str) -> Vec<Token>;

    fn count(&self, text: &str) -> usize {
        self.tokenize(text).len()
    }
}

/// Shared tokenizer handle.
pub type TokenizerHandle = Arc<dyn Tokenizer>;

/// Whitespace + punctuation tokenizer: maximal alphanumeric runs are one
/// token, every other non-whitespace character is a token on its own.
#[derive(Debug, Clone, Copy, Default)]
pub struct SimpleTokenizer;

impl SimpleTokenizer {
    pub const ID: &'static str = "simple-v1";

    pub fn handle() -> TokenizerHandle {
        Arc::new(SimpleTokenizer)
    }
}

impl Tokenizer for SimpleTokenizer {
    fn id(&self) -> &str {
        Self::ID
    }

    fn tokenize(&self, text: &str) -> Vec<Token> {
        let mut out = Vec::new();
        let mut word_start: Option<usize> = None;
        for (i, ch) in text.char_indices() {
            if ch.is_alphanumeric() {
                word_start.get_or_insert(i);
                continue;
            }
            if let Some(start) = word_start.take() {
                out.push(Token { start, end: i });
            }
            if !ch.is_whitespace() {
                out.push(Token {
                    start: i,
                    end: i + ch.len_utf8(),
                });
            }
        }
        if let Some(start) = word_start {
            out.push(Token {
                start,
                end: text.len(),
            });
        }
        out
    }
}

/// Lowercased alphanumeric tokens of `text`, for overlap measures.
pub fn word_set(tokenizer: &dyn Tokenizer, text: &str) -> std::collections::BTreeSet<String> {
    tokenizer
        .tokenize(text)
        .iter()
        .map(|t| t.surface(text))
        .filter(|s| s.chars().any(char::is_alphanumeric))
        .map(str::to_lowercase)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn surfaces(text: &str) -> Vec<&str> {
        SimpleTokenizer
            .tokenize(text)
            .iter()
            .map(|t| t.surface(text))
            .collect()
    }

    #[test]
    fn splits_words_and_punctuation() {
        assert_eq!(surfaces("Cats sleep."), vec!["Cats", "sleep", "."]);
        assert_eq!(surfaces("don't  stop"), vec!["don", "'", "t", "stop"]);
        assert_eq!(surfaces("  \n"), Vec::<&str>::new());
        assert_eq!(surfaces("naïve café"), vec!["naïve", "café"]);
    }

    #[test]
    fn word_set_drops_punctuation_and_case() {
        let set = word_set(&SimpleTokenizer, "The cat, the CAT!");
        assert_eq!(set.into_iter().collect::<Vec<_>>(), vec!["cat", "the"]);
    }

    proptest! {
        #[test]
        fn tokens_cover_all_non_whitespace(text in "\\PC{0,80}") {
            let toks = SimpleTokenizer.tokenize(&text);
            let mut rebuilt = String::new();
            let mut last = 0;
            for t in &toks {
                prop_assert!(t.start >= last && t.end > t.start);
                prop_assert!(text[last..t.start].chars().all(char::is_whitespace));
                rebuilt.push_str(t.surface(&text));
                last = t.end;
            }
            prop_assert!(text[last..].chars().all(char::is_whitespace));
            let expected: String = text.chars().filter(|c| !c.is_whitespace()).collect();
            prop_assert_eq!(rebuilt, expected);
        }

        #[test]
        fn slicing_at_token_boundaries_preserves_count(text in "[a-z .,]{1,60}") {
            let toks = SimpleTokenizer.tokenize(&text);
            if let (Some(first), Some(last)) = (toks.first(), toks.last()) {
                let slice = &text[first.start..last.end];
                prop_assert_eq!(SimpleTokenizer.count(slice), toks.len());
            }
        }
    }
}
