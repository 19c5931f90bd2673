use std::sync::Arc;

/// Counts text tokens for budget accounting.
pub trait Tokenizer: Send + Sync {
    fn count_tokens(&self, text: &str) -> usize;
}

/// Splits on Unicode whitespace.
#[derive(Debug, Clone, Copy, Default)]
pub struct WhitespaceTokenizer;

impl Tokenizer for WhitespaceTokenizer {
    fn count_tokens(&self, text: &str) -> usize {
        text.split_whitespace().count()
    }
}

impl<T: Tokenizer + ?Sized> Tokenizer for Arc<T> {
    fn count_tokens(&self, text: &str) -> usize {
        (**self).count_tokens(text)
    }
}

impl<T: Tokenizer + ?Sized> Tokenizer for &T {
    fn count_tokens(&self, text: &str) -> usize {
        (**self).count_tokens(text)
    }
}

pub fn count_tokens(text: &str) -> usize {
    WhitespaceTokenizer.count_tokens(text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_string_has_no_tokens() {
        assert_eq!(count_tokens(""), 0);
        assert_eq!(count_tokens("   \n\t"), 0);
    }

    #[test]
    fn whitespace_split() {
        assert_eq!(count_tokens("angle sum is 90 degrees"), 5);
        assert_eq!(count_tokens("  two\n\nlines  "), 2);
    }

    struct EchoWordCount;

    impl Tokenizer for EchoWordCount {
        fn count_tokens(&self, text: &str) -> usize {
            // Stands in for a remote tokenizer that reports the word count it saw.
            text.split(' ').filter(|w| !w.is_empty()).count()
        }
    }

    #[test]
    fn pluggable_tokenizer_is_used_through_the_trait() {
        let tok: Arc<dyn Tokenizer> = Arc::new(EchoWordCount);
        assert_eq!(tok.count_tokens("angle sum is 90 degrees"), 5);
    }

    proptest! {
        #[test]
        fn deterministic_and_monotone_under_concatenation(a in ".{0,40}", b in ".{0,40}") {
            let joined = format!("{a} {b}");
            let n = count_tokens(&joined);
            prop_assert_eq!(n, count_tokens(&joined));
            prop_assert!(n >= count_tokens(&a).max(count_tokens(&b)));
        }
    }
}
