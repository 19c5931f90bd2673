//! Add-alpha smoothed unigram language model used as the offline perplexity scorer.

use std::collections::HashMap;

use super::mock::words;
use super::{require_text, PerplexityScorer, ServiceError, ServiceResult};

#[derive(Debug, Clone)]
pub struct UnigramModel {
    counts: HashMap<String, u64>,
    total: u64,
    alpha: f64,
    /// Vocabulary size including one slot for unseen words.
    vocab: usize,
}

impl UnigramModel {
    pub fn fit(reference: &str, alpha: f64) -> Self {
        let mut counts = HashMap::new();
        let mut total = 0;
        for w in words(reference) {
            *counts.entry(w).or_insert(0) += 1;
            total += 1;
        }
        let vocab = counts.len() + 1;
        Self {
            counts,
            total,
            alpha,
            vocab,
        }
    }

    /// Every listed word equally likely, nothing else possible.
    pub fn uniform<S: AsRef<str>>(vocab: &[S]) -> Self {
        let counts: HashMap<String, u64> = vocab.iter().map(|w| (w.as_ref().to_lowercase(), 1)).collect();
        Self {
            total: counts.len() as u64,
            vocab: counts.len(),
            counts,
            alpha: 0.0,
        }
    }

    pub fn probability(&self, word: &str) -> f64 {
        let c = self.counts.get(word).copied().unwrap_or(0) as f64;
        let denom = self.total as f64 + self.alpha * self.vocab as f64;
        if denom == 0.0 {
            return 0.0;
        }
        (c + self.alpha) / denom
    }
}

impl PerplexityScorer for UnigramModel {
    fn perplexity(&self, text: &str) -> ServiceResult<f64> {
        require_text(text, "perplexity")?;
        let tokens = words(text);
        if tokens.is_empty() {
            return Err(ServiceError::InvalidArgument("perplexity requires at least one word".into()));
        }
        let mut surprisal = 0.0;
        for t in &tokens {
            let p = self.probability(t);
            if p <= 0.0 {
                return Err(ServiceError::Protocol(format!("word `{t}` has zero probability")));
            }
            surprisal -= p.ln();
        }
        Ok((surprisal / tokens.len() as f64).exp())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_model_perplexity_equals_vocab_size() {
        let m = UnigramModel::uniform(&["a", "b", "c", "d", "e"]);
        let ppl = m.perplexity("a c e b d a").unwrap();
        assert!((ppl - 5.0).abs() < 1e-9);
    }

    #[test]
    fn certain_word_has_unit_perplexity() {
        let m = UnigramModel::uniform(&["the"]);
        assert!((m.perplexity("the the the").unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hand_computed_smoothed_values() {
        // counts a=3, b=1; alpha=1, vocab=3 (a, b, unseen) -> denom 7
        let m = UnigramModel::fit("a a a b", 1.0);
        assert!((m.probability("a") - 4.0 / 7.0).abs() < 1e-12);
        assert!((m.probability("b") - 2.0 / 7.0).abs() < 1e-12);
        assert!((m.probability("zzz") - 1.0 / 7.0).abs() < 1e-12);
        let expected = (7.0f64 / 4.0 * 7.0 / 2.0).sqrt();
        assert!((m.perplexity("a b").unwrap() - expected).abs() < 1e-9);
        assert!(m.perplexity("a a").unwrap() < m.perplexity("b zzz").unwrap());
    }

    #[test]
    fn fillers_raise_perplexity() {
        let m = UnigramModel::fit(super::super::mock::DEFAULT_PPL_REFERENCE, 1.0);
        let clean = m.perplexity("the angle is ninety degrees").unwrap();
        let noisy = m.perplexity("um the uh angle um is uh ninety um degrees").unwrap();
        assert!(clean < noisy);
    }

    #[test]
    fn errors() {
        let m = UnigramModel::uniform(&["a"]);
        assert!(matches!(m.perplexity(""), Err(ServiceError::InvalidArgument(_))));
        assert!(matches!(m.perplexity("b"), Err(ServiceError::Protocol(_))));
    }
}
