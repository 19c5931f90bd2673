use serde::{Deserialize, Serialize};

use super::types::InterleavedSample;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub min: usize,
    pub max: usize,
    /// Mean rounded to one decimal.
    pub avg: f64,
}

impl Distribution {
    pub fn of(values: impl IntoIterator<Item = usize>) -> Option<Self> {
        let mut min = usize::MAX;
        let mut max = 0;
        let mut sum = 0u128;
        let mut n = 0usize;
        for v in values {
            min = min.min(v);
            max = max.max(v);
            sum += v as u128;
            n += 1;
        }
        if n == 0 {
            return None;
        }
        let avg = (sum as f64 / n as f64 * 10.0).round() / 10.0;
        Some(Self { min, max, avg })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub n_samples: usize,
    pub images: Option<Distribution>,
    pub tokens: Option<Distribution>,
}

impl CorpusStats {
    pub fn of(samples: &[InterleavedSample]) -> Self {
        Self {
            n_samples: samples.len(),
            images: Distribution::of(samples.iter().map(|s| s.n_images)),
            tokens: Distribution::of(samples.iter().map(|s| s.n_text_tokens)),
        }
    }
}
