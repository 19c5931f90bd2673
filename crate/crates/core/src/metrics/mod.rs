//! Corpus auditing: statistics, in-sample image similarity, shuffling and perplexity.

mod external;
mod insi;
mod shuffle;

use serde::{Deserialize, Serialize};

pub use external::{adapt_external, Adapted, ExternalFormat, RecordError};
pub use insi::{insi_sim, pair_score, sample_similarity, DirImageSource, ImageSource, InSiSimReport};
pub use shuffle::{shuffle_count, shuffle_images};

use crate::corpus::{CorpusStats, InterleavedElement, InterleavedSample};
use crate::services::PerplexityScorer;

pub fn corpus_stats(samples: &[InterleavedSample]) -> CorpusStats {
    CorpusStats::of(samples)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePerplexity {
    pub sample_id: String,
    pub perplexity: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PplReport {
    pub mean_ppl: Option<f64>,
    pub per_sample: Vec<SamplePerplexity>,
    pub n_skipped: usize,
}

/// Text elements of a sample joined by spaces, end-of-video markers excluded.
pub fn sample_text(sample: &InterleavedSample) -> String {
    sample
        .elements
        .iter()
        .filter(|e| !matches!(e, InterleavedElement::EndOfVideo { .. }))
        .filter_map(|e| e.text())
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn ppl_report(samples: &[InterleavedSample], scorer: &dyn PerplexityScorer) -> PplReport {
    let mut report = PplReport::default();
    for s in samples {
        match scorer.perplexity(&sample_text(s)) {
            Ok(perplexity) => report.per_sample.push(SamplePerplexity {
                sample_id: s.sample_id.clone(),
                perplexity,
            }),
            Err(e) => {
                tracing::warn!(sample_id = %s.sample_id, error = %e, "perplexity failed");
                report.n_skipped += 1;
            }
        }
    }
    if !report.per_sample.is_empty() {
        report.mean_ppl =
            Some(report.per_sample.iter().map(|p| p.perplexity).sum::<f64>() / report.per_sample.len() as f64);
    }
    report
}
