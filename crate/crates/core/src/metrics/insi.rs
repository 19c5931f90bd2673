//! In-sample image similarity: mean over image pairs of the average of
//! embedding cosine and SSIM, bucketed by exact image count.

use std::collections::BTreeMap;
use std::path::PathBuf;

use image::imageops::FilterType;
use image::GrayImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::InterleavedSample;
use crate::error::Result;
use crate::frame::compute_ssim;
use crate::media::load_gray;
use crate::services::{cosine, EmbeddingVector, FrameEmbedder};

pub trait ImageSource: Sync {
    fn load(&self, image_ref: &str) -> Result<GrayImage>;
}

/// Resolves relative image refs against a root directory.
#[derive(Debug, Clone)]
pub struct DirImageSource {
    pub root: PathBuf,
}

impl ImageSource for DirImageSource {
    fn load(&self, image_ref: &str) -> Result<GrayImage> {
        Ok(load_gray(&self.root.join(image_ref))?)
    }
}

/// Score of one pair: `(cosine + ssim) / 2`.
pub fn pair_score(a: &GrayImage, b: &GrayImage, ea: &EmbeddingVector, eb: &EmbeddingVector) -> Result<f64> {
    let ssim = if a.dimensions() == b.dimensions() {
        compute_ssim(a, b)?
    } else {
        let resized = image::imageops::resize(b, a.width(), a.height(), FilterType::Triangle);
        compute_ssim(a, &resized)?
    };
    Ok((cosine(ea, eb) + ssim) / 2.0)
}

/// Mean pair score over all unordered pairs; `None` with fewer than two images.
pub fn sample_similarity(images: &[GrayImage], embeddings: &[EmbeddingVector]) -> Result<Option<f64>> {
    let n = images.len();
    if n < 2 {
        return Ok(None);
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            total += pair_score(&images[i], &images[j], &embeddings[i], &embeddings[j])?;
        }
    }
    Ok(Some(total / (n * (n - 1) / 2) as f64))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InSiSimReport {
    pub per_l: BTreeMap<usize, f64>,
    pub n_samples_per_l: BTreeMap<usize, usize>,
    /// Mean of the per-bucket scores.
    pub overall_avg: Option<f64>,
    /// Samples whose image count falls outside every bucket.
    pub n_outside_buckets: usize,
    /// Samples in a bucket but with fewer than two images.
    pub n_excluded: usize,
}

impl InSiSimReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("L,score,n_samples\n");
        for (l, score) in &self.per_l {
            out.push_str(&format!("{l},{score},{}\n", self.n_samples_per_l.get(l).copied().unwrap_or(0)));
        }
        out
    }
}

pub fn insi_sim(
    samples: &[InterleavedSample],
    source: &dyn ImageSource,
    embedder: &dyn FrameEmbedder,
    buckets: &[usize],
) -> Result<InSiSimReport> {
    let mut report = InSiSimReport::default();
    let in_bucket: Vec<&InterleavedSample> = samples
        .iter()
        .filter(|s| {
            let inside = buckets.contains(&s.n_images);
            if !inside {
                report.n_outside_buckets += 1;
            }
            inside
        })
        .collect();
    let scored: Vec<Result<(usize, Option<f64>)>> = in_bucket
        .par_iter()
        .map(|s| {
            let images = s.image_refs().iter().map(|r| source.load(r)).collect::<Result<Vec<_>>>()?;
            let refs: Vec<&GrayImage> = images.iter().collect();
            let embeddings = embedder.embed_frames(&refs)?;
            Ok((s.n_images, sample_similarity(&images, &embeddings)?))
        })
        .collect();
    let mut sums: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for r in scored {
        match r? {
            (l, Some(score)) => {
                let e = sums.entry(l).or_default();
                e.0 += score;
                e.1 += 1;
            }
            (_, None) => report.n_excluded += 1,
        }
    }
    for (l, (sum, n)) in sums {
        report.per_l.insert(l, sum / n as f64);
        report.n_samples_per_l.insert(l, n);
    }
    if !report.per_l.is_empty() {
        report.overall_avg = Some(report.per_l.values().sum::<f64>() / report.per_l.len() as f64);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::services::mock::PerceptualProjection;

    #[test]
    fn identical_images_score_one() {
        let img = GrayImage::from_fn(16, 16, |x, y| image::Luma([(x * 9 + y * 5) as u8]));
        let e = PerceptualProjection::default().embed(&img);
        let images = vec![img; 4];
        let s = sample_similarity(&images, &vec![e; 4]).unwrap().unwrap();
        assert!((s - 1.0).abs() < 1e-9);
    }

    #[test]
    fn single_image_has_no_pairs() {
        let img = GrayImage::new(8, 8);
        let e = EmbeddingVector::normalized(vec![1.0]).unwrap();
        assert_eq!(sample_similarity(&[img], &[e]).unwrap(), None);
    }

    #[test]
    fn csv_lists_buckets() {
        let mut r = InSiSimReport::default();
        r.per_l.insert(4, 0.5);
        r.n_samples_per_l.insert(4, 2);
        assert_eq!(r.to_csv(), "L,score,n_samples\n4,0.5,2\n");
    }
}
