//! Seeded image-order shuffling of a fraction of the samples.

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{InterleavedElement, InterleavedSample};
use crate::error::{Error, Result};

/// Number of samples selected for ratio `p` out of `n`.
pub fn shuffle_count(n: usize, p: f64) -> usize {
    ((p * n as f64 - 1e-9).ceil().max(0.0) as usize).min(n)
}

/// Permutes image positions in `⌈p·N⌉` randomly chosen samples, leaving
/// every text element in place. A shuffle that lands on the original order
/// is replaced by a rotation so each selected sample visibly changes when it
/// has two distinct images. Returns the selected indices.
pub fn shuffle_images(samples: &mut [InterleavedSample], p: f64, seed: u64) -> Result<Vec<usize>> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidArgument(format!("shuffle ratio must be in (0, 1], got {p}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = shuffle_count(samples.len(), p);
    let mut chosen = index::sample(&mut rng, samples.len(), k).into_vec();
    chosen.sort_unstable();
    for &i in &chosen {
        permute_images(&mut samples[i], &mut rng);
    }
    Ok(chosen)
}

fn permute_images(sample: &mut InterleavedSample, rng: &mut ChaCha8Rng) {
    let positions: Vec<usize> = sample
        .elements
        .iter()
        .enumerate()
        .filter(|(_, e)| e.is_image())
        .map(|(i, _)| i)
        .collect();
    if positions.len() < 2 {
        return;
    }
    let original: Vec<InterleavedElement> = positions.iter().map(|&i| sample.elements[i].clone()).collect();
    let mut images = original.clone();
    images.shuffle(rng);
    if images == original {
        images.rotate_left(1);
    }
    for (&pos, img) in positions.iter().zip(images) {
        sample.elements[pos] = img;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts() {
        assert_eq!(shuffle_count(10, 0.2), 2);
        assert_eq!(shuffle_count(10, 0.25), 3);
        assert_eq!(shuffle_count(200, 0.5), 100);
        assert_eq!(shuffle_count(3, 1.0), 3);
    }

    #[test]
    fn ratio_out_of_range_is_rejected() {
        assert!(shuffle_images(&mut [], 0.0, 1).is_err());
        assert!(shuffle_images(&mut [], 1.5, 1).is_err());
    }
}
